fn main() {
    matchlstm_cli::init_logging();
    std::process::exit(matchlstm_cli::run_with_args(std::env::args_os()));
}
