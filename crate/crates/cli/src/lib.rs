//! Command-line surface: `train`, `predict`, `evaluate`, `gradcheck` and
//! `dump-attention`.
//!
//! Exit codes: 0 success, 1 check or runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod cmd;
pub mod manifest;
pub mod settings;

pub use cmd::attention::{AttentionArgs, AttentionSettings};
pub use cmd::evaluate::{EvaluateArgs, EvaluateSettings};
pub use cmd::gradcheck::{GradcheckArgs, GradcheckSettings};
pub use cmd::predict::{PredictArgs, PredictSettings};
pub use cmd::train::{resolve_settings as resolve_train_settings, TrainArgs, TrainSettings};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// A bad invocation: missing or inconsistent options, unreadable inputs.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// How a successfully executed subcommand ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

#[derive(Parser, Debug)]
#[command(name = "matchlstm", version, about = "Match-LSTM + Answer Pointer reading comprehension")]
pub struct Cli {
    /// JSON config file with one section per subcommand.
    #[arg(long, global = true, env = "MATCHLSTM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Relative data paths resolve against this directory.
    #[arg(long, global = true, env = "MATCHLSTM_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible runs. Default: all cores.
    #[arg(long, global = true, env = "MATCHLSTM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoints, metrics and a run manifest.
    Train(TrainArgs),
    /// Decode answers with one checkpoint or an ensemble.
    Predict(PredictArgs),
    /// Score a predictions file against SQuAD-format gold answers.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a random instance.
    Gradcheck(GradcheckArgs),
    /// Write attention weights of one question as CSV and PGM.
    DumpAttention(AttentionArgs),
}

/// Shared context for every subcommand.
pub struct Context {
    pub config: Option<serde_json::Value>,
    pub data_dir: Option<PathBuf>,
}

impl Context {
    pub fn data_path(&self, p: &std::path::Path) -> PathBuf {
        settings::data_path(self.data_dir.as_deref(), p)
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let config = cli
        .config
        .as_deref()
        .map(settings::load_config_file)
        .transpose()?;
    let ctx = Context {
        config,
        data_dir: cli.data_dir,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    log::debug!("{} worker threads", pool.current_num_threads());
    pool.install(|| match cli.command {
        Command::Train(a) => cmd::train::run(&ctx, &a),
        Command::Predict(a) => cmd::predict::run(&ctx, &a),
        Command::Evaluate(a) => cmd::evaluate::run(&ctx, &a),
        Command::Gradcheck(a) => cmd::gradcheck::run(&ctx, &a),
        Command::DumpAttention(a) => cmd::attention::run(&ctx, &a),
    })
}

/// Exit code for an error returned by [`run`].
pub fn error_code(e: &anyhow::Error) -> i32 {
    if e.chain().any(|c| c.is::<Usage>()) {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::CheckFailed) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            error_code(&e)
        }
    }
}

/// Installs the logger once; `MATCHLSTM_LOG` overrides the default `info`.
pub fn init_logging() {
    let env = env_logger::Env::default().filter_or("MATCHLSTM_LOG", "info");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}
