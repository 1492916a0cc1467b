#![allow(dead_code)]

use std::path::{Path, PathBuf};

use matchlstm::data::{build_vocabulary, prepare_examples, LoadMode};
use matchlstm::synthetic::{generate_corpus, tesla_examples, vocabulary, write_corpus, write_glove, CorpusConfig};

pub const DIM: usize = 16;

/// Generated train/dev/Tesla corpora and one GloVe file covering them.
pub struct Files {
    pub dir: tempfile::TempDir,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub tesla: PathBuf,
    pub glove: PathBuf,
}

impl Files {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn files(train: &CorpusConfig, dev: &CorpusConfig) -> Files {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_corpus(p("train.json"), &generate_corpus(train)).unwrap();
    write_corpus(p("dev.json"), &generate_corpus(dev)).unwrap();
    let tesla = tesla_examples();
    write_corpus(p("tesla.json"), &tesla).unwrap();

    let mut tokens = vocabulary(train);
    tokens.extend(vocabulary(dev));
    let (prepared, _) = prepare_examples(&tesla, LoadMode::Eval);
    tokens.extend(build_vocabulary([&prepared[..]]).tokens().iter().skip(1).cloned());
    tokens.sort();
    tokens.dedup();
    write_glove(p("glove.txt"), &tokens, DIM, 11).unwrap();
    Files {
        train: p("train.json"),
        dev: p("dev.json"),
        tesla: p("tesla.json"),
        glove: p("glove.txt"),
        dir,
    }
}

pub fn small() -> Files {
    let mut dev = CorpusConfig::overfit(2);
    dev.examples = 20;
    dev.golds_per_question = 3;
    files(&CorpusConfig::overfit(1), &dev)
}

pub fn run(args: &[&str]) -> i32 {
    let mut v = vec!["matchlstm"];
    v.extend_from_slice(args);
    matchlstm_cli::run_with_args(v)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `train` with small settings; returns the output directory.
pub fn train(f: &Files, out: &str, extra: &[&str]) -> PathBuf {
    let out = f.path(out);
    let mut args = vec![
        "train",
        "--train-json",
        s(&f.train),
        "--dev-json",
        s(&f.dev),
        "--glove",
        s(&f.glove),
        "--hidden-dim",
        "8",
        "--batch-size",
        "10",
        "--out-dir",
        s(&out),
    ];
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "2"]);
    }
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0, "train {extra:?}");
    out
}

/// Parses a dumped attention CSV into (question tokens, passage tokens, rows).
pub fn read_attention_csv(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    let mut recs = r.records().map(|x| x.unwrap());
    let header = recs.next().unwrap();
    let q: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut p = Vec::new();
    let mut rows = Vec::new();
    for rec in recs {
        p.push(rec[0].to_owned());
        rows.push(rec.iter().skip(1).map(|v| v.parse().unwrap()).collect());
    }
    (q, p, rows)
}

/// Width, height and pixel count of a plain PGM.
pub fn read_pgm(path: &Path) -> (usize, usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut it = text.split_whitespace();
    assert_eq!(it.next(), Some("P2"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    assert_eq!(it.next(), Some("255"));
    (w, h, it.count())
}
