use std::time::Instant;

use clap::{Args, ValueEnum};
use matchlstm::autodiff::{BackwardFault, GradCheckReport};
use matchlstm::model::{model_gradcheck, GradCheckSetup, HeadKind, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::settings::resolve;
use crate::{Context, Outcome, Usage};

/// Largest `hidden_dim * (passage_len + question_len)` accepted; keeps a
/// check well under a minute.
pub const SIZE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Fault {
    Tanh,
    Softmax,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passage_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub bi_preprocess: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub bi_ans_ptr: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Largest accepted relative error.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Finite-difference step, in [1e-7, 1e-4].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    #[serde(skip)]
    pub json: bool,
    #[arg(long, value_enum, hide = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_backward: Option<Fault>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub passage_len: usize,
    pub question_len: usize,
    pub head: HeadKind,
    pub bi_preprocess: bool,
    pub bi_ans_ptr: bool,
    pub seed: u64,
    pub tolerance: f64,
    pub epsilon: f64,
    pub corrupt_backward: Option<Fault>,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            hidden_dim: 4,
            embedding_dim: 3,
            passage_len: 7,
            question_len: 5,
            head: HeadKind::Boundary,
            bi_preprocess: false,
            bi_ans_ptr: false,
            seed: 0,
            tolerance: 1e-4,
            epsilon: 1e-5,
            corrupt_backward: None,
        }
    }
}

impl GradcheckSettings {
    pub fn setup(&self) -> Result<GradCheckSetup, Usage> {
        let size = self.hidden_dim * (self.passage_len + self.question_len);
        if size > SIZE_LIMIT {
            return Err(Usage(format!(
                "hidden-dim x (passage-len + question-len) = {size} exceeds {SIZE_LIMIT}"
            )));
        }
        if !(1e-7..=1e-4).contains(&self.epsilon) {
            return Err(Usage(format!("--epsilon {} outside [1e-7, 1e-4]", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Usage("--tolerance must be positive".into()));
        }
        let mut cfg = ModelConfig::new(self.hidden_dim, self.embedding_dim, self.head);
        cfg.bi_preprocess = self.bi_preprocess;
        cfg.bi_answer_pointer = self.bi_ans_ptr;
        cfg.validate().map_err(|e| Usage(e.to_string()))?;
        if self.passage_len == 0 || self.question_len == 0 {
            return Err(Usage("passage and question need at least one token".into()));
        }
        let mut setup = GradCheckSetup::new(cfg, self.passage_len, self.question_len);
        setup.seed = self.seed;
        setup.epsilon = self.epsilon;
        setup.tolerance = self.tolerance;
        setup.fault = self.corrupt_backward.map(|f| match f {
            Fault::Tanh => BackwardFault::Tanh,
            Fault::Softmax => BackwardFault::Softmax,
        });
        Ok(setup)
    }
}

pub fn format_table(report: &GradCheckReport) -> String {
    let mut out = format!(
        "{:<24} {:>6} {:>12} {:>12} {:>13} {:>13}  {}\n",
        "parameter", "size", "max rel", "max abs", "analytic", "numeric", "status"
    );
    for p in &report.params {
        out.push_str(&format!(
            "{:<24} {:>6} {:>12.3e} {:>12.3e} {:>13.5e} {:>13.5e}  {}\n",
            p.name,
            p.elements,
            p.max_rel_error,
            p.max_abs_error,
            p.analytic,
            p.numeric,
            if p.max_rel_error < report.tolerance { "ok" } else { "FAIL" }
        ));
    }
    out
}

pub fn run(ctx: &Context, args: &GradcheckArgs) -> anyhow::Result<Outcome> {
    let s: GradcheckSettings = resolve("gradcheck", ctx.config.as_ref(), args)?;
    let setup = s.setup()?;
    log::info!("seed {}", s.seed);
    let started = Instant::now();
    let report = model_gradcheck(&setup)?;
    let secs = started.elapsed().as_secs_f64();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialize"));
    } else {
        print!("{}", format_table(&report));
    }
    let failed = report.failures().count();
    println!(
        "{} head, l={}, P={}, Q={}: max relative error {:.3e}, max absolute error {:.3e}, {} of {} parameters over {:e}, {:.1}s",
        s.head,
        s.hidden_dim,
        s.passage_len,
        s.question_len,
        report.max_rel_error(),
        report.max_abs_error(),
        failed,
        report.params.len(),
        s.tolerance,
        secs
    );
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}
