use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use matchlstm::data::{load_squad_json, LoadMode};
use matchlstm::eval::{evaluate, read_predictions, EvalReport};
use serde::{Deserialize, Serialize};

use super::ensure_exists;
use crate::settings::{required, resolve};
use crate::{Context, Outcome};

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Official-format predictions (question id to answer text).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred: Option<PathBuf>,
    /// SQuAD-format gold file.
    #[arg(long, env = "MATCHLSTM_GOLD_JSON")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,
    /// Report JSON path; the breakdown CSV goes next to it with a `.csv`
    /// extension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub pred: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
}

pub fn write_report(report: &EvalReport, json_path: &std::path::Path) -> anyhow::Result<PathBuf> {
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let json = serde_json::to_string_pretty(report).expect("report serialize");
    std::fs::write(json_path, json).with_context(|| format!("writing {}", json_path.display()))?;
    let csv_path = json_path.with_extension("csv");
    std::fs::write(&csv_path, report.to_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
    Ok(csv_path)
}

pub fn run(ctx: &Context, args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let s: EvaluateSettings = resolve("evaluate", ctx.config.as_ref(), args)?;
    let pred = required(&s.pred, "pred")?.clone();
    let gold = ctx.data_path(required(&s.gold, "gold")?);
    ensure_exists(&pred, "predictions file")?;
    ensure_exists(&gold, "gold file")?;

    let predictions = read_predictions(&pred)?;
    let golds = load_squad_json(&gold, LoadMode::Eval)?;
    let report = evaluate(&predictions, &golds)?;
    println!("{}", report.summary_line());
    if let Some(out) = &s.report_out {
        let csv = write_report(&report, out)?;
        log::info!("report written to {} and {}", out.display(), csv.display());
    }
    Ok(Outcome::Ok)
}
