use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use matchlstm::autodiff::Tensor;
use matchlstm::data::{prepare_examples, load_squad_json, LoadMode, TokenizedExample};
use matchlstm::decode::example_prediction;
use serde::{Deserialize, Serialize};

use super::ensure_exists;
use super::predict::load_member;
use crate::settings::{required, resolve};
use crate::{Context, Outcome, Usage};

#[derive(Args, Debug, Serialize)]
pub struct AttentionArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, env = "MATCHLSTM_INPUT_JSON")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_json: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    /// Files are written as `<prefix>-{fwd,rev}.{csv,pgm}`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_prefix: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSettings {
    pub checkpoint: Option<PathBuf>,
    pub input_json: Option<PathBuf>,
    pub question_id: Option<String>,
    pub out_prefix: PathBuf,
    pub embeddings: Option<PathBuf>,
}

impl Default for AttentionSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            input_json: None,
            question_id: None,
            out_prefix: PathBuf::from("attention"),
            embeddings: None,
        }
    }
}

/// Rows are passage tokens, columns question tokens; the header row and
/// first column carry the token texts.
pub fn attention_csv(alpha: &Tensor<f64>, ex: &TokenizedExample) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(ex.question_tokens().map(str::to_owned));
    w.write_record(&header)?;
    for (r, tok) in ex.passage_tokens().enumerate() {
        let mut rec = vec![tok.to_owned()];
        rec.extend(alpha.row_values(r).iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Plain PGM, width Q and height P. Darker pixels are larger weights,
/// scaled so the largest weight in the matrix is black.
pub fn attention_pgm(alpha: &Tensor<f64>) -> String {
    let (p, q) = alpha.shape();
    let max = alpha.data().iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P2\n{q} {p}\n255\n");
    for r in 0..p {
        let row: Vec<String> = alpha
            .row_values(r)
            .iter()
            .map(|&a| {
                let shade = if max > 0.0 { a / max } else { 0.0 };
                (255.0 - (255.0 * shade).round()).clamp(0.0, 255.0).to_string()
            })
            .collect();
        writeln!(out, "{}", row.join(" ")).expect("write to string");
    }
    out
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(ctx: &Context, args: &AttentionArgs) -> anyhow::Result<Outcome> {
    let s: AttentionSettings = resolve("dump-attention", ctx.config.as_ref(), args)?;
    let ckpt_path = required(&s.checkpoint, "checkpoint")?;
    let input = ctx.data_path(required(&s.input_json, "input-json")?);
    let qid = required(&s.question_id, "question-id")?;
    ensure_exists(&input, "input file")?;

    let raw = load_squad_json(&input, LoadMode::Eval)?;
    let Some(found) = raw.iter().find(|r| &r.id == qid) else {
        return Err(Usage(format!("question id {qid} not found in {}", input.display())).into());
    };
    let (examples, _) = prepare_examples(std::slice::from_ref(found), LoadMode::Eval);
    let ex = &examples[0];

    let override_emb = s.embeddings.as_deref().map(|p| ctx.data_path(p));
    let (ckpt, emb) = load_member::<f64>(ckpt_path, override_emb.as_deref())?;
    let pred = example_prediction(&ckpt.params, &emb, ex)?;

    if let Some(dir) = s.out_prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for (tag, alpha) in [("fwd", &pred.alpha_fwd), ("rev", &pred.alpha_rev)] {
        let csv_path = with_suffix(&s.out_prefix, &format!("-{tag}.csv"));
        let pgm_path = with_suffix(&s.out_prefix, &format!("-{tag}.pgm"));
        std::fs::write(&csv_path, attention_csv(alpha, ex)?)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        std::fs::write(&pgm_path, attention_pgm(alpha))
            .with_context(|| format!("writing {}", pgm_path.display()))?;
        log::info!("wrote {} and {}", csv_path.display(), pgm_path.display());
    }
    println!(
        "question {qid}: {} passage x {} question tokens",
        pred.alpha_fwd.rows(),
        pred.alpha_fwd.cols()
    );
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_shading() {
        let a = Tensor::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5], vec![1.0, 0.0]]);
        let pgm = attention_pgm(&a);
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(lines[..3], ["P2", "2 3", "255"]);
        assert_eq!(lines[3], "191 64");
        assert_eq!(lines[5], "0 255");
    }

    #[test]
    fn suffix_keeps_directory() {
        assert_eq!(with_suffix(Path::new("out/a"), "-fwd.csv"), PathBuf::from("out/a-fwd.csv"));
    }
}
