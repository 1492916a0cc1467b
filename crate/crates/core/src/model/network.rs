//! Graph construction for the three layers: preprocessing LSTM, match-LSTM,
//! and the answer pointer heads.
//!
//! Column `i` of a matrix is passage position `i` (0-based). The sequence
//! head's stop position is index `P`, the appended zero column.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::scalar::{lit, Scalar};

use super::config::{HeadKind, ModelConfig};
use super::params::{EMBEDDINGS, GATES};
use super::ModelError;

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Parameter nodes of one LSTM. Three gates means no output gate, so
/// `h = tanh(c)`.
#[derive(Clone, Debug)]
pub struct Lstm {
    wx: Vec<NodeId>,
    wh: Vec<NodeId>,
    b: Vec<NodeId>,
}

impl Lstm {
    pub fn bind<T: Scalar>(g: &mut Graph<T>, prefix: &str, output_gate: bool) -> Self {
        let n = if output_gate { 4 } else { 3 };
        let mut lstm = Self {
            wx: Vec::with_capacity(n),
            wh: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
        };
        for gate in &GATES[..n] {
            lstm.wx.push(g.param(&format!("{prefix}.Wx_{gate}")));
            lstm.wh.push(g.param(&format!("{prefix}.Wh_{gate}")));
            lstm.b.push(g.param(&format!("{prefix}.b_{gate}")));
        }
        lstm
    }

    /// `Wx_g · x` for every gate. With `x` of shape `in x T` this projects a
    /// whole sequence at once.
    pub fn project<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId) -> Vec<NodeId> {
        self.wx.iter().map(|&w| g.matmul(w, x)).collect()
    }

    /// One step from per-gate input projections (each `l x 1`). A missing
    /// previous state means zero `h` and `c`.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        x_proj: &[NodeId],
        prev: Option<LstmState>,
    ) -> LstmState {
        let mut pre = Vec::with_capacity(self.b.len());
        for k in 0..self.b.len() {
            let mut z = g.add(x_proj[k], self.b[k]);
            if let Some(s) = prev {
                let hh = g.matmul(self.wh[k], s.h);
                z = g.add(z, hh);
            }
            pre.push(z);
        }
        let i = g.sigmoid(pre[0]);
        let cand = g.tanh(pre[2]);
        let ic = g.mul(i, cand);
        let c = match prev {
            Some(s) => {
                let f = g.sigmoid(pre[1]);
                let fc = g.mul(f, s.c);
                g.add(fc, ic)
            }
            None => ic,
        };
        let tc = g.tanh(c);
        let h = if pre.len() == 4 {
            let o = g.sigmoid(pre[3]);
            g.mul(o, tc)
        } else {
            tc
        };
        LstmState { h, c }
    }

    /// Runs over the columns of `x` (`in x len`) and returns the hidden state
    /// at each position, in position order regardless of direction.
    pub fn run<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        len: usize,
        reverse: bool,
    ) -> Vec<NodeId> {
        let proj = self.project(g, x);
        let mut hidden = vec![None; len];
        let mut state = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        };
        for t in order {
            let xp: Vec<NodeId> = proj.iter().map(|&p| g.slice_column(p, t)).collect();
            let s = self.step(g, &xp, state);
            hidden[t] = Some(s.h);
            state = Some(s);
        }
        hidden.into_iter().map(|h| h.expect("visited")).collect()
    }
}

fn encode<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    prefix: &str,
    x: NodeId,
    len: usize,
) -> NodeId {
    if len == 0 {
        return g.constant(Tensor::zeros(config.hidden_dim, 0));
    }
    let fwd = Lstm::bind(g, &format!("{prefix}.fwd"), false).run(g, x, len, false);
    if !config.bi_preprocess {
        return g.hstack_columns(&fwd);
    }
    let rev = Lstm::bind(g, &format!("{prefix}.rev"), false).run(g, x, len, true);
    let both: Vec<NodeId> = fwd
        .iter()
        .zip(&rev)
        .map(|(&f, &r)| g.concat_vertical(&[f, r]))
        .collect();
    let stacked = g.hstack_columns(&both);
    let proj = g.param(&format!("{prefix}.proj"));
    g.matmul(proj, stacked)
}

/// Preprocessing layer: `(H^p, H^q)` of shapes `l x P` and `l x Q` from
/// embedded inputs `d x P` and `d x Q`.
pub fn lstm_preprocess<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    passage: NodeId,
    passage_len: usize,
    question: NodeId,
    question_len: usize,
) -> (NodeId, NodeId) {
    let [p_prefix, q_prefix] = config.encoder_prefixes();
    let hp = encode(g, config, p_prefix, passage, passage_len);
    let hq = encode(g, config, q_prefix, question, question_len);
    (hp, hq)
}

/// Attention parameters, shared by both match-LSTM directions.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub wq: NodeId,
    pub wp: NodeId,
    pub wr: NodeId,
    pub bp: NodeId,
    pub w_row: NodeId,
    pub b: NodeId,
}

impl Attention {
    pub fn bind<T: Scalar>(g: &mut Graph<T>) -> Self {
        let wq = g.param("att.Wq");
        let wp = g.param("att.Wp");
        let wr = g.param("att.Wr");
        let bp = g.param("att.bp");
        let w = g.param("att.w");
        let w_row = g.transpose(w);
        let b = g.param("att.b");
        Self {
            wq,
            wp,
            wr,
            bp,
            w_row,
            b,
        }
    }
}

/// Attention over question positions for one passage position:
/// `softmax(wᵀ tanh(W^q H^q + (W^p h^p_i + W^r h^r_prev + b^p) ⊗ e_Q) + b ⊗ e_Q)`.
///
/// `wq_hq` is `W^q H^q` and `wp_hp_i` is `W^p h^p_i`, both hoisted out of
/// the per-position loop by the caller. Returns a `1 x Q` row.
pub fn match_attention<T: Scalar>(
    g: &mut Graph<T>,
    att: &Attention,
    wq_hq: NodeId,
    wp_hp_i: NodeId,
    hr_prev: Option<NodeId>,
) -> NodeId {
    let mut shift = g.add(wp_hp_i, att.bp);
    if let Some(h) = hr_prev {
        let wr_h = g.matmul(att.wr, h);
        shift = g.add(shift, wr_h);
    }
    let pre = g.add_broadcast(wq_hq, shift);
    let gmat = g.tanh(pre);
    let logits = g.matmul(att.w_row, gmat);
    let logits = g.add_broadcast(logits, att.b);
    g.softmax(logits)
}

#[derive(Clone, Debug)]
pub struct MatchOutput {
    /// `2l x P`: forward states stacked over reverse states.
    pub hr: NodeId,
    /// `1 x Q` attention rows per passage position, forward direction.
    pub alpha_fwd: Vec<NodeId>,
    /// Same for the reverse direction, still indexed by passage position.
    pub alpha_rev: Vec<NodeId>,
}

/// Bidirectional match-LSTM over `H^p` (`l x P`) attending into `H^q`.
pub fn match_lstm_forward<T: Scalar>(
    g: &mut Graph<T>,
    hp: NodeId,
    hq: NodeId,
    passage_len: usize,
) -> MatchOutput {
    let att = Attention::bind(g);
    let wq_hq = g.matmul(att.wq, hq);
    let wp_hp = g.matmul(att.wp, hp);
    let hq_t = g.transpose(hq);

    let run = |g: &mut Graph<T>, prefix: &str, reverse: bool| {
        let lstm = Lstm::bind(g, prefix, true);
        let mut hidden = vec![None; passage_len];
        let mut alphas = vec![None; passage_len];
        let mut state: Option<LstmState> = None;
        let order: Vec<usize> = if reverse {
            (0..passage_len).rev().collect()
        } else {
            (0..passage_len).collect()
        };
        for i in order {
            let wp_hp_i = g.slice_column(wp_hp, i);
            let alpha = match_attention(g, &att, wq_hq, wp_hp_i, state.map(|s| s.h));
            // H^q αᵀ = (α H^qᵀ)ᵀ
            let weighted_row = g.matmul(alpha, hq_t);
            let weighted = g.transpose(weighted_row);
            let hp_i = g.slice_column(hp, i);
            let z = g.concat_vertical(&[hp_i, weighted]);
            let xp = lstm.project(g, z);
            let s = lstm.step(g, &xp, state);
            hidden[i] = Some(s.h);
            alphas[i] = Some(alpha);
            state = Some(s);
        }
        let unwrap = |v: Vec<Option<NodeId>>| -> Vec<NodeId> {
            v.into_iter().map(|x| x.expect("visited")).collect()
        };
        (unwrap(hidden), unwrap(alphas))
    };

    let (fwd, alpha_fwd) = run(g, "match.fwd", false);
    let (rev, alpha_rev) = run(g, "match.rev", true);
    let columns: Vec<NodeId> = fwd
        .iter()
        .zip(&rev)
        .map(|(&f, &r)| g.concat_vertical(&[f, r]))
        .collect();
    let hr = g.hstack_columns(&columns);
    MatchOutput {
        hr,
        alpha_fwd,
        alpha_rev,
    }
}

/// Unrolls one answer pointer for `steps` steps over the columns of `h`
/// (`2l x N`) and returns the `1 x N` distributions.
///
/// Each step scores `vᵀ tanh(V h + (W^a h^a_{k-1} + b^a) ⊗ e_N) + c ⊗ e_N`
/// and then feeds `h βᵀ` to the answer LSTM.
fn pointer_unroll<T: Scalar>(g: &mut Graph<T>, prefix: &str, h: NodeId, steps: usize) -> Vec<NodeId> {
    let v_mat = g.param(&format!("{prefix}.V"));
    let wa = g.param(&format!("{prefix}.Wa"));
    let ba = g.param(&format!("{prefix}.ba"));
    let v = g.param(&format!("{prefix}.v"));
    let v_row = g.transpose(v);
    let c = g.param(&format!("{prefix}.c"));
    let lstm = Lstm::bind(g, &format!("{prefix}.lstm"), true);

    let vh = g.matmul(v_mat, h);
    let h_t = g.transpose(h);
    let mut state: Option<LstmState> = None;
    let mut betas = Vec::with_capacity(steps);
    for k in 0..steps {
        let shift = match state {
            Some(s) => {
                let wa_h = g.matmul(wa, s.h);
                g.add(wa_h, ba)
            }
            None => ba,
        };
        let pre = g.add_broadcast(vh, shift);
        let f = g.tanh(pre);
        let logits = g.matmul(v_row, f);
        let logits = g.add_broadcast(logits, c);
        let beta = g.softmax(logits);
        betas.push(beta);
        if k + 1 < steps {
            // h βᵀ = (β hᵀ)ᵀ
            let read_row = g.matmul(beta, h_t);
            let read = g.transpose(read_row);
            let xp = lstm.project(g, read);
            state = Some(lstm.step(g, &xp, state));
        }
    }
    betas
}

/// Sequence head: `steps` distributions of width `P + 1` over `[H^r ; 0]`.
pub fn sequence_pointer_forward<T: Scalar>(g: &mut Graph<T>, hr: NodeId, steps: usize) -> Vec<NodeId> {
    let padded = g.append_zero_column(hr);
    pointer_unroll(g, "ptr", padded, steps)
}

/// Boundary head: `(β_s, β_e)`, each `1 x P`. With the bidirectional pointer
/// a second head predicts end first; the two heads' distributions are
/// averaged.
pub fn boundary_pointer_forward<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    hr: NodeId,
) -> (NodeId, NodeId) {
    let fwd = pointer_unroll(g, "ptr", hr, 2);
    if !config.bi_answer_pointer {
        return (fwd[0], fwd[1]);
    }
    let rev = pointer_unroll(g, "ptr_rev", hr, 2);
    let half = lit::<T>(0.5);
    let s = g.add(fwd[0], rev[1]);
    let e = g.add(fwd[1], rev[0]);
    // The mean of two distributions is already normalised.
    (g.scale(s, half), g.scale(e, half))
}

/// `−Σ_k log β_k[gold_k]`, one distribution per gold index. `width` is the
/// number of positions each distribution covers.
pub fn sequence_loss<T: Scalar>(
    g: &mut Graph<T>,
    betas: &[NodeId],
    gold: &[usize],
    width: usize,
) -> Result<NodeId, ModelError> {
    if betas.len() != gold.len() || gold.is_empty() {
        return Err(ModelError::Target(format!(
            "{} distributions for a gold sequence of length {}",
            betas.len(),
            gold.len()
        )));
    }
    let mut total: Option<NodeId> = None;
    for (&beta, &idx) in betas.iter().zip(gold) {
        if idx >= width {
            return Err(ModelError::GoldOutOfRange { index: idx, width });
        }
        let p = g.slice_column(beta, idx);
        let lp = g.log(p);
        total = Some(match total {
            Some(t) => g.add(t, lp),
            None => lp,
        });
    }
    Ok(g.neg(total.expect("non-empty")))
}

/// `−log β_s[a_s] − log β_e[a_e]`.
pub fn boundary_loss<T: Scalar>(
    g: &mut Graph<T>,
    start: NodeId,
    end: NodeId,
    span: (usize, usize),
    passage_len: usize,
) -> Result<NodeId, ModelError> {
    sequence_loss(g, &[start, end], &[span.0, span.1], passage_len)
}

/// Gold position sequence for a contiguous span: `a_s, …, a_e, P`.
pub fn sequence_target(span: (usize, usize), passage_len: usize) -> Vec<usize> {
    (span.0..=span.1).chain(std::iter::once(passage_len)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Boundary(usize, usize),
    /// Gold positions including the trailing stop index `P`.
    Sequence(Vec<usize>),
}

impl Target {
    /// Training target for a gold span under the given head.
    pub fn for_span(head: HeadKind, span: (usize, usize), passage_len: usize) -> Self {
        match head {
            HeadKind::Boundary => Self::Boundary(span.0, span.1),
            HeadKind::Sequence => Self::Sequence(sequence_target(span, passage_len)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum HeadNodes {
    Sequence(Vec<NodeId>),
    Boundary { start: NodeId, end: NodeId },
}

/// A full per-example graph with handles to its interesting nodes.
#[derive(Clone, Debug)]
pub struct ModelGraph<T> {
    pub graph: Graph<T>,
    pub passage_len: usize,
    pub question_len: usize,
    pub hr: NodeId,
    pub alpha_fwd: Vec<NodeId>,
    pub alpha_rev: Vec<NodeId>,
    pub head: HeadNodes,
    pub loss: Option<NodeId>,
}

/// What the head should unroll for.
#[derive(Clone, Debug)]
pub enum Unroll {
    /// Teacher-forced unroll with a loss node.
    Train(Target),
    /// Inference; the sequence head unrolls `sequence_steps` times.
    Infer { sequence_steps: usize },
}

/// Builds the graph for one (passage, question) pair of vocabulary ids.
pub fn build_model_graph<T: Scalar>(
    config: &ModelConfig,
    passage_ids: &[usize],
    question_ids: &[usize],
    unroll: Unroll,
) -> Result<ModelGraph<T>, ModelError> {
    let p_len = passage_ids.len();
    let q_len = question_ids.len();
    if p_len == 0 {
        return Err(ModelError::EmptyPassage);
    }
    if q_len == 0 {
        return Err(ModelError::EmptyQuestion);
    }
    let mut g = Graph::new();
    let table = g.frozen(EMBEDDINGS);
    let p_emb = g.embedding_lookup(table, passage_ids);
    let q_emb = g.embedding_lookup(table, question_ids);
    let (hp, hq) = lstm_preprocess(&mut g, config, p_emb, p_len, q_emb, q_len);
    let m = match_lstm_forward(&mut g, hp, hq, p_len);

    let (head, loss) = match (config.head, unroll) {
        (HeadKind::Boundary, Unroll::Train(Target::Boundary(s, e))) => {
            let (bs, be) = boundary_pointer_forward(&mut g, config, m.hr);
            let loss = boundary_loss(&mut g, bs, be, (s, e), p_len)?;
            (HeadNodes::Boundary { start: bs, end: be }, Some(loss))
        }
        (HeadKind::Boundary, Unroll::Infer { .. }) => {
            let (bs, be) = boundary_pointer_forward(&mut g, config, m.hr);
            (HeadNodes::Boundary { start: bs, end: be }, None)
        }
        (HeadKind::Sequence, Unroll::Train(Target::Sequence(gold))) => {
            let betas = sequence_pointer_forward(&mut g, m.hr, gold.len());
            let loss = sequence_loss(&mut g, &betas, &gold, p_len + 1)?;
            (HeadNodes::Sequence(betas), Some(loss))
        }
        (HeadKind::Sequence, Unroll::Infer { sequence_steps }) => {
            let betas = sequence_pointer_forward(&mut g, m.hr, sequence_steps.max(1));
            (HeadNodes::Sequence(betas), None)
        }
        (head, Unroll::Train(t)) => {
            return Err(ModelError::Target(format!(
                "{t:?} does not fit the {head} head"
            )))
        }
    };

    Ok(ModelGraph {
        graph: g,
        passage_len: p_len,
        question_len: q_len,
        hr: m.hr,
        alpha_fwd: m.alpha_fwd,
        alpha_rev: m.alpha_rev,
        head,
        loss,
    })
}
