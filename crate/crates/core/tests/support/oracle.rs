//! Straight-line reference implementations over plain `Vec`s, written
//! without the tape so they can be compared against the graph-built layers.

#![allow(dead_code)]

use matchlstm::autodiff::Tensor;
use matchlstm::model::{HeadKind, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|r| (0..t.cols()).map(|c| t.get(r, c)).collect()).collect()
}

fn p(params: &ModelParams<f64>, name: &str) -> Mat {
    mat(params.get(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

fn col(m: &Mat, j: usize) -> Vec<f64> {
    m.iter().map(|r| r[j]).collect()
}

fn mv(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|r| {
            let mut s = 0.0;
            for k in 0..x.len() {
                s += r[k] * x[k];
            }
            s
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// α = softmax(wᵀ tanh(W^q H^q + (W^p h^p + W^r h^r + b^p) ⊗ e_Q) + b ⊗ e_Q)
pub fn attention(params: &ModelParams<f64>, hq: &Mat, hp: &[f64], hr: &[f64]) -> Vec<f64> {
    let wq = p(params, "att.Wq");
    let wp = p(params, "att.Wp");
    let wr = p(params, "att.Wr");
    let bp = col(&p(params, "att.bp"), 0);
    let w = col(&p(params, "att.w"), 0);
    let b = p(params, "att.b")[0][0];
    let l = wq.len();
    let q = hq[0].len();
    let a = mv(&wp, hp);
    let r = mv(&wr, hr);
    let mut logits = vec![0.0; q];
    for j in 0..q {
        let hq_j = col(hq, j);
        let wq_j = mv(&wq, &hq_j);
        let mut s = 0.0;
        for i in 0..l {
            s += w[i] * (wq_j[i] + a[i] + r[i] + bp[i]).tanh();
        }
        logits[j] = s + b;
    }
    softmax(&logits)
}

fn lstm_step(params: &ModelParams<f64>, prefix: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gate = |g: &str| -> Vec<f64> {
        let wx = mv(&p(params, &format!("{prefix}.Wx_{g}")), x);
        let wh = mv(&p(params, &format!("{prefix}.Wh_{g}")), h);
        let b = col(&p(params, &format!("{prefix}.b_{g}")), 0);
        (0..b.len()).map(|k| wx[k] + wh[k] + b[k]).collect()
    };
    let (zi, zf, zc, zo) = (gate("i"), gate("f"), gate("c"), gate("o"));
    let n = zi.len();
    let mut c2 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for k in 0..n {
        c2[k] = sigmoid(zf[k]) * c[k] + sigmoid(zi[k]) * zc[k].tanh();
        h2[k] = sigmoid(zo[k]) * c2[k].tanh();
    }
    (h2, c2)
}

/// `steps` pointer distributions over the columns of `h`.
pub fn pointer(params: &ModelParams<f64>, prefix: &str, h: &Mat, steps: usize) -> Vec<Vec<f64>> {
    let vm = p(params, &format!("{prefix}.V"));
    let wa = p(params, &format!("{prefix}.Wa"));
    let ba = col(&p(params, &format!("{prefix}.ba")), 0);
    let v = col(&p(params, &format!("{prefix}.v")), 0);
    let c = p(params, &format!("{prefix}.c"))[0][0];
    let l = wa.len();
    let n = h[0].len();
    let mut ha = vec![0.0; l];
    let mut ca = vec![0.0; l];
    let mut out = Vec::new();
    for _ in 0..steps {
        let shift = mv(&wa, &ha);
        let mut logits = vec![0.0; n];
        for j in 0..n {
            let vh = mv(&vm, &col(h, j));
            let mut s = 0.0;
            for i in 0..l {
                s += v[i] * (vh[i] + shift[i] + ba[i]).tanh();
            }
            logits[j] = s + c;
        }
        let beta = softmax(&logits);
        let read: Vec<f64> = h.iter().map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
        let (h2, c2) = lstm_step(params, &format!("{prefix}.lstm"), &read, &ha, &ca);
        ha = h2;
        ca = c2;
        out.push(beta);
    }
    out
}

/// Sequence head over `[H^r ; 0]`.
pub fn sequence_pointer(params: &ModelParams<f64>, hr: &Mat, steps: usize) -> Vec<Vec<f64>> {
    let padded: Mat = hr.iter().map(|r| r.iter().cloned().chain([0.0]).collect()).collect();
    pointer(params, "ptr", &padded, steps)
}

/// Boundary head; with the bidirectional pointer, the mean of the two orders.
pub fn boundary_pointer(params: &ModelParams<f64>, hr: &Mat) -> (Vec<f64>, Vec<f64>) {
    let f = pointer(params, "ptr", hr, 2);
    if !params.config().bi_answer_pointer {
        return (f[0].clone(), f[1].clone());
    }
    let r = pointer(params, "ptr_rev", hr, 2);
    let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    (avg(&f[0], &r[1]), avg(&f[1], &r[0]))
}

/// Random instance sizes and parameters, every entry (biases included)
/// uniform in (-1, 1).
pub struct Instance {
    pub params: ModelParams<f64>,
    pub l: usize,
    pub p: usize,
    pub q: usize,
    pub rng: ChaCha8Rng,
}

pub fn instance(seed: u64, head: HeadKind) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.gen_range(1..=4);
    let mut cfg = ModelConfig::new(l, 2, head);
    cfg.bi_answer_pointer = head == HeadKind::Boundary && rng.gen_bool(0.3);
    let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let p = rng.gen_range(1..=8);
    let q = rng.gen_range(1..=6);
    Instance { params, l, p, q, rng }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation between the layers and the oracle over `n` instances
/// of each of the three checks.
pub fn oracle_deviation(n: u64) -> [f64; 3] {
    use matchlstm::model::ops;
    let mut worst = [0.0f64; 3];
    for seed in 0..n {
        let mut inst = instance(seed, HeadKind::Boundary);
        let (l, q) = (inst.l, inst.q);
        let hq = random_tensor(&mut inst.rng, l, q);
        let hp = random_tensor(&mut inst.rng, l, 1);
        let hr = random_tensor(&mut inst.rng, l, 1);
        let prev = if seed % 4 == 0 { None } else { Some(&hr) };
        let got = ops::match_attention(&inst.params, &hq, &hp, prev).unwrap();
        let zero = vec![0.0; l];
        let want = attention(&inst.params, &mat(&hq), hp.data(), prev.map_or(&zero[..], |t| t.data()));
        worst[0] = worst[0].max(max_diff(&got, &want));

        let h = random_tensor(&mut inst.rng, 2 * l, inst.p);
        let (s, e) = ops::boundary_pointer_forward(&inst.params, &h).unwrap();
        let (ws, we) = boundary_pointer(&inst.params, &mat(&h));
        worst[2] = worst[2].max(max_diff(&s, &ws)).max(max_diff(&e, &we));

        let mut inst = instance(seed + 1_000_000, HeadKind::Sequence);
        let steps = inst.rng.gen_range(1..=4);
        let h = random_tensor(&mut inst.rng, 2 * inst.l, inst.p);
        let got = ops::sequence_pointer_forward(&inst.params, &h, steps).unwrap();
        let want = sequence_pointer(&inst.params, &mat(&h), steps);
        assert_eq!(got.len(), steps);
        for (g, w) in got.iter().zip(&want) {
            worst[1] = worst[1].max(max_diff(g, w));
        }
    }
    worst
}

/// Exhaustive `argmax_{s <= e < s + max_span} start[s] * end[e]`, ties to the
/// smaller `s` then the smaller `e`.
pub fn brute_force_span(start: &[f64], end: &[f64], max_span: usize) -> (usize, usize) {
    let mut best = (0, 0);
    let mut score = f64::NEG_INFINITY;
    for s in 0..start.len() {
        for e in s..end.len() {
            if e - s + 1 > max_span {
                continue;
            }
            let v = start[s] * end[e];
            if v > score {
                score = v;
                best = (s, e);
            }
        }
    }
    best
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    softmax(&raw)
}

/// Count of mismatches against brute force over `cases` random
/// distributions, for single-model and ensemble decoding.
pub fn decode_mismatches(cases: u64, seed: u64) -> (usize, usize) {
    use matchlstm::decode::{ensemble_boundary_decode, search_boundary_decode};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut single, mut ens) = (0, 0);
    for _ in 0..cases {
        let p = rng.gen_range(1..=50);
        let spans = [1, 5, 15, p];
        let max_span = spans[rng.gen_range(0..4)];
        let s = random_distribution(&mut rng, p);
        let e = random_distribution(&mut rng, p);
        let (got, _) = search_boundary_decode(&s, &e, max_span).unwrap();
        if got != brute_force_span(&s, &e, max_span) {
            single += 1;
        }

        let m = rng.gen_range(1..=5);
        let members: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
            .map(|_| (random_distribution(&mut rng, p), random_distribution(&mut rng, p)))
            .collect();
        let prod = |f: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
            (0..p).map(|i| members.iter().map(|mm| f(mm)[i]).product()).collect()
        };
        let ps = prod(|m| &m.0);
        let pe = prod(|m| &m.1);
        let got = ensemble_boundary_decode(&members, max_span).unwrap();
        if got != brute_force_span(&ps, &pe, max_span) {
            ens += 1;
        }
    }
    (single, ens)
}
