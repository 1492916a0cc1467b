//! Value-level entry points to the individual layers. Each call builds a
//! small graph over constant inputs, evaluates it and returns plain tensors.

use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::Scalar;

use super::network::{self, Attention};
use super::{ModelError, ModelParams};

fn param_bindings<T: Scalar>(params: &ModelParams<T>) -> Bindings<T> {
    let mut b = Bindings::new();
    for (name, t) in params.iter() {
        b.insert(name, t.clone());
    }
    b
}

fn eval<T: Scalar>(g: &mut Graph<T>, params: &ModelParams<T>) -> Result<(), ModelError> {
    g.forward(&param_bindings(params))?;
    Ok(())
}

fn row<T: Scalar>(g: &Graph<T>, id: NodeId) -> Vec<T> {
    g.value(id).expect("evaluated").data().to_vec()
}

fn stack<T: Scalar>(g: &Graph<T>, ids: &[NodeId]) -> Tensor<T> {
    Tensor::from_rows(&ids.iter().map(|&i| row(g, i)).collect::<Vec<_>>())
}

/// `(H^p, H^q)` from embedded passage (`d x P`) and question (`d x Q`).
pub fn lstm_preprocess<T: Scalar>(
    params: &ModelParams<T>,
    passage: &Tensor<T>,
    question: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
    let mut g = Graph::new();
    let p = g.constant(passage.clone());
    let q = g.constant(question.clone());
    let (hp, hq) =
        network::lstm_preprocess(&mut g, params.config(), p, passage.cols(), q, question.cols());
    eval(&mut g, params)?;
    Ok((g.value(hp).unwrap().clone(), g.value(hq).unwrap().clone()))
}

/// One attention distribution over the columns of `hq` (`l x Q`).
pub fn match_attention<T: Scalar>(
    params: &ModelParams<T>,
    hq: &Tensor<T>,
    hp_i: &Tensor<T>,
    hr_prev: Option<&Tensor<T>>,
) -> Result<Vec<T>, ModelError> {
    let mut g = Graph::new();
    let att = Attention::bind(&mut g);
    let hq = g.constant(hq.clone());
    let hp_i = g.constant(hp_i.clone());
    let hr_prev = hr_prev.map(|h| g.constant(h.clone()));
    let wq_hq = g.matmul(att.wq, hq);
    let wp_hp = g.matmul(att.wp, hp_i);
    let alpha = network::match_attention(&mut g, &att, wq_hq, wp_hp, hr_prev);
    eval(&mut g, params)?;
    Ok(row(&g, alpha))
}

/// Match layer output: `H^r` (`2l x P`) plus the forward and reverse
/// attention matrices (`P x Q` each).
#[derive(Clone, Debug)]
pub struct MatchValues<T> {
    pub hr: Tensor<T>,
    pub alpha_fwd: Tensor<T>,
    pub alpha_rev: Tensor<T>,
}

pub fn match_lstm_forward<T: Scalar>(
    params: &ModelParams<T>,
    hp: &Tensor<T>,
    hq: &Tensor<T>,
) -> Result<MatchValues<T>, ModelError> {
    let mut g = Graph::new();
    let p = g.constant(hp.clone());
    let q = g.constant(hq.clone());
    let m = network::match_lstm_forward(&mut g, p, q, hp.cols());
    eval(&mut g, params)?;
    Ok(MatchValues {
        hr: g.value(m.hr).unwrap().clone(),
        alpha_fwd: stack(&g, &m.alpha_fwd),
        alpha_rev: stack(&g, &m.alpha_rev),
    })
}

/// `steps` distributions of width `P + 1`.
pub fn sequence_pointer_forward<T: Scalar>(
    params: &ModelParams<T>,
    hr: &Tensor<T>,
    steps: usize,
) -> Result<Vec<Vec<T>>, ModelError> {
    let mut g = Graph::new();
    let h = g.constant(hr.clone());
    let betas = network::sequence_pointer_forward(&mut g, h, steps);
    eval(&mut g, params)?;
    Ok(betas.iter().map(|&b| row(&g, b)).collect())
}

/// `(β_s, β_e)` over the columns of `hr`.
pub fn boundary_pointer_forward<T: Scalar>(
    params: &ModelParams<T>,
    hr: &Tensor<T>,
) -> Result<(Vec<T>, Vec<T>), ModelError> {
    let mut g = Graph::new();
    let h = g.constant(hr.clone());
    let (s, e) = network::boundary_pointer_forward(&mut g, params.config(), h);
    eval(&mut g, params)?;
    Ok((row(&g, s), row(&g, e)))
}

fn nll<T: Scalar>(dist: &[T], idx: usize) -> Result<T, ModelError> {
    let p = *dist.get(idx).ok_or(ModelError::GoldOutOfRange {
        index: idx,
        width: dist.len(),
    })?;
    Ok(-p.max(T::prob_floor()).ln())
}

/// `−Σ_k log β_k[gold_k]`.
pub fn sequence_loss<T: Scalar>(betas: &[Vec<T>], gold: &[usize]) -> Result<T, ModelError> {
    if betas.len() != gold.len() {
        return Err(ModelError::Target(format!(
            "{} distributions for a gold sequence of length {}",
            betas.len(),
            gold.len()
        )));
    }
    betas
        .iter()
        .zip(gold)
        .try_fold(T::zero(), |acc, (b, &i)| Ok(acc + nll(b, i)?))
}

/// `−log β_s[a_s] − log β_e[a_e]`.
pub fn boundary_loss<T: Scalar>(start: &[T], end: &[T], span: (usize, usize)) -> Result<T, ModelError> {
    Ok(nll(start, span.0)? + nll(end, span.1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeadKind, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn scaled_params(cfg: &ModelConfig, seed: u64) -> ModelParams<f64> {
        // Larger weights than the default init so tests see real nonlinearity.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::<f64>::init(cfg, &mut rng);
        let names: Vec<String> = p.names().map(str::to_owned).collect();
        for n in names {
            for v in p.get_mut(&n).unwrap().data_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        p
    }

    fn sums_to_one(v: &[f64]) {
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{v:?}");
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn singleton_and_zero_parameter_attention() {
        let cfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        let p = scaled_params(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = match_attention(&p, &random(3, 1, &mut rng), &random(3, 1, &mut rng), None).unwrap();
        assert_eq!(a, vec![1.0]);

        let z = ModelParams::<f64>::zeros(&cfg);
        let hr = random(3, 1, &mut rng);
        let a = match_attention(&z, &random(3, 4, &mut rng), &random(3, 1, &mut rng), Some(&hr))
            .unwrap();
        assert_eq!(a, vec![0.25; 4]);
    }

    #[test]
    fn preprocess_shapes_and_fixed_point() {
        let cfg = ModelConfig::new(4, 3, HeadKind::Boundary);
        let p = scaled_params(&cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (hp, hq) = lstm_preprocess(&p, &random(3, 7, &mut rng), &random(3, 5, &mut rng)).unwrap();
        assert_eq!(hp.shape(), (4, 7));
        assert_eq!(hq.shape(), (4, 5));

        let (hp, _) = lstm_preprocess(&p, &Tensor::zeros(3, 0), &random(3, 2, &mut rng)).unwrap();
        assert_eq!(hp.shape(), (4, 0));

        // Zero inputs and zero biases: c stays 0, so every column is 0.
        let mut zb = p.clone();
        for g in ["i", "f", "c"] {
            for v in zb.get_mut(&format!("pre.fwd.b_{g}")).unwrap().data_mut() {
                *v = 0.0;
            }
        }
        let (hp, _) = lstm_preprocess(&zb, &Tensor::zeros(3, 5), &random(3, 2, &mut rng)).unwrap();
        for c in 1..5 {
            assert_eq!(hp.column_values(c), hp.column_values(0));
        }
    }

    #[test]
    fn bidirectional_preprocess_keeps_l() {
        let mut cfg = ModelConfig::new(4, 3, HeadKind::Boundary);
        cfg.bi_preprocess = true;
        let p = scaled_params(&cfg, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (hp, hq) = lstm_preprocess(&p, &random(3, 6, &mut rng), &random(3, 2, &mut rng)).unwrap();
        assert_eq!((hp.shape(), hq.shape()), ((4, 6), (4, 2)));
    }

    #[test]
    fn match_layer_shapes_and_normalisation() {
        let cfg = ModelConfig::new(4, 3, HeadKind::Boundary);
        let p = scaled_params(&cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = match_lstm_forward(&p, &random(4, 7, &mut rng), &random(4, 5, &mut rng)).unwrap();
        assert_eq!(m.hr.shape(), (8, 7));
        assert_eq!(m.alpha_fwd.shape(), (7, 5));
        assert_eq!(m.alpha_rev.shape(), (7, 5));
        for r in 0..7 {
            sums_to_one(m.alpha_fwd.row_values(r));
            sums_to_one(m.alpha_rev.row_values(r));
        }
    }

    #[test]
    fn single_position_directions_agree() {
        let cfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        let p = scaled_params(&cfg, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = match_lstm_forward(&p, &random(3, 1, &mut rng), &random(3, 4, &mut rng)).unwrap();
        assert_eq!(m.alpha_fwd, m.alpha_rev);
    }

    #[test]
    fn reversing_the_passage_swaps_directions() {
        let cfg = ModelConfig::new(2, 2, HeadKind::Boundary);
        let p = scaled_params(&cfg, 11);
        let mut swapped = p.clone();
        for (a, b) in p
            .names()
            .filter(|n| n.starts_with("match.fwd."))
            .map(|n| (n.to_owned(), n.replace("match.fwd.", "match.rev.")))
            .collect::<Vec<_>>()
        {
            let ta = p.get(&a).unwrap().clone();
            let tb = p.get(&b).unwrap().clone();
            *swapped.get_mut(&a).unwrap() = tb;
            *swapped.get_mut(&b).unwrap() = ta;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hp = random(2, 4, &mut rng);
        let hq = random(2, 3, &mut rng);
        let hp_rev = Tensor::from_fn(2, 4, |r, c| hp.get(r, 3 - c));

        let m = match_lstm_forward(&p, &hp, &hq).unwrap();
        let mr = match_lstm_forward(&swapped, &hp_rev, &hq).unwrap();
        for c in 0..4 {
            for r in 0..2 {
                // forward half of the reversed run equals reverse half of the original
                assert!((mr.hr.get(r, c) - m.hr.get(r + 2, 3 - c)).abs() < 1e-12);
                assert!((mr.hr.get(r + 2, c) - m.hr.get(r, 3 - c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shared_attention_moves_both_directions() {
        let cfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        let p = scaled_params(&cfg, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let hp = random(3, 4, &mut rng);
        let hq = random(3, 3, &mut rng);
        let base = match_lstm_forward(&p, &hp, &hq).unwrap();
        let mut bumped = p.clone();
        bumped.get_mut("att.Wq").unwrap().data_mut()[1] += 1e-4;
        let moved = match_lstm_forward(&bumped, &hp, &hq).unwrap();
        let diff = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        assert!(diff(&base.alpha_fwd, &moved.alpha_fwd) > 1e-9);
        assert!(diff(&base.alpha_rev, &moved.alpha_rev) > 1e-9);
    }

    #[test]
    fn pointer_heads() {
        let cfg = ModelConfig::new(3, 2, HeadKind::Sequence);
        let p = scaled_params(&cfg, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let betas = sequence_pointer_forward(&p, &random(6, 1, &mut rng), 3).unwrap();
        assert_eq!(betas.len(), 3);
        for b in &betas {
            assert_eq!(b.len(), 2);
            sums_to_one(b);
        }
        let z = ModelParams::<f64>::zeros(&cfg);
        for b in sequence_pointer_forward(&z, &random(6, 3, &mut rng), 2).unwrap() {
            assert_eq!(b, vec![0.25; 4]);
        }

        let bcfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        let bp = scaled_params(&bcfg, 17);
        let (s, e) = boundary_pointer_forward(&bp, &random(6, 1, &mut rng)).unwrap();
        assert_eq!((s, e), (vec![1.0], vec![1.0]));
        let (s, e) = boundary_pointer_forward(&ModelParams::zeros(&bcfg), &random(6, 4, &mut rng)).unwrap();
        assert_eq!((s, e), (vec![0.25; 4], vec![0.25; 4]));
        let (s, e) = boundary_pointer_forward(&bp, &random(6, 5, &mut rng)).unwrap();
        sums_to_one(&s);
        sums_to_one(&e);
    }

    #[test]
    fn bi_answer_pointer_is_normalised() {
        let mut cfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        cfg.bi_answer_pointer = true;
        let p = scaled_params(&cfg, 18);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (s, e) = boundary_pointer_forward(&p, &random(6, 5, &mut rng)).unwrap();
        sums_to_one(&s);
        sums_to_one(&e);
    }

    #[test]
    fn loss_values() {
        let u = vec![vec![0.25; 4]; 2];
        let l = sequence_loss(&u, &[1, 3]).unwrap();
        assert!((l - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(sequence_loss(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        assert!(matches!(
            sequence_loss(&[vec![0.5, 0.5]], &[2]),
            Err(ModelError::GoldOutOfRange { index: 2, width: 2 })
        ));

        let b = boundary_loss(&[0.25; 4], &[0.25; 4], (0, 2)).unwrap();
        assert!((b - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(boundary_loss(&[0.0, 1.0], &[1.0, 0.0], (1, 0)).unwrap(), 0.0);
        let s = [0.7, 0.3];
        let e = [0.2, 0.8];
        assert_ne!(
            boundary_loss(&s, &e, (0, 1)).unwrap(),
            boundary_loss(&s, &e, (1, 0)).unwrap()
        );
        // Clamped, finite.
        assert!(boundary_loss::<f64>(&[0.0, 1.0], &[0.0, 1.0], (0, 0)).unwrap().is_finite());
    }
}
