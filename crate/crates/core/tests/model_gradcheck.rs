use matchlstm::autodiff::BackwardFault;
use matchlstm::model::{model_gradcheck, GradCheckSetup, HeadKind, ModelConfig};

fn setup(head: HeadKind, seed: u64) -> GradCheckSetup {
    let mut s = GradCheckSetup::new(ModelConfig::new(4, 3, head), 7, 5);
    s.seed = seed;
    s
}

// Central differences at eps = 1e-5 on a loss of order 1 carry roughly
// 1e-10 of truncation and rounding noise, so agreement is judged with a
// mixed absolute/relative bound here.
fn agrees(a: f64, n: f64) -> bool {
    (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) + 1e-9
}

fn assert_agrees(s: &GradCheckSetup) {
    let report = model_gradcheck(s).unwrap();
    assert!(report.params.len() > 40);
    for p in &report.params {
        assert!(
            agrees(p.analytic, p.numeric) && p.max_abs_error < 1e-9,
            "{} {:?}",
            p.name,
            p
        );
    }
}

#[test]
fn boundary_gradients_match_finite_differences() {
    for seed in 0..4 {
        assert_agrees(&setup(HeadKind::Boundary, seed));
    }
}

#[test]
fn sequence_gradients_match_finite_differences() {
    for seed in 0..4 {
        assert_agrees(&setup(HeadKind::Sequence, seed));
    }
}

#[test]
fn variant_gradients_match_finite_differences() {
    let mut s = setup(HeadKind::Boundary, 9);
    s.config.bi_preprocess = true;
    s.config.bi_answer_pointer = true;
    s.config.shared_preprocess = false;
    assert_agrees(&s);
}

#[test]
fn corrupted_backward_is_detected() {
    for fault in [BackwardFault::Tanh, BackwardFault::Softmax] {
        let mut s = setup(HeadKind::Boundary, 2);
        s.fault = Some(fault);
        let report = model_gradcheck(&s).unwrap();
        assert!(report.max_abs_error() > 1e-4, "{fault:?}");
        assert!(report.max_rel_error() > 1e-2);
    }
}
