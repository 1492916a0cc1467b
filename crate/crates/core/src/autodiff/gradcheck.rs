use std::sync::Arc;

use serde::Serialize;

use super::graph::{Bindings, Graph, GraphError, NodeId};
use super::tensor::Tensor;

/// Worst agreement between analytic and numeric gradient for one parameter.
#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    /// Largest `|a - n|` over the tensor, wherever it occurs.
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_abs_error)
            .fold(0.0, f64::max)
    }

    /// The parameter holding the overall worst relative error.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params
            .iter()
            .filter(move |p| !(p.max_rel_error < self.tolerance))
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `backward` against central finite differences for every trainable
/// leaf of `graph`. Frozen leaves are never perturbed and do not appear in the
/// report.
pub fn check_gradients(
    graph: &mut Graph<f64>,
    loss: NodeId,
    bindings: &Bindings<f64>,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, GraphError> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(GraphError::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-7, 1e-4]"
        )));
    }
    graph.forward(bindings)?;
    let analytic = graph.backward(loss)?;

    let mut work = bindings.clone();
    let mut params = Vec::new();
    for (name, _) in graph.param_leaves() {
        let base = bindings
            .get(&name)
            .ok_or_else(|| GraphError::UnboundInput(name.clone()))?
            .as_ref()
            .clone();
        let grad = analytic.get(&name).expect("every param leaf has a gradient");

        let mut check = ParamCheck {
            name: name.clone(),
            elements: base.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..base.len() {
            let numeric = {
                let mut eval_at = |delta: f64| -> Result<f64, GraphError> {
                    let mut t: Tensor<f64> = base.clone();
                    t.data_mut()[i] += delta;
                    work.insert_shared(name.clone(), Arc::new(t));
                    graph.forward(&work)?;
                    graph.scalar(loss).ok_or(GraphError::ForwardNotRun)
                };
                let plus = eval_at(epsilon)?;
                let minus = eval_at(-epsilon)?;
                (plus - minus) / (2.0 * epsilon)
            };
            let a = grad.data()[i];
            let err = relative_error(a, numeric);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            if err > check.max_rel_error || i == 0 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        work.insert_shared(name.clone(), Arc::new(base));
        params.push(check);
    }
    // Leave the graph holding the unperturbed values.
    graph.forward(bindings)?;
    Ok(GradCheckReport {
        epsilon,
        tolerance,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::BackwardFault;

    #[test]
    fn single_tanh_node() {
        let mut g = Graph::new();
        let x = g.param("x");
        let y = g.tanh(x);
        let mut b = Bindings::new();
        b.insert("x", Tensor::scalar(0.3));
        let report = check_gradients(&mut g, y, &b, 1e-5, 1e-7).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-7);
    }

    #[test]
    fn frozen_leaves_are_not_reported() {
        let mut g = Graph::new();
        let e = g.frozen("E");
        let w = g.param("w");
        let x = g.embedding_lookup(e, &[1, 0]);
        let y = g.matmul(w, x);
        let t = g.tanh(y);
        let loss = g.sum(t);
        let mut b = Bindings::new();
        b.insert("E", Tensor::from_fn(3, 2, |r, c| (r + 2 * c) as f64 * 0.1));
        b.insert("w", Tensor::row(vec![0.2, -0.4, 0.7]));
        let report = check_gradients(&mut g, loss, &b, 1e-5, 1e-6).unwrap();
        let names: Vec<_> = report.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["w"]);
        assert!(report.passed());
    }

    #[test]
    fn corrupted_rule_is_caught() {
        let mut g = Graph::new();
        let x = g.param("x");
        let y = g.tanh(x);
        let loss = g.sum(y);
        g.inject_backward_fault(BackwardFault::Tanh);
        let mut b = Bindings::new();
        b.insert("x", Tensor::row(vec![0.5, -0.8]));
        let report = check_gradients(&mut g, loss, &b, 1e-5, 1e-4).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let mut g = Graph::new();
        let x = g.param("x");
        let mut b = Bindings::new();
        b.insert("x", Tensor::scalar(1.0));
        assert!(matches!(
            check_gradients(&mut g, x, &b, 1e-2, 1e-4),
            Err(GraphError::InvalidArgument(_))
        ));
    }
}
