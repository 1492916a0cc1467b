use std::sync::Arc;

use indexmap::IndexMap;
use rand::Rng;

use super::config::ModelConfig;
use crate::autodiff::{Bindings, Tensor};
use crate::data::EmbeddingMatrix;
use crate::Scalar;

/// Name of the frozen embedding leaf in every model graph.
pub const EMBEDDINGS: &str = "embeddings";

const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Uniform,
    Zero,
    One,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

/// Gate suffixes in parameter names: input, forget, cell, output.
pub(crate) const GATES: [&str; 4] = ["i", "f", "c", "o"];

fn lstm_specs(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, hidden: usize, output_gate: bool) {
    let n = if output_gate { 4 } else { 3 };
    for gate in &GATES[..n] {
        out.push(ParamSpec {
            name: format!("{prefix}.Wx_{gate}"),
            rows: hidden,
            cols: input,
            init: Init::Uniform,
        });
        out.push(ParamSpec {
            name: format!("{prefix}.Wh_{gate}"),
            rows: hidden,
            cols: hidden,
            init: Init::Uniform,
        });
        out.push(ParamSpec {
            name: format!("{prefix}.b_{gate}"),
            rows: hidden,
            cols: 1,
            init: if *gate == "f" { Init::One } else { Init::Zero },
        });
    }
}

fn pointer_specs(out: &mut Vec<ParamSpec>, prefix: &str, l: usize) {
    let mut push = |name: &str, rows, cols, init| {
        out.push(ParamSpec {
            name: format!("{prefix}.{name}"),
            rows,
            cols,
            init,
        })
    };
    push("V", l, 2 * l, Init::Uniform);
    push("Wa", l, l, Init::Uniform);
    push("ba", l, 1, Init::Zero);
    push("v", l, 1, Init::Uniform);
    push("c", 1, 1, Init::Zero);
    lstm_specs(out, &format!("{prefix}.lstm"), 2 * l, l, true);
}

/// Every learned tensor of the model, in a fixed order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let l = config.hidden_dim;
    let d = config.embedding_dim;
    let mut out = Vec::new();

    let [passage, question] = config.encoder_prefixes();
    let encoders: &[&str] = if passage == question {
        &[passage][..]
    } else {
        &[passage, question][..]
    };
    for &enc in encoders {
        lstm_specs(&mut out, &format!("{enc}.fwd"), d, l, false);
        if config.bi_preprocess {
            lstm_specs(&mut out, &format!("{enc}.rev"), d, l, false);
            out.push(ParamSpec {
                name: format!("{enc}.proj"),
                rows: l,
                cols: 2 * l,
                init: Init::Uniform,
            });
        }
    }

    for (name, rows, cols, init) in [
        ("att.Wq", l, l, Init::Uniform),
        ("att.Wp", l, l, Init::Uniform),
        ("att.Wr", l, l, Init::Uniform),
        ("att.bp", l, 1, Init::Zero),
        ("att.w", l, 1, Init::Uniform),
        ("att.b", 1, 1, Init::Zero),
    ] {
        out.push(ParamSpec {
            name: name.into(),
            rows,
            cols,
            init,
        });
    }
    lstm_specs(&mut out, "match.fwd", 2 * l, l, true);
    lstm_specs(&mut out, "match.rev", 2 * l, l, true);

    pointer_specs(&mut out, "ptr", l);
    if config.bi_answer_pointer {
        pointer_specs(&mut out, "ptr_rev", l);
    }
    out
}

/// Named parameter tensors for one [`ModelConfig`].
///
/// Tensors sit behind `Arc` so per-example graphs can bind them without
/// copying; mutation goes through [`ModelParams::get_mut`].
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    config: ModelConfig,
    tensors: IndexMap<String, Arc<Tensor<T>>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform(-0.05, 0.05) matrices, zero biases, forget-gate biases at one.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let tensors = param_specs(config)
            .into_iter()
            .map(|spec| {
                let t = match spec.init {
                    Init::Uniform => Tensor::from_fn(spec.rows, spec.cols, |_, _| {
                        T::from_f64_lossy(rng.gen_range(-INIT_RANGE..INIT_RANGE))
                    }),
                    Init::Zero => Tensor::zeros(spec.rows, spec.cols),
                    Init::One => Tensor::filled(spec.rows, spec.cols, T::one()),
                };
                (spec.name, Arc::new(t))
            })
            .collect();
        Self {
            config: config.clone(),
            tensors,
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = param_specs(config)
            .into_iter()
            .map(|s| (s.name, Arc::new(Tensor::zeros(s.rows, s.cols))))
            .collect();
        Self {
            config: config.clone(),
            tensors,
        }
    }

    /// Assembles parameters from named tensors; names and shapes must match
    /// [`param_specs`] exactly.
    pub fn from_tensors(
        config: &ModelConfig,
        tensors: impl IntoIterator<Item = (String, Tensor<T>)>,
    ) -> Result<Self, String> {
        let mut given: IndexMap<String, Tensor<T>> = tensors.into_iter().collect();
        let mut out = IndexMap::new();
        for spec in param_specs(config) {
            let t = given
                .shift_remove(&spec.name)
                .ok_or_else(|| format!("missing parameter {}", spec.name))?;
            if t.shape() != (spec.rows, spec.cols) {
                return Err(format!(
                    "parameter {} has shape {}x{}, config implies {}x{}",
                    spec.name,
                    t.rows(),
                    t.cols(),
                    spec.rows,
                    spec.cols
                ));
            }
            out.insert(spec.name, Arc::new(t));
        }
        if let Some(extra) = given.keys().next() {
            return Err(format!("unexpected parameter {extra}"));
        }
        Ok(Self {
            config: config.clone(),
            tensors: out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name).map(|t| t.as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    /// Mutable access to every tensor, copying any that are still shared.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors
            .iter_mut()
            .map(|(k, v)| (k.as_str(), Arc::make_mut(v)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Binds every parameter plus the frozen embedding table.
    pub fn bindings(&self, embeddings: &EmbeddingMatrix<T>) -> Bindings<T> {
        let mut b = Bindings::new();
        for (name, t) in &self.tensors {
            b.insert_shared(name.clone(), Arc::clone(t));
        }
        b.insert_shared(EMBEDDINGS, Arc::clone(&embeddings.matrix));
        b
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast::<U>())))
                .collect(),
        }
    }
}
