use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams};
use crate::autodiff::Tensor;
use crate::container;
use crate::Scalar;

const MAGIC: &[u8; 8] = b"MLSTMCKP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub params: Vec<TensorShape>,
    /// Embedding file the model was trained with, relative to the checkpoint.
    #[serde(default)]
    pub embeddings: Option<String>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub params: ModelParams<T>,
}

fn err(path: &Path, message: impl ToString) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes parameters as f64 little-endian after a JSON header of names and
/// shapes.
pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    params: &ModelParams<T>,
    embeddings: Option<&str>,
    metadata: serde_json::Value,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        config: params.config().clone(),
        params: params
            .iter()
            .map(|(name, t)| TensorShape {
                name: name.to_owned(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
        embeddings: embeddings.map(str::to_owned),
        metadata,
    };
    let file = File::create(path).map_err(|e| err(path, e))?;
    let payload = params
        .iter()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.to_f64_lossy()));
    container::write(BufWriter::new(file), MAGIC, &header, payload).map_err(|e| err(path, e))
}

/// Reads a checkpoint and validates every tensor against its config.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, ModelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| err(path, e))?;
    let (header, payload) = container::read(BufReader::new(file), MAGIC, |h: &CheckpointHeader| {
        h.params.iter().map(|s| s.rows * s.cols).sum()
    })
    .map_err(|e| err(path, e))?;
    header.config.validate().map_err(|e| err(path, e))?;

    let mut offset = 0;
    let tensors = header.params.iter().map(|s| {
        let n = s.rows * s.cols;
        let data = payload[offset..offset + n]
            .iter()
            .map(|&v| T::from_f64_lossy(v))
            .collect();
        offset += n;
        (s.name.clone(), Tensor::new(s.rows, s.cols, data))
    });
    let params = ModelParams::from_tensors(&header.config, tensors).map_err(|e| err(path, e))?;
    Ok(Checkpoint { header, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = ModelConfig::new(3, 2, HeadKind::Boundary);
        cfg.bi_answer_pointer = true;
        let p = ModelParams::<f64>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &p, Some("embeddings.bin"), serde_json::json!({"epoch": 3})).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(back.header.embeddings.as_deref(), Some("embeddings.bin"));
        assert_eq!(back.header.metadata["epoch"], 3);
        for ((a, ta), (b, tb)) in p.iter().zip(back.params.iter()) {
            assert_eq!(a, b);
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ta), bits(tb));
        }
    }

    #[test]
    fn rejects_corruption() {
        let cfg = ModelConfig::new(2, 2, HeadKind::Sequence);
        let p = ModelParams::<f64>::zeros(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &p, None, serde_json::Value::Null).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint::<f64>(&path).is_err());

        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let e = load_checkpoint::<f64>(&path).unwrap_err().to_string();
        assert!(e.contains("magic"), "{e}");
    }
}
