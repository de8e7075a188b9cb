//! Versioned parameter checkpoints: a magic header line followed by a
//! JSON body mapping parameter names to shapes and row-major data.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttackerParams, ModelConfig, RecommenderParams};
use crate::Tensor;

/// Magic first line of the on-disk checkpoint format.
pub const CHECKPOINT_MAGIC: &str = "PRIVNET-CKPT-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn to_named(pairs: Vec<(String, Tensor)>) -> Vec<NamedTensor> {
    pairs
        .into_iter()
        .map(|(name, t)| NamedTensor {
            name,
            shape: t.shape().to_vec(),
            data: t.into_data(),
        })
        .collect()
}

/// A trained model frozen to disk: the architecture plus every named
/// recommender and attacker tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub recommender: Vec<NamedTensor>,
    pub attacker: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        config: &ModelConfig,
        params: &RecommenderParams,
        attacker: &AttackerParams,
    ) -> Self {
        Checkpoint {
            config: config.clone(),
            recommender: to_named(params.named()),
            attacker: to_named(attacker.named()),
        }
    }

    /// Rebuilds the parameter structs, validating every name and shape
    /// against the architecture in `config`.
    pub fn into_params(self) -> Result<(ModelConfig, RecommenderParams, AttackerParams)> {
        let config = self.config;
        config.validate()?;
        let mut params = RecommenderParams::init(&config, 0)?;
        restore(params.named_mut(), self.recommender)?;
        let mut attacker = AttackerParams::init(&config, 0)?;
        restore(attacker.named_mut(), self.attacker)?;
        Ok((config, params, attacker))
    }
}

fn restore(targets: Vec<(String, &mut Tensor)>, stored: Vec<NamedTensor>) -> Result<()> {
    if targets.len() != stored.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, architecture needs {}",
            stored.len(),
            targets.len()
        )));
    }
    for ((name, target), entry) in targets.into_iter().zip(stored) {
        if entry.name != name {
            return Err(Error::Format(format!(
                "checkpoint tensor {:?} where {name:?} was expected",
                entry.name
            )));
        }
        if entry.shape != target.shape() {
            return Err(Error::Format(format!(
                "tensor {name:?} has shape {:?}, architecture needs {:?}",
                entry.shape,
                target.shape()
            )));
        }
        *target = Tensor::new(entry.shape, entry.data).map_err(|e| {
            Error::Format(format!("tensor {name:?} is malformed: {e}"))
        })?;
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CHECKPOINT_MAGIC}")?;
    serde_json::to_writer(&mut w, checkpoint).map_err(|e| Error::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut raw = String::new();
    fs::File::open(path)?.read_to_string(&mut raw)?;
    let body = raw
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|rest| rest.strip_prefix('\n'))
        .ok_or_else(|| {
            Error::Format(format!(
                "{} is not a {CHECKPOINT_MAGIC} checkpoint",
                path.display()
            ))
        })?;
    serde_json::from_str(body).map_err(|e| Error::Format(format!("corrupt checkpoint: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            hidden: 3,
            window: 5,
            transfer_layers: 1,
            transfer_enabled: true,
            n_source_items: 6,
            n_target_items: 7,
            attribute_classes: vec![2, 3],
        }
    }

    #[test]
    fn round_trip_restores_every_tensor() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 42).unwrap();
        let attacker = AttackerParams::init(&cfg, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&path, &Checkpoint::new(&cfg, &params, &attacker)).unwrap();
        let (cfg2, params2, attacker2) =
            read_checkpoint(&path).unwrap().into_params().unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
        assert_eq!(attacker, attacker2);
    }

    #[test]
    fn writes_are_byte_identical() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 1).unwrap();
        let attacker = AttackerParams::init(&cfg, 1).unwrap();
        let ckpt = Checkpoint::new(&cfg, &params, &attacker);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_checkpoint(&a, &ckpt).unwrap();
        write_checkpoint(&b, &ckpt).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        fs::write(&path, "PRIVNET-DATA-1\n{}").unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn shape_drift_is_a_format_error() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 1).unwrap();
        let attacker = AttackerParams::init(&cfg, 1).unwrap();
        let mut ckpt = Checkpoint::new(&cfg, &params, &attacker);
        ckpt.recommender[0].shape = vec![1, 4];
        ckpt.recommender[0].data.truncate(4);
        let err = ckpt.into_params().unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn renamed_tensor_is_a_format_error() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 1).unwrap();
        let attacker = AttackerParams::init(&cfg, 1).unwrap();
        let mut ckpt = Checkpoint::new(&cfg, &params, &attacker);
        ckpt.attacker[0].name = "attacker.9.w1".into();
        let err = ckpt.into_params().unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn truncated_body_is_a_format_error() {
        let cfg = tiny_config();
        let params = RecommenderParams::init(&cfg, 1).unwrap();
        let attacker = AttackerParams::init(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&path, &Checkpoint::new(&cfg, &params, &attacker)).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }
}
