//! JSON checkpoint of a [`ToyPolicy`]: the producing config and every
//! tensor with its shape. Floats round-trip exactly.

use super::{PolicyConfig, PolicyError, ToyPolicy};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FORMAT: &str = "crl-policy";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    #[serde(default)]
    step: Option<usize>,
    config: PolicyConfig,
    tensors: Vec<Tensor>,
}

pub fn save_checkpoint(
    policy: &ToyPolicy,
    step: Option<usize>,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let cfg = *policy.config();
    let tensors = policy
        .layout()
        .tensors(&cfg)
        .into_iter()
        .map(|(name, off, shape)| {
            let n: usize = shape.iter().product();
            Tensor {
                name: name.into(),
                shape,
                data: policy.params()[off..off + n].to_vec(),
            }
        })
        .collect();
    let file = File {
        format: CHECKPOINT_FORMAT.into(),
        version: VERSION,
        step,
        config: cfg,
        tensors,
    };
    let text = serde_json::to_string(&file).expect("checkpoint serializes");
    std::fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a checkpoint, returning the policy and the step it was saved at.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(ToyPolicy, Option<usize>), CheckpointError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: File =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT || file.version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported {} v{}",
            file.format, file.version
        )));
    }
    let mut policy = ToyPolicy::zeros(file.config)?;
    let expected = policy.layout().tensors(&file.config);
    if file.tensors.len() != expected.len() {
        return Err(CheckpointError::Format("wrong tensor count".into()));
    }
    for (t, (name, off, shape)) in file.tensors.iter().zip(expected) {
        if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(CheckpointError::Format(format!(
                "tensor `{}` does not match `{name}` {shape:?}",
                t.name
            )));
        }
        policy.params_mut()[off..off + t.data.len()].copy_from_slice(&t.data);
    }
    Ok((policy, file.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let p = ToyPolicy::random(
            PolicyConfig::default(),
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_checkpoint(&p, Some(17), &path).unwrap();
        let (back, step) = load_checkpoint(&path).unwrap();
        assert_eq!(step, Some(17));
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let p = ToyPolicy::zeros(PolicyConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_checkpoint(&p, None, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"shape\":[5,16]", "\"shape\":[5,15]");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(_))
        ));
    }
}
