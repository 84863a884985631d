//! Checkpoints: `W` as an EMB1 matrix plus a JSON sidecar
//! `{b, tau_m, c, d, epoch}` at the same path with a `.json` extension.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClusterHeadParams, HeadError};
use crate::embedstore::{read_embeddings, write_embeddings, StoreError};
use crate::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub b: Vec<f64>,
    pub tau_m: f64,
    pub c: usize,
    pub d: usize,
    pub epoch: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_checkpoint(params: &ClusterHeadParams, epoch: usize, path: impl AsRef<Path>) -> Result<(), HeadError> {
    let path = path.as_ref();
    let w: Vec<f32> = params.weights.iter().map(|&v| v as f32).collect();
    let w = EmbeddingMatrix::new(params.c(), params.d(), w, false)?;
    write_embeddings(&w, path)?;
    let meta = CheckpointMeta {
        b: params.bias.clone(),
        tau_m: params.temperature,
        c: params.c(),
        d: params.d(),
        epoch,
    };
    let side = sidecar(path);
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint metadata serializes");
    std::fs::write(&side, text + "\n").map_err(|source| StoreError::Io { path: side, source })?;
    Ok(())
}

/// Loads a checkpoint. Weights come back at f32 precision.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ClusterHeadParams, CheckpointMeta), HeadError> {
    let path = path.as_ref();
    let w = read_embeddings(path)?;
    let side = sidecar(path);
    let text = std::fs::read_to_string(&side).map_err(|source| StoreError::Io { path: side.clone(), source })?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| StoreError::Format(format!("{}: {e}", side.display())))?;
    if w.n() != meta.c || w.d() != meta.d {
        return Err(StoreError::Format(format!(
            "checkpoint weights are {}x{} but metadata says {}x{}",
            w.n(),
            w.d(),
            meta.c,
            meta.d
        ))
        .into());
    }
    let params = ClusterHeadParams::new(meta.c, meta.d, w.to_f64(), meta.b.clone(), meta.tau_m)?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.emb");
        let p = ClusterHeadParams::new(2, 3, vec![0.5, -1.25, 2.0, 0.1, 0.2, 0.3], vec![-0.5, 0.125], 0.5).unwrap();
        write_checkpoint(&p, 7, &path).unwrap();
        let (back, meta) = read_checkpoint(&path).unwrap();
        assert_eq!(meta.epoch, 7);
        assert_eq!(back.bias, p.bias);
        assert_eq!(back.temperature, 0.5);
        for (a, b) in back.weights.iter().zip(&p.weights) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn mismatched_metadata_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.emb");
        let p = ClusterHeadParams::zeros(2, 2);
        write_checkpoint(&p, 0, &path).unwrap();
        std::fs::write(path.with_extension("json"), r#"{"b":[0,0,0],"tau_m":1,"c":3,"d":2,"epoch":0}"#).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
