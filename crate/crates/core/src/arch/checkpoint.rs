//! Model checkpoints: a versioned single-file format holding the spec hash,
//! the init seed, training progress, and every parameter as little-endian f32.
//!
//! Layout: one magic line, one JSON header line, then the raw payload. The
//! header lists parameters by name and shape in store order, and the payload
//! concatenates their values in exactly that order, so a reader can seek a
//! single tensor without decoding the rest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Scalar;
use crate::error::{LabError, Result};

use super::config::ModelSpec;
use super::model::{assemble, Model};

const MAGIC: &str = "ABSTRACTOR-LAB-CKPT v1";

/// How strictly a checkpoint must match the spec it is loaded into.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// Spec hash and the full name+shape inventory must match exactly.
    Strict,
    /// Copy every parameter whose name and shape both match; ignore the rest.
    /// Errors only if nothing at all transfers.
    CompatibleSubset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec_hash: String,
    seed: u64,
    epoch: usize,
    metrics: BTreeMap<String, f64>,
    params: Vec<ParamEntry>,
}

/// Metadata recovered from a checkpoint on load.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub spec_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Number of tensors actually copied into the model.
    pub loaded: usize,
}

/// Writes `model` to `path` in the versioned checkpoint format. Values are
/// stored as f32 regardless of the model's scalar type.
pub fn save_checkpoint<T: Scalar>(
    model: &Model<T>,
    path: impl AsRef<Path>,
    epoch: usize,
    metrics: &BTreeMap<String, f64>,
) -> Result<()> {
    let store = &model.store;
    let mut params = Vec::with_capacity(store.len());
    let mut payload_len = 0usize;
    for pid in store.pids() {
        let t = store.get(pid);
        payload_len += t.len();
        params.push(ParamEntry {
            name: store.name(pid).to_string(),
            shape: t.shape().to_vec(),
        });
    }
    let header = Header {
        spec_hash: model.spec.hash(),
        seed: model.seed,
        epoch,
        metrics: metrics.clone(),
        params,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| LabError::format(format!("checkpoint header encode: {e}")))?;

    let mut payload = Vec::with_capacity(payload_len * 4);
    for pid in store.pids() {
        for &v in store.get(pid).data() {
            payload.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(MAGIC.len() + header_json.len() + payload.len() + 2);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(header_json.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint from `path` into a model assembled from `spec`.
///
/// The model is first assembled with the checkpoint's recorded seed, then
/// parameters are overwritten from the payload according to `mode`.
pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    spec: &ModelSpec,
    mode: LoadMode,
) -> Result<(Model<T>, CheckpointMeta)> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;

    let (header, payload) = split_file(&bytes)?;
    let expected: usize = header.params.iter().map(|p| numel(&p.shape)).sum();
    if payload.len() != expected * 4 {
        return Err(LabError::format(format!(
            "checkpoint payload holds {} bytes but the header lists {} f32 values",
            payload.len(),
            expected
        )));
    }

    if mode == LoadMode::Strict && header.spec_hash != spec.hash() {
        return Err(LabError::format(format!(
            "checkpoint was saved for spec {} but strict load targets spec {}",
            header.spec_hash,
            spec.hash()
        )));
    }

    let mut model: Model<T> = assemble(spec, header.seed)?;

    if mode == LoadMode::Strict {
        // Inventories must agree exactly: same names, same shapes, same count.
        let mut want: BTreeMap<&str, &[usize]> = BTreeMap::new();
        for e in &header.params {
            want.insert(e.name.as_str(), &e.shape);
        }
        let model_pids: Vec<_> = model.store.pids().collect();
        if model_pids.len() != header.params.len() {
            return Err(LabError::format(format!(
                "checkpoint lists {} tensors but the model has {}",
                header.params.len(),
                model_pids.len()
            )));
        }
        for pid in model_pids {
            let name = model.store.name(pid).to_string();
            let shape = model.store.get(pid).shape().to_vec();
            match want.get(name.as_str()) {
                Some(s) if *s == shape.as_slice() => {}
                Some(s) => {
                    return Err(LabError::format(format!(
                        "checkpoint tensor {name} has shape {s:?} but the model expects {shape:?}"
                    )))
                }
                None => {
                    return Err(LabError::format(format!(
                        "model tensor {name} is missing from the checkpoint"
                    )))
                }
            }
        }
    }

    // Copy tensors by name, walking the payload in header order.
    let mut loaded = 0usize;
    let mut offset = 0usize;
    for entry in &header.params {
        let n = numel(&entry.shape);
        let slice = &payload[offset * 4..(offset + n) * 4];
        offset += n;
        let pid = match model.store.pid_by_name(&entry.name) {
            Some(p) => p,
            None => continue,
        };
        let t = model.store.get_mut(pid);
        if t.shape() != entry.shape.as_slice() {
            if mode == LoadMode::Strict {
                return Err(LabError::format(format!(
                    "checkpoint tensor {} has shape {:?} but the model expects {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            continue;
        }
        for (i, chunk) in slice.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            t.data_mut()[i] = T::from_f64(v as f64);
        }
        loaded += 1;
    }

    if loaded == 0 {
        return Err(LabError::format(
            "no checkpoint tensor matched the model by name and shape",
        ));
    }

    let meta = CheckpointMeta {
        spec_hash: header.spec_hash,
        seed: header.seed,
        epoch: header.epoch,
        metrics: header.metrics,
        loaded,
    };
    Ok((model, meta))
}

/// Reads only the metadata of a checkpoint without building a model.
pub fn read_checkpoint_meta(path: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let bytes = fs::read(path)?;
    let (header, _) = split_file(&bytes)?;
    Ok(CheckpointMeta {
        spec_hash: header.spec_hash,
        seed: header.seed,
        epoch: header.epoch,
        metrics: header.metrics,
        loaded: 0,
    })
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn split_file(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LabError::format("checkpoint file has no magic line"))?;
    let magic = &bytes[..first_nl];
    if magic != MAGIC.as_bytes() {
        return Err(LabError::format(format!(
            "unrecognized checkpoint format: expected magic {MAGIC:?}, found {:?}",
            String::from_utf8_lossy(&magic[..magic.len().min(40)])
        )));
    }
    let rest = &bytes[first_nl + 1..];
    let second_nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LabError::format("checkpoint file has no header line"))?;
    let header: Header = serde_json::from_slice(&rest[..second_nl])
        .map_err(|e| LabError::format(format!("checkpoint header decode: {e}")))?;
    Ok((header, &rest[second_nl + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::config::{AbstractorConfig, EncDecConfig, HeadKind, ModelKind, ModelSpec};
    use crate::nn::{ScoreActivation, SymbolMode};

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            kind: ModelKind::ArchB,
            d_in: 4,
            max_input_len: 5,
            max_target_len: 5,
            head: HeadKind::Seq2seq { vocab: 5 },
            embed_dim: None,
            encoder: Some(EncDecConfig {
                layers: 1,
                d_model: 8,
                n_heads: 2,
                d_p: 4,
                d_ff: 16,
                pre_norm: false,
            }),
            decoder: Some(EncDecConfig {
                layers: 1,
                d_model: 8,
                n_heads: 2,
                d_p: 4,
                d_ff: 16,
                pre_norm: false,
            }),
            abstractor: Some(AbstractorConfig {
                layers: 1,
                d_r: 2,
                d_p: 4,
                d_s: 8,
                d_ff: 16,
                sigma_rel: ScoreActivation::Softmax,
                symbol_mode: SymbolMode::Learned,
                use_residual: true,
                use_layer_norm: true,
                symmetric: false,
                use_self_attention: false,
                scale_scores: true,
                mask_diagonal: false,
                d_hv: None,
            }),
            second_abstractor: None,
            abstractor_reads: None,
            mlp_hidden: None,
            corelnet_softmax: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = tiny_spec();
        let model: Model<f32> = assemble(&spec, 77).unwrap();

        let mut metrics = BTreeMap::new();
        metrics.insert("val_loss".to_string(), 0.25);
        save_checkpoint(&model, &path, 12, &metrics).unwrap();

        let (loaded, meta) = load_checkpoint::<f32>(&path, &spec, LoadMode::Strict).unwrap();
        assert_eq!(meta.epoch, 12);
        assert_eq!(meta.seed, 77);
        assert_eq!(meta.metrics["val_loss"], 0.25);
        assert_eq!(meta.spec_hash, spec.hash());

        let a = model.store.snapshot();
        let b = loaded.store.snapshot();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
        assert_eq!(meta.loaded, model.store.len());
    }

    #[test]
    fn strict_load_rejects_different_spec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = tiny_spec();
        let model: Model<f32> = assemble(&spec, 1).unwrap();
        save_checkpoint(&model, &path, 0, &BTreeMap::new()).unwrap();

        let mut other = tiny_spec();
        other.encoder.as_mut().unwrap().d_ff = 32;
        let err = load_checkpoint::<f32>(&path, &other, LoadMode::Strict).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("strict load"), "unexpected error: {msg}");
    }

    #[test]
    fn compatible_subset_transfers_matching_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = tiny_spec();
        let model: Model<f32> = assemble(&spec, 5).unwrap();
        save_checkpoint(&model, &path, 3, &BTreeMap::new()).unwrap();

        // Same layout except a wider decoder FFN: that tensor pair differs in
        // shape and must be skipped, everything else must transfer verbatim.
        let mut other = tiny_spec();
        other.decoder.as_mut().unwrap().d_ff = 32;
        let (loaded, meta) =
            load_checkpoint::<f32>(&path, &other, LoadMode::CompatibleSubset).unwrap();
        assert!(meta.loaded > 0);
        assert!(meta.loaded < model.store.len());

        let pid = loaded.store.pid_by_name("encoder.l0.self.wq.w").unwrap();
        let src = model.store.pid_by_name("encoder.l0.self.wq.w").unwrap();
        assert_eq!(loaded.store.get(pid).data(), model.store.get(src).data());
    }

    #[test]
    fn corrupted_magic_is_rejected_with_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, b"NOT-A-CHECKPOINT\n{}\n").unwrap();
        let err = load_checkpoint::<f32>(&path, &tiny_spec(), LoadMode::Strict).unwrap_err();
        assert!(matches!(err, LabError::Format(_)), "got: {err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = tiny_spec();
        let model: Model<f32> = assemble(&spec, 2).unwrap();
        save_checkpoint(&model, &path, 0, &BTreeMap::new()).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, &bytes).unwrap();

        let err = load_checkpoint::<f32>(&path, &spec, LoadMode::Strict).unwrap_err();
        assert!(matches!(err, LabError::Format(_)), "got: {err}");
    }

    #[test]
    fn meta_reads_without_building_a_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let spec = tiny_spec();
        let model: Model<f32> = assemble(&spec, 9).unwrap();
        let mut metrics = BTreeMap::new();
        metrics.insert("test_acc".to_string(), 0.5);
        save_checkpoint(&model, &path, 42, &metrics).unwrap();

        let meta = read_checkpoint_meta(&path).unwrap();
        assert_eq!(meta.epoch, 42);
        assert_eq!(meta.seed, 9);
        assert_eq!(meta.metrics["test_acc"], 0.5);
    }
}
