//! Model checkpoints: a small self-describing binary format.
//!
//! Layout:
//!   magic "AI4VA-CKPT" (10 bytes)
//!   version u32 LE
//!   header length u64 LE
//!   header JSON (training config, feature width, optimizer step, and the
//!     name/shape of every tensor in serialization order)
//!   payload: tensor data as little-endian f32, model tensors first, then
//!     Adam first moments, then Adam second moments.

use super::model::{AdamState, ModelParams, ParamMeta};
use super::{GgnnError, TrainConfig};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 10] = b"AI4VA-CKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    feature_dim: usize,
    step: u64,
    tensors: Vec<TensorInfo>,
}

fn io_err(path: &Path, e: std::io::Error) -> GgnnError {
    GgnnError::Io { path: path.display().to_string(), source: e }
}

fn format_err(path: &Path, message: impl Into<String>) -> GgnnError {
    GgnnError::Checkpoint { path: path.display().to_string(), message: message.into() }
}

/// Write parameters, optimizer state, and config to `path`.
pub fn save_checkpoint(
    params: &ModelParams<f32>,
    opt: &AdamState<f32>,
    config: &TrainConfig,
    path: &Path,
) -> Result<(), GgnnError> {
    let model_tensors = params.tensors();
    let mut infos = Vec::new();
    for (name, t) in &model_tensors {
        infos.push(TensorInfo { name: name.clone(), rows: t.rows, cols: t.cols });
    }
    for (prefix, list) in [("opt.m", &opt.m), ("opt.v", &opt.v)] {
        for ((name, _), t) in model_tensors.iter().zip(list) {
            infos.push(TensorInfo {
                name: format!("{prefix}.{name}"),
                rows: t.rows,
                cols: t.cols,
            });
        }
    }
    let header = Header {
        config: config.clone(),
        feature_dim: params.meta.features,
        step: opt.step,
        tensors: infos,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| format_err(path, format!("encoding header: {e}")))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?);
    file.write_all(MAGIC).map_err(|e| io_err(path, e))?;
    file.write_all(&VERSION.to_le_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(&header_json).map_err(|e| io_err(path, e))?;
    let mut write_payload = |t: &super::tensor::Mat<f32>| -> Result<(), GgnnError> {
        let mut buf = Vec::with_capacity(t.data.len() * 4);
        for &x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        file.write_all(&buf).map_err(|e| io_err(path, e))
    };
    for (_, t) in &model_tensors {
        write_payload(t)?;
    }
    for t in opt.m.iter().chain(&opt.v) {
        write_payload(t)?;
    }
    Ok(())
}

/// Read a checkpoint back. The stored config governs the reconstructed
/// parameter layout, so a checkpoint is self-contained.
pub fn load_checkpoint(
    path: &Path,
) -> Result<(ModelParams<f32>, AdamState<f32>, TrainConfig), GgnnError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 10];
    file.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic — not a model checkpoint"));
    }
    let mut v4 = [0u8; 4];
    file.read_exact(&mut v4).map_err(|e| io_err(path, e))?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(format_err(
            path,
            format!("unsupported checkpoint version {version} (expected {VERSION})"),
        ));
    }
    let mut l8 = [0u8; 8];
    file.read_exact(&mut l8).map_err(|e| io_err(path, e))?;
    let header_len = u64::from_le_bytes(l8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| format_err(path, "truncated checkpoint header"))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| format_err(path, format!("invalid header JSON: {e}")))?;

    header.config.validate(header.feature_dim).map_err(|e| {
        format_err(path, format!("stored config is invalid: {e}"))
    })?;
    let meta = ParamMeta::from_config(&header.config, header.feature_dim);
    let mut params = ModelParams::<f32>::zeros(meta);
    let mut opt = AdamState::new(&params);
    opt.step = header.step;

    // Expected tensor sequence: model tensors, then opt.m.*, then opt.v.*.
    let model_names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut expected = model_names.clone();
    expected.extend(model_names.iter().map(|n| format!("opt.m.{n}")));
    expected.extend(model_names.iter().map(|n| format!("opt.v.{n}")));
    if header.tensors.len() != expected.len() {
        return Err(format_err(
            path,
            format!(
                "tensor count mismatch: header lists {}, config implies {}",
                header.tensors.len(),
                expected.len()
            ),
        ));
    }
    for (info, want) in header.tensors.iter().zip(&expected) {
        if &info.name != want {
            return Err(format_err(
                path,
                format!("unexpected tensor '{}' (expected '{}')", info.name, want),
            ));
        }
    }

    let mut read_into = |t: &mut super::tensor::Mat<f32>,
                         info: &TensorInfo|
     -> Result<(), GgnnError> {
        if (t.rows, t.cols) != (info.rows, info.cols) {
            return Err(format_err(
                path,
                format!(
                    "shape mismatch for '{}': stored {}×{}, expected {}×{}",
                    info.name, info.rows, info.cols, t.rows, t.cols
                ),
            ));
        }
        let mut buf = vec![0u8; t.data.len() * 4];
        file.read_exact(&mut buf)
            .map_err(|_| format_err(path, format!("truncated payload at tensor '{}'", info.name)))?;
        for (x, chunk) in t.data.iter_mut().zip(buf.chunks_exact(4)) {
            *x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        Ok(())
    };

    let mut idx = 0;
    for (_, t) in params.tensors_mut() {
        read_into(t, &header.tensors[idx])?;
        idx += 1;
    }
    for t in opt.m.iter_mut() {
        read_into(t, &header.tensors[idx])?;
        idx += 1;
    }
    for t in opt.v.iter_mut() {
        read_into(t, &header.tensors[idx])?;
        idx += 1;
    }
    Ok((params, opt, header.config))
}
