//! Single-file model checkpoints.
//!
//! A checkpoint is a JSON header (architecture config, seed, training
//! history) followed by a named-tensor archive holding every parameter,
//! including non-trainable running statistics. The tensor archive is also
//! used standalone for externally supplied backbone weights.

use super::train::TrainHistory;
use super::{LandLstm, LandLstmConfig, OfConvNet, OfConvNetConfig};
use crate::nn::Param;
use crate::{Error, Result};
use ndarray::ArrayD;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const TENSOR_MAGIC: &[u8; 4] = b"VVTN";
const CHECKPOINT_MAGIC: &[u8; 4] = b"VVCK";
const FORMAT_VERSION: u32 = 1;

/// Architecture tag plus its config.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "arch", content = "config", rename_all = "kebab-case")]
pub enum CheckpointConfig {
    LandLstm(LandLstmConfig),
    OfConvNet(OfConvNetConfig),
}

/// Checkpoint metadata stored next to the weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub config: CheckpointConfig,
    pub seed: u64,
    pub history: TrainHistory,
}

fn write_tensor_section(
    out: &mut impl Write,
    tensors: &BTreeMap<String, ArrayD<f64>>,
) -> Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(tensor.ndim() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

fn read_exact_or(file: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    file.read_exact(buf).map_err(|_| parse_err(path, format!("truncated {what}")))
}

fn read_u32(file: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(file, &mut b, path, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor_section(
    file: &mut impl Read,
    path: &Path,
) -> Result<BTreeMap<String, ArrayD<f64>>> {
    let mut magic = [0u8; 4];
    read_exact_or(file, &mut magic, path, "tensor header")?;
    if &magic != TENSOR_MAGIC {
        return Err(parse_err(path, "bad tensor magic"));
    }
    let version = read_u32(file, path, "tensor header")?;
    if version != FORMAT_VERSION {
        return Err(parse_err(path, format!("unsupported tensor version {version}")));
    }
    let count = read_u32(file, path, "tensor count")? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(file, path, "tensor name")? as usize;
        if name_len > 4096 {
            return Err(parse_err(path, "implausible tensor name length"));
        }
        let mut name_buf = vec![0u8; name_len];
        read_exact_or(file, &mut name_buf, path, "tensor name")?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| parse_err(path, "tensor name is not utf-8"))?;
        let ndim = read_u32(file, path, "tensor rank")? as usize;
        if ndim > 8 {
            return Err(parse_err(path, format!("implausible tensor rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = read_u32(file, path, "tensor shape")? as usize;
            len = len.saturating_mul(d);
            shape.push(d);
        }
        if len > 1 << 28 {
            return Err(parse_err(path, "implausible tensor size"));
        }
        let mut data = vec![0u8; len * 8];
        read_exact_or(file, &mut data, path, &format!("tensor {name}"))?;
        let vals: Vec<f64> =
            data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, format!("tensor {name} has non-finite values")));
        }
        let tensor = ArrayD::from_shape_vec(shape, vals)
            .map_err(|e| parse_err(path, format!("tensor {name}: {e}")))?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(parse_err(path, format!("duplicate tensor {name}")));
        }
    }
    Ok(tensors)
}

/// Write a standalone named-tensor archive.
pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, ArrayD<f64>>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor_section(&mut out, tensors)?;
    out.flush()?;
    Ok(())
}

/// Read a standalone named-tensor archive.
pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, ArrayD<f64>>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let tensors = read_tensor_section(&mut file, path)?;
    let mut rest = [0u8; 1];
    if file.read(&mut rest)? != 0 {
        return Err(parse_err(path, "trailing bytes after tensors"));
    }
    Ok(tensors)
}

fn params_to_map(params: Vec<&mut Param>) -> BTreeMap<String, ArrayD<f64>> {
    params.into_iter().map(|p| (p.name.clone(), p.value.clone())).collect()
}

fn apply_params(params: Vec<&mut Param>, tensors: &BTreeMap<String, ArrayD<f64>>, path: &Path) -> Result<()> {
    for p in params {
        let t = tensors
            .get(&p.name)
            .ok_or_else(|| parse_err(path, format!("checkpoint missing tensor {}", p.name)))?;
        if t.shape() != p.value.shape() {
            return Err(parse_err(
                path,
                format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                ),
            ));
        }
        p.value = t.clone();
    }
    Ok(())
}

fn save_checkpoint(
    path: &Path,
    meta: &Checkpoint,
    tensors: &BTreeMap<String, ArrayD<f64>>,
) -> Result<()> {
    let json = serde_json::to_vec(meta)
        .map_err(|e| Error::Internal(format!("checkpoint serialize: {e}")))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    write_tensor_section(&mut out, tensors)?;
    out.flush()?;
    Ok(())
}

/// Read a checkpoint: metadata plus all weight tensors.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, BTreeMap<String, ArrayD<f64>>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut file, &mut magic, path, "checkpoint header")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(parse_err(path, "not a checkpoint file"));
    }
    let version = read_u32(&mut file, path, "checkpoint header")?;
    if version != FORMAT_VERSION {
        return Err(parse_err(path, format!("unsupported checkpoint version {version}")));
    }
    let json_len = read_u32(&mut file, path, "metadata length")? as usize;
    if json_len > 1 << 24 {
        return Err(parse_err(path, "implausible metadata length"));
    }
    let mut json = vec![0u8; json_len];
    read_exact_or(&mut file, &mut json, path, "metadata")?;
    let meta: Checkpoint = serde_json::from_slice(&json)
        .map_err(|e| parse_err(path, format!("metadata: {e}")))?;
    let tensors = read_tensor_section(&mut file, path)?;
    let mut rest = [0u8; 1];
    if file.read(&mut rest)? != 0 {
        return Err(parse_err(path, "trailing bytes after checkpoint"));
    }
    Ok((meta, tensors))
}

/// Save a landmark model with its training provenance.
pub fn save_land_lstm(
    path: &Path,
    model: &mut LandLstm,
    seed: u64,
    history: &TrainHistory,
) -> Result<()> {
    let meta = Checkpoint {
        config: CheckpointConfig::LandLstm(model.cfg.clone()),
        seed,
        history: history.clone(),
    };
    let tensors = params_to_map(model.params_mut());
    save_checkpoint(path, &meta, &tensors)
}

/// Save a flow model with its training provenance.
pub fn save_of_convnet(
    path: &Path,
    model: &mut OfConvNet,
    seed: u64,
    history: &TrainHistory,
) -> Result<()> {
    let meta = Checkpoint {
        config: CheckpointConfig::OfConvNet(model.cfg.clone()),
        seed,
        history: history.clone(),
    };
    let tensors = params_to_map(model.params_mut());
    save_checkpoint(path, &meta, &tensors)
}

/// Load a landmark-model checkpoint.
pub fn load_land_lstm(path: &Path) -> Result<(LandLstm, Checkpoint)> {
    let (meta, tensors) = load_checkpoint(path)?;
    let CheckpointConfig::LandLstm(cfg) = &meta.config else {
        return Err(parse_err(path, "checkpoint holds a different architecture"));
    };
    let mut model = LandLstm::new(cfg, meta.seed)?;
    apply_params(model.params_mut(), &tensors, path)?;
    Ok((model, meta))
}

/// Load a flow-model checkpoint. The weights come entirely from the file,
/// so the pretrained-backbone cache is not consulted.
pub fn load_of_convnet(path: &Path) -> Result<(OfConvNet, Checkpoint)> {
    let (meta, tensors) = load_checkpoint(path)?;
    let CheckpointConfig::OfConvNet(cfg) = &meta.config else {
        return Err(parse_err(path, "checkpoint holds a different architecture"));
    };
    let mut model = OfConvNet::new_unloaded(cfg, meta.seed)?;
    apply_params(model.params_mut(), &tensors, path)?;
    Ok((model, meta))
}
