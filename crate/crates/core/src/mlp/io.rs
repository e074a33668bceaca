//! Versioned binary model format.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size            field
//! 0       8               magic "TANDEMLP"
//! 8       4               format version (u32, currently 1)
//! 12      1               activation tag (0 = tanh)
//! 13      1               channel mode tag (0 = full, 1 = velocity-only)
//! 14      4               trained curriculum stage (u32)
//! 18      4               layer count (u32, number of weight matrices)
//! 22      per layer       rows u32, cols u32, rows·cols f64 weights
//!                         (row-major), rows f64 biases
//! ...     96              channel scaler: 6 f64 means then 6 f64 stds
//! end−8   8               FNV-1a 64-bit checksum of all preceding bytes
//! ```
//!
//! Load is bit-exact: `load(save(m))` reproduces every parameter. The
//! checksum is verified before the body is parsed, so damage anywhere in
//! the file is reported as corruption rather than as a confusing
//! structural error.

use std::path::Path;

use crate::error::{Error, ModelFileError, Result};
use crate::trajectory::{ChannelMode, ChannelScaler};

use super::model::{Activation, MlpModel};

pub const MODEL_MAGIC: &[u8; 8] = b"TANDEMLP";
pub const MODEL_VERSION: u32 = 1;

/// Fixed-size prefix before the per-layer data.
const HEADER_LEN: usize = 8 + 4 + 1 + 1 + 4 + 4;
const CHECKSUM_LEN: usize = 8;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
    }
}

fn channel_tag(c: ChannelMode) -> u8 {
    match c {
        ChannelMode::Full => 0,
        ChannelMode::VelocityOnly => 1,
    }
}

/// Serialize to bytes, checksum included. Refuses models with non-finite
/// parameters or an unusable scaler so every written file loads cleanly.
pub fn to_bytes(model: &MlpModel) -> Result<Vec<u8>> {
    model.validate()?;
    if !model.scaler.is_valid() {
        return Err(Error::numerical(
            "cannot save a model with a non-finite or non-positive channel scaler",
        ));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + model.param_count() * 8 + 96 + CHECKSUM_LEN);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(activation_tag(model.activation));
    out.push(channel_tag(model.channels));
    out.extend_from_slice(&model.trained_stage.to_le_bytes());
    out.extend_from_slice(&(model.layer_count() as u32).to_le_bytes());
    for l in 0..model.layer_count() {
        let rows = model.layer_dims[l + 1] as u32;
        let cols = model.layer_dims[l] as u32;
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        for w in &model.weights[l] {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &model.biases[l] {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    for m in &model.scaler.mean {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for s in &model.scaler.std {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

pub fn save(model: &MlpModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| ModelFileError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(from_bytes(&bytes)?)
}

/// Cursor over the body between header and checksum.
struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Body<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn read_u32(&mut self, what: &str) -> std::result::Result<u32, ModelFileError> {
        if self.remaining() < 4 {
            return Err(ModelFileError::Truncated(format!("file ends inside {what}")));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    /// Bulk f64 read; shortfall is a dimension problem because the sizes
    /// were declared just before.
    fn read_f64s(
        &mut self,
        count: usize,
        what: &str,
    ) -> std::result::Result<Vec<f64>, ModelFileError> {
        if self.remaining() / 8 < count {
            return Err(ModelFileError::DimensionMismatch(format!(
                "declared {what} size exceeds the file contents"
            )));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(f64::from_le_bytes(
                self.bytes[self.pos..self.pos + 8].try_into().unwrap(),
            ));
            self.pos += 8;
        }
        Ok(out)
    }
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<MlpModel, ModelFileError> {
    if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(ModelFileError::NotAModelFile);
    }
    if bytes.len() < 12 {
        return Err(ModelFileError::Truncated("file ends inside the header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ModelFileError::UnsupportedVersion {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(ModelFileError::Truncated("file ends inside the header".into()));
    }
    let body_end = bytes.len() - CHECKSUM_LEN;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if fnv1a64(&bytes[..body_end]) != stored {
        return Err(ModelFileError::ChecksumMismatch);
    }

    let activation = match bytes[12] {
        0 => Activation::Tanh,
        t => return Err(ModelFileError::InvalidField(format!("unknown activation tag {t}"))),
    };
    let channels = match bytes[13] {
        0 => ChannelMode::Full,
        1 => ChannelMode::VelocityOnly,
        t => return Err(ModelFileError::InvalidField(format!("unknown channel mode tag {t}"))),
    };
    let trained_stage = u32::from_le_bytes(bytes[14..18].try_into().unwrap());
    let layer_count = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
    if layer_count == 0 {
        return Err(ModelFileError::DimensionMismatch("zero layers declared".into()));
    }

    let mut body = Body {
        bytes: &bytes[..body_end],
        pos: HEADER_LEN,
    };
    let mut layer_dims = Vec::with_capacity(layer_count + 1);
    let mut weights = Vec::with_capacity(layer_count);
    let mut biases = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let rows = body.read_u32("a layer header")? as usize;
        let cols = body.read_u32("a layer header")? as usize;
        if rows == 0 || cols == 0 {
            return Err(ModelFileError::DimensionMismatch(format!(
                "layer {l} declares a zero dimension ({rows}×{cols})"
            )));
        }
        match layer_dims.last() {
            None => layer_dims.push(cols),
            Some(&prev) if prev == cols => {}
            Some(&prev) => {
                return Err(ModelFileError::DimensionMismatch(format!(
                    "layer {l} input width {cols} does not chain from previous output {prev}"
                )))
            }
        }
        layer_dims.push(rows);
        weights.push(body.read_f64s(rows * cols, "weight matrix")?);
        biases.push(body.read_f64s(rows, "bias vector")?);
    }
    if body.remaining() < 96 {
        return Err(ModelFileError::Truncated("file ends inside the channel scaler".into()));
    }
    let mean_v = body.read_f64s(6, "scaler mean")?;
    let std_v = body.read_f64s(6, "scaler std")?;
    if body.remaining() != 0 {
        return Err(ModelFileError::DimensionMismatch(format!(
            "{} unexplained bytes after the channel scaler",
            body.remaining()
        )));
    }
    let scaler = ChannelScaler {
        mean: mean_v.try_into().expect("exactly 6 read"),
        std: std_v.try_into().expect("exactly 6 read"),
    };
    if !scaler.is_valid() {
        return Err(ModelFileError::InvalidField(
            "channel scaler has non-finite or non-positive entries".into(),
        ));
    }

    Ok(MlpModel {
        layer_dims,
        weights,
        biases,
        activation,
        channels,
        scaler,
        trained_stage,
    })
}
