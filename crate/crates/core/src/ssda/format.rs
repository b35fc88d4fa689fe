//! Binary model files.
//!
//! One record per stacked autoencoder, little-endian throughout:
//!
//! ```text
//! "SSDA"  u32 version  u8 role  u32 patch_side  u32 layer_count
//! layer_count × { u32 in_dim  u32 out_dim  u8 activation }
//! u64 seed  u64 corpus_fingerprint  u32 notes_len  notes (UTF-8)
//! layer_count × { f64 weights[out_dim × in_dim] (row-major)  f64 biases[out_dim] }
//! ```
//!
//! A two-stage model is a contrast-stage record immediately followed by a
//! denoise-stage record.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{Model, ModelRole, SsdaModel, StagedModel, TrainingMeta};
use super::SsdaError;
use crate::fsutil::write_atomic;
use crate::nn::{Activation, DenseLayer, Network};

pub const MODEL_MAGIC: &[u8; 4] = b"SSDA";
pub const MODEL_VERSION: u32 = 1;

fn encode_record(model: &SsdaModel, out: &mut Vec<u8>) {
    let layers = model.network().layers();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(model.role().tag());
    out.extend_from_slice(&(crate::reconstruct::PatchModel::patch_side(model) as u32).to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        out.push(l.activation().tag());
    }
    out.extend_from_slice(&model.meta.seed.to_le_bytes());
    out.extend_from_slice(&model.meta.corpus_fingerprint.to_le_bytes());
    out.extend_from_slice(&(model.meta.notes.len() as u32).to_le_bytes());
    out.extend_from_slice(model.meta.notes.as_bytes());
    for l in layers {
        for v in l.weights().iter().chain(l.biases().iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    match model {
        Model::Single(m) => encode_record(m, &mut out),
        Model::Staged(s) => {
            encode_record(s.contrast(), &mut out);
            encode_record(s.denoise(), &mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SsdaError> {
        if self.bytes.len() - self.pos < n {
            return Err(SsdaError::Format {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, SsdaError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, SsdaError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, SsdaError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, SsdaError> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> SsdaError {
    SsdaError::Format {
        offset,
        message: message.into(),
    }
}

fn decode_record(r: &mut Reader<'_>) -> Result<SsdaModel, SsdaError> {
    let start = r.pos;
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(format_err(start, "missing SSDA magic"));
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(format_err(at, format!("unsupported model version {version}")));
    }
    let at = r.pos;
    let role = ModelRole::from_tag(r.u8("role")?)
        .ok_or_else(|| format_err(at, "unknown model role"))?;
    let patch_side = r.u32("patch side")? as usize;
    let at = r.pos;
    let layer_count = r.u32("layer count")? as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(format_err(at, format!("implausible layer count {layer_count}")));
    }
    let mut dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = r.u32("layer dims")? as usize;
        let out_dim = r.u32("layer dims")? as usize;
        let at = r.pos;
        let act = Activation::from_tag(r.u8("activation")?)
            .ok_or_else(|| format_err(at, "unknown activation tag"))?;
        dims.push((in_dim, out_dim, act));
    }
    let seed = r.u64("seed")?;
    let corpus_fingerprint = r.u64("corpus fingerprint")?;
    let notes_len = r.u32("notes length")? as usize;
    let at = r.pos;
    let notes = std::str::from_utf8(r.take(notes_len, "notes")?)
        .map_err(|_| format_err(at, "notes are not valid UTF-8"))?
        .to_owned();

    let declared: usize = dims
        .iter()
        .map(|&(i, o, _)| (i * o + o) * 8)
        .sum();
    if r.remaining() < declared {
        return Err(SsdaError::SizeMismatch {
            offset: r.pos,
            declared,
            actual: r.remaining(),
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for (k, &(in_dim, out_dim, act)) in dims.iter().enumerate() {
        let what = format!("layer {k} parameters");
        let weights = Array2::from_shape_vec((out_dim, in_dim), r.f64s(in_dim * out_dim, &what)?)
            .expect("length matches shape");
        let biases = Array1::from(r.f64s(out_dim, &what)?);
        layers.push(DenseLayer::new(weights, biases, act).map_err(|e| SsdaError::Invalid(format!("layer {k}: {e}")))?);
    }
    let network = Network::new(layers).map_err(|e| SsdaError::Invalid(e.to_string()))?;
    SsdaModel::new(
        network,
        patch_side,
        role,
        TrainingMeta {
            seed,
            corpus_fingerprint,
            notes,
        },
    )
}

pub fn decode_model(bytes: &[u8]) -> Result<Model, SsdaError> {
    let mut r = Reader { bytes, pos: 0 };
    let first = decode_record(&mut r)?;
    if r.remaining() == 0 {
        return Ok(Model::Single(first));
    }
    if !bytes[r.pos..].starts_with(MODEL_MAGIC) {
        return Err(SsdaError::SizeMismatch {
            offset: r.pos,
            declared: 0,
            actual: r.remaining(),
        });
    }
    let second = decode_record(&mut r)?;
    if r.remaining() != 0 {
        return Err(SsdaError::SizeMismatch {
            offset: r.pos,
            declared: 0,
            actual: r.remaining(),
        });
    }
    Ok(Model::Staged(StagedModel::new(first, second)?))
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), SsdaError> {
    write_atomic(path, &encode_model(model)).map_err(|source| SsdaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Model, SsdaError> {
    let bytes = std::fs::read(path).map_err(|source| SsdaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}
