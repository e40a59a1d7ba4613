//! Binary model file.
//!
//! Layout (all integers little-endian `u64`, floats little-endian `f32`):
//! magic `MOTIF2VEC\0`, one version byte, `|V|`, `dim`, then `|V|` entries of
//! (byte length, UTF-8 token, count), then the input matrix and the output
//! matrix, each row-major.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{EmbeddingModel, TrainConfig};
use crate::encoding::{token_size, Vocabulary};

pub const MODEL_MAGIC: &[u8; 10] = b"MOTIF2VEC\0";
pub const MODEL_FORMAT_VERSION: u8 = 1;

// refuse absurd headers before allocating
const MAX_TOKEN_BYTES: u64 = 1 << 16;
const MAX_ELEMENTS: u64 = 1 << 34;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_model<W: Write>(model: &EmbeddingModel, mut out: W) -> io::Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&[MODEL_FORMAT_VERSION])?;
    write_u64(&mut out, model.len() as u64)?;
    write_u64(&mut out, model.dim() as u64)?;
    for (_, token, count) in model.vocab.iter() {
        write_u64(&mut out, token.len() as u64)?;
        out.write_all(token.as_bytes())?;
        write_u64(&mut out, count)?;
    }
    for v in model.input_vectors.iter().chain(&model.output_vectors) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

fn read_matrix<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>, ModelFileError> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    let m: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if !m.iter().all(|v| v.is_finite()) {
        return Err(ModelFileError::Corrupt("non-finite weight".into()));
    }
    Ok(m)
}

/// Reads a model. Only `dim` of the training configuration is stored; the
/// remaining fields come back as defaults.
pub fn read_model<R: Read>(mut input: R) -> Result<EmbeddingModel, ModelFileError> {
    let mut magic = [0u8; 10];
    input.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let mut version = [0u8; 1];
    input.read_exact(&mut version)?;
    if version[0] != MODEL_FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version[0]));
    }
    let size = read_u64(&mut input)?;
    let dim = read_u64(&mut input)?;
    if dim == 0 || size.checked_mul(dim).is_none_or(|n| n > MAX_ELEMENTS) {
        return Err(ModelFileError::Corrupt(format!("bad shape {size}x{dim}")));
    }

    let mut entries = Vec::with_capacity(size as usize);
    for _ in 0..size {
        let len = read_u64(&mut input)?;
        if len == 0 || len > MAX_TOKEN_BYTES {
            return Err(ModelFileError::Corrupt(format!("token length {len}")));
        }
        let mut bytes = vec![0u8; len as usize];
        input.read_exact(&mut bytes)?;
        let token = String::from_utf8(bytes)
            .map_err(|_| ModelFileError::Corrupt("token is not UTF-8".into()))?;
        let count = read_u64(&mut input)?;
        entries.push((token, count));
    }
    let n = entries
        .iter()
        .map(|(t, _)| token_size(t))
        .max()
        .filter(|&m| m > 1)
        .unwrap_or(0);
    let vocab = Vocabulary::from_entries(entries, n);
    if vocab.len() as u64 != size {
        return Err(ModelFileError::Corrupt("duplicate tokens".into()));
    }

    let len = (size * dim) as usize;
    let input_vectors = read_matrix(&mut input, len)?;
    let output_vectors = read_matrix(&mut input, len)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(ModelFileError::Corrupt("trailing bytes".into()));
    }
    Ok(EmbeddingModel {
        vocab,
        input_vectors,
        output_vectors,
        config: TrainConfig {
            dim: dim as usize,
            ..TrainConfig::default()
        },
    })
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<(), ModelFileError> {
    let io_err = |source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_model(model, BufWriter::new(file)).map_err(io_err)
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel, ModelFileError> {
    let file = fs::File::open(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_model(BufReader::new(file)).map_err(|e| match e {
        ModelFileError::Stream(source) => ModelFileError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}
