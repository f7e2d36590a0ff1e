//! The EMB1 binary layout.
//!
//! All integers are little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `EMB1`                            |
//! | 4      | 4    | `u32` version, currently 1              |
//! | 8      | 4    | `u32` dtype code (0 = f32, 1 = f64)     |
//! | 12     | 8    | `u64` rows                              |
//! | 20     | 8    | `u64` cols                              |
//! | 28     | 4    | `u32` metadata length `M`               |
//! | 32     | M    | UTF-8 JSON metadata object              |
//! | 32+M   | …    | `rows × cols` values, row-major         |
//!
//! The metadata object carries `model_id`, `layer_index`, `modality`,
//! `variant` and `item_ids` (one string per row).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::linalg::first_non_finite;

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;
const FIXED_HEADER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Language,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Vision => "vision",
            Modality::Language => "language",
        })
    }
}

/// On-disk element type. Computation always happens in `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model_id: String,
    layer_index: u32,
    modality: Modality,
    variant: String,
    item_ids: Vec<String>,
}

/// Embeddings of `N` items by one model, layer and input variant.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    pub model_id: String,
    /// 0-based transformer block index.
    pub layer_index: u32,
    pub modality: Modality,
    /// Input variant tag such as `original` or `grayscale`.
    pub variant: String,
    /// Row identities; unique, defines row order.
    pub item_ids: Vec<String>,
    pub data: Mat<f64>,
    pub dtype: Dtype,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.layer_index == other.layer_index
            && self.modality == other.modality
            && self.variant == other.variant
            && self.item_ids == other.item_ids
            && self.dtype == other.dtype
            && self.data == other.data
    }
}

impl EmbeddingMatrix {
    /// Builds and validates a matrix stored as `f32` on disk.
    pub fn new(
        model_id: impl Into<String>,
        layer_index: u32,
        modality: Modality,
        variant: impl Into<String>,
        item_ids: Vec<String>,
        data: Mat<f64>,
    ) -> Result<Self> {
        let m = EmbeddingMatrix {
            model_id: model_id.into(),
            layer_index,
            modality,
            variant: variant.into(),
            item_ids,
            data,
            dtype: Dtype::F32,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Short `model/layer/variant` label for messages.
    pub fn label(&self) -> String {
        format!("{}/L{}/{}", self.model_id, self.layer_index, self.variant)
    }

    /// Checks shape, finiteness and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.rows() < 2 || self.cols() < 1 {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix {} must have at least 2 rows and 1 column, got {}x{}",
                self.label(),
                self.rows(),
                self.cols()
            )));
        }
        if self.item_ids.len() != self.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} item ids for {} rows",
                self.item_ids.len(),
                self.rows()
            )));
        }
        if let Some((row, col)) = first_non_finite(self.data.as_ref()) {
            return Err(Error::NonFinite { row, col });
        }
        let mut seen = HashSet::with_capacity(self.item_ids.len());
        for id in &self.item_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateItem(id.clone()));
            }
        }
        Ok(())
    }

    pub fn row_index(&self) -> std::collections::HashMap<&str, usize> {
        self.item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    fn metadata(&self) -> Metadata {
        Metadata {
            model_id: self.model_id.clone(),
            layer_index: self.layer_index,
            modality: self.modality,
            variant: self.variant.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    /// Serializes to the EMB1 byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let meta = serde_json::to_vec(&self.metadata())
            .map_err(|e| Error::InvalidArgument(format!("metadata encoding: {e}")))?;
        let meta_len = u32::try_from(meta.len())
            .map_err(|_| Error::InvalidArgument("metadata exceeds 4 GiB".into()))?;
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(FIXED_HEADER + meta.len() + rows * cols * self.dtype.size());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.dtype.code().to_le_bytes());
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        for i in 0..rows {
            for j in 0..cols {
                let v = self.data[(i, j)];
                match self.dtype {
                    Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
        Ok(out)
    }

    /// Parses the EMB1 byte layout. `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt_err = |e| Error::format(path, e);
        let header = parse_header(bytes).map_err(fmt_err)?;
        let payload = &bytes[header.payload_offset..];
        let expected = header
            .rows
            .checked_mul(header.cols)
            .and_then(|n| n.checked_mul(header.dtype.size() as u64))
            .ok_or_else(|| fmt_err(FormatError::Dimensions("rows x cols overflows".into())))?;
        let actual = payload.len() as u64;
        if actual < expected {
            return Err(fmt_err(FormatError::TruncatedPayload { expected, actual }));
        }
        if actual > expected {
            return Err(fmt_err(FormatError::TrailingBytes(actual - expected)));
        }
        let (rows, cols) = (header.rows as usize, header.cols as usize);
        let size = header.dtype.size();
        let data = Mat::from_fn(rows, cols, |i, j| {
            let at = (i * cols + j) * size;
            match header.dtype {
                Dtype::F32 => {
                    f32::from_le_bytes(payload[at..at + 4].try_into().unwrap()) as f64
                }
                Dtype::F64 => f64::from_le_bytes(payload[at..at + 8].try_into().unwrap()),
            }
        });
        let m = EmbeddingMatrix {
            model_id: header.model_id,
            layer_index: header.layer_index,
            modality: header.modality,
            variant: header.variant,
            item_ids: header.item_ids,
            data,
            dtype: header.dtype,
        };
        m.validate().map_err(|e| match e {
            Error::InvalidArgument(msg) => fmt_err(FormatError::Dimensions(msg)),
            other => other,
        })?;
        Ok(m)
    }
}

/// Everything in an EMB1 file except the payload.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingHeader {
    pub version: u32,
    pub dtype: Dtype,
    pub rows: u64,
    pub cols: u64,
    pub model_id: String,
    pub layer_index: u32,
    pub modality: Modality,
    pub variant: String,
    pub item_ids: Vec<String>,
    #[serde(skip)]
    payload_offset: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<EmbeddingHeader, FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::TruncatedHeader("magic"));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if bytes.len() < FIXED_HEADER {
        return Err(FormatError::TruncatedHeader("fixed header"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let code = u32_at(8);
    let dtype = Dtype::from_code(code).ok_or(FormatError::UnknownDtype(code))?;
    let rows = u64_at(12);
    let cols = u64_at(20);
    let meta_len = u32_at(28) as usize;
    let meta_end = FIXED_HEADER
        .checked_add(meta_len)
        .filter(|&end| end <= bytes.len())
        .ok_or(FormatError::TruncatedHeader("metadata"))?;
    let meta: Metadata = serde_json::from_slice(&bytes[FIXED_HEADER..meta_end])
        .map_err(|e| FormatError::Metadata(e.to_string()))?;
    if meta.item_ids.len() as u64 != rows {
        return Err(FormatError::Metadata(format!(
            "{} item_ids for {rows} rows",
            meta.item_ids.len()
        )));
    }
    Ok(EmbeddingHeader {
        version,
        dtype,
        rows,
        cols,
        model_id: meta.model_id,
        layer_index: meta.layer_index,
        modality: meta.modality,
        variant: meta.variant,
        item_ids: meta.item_ids,
        payload_offset: meta_end,
    })
}

/// Writes `matrix` to `path` in EMB1 layout.
pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = matrix.to_bytes()?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Reads and fully validates an EMB1 file.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes, path)
}

/// Reads only the header and metadata of an EMB1 file.
pub fn read_header(path: impl AsRef<Path>) -> Result<EmbeddingHeader> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut fixed = vec![0u8; FIXED_HEADER];
    let got = read_up_to(&mut file, &mut fixed).map_err(|e| Error::io(path, e))?;
    fixed.truncate(got);
    if got == FIXED_HEADER {
        let meta_len = u32::from_le_bytes(fixed[28..32].try_into().unwrap()) as usize;
        let mut meta = vec![0u8; meta_len];
        let got = read_up_to(&mut file, &mut meta).map_err(|e| Error::io(path, e))?;
        fixed.extend_from_slice(&meta[..got]);
    }
    parse_header(&fixed).map_err(|e| Error::format(path, e))
}

fn read_up_to(file: &mut fs::File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
