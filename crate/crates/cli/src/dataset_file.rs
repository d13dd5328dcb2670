//! `RANN` dataset files and cost sidecars.
//!
//! Layout: magic `RANN`, u32 version, u32 element type, u64 n, u64 d, then a
//! row-major little-endian payload. Bit rows are packed into `ceil(d/64)`
//! u64 words each.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rann::{BitMatrix, CostVector, Dataset};

use crate::error::CliError;

pub const MAGIC: [u8; 4] = *b"RANN";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ElemType {
    F64 = 0,
    F32 = 1,
    Bit = 2,
}

impl ElemType {
    fn from_code(code: u32) -> Result<Self, CliError> {
        match code {
            0 => Ok(ElemType::F64),
            1 => Ok(ElemType::F32),
            2 => Ok(ElemType::Bit),
            other => Err(CliError::data(format!("unknown element type code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::F64 => "f64",
            ElemType::F32 => "f32",
            ElemType::Bit => "bit",
        }
    }

    /// Payload size in bytes for `n` rows of dimension `d`.
    pub fn payload_len(self, n: u64, d: u64) -> Option<u64> {
        match self {
            ElemType::F64 => n.checked_mul(d)?.checked_mul(8),
            ElemType::F32 => n.checked_mul(d)?.checked_mul(4),
            ElemType::Bit => n.checked_mul(d.div_ceil(64))?.checked_mul(8),
        }
    }
}

/// Contents of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetFile {
    Real(Dataset),
    /// f32 payload, widened on load.
    Real32(Dataset),
    Bits(BitMatrix),
}

impl DatasetFile {
    pub fn elem_type(&self) -> ElemType {
        match self {
            DatasetFile::Real(_) => ElemType::F64,
            DatasetFile::Real32(_) => ElemType::F32,
            DatasetFile::Bits(_) => ElemType::Bit,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DatasetFile::Real(ds) | DatasetFile::Real32(ds) => ds.len(),
            DatasetFile::Bits(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetFile::Real(ds) | DatasetFile::Real32(ds) => ds.dim(),
            DatasetFile::Bits(m) => m.dim(),
        }
    }

    /// Real-valued view; bit rows become 0/1 coordinates.
    pub fn to_real(&self) -> Dataset {
        match self {
            DatasetFile::Real(ds) | DatasetFile::Real32(ds) => ds.clone(),
            DatasetFile::Bits(m) => m.to_dataset(),
        }
    }

    /// Packed binary view; only bit-typed files qualify.
    pub fn require_bits(&self, what: &str) -> Result<&BitMatrix, CliError> {
        match self {
            DatasetFile::Bits(m) => Ok(m),
            other => Err(CliError::data(format!(
                "{what} must have element type bit for the dslsh mode, got {}",
                other.elem_type().name()
            ))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let (n, d) = (self.len() as u64, self.dim() as u64);
        let mut w = Vec::with_capacity(HEADER_LEN);
        w.extend_from_slice(&MAGIC);
        w.write_u32::<LE>(VERSION).unwrap();
        w.write_u32::<LE>(self.elem_type() as u32).unwrap();
        w.write_u64::<LE>(n).unwrap();
        w.write_u64::<LE>(d).unwrap();
        match self {
            DatasetFile::Real(ds) => ds.as_flat().iter().for_each(|&x| w.write_f64::<LE>(x).unwrap()),
            DatasetFile::Real32(ds) => ds.as_flat().iter().for_each(|&x| w.write_f32::<LE>(x as f32).unwrap()),
            DatasetFile::Bits(m) => m.as_words().iter().for_each(|&x| w.write_u64::<LE>(x).unwrap()),
        }
        w
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CliError> {
        if buf.len() < HEADER_LEN {
            return Err(CliError::data(format!("dataset file too short: {} bytes", buf.len())));
        }
        let mut r = buf;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(CliError::data(format!(
                "not a dataset file: magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(&MAGIC)
            )));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(CliError::data(format!(
                "unsupported dataset file version {version} (this build reads version {VERSION})"
            )));
        }
        let elem = ElemType::from_code(r.read_u32::<LE>()?)?;
        let n = r.read_u64::<LE>()?;
        let d = r.read_u64::<LE>()?;
        let expected = elem
            .payload_len(n, d)
            .filter(|&len| len == r.len() as u64)
            .ok_or_else(|| {
                CliError::data(format!(
                    "payload is {} bytes, header promises n = {n}, d = {d} of type {}",
                    r.len(),
                    elem.name()
                ))
            })?;
        let count = (expected / if elem == ElemType::F32 { 4 } else { 8 }) as usize;
        let (n, d) = (n as usize, d as usize);
        Ok(match elem {
            ElemType::F64 => {
                let mut v = vec![0.0; count];
                r.read_f64_into::<LE>(&mut v)?;
                DatasetFile::Real(Dataset::from_flat(d, v)?)
            }
            ElemType::F32 => {
                let mut v = vec![0.0f32; count];
                r.read_f32_into::<LE>(&mut v)?;
                DatasetFile::Real32(Dataset::from_flat(d, v.into_iter().map(f64::from).collect())?)
            }
            ElemType::Bit => {
                let mut v = vec![0u64; count];
                r.read_u64_into::<LE>(&mut v)?;
                DatasetFile::Bits(BitMatrix::from_words(n, d, v)?)
            }
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&buf).map_err(|e| e.context(path))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| CliError::io(path, e))
    }
}

/// Parses costs separated by commas, whitespace or newlines; `#` starts a comment.
pub fn parse_costs(text: &str) -> Result<Vec<f64>, CliError> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.parse::<f64>().map_err(|_| CliError::data(format!("bad cost entry {tok:?}"))))
        .collect()
}

pub fn read_costs(path: &Path) -> Result<CostVector, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let costs = parse_costs(&text).map_err(|e| e.context(path))?;
    CostVector::new(costs).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// One cost per line with round-trip precision.
pub fn write_costs(path: &Path, costs: &CostVector) -> Result<(), CliError> {
    let mut text = String::new();
    for w in costs.costs() {
        text.push_str(&format!("{w:?}\n"));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
