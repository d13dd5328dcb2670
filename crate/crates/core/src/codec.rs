//! Little-endian binary encoding shared by the index and dataset files.
//!
//! Every top-level blob starts with a 4-byte magic and a u32 version.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const INDEX_MAGIC: [u8; 4] = *b"RANI";
pub const INDEX_VERSION: u32 = 1;

pub trait Encode {
    fn encode(&self, w: &mut Vec<u8>);
}

pub trait Decode: Sized {
    fn decode(r: &mut Reader<'_>) -> Result<Self>;
}

pub struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

fn eof(e: std::io::Error) -> Error {
    Error::Format(format!("truncated input: {e}"))
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { cur: Cursor::new(buf) }
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(eof)
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(eof)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(eof)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(eof)
    }

    pub fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let left = self.remaining() as u64;
        // every encoded element takes at least one byte
        if n > left {
            return Err(Error::Format(format!("length {n} exceeds remaining {left} bytes")));
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.cur.read_exact(&mut buf).map_err(eof)?;
        Ok(buf)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.len()?;
        (0..n).map(|_| self.u64()).collect()
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len()?;
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    /// Reads and checks a magic/version header.
    pub fn header(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let got = self.bytes(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(&magic)
            )));
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format(format!(
                "unsupported format version {v} (this build reads version {version})"
            )));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub fn put_u8(w: &mut Vec<u8>, v: u8) {
    w.push(v);
}

pub fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.write_u32::<LE>(v).unwrap();
}

pub fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.write_u64::<LE>(v).unwrap();
}

pub fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.write_f64::<LE>(v).unwrap();
}

pub fn put_len(w: &mut Vec<u8>, n: usize) {
    put_u64(w, n as u64);
}

pub fn put_f64s(w: &mut Vec<u8>, vs: &[f64]) {
    put_len(w, vs.len());
    vs.iter().for_each(|&v| put_f64(w, v));
}

pub fn put_u64s(w: &mut Vec<u8>, vs: &[u64]) {
    put_len(w, vs.len());
    vs.iter().for_each(|&v| put_u64(w, v));
}

pub fn put_u32s(w: &mut Vec<u8>, vs: &[u32]) {
    put_len(w, vs.len());
    vs.iter().for_each(|&v| put_u32(w, v));
}

pub fn put_header(w: &mut Vec<u8>, magic: [u8; 4], version: u32) {
    w.extend_from_slice(&magic);
    put_u32(w, version);
}

impl<T: Encode> Encode for Vec<T> {
    fn encode(&self, w: &mut Vec<u8>) {
        put_len(w, self.len());
        self.iter().for_each(|x| x.encode(w));
    }
}

impl<T: Decode> Decode for Vec<T> {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.len()?;
        (0..n).map(|_| T::decode(r)).collect()
    }
}

/// Encodes `value` to a fresh buffer.
pub fn to_bytes<T: Encode>(value: &T) -> Vec<u8> {
    let mut w = Vec::new();
    value.encode(&mut w);
    w
}

/// Decodes `T` from the whole buffer, rejecting trailing bytes.
pub fn from_bytes<T: Decode>(buf: &[u8]) -> Result<T> {
    let mut r = Reader::new(buf);
    let v = T::decode(&mut r)?;
    r.finish()?;
    Ok(v)
}

impl Encode for crate::norms::Dataset {
    fn encode(&self, w: &mut Vec<u8>) {
        put_u64(w, self.dim() as u64);
        put_f64s(w, self.as_flat());
    }
}

impl Decode for crate::norms::Dataset {
    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let dim = r.u64()? as usize;
        let data = r.f64s()?;
        crate::norms::Dataset::from_flat(dim, data).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Index payload kinds following the `RANI` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum IndexKind {
    Robust = 1,
    Budgeted = 2,
    DsLsh = 3,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Robust => "robust",
            IndexKind::Budgeted => "budgeted",
            IndexKind::DsLsh => "dslsh",
        }
    }
}

/// Writes the index header for `kind`.
pub fn put_index_header(w: &mut Vec<u8>, kind: IndexKind) {
    put_header(w, INDEX_MAGIC, INDEX_VERSION);
    put_u8(w, kind as u8);
}

/// Reads the index header and returns its kind.
pub fn read_index_kind(r: &mut Reader<'_>) -> Result<IndexKind> {
    r.header(INDEX_MAGIC, INDEX_VERSION)?;
    match r.u8()? {
        1 => Ok(IndexKind::Robust),
        2 => Ok(IndexKind::Budgeted),
        3 => Ok(IndexKind::DsLsh),
        other => Err(Error::Format(format!("unknown index kind {other}"))),
    }
}

/// Peeks at the kind of an encoded index.
pub fn index_kind(buf: &[u8]) -> Result<IndexKind> {
    read_index_kind(&mut Reader::new(buf))
}

/// Reads the header and checks it names `expected`.
pub fn expect_index(r: &mut Reader<'_>, expected: IndexKind) -> Result<()> {
    let kind = read_index_kind(r)?;
    if kind != expected {
        return Err(Error::Format(format!(
            "index holds a {} structure, expected {}",
            kind.name(),
            expected.name()
        )));
    }
    Ok(())
}

pub fn put_json<T: serde::Serialize>(w: &mut Vec<u8>, value: &T) {
    let s = serde_json::to_vec(value).expect("config serializes");
    put_len(w, s.len());
    w.extend_from_slice(&s);
}

pub fn read_json<T: serde::de::DeserializeOwned>(r: &mut Reader<'_>) -> Result<T> {
    let n = r.len()?;
    let bytes = r.bytes(n)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("bad embedded config: {e}")))
}
