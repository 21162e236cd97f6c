//! Dense named tensors and the GFXT archive container.
//!
//! GFXT is a deliberately simple format: a fixed 16-byte prefix, a
//! CRC32-guarded variable header describing every tensor, then raw
//! contiguous little-endian payloads. Layout (all integers little-endian):
//!
//! ```text
//! [0..4)   magic "GFXT"
//! [4]      version (currently 1)
//! [5]      reserved, must be zero
//! [6..8)   u16 metadata pair count
//! [8..12)  u32 tensor count
//! [12..16) u32 CRC32 of the variable header section
//! metadata records: (u32 key len, key, u32 value len, value) per pair
//! tensor records:   (u32 name len, name, u8 dtype, u8 rank,
//!                    rank * u64 dims, u64 payload offset, u64 payload len)
//! payloads:         raw element bytes, contiguous, in record order
//! ```
//!
//! An empty archive is exactly the 16-byte prefix. Flipping any header byte
//! of a written file fails the magic, version, reserved, record-parse or
//! checksum stage; it never decodes silently.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const GFXT_MAGIC: &[u8; 4] = b"GFXT";
pub const GFXT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(c: u8) -> Option<Dtype> {
        match c {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named, shaped, dense real-valued array; row-major element order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn from_f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        Self::new(name.into(), shape, TensorData::F64(data))
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        Self::new(name.into(), shape, TensorData::F32(data))
    }

    fn new(name: String, shape: Vec<usize>, data: TensorData) -> Result<Tensor> {
        if name.is_empty() {
            return Err(Error::InvalidShape("tensor name must be non-empty".into()));
        }
        if shape.is_empty() {
            return Err(Error::InvalidShape(format!("tensor {name:?} has empty shape")));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidShape(format!("tensor {name:?} has a zero dimension")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape(format!(
                "tensor {name:?}: shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { name, shape, data })
    }

    /// Builds a 2-D tensor from a matrix, cast to the requested dtype.
    pub fn from_matrix(name: impl Into<String>, m: &Matrix, dtype: Dtype) -> Tensor {
        Self::from_matrix_shaped(name, m, vec![m.rows(), m.cols()], dtype)
            .expect("matrix shape is its own valid tensor shape")
    }

    /// Builds a tensor with an arbitrary shape from a matrix holding the same
    /// number of elements (the inverse of [`Tensor::reshape_2d`]).
    pub fn from_matrix_shaped(
        name: impl Into<String>,
        m: &Matrix,
        shape: Vec<usize>,
        dtype: Dtype,
    ) -> Result<Tensor> {
        let data = match dtype {
            Dtype::F32 => TensorData::F32(m.data().iter().map(|&v| v as f32).collect()),
            Dtype::F64 => TensorData::F64(m.data().to_vec()),
        };
        Self::new(name.into(), shape, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn has_non_finite(&self) -> bool {
        match &self.data {
            TensorData::F32(v) => v.iter().any(|x| !x.is_finite()),
            TensorData::F64(v) => v.iter().any(|x| !x.is_finite()),
        }
    }

    /// Views the tensor as an m-by-n matrix by splitting the shape at
    /// `split_axis`: m is the product of the leading dims, n of the trailing
    /// ones. Element order is preserved, so this is free of data movement.
    pub fn reshape_2d(&self, split_axis: usize) -> Result<Matrix> {
        if split_axis < 1 || split_axis >= self.rank() {
            return Err(Error::SplitAxisOutOfRange { axis: split_axis, rank: self.rank() });
        }
        let m: usize = self.shape[..split_axis].iter().product();
        let n: usize = self.shape[split_axis..].iter().product();
        Matrix::from_vec(m, n, self.to_f64_vec())
    }

    fn payload_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Controls archive decoding strictness.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Accept NaN/Inf payload values instead of rejecting the archive.
    pub allow_non_finite: bool,
}

/// An ordered collection of uniquely named tensors plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    entries: IndexMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
}

impl TensorArchive {
    pub fn new() -> TensorArchive {
        TensorArchive::default()
    }

    pub fn insert(&mut self, t: Tensor) -> Result<()> {
        if self.entries.contains_key(t.name()) {
            return Err(Error::DuplicateName(t.name().to_string()));
        }
        self.entries.insert(t.name().to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.metadata.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig("too many metadata pairs (max 65535)".into()));
        }
        if self.entries.len() > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many tensors".into()));
        }

        let mut header = Vec::new();
        for (k, v) in &self.metadata {
            put_str(&mut header, k);
            put_str(&mut header, v);
        }
        let mut offset: u64 = 0;
        let mut payload = Vec::new();
        for t in self.entries.values() {
            put_str(&mut header, t.name());
            header.push(t.dtype().code());
            let rank = u8::try_from(t.rank())
                .map_err(|_| Error::InvalidShape(format!("tensor {:?} rank exceeds 255", t.name())))?;
            header.push(rank);
            for &d in t.shape() {
                header.extend_from_slice(&(d as u64).to_le_bytes());
            }
            let bytes = t.payload_bytes();
            header.extend_from_slice(&offset.to_le_bytes());
            header.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            offset += bytes.len() as u64;
            payload.extend_from_slice(&bytes);
        }

        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(GFXT_MAGIC);
        out.push(GFXT_VERSION);
        out.push(0);
        out.extend_from_slice(&(self.metadata.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&header).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TensorArchive> {
        Self::from_bytes_with(bytes, ReadOptions::default())
    }

    pub fn from_bytes_with(bytes: &[u8], opts: ReadOptions) -> Result<TensorArchive> {
        let mut cur = Cursor::new(bytes);
        let magic = cur.take(4, "magic")?;
        if magic != GFXT_MAGIC {
            return Err(Error::BadMagic {
                expected: "GFXT",
                found: [magic[0], magic[1], magic[2], magic[3]],
            });
        }
        let version = cur.u8("version")?;
        if version != GFXT_VERSION {
            return Err(Error::VersionMismatch {
                container: "GFXT",
                expected: GFXT_VERSION,
                found: version,
            });
        }
        let reserved = cur.u8("reserved byte")?;
        if reserved != 0 {
            return Err(Error::CorruptHeader("reserved byte is non-zero".into()));
        }
        let meta_count = cur.u16("metadata count")?;
        let tensor_count = cur.u32("tensor count")?;
        let stored_crc = cur.u32("header checksum")?;

        let header_start = cur.pos;
        let mut metadata = BTreeMap::new();
        for _ in 0..meta_count {
            let k = cur.string("metadata key")?;
            let v = cur.string("metadata value")?;
            metadata.insert(k, v);
        }
        struct Record {
            name: String,
            dtype: Dtype,
            shape: Vec<usize>,
            offset: u64,
            len: u64,
        }
        let mut records = Vec::with_capacity(tensor_count as usize);
        for _ in 0..tensor_count {
            let name = cur.string("tensor name")?;
            if name.is_empty() {
                return Err(Error::CorruptHeader("empty tensor name".into()));
            }
            let dtype = Dtype::from_code(cur.u8("dtype")?)
                .ok_or_else(|| Error::CorruptHeader(format!("unknown dtype code in {name:?}")))?;
            let rank = cur.u8("rank")? as usize;
            if rank == 0 {
                return Err(Error::CorruptHeader(format!("tensor {name:?} has rank 0")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = cur.u64("dimension")?;
                if d == 0 {
                    return Err(Error::CorruptHeader(format!("tensor {name:?} has a zero dimension")));
                }
                shape.push(usize::try_from(d).map_err(|_| {
                    Error::CorruptHeader(format!("tensor {name:?} dimension does not fit usize"))
                })?);
            }
            let offset = cur.u64("payload offset")?;
            let len = cur.u64("payload length")?;
            records.push(Record { name, dtype, shape, offset, len });
        }
        let header_bytes = &bytes[header_start..cur.pos];
        let computed = crc32fast::hash(header_bytes);
        if computed != stored_crc {
            return Err(Error::HeaderChecksum { stored: stored_crc, computed });
        }

        let payload_start = cur.pos;
        let mut archive = TensorArchive { entries: IndexMap::new(), metadata };
        let mut expected_offset: u64 = 0;
        for rec in records {
            let numel = rec
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::CorruptHeader(format!("tensor {:?} shape overflows", rec.name)))?;
            let want = numel
                .checked_mul(rec.dtype.width() as u64)
                .ok_or_else(|| Error::CorruptHeader(format!("tensor {:?} shape overflows", rec.name)))?;
            if want != rec.len {
                return Err(Error::PayloadMismatch {
                    name: rec.name,
                    expected: want,
                    found: rec.len,
                });
            }
            if rec.offset != expected_offset {
                return Err(Error::CorruptHeader(format!(
                    "tensor {:?} payload offset {} is not contiguous (expected {})",
                    rec.name, rec.offset, expected_offset
                )));
            }
            expected_offset = expected_offset
                .checked_add(rec.len)
                .ok_or_else(|| Error::CorruptHeader("payload offsets overflow".into()))?;
            let start = (payload_start as u64)
                .checked_add(rec.offset)
                .and_then(|v| usize::try_from(v).ok())
                .ok_or(Error::Truncated("tensor payload"))?;
            let end = (start as u64)
                .checked_add(rec.len)
                .and_then(|v| usize::try_from(v).ok())
                .ok_or(Error::Truncated("tensor payload"))?;
            if end > bytes.len() {
                return Err(Error::Truncated("tensor payload"));
            }
            let raw = &bytes[start..end];
            let data = match rec.dtype {
                Dtype::F32 => TensorData::F32(
                    raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
                Dtype::F64 => TensorData::F64(
                    raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                ),
            };
            let tensor = Tensor::new(rec.name.clone(), rec.shape, data)
                .map_err(|_| Error::CorruptHeader(format!("inconsistent record for {:?}", rec.name)))?;
            if !opts.allow_non_finite && tensor.has_non_finite() {
                return Err(Error::NonFinite(rec.name));
            }
            archive.insert(tensor)?;
        }
        if payload_start as u64 + expected_offset != bytes.len() as u64 {
            return Err(Error::TrailingData);
        }
        Ok(archive)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<TensorArchive> {
        Self::read_file_with(path, ReadOptions::default())
    }

    pub fn read_file_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<TensorArchive> {
        let bytes = fs::read(path)?;
        Self::from_bytes_with(&bytes, opts)
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::CorruptHeader(format!("{what} is not valid UTF-8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn tensor_f64(name: &str, shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::from_f64(name, shape, data).unwrap()
    }

    #[test]
    fn reshape_basic_dims() {
        let t = Tensor::from_f64("t", vec![4, 3, 3], (0..36).map(|x| x as f64).collect()).unwrap();
        let m = t.reshape_2d(1).unwrap();
        assert_eq!(m.shape(), (4, 9));

        let sq = Tensor::from_f64("s", vec![6, 6], vec![0.0; 36]).unwrap();
        assert_eq!(sq.reshape_2d(1).unwrap().shape(), (6, 6));
    }

    #[test]
    fn reshape_enumerates_flat_indices() {
        // shape [2,2,2,2], split 2 -> 4x4 with (i,j) = flat[i*4 + j]
        let flat: Vec<f64> = (0..16).map(|x| x as f64 * 1.5).collect();
        let t = Tensor::from_f64("t", vec![2, 2, 2, 2], flat.clone()).unwrap();
        let m = t.reshape_2d(2).unwrap();
        assert_eq!(m.shape(), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), flat[i * 4 + j]);
            }
        }
    }

    #[test]
    fn reshape_axis_out_of_range() {
        let t = Tensor::from_f64("t", vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(matches!(t.reshape_2d(0), Err(Error::SplitAxisOutOfRange { .. })));
        assert!(matches!(t.reshape_2d(2), Err(Error::SplitAxisOutOfRange { .. })));
    }

    #[test]
    fn reshape_round_trip_is_bijective() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let t = tensor_f64("t", vec![3, 4, 5], &mut rng);
        let m = t.reshape_2d(2);
        let back = Tensor::from_matrix_shaped("t", &m.unwrap(), vec![3, 4, 5], Dtype::F64).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::from_f64("t", vec![], vec![]).is_err());
        assert!(Tensor::from_f64("t", vec![0], vec![]).is_err());
        assert!(Tensor::from_f64("t", vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_f64("", vec![1], vec![0.0]).is_err());
    }

    #[test]
    fn empty_archive_is_sixteen_bytes() {
        let a = TensorArchive::new();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(bytes.len(), 16);
        let b = TensorArchive::from_bytes(&bytes).unwrap();
        assert!(b.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_tensor_payload_is_zero_bytes() {
        let mut a = TensorArchive::new();
        a.insert(Tensor::from_f32("z", vec![2, 2], vec![0.0; 4]).unwrap()).unwrap();
        let bytes = a.to_bytes().unwrap();
        let payload = &bytes[bytes.len() - 16..];
        assert!(payload.iter().all(|&b| b == 0));
        assert_eq!(TensorArchive::from_bytes(&bytes).unwrap(), a);
    }

    #[test]
    fn round_trip_many_random_tensors() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut a = TensorArchive::new();
        a.set_metadata("origin", "unit-test");
        a.set_metadata("note", "random fixture");
        for i in 0..100 {
            let rank = rng.gen_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=5)).collect();
            let n: usize = shape.iter().product();
            if rng.gen_bool(0.5) {
                let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                a.insert(Tensor::from_f32(format!("t{i}"), shape, data).unwrap()).unwrap();
            } else {
                let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                a.insert(Tensor::from_f64(format!("t{i}"), shape, data).unwrap()).unwrap();
            }
        }
        let bytes = a.to_bytes().unwrap();
        let b = TensorArchive::from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        // byte-identical re-serialization
        assert_eq!(bytes, b.to_bytes().unwrap());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut a = TensorArchive::new();
        a.insert(Tensor::from_f64("x", vec![1], vec![1.0]).unwrap()).unwrap();
        let dup = Tensor::from_f64("x", vec![1], vec![2.0]).unwrap();
        assert!(matches!(a.insert(dup), Err(Error::DuplicateName(_))));
    }

    #[test]
    fn non_finite_rejected_on_load_unless_permissive() {
        let mut a = TensorArchive::new();
        a.insert(Tensor::from_f64("bad", vec![2], vec![1.0, f64::NAN]).unwrap()).unwrap();
        let bytes = a.to_bytes().unwrap();
        assert!(matches!(TensorArchive::from_bytes(&bytes), Err(Error::NonFinite(_))));
        let permissive =
            TensorArchive::from_bytes_with(&bytes, ReadOptions { allow_non_finite: true }).unwrap();
        assert!(permissive.get("bad").unwrap().has_non_finite());
    }

    #[test]
    fn every_header_byte_flip_is_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut a = TensorArchive::new();
        a.set_metadata("k", "v");
        a.insert(tensor_f64("alpha", vec![3, 2], &mut rng)).unwrap();
        a.insert(tensor_f64("beta", vec![2, 2, 2], &mut rng)).unwrap();
        let bytes = a.to_bytes().unwrap();
        let payload_len: usize = a.tensors().map(|t| t.len() * t.dtype().width()).sum();
        let header_len = bytes.len() - payload_len;
        for i in 0..header_len {
            for bit in 0..8 {
                let mut corrupt = bytes.clone();
                corrupt[i] ^= 1 << bit;
                assert!(
                    TensorArchive::from_bytes(&corrupt).is_err(),
                    "flip of byte {i} bit {bit} went undetected"
                );
            }
        }
    }

    #[test]
    fn truncation_is_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut a = TensorArchive::new();
        a.insert(tensor_f64("alpha", vec![4, 4], &mut rng)).unwrap();
        let bytes = a.to_bytes().unwrap();
        for cut in [1, 8, 15, 16, 20, bytes.len() - 1] {
            assert!(TensorArchive::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        // trailing garbage also rejected
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(matches!(TensorArchive::from_bytes(&extended), Err(Error::TrailingData)));
    }

    #[test]
    fn distinct_decode_errors() {
        let a = TensorArchive::new();
        let good = a.to_bytes().unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(TensorArchive::from_bytes(&bad_magic), Err(Error::BadMagic { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(
            TensorArchive::from_bytes(&bad_version),
            Err(Error::VersionMismatch { .. })
        ));

        let mut bad_crc = good;
        bad_crc[12] ^= 0xff;
        assert!(matches!(
            TensorArchive::from_bytes(&bad_crc),
            Err(Error::HeaderChecksum { .. })
        ));
    }
}
