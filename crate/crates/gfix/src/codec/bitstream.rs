//! GFXB bitstream container.
//!
//! Layout (little-endian):
//!
//! ```text
//! [0..4)  magic "GFXB"
//! [4]     version (currently 1)
//! [5..8)  reserved, must be zero
//! [8..12) u32 group count
//! per group:
//!   u32 rank, u32 map count
//!   map count * (u32 len, layer id bytes)
//!   f64 quantization step
//!   u64 symbol count (must equal rank^2 * map count)
//!   u32 alphabet size K
//!   K * i32 symbols, strictly ascending
//!   K * u16 coder frequencies, all positive
//!   u64 payload length, then the range-coded payload
//! ```
//!
//! The frequency table is transmitted verbatim, so decoding is
//! self-contained; one table per rank group.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::pmf::EmpiricalPmf;
use super::range::{RangeDecoder, RangeEncoder};
use super::QuantizedGroup;

pub const GFXB_MAGIC: &[u8; 4] = b"GFXB";
pub const GFXB_VERSION: u8 = 1;

pub fn encode_groups(groups: &[QuantizedGroup]) -> Result<Vec<u8>> {
    if groups.len() > u32::MAX as usize {
        return Err(Error::InvalidConfig("too many groups".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(GFXB_MAGIC);
    out.push(GFXB_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for g in groups {
        encode_one(g, &mut out)?;
    }
    Ok(out)
}

fn encode_one(g: &QuantizedGroup, out: &mut Vec<u8>) -> Result<()> {
    let expected = (g.rank as u64) * (g.rank as u64) * (g.layer_ids.len() as u64);
    if g.symbols.len() as u64 != expected {
        return Err(Error::SymbolCountMismatch { expected, found: g.symbols.len() as u64 });
    }
    if g.step <= 0.0 || !g.step.is_finite() {
        return Err(Error::NonPositiveStep(g.step));
    }

    let pmf = EmpiricalPmf::build(&g.symbols)?;
    let freqs = pmf.coder_freqs();
    let alphabet = pmf.alphabet();
    let cum = cumulative(&freqs);
    let total = *cum.last().unwrap();

    let mut enc = RangeEncoder::new();
    for &s in &g.symbols {
        let idx = pmf.index_of(s).expect("table was built from these symbols");
        enc.encode(cum[idx], freqs[idx] as u64, total);
    }
    let payload = enc.finish();

    out.extend_from_slice(&(g.rank as u32).to_le_bytes());
    out.extend_from_slice(&(g.layer_ids.len() as u32).to_le_bytes());
    for id in &g.layer_ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out.extend_from_slice(&g.step.to_le_bytes());
    out.extend_from_slice(&(g.symbols.len() as u64).to_le_bytes());
    out.extend_from_slice(&(alphabet.len() as u32).to_le_bytes());
    for &s in alphabet {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for &f in &freqs {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(())
}

pub fn decode_groups(bytes: &[u8]) -> Result<Vec<QuantizedGroup>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != GFXB_MAGIC {
        return Err(Error::BadMagic {
            expected: "GFXB",
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = cur.u8("version")?;
    if version != GFXB_VERSION {
        return Err(Error::VersionMismatch {
            container: "GFXB",
            expected: GFXB_VERSION,
            found: version,
        });
    }
    if cur.take(3, "reserved bytes")? != [0, 0, 0] {
        return Err(Error::CorruptHeader("reserved bytes are non-zero".into()));
    }
    let group_count = cur.u32("group count")?;
    let mut groups = Vec::with_capacity(group_count as usize);
    for _ in 0..group_count {
        groups.push(decode_one(&mut cur)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::TrailingData);
    }
    Ok(groups)
}

fn decode_one(cur: &mut Cursor) -> Result<QuantizedGroup> {
    let rank = cur.u32("rank")? as usize;
    if rank == 0 {
        return Err(Error::CorruptHeader("group rank is zero".into()));
    }
    let count = cur.u32("map count")? as usize;
    let mut layer_ids = Vec::with_capacity(count);
    for _ in 0..count {
        layer_ids.push(cur.string("layer id")?);
    }
    let step = f64::from_le_bytes(cur.take(8, "step")?.try_into().unwrap());
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::CorruptHeader(format!("invalid step {step}")));
    }
    let symbol_count = cur.u64("symbol count")?;
    let expected = (rank as u64)
        .checked_mul(rank as u64)
        .and_then(|v| v.checked_mul(count as u64))
        .ok_or_else(|| Error::CorruptHeader("group geometry overflows".into()))?;
    if symbol_count != expected {
        return Err(Error::SymbolCountMismatch { expected, found: symbol_count });
    }
    // sanity cap: 2^31 symbols is 8 GiB decoded; a header claiming more is
    // not a stream this library produced
    if symbol_count > 1 << 31 {
        return Err(Error::CorruptHeader(format!("implausible symbol count {symbol_count}")));
    }
    let symbol_count = usize::try_from(symbol_count)
        .map_err(|_| Error::CorruptHeader("symbol count does not fit usize".into()))?;

    let k = cur.u32("alphabet size")? as usize;
    if k == 0 {
        return Err(Error::InvalidPmf("empty alphabet".into()));
    }
    let mut alphabet = Vec::with_capacity(k);
    for _ in 0..k {
        alphabet.push(i32::from_le_bytes(cur.take(4, "alphabet symbol")?.try_into().unwrap()));
    }
    if !alphabet.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidPmf("alphabet not strictly ascending".into()));
    }
    let mut freqs = Vec::with_capacity(k);
    for _ in 0..k {
        let f = u16::from_le_bytes(cur.take(2, "frequency")?.try_into().unwrap());
        if f == 0 {
            return Err(Error::InvalidPmf("zero frequency".into()));
        }
        freqs.push(f);
    }

    let payload_len = cur.u64("payload length")?;
    let payload_len = usize::try_from(payload_len)
        .map_err(|_| Error::Truncated("range-coded payload"))?;
    let payload = cur.take_n(payload_len, "range-coded payload")?;

    let cum = cumulative(&freqs);
    let total = *cum.last().unwrap();
    let mut dec = RangeDecoder::new(payload);
    let mut symbols = Vec::with_capacity(symbol_count);
    for _ in 0..symbol_count {
        let off = dec.decode_offset(total);
        // cum is strictly increasing (all freqs > 0), so partition_point
        // finds the unique slot with cum[i] <= off < cum[i+1].
        let idx = cum.partition_point(|&c| c <= off) - 1;
        dec.commit(cum[idx], freqs[idx] as u64, total);
        symbols.push(alphabet[idx]);
    }
    Ok(QuantizedGroup { rank, layer_ids, step, symbols })
}

fn cumulative(freqs: &[u16]) -> Vec<u64> {
    let mut cum = Vec::with_capacity(freqs.len() + 1);
    let mut acc = 0u64;
    cum.push(0);
    for &f in freqs {
        acc += f as u64;
        cum.push(acc);
    }
    cum
}

pub fn write_stream_file(groups: &[QuantizedGroup], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_groups(groups)?)?;
    Ok(())
}

pub fn read_stream_file(path: impl AsRef<Path>) -> Result<Vec<QuantizedGroup>> {
    decode_groups(&fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        self.take_n(n, what)
    }

    fn take_n(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take_n(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::CorruptHeader(format!("{what} is not valid UTF-8")))
    }
}
