//! 64-bit range coder with byte-wise renormalization.
//!
//! The encoder keeps the interval `[low, low + range)` with `range` held in
//! `[2^56, 2^64)`; carries propagate backwards through the output buffer.
//! Frequencies are 16-bit fixed point supplied by the caller; the only
//! requirement here is `total <= 2^56` so that `range / total` never hits
//! zero. The flush picks the multiple of 2^56 inside the final interval, so
//! at most one tail byte is ever written and the coded length never exceeds
//! the information content by more than a byte plus renorm slack.

/// Renormalization threshold; `range` stays at or above this between symbols.
const TOP: u64 = 1 << 56;

pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u64::MAX, out: Vec::new() }
    }

    /// Narrows the interval to the slice `[cum, cum + freq) / total`.
    pub fn encode(&mut self, cum: u64, freq: u64, total: u64) {
        debug_assert!(freq > 0 && cum + freq <= total && total < TOP);
        let r = self.range / total;
        let (low, carry) = self.low.overflowing_add(r * cum);
        if carry {
            propagate_carry(&mut self.out);
        }
        self.low = low;
        self.range = r * freq;
        while self.range < TOP {
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    /// Terminates the stream. Emits the single byte identifying a multiple
    /// of 2^56 inside the final interval; trailing zero bytes are implicit
    /// (the decoder feeds zeros past the end of input).
    pub fn finish(mut self) -> Vec<u8> {
        let rem = self.low % TOP;
        let mut v = self.low - rem;
        if rem != 0 {
            // round up to the next multiple; still < low + range since range >= TOP
            let (vv, carry) = v.overflowing_add(TOP);
            if carry {
                propagate_carry(&mut self.out);
                v = 0;
            } else {
                v = vv;
            }
        }
        self.out.push((v >> 56) as u8);
        self.out
    }

    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

fn propagate_carry(out: &mut [u8]) {
    for b in out.iter_mut().rev() {
        if *b == 0xff {
            *b = 0;
        } else {
            *b += 1;
            return;
        }
    }
    // The concatenation (out, low) is an exact lower bound of the coding
    // interval, which never reaches 1.0; a carry past the front is impossible.
    debug_assert!(false, "range coder carry escaped the buffer");
}

pub struct RangeDecoder<'a> {
    code: u64,
    range: u64,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder { code: 0, range: u64::MAX, input, pos: 0 };
        for _ in 0..8 {
            d.code = (d.code << 8) | d.next_byte() as u64;
        }
        d
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Returns the frequency offset of the pending symbol in `[0, total)`.
    pub fn decode_offset(&mut self, total: u64) -> u64 {
        debug_assert!(total > 0 && total < TOP);
        let r = self.range / total;
        (self.code / r).min(total - 1)
    }

    /// Commits the symbol whose cumulative slice is `[cum, cum + freq)`.
    pub fn commit(&mut self, cum: u64, freq: u64, total: u64) {
        debug_assert!(freq > 0 && cum + freq <= total);
        let r = self.range / total;
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u64;
            self.range <<= 8;
        }
    }
}
