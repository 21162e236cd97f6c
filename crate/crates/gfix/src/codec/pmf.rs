//! Empirical non-parametric entropy model: probabilities come straight from
//! histogram counts over the symbols being coded.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Scale target for the coder's fixed-point frequencies.
const FREQ_SCALE: u64 = 1 << 16;

/// Histogram-backed probability table over a sorted symbol alphabet.
///
/// Built two-pass over the exact symbols being coded, so every coded symbol
/// has positive probability and no escape symbol is needed. The optional
/// Laplace-smoothed constructor adds one to every count for cross-group
/// reuse, where the coded stream may contain symbols unseen at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    alphabet: Vec<i32>,
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalPmf {
    pub fn build(symbols: &[i32]) -> Result<EmpiricalPmf> {
        if symbols.is_empty() {
            return Err(Error::EmptySymbols);
        }
        let mut hist = BTreeMap::new();
        for &s in symbols {
            *hist.entry(s).or_insert(0u64) += 1;
        }
        let alphabet: Vec<i32> = hist.keys().copied().collect();
        let counts: Vec<u64> = hist.values().copied().collect();
        let total = counts.iter().sum();
        Ok(EmpiricalPmf { alphabet, counts, total })
    }

    /// Laplace smoothing: every symbol of `symbols` plus every symbol of
    /// `alphabet_hint` gets +1 on top of its observed count.
    pub fn build_smoothed(symbols: &[i32], alphabet_hint: &[i32]) -> Result<EmpiricalPmf> {
        if symbols.is_empty() && alphabet_hint.is_empty() {
            return Err(Error::EmptySymbols);
        }
        let mut hist = BTreeMap::new();
        for &s in alphabet_hint {
            hist.entry(s).or_insert(0u64);
        }
        for &s in symbols {
            *hist.entry(s).or_insert(0) += 1;
        }
        let alphabet: Vec<i32> = hist.keys().copied().collect();
        let counts: Vec<u64> = hist.values().map(|&c| c + 1).collect();
        let total = counts.iter().sum();
        Ok(EmpiricalPmf { alphabet, counts, total })
    }

    /// Reassembles a table from serialized parts (bitstream decode path).
    pub fn from_parts(alphabet: Vec<i32>, counts: Vec<u64>) -> Result<EmpiricalPmf> {
        if alphabet.is_empty() || alphabet.len() != counts.len() {
            return Err(Error::InvalidPmf("empty or mismatched table".into()));
        }
        if !alphabet.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidPmf("alphabet not strictly ascending".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidPmf("zero count".into()));
        }
        let total = counts.iter().sum();
        Ok(EmpiricalPmf { alphabet, counts, total })
    }

    pub fn alphabet(&self) -> &[i32] {
        &self.alphabet
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn index_of(&self, symbol: i32) -> Option<usize> {
        self.alphabet.binary_search(&symbol).ok()
    }

    pub fn prob(&self, symbol: i32) -> Option<f64> {
        self.index_of(symbol).map(|i| self.counts[i] as f64 / self.total as f64)
    }

    /// Total code length in bits under this model: sum of -log2(p(s)).
    /// When the table was built from the same symbols this equals
    /// N times the empirical entropy.
    pub fn rate_estimate(&self, symbols: &[i32]) -> Result<f64> {
        if symbols.is_empty() {
            return Err(Error::EmptySymbols);
        }
        // Accumulate per distinct symbol: rate = N log2 N - sum c_s log2 c_s.
        let mut hist = BTreeMap::new();
        for &s in symbols {
            *hist.entry(s).or_insert(0u64) += 1;
        }
        let mut bits = 0.0;
        for (s, n_s) in hist {
            let i = self.index_of(s).ok_or(Error::UnknownSymbol(s))?;
            let p = self.counts[i] as f64 / self.total as f64;
            bits += n_s as f64 * -p.log2();
        }
        Ok(bits)
    }

    /// 16-bit fixed-point coder frequencies: proportional to counts, floored
    /// at 1 so every alphabet entry stays codable. The coder normalizes by
    /// the exact sum of these, so probability mass is 1 in fixed point by
    /// construction.
    pub fn coder_freqs(&self) -> Vec<u16> {
        self.counts
            .iter()
            .map(|&c| {
                let scaled = (c as u128 * FREQ_SCALE as u128 + (self.total / 2) as u128)
                    / self.total as u128;
                scaled.clamp(1, u16::MAX as u128) as u16
            })
            .collect()
    }
}
