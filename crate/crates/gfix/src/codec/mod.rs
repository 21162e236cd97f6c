//! Quantization and entropy coding of modulation maps.
//!
//! Maps of equal rank are concatenated channel-major (layer order, then
//! row-major within each map), quantized with a scalar step using
//! round-half-away-from-zero, modeled with an empirical histogram PMF and
//! range-coded into the GFXB container.

mod bitstream;
mod pmf;
mod range;

pub use bitstream::{decode_groups, encode_groups, read_stream_file, write_stream_file, GFXB_MAGIC, GFXB_VERSION};
pub use pmf::EmpiricalPmf;
pub use range::{RangeDecoder, RangeEncoder};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlora::MloraAdapter;

/// Ordered set of r-by-r modulation maps sharing one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationGroup {
    rank: usize,
    layer_ids: Vec<String>,
    maps: Vec<Matrix>,
}

impl ModulationGroup {
    pub fn new(rank: usize, layer_ids: Vec<String>, maps: Vec<Matrix>) -> Result<ModulationGroup> {
        if rank == 0 {
            return Err(Error::InvalidShape("group rank must be positive".into()));
        }
        if layer_ids.len() != maps.len() {
            return Err(Error::InvalidShape("layer id / map count mismatch".into()));
        }
        for m in &maps {
            if m.shape() != (rank, rank) {
                return Err(Error::MixedRanks { expected: rank, found: m.rows().max(m.cols()) });
            }
        }
        Ok(ModulationGroup { rank, layer_ids, maps })
    }

    /// Concatenates the modulation maps of adapters sharing one rank,
    /// preserving order.
    pub fn from_adapters(adapters: &[&MloraAdapter]) -> Result<ModulationGroup> {
        let first = adapters.first().ok_or(Error::EmptySymbols)?;
        let rank = first.rank();
        for ad in adapters {
            if ad.rank() != rank {
                return Err(Error::MixedRanks { expected: rank, found: ad.rank() });
            }
        }
        ModulationGroup::new(
            rank,
            adapters.iter().map(|a| a.layer_id().to_string()).collect(),
            adapters.iter().map(|a| a.m_map().clone()).collect(),
        )
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn count(&self) -> usize {
        self.maps.len()
    }

    pub fn layer_ids(&self) -> &[String] {
        &self.layer_ids
    }

    /// Per-layer maps; the inverse of concatenation.
    pub fn maps(&self) -> &[Matrix] {
        &self.maps
    }

    /// Channel-major scan: all of map 0 row-major, then map 1, ...
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rank * self.rank * self.maps.len());
        for m in &self.maps {
            out.extend_from_slice(m.data());
        }
        out
    }
}

/// Integer symbols for one group at a fixed quantization step.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGroup {
    pub rank: usize,
    pub layer_ids: Vec<String>,
    pub step: f64,
    /// Channel-major scan order, length rank * rank * layer count.
    pub symbols: Vec<i32>,
}

impl QuantizedGroup {
    pub fn count(&self) -> usize {
        self.layer_ids.len()
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }
}

/// Rounds `value / step` half away from zero. `f64::round` implements
/// exactly that tie rule, which is fixed so that independently produced
/// streams stay bit-exact.
pub fn quantize(group: &ModulationGroup, step: f64) -> Result<QuantizedGroup> {
    check_step(step)?;
    let values = group.flatten();
    let mut symbols = Vec::with_capacity(values.len());
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput("quantize"));
        }
        let q = (v / step).round();
        if q.abs() > i32::MAX as f64 {
            return Err(Error::SymbolOverflow { value: v, step });
        }
        symbols.push(q as i32);
    }
    Ok(QuantizedGroup {
        rank: group.rank(),
        layer_ids: group.layer_ids().to_vec(),
        step,
        symbols,
    })
}

/// Rebuilds maps as `symbol * step`.
pub fn dequantize(q: &QuantizedGroup) -> Result<ModulationGroup> {
    let r = q.rank;
    let per_map = r * r;
    if q.symbols.len() != per_map * q.layer_ids.len() {
        return Err(Error::SymbolCountMismatch {
            expected: (per_map * q.layer_ids.len()) as u64,
            found: q.symbols.len() as u64,
        });
    }
    let maps = q
        .symbols
        .chunks_exact(per_map)
        .map(|chunk| {
            Matrix::from_vec(r, r, chunk.iter().map(|&s| s as f64 * q.step).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    ModulationGroup::new(r, q.layer_ids.clone(), maps)
}

/// Additive uniform noise `step * U(-0.5, 0.5)`: the training-time stand-in
/// for rounding on the rate path. Deterministic per seed so rate estimates
/// are reproducible.
pub fn noise_simulate(group: &ModulationGroup, step: f64, seed: u64) -> Result<ModulationGroup> {
    check_step(step)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let r = group.rank();
    let maps = group
        .maps()
        .iter()
        .map(|m| {
            let data = m.data().iter().map(|v| v + step * (rng.gen::<f64>() - 0.5)).collect();
            Matrix::from_vec(r, r, data)
        })
        .collect::<Result<Vec<_>>>()?;
    ModulationGroup::new(r, group.layer_ids().to_vec(), maps)
}

fn check_step(step: f64) -> Result<()> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::NonPositiveStep(step));
    }
    Ok(())
}

/// Splits adapters into rank groups (first-appearance order) and
/// concatenates each.
pub fn group_by_rank(adapters: &[MloraAdapter]) -> Result<Vec<ModulationGroup>> {
    let mut order: Vec<usize> = Vec::new();
    let mut buckets: Vec<Vec<&MloraAdapter>> = Vec::new();
    for ad in adapters {
        match order.iter().position(|&r| r == ad.rank()) {
            Some(i) => buckets[i].push(ad),
            None => {
                order.push(ad.rank());
                buckets.push(vec![ad]);
            }
        }
    }
    buckets.iter().map(|b| ModulationGroup::from_adapters(b)).collect()
}
