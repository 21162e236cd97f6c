//! Noise-artifact alignment analysis.
//!
//! Measures the Gaussian-kernel MMD between a degraded sample set and a
//! reference set pushed through forward diffusion at candidate noise levels,
//! then picks the level minimizing the discrepancy. The scan realizes the
//! adaptive-stepsize idea as an explicit discrete search.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Forward-diffusion variance schedule: betas and their running
/// alpha-bar products.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear beta ramp. The usual convention: T = 1000, beta from 1e-4
    /// to 0.02.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
        if steps == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one step".into()));
        }
        if !beta_start.is_finite()
            || !beta_end.is_finite()
            || beta_start <= 0.0
            || beta_end >= 1.0
            || beta_start > beta_end
        {
            return Err(Error::InvalidConfig(format!(
                "betas must satisfy 0 < {beta_start} <= {beta_end} < 1"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for &b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn default_linear() -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 0.02).expect("default schedule parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("step {t} outside schedule of length {}", self.len())))
    }
}

/// A set of equal-dimension vectors (flattened latent-like samples).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    label: String,
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<SampleSet> {
        if dim == 0 {
            return Err(Error::InvalidShape("sample dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidShape(format!(
                "data length {} is not a positive multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("sample set"));
        }
        Ok(SampleSet { label: label.into(), dim, data })
    }

    /// Rows of a rank >= 2 tensor become samples; trailing axes flatten into
    /// the feature dimension.
    pub fn from_tensor(t: &Tensor) -> Result<SampleSet> {
        let m = t.reshape_2d(1)?;
        SampleSet::new(t.name(), m.cols(), m.into_data())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn rng_for(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[16] = 0x41; // domain tag for alignment noise draws
    ChaCha20Rng::from_seed(key)
}

/// Forward diffusion: `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps` with standard
/// normal noise, deterministic per seed.
///
/// One seed maps to one underlying noise draw regardless of `t`, so scanning
/// a range of levels with a fixed seed moves the samples along a smooth path
/// instead of resampling at every level.
pub fn forward_noise(
    x0: &SampleSet,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<SampleSet> {
    let abar = schedule.alpha_bar(t)?;
    let signal = abar.sqrt();
    let noise = (1.0 - abar).sqrt();
    let mut rng = rng_for(seed);
    let data = x0
        .data
        .iter()
        .map(|&x| {
            let eps: f64 = rng.sample(StandardNormal);
            signal * x + noise * eps
        })
        .collect();
    SampleSet::new(format!("{}+t{}", x0.label, t), x0.dim, data)
}

/// Median pairwise distance over the pooled samples of both sets; falls back
/// to 1.0 when every point coincides.
pub fn median_heuristic_bandwidth(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            op: "median_heuristic_bandwidth",
            detail: format!("{} vs {}", x.dim(), y.dim()),
        });
    }
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(x.len() + y.len());
    pooled.extend((0..x.len()).map(|i| x.sample(i)));
    pooled.extend((0..y.len()).map(|i| y.sample(i)));
    let n = pooled.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Biased (V-statistic) squared MMD with the RBF kernel
/// `k(a, b) = exp(-||a - b||^2 / (2 bw^2))`.
///
/// Non-negative by construction and exactly symmetric in its arguments: the
/// pair is put in a canonical order before summation so both call orders run
/// the identical float program.
pub fn mmd2(x: &SampleSet, y: &SampleSet, bandwidth: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            op: "mmd2",
            detail: format!("{} vs {}", x.dim(), y.dim()),
        });
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidConfig("mmd2 needs at least 2 samples per set".into()));
    }
    if bandwidth <= 0.0 || !bandwidth.is_finite() {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let (a, b) = canonical_pair(x, y);
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let kxx = mean_kernel(a, a, gamma);
    let kyy = mean_kernel(b, b, gamma);
    let kxy = mean_kernel(a, b, gamma);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

fn canonical_pair<'a>(x: &'a SampleSet, y: &'a SampleSet) -> (&'a SampleSet, &'a SampleSet) {
    let ord = x
        .len()
        .cmp(&y.len())
        .then_with(|| {
            for (a, b) in x.data.iter().zip(&y.data) {
                let c = a.total_cmp(b);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        });
    if ord == std::cmp::Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    }
}

/// Mean of the kernel matrix between two sets. Parallel over rows but
/// deterministic: each row sum is sequential and the row sums are reduced
/// in index order.
fn mean_kernel(x: &SampleSet, y: &SampleSet, gamma: f64) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let xi = x.sample(i);
            let mut acc = 0.0;
            for j in 0..y.len() {
                acc += (-gamma * sq_dist(xi, y.sample(j))).exp();
            }
            acc
        })
        .collect();
    rows.iter().sum::<f64>() / (x.len() as f64 * y.len() as f64)
}

/// Unbiased (U-statistic) estimator: diagonal terms removed. Can be
/// negative; exposed for experiments, the scan uses the biased form.
pub fn mmd2_unbiased(x: &SampleSet, y: &SampleSet, bandwidth: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            op: "mmd2_unbiased",
            detail: format!("{} vs {}", x.dim(), y.dim()),
        });
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidConfig("mmd2 needs at least 2 samples per set".into()));
    }
    if bandwidth <= 0.0 || !bandwidth.is_finite() {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let n = x.len() as f64;
    let m = y.len() as f64;
    let kxx = mean_kernel(x, x, gamma) * n * n;
    let kyy = mean_kernel(y, y, gamma) * m * m;
    let kxy = mean_kernel(x, y, gamma);
    // subtract the n (resp. m) diagonal ones
    Ok((kxx - n) / (n * (n - 1.0)) + (kyy - m) / (m * (m - 1.0)) - 2.0 * kxy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub t: usize,
    pub mmd2: f64,
    /// Raw value divided by the maximum over the scanned list (peak = 1).
    pub normalized: f64,
}

/// For each candidate step, the MMD between the degraded set and the
/// reference pushed to that noise level. Bandwidth defaults to the median
/// heuristic over the two input sets when not given.
pub fn mmd_scan(
    degraded: &SampleSet,
    reference: &SampleSet,
    schedule: &NoiseSchedule,
    t_list: &[usize],
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    if t_list.is_empty() {
        return Err(Error::InvalidConfig("empty noise-level list".into()));
    }
    let bw = match bandwidth {
        Some(b) => b,
        None => median_heuristic_bandwidth(degraded, reference)?,
    };
    let raw: Vec<(usize, f64)> = t_list
        .par_iter()
        .map(|&t| {
            let noisy = forward_noise(reference, t, schedule, seed)?;
            Ok((t, mmd2(degraded, &noisy, bw)?))
        })
        .collect::<Result<_>>()?;
    let max = raw.iter().map(|&(_, v)| v).fold(0.0_f64, f64::max);
    Ok(raw
        .into_iter()
        .map(|(t, v)| ScanPoint { t, mmd2: v, normalized: if max > 0.0 { v / max } else { 0.0 } })
        .collect())
}

/// The noise level minimizing the scan; ties break toward the smaller step.
pub fn select_stepsize(
    degraded: &SampleSet,
    reference: &SampleSet,
    schedule: &NoiseSchedule,
    t_list: &[usize],
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<usize> {
    let scan = mmd_scan(degraded, reference, schedule, t_list, bandwidth, seed)?;
    let mut best = &scan[0];
    for p in &scan[1..] {
        if p.mmd2 < best.mmd2 || (p.mmd2 == best.mmd2 && p.t < best.t) {
            best = p;
        }
    }
    Ok(best.t)
}
