//! Rate-distortion curve comparison (BD-rate) and PSNR.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityOrientation {
    /// Larger quality values are better (PSNR-like).
    HigherBetter,
    /// Smaller quality values are better (distortion-like).
    LowerBetter,
}

/// A rate-quality curve. Rates must be strictly positive and distinct.
#[derive(Debug, Clone)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
    orientation: QualityOrientation,
}

impl RdCurve {
    pub fn new(points: Vec<(f64, f64)>, orientation: QualityOrientation) -> Result<RdCurve> {
        for &(rate, quality) in &points {
            if rate <= 0.0 || !rate.is_finite() {
                return Err(Error::InvalidConfig(format!("rates must be positive, got {rate}")));
            }
            if !quality.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite quality {quality}")));
            }
        }
        for (i, &(r, _)) in points.iter().enumerate() {
            if points[..i].iter().map(|&(r2, _)| r2).any(|r2| r2 == r) {
                return Err(Error::InvalidConfig(format!("duplicate rate {r}")));
            }
        }
        Ok(RdCurve { points, orientation })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn orientation(&self) -> QualityOrientation {
        self.orientation
    }

    /// (quality, log10 rate) pairs in the common higher-better orientation,
    /// sorted by quality.
    fn oriented_log_points(&self) -> Result<Vec<(f64, f64)>> {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|&(rate, quality)| {
                let q = match self.orientation {
                    QualityOrientation::HigherBetter => quality,
                    QualityOrientation::LowerBetter => -quality,
                };
                (q, rate.log10())
            })
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateQuality(w[0].0));
            }
        }
        Ok(pts)
    }
}

/// Fitted `log10(rate)` as a function of quality.
///
/// Exactly four points get the classical single interpolating cubic;
/// five or more use monotone piecewise cubic Hermite (Fritsch-Carlson
/// derivatives). Integration is the closed-form antiderivative either way.
#[derive(Debug, Clone)]
pub struct LogRateFit {
    xs: Vec<f64>,
    ys: Vec<f64>,
    derivs: Vec<f64>,
    /// Single-cubic coefficients around the mean quality for the 4-point case.
    global_cubic: Option<([f64; 4], f64)>,
}

impl LogRateFit {
    fn from_points(pts: &[(f64, f64)]) -> Result<LogRateFit> {
        if pts.len() < 4 {
            return Err(Error::TooFewPoints { need: 4, got: pts.len() });
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if pts.len() == 4 {
            let center = xs.iter().sum::<f64>() / 4.0;
            let coeffs = interpolating_cubic(&xs, &ys, center);
            return Ok(LogRateFit { xs, ys, derivs: Vec::new(), global_cubic: Some((coeffs, center)) });
        }
        let derivs = pchip_derivatives(&xs, &ys);
        Ok(LogRateFit { xs, ys, derivs, global_cubic: None })
    }

    /// Fits a curve's log-rate over its oriented quality axis.
    pub fn fit(curve: &RdCurve) -> Result<LogRateFit> {
        LogRateFit::from_points(&curve.oriented_log_points()?)
    }

    pub fn quality_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn eval(&self, q: f64) -> f64 {
        if let Some((c, center)) = &self.global_cubic {
            let u = q - center;
            return ((c[3] * u + c[2]) * u + c[1]) * u + c[0];
        }
        // clamp into the knot span; bd_rate only queries inside it
        let n = self.xs.len();
        let seg = match self.xs.binary_search_by(|x| x.partial_cmp(&q).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let h = self.xs[seg + 1] - self.xs[seg];
        let s = q - self.xs[seg];
        let (c2, c3) = hermite_coeffs(
            self.ys[seg],
            self.ys[seg + 1],
            self.derivs[seg],
            self.derivs[seg + 1],
            h,
        );
        ((c3 * s + c2) * s + self.derivs[seg]) * s + self.ys[seg]
    }

    /// Exact integral over `[lo, hi]` (inside the fitted quality range).
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if let Some((c, center)) = &self.global_cubic {
            let anti = |u: f64| (((c[3] / 4.0 * u + c[2] / 3.0) * u + c[1] / 2.0) * u + c[0]) * u;
            return anti(hi - center) - anti(lo - center);
        }
        let mut total = 0.0;
        for seg in 0..self.xs.len() - 1 {
            let a = self.xs[seg].max(lo);
            let b = self.xs[seg + 1].min(hi);
            if a >= b {
                continue;
            }
            let h = self.xs[seg + 1] - self.xs[seg];
            let (c2, c3) = hermite_coeffs(
                self.ys[seg],
                self.ys[seg + 1],
                self.derivs[seg],
                self.derivs[seg + 1],
                h,
            );
            let y0 = self.ys[seg];
            let m0 = self.derivs[seg];
            let anti = |s: f64| (((c3 / 4.0 * s + c2 / 3.0) * s + m0 / 2.0) * s + y0) * s;
            total += anti(b - self.xs[seg]) - anti(a - self.xs[seg]);
        }
        total
    }
}

/// Cubic Hermite segment written as
/// `y0 + m0 s + c2 s^2 + c3 s^3` on `s in [0, h]`.
fn hermite_coeffs(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> (f64, f64) {
    let delta = (y1 - y0) / h;
    let c2 = (3.0 * delta - 2.0 * m0 - m1) / h;
    let c3 = (m0 + m1 - 2.0 * delta) / (h * h);
    (c2, c3)
}

/// Fritsch-Carlson shape-preserving derivative estimates.
fn pchip_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Interpolating cubic through four points, coefficients around `center`
/// (Newton divided differences, expanded to the monomial basis).
fn interpolating_cubic(xs: &[f64], ys: &[f64], center: f64) -> [f64; 4] {
    let u: Vec<f64> = xs.iter().map(|x| x - center).collect();
    let mut dd = ys.to_vec();
    for level in 1..4 {
        for i in (level..4).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (u[i] - u[i - level]);
        }
    }
    // expand c0 + c1(u-u0) + c2(u-u0)(u-u1) + c3(u-u0)(u-u1)(u-u2)
    let mut coeffs = [0.0; 4];
    let mut basis = [1.0, 0.0, 0.0, 0.0]; // polynomial product accumulator
    for (k, &c) in dd.iter().enumerate() {
        for j in 0..4 {
            coeffs[j] += c * basis[j];
        }
        if k < 3 {
            // basis *= (x - u[k])
            let mut next = [0.0; 4];
            for j in 0..3 {
                next[j + 1] += basis[j];
                next[j] -= u[k] * basis[j];
            }
            next[3] -= u[k] * basis[3];
            basis = next;
        }
    }
    coeffs
}

/// Average log-rate difference between two fitted curves over their common
/// quality interval, mapped to a percentage. Negative means `test` spends
/// less rate than `anchor` at equal quality.
pub fn bd_rate(test: &RdCurve, anchor: &RdCurve) -> Result<f64> {
    let fit_test = LogRateFit::fit(test)?;
    let fit_anchor = LogRateFit::fit(anchor)?;
    let (t_lo, t_hi) = fit_test.quality_range();
    let (a_lo, a_hi) = fit_anchor.quality_range();
    let lo = t_lo.max(a_lo);
    let hi = t_hi.min(a_hi);
    if hi <= lo {
        return Err(Error::NonOverlappingQuality);
    }
    let avg = (fit_test.integral(lo, hi) - fit_anchor.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// Peak signal-to-noise ratio in decibels, with an explicit sentinel for
/// identical inputs instead of a float infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    /// Zero mean-squared error.
    Identical,
}

impl Psnr {
    pub fn as_db(&self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(*v),
            Psnr::Identical => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4}"),
            Psnr::Identical => write!(f, "inf"),
        }
    }
}

pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<Psnr> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op: "psnr",
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    if peak <= 0.0 || !peak.is_finite() {
        return Err(Error::InvalidConfig(format!("peak must be positive, got {peak}")));
    }
    let av = a.to_f64_vec();
    let bv = b.to_f64_vec();
    let mse: f64 = av.iter().zip(&bv).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / av.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
}
