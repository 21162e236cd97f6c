//! High-level encode/decode/analyze flows shared by the CLI and the C API.

use rayon::prelude::*;
use serde::Serialize;

use crate::codec;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::manifest::Manifest;
use crate::mlora::{self, MloraAdapter};
use crate::rd_opt::{self, RdConfig, RdResult};
use crate::tensor::{Dtype, Tensor, TensorArchive};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Builds adapters for every manifest layer against the base archive.
pub fn init_adapters(base: &TensorArchive, manifest: &Manifest) -> Result<Vec<MloraAdapter>> {
    manifest.validate_against(base)?;
    manifest
        .layers
        .par_iter()
        .map(|sel| {
            let w0 = base.require(&sel.name)?.reshape_2d(sel.split_axis)?;
            mlora::init_adapter(&sel.name, &w0, sel.rank)
        })
        .collect()
}

/// `gfix decompose`: adapters archive from a base archive and manifest.
pub fn decompose(base: &TensorArchive, manifest: &Manifest) -> Result<TensorArchive> {
    let adapters = init_adapters(base, manifest)?;
    let mut archive = mlora::adapters_to_archive(&adapters)?;
    archive.set_metadata("gfix.version", VERSION);
    Ok(archive)
}

/// Per-layer weight deltas `target - base` in the 2-D view.
pub fn layer_deltas(
    base: &TensorArchive,
    target: &TensorArchive,
    manifest: &Manifest,
) -> Result<Vec<Matrix>> {
    manifest.validate_against(base)?;
    manifest.validate_against(target)?;
    manifest
        .layers
        .iter()
        .map(|sel| {
            let w0 = base.require(&sel.name)?.reshape_2d(sel.split_axis)?;
            let wt = target.require(&sel.name)?.reshape_2d(sel.split_axis)?;
            wt.sub(&w0).map_err(|_| Error::DimensionMismatch {
                op: "layer_deltas",
                detail: format!(
                    "layer {:?}: base {:?} vs target {:?}",
                    sel.name,
                    w0.shape(),
                    wt.shape()
                ),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub version: String,
    pub lambda: f64,
    pub chosen_step: f64,
    pub rate_bits: f64,
    pub distortion: f64,
    pub objective: f64,
    pub refine_moves: usize,
    pub stream_bytes: usize,
    pub layers: Vec<FitLayerReport>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitLayerReport {
    pub name: String,
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
}

pub struct FitOutcome {
    pub stream: Vec<u8>,
    pub report: FitReport,
    pub result: RdResult,
}

/// `gfix fit`: closed-form fit + RD step search + entropy coding.
pub fn fit(
    base: &TensorArchive,
    target: &TensorArchive,
    manifest: &Manifest,
    lambda: f64,
    grid_override: Option<&[f64]>,
    refine: bool,
    rate_path: rd_opt::RatePath,
) -> Result<FitOutcome> {
    let adapters = init_adapters(base, manifest)?;
    if adapters.is_empty() {
        return Err(Error::InvalidConfig("manifest selects zero layers".into()));
    }
    let deltas = layer_deltas(base, target, manifest)?;
    let grid = resolve_grid(&adapters, &deltas, manifest, grid_override)?;
    let mut cfg = RdConfig::new(lambda, grid);
    cfg.refine = refine || manifest.refine.unwrap_or(false);
    if let Some(p) = manifest.max_refine_passes {
        cfg.max_refine_passes = p;
    }
    cfg.rate_path = rate_path;
    let result = rd_opt::rd_fit(&adapters, &deltas, &cfg)?;
    let stream = codec::encode_groups(&result.groups)?;
    let report = FitReport {
        version: VERSION.to_string(),
        lambda,
        chosen_step: result.chosen_step,
        rate_bits: result.rate_bits,
        distortion: result.distortion,
        objective: result.objective,
        refine_moves: result.refine_moves,
        stream_bytes: stream.len(),
        layers: adapters
            .iter()
            .map(|a| FitLayerReport {
                name: a.layer_id().to_string(),
                rank: a.rank(),
                rows: a.base_shape().0,
                cols: a.base_shape().1,
            })
            .collect(),
    };
    Ok(FitOutcome { stream, report, result })
}

fn resolve_grid(
    adapters: &[MloraAdapter],
    deltas: &[Matrix],
    manifest: &Manifest,
    grid_override: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if let Some(g) = grid_override {
        return Ok(g.to_vec());
    }
    if let Some(g) = &manifest.step_grid {
        return Ok(g.clone());
    }
    Ok(rd_opt::default_step_grid(rd_opt::peak_modulation(adapters, deltas)?))
}

/// `gfix rdcurve`: one fit per lambda.
pub fn rd_curve(
    base: &TensorArchive,
    target: &TensorArchive,
    manifest: &Manifest,
    lambdas: &[f64],
    grid_override: Option<&[f64]>,
    refine: bool,
) -> Result<Vec<RdResult>> {
    let adapters = init_adapters(base, manifest)?;
    if adapters.is_empty() {
        return Err(Error::InvalidConfig("manifest selects zero layers".into()));
    }
    let deltas = layer_deltas(base, target, manifest)?;
    let grid = resolve_grid(&adapters, &deltas, manifest, grid_override)?;
    let mut cfg = RdConfig::new(1.0, grid);
    cfg.refine = refine || manifest.refine.unwrap_or(false);
    if let Some(p) = manifest.max_refine_passes {
        cfg.max_refine_passes = p;
    }
    rd_opt::rd_curve(&adapters, &deltas, lambdas, &cfg)
}

/// `gfix decode`: dequantized modulation maps as `<layer>.M` tensors.
pub fn decode_stream(stream: &[u8]) -> Result<TensorArchive> {
    let groups = codec::decode_groups(stream)?;
    let mut archive = TensorArchive::new();
    archive.set_metadata("gfix.version", VERSION);
    for q in &groups {
        let deq = codec::dequantize(q)?;
        for (id, map) in deq.layer_ids().iter().zip(deq.maps()) {
            archive.insert(Tensor::from_matrix(format!("{id}.M"), map, Dtype::F64))?;
            archive.set_metadata(format!("{id}.rank"), q.rank.to_string());
            archive.set_metadata(format!("{id}.step"), q.step.to_string());
        }
    }
    Ok(archive)
}

/// `gfix apply`: reconstructed weights `base + A * M * B` per manifest layer.
/// Factors are recomputed from the base archive (deterministic), the decoded
/// map supplies M. Output tensors keep the base shape and dtype.
pub fn apply(
    base: &TensorArchive,
    maps: &TensorArchive,
    manifest: &Manifest,
) -> Result<TensorArchive> {
    manifest.validate_against(base)?;
    let mut out = TensorArchive::new();
    out.set_metadata("gfix.version", VERSION);
    let recon: Vec<Tensor> = manifest
        .layers
        .par_iter()
        .map(|sel| {
            let base_tensor = base.require(&sel.name)?;
            let w0 = base_tensor.reshape_2d(sel.split_axis)?;
            let mut adapter = mlora::init_adapter(&sel.name, &w0, sel.rank)?;
            let m = maps.require(&format!("{}.M", sel.name))?.reshape_2d(1)?;
            adapter.set_m_map(m)?;
            let w = adapter.apply_to(&w0)?;
            Tensor::from_matrix_shaped(&sel.name, &w, base_tensor.shape().to_vec(), base_tensor.dtype())
        })
        .collect::<Result<_>>()?;
    for t in recon {
        out.insert(t)?;
    }
    Ok(out)
}

/// Two-column CSV rows (rate in bits, distortion) for a lambda sweep,
/// consumable by `bd_rate` with the lower-better orientation.
pub fn curve_csv_rows(results: &[RdResult]) -> Vec<(f64, f64)> {
    results.iter().map(|r| (r.rate_bits, r.distortion)).collect()
}
