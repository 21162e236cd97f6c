//! Compression of low-rank weight-update adapters.
//!
//! A base weight is factored once with a truncated SVD; the frozen factors
//! sandwich a small trainable modulation map which is the only transmitted
//! payload. This crate fits those maps in closed form, picks a quantization
//! step by rate-distortion search, entropy-codes the symbols with an
//! empirical histogram model into the GFXB container, and ships the analysis
//! tooling around that pipeline: kernel-MMD noise-level search, BD-rate and
//! PSNR evaluation, and the GFXT tensor archive format.
//!
//! The `gfix` binary exposes the whole flow as subcommands; see the README.

pub mod alignment;
pub mod codec;
pub mod error;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod mlora;
pub mod pipeline;
pub mod rd_opt;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use linalg::{svd, Matrix, SvdFactors};
pub use manifest::{LayerSelection, Manifest};
pub use mlora::{init_adapter, size_report, MloraAdapter, SizeReport};
pub use tensor::{Dtype, Tensor, TensorArchive};

/// Default RNG seed for all seeded operations; override per command.
pub const DEFAULT_SEED: u64 = 0x6766_6978; // "gfix"
