//! `gfix` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gfix::alignment::{self, NoiseSchedule, SampleSet};
use gfix::error::{Error, ErrorClass};
use gfix::manifest::Manifest;
use gfix::metrics::{self, QualityOrientation, RdCurve};
use gfix::pipeline;
use gfix::rd_opt::{RatePath, DEFAULT_LAMBDAS};
use gfix::tensor::TensorArchive;
use gfix::{Result, DEFAULT_SEED};

const VERSION: &str = env!("CARGO_PKG_VERSION");

// Exit codes: 0 success, 2 usage (clap's default), then per error class.
const EXIT_FORMAT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "gfix", version, about = "Low-rank adapter compression toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print names, dtypes and shapes of a GFXT archive
    Inspect { path: PathBuf },
    /// Build frozen SVD adapters for the selected layers
    Decompose {
        base: PathBuf,
        /// Manifest JSON with layer selections
        #[arg(long = "layers")]
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit modulation maps to target weights and encode a GFXB stream
    Fit {
        base: PathBuf,
        target: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Comma-separated step grid override
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Greedy per-symbol refinement after the grid search
        #[arg(long)]
        refine: bool,
        /// Estimate rate on the uniform-noise path with this seed instead of
        /// hard rounding
        #[arg(long)]
        noise_rate_seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write a JSON report
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Quantize modulation-map tensors at a fixed step and encode them
    Encode {
        maps: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a GFXB stream into dequantized modulation maps
    Decode {
        stream: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct weights: base + A * M * B per manifest layer
    Apply {
        base: PathBuf,
        maps: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sweep lambdas and emit a rate-distortion curve as CSV
    Rdcurve {
        base: PathBuf,
        target: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated lambda list
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        refine: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// BD-rate between two rate-quality CSV curves, percent to 2 decimals
    Bdrate {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long, value_enum, default_value_t = Orientation::Higher)]
        quality_orientation: Orientation,
    },
    /// MMD between a degraded set and noise-perturbed references
    MmdScan {
        #[arg(long)]
        degraded: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Noise levels as start:end:stride (end exclusive)
        #[arg(long = "t")]
        t_spec: String,
        /// Kernel bandwidth; median heuristic when omitted
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Tensor name inside each archive (defaults to the only tensor)
        #[arg(long)]
        tensor: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Orientation {
    Higher,
    Lower,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gfix: error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Format => EXIT_FORMAT,
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Io => EXIT_IO,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Inspect { path } => inspect(&path),
        Cmd::Decompose { base, manifest, output } => {
            let base = TensorArchive::read_file(base)?;
            let manifest = Manifest::from_file(manifest)?;
            if manifest.layers.is_empty() {
                eprintln!("gfix: warning: manifest selects zero layers");
            }
            let adapters = pipeline::decompose(&base, &manifest)?;
            write_atomic(&output, &adapters.to_bytes()?)
        }
        Cmd::Fit { base, target, manifest, lambda, grid, refine, noise_rate_seed, output, report } => {
            let base = TensorArchive::read_file(base)?;
            let target = TensorArchive::read_file(target)?;
            let manifest = Manifest::from_file(manifest)?;
            let rate_path = match noise_rate_seed {
                Some(seed) => RatePath::NoiseSimulated { seed },
                None => RatePath::Rounding,
            };
            let outcome =
                pipeline::fit(&base, &target, &manifest, lambda, grid.as_deref(), refine, rate_path)?;
            write_atomic(&output, &outcome.stream)?;
            let json = serde_json::to_string_pretty(&outcome.report)?;
            match report {
                Some(path) => write_atomic(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Cmd::Encode { maps, step, output } => {
            let archive = TensorArchive::read_file(maps)?;
            let stream = encode_maps(&archive, step)?;
            write_atomic(&output, &stream)
        }
        Cmd::Decode { stream, output } => {
            let bytes = fs::read(stream)?;
            let maps = pipeline::decode_stream(&bytes)?;
            write_atomic(&output, &maps.to_bytes()?)
        }
        Cmd::Apply { base, maps, manifest, output } => {
            let base = TensorArchive::read_file(base)?;
            let maps = TensorArchive::read_file(maps)?;
            let manifest = Manifest::from_file(manifest)?;
            let recon = pipeline::apply(&base, &maps, &manifest)?;
            write_atomic(&output, &recon.to_bytes()?)
        }
        Cmd::Rdcurve { base, target, manifest, lambdas, grid, refine, output } => {
            let base = TensorArchive::read_file(base)?;
            let target = TensorArchive::read_file(target)?;
            let manifest = Manifest::from_file(manifest)?;
            let lambdas = lambdas
                .or_else(|| manifest.lambdas.clone())
                .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
            let results =
                pipeline::rd_curve(&base, &target, &manifest, &lambdas, grid.as_deref(), refine)?;
            let mut csv = String::new();
            writeln!(csv, "# gfix {VERSION}").unwrap();
            writeln!(csv, "# rate_bits,distortion").unwrap();
            for (rate, dist) in pipeline::curve_csv_rows(&results) {
                writeln!(csv, "{rate},{dist}").unwrap();
            }
            write_atomic(&output, csv.as_bytes())
        }
        Cmd::Bdrate { test, anchor, quality_orientation } => {
            let orientation = match quality_orientation {
                Orientation::Higher => QualityOrientation::HigherBetter,
                Orientation::Lower => QualityOrientation::LowerBetter,
            };
            let test = read_curve_csv(&test, orientation)?;
            let anchor = read_curve_csv(&anchor, orientation)?;
            let bd = metrics::bd_rate(&test, &anchor)?;
            println!("{bd:.2}");
            Ok(())
        }
        Cmd::MmdScan { degraded, reference, t_spec, bandwidth, seed, tensor, output } => {
            let degraded = sample_set(&degraded, tensor.as_deref())?;
            let reference = sample_set(&reference, tensor.as_deref())?;
            let schedule = NoiseSchedule::default_linear();
            let t_list = parse_t_spec(&t_spec, schedule.len())?;
            let scan =
                alignment::mmd_scan(&degraded, &reference, &schedule, &t_list, bandwidth, seed)?;
            let mut csv = String::new();
            writeln!(csv, "# gfix {VERSION}").unwrap();
            writeln!(csv, "# t,mmd2,normalized").unwrap();
            for p in &scan {
                writeln!(csv, "{},{},{}", p.t, p.mmd2, p.normalized).unwrap();
            }
            write_atomic(&output, csv.as_bytes())
        }
    }
}

fn inspect(path: &Path) -> Result<()> {
    let archive = TensorArchive::read_file(path)?;
    println!("# gfix {VERSION}");
    println!("tensors: {}", archive.len());
    for t in archive.tensors() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        println!("{} {} [{}]", t.name(), t.dtype(), dims.join(", "));
    }
    println!("metadata: {}", archive.metadata().len());
    for (k, v) in archive.metadata() {
        println!("{k} = {v}");
    }
    Ok(())
}

/// Groups `<name>.M`-style square map tensors by rank and encodes them at a
/// fixed step. Tensor entry order decides group order.
fn encode_maps(archive: &TensorArchive, step: f64) -> Result<Vec<u8>> {
    use gfix::codec::{self, ModulationGroup};
    use gfix::linalg::Matrix;

    let mut ranks: Vec<usize> = Vec::new();
    let mut ids: Vec<Vec<String>> = Vec::new();
    let mut maps: Vec<Vec<Matrix>> = Vec::new();
    for t in archive.tensors() {
        let id = t.name().strip_suffix(".M").unwrap_or(t.name()).to_string();
        let m = t.reshape_2d(1)?;
        if m.rows() != m.cols() {
            return Err(Error::InvalidShape(format!(
                "map tensor {:?} is {}x{}, expected square",
                t.name(),
                m.rows(),
                m.cols()
            )));
        }
        match ranks.iter().position(|&r| r == m.rows()) {
            Some(i) => {
                ids[i].push(id);
                maps[i].push(m);
            }
            None => {
                ranks.push(m.rows());
                ids.push(vec![id]);
                maps.push(vec![m]);
            }
        }
    }
    let mut groups = Vec::new();
    for ((rank, ids), maps) in ranks.into_iter().zip(ids).zip(maps) {
        let g = ModulationGroup::new(rank, ids, maps)?;
        groups.push(codec::quantize(&g, step)?);
    }
    codec::encode_groups(&groups)
}

fn sample_set(path: &Path, tensor: Option<&str>) -> Result<SampleSet> {
    let archive = TensorArchive::read_file(path)?;
    let t = match tensor {
        Some(name) => archive.require(name)?,
        None => {
            if archive.len() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "{} holds {} tensors; pick one with --tensor",
                    path.display(),
                    archive.len()
                )));
            }
            archive.tensors().next().unwrap()
        }
    };
    SampleSet::from_tensor(t)
}

fn parse_t_spec(spec: &str, schedule_len: usize) -> Result<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidConfig(format!("bad --t spec {spec:?}, expected start:end:stride"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: usize = parts[0].parse().map_err(|_| bad())?;
    let end: usize = parts[1].parse().map_err(|_| bad())?;
    let stride: usize = parts[2].parse().map_err(|_| bad())?;
    if stride == 0 || end <= start {
        return Err(bad());
    }
    if end > schedule_len {
        return Err(Error::InvalidConfig(format!(
            "--t end {end} exceeds schedule length {schedule_len}"
        )));
    }
    Ok((start..end).step_by(stride).collect())
}

/// Two-column CSV (rate, quality); '#' lines are comments.
fn read_curve_csv(path: &Path, orientation: QualityOrientation) -> Result<RdCurve> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected 'rate,quality'",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let rate = parse(fields.next())?;
        let quality = parse(fields.next())?;
        points.push((rate, quality));
    }
    RdCurve::new(points, orientation)
}

/// Writes through a temp file + rename so failures leave no partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
