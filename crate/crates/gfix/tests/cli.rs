//! Command-line surface tests: happy paths against library-computed golden
//! values, error exits, and the no-partial-output discipline.

use std::path::PathBuf;
use std::process::{Command, Output};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use gfix::alignment::{self, NoiseSchedule, SampleSet};
use gfix::linalg::Matrix;
use gfix::manifest::{LayerSelection, Manifest};
use gfix::tensor::{Tensor, TensorArchive};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gfix")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn gfix")
}

fn run_paths(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(bin());
    for a in args {
        cmd.arg(a.as_ref());
    }
    cmd.output().expect("spawn gfix")
}

struct Fixture {
    dir: tempfile::TempDir,
    base: TensorArchive,
    manifest: Manifest,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut base = TensorArchive::new();
    let mut target = TensorArchive::new();
    let mut layers = Vec::new();
    for (i, (shape, split, rank)) in
        [(vec![6usize, 4], 1usize, 2usize), (vec![3, 2, 4], 1, 3), (vec![5, 5], 1, 2)]
            .into_iter()
            .enumerate()
    {
        let name = format!("layer{i}");
        let numel: usize = shape.iter().product();
        let w0: Vec<f64> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wt: Vec<f64> = w0.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
        base.insert(Tensor::from_f64(&name, shape.clone(), w0).unwrap()).unwrap();
        target.insert(Tensor::from_f64(&name, shape, wt).unwrap()).unwrap();
        layers.push(LayerSelection { name, split_axis: split, rank });
    }
    let manifest = Manifest { layers, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    base.write_file(dir.path().join("base.gfxt")).unwrap();
    target.write_file(dir.path().join("target.gfxt")).unwrap();
    std::fs::write(dir.path().join("manifest.json"), manifest.to_json().unwrap()).unwrap();
    Fixture { dir, base, manifest }
}

#[test]
fn inspect_prints_names_shapes_dtypes() {
    let mut archive = TensorArchive::new();
    archive
        .insert(Tensor::from_f32("weights.conv", vec![4, 2, 2], vec![0.5; 16]).unwrap())
        .unwrap();
    archive.insert(Tensor::from_f64("bias", vec![7], vec![0.0; 7]).unwrap()).unwrap();
    archive.set_metadata("note", "fixture");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.gfxt");
    archive.write_file(&path).unwrap();

    let out = run_paths(&[&"inspect", &path]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let expect = format!(
        "# gfix {}\ntensors: 2\nweights.conv f32 [4, 2, 2]\nbias f64 [7]\nmetadata: 1\nnote = fixture\n",
        env!("CARGO_PKG_VERSION")
    );
    assert_eq!(text, expect);
}

#[test]
fn inspect_rejects_non_archive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.bin");
    std::fs::write(&path, b"GFXB not a tensor archive").unwrap();
    let out = run_paths(&[&"inspect", &path]);
    assert_eq!(out.status.code(), Some(3), "format errors exit 3");
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["fit", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decompose_identity_layer_yields_identity_factors() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = TensorArchive::new();
    let n = 4;
    let eye: Vec<f64> = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
    base.insert(Tensor::from_f64("eye", vec![n, n], eye).unwrap()).unwrap();
    base.write_file(dir.path().join("base.gfxt")).unwrap();
    let manifest = Manifest {
        layers: vec![LayerSelection { name: "eye".into(), split_axis: 1, rank: n }],
        ..Default::default()
    };
    std::fs::write(dir.path().join("m.json"), manifest.to_json().unwrap()).unwrap();

    let out = run_paths(&[
        &"decompose",
        &dir.path().join("base.gfxt"),
        &"--layers",
        &dir.path().join("m.json"),
        &"-o",
        &dir.path().join("adapters.gfxt"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let adapters = TensorArchive::read_file(dir.path().join("adapters.gfxt")).unwrap();
    let a = adapters.require("eye.A").unwrap().reshape_2d(1).unwrap();
    let b = adapters.require("eye.B").unwrap().reshape_2d(1).unwrap();
    let m = adapters.require("eye.M").unwrap().reshape_2d(1).unwrap();
    assert_eq!(a, Matrix::identity(n));
    assert_eq!(b, Matrix::identity(n));
    assert_eq!(m, Matrix::zeros(n, n));
}

#[test]
fn decompose_zero_layers_warns_and_writes_empty_archive() {
    let fx = fixture(11);
    let empty = Manifest::default();
    std::fs::write(fx.path("empty.json"), empty.to_json().unwrap()).unwrap();
    let out = run_paths(&[
        &"decompose",
        &fx.path("base.gfxt"),
        &"--layers",
        &fx.path("empty.json"),
        &"-o",
        &fx.path("adapters.gfxt"),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero layers"));
    let adapters = TensorArchive::read_file(fx.path("adapters.gfxt")).unwrap();
    assert_eq!(adapters.len(), 0);
}

#[test]
fn fit_report_matches_library_numbers() {
    let fx = fixture(12);
    let out = run_paths(&[
        &"fit",
        &fx.path("base.gfxt"),
        &fx.path("target.gfxt"),
        &"--manifest",
        &fx.path("manifest.json"),
        &"--lambda",
        &"1000",
        &"-o",
        &fx.path("stream.gfxb"),
        &"--report",
        &fx.path("report.json"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let target = TensorArchive::read_file(fx.path("target.gfxt")).unwrap();
    let outcome = gfix::pipeline::fit(
        &fx.base,
        &target,
        &fx.manifest,
        1000.0,
        None,
        false,
        gfix::rd_opt::RatePath::Rounding,
    )
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["chosen_step"].as_f64().unwrap(), outcome.result.chosen_step);
    assert_eq!(report["rate_bits"].as_f64().unwrap(), outcome.result.rate_bits);
    assert_eq!(report["distortion"].as_f64().unwrap(), outcome.result.distortion);
    assert_eq!(report["objective"].as_f64().unwrap(), outcome.result.objective);
    assert_eq!(std::fs::read(fx.path("stream.gfxb")).unwrap(), outcome.stream);
}

#[test]
fn decode_of_truncated_stream_leaves_no_partial_output() {
    let fx = fixture(13);
    let out = run_paths(&[
        &"fit",
        &fx.path("base.gfxt"),
        &fx.path("target.gfxt"),
        &"--manifest",
        &fx.path("manifest.json"),
        &"--lambda",
        &"1",
        &"-o",
        &fx.path("stream.gfxb"),
        &"--report",
        &fx.path("report.json"),
    ]);
    assert!(out.status.success());
    let stream = std::fs::read(fx.path("stream.gfxb")).unwrap();
    std::fs::write(fx.path("cut.gfxb"), &stream[..stream.len() - 3]).unwrap();

    let out = run_paths(&[&"decode", &fx.path("cut.gfxb"), &"-o", &fx.path("maps.gfxt")]);
    assert_eq!(out.status.code(), Some(3), "truncation is a format error");
    assert!(!fx.path("maps.gfxt").exists(), "partial output written");
}

#[test]
fn apply_with_mismatched_manifest_is_a_numerical_error() {
    let fx = fixture(14);
    let out = run_paths(&[
        &"fit",
        &fx.path("base.gfxt"),
        &fx.path("target.gfxt"),
        &"--manifest",
        &fx.path("manifest.json"),
        &"--lambda",
        &"1",
        &"-o",
        &fx.path("stream.gfxb"),
        &"--report",
        &fx.path("report.json"),
    ]);
    assert!(out.status.success());
    let out = run_paths(&[&"decode", &fx.path("stream.gfxb"), &"-o", &fx.path("maps.gfxt")]);
    assert!(out.status.success());

    let mut wrong = fx.manifest.clone();
    wrong.layers[0].rank += 1;
    std::fs::write(fx.path("wrong.json"), wrong.to_json().unwrap()).unwrap();
    let out = run_paths(&[
        &"apply",
        &fx.path("base.gfxt"),
        &fx.path("maps.gfxt"),
        &"--manifest",
        &fx.path("wrong.json"),
        &"-o",
        &fx.path("recon.gfxt"),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!fx.path("recon.gfxt").exists());
}

#[test]
fn rdcurve_output_feeds_bdrate() {
    let fx = fixture(15);
    let curve = |name: &str, lambdas: &str| {
        let out = run_paths(&[
            &"rdcurve",
            &fx.path("base.gfxt"),
            &fx.path("target.gfxt"),
            &"--manifest",
            &fx.path("manifest.json"),
            &"--lambdas",
            &lambdas,
            &"-o",
            &fx.path(name),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    // a lambda ladder wide enough to produce four distinct rates
    curve("anchor.csv", "1e4,1e5,1e6,1e7");
    // same curve with every rate halved, quality untouched
    let text = std::fs::read_to_string(fx.path("anchor.csv")).unwrap();
    let mut halved = String::new();
    for line in text.lines() {
        if line.starts_with('#') {
            halved.push_str(line);
        } else {
            let (rate, rest) = line.split_once(',').unwrap();
            let r: f64 = rate.parse().unwrap();
            halved.push_str(&format!("{},{}", r / 2.0, rest));
        }
        halved.push('\n');
    }
    std::fs::write(fx.path("test.csv"), halved).unwrap();

    let out = run_paths(&[
        &"bdrate",
        &"--test",
        &fx.path("test.csv"),
        &"--anchor",
        &fx.path("anchor.csv"),
        &"--quality-orientation",
        &"lower",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "-50.00");
}

#[test]
fn bdrate_identical_curves_print_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "# rate,quality\n100,30\n200,34\n400,37\n800,39\n";
    std::fs::write(dir.path().join("c.csv"), csv).unwrap();
    let out = run_paths(&[
        &"bdrate",
        &"--test",
        &dir.path().join("c.csv"),
        &"--anchor",
        &dir.path().join("c.csv"),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.00");
}

#[test]
fn bdrate_rejects_three_point_curves() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.csv"), "100,30\n200,34\n400,37\n").unwrap();
    std::fs::write(dir.path().join("ok.csv"), "100,30\n200,34\n400,37\n800,39\n").unwrap();
    let out = run_paths(&[
        &"bdrate",
        &"--test",
        &dir.path().join("short.csv"),
        &"--anchor",
        &dir.path().join("ok.csv"),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn mmd_scan_matches_library_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let n = 24;
    let d = 6;
    let mk = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()
    };
    let degraded_data = mk(&mut rng);
    let reference_data = mk(&mut rng);
    for (name, data) in [("degraded", &degraded_data), ("reference", &reference_data)] {
        let mut a = TensorArchive::new();
        a.insert(Tensor::from_f64("latents", vec![n, d], data.clone()).unwrap()).unwrap();
        a.write_file(dir.path().join(format!("{name}.gfxt"))).unwrap();
    }
    let out = run_paths(&[
        &"mmd-scan",
        &"--degraded",
        &dir.path().join("degraded.gfxt"),
        &"--reference",
        &dir.path().join("reference.gfxt"),
        &"--t",
        &"0:1000:250",
        &"--seed",
        &"9",
        &"-o",
        &dir.path().join("scan.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let schedule = NoiseSchedule::default_linear();
    let degraded = SampleSet::new("latents", d, degraded_data).unwrap();
    let reference = SampleSet::new("latents", d, reference_data).unwrap();
    let t_list: Vec<usize> = (0..1000).step_by(250).collect();
    let scan = alignment::mmd_scan(&degraded, &reference, &schedule, &t_list, None, 9).unwrap();

    let mut expect = format!("# gfix {}\n# t,mmd2,normalized\n", env!("CARGO_PKG_VERSION"));
    for p in &scan {
        expect.push_str(&format!("{},{},{}\n", p.t, p.mmd2, p.normalized));
    }
    let got = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(got, expect);
}

#[test]
fn mmd_scan_rejects_bad_t_spec() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = TensorArchive::new();
    a.insert(Tensor::from_f64("x", vec![4, 2], vec![0.1; 8]).unwrap()).unwrap();
    a.write_file(dir.path().join("x.gfxt")).unwrap();
    for spec in ["5", "10:5:1", "0:2000:100", "0:100:0"] {
        let out = run_paths(&[
            &"mmd-scan",
            &"--degraded",
            &dir.path().join("x.gfxt"),
            &"--reference",
            &dir.path().join("x.gfxt"),
            &"--t",
            &spec,
            &"-o",
            &dir.path().join("scan.csv"),
        ]);
        assert_eq!(out.status.code(), Some(4), "spec {spec} accepted");
    }
}

#[test]
fn encode_decode_round_trip_via_files(){
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let mut maps = TensorArchive::new();
    for i in 0..3 {
        let r = if i < 2 { 3 } else { 2 };
        let data: Vec<f64> = (0..r * r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        maps.insert(Tensor::from_f64(format!("layer{i}.M"), vec![r, r], data).unwrap()).unwrap();
    }
    maps.write_file(dir.path().join("maps.gfxt")).unwrap();

    let out = run_paths(&[
        &"encode",
        &dir.path().join("maps.gfxt"),
        &"--step",
        &"0.125",
        &"-o",
        &dir.path().join("s.gfxb"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run_paths(&[&"decode", &dir.path().join("s.gfxb"), &"-o", &dir.path().join("back.gfxt")]);
    assert!(out.status.success());

    let back = TensorArchive::read_file(dir.path().join("back.gfxt")).unwrap();
    for i in 0..3 {
        let orig = maps.require(&format!("layer{i}.M")).unwrap().to_f64_vec();
        let rec = back.require(&format!("layer{i}.M")).unwrap().to_f64_vec();
        for (a, b) in orig.iter().zip(&rec) {
            assert!((a - b).abs() <= 0.125 / 2.0 + 1e-12);
        }
    }
    // quantized values re-encode to the identical stream
    let out = run_paths(&[
        &"encode",
        &dir.path().join("back.gfxt"),
        &"--step",
        &"0.125",
        &"-o",
        &dir.path().join("s2.gfxb"),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("s.gfxb")).unwrap(),
        std::fs::read(dir.path().join("s2.gfxb")).unwrap()
    );
}

#[test]
fn identical_invocations_are_byte_identical() {
    let fx = fixture(18);
    for pass in ["one", "two"] {
        let out = run_paths(&[
            &"fit",
            &fx.path("base.gfxt"),
            &fx.path("target.gfxt"),
            &"--manifest",
            &fx.path("manifest.json"),
            &"--lambda",
            &"100",
            &"--refine",
            &"-o",
            &fx.path(&format!("s-{pass}.gfxb")),
            &"--report",
            &fx.path(&format!("r-{pass}.json")),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(fx.path("s-one.gfxb")).unwrap(),
        std::fs::read(fx.path("s-two.gfxb")).unwrap()
    );
    assert_eq!(
        std::fs::read(fx.path("r-one.json")).unwrap(),
        std::fs::read(fx.path("r-two.json")).unwrap()
    );
}

#[test]
fn version_string_is_embedded_in_outputs() {
    let fx = fixture(19);
    let out = run_paths(&[
        &"rdcurve",
        &fx.path("base.gfxt"),
        &fx.path("target.gfxt"),
        &"--manifest",
        &fx.path("manifest.json"),
        &"--lambdas",
        &"1,100,10000,1000000",
        &"-o",
        &fx.path("curve.csv"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(fx.path("curve.csv")).unwrap();
    assert!(text.starts_with(&format!("# gfix {}\n", env!("CARGO_PKG_VERSION"))));
    let report = run_paths(&[
        &"fit",
        &fx.path("base.gfxt"),
        &fx.path("target.gfxt"),
        &"--manifest",
        &fx.path("manifest.json"),
        &"--lambda",
        &"1",
        &"-o",
        &fx.path("s.gfxb"),
    ]);
    assert!(report.status.success());
    let v: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(v["version"].as_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_paths(&[&"inspect", &dir.path().join("absent.gfxt")]);
    assert_eq!(out.status.code(), Some(5));
}
