//! C ABI for the gfix pipeline.
//!
//! Conventions: every function returns a [`GfixStatus`]; results come back
//! through out-pointers. Archives are opaque handles owned by the library
//! and released with [`gfix_archive_free`]. String inputs are NUL-terminated
//! UTF-8. A thread-local message describing the most recent failure is
//! available via [`gfix_last_error_message`]. All entry points catch panics
//! and map them to `GFIX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gfix::alignment::{self, NoiseSchedule, SampleSet};
use gfix::error::ErrorClass;
use gfix::manifest::Manifest;
use gfix::metrics::{self, Psnr, QualityOrientation, RdCurve};
use gfix::pipeline;
use gfix::rd_opt::RatePath;
use gfix::tensor::{Tensor, TensorArchive};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfixStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error message had NUL").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &gfix::Error) -> GfixStatus {
    if matches!(err, gfix::Error::MissingTensor(_)) {
        return GfixStatus::NotFound;
    }
    match err.class() {
        ErrorClass::Io => GfixStatus::Io,
        ErrorClass::Format => GfixStatus::Format,
        ErrorClass::Numerical => GfixStatus::Numerical,
    }
}

fn fail(err: gfix::Error) -> GfixStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs a body with panic containment.
fn guarded(body: impl FnOnce() -> GfixStatus) -> GfixStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            GfixStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, GfixStatus> {
    if ptr.is_null() {
        set_error("NULL string argument".into());
        return Err(GfixStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        GfixStatus::InvalidUtf8
    })
}

/// Opaque archive handle.
pub struct GfixArchive {
    inner: TensorArchive,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gfix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the most recent error message for this thread into `buf`
/// (truncating if needed) and reports the full length through `written`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes; `written` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gfix_last_error_message(
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> GfixStatus {
    if buf.is_null() || cap == 0 {
        return GfixStatus::NullArgument;
    }
    LAST_ERROR.with(|e| {
        let binding = e.borrow();
        let msg = binding.as_ref().map(|c| c.as_bytes()).unwrap_or(b"");
        let n = msg.len().min(cap - 1);
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
        if !written.is_null() {
            *written = msg.len();
        }
    });
    GfixStatus::Ok
}

/// Creates an empty archive.
///
/// # Safety
/// `out` must be a valid pointer; the handle must be freed with
/// [`gfix_archive_free`].
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_create(out: *mut *mut GfixArchive) -> GfixStatus {
    guarded(|| {
        if out.is_null() {
            return GfixStatus::NullArgument;
        }
        *out = Box::into_raw(Box::new(GfixArchive { inner: TensorArchive::new() }));
        GfixStatus::Ok
    })
}

/// Loads a GFXT archive from `path`.
///
/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_open(
    path: *const c_char,
    out: *mut *mut GfixArchive,
) -> GfixStatus {
    guarded(|| {
        if out.is_null() {
            return GfixStatus::NullArgument;
        }
        let path = match cstr(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match TensorArchive::read_file(path) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(GfixArchive { inner: a }));
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases an archive handle. NULL is a no-op.
///
/// # Safety
/// `archive` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_free(archive: *mut GfixArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

/// Writes the archive to `path` in GFXT format.
///
/// # Safety
/// `archive` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_save(
    archive: *const GfixArchive,
    path: *const c_char,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_ref() else {
            return GfixStatus::NullArgument;
        };
        let path = match cstr(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match a.inner.write_file(path) {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of tensors in the archive.
///
/// # Safety
/// `archive` must be a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_tensor_count(
    archive: *const GfixArchive,
    out: *mut usize,
) -> GfixStatus {
    guarded(|| {
        let (Some(a), false) = (archive.as_ref(), out.is_null()) else {
            return GfixStatus::NullArgument;
        };
        *out = a.inner.len();
        GfixStatus::Ok
    })
}

/// Copies the NUL-terminated name of tensor `index` into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_tensor_name(
    archive: *const GfixArchive,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_ref() else {
            return GfixStatus::NullArgument;
        };
        if buf.is_null() || cap == 0 {
            return GfixStatus::NullArgument;
        }
        let Some(name) = a.inner.names().nth(index) else {
            set_error(format!("tensor index {index} out of range"));
            return GfixStatus::NotFound;
        };
        if name.len() + 1 > cap {
            set_error(format!("need {} bytes for tensor name", name.len() + 1));
            return GfixStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(name.as_ptr(), buf as *mut u8, name.len());
        *buf.add(name.len()) = 0;
        GfixStatus::Ok
    })
}

/// Rank (number of dimensions) of the named tensor.
///
/// # Safety
/// Standard handle/pointer validity rules.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_tensor_rank(
    archive: *const GfixArchive,
    name: *const c_char,
    out: *mut usize,
) -> GfixStatus {
    guarded(|| {
        let (Some(a), false) = (archive.as_ref(), out.is_null()) else {
            return GfixStatus::NullArgument;
        };
        let name = match cstr(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match a.inner.require(name) {
            Ok(t) => {
                *out = t.rank();
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Copies the tensor's dimensions into `dims` (capacity `cap` entries).
///
/// # Safety
/// `dims` must point to `cap` writable u64 slots.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_tensor_shape(
    archive: *const GfixArchive,
    name: *const c_char,
    dims: *mut u64,
    cap: usize,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_ref() else {
            return GfixStatus::NullArgument;
        };
        if dims.is_null() {
            return GfixStatus::NullArgument;
        }
        let name = match cstr(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let t = match a.inner.require(name) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        if t.rank() > cap {
            set_error(format!("need {} slots for shape", t.rank()));
            return GfixStatus::BufferTooSmall;
        }
        for (i, &d) in t.shape().iter().enumerate() {
            *dims.add(i) = d as u64;
        }
        GfixStatus::Ok
    })
}

/// Copies the tensor's elements (converted to f64) into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_read_f64(
    archive: *const GfixArchive,
    name: *const c_char,
    buf: *mut f64,
    cap: usize,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_ref() else {
            return GfixStatus::NullArgument;
        };
        if buf.is_null() {
            return GfixStatus::NullArgument;
        }
        let name = match cstr(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let t = match a.inner.require(name) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        if t.len() > cap {
            set_error(format!("need {} slots for tensor data", t.len()));
            return GfixStatus::BufferTooSmall;
        }
        for (i, v) in t.to_f64_vec().into_iter().enumerate() {
            *buf.add(i) = v;
        }
        GfixStatus::Ok
    })
}

/// Adds an f64 tensor to the archive. Fails on duplicate names and on
/// shape/length mismatches.
///
/// # Safety
/// `shape` points to `rank` u64 dims; `data` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_add_f64(
    archive: *mut GfixArchive,
    name: *const c_char,
    shape: *const u64,
    rank: usize,
    data: *const f64,
    len: usize,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_mut() else {
            return GfixStatus::NullArgument;
        };
        if shape.is_null() || data.is_null() {
            return GfixStatus::NullArgument;
        }
        let name = match cstr(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let shape: Vec<usize> = (0..rank).map(|i| *shape.add(i) as usize).collect();
        let data: Vec<f64> = std::slice::from_raw_parts(data, len).to_vec();
        match Tensor::from_f64(name, shape, data).and_then(|t| a.inner.insert(t)) {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Adds an f32 tensor to the archive.
///
/// # Safety
/// `shape` points to `rank` u64 dims; `data` points to `len` floats.
#[no_mangle]
pub unsafe extern "C" fn gfix_archive_add_f32(
    archive: *mut GfixArchive,
    name: *const c_char,
    shape: *const u64,
    rank: usize,
    data: *const f32,
    len: usize,
) -> GfixStatus {
    guarded(|| {
        let Some(a) = archive.as_mut() else {
            return GfixStatus::NullArgument;
        };
        if shape.is_null() || data.is_null() {
            return GfixStatus::NullArgument;
        }
        let name = match cstr(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let shape: Vec<usize> = (0..rank).map(|i| *shape.add(i) as usize).collect();
        let data: Vec<f32> = std::slice::from_raw_parts(data, len).to_vec();
        match Tensor::from_f32(name, shape, data).and_then(|t| a.inner.insert(t)) {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

fn read_pair(base: &str, manifest_json: &str) -> Result<(TensorArchive, Manifest), gfix::Error> {
    let archive = TensorArchive::read_file(Path::new(base))?;
    let manifest = Manifest::from_json(manifest_json)?;
    Ok((archive, manifest))
}

/// Builds adapters for the manifest layers of `base_path` and writes them to
/// `out_path` as a GFXT archive. `manifest_json` is the manifest document
/// itself, not a path.
///
/// # Safety
/// All strings are NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gfix_decompose(
    base_path: *const c_char,
    manifest_json: *const c_char,
    out_path: *const c_char,
) -> GfixStatus {
    guarded(|| {
        let (base, manifest, out) = match (cstr(base_path), cstr(manifest_json), cstr(out_path)) {
            (Ok(b), Ok(m), Ok(o)) => (b, m, o),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let run = || -> gfix::Result<()> {
            let (archive, manifest) = read_pair(base, manifest)?;
            pipeline::decompose(&archive, &manifest)?.write_file(out)
        };
        match run() {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Full fit: closed-form modulation fit, RD step search, entropy coding.
/// Writes the GFXB stream to `out_stream_path` and, when non-NULL, a JSON
/// report to `report_path`.
///
/// # Safety
/// All strings are NUL-terminated UTF-8; `report_path` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gfix_fit(
    base_path: *const c_char,
    target_path: *const c_char,
    manifest_json: *const c_char,
    lambda: f64,
    refine: i32,
    out_stream_path: *const c_char,
    report_path: *const c_char,
) -> GfixStatus {
    guarded(|| {
        let (base, target, manifest, out) = match (
            cstr(base_path),
            cstr(target_path),
            cstr(manifest_json),
            cstr(out_stream_path),
        ) {
            (Ok(b), Ok(t), Ok(m), Ok(o)) => (b, t, m, o),
            (Err(s), _, _, _) | (_, Err(s), _, _) | (_, _, Err(s), _) | (_, _, _, Err(s)) => {
                return s
            }
        };
        let report = if report_path.is_null() {
            None
        } else {
            match cstr(report_path) {
                Ok(r) => Some(r),
                Err(s) => return s,
            }
        };
        let run = || -> gfix::Result<()> {
            let (base, manifest2) = read_pair(base, manifest)?;
            let target = TensorArchive::read_file(Path::new(target))?;
            let outcome = pipeline::fit(
                &base,
                &target,
                &manifest2,
                lambda,
                None,
                refine != 0,
                RatePath::Rounding,
            )?;
            std::fs::write(out, &outcome.stream)?;
            if let Some(r) = report {
                std::fs::write(r, outcome.report.to_json()?)?;
            }
            Ok(())
        };
        match run() {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Decodes a GFXB stream into a dequantized-maps GFXT archive.
///
/// # Safety
/// Strings are NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gfix_decode(
    stream_path: *const c_char,
    out_maps_path: *const c_char,
) -> GfixStatus {
    guarded(|| {
        let (stream, out) = match (cstr(stream_path), cstr(out_maps_path)) {
            (Ok(s), Ok(o)) => (s, o),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let run = || -> gfix::Result<()> {
            let bytes = std::fs::read(stream)?;
            pipeline::decode_stream(&bytes)?.write_file(out)
        };
        match run() {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Reconstructs weights: base + A * M * B per manifest layer.
///
/// # Safety
/// Strings are NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gfix_apply(
    base_path: *const c_char,
    maps_path: *const c_char,
    manifest_json: *const c_char,
    out_path: *const c_char,
) -> GfixStatus {
    guarded(|| {
        let (base, maps, manifest, out) =
            match (cstr(base_path), cstr(maps_path), cstr(manifest_json), cstr(out_path)) {
                (Ok(b), Ok(mp), Ok(m), Ok(o)) => (b, mp, m, o),
                (Err(s), _, _, _) | (_, Err(s), _, _) | (_, _, Err(s), _) | (_, _, _, Err(s)) => {
                    return s
                }
            };
        let run = || -> gfix::Result<()> {
            let (base, manifest2) = read_pair(base, manifest)?;
            let maps = TensorArchive::read_file(Path::new(maps))?;
            pipeline::apply(&base, &maps, &manifest2)?.write_file(out)
        };
        match run() {
            Ok(()) => GfixStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// BD-rate between two curves given as parallel rate/quality arrays.
/// `higher_better` selects the quality orientation for both curves.
///
/// # Safety
/// The four array pointers must each hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn gfix_bd_rate(
    test_rates: *const f64,
    test_qualities: *const f64,
    test_len: usize,
    anchor_rates: *const f64,
    anchor_qualities: *const f64,
    anchor_len: usize,
    higher_better: i32,
    out_percent: *mut f64,
) -> GfixStatus {
    guarded(|| {
        if test_rates.is_null()
            || test_qualities.is_null()
            || anchor_rates.is_null()
            || anchor_qualities.is_null()
            || out_percent.is_null()
        {
            return GfixStatus::NullArgument;
        }
        let orientation = if higher_better != 0 {
            QualityOrientation::HigherBetter
        } else {
            QualityOrientation::LowerBetter
        };
        let gather = |r: *const f64, q: *const f64, n: usize| -> Vec<(f64, f64)> {
            (0..n).map(|i| (*r.add(i), *q.add(i))).collect()
        };
        let run = || -> gfix::Result<f64> {
            let test = RdCurve::new(gather(test_rates, test_qualities, test_len), orientation)?;
            let anchor =
                RdCurve::new(gather(anchor_rates, anchor_qualities, anchor_len), orientation)?;
            metrics::bd_rate(&test, &anchor)
        };
        match run() {
            Ok(v) => {
                *out_percent = v;
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// PSNR in dB. When the inputs are identical, `out_identical` is set to 1
/// and `out_db` is left untouched (the sentinel replaces an infinity).
///
/// # Safety
/// `a` and `b` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gfix_psnr(
    a: *const f64,
    b: *const f64,
    len: usize,
    peak: f64,
    out_db: *mut f64,
    out_identical: *mut i32,
) -> GfixStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out_db.is_null() || out_identical.is_null() || len == 0 {
            return GfixStatus::NullArgument;
        }
        let ta = Tensor::from_f64("a", vec![len], std::slice::from_raw_parts(a, len).to_vec());
        let tb = Tensor::from_f64("b", vec![len], std::slice::from_raw_parts(b, len).to_vec());
        let run = || -> gfix::Result<Psnr> { metrics::psnr(&ta?, &tb?, peak) };
        match run() {
            Ok(Psnr::Db(v)) => {
                *out_db = v;
                *out_identical = 0;
                GfixStatus::Ok
            }
            Ok(Psnr::Identical) => {
                *out_identical = 1;
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Squared MMD between two flattened sample sets of shape (n, dim) and
/// (m, dim). Pass `bandwidth <= 0` to use the median heuristic.
///
/// # Safety
/// `x` holds n*dim doubles, `y` holds m*dim doubles.
#[no_mangle]
pub unsafe extern "C" fn gfix_mmd2(
    x: *const f64,
    n: usize,
    y: *const f64,
    m: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut f64,
) -> GfixStatus {
    guarded(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return GfixStatus::NullArgument;
        }
        let run = || -> gfix::Result<f64> {
            let xs =
                SampleSet::new("x", dim, std::slice::from_raw_parts(x, n * dim).to_vec())?;
            let ys =
                SampleSet::new("y", dim, std::slice::from_raw_parts(y, m * dim).to_vec())?;
            let bw = if bandwidth > 0.0 {
                bandwidth
            } else {
                alignment::median_heuristic_bandwidth(&xs, &ys)?
            };
            alignment::mmd2(&xs, &ys, bw)
        };
        match run() {
            Ok(v) => {
                *out = v;
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// MMD-minimizing noise level over `t_list` under the default linear
/// schedule. Pass `bandwidth <= 0` for the median heuristic.
///
/// # Safety
/// `degraded` holds n_degraded*dim doubles, `reference` n_reference*dim,
/// `t_list` holds t_count entries.
#[no_mangle]
pub unsafe extern "C" fn gfix_select_stepsize(
    degraded: *const f64,
    n_degraded: usize,
    reference: *const f64,
    n_reference: usize,
    dim: usize,
    t_list: *const u64,
    t_count: usize,
    bandwidth: f64,
    seed: u64,
    out_t: *mut u64,
) -> GfixStatus {
    guarded(|| {
        if degraded.is_null() || reference.is_null() || t_list.is_null() || out_t.is_null() {
            return GfixStatus::NullArgument;
        }
        let run = || -> gfix::Result<usize> {
            let d = SampleSet::new(
                "degraded",
                dim,
                std::slice::from_raw_parts(degraded, n_degraded * dim).to_vec(),
            )?;
            let r = SampleSet::new(
                "reference",
                dim,
                std::slice::from_raw_parts(reference, n_reference * dim).to_vec(),
            )?;
            let ts: Vec<usize> =
                (0..t_count).map(|i| *t_list.add(i) as usize).collect();
            let schedule = NoiseSchedule::default_linear();
            let bw = if bandwidth > 0.0 { Some(bandwidth) } else { None };
            alignment::select_stepsize(&d, &r, &schedule, &ts, bw, seed)
        };
        match run() {
            Ok(t) => {
                *out_t = t as u64;
                GfixStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
