//! C ABI over the microforge toolkit.
//!
//! Objects cross the boundary as opaque handles created by `mf_*_new`,
//! `mf_*_load` or `mf_*_read` and released with the matching `mf_*_free`.
//! Every fallible call returns an `MfStatus`; on failure a description is
//! available from `mf_last_error_message` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use microforge::cpfem::{simulate, CpfemConfig};
use microforge::dataset;
use microforge::phasefield::{run_snapshots, InitialCondition, PhaseFieldParams};
use microforge::pipeline::load_models;
use microforge::search::{random_search, Surrogate, TrainedModels, NUM_MODES};
use microforge::{DeformationMode, Error, MicrostructureImage, Phase, Rng};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Parameter = 4,
    Divergence = 5,
    State = 6,
    Domain = 7,
    Config = 8,
    Format = 9,
    Version = 10,
    MissingArtifact = 11,
    Undefined = 12,
    Io = 13,
    Panic = 14,
}

impl From<&Error> for MfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => MfStatus::Dimension,
            Error::Parameter(_) => MfStatus::Parameter,
            Error::Divergence { .. } => MfStatus::Divergence,
            Error::State(_) => MfStatus::State,
            Error::Domain(_) => MfStatus::Domain,
            Error::Config(_) | Error::Usage(_) => MfStatus::Config,
            Error::Format(_) | Error::Json(_) => MfStatus::Format,
            Error::Version { .. } => MfStatus::Version,
            Error::MissingArtifact(_) => MfStatus::MissingArtifact,
            Error::Undefined(_) => MfStatus::Undefined,
            Error::Io(_) => MfStatus::Io,
        }
    }
}

/// A labelled microstructure.
pub struct MfImage(MicrostructureImage);

/// A trained generator with its four property regressors.
pub struct MfModels(TrainedModels);

/// FEM outcome for one image and mode.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MfProps {
    pub sigma_max_mpa: f64,
    pub eps_lim: f64,
    /// 1 when necking was detected before the strain cap.
    pub necking: i32,
    pub steps: u64,
}

/// Best point of a latent-space search.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MfSearchResult {
    pub z: [f64; 2],
    pub mode: u8,
    pub score: f64,
    pub sigma_max_mpa: f64,
    pub eps_lim: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(MfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MfStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Fail {
    Fail(MfStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| bad("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn mode_arg(code: u8) -> Result<DeformationMode, Fail> {
    DeformationMode::from_code(code).map_err(|e| bad(e.to_string()))
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Image from `width * height` row-major phase codes (0 ferrite, 1 and 2
/// the martensite variants).
///
/// # Safety
/// `codes` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_image_new(width: usize, height: usize, codes: *const u8, out: *mut *mut MfImage) -> MfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if codes.is_null() {
            return Err(null("codes"));
        }
        let n = width.checked_mul(height).ok_or_else(|| bad("image size overflows"))?;
        let img = MicrostructureImage::from_codes(width, height, std::slice::from_raw_parts(codes, n))?;
        *out = Box::into_raw(Box::new(MfImage(img)));
        Ok(())
    })
}

/// Image filled with one phase.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_image_new_uniform(width: usize, height: usize, phase: u8, out: *mut *mut MfImage) -> MfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if width == 0 || height == 0 {
            return Err(bad("image must not be empty"));
        }
        let p = Phase::from_code(phase).map_err(|e| bad(e.to_string()))?;
        *out = Box::into_raw(Box::new(MfImage(MicrostructureImage::uniform(width, height, p))));
        Ok(())
    })
}

/// Reads a dataset image file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_image_read(path: *const c_char, width: usize, height: usize, out: *mut *mut MfImage) -> MfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let img = dataset::read_image(&path_arg(path)?, width, height)?;
        *out = Box::into_raw(Box::new(MfImage(img)));
        Ok(())
    })
}

/// Writes an image in the dataset file format.
///
/// # Safety
/// `image` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mf_image_write(image: *const MfImage, path: *const c_char) -> MfStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        dataset::write_image(&path_arg(path)?, &img.0)?;
        Ok(())
    })
}

/// Width, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_image_width(image: *const MfImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width())
}

/// Height, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_image_height(image: *const MfImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// Copies the row-major phase codes into `codes`, which holds `len` bytes.
///
/// # Safety
/// `image` must be a live handle; `codes` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mf_image_codes(image: *const MfImage, codes: *mut u8, len: usize) -> MfStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        if codes.is_null() {
            return Err(null("codes"));
        }
        let src = img.0.codes();
        if len < src.len() {
            return Err(bad(format!("buffer holds {len} bytes, image has {}", src.len())));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), codes, src.len());
        Ok(())
    })
}

/// Fraction of martensite pixels.
///
/// # Safety
/// `image` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_image_martensite_fraction(image: *const MfImage, out: *mut f64) -> MfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(image, "image")?.0.martensite_fraction();
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_image_free(image: *mut MfImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Phase-field run with default material parameters. Writes up to
/// `capacity` snapshot handles into `out` and their number into
/// `out_count`; each handle must be freed.
///
/// # Safety
/// `out` must hold `capacity` writable pointers; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_phasefield_run(
    band_half_width: usize,
    noise_amplitude: f64,
    seed: u64,
    snapshots: usize,
    interval: usize,
    out: *mut *mut MfImage,
    capacity: usize,
    out_count: *mut usize,
) -> MfStatus {
    guard(|| {
        let count = out_arg(out_count, "out_count")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if capacity < snapshots {
            return Err(bad(format!("capacity {capacity} < {snapshots} snapshots")));
        }
        let ic = InitialCondition {
            boundary_half_width: band_half_width,
            seed_noise_amplitude: noise_amplitude,
            seed,
        };
        let imgs = run_snapshots(&ic, &PhaseFieldParams::default(), snapshots, interval)?;
        for (i, img) in imgs.into_iter().enumerate() {
            *out.add(i) = Box::into_raw(Box::new(MfImage(img)));
            *count = i + 1;
        }
        Ok(())
    })
}

/// Crystal-plasticity simulation with default materials.
///
/// # Safety
/// `image` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_simulate(image: *const MfImage, mode: u8, out: *mut MfProps) -> MfStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        let out = out_arg(out, "out")?;
        let r = simulate(&img.0, mode_arg(mode)?, &CpfemConfig::default())?;
        *out = MfProps {
            sigma_max_mpa: r.props.sigma_max,
            eps_lim: r.props.eps_lim,
            necking: r.necking_detected as i32,
            steps: r.steps as u64,
        };
        Ok(())
    })
}

/// Loads the generator and regressors of a finished pipeline run.
///
/// # Safety
/// `run_root` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_models_load(run_root: *const c_char, out: *mut *mut MfModels) -> MfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = load_models(&path_arg(run_root)?)?;
        *out = Box::into_raw(Box::new(MfModels(m)));
        Ok(())
    })
}

/// Scores of the four modes at latent point `(z0, z1)`; optionally the
/// generated image (pass null to skip).
///
/// # Safety
/// `models` must be a live handle; `scores` must hold 4 writable doubles;
/// `image_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mf_models_evaluate(
    models: *const MfModels,
    z0: f64,
    z1: f64,
    scores: *mut f64,
    image_out: *mut *mut MfImage,
) -> MfStatus {
    guard(|| {
        let m = ref_arg(models, "models")?;
        if scores.is_null() {
            return Err(null("scores"));
        }
        let e = m.0.evaluate([z0, z1])?;
        ptr::copy_nonoverlapping(e.scores.as_ptr(), scores, NUM_MODES);
        if let (Some(slot), Some(img)) = (image_out.as_mut(), e.image) {
            *slot = Box::into_raw(Box::new(MfImage(img)));
        }
        Ok(())
    })
}

/// Seeded random search of `iterations` latent points.
///
/// # Safety
/// `models` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_models_search(
    models: *const MfModels,
    iterations: usize,
    seed: u64,
    out: *mut MfSearchResult,
) -> MfStatus {
    guard(|| {
        let m = ref_arg(models, "models")?;
        let out = out_arg(out, "out")?;
        let r = random_search(iterations, &m.0, &mut Rng::new(seed))?;
        let p = r.best_props.ok_or_else(|| bad("search returned no properties"))?;
        *out = MfSearchResult {
            z: r.best_z,
            mode: r.best_mode.code(),
            score: r.best_score,
            sigma_max_mpa: p.sigma_max,
            eps_lim: p.eps_lim,
        };
        Ok(())
    })
}

/// # Safety
/// `models` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_models_free(models: *mut MfModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}
