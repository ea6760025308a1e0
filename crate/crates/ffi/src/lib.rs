//! C ABI over the `fedgan` core.
//!
//! Every fallible call returns a [`FedganStatus`]; on failure the message is
//! kept per thread and read with [`fedgan_last_error_message`]. Strings
//! returned by the library are owned by the caller and released with
//! [`fedgan_string_free`]. Handles are opaque and released with their
//! matching `_free` function; passing NULL to any `_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fedgan::config::ExperimentConfig;
use fedgan::denoiser::{denoise, Autoencoder};
use fedgan::metrics::fid;
use fedgan::output::run_to_dir;
use fedgan::privacy::{default_orders, epsilon, rdp_subsampled_gaussian};
use fedgan::{Error, Tensor};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FedganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Shape = 4,
    NonFinite = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
    Other = 9,
}

/// Experiment configuration, starting from the built-in defaults.
pub struct FedganConfig {
    inner: ExperimentConfig,
}

/// A trained denoising autoencoder.
pub struct FedganAutoencoder {
    inner: Autoencoder,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FedganStatus {
    match e {
        Error::Shape { .. } | Error::Incompatible(_) => FedganStatus::Shape,
        Error::NonFinite { .. } => FedganStatus::NonFinite,
        Error::Parse { .. } => FedganStatus::Parse,
        Error::InvalidArgument(_) | Error::Empty(_) => FedganStatus::InvalidArgument,
        Error::Config { .. } => FedganStatus::Config,
        Error::Io(_) => FedganStatus::Io,
        Error::Round { source, .. } => status_of(source),
    }
}

struct Failure(FedganStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FedganStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FedganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FedganStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            FedganStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(FedganStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Last error on this thread, or NULL if the previous call succeeded.
/// The caller frees the result with `fedgan_string_free`.
#[no_mangle]
pub extern "C" fn fedgan_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fedgan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// (epsilon, delta)-DP of `rounds` compositions of the sampled Gaussian
/// mechanism at rate `q` and noise multiplier `z`, over the default orders.
/// `out_order` may be NULL.
///
/// # Safety
/// `out_epsilon` must be valid for writes; `out_order` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn fedgan_epsilon(
    q: f64,
    z: f64,
    rounds: u64,
    delta: f64,
    out_epsilon: *mut f64,
    out_order: *mut f64,
) -> FedganStatus {
    guard(|| {
        let out = out_arg(out_epsilon, "out_epsilon")?;
        let curve = rdp_subsampled_gaussian(q, z, &default_orders())?;
        let (eps, order) = epsilon(&curve, rounds, delta)?;
        *out = eps;
        if let Some(o) = out_order.as_mut() {
            *o = order;
        }
        Ok(())
    })
}

/// Fréchet distance between two feature sets stored row-major as
/// `[n_real, dim]` and `[n_fake, dim]`.
///
/// # Safety
/// `real` and `fake` must point to `n_real * dim` and `n_fake * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fedgan_fid(
    real: *const f64,
    n_real: usize,
    fake: *const f64,
    n_fake: usize,
    dim: usize,
    out: *mut f64,
) -> FedganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = slice_arg(real, n_real * dim, "real")?;
        let f = slice_arg(fake, n_fake * dim, "fake")?;
        let r = Tensor::new(vec![n_real, dim], r.to_vec())?;
        let f = Tensor::new(vec![n_fake, dim], f.to_vec())?;
        *out = fid(&r, &f)?;
        Ok(())
    })
}

/// A configuration holding the built-in defaults.
#[no_mangle]
pub extern "C" fn fedgan_config_new() -> *mut FedganConfig {
    Box::into_raw(Box::new(FedganConfig { inner: ExperimentConfig::default() }))
}

/// # Safety
/// `cfg` must be NULL or a handle from `fedgan_config_new`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fedgan_config_free(cfg: *mut FedganConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Applies a named preset: `nodp`, `dp`, `dp_denoise` or `full`.
///
/// # Safety
/// `cfg` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedgan_config_apply_preset(cfg: *mut FedganConfig, name: *const c_char) -> FedganStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.inner.apply_preset(str_arg(name, "name")?)?;
        Ok(())
    })
}

/// Sets one `key` to `value`, parsed as in a config file.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fedgan_config_set(
    cfg: *mut FedganConfig,
    key: *const c_char,
    value: *const c_char,
) -> FedganStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.inner.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Applies a file of `key = value` lines.
///
/// # Safety
/// `cfg` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedgan_config_apply_file(cfg: *mut FedganConfig, path: *const c_char) -> FedganStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.inner.apply_file(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// The configuration as `key = value` lines, or NULL if `cfg` is NULL.
/// The caller frees the result with `fedgan_string_free`.
///
/// # Safety
/// `cfg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedgan_config_to_text(cfg: *const FedganConfig) -> *mut c_char {
    cfg.as_ref().map_or(ptr::null_mut(), |c| owned_string(c.inner.to_text()))
}

/// Runs an experiment and writes `config_resolved`, `metrics.csv` and the
/// sample grids into `out_dir`. Blocks until the run finishes.
///
/// # Safety
/// `cfg` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedgan_run(cfg: *const FedganConfig, out_dir: *const c_char) -> FedganStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        run_to_dir(&cfg.inner, &dir, false)?;
        Ok(())
    })
}

/// Loads an autoencoder saved by `fedgan train-autoencoder`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fedgan_autoencoder_load(
    path: *const c_char,
    out: *mut *mut FedganAutoencoder,
) -> FedganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = Autoencoder::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(FedganAutoencoder { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `ae` must be NULL or a handle from `fedgan_autoencoder_load`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fedgan_autoencoder_free(ae: *mut FedganAutoencoder) {
    if !ae.is_null() {
        drop(Box::from_raw(ae));
    }
}

/// Noise level the model was trained at, or NaN if `ae` is NULL.
///
/// # Safety
/// `ae` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fedgan_autoencoder_noise_level(ae: *const FedganAutoencoder) -> f64 {
    ae.as_ref().map_or(f64::NAN, |a| a.inner.trained_noise_level)
}

/// Denoises `n` images of 28×28 pixels in [0, 1], row-major, into `out`.
///
/// # Safety
/// `images` and `out` must each hold `n * 784` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn fedgan_autoencoder_denoise(
    ae: *const FedganAutoencoder,
    images: *const f64,
    n: usize,
    out: *mut f64,
) -> FedganStatus {
    guard(|| {
        let ae = ae.as_ref().ok_or_else(|| null("ae"))?;
        let len = n * 28 * 28;
        let input = Tensor::new(vec![n, 1, 28, 28], slice_arg(images, len, "images")?.to_vec())?;
        let y = denoise(&ae.inner, &input)?;
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, len).copy_from_slice(y.data());
        }
        Ok(())
    })
}
