//! C ABI over `ttns-sketch`.
//!
//! Objects cross the boundary as opaque pointers owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`TtnsStatus`]; the message of the last failure on the calling thread is
//! available from [`ttns_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ttns_sketch::chow_liu::{chow_liu_model, chow_liu_tree};
use ttns_sketch::metrics;
use ttns_sketch::{preset_model, ttns_sketch, DiscreteSamples, Error, FitOptions, PresetParams, RankSpec, RootedTree, SketchConfig, Ttns};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TtnsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Numerical = 6,
    Config = 7,
    Panic = 8,
}

/// A set of discrete samples.
pub struct TtnsSamples {
    inner: DiscreteSamples,
}

/// A tree tensor network state.
pub struct TtnsModel {
    inner: Ttns,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TtnsStatus {
    match e {
        Error::Io(_) => TtnsStatus::Io,
        Error::MalformedHeader(_) | Error::VersionMismatch { .. } | Error::Json(_) => TtnsStatus::Format,
        Error::ShapeMismatch(_) | Error::TooLarge { .. } | Error::RankTooLarge { .. } => TtnsStatus::Shape,
        Error::Config(_) | Error::UnknownPreset(_) => TtnsStatus::Config,
        e if e.is_numerical() => TtnsStatus::Numerical,
        _ => TtnsStatus::InvalidArgument,
    }
}

struct Fail(TtnsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TtnsStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TtnsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TtnsStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            TtnsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(TtnsStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ttns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Draws `rows` samples from the named benchmark model.
///
/// # Safety
/// `preset` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_from_preset(
    preset: *const c_char,
    rows: usize,
    seed: u64,
    out: *mut *mut TtnsSamples,
) -> TtnsStatus {
    guard(|| {
        let name = str_arg(preset, "preset")?;
        let p = preset_model(name, &PresetParams::default())?;
        put(out, TtnsSamples { inner: p.mrf.sample(rows, seed)? })
    })
}

/// Builds samples from a row-major `rows x d` matrix of 0-based states.
///
/// # Safety
/// `states` must point to `d` counts and `values` to `rows * d` entries.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_new(
    d: usize,
    states: *const usize,
    rows: usize,
    values: *const u16,
    out: *mut *mut TtnsSamples,
) -> TtnsStatus {
    guard(|| {
        let n = slice_arg(states, d, "states")?.to_vec();
        let len = rows.checked_mul(d).ok_or_else(|| Fail(TtnsStatus::InvalidArgument, "size overflow".into()))?;
        let data = slice_arg(values, len, "values")?.to_vec();
        put(out, TtnsSamples { inner: DiscreteSamples::new(n, data)? })
    })
}

/// Loads a text or binary sample file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_load(path: *const c_char, out: *mut *mut TtnsSamples) -> TtnsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, TtnsSamples { inner: DiscreteSamples::load_auto(path)? })
    })
}

/// # Safety
/// `samples` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_save(samples: *const TtnsSamples, path: *const c_char, binary: bool) -> TtnsStatus {
    guard(|| {
        let s = &get(samples, "samples")?.inner;
        let path = str_arg(path, "path")?;
        if binary {
            s.save_binary(path)?
        } else {
            s.save_text(path)?
        }
        Ok(())
    })
}

/// Number of rows; 0 for null.
///
/// # Safety
/// `samples` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_len(samples: *const TtnsSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.inner.len())
}

/// Number of variables; 0 for null.
///
/// # Safety
/// `samples` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_dim(samples: *const TtnsSamples) -> usize {
    samples.as_ref().map_or(0, |s| s.inner.d())
}

/// # Safety
/// `samples` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ttns_samples_free(samples: *mut TtnsSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

unsafe fn tree_arg(d: usize, edges: *const usize, root: usize) -> Result<RootedTree, Fail> {
    let flat = slice_arg(edges, 2 * d.saturating_sub(1), "edges")?;
    let pairs: Vec<(usize, usize)> = flat.chunks(2).map(|p| (p[0], p[1])).collect();
    Ok(RootedTree::from_edges(d, &pairs, root)?)
}

/// Fits a TTNS with TTNS-Sketch.
///
/// `edges` holds `d - 1` pairs of 1-based node ids; when null the Chow-Liu
/// tree of the samples is used. `sketch_json` is a sketch config block
/// (`{"kind": "markov"}` when null). `rank` caps every edge rank.
///
/// # Safety
/// Pointers must be valid for the sizes implied by the samples.
#[no_mangle]
pub unsafe extern "C" fn ttns_fit(
    samples: *const TtnsSamples,
    edges: *const usize,
    root: usize,
    sketch_json: *const c_char,
    rank: usize,
    out: *mut *mut TtnsModel,
) -> TtnsStatus {
    guard(|| {
        let s = &get(samples, "samples")?.inner;
        let tree = if edges.is_null() { chow_liu_tree(s, root)? } else { tree_arg(s.d(), edges, root)? };
        let config = if sketch_json.is_null() {
            SketchConfig::markov()
        } else {
            serde_json::from_str(str_arg(sketch_json, "sketch_json")?).map_err(|e| Fail(TtnsStatus::Config, e.to_string()))?
        };
        if rank == 0 {
            return Err(Fail(TtnsStatus::InvalidArgument, "rank must be >= 1".into()));
        }
        let fit = ttns_sketch(s, &tree, &config, &RankSpec::Capped(rank), &FitOptions::default())?;
        put(out, TtnsModel { inner: fit.model })
    })
}

/// Maximum-likelihood tree graphical model, as a TTNS. Null `edges` selects
/// the Chow-Liu tree.
///
/// # Safety
/// As for [`ttns_fit`].
#[no_mangle]
pub unsafe extern "C" fn ttns_fit_tree_model(
    samples: *const TtnsSamples,
    edges: *const usize,
    root: usize,
    out: *mut *mut TtnsModel,
) -> TtnsStatus {
    guard(|| {
        let s = &get(samples, "samples")?.inner;
        let tree = if edges.is_null() { chow_liu_tree(s, root)? } else { tree_arg(s.d(), edges, root)? };
        put(out, TtnsModel { inner: chow_liu_model(s, &tree)? })
    })
}

/// Exact TTNS of a tree-structured benchmark model.
///
/// # Safety
/// `preset` must be nul-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_from_preset(preset: *const c_char, out: *mut *mut TtnsModel) -> TtnsStatus {
    guard(|| {
        let p = preset_model(str_arg(preset, "preset")?, &PresetParams::default())?;
        put(out, TtnsModel { inner: p.mrf.to_ttns(&p.tree)? })
    })
}

/// # Safety
/// `path` must be nul-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_load(path: *const c_char, out: *mut *mut TtnsModel) -> TtnsStatus {
    guard(|| put(out, TtnsModel { inner: Ttns::load(str_arg(path, "path")?)? }))
}

/// Writes the JSON manifest to `path` and the cores next to it (`.bin`).
///
/// # Safety
/// `model` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_save(model: *const TtnsModel, path: *const c_char) -> TtnsStatus {
    guard(|| Ok(get(model, "model")?.inner.save(str_arg(path, "path")?)?))
}

/// Number of variables; 0 for null.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_dim(model: *const TtnsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d())
}

/// Value at the 0-based configuration `x` of length `d`.
///
/// # Safety
/// `x` must point to `d` entries, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_evaluate(model: *const TtnsModel, x: *const usize, d: usize, out: *mut f64) -> TtnsStatus {
    guard(|| {
        let m = &get(model, "model")?.inner;
        let x = slice_arg(x, d, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.evaluate(x)?;
        Ok(())
    })
}

/// Mean negative log-likelihood of `samples`, in nats.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_nll(model: *const TtnsModel, samples: *const TtnsSamples, out: *mut f64) -> TtnsStatus {
    guard(|| {
        let r = metrics::nll(&get(model, "model")?.inner, &get(samples, "samples")?.inner)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.value;
        Ok(())
    })
}

/// `‖model − reference‖ / ‖model‖`.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_rel_error(model: *const TtnsModel, reference: *const TtnsModel, out: *mut f64) -> TtnsStatus {
    guard(|| {
        let v = metrics::rel_l2_error(&get(model, "model")?.inner, &get(reference, "reference")?.inner)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Mutual information of variables `i` and `j` (1-based), in nats.
///
/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_mutual_information(model: *const TtnsModel, i: usize, j: usize, out: *mut f64) -> TtnsStatus {
    guard(|| {
        let r = metrics::pairwise_mi(&get(model, "model")?.inner, i, j)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.value;
        Ok(())
    })
}

/// Draws `rows` samples from a model.
///
/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_sample(model: *const TtnsModel, rows: usize, seed: u64, out: *mut *mut TtnsSamples) -> TtnsStatus {
    guard(|| {
        let (s, _) = get(model, "model")?.inner.draw_samples(rows, seed)?;
        put(out, TtnsSamples { inner: s })
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ttns_model_free(model: *mut TtnsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
