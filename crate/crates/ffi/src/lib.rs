//! C ABI over the `gist` library.
//!
//! Every fallible function returns a [`GistStatus`]; on failure the message is
//! available from [`gist_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned by the
//! library are released with [`gist_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gist::data::{resolve_dataset, DatasetBundle};
use gist::model::write_checkpoint;
use gist::orchestrator::{comm_cost, model_inputs, train, Mode, TrainConfig, TrainOutput, TrainedModel};
use gist::theory::kernel_report;
use gist::{Arch, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GistStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid or contradictory configuration.
    Config = 2,
    Io = 3,
    /// Malformed input data.
    Data = 4,
    /// Training or numerical failure.
    Runtime = 5,
    /// The output buffer is too small; the required length is reported.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// A loaded or generated dataset.
pub struct GistDataset {
    bundle: DatasetBundle,
}

/// A trained model together with the settings needed to run it.
pub struct GistModel {
    config: TrainConfig,
    output: TrainOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GistStatus {
    match e {
        _ if e.is_config() => GistStatus::Config,
        Error::Io(_) | Error::MissingFile(_) => GistStatus::Io,
        Error::RaggedRow { .. }
        | Error::LabelOutOfRange { .. }
        | Error::OverlappingMasks { .. }
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Checkpoint(_) => GistStatus::Data,
        _ => GistStatus::Runtime,
    }
}

struct Fail(GistStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GistStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GistStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GistStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GistStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GistStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gist_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gist_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gist_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a dataset directory, or generates one from `sbm:key=value,...` or
/// `regular:key=value,...`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gist_dataset_open(spec: *const c_char, out: *mut *mut GistDataset) -> GistStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let bundle = resolve_dataset(str_arg(spec, "spec")?)?;
        *out = Box::into_raw(Box::new(GistDataset { bundle }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a live handle from [`gist_dataset_open`].
#[no_mangle]
pub unsafe extern "C" fn gist_dataset_free(ds: *mut GistDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Nodes in the dataset; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gist_dataset_num_nodes(ds: *const GistDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.bundle.graph.num_nodes())
}

/// Feature columns; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gist_dataset_num_features(ds: *const GistDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.bundle.graph.num_features())
}

/// Classes declared by the dataset; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gist_dataset_num_classes(ds: *const GistDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.bundle.num_classes)
}

/// Trains a model. `config_json` holds any subset of the training config
/// fields (NULL or `{}` for defaults).
///
/// # Safety
/// `ds` must be a live handle, `config_json` NULL or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gist_train(
    ds: *const GistDataset,
    config_json: *const c_char,
    out: *mut *mut GistModel,
) -> GistStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let config: TrainConfig = if config_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Fail(GistStatus::Config, format!("bad config: {e}")))?
        };
        let output = train(&config, &ds.bundle.graph, &mut ())?;
        *out = Box::into_raw(Box::new(GistModel { config, output }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle from [`gist_train`].
#[no_mangle]
pub unsafe extern "C" fn gist_model_free(model: *mut GistModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Metrics recorded during training as a JSON array. Release with
/// [`gist_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gist_model_metrics_json(model: *const GistModel, out: *mut *mut c_char) -> GistStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let text = serde_json::to_string(&model.output.metrics).map_err(Error::from)?;
        *out = into_c_string(text);
        Ok(())
    })
}

/// Writes row-major class probabilities (`nodes × classes`) into `probs`.
/// On `BUFFER_TOO_SMALL`, `*needed` holds the required length.
///
/// # Safety
/// `model` and `ds` must be live handles; `probs` must hold `len` floats;
/// `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gist_model_predict(
    model: *const GistModel,
    ds: *const GistDataset,
    probs: *mut f32,
    len: usize,
    needed: *mut usize,
) -> GistStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let cfg = &model.config;
        let (x, op) = model_inputs(&ds.bundle.graph, cfg.arch, cfg.adjacency, cfg.row_normalize);
        let (p, _) = model.output.model.predict_proba(&op, &x)?;
        if let Some(n) = needed.as_mut() {
            *n = p.len();
        }
        if len < p.len() {
            return Err(Fail(
                GistStatus::BufferTooSmall,
                format!("need {} floats, got {len}", p.len()),
            ));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        std::slice::from_raw_parts_mut(probs, p.len()).copy_from_slice(p.data());
        Ok(())
    })
}

/// Saves a single (non-ensemble) model as a binary checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gist_model_save(model: *const GistModel, path: *const c_char) -> GistStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let path = Path::new(str_arg(path, "path")?);
        let TrainedModel::Single(m) = &model.output.model else {
            return Err(Fail(GistStatus::Config, "ensembles cannot be saved as one checkpoint".into()));
        };
        let file = std::fs::File::create(path).map_err(Error::from)?;
        write_checkpoint(m, std::io::BufWriter::new(file))?;
        Ok(())
    })
}

/// Per-sync scalars sent to each worker (`per_worker`, `m` entries) and
/// their sum. `mode` is `gist`, `local_sgd`, `ensemble` or `single`; `arch`
/// is `gcn` or `sage`.
///
/// # Safety
/// `dims` must hold `num_dims` values, `per_worker` `m` values; strings
/// NUL-terminated; `total` writable.
#[no_mangle]
pub unsafe extern "C" fn gist_comm_cost(
    mode: *const c_char,
    arch: *const c_char,
    dims: *const usize,
    num_dims: usize,
    m: usize,
    partition_input: bool,
    per_worker: *mut u64,
    total: *mut u64,
) -> GistStatus {
    guard(|| {
        let mode: Mode = serde_json::from_value(str_arg(mode, "mode")?.into())
            .map_err(|e| Fail(GistStatus::Config, format!("bad mode: {e}")))?;
        let arch: Arch = serde_json::from_value(str_arg(arch, "arch")?.into())
            .map_err(|e| Fail(GistStatus::Config, format!("bad arch: {e}")))?;
        if dims.is_null() || per_worker.is_null() {
            return Err(null("dims or per_worker"));
        }
        if num_dims < 2 || m == 0 {
            return Err(Fail(GistStatus::Config, "need at least two dims and m >= 1".into()));
        }
        let total = out_ptr(total, "total")?;
        let dims = std::slice::from_raw_parts(dims, num_dims);
        let cost = comm_cost(mode, arch, dims, m, partition_input);
        let out = std::slice::from_raw_parts_mut(per_worker, m);
        for (o, v) in out.iter_mut().zip(cost.per_worker.iter().chain(std::iter::repeat(&0))) {
            *o = *v;
        }
        *total = cost.total;
        Ok(())
    })
}

/// Kernel report for the dataset as JSON, kernel matrices included only
/// when `include_matrices` is set. Release with [`gist_string_free`].
///
/// # Safety
/// `ds` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gist_kernel_report_json(
    ds: *const GistDataset,
    m: usize,
    d1: usize,
    include_matrices: bool,
    out: *mut *mut c_char,
) -> GistStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let report = kernel_report(&ds.bundle.graph, m, d1)?;
        let mut value = serde_json::to_value(&report).map_err(Error::from)?;
        if !include_matrices {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("h_inf");
                obj.remove("g_inf");
            }
        }
        *out = into_c_string(value.to_string());
        Ok(())
    })
}
