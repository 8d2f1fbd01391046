//! C bindings for the parser toolkit. Objects cross the boundary as opaque
//! pointers owned by the caller and released through the matching `_free`
//! call. Every fallible function returns an [`XlpStatus`]; after a failure
//! the thread's last error message is readable through [`xlp_last_error`]
//! and stays valid until the next failure on the same thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use xlparse::clustering::{read_clusters, Clustering};
use xlparse::error::{Error, Result};
use xlparse::evaluation::{score, ScoreOptions};
use xlparse::learning::{parse_treebank, train, Model, TrainOptions};
use xlparse::pipeline::{ensure_lexforms, load_model, load_treebank, open_in, save_model, save_treebank};
use xlparse::scoring::{ClusterContext, Family, FamilySet};
use xlparse::treebank::Treebank;

/// Call outcome. Numeric values match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum XlpStatus {
    Ok = 0,
    /// Invalid arguments: null pointers, bad flag combinations.
    Usage = 2,
    /// Unreadable or malformed inputs.
    Data = 3,
    /// Invariant violations and panics.
    Internal = 4,
}

/// A loaded model plus the cluster tables it was trained against.
pub struct XlpModel {
    model: Model,
    cross: Option<Clustering>,
    mono: Option<Clustering>,
}

/// A treebank held in memory.
pub struct XlpTreebank {
    bank: Treebank,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(error: Error) -> XlpStatus {
    let status = match error.exit_code() {
        2 => XlpStatus::Usage,
        3 => XlpStatus::Data,
        _ => XlpStatus::Internal,
    };
    let message = format!("{}: {}", error.class(), error);
    let message = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained a NUL byte").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    status
}

fn guarded<F: FnOnce() -> Result<()>>(body: F) -> XlpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => XlpStatus::Ok,
        Ok(Err(e)) => fail(e),
        Err(_) => fail(Error::internal("panic across the C boundary")),
    }
}

fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str> {
    if ptr.is_null() {
        return Err(Error::usage(format!("{} must not be null", name)));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Error::usage(format!("{} is not valid UTF-8", name)))
}

fn handle_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T> {
    if ptr.is_null() {
        return Err(Error::usage(format!("{} must not be null", name)));
    }
    Ok(unsafe { &*ptr })
}

fn out_arg<'a, T>(ptr: *mut *mut T, name: &str) -> Result<&'a mut *mut T> {
    if ptr.is_null() {
        return Err(Error::usage(format!("{} must not be null", name)));
    }
    Ok(unsafe { &mut *ptr })
}

fn file_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xlp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's last failure, as `class: detail`. Empty
/// before the first failure. The pointer stays valid until the next failing
/// call on this thread.
#[no_mangle]
pub extern "C" fn xlp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a model file written by `xlp_model_save` or the CLI.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On success `*out` owns the model.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_load(
    path: *const c_char,
    out: *mut *mut XlpModel,
) -> XlpStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let model = load_model(Path::new(path))?;
        *out = Box::into_raw(Box::new(XlpModel { model, cross: None, mono: None }));
        Ok(())
    })
}

/// Writes the model to a file.
///
/// # Safety
/// `model` must be a live handle from this library; `path` must point to a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_save(
    model: *const XlpModel,
    path: *const c_char,
) -> XlpStatus {
    guarded(|| {
        let handle = handle_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        save_model(Path::new(path), &handle.model)
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle from this library; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_free(model: *mut XlpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Beam width the model was trained with, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_beam_width(model: *const XlpModel) -> u32 {
    if model.is_null() {
        0
    } else {
        (*model).model.beam_width as u32
    }
}

fn set_clusters(
    model: *mut XlpModel,
    path: *const c_char,
    slot: impl FnOnce(&mut XlpModel, Clustering),
) -> XlpStatus {
    guarded(|| {
        if model.is_null() {
            return Err(Error::usage("model must not be null"));
        }
        let path = str_arg(path, "path")?;
        let clustering = read_clusters(open_in(Path::new(path))?, path)?;
        slot(unsafe { &mut *model }, clustering);
        Ok(())
    })
}

/// Loads the cross-lingual cluster table the model references.
///
/// # Safety
/// `model` must be a live handle from this library; `path` must point to a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_set_cross_clusters(
    model: *mut XlpModel,
    path: *const c_char,
) -> XlpStatus {
    set_clusters(model, path, |m, c| m.cross = Some(c))
}

/// Loads the monolingual cluster table the model references.
///
/// # Safety
/// `model` must be a live handle from this library; `path` must point to a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xlp_model_set_mono_clusters(
    model: *mut XlpModel,
    path: *const c_char,
) -> XlpStatus {
    set_clusters(model, path, |m, c| m.mono = Some(c))
}

/// Reads a CoNLL treebank file; `language` tags every sentence.
///
/// # Safety
/// `path` and `language` must point to NUL-terminated strings and `out` to
/// writable storage for one pointer. On success `*out` owns the treebank.
#[no_mangle]
pub unsafe extern "C" fn xlp_treebank_load(
    path: *const c_char,
    language: *const c_char,
    out: *mut *mut XlpTreebank,
) -> XlpStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let language = str_arg(language, "language")?;
        let bank = load_treebank(Path::new(path), language)?;
        *out = Box::into_raw(Box::new(XlpTreebank { bank }));
        Ok(())
    })
}

/// Writes the treebank as CoNLL-U.
///
/// # Safety
/// `treebank` must be a live handle from this library; `path` must point to
/// a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xlp_treebank_save(
    treebank: *const XlpTreebank,
    path: *const c_char,
) -> XlpStatus {
    guarded(|| {
        let handle = handle_arg(treebank, "treebank")?;
        let path = str_arg(path, "path")?;
        save_treebank(Path::new(path), &handle.bank)
    })
}

/// Sentence count, or 0 for a null handle.
///
/// # Safety
/// `treebank` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn xlp_treebank_len(treebank: *const XlpTreebank) -> usize {
    if treebank.is_null() {
        0
    } else {
        (*treebank).bank.len()
    }
}

/// Releases a treebank handle. Null is ignored.
///
/// # Safety
/// `treebank` must be null or a live handle from this library; it must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xlp_treebank_free(treebank: *mut XlpTreebank) {
    if !treebank.is_null() {
        drop(Box::from_raw(treebank));
    }
}

/// Parses every sentence of `input` with the model, writing a new treebank
/// to `out`. Cluster tables referenced by the model must have been loaded
/// first. Tokens without a lexical value get their own form when the model
/// uses lexical features. `threads` 0 or 1 parses serially.
///
/// # Safety
/// `model` and `input` must be live handles from this library and `out`
/// must point to writable storage for one pointer. On success `*out` owns
/// the parsed treebank.
#[no_mangle]
pub unsafe extern "C" fn xlp_parse(
    model: *const XlpModel,
    input: *const XlpTreebank,
    threads: u32,
    out: *mut *mut XlpTreebank,
) -> XlpStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        let handle = handle_arg(model, "model")?;
        let input = handle_arg(input, "input")?;
        if handle.model.cluster_refs.cross.is_some() && handle.cross.is_none() {
            return Err(Error::usage(
                "model uses cross-lingual clusters; call xlp_model_set_cross_clusters first",
            ));
        }
        if handle.model.cluster_refs.mono.is_some() && handle.mono.is_none() {
            return Err(Error::usage(
                "model uses monolingual clusters; call xlp_model_set_mono_clusters first",
            ));
        }
        let clusters =
            ClusterContext { cross: handle.cross.as_ref(), mono: handle.mono.as_ref() };
        let mut bank = input.bank.clone();
        if handle.model.families.contains(Family::Lexical) {
            ensure_lexforms(&mut bank);
        }
        let parsed = parse_treebank(&handle.model, &bank, &clusters, threads.max(1) as usize)?;
        *out = Box::into_raw(Box::new(XlpTreebank { bank: parsed }));
        Ok(())
    })
}

/// Trains a model on a fully annotated treebank. `families` is a bitmask:
/// 1 = POS, 2 = cluster, 4 = lexical. Cluster features need at least one
/// cluster file; paths may be null otherwise.
///
/// # Safety
/// `treebank` must be a live handle from this library; `cross_path` and
/// `mono_path` must each be null or point to a NUL-terminated string; `out`
/// must point to writable storage for one pointer. On success `*out` owns
/// the model.
#[no_mangle]
pub unsafe extern "C" fn xlp_train(
    treebank: *const XlpTreebank,
    families: u8,
    cross_path: *const c_char,
    mono_path: *const c_char,
    epochs: u32,
    beam: u32,
    seed: u64,
    out: *mut *mut XlpModel,
) -> XlpStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        let handle = handle_arg(treebank, "treebank")?;
        let families = FamilySet::from_bits(families)?;
        if beam == 0 {
            return Err(Error::usage("beam width must be positive"));
        }
        if families.contains(Family::Cluster) && cross_path.is_null() && mono_path.is_null() {
            return Err(Error::usage("cluster features need a cluster file"));
        }
        let read = |ptr: *const c_char, name: &str| -> Result<Option<(Clustering, String)>> {
            if ptr.is_null() {
                return Ok(None);
            }
            let path = str_arg(ptr, name)?;
            let clustering = read_clusters(open_in(Path::new(path))?, path)?;
            Ok(Some((clustering, file_name(path))))
        };
        let cross = read(cross_path, "cross_path")?;
        let mono = read(mono_path, "mono_path")?;
        let clusters = ClusterContext {
            cross: cross.as_ref().map(|(c, _)| c),
            mono: mono.as_ref().map(|(c, _)| c),
        };
        let options = TrainOptions {
            epochs,
            seed,
            beam_width: beam as usize,
            ..TrainOptions::default()
        };
        let (mut model, _) = train(&handle.bank, families, &clusters, &options)?;
        model.cluster_refs.cross = cross.as_ref().map(|(_, n)| n.clone());
        model.cluster_refs.mono = mono.as_ref().map(|(_, n)| n.clone());
        model.metadata.insert("treebank".to_string(), handle.bank.language.clone());
        *out = Box::into_raw(Box::new(XlpModel {
            model,
            cross: cross.map(|(c, _)| c),
            mono: mono.map(|(c, _)| c),
        }));
        Ok(())
    })
}

/// Scores `pred` against `gold`. Attachment scores are percentages in
/// [0, 100], written to `uas` and `las` when those pointers are non-null.
///
/// # Safety
/// `gold` and `pred` must be live handles from this library; `uas` and
/// `las` must each be null or point to writable doubles.
#[no_mangle]
pub unsafe extern "C" fn xlp_evaluate(
    gold: *const XlpTreebank,
    pred: *const XlpTreebank,
    exclude_punct: bool,
    uas: *mut f64,
    las: *mut f64,
) -> XlpStatus {
    guarded(|| {
        let gold = handle_arg(gold, "gold")?;
        let pred = handle_arg(pred, "pred")?;
        let evaluation = score(&gold.bank, &pred.bank, &ScoreOptions { exclude_punct })?;
        if !uas.is_null() {
            unsafe { *uas = evaluation.uas() };
        }
        if !las.is_null() {
            unsafe { *las = evaluation.las() };
        }
        Ok(())
    })
}
