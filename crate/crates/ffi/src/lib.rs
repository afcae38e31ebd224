//! C ABI over the xdomain library.
//!
//! Conventions:
//! - every fallible function returns an [`XdStatus`]; on failure a message
//!   is available from [`xd_last_error`] on the same thread;
//! - strings are UTF-8 and NUL-terminated; strings returned through `out`
//!   parameters are owned by the caller and released with [`xd_string_free`];
//! - snapshots are opaque handles from [`xd_snapshot_open`], released with
//!   [`xd_snapshot_free`]. A handle may be shared across threads for reads.
//! - panics never cross the boundary; they surface as `XD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use serde::Deserialize;
use xdomain::clustering::purity;
use xdomain::corpus::split_sentences;
use xdomain::embedding::{fallback_encode, provider_from_spec, EmbedError, EmbeddingKind, EmbeddingProvider};
use xdomain::search::{faceted_search, keyword_filter, zoom_in, Query, SearchConfig, SearchError};
use xdomain::snapshot::{Snapshot, SnapshotError};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XdStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8, malformed JSON or a rejected request.
    InvalidArgument = 1,
    /// A file or directory could not be read.
    Io = 2,
    /// The embedding provider failed or does not match the snapshot.
    Provider = 3,
    /// Output buffer too small.
    BufferTooSmall = 4,
    Internal = 5,
    Panic = 6,
}

/// Opaque snapshot handle with its query-time sentence provider.
pub struct XdSnapshot {
    snapshot: Snapshot,
    provider: Arc<dyn EmbeddingProvider>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(XdStatus, String);

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let status = match &e {
            e if e.is_client_error() => XdStatus::InvalidArgument,
            SearchError::Embed(_) => XdStatus::Provider,
            _ => XdStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SnapshotError> for Failure {
    fn from(e: SnapshotError) -> Self {
        let status = match &e {
            SnapshotError::Provider(_) | SnapshotError::Embed(_) => XdStatus::Provider,
            SnapshotError::Manifest(_) | SnapshotError::Inconsistent(_) => XdStatus::InvalidArgument,
            _ => XdStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        let status = match e {
            EmbedError::EmptyText | EmbedError::InvalidDimension(_) => XdStatus::InvalidArgument,
            _ => XdStatus::Provider,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(XdStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            XdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            XdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("out is null"));
    }
    let c = CString::new(s).map_err(|_| Failure(XdStatus::Internal, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("response serializes")
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn xd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn xd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn xd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens the snapshot in `dir`. `provider` is `fallback` or `http:<url>`
/// and must produce vectors of the indexed dimension.
///
/// # Safety
/// `dir` and `provider` must be NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn xd_snapshot_open(
    dir: *const c_char,
    provider: *const c_char,
    out: *mut *mut XdSnapshot,
) -> XdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let dir = str_arg(dir, "dir")?;
        let spec = str_arg(provider, "provider")?;
        let snapshot = Snapshot::load(dir)?;
        let dim = snapshot.manifest.sentence_provider.dimension;
        let provider = provider_from_spec(spec, EmbeddingKind::Sentence, dim)?;
        snapshot.check_query_provider(provider.as_ref())?;
        *out = Box::into_raw(Box::new(XdSnapshot { snapshot, provider }));
        Ok(())
    })
}

/// Releases a snapshot handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`xd_snapshot_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn xd_snapshot_free(handle: *mut XdSnapshot) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Build manifest plus cluster sizes and descriptors, as JSON:
/// `{manifest, clusters: [{id, size, descriptors}]}`.
///
/// # Safety
/// `handle` must be a live snapshot handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xd_snapshot_info(handle: *const XdSnapshot, out: *mut *mut c_char) -> XdStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| invalid("handle is null"))?;
        let s = &h.snapshot;
        let clusters: Vec<serde_json::Value> = (0..s.clusters.k())
            .map(|c| {
                serde_json::json!({
                    "id": c,
                    "size": s.clusters.doc_ids[c].len(),
                    "descriptors": s.clusters.descriptors[c],
                })
            })
            .collect();
        let body = serde_json::json!({ "manifest": s.manifest, "clusters": clusters });
        write_string(out, body.to_string())
    })
}

/// Sentence split of `text` as a JSON array of strings.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xd_split_sentences(text: *const c_char, out: *mut *mut c_char) -> XdStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let sentences = split_sentences(text).map_err(|e| invalid(e.to_string()))?;
        write_string(out, to_json(&sentences))
    })
}

#[derive(Deserialize)]
struct Request {
    #[serde(rename = "abstract")]
    abstract_text: String,
    sentence_index: usize,
    t: Option<usize>,
    l: Option<usize>,
    m: Option<usize>,
    paper_id: Option<String>,
    keyword: Option<String>,
    #[serde(default)]
    selected_clusters: Vec<u32>,
}

fn parse_request(json: &str) -> Result<(Request, SearchConfig), Failure> {
    let req: Request = serde_json::from_str(json).map_err(|e| invalid(format!("malformed request: {e}")))?;
    let d = SearchConfig::default();
    let cfg = SearchConfig {
        t: req.t.unwrap_or(d.t),
        l: req.l.unwrap_or(d.l),
        m: req.m.unwrap_or(d.m),
        ..d
    };
    Ok((req, cfg))
}

fn query_for(h: &XdSnapshot, req: &Request) -> Result<Query, Failure> {
    Ok(Query::new(
        &req.abstract_text,
        req.sentence_index,
        req.paper_id.clone(),
        h.provider.as_ref(),
    )?)
}

/// Faceted search. Request JSON: `{abstract, sentence_index, t?, paper_id?,
/// keyword?}`; response: array of result groups.
///
/// # Safety
/// `handle` must be a live snapshot handle; `request` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn xd_search(
    handle: *const XdSnapshot,
    request: *const c_char,
    out: *mut *mut c_char,
) -> XdStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| invalid("handle is null"))?;
        let (req, cfg) = parse_request(str_arg(request, "request")?)?;
        let query = query_for(h, &req)?;
        let mut groups = faceted_search(&h.snapshot, &query, &cfg)?;
        if let Some(kw) = &req.keyword {
            groups = keyword_filter(&groups, kw)?;
        }
        write_string(out, to_json(&groups))
    })
}

/// Zoom-in. Request JSON: `{abstract, sentence_index, selected_clusters,
/// t?, l?, m?, paper_id?, keyword?}`; response: zoom result object.
///
/// # Safety
/// As for [`xd_search`].
#[no_mangle]
pub unsafe extern "C" fn xd_zoom(
    handle: *const XdSnapshot,
    request: *const c_char,
    out: *mut *mut c_char,
) -> XdStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| invalid("handle is null"))?;
        let (req, cfg) = parse_request(str_arg(request, "request")?)?;
        let query = query_for(h, &req)?;
        let mut result = zoom_in(&h.snapshot, &query, &req.selected_clusters, &cfg)?;
        if let Some(kw) = &req.keyword {
            result = result.filtered(kw)?;
        }
        write_string(out, to_json(&result))
    })
}

/// Cluster purity of `n` aligned assignments and labels, in [0, 1].
///
/// # Safety
/// `assignments` and `labels` must point to `n` readable values; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn xd_purity(
    assignments: *const u32,
    labels: *const u32,
    n: usize,
    out: *mut f64,
) -> XdStatus {
    guard(|| {
        if assignments.is_null() || labels.is_null() || out.is_null() {
            return Err(invalid("null pointer"));
        }
        let a = std::slice::from_raw_parts(assignments, n);
        let l = std::slice::from_raw_parts(labels, n);
        let p = purity(a, l).map_err(|e| invalid(e.to_string()))?;
        *out = p.value();
        Ok(())
    })
}

/// Deterministic offline embedding of `text` into `out[0..dim]`
/// (unit-normalized). `out_len` must be at least `dim`.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must point to `out_len` writable
/// floats.
#[no_mangle]
pub unsafe extern "C" fn xd_fallback_encode(
    text: *const c_char,
    dim: usize,
    out: *mut f32,
    out_len: usize,
) -> XdStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        if out_len < dim {
            return Err(Failure(
                XdStatus::BufferTooSmall,
                format!("buffer holds {out_len} floats, {dim} needed"),
            ));
        }
        let v = fallback_encode(text, dim)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(v.as_slice());
        Ok(())
    })
}
