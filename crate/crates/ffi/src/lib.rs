//! C ABI over the coordination runtime.
//!
//! Every function returns a `CohrtStatus` (or a plain value documented as
//! such). On failure, `cohrt_last_error_message` describes the error for the
//! calling thread. Strings handed out by this library are NUL-terminated,
//! owned by the caller and released with `cohrt_string_free`. Handles are
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cohrt_core::coordination_server::{Coordinator, LoadedLog, Outbound};
use cohrt_core::fluency_metrics::{fluency_report, FluencyReport, MetricsOptions};
use cohrt_core::ids::AgentId;
use cohrt_core::protocol::{decode_message, encode_message, PROTOCOL_VERSION};
use cohrt_core::world_model::TaskConfig;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohrtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    DecodeError = 4,
    LogError = 5,
    MetricsError = 6,
    UnknownAgent = 7,
    Panic = 8,
}

/// A running coordination session driven by the caller's transport.
pub struct CohrtSession {
    inner: Coordinator,
}

/// Fluency metrics computed from a session log.
pub struct CohrtReport {
    inner: FluencyReport,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
struct FfiError {
    status: CohrtStatus,
    message: String,
}

fn fail(status: CohrtStatus, message: impl Into<String>) -> FfiError {
    FfiError {
        status,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> CohrtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CohrtStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(_) => {
            set_last_error("internal panic");
            CohrtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(fail(CohrtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CohrtStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], FfiError> {
    if p.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(fail(CohrtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn session_mut<'a>(s: *mut CohrtSession) -> Result<&'a mut Coordinator, FfiError> {
    s.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| fail(CohrtStatus::NullPointer, "session is null"))
}

unsafe fn session_ref<'a>(s: *const CohrtSession) -> Result<&'a Coordinator, FfiError> {
    s.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| fail(CohrtStatus::NullPointer, "session is null"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(fail(CohrtStatus::NullPointer, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| fail(CohrtStatus::InvalidUtf8, "string contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// JSON array of `{"to": <conn>, "frame": "<frame text>"}`.
fn outbound_json(outs: &[Outbound]) -> Result<String, FfiError> {
    let mut items = Vec::with_capacity(outs.len());
    for o in outs {
        let frame = encode_message(&o.msg).map_err(|e| fail(CohrtStatus::DecodeError, e.to_string()))?;
        items.push(serde_json::json!({
            "to": o.to,
            "frame": String::from_utf8_lossy(&frame),
        }));
    }
    Ok(serde_json::Value::Array(items).to_string())
}

/// Wire protocol version spoken by this library.
#[no_mangle]
pub extern "C" fn cohrt_protocol_version() -> u32 {
    PROTOCOL_VERSION
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cohrt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cohrt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session from a TOML task config.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_new(config_toml: *const c_char, out: *mut *mut CohrtSession) -> CohrtStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CohrtStatus::NullPointer, "output pointer is null"));
        }
        let text = str_arg(config_toml, "config")?;
        let config = TaskConfig::from_toml(text).map_err(|e| fail(CohrtStatus::InvalidConfig, e.to_string()))?;
        let inner = Coordinator::new(config, 0).map_err(|e| fail(CohrtStatus::InvalidConfig, e.to_string()))?;
        *out = Box::into_raw(Box::new(CohrtSession { inner }));
        Ok(())
    })
}

/// Destroys a session. NULL is ignored.
///
/// # Safety
/// `session` must come from `cohrt_session_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_free(session: *mut CohrtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Registers a new connection id.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_connect(session: *mut CohrtSession, conn: u64) -> CohrtStatus {
    guard(|| {
        session_mut(session)?.connect(conn);
        Ok(())
    })
}

/// Feeds one received frame from `conn`. Writes the frames to send as a JSON
/// array of `{"to", "frame"}` objects to `out_json`. A frame that does not
/// decode is answered with an `Error` frame and reported as `DecodeError`.
///
/// # Safety
/// `session` must be a live handle, `frame` must point to `len` readable
/// bytes and `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_handle_frame(
    session: *mut CohrtSession,
    conn: u64,
    frame: *const u8,
    len: usize,
    now_ms: u64,
    out_json: *mut *mut c_char,
) -> CohrtStatus {
    let mut decode_failure = None;
    let status = guard(|| {
        let coord = session_mut(session)?;
        let bytes = bytes_arg(frame, len, "frame")?;
        let outs = match decode_message(bytes) {
            Ok(msg) => coord.handle(conn, msg, now_ms),
            Err(e) => {
                decode_failure = Some(e.to_string());
                coord.reject(conn, "decode_error", e.to_string())
            }
        };
        put_string(out_json, outbound_json(&outs)?)
    });
    match (status, decode_failure) {
        (CohrtStatus::Ok, Some(msg)) => {
            set_last_error(&msg);
            CohrtStatus::DecodeError
        }
        (s, _) => s,
    }
}

/// Advances the session clock: releases abandoned claims, runs the
/// perception watchdog. Output as for `cohrt_session_handle_frame`.
///
/// # Safety
/// `session` must be a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_tick(
    session: *mut CohrtSession,
    now_ms: u64,
    out_json: *mut *mut c_char,
) -> CohrtStatus {
    guard(|| {
        let outs = session_mut(session)?.tick(now_ms);
        put_string(out_json, outbound_json(&outs)?)
    })
}

/// Reports that `conn` went away. Output as for `cohrt_session_handle_frame`.
///
/// # Safety
/// `session` must be a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_disconnect(
    session: *mut CohrtSession,
    conn: u64,
    now_ms: u64,
    out_json: *mut *mut c_char,
) -> CohrtStatus {
    guard(|| {
        let outs = session_mut(session)?.disconnect(conn, now_ms);
        put_string(out_json, outbound_json(&outs)?)
    })
}

/// 1 if the session has ended, 0 if it is running, -1 if `session` is NULL.
///
/// # Safety
/// `session` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_is_finished(session: *const CohrtSession) -> i32 {
    match session.as_ref() {
        None => -1,
        Some(s) => s.inner.is_finished() as i32,
    }
}

/// Current state snapshot as JSON.
///
/// # Safety
/// `session` must be a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_state_json(
    session: *const CohrtSession,
    out_json: *mut *mut c_char,
) -> CohrtStatus {
    guard(|| {
        let snap = session_ref(session)?.world().snapshot();
        let text = serde_json::to_string(&snap).map_err(|e| fail(CohrtStatus::Panic, e.to_string()))?;
        put_string(out_json, text)
    })
}

/// The session log so far, one frame per line.
///
/// # Safety
/// `session` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_session_log(session: *const CohrtSession, out: *mut *mut c_char) -> CohrtStatus {
    guard(|| {
        let log = session_ref(session)?.log();
        put_string(out, String::from_utf8_lossy(log.as_bytes()).into_owned())
    })
}

/// Checks one frame against the protocol. On success writes its kind.
///
/// # Safety
/// `frame` must point to `len` readable bytes; `out_kind` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cohrt_frame_validate(frame: *const u8, len: usize, out_kind: *mut *mut c_char) -> CohrtStatus {
    guard(|| {
        let bytes = bytes_arg(frame, len, "frame")?;
        let msg = decode_message(bytes).map_err(|e| fail(CohrtStatus::DecodeError, e.to_string()))?;
        if !out_kind.is_null() {
            put_string(out_kind, msg.kind().as_str().to_owned())?;
        }
        Ok(())
    })
}

/// Computes fluency metrics from a complete session log.
///
/// # Safety
/// `log` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_from_log(
    log: *const u8,
    len: usize,
    min_activity_ms: u64,
    out: *mut *mut CohrtReport,
) -> CohrtStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CohrtStatus::NullPointer, "output pointer is null"));
        }
        let bytes = bytes_arg(log, len, "log")?;
        let loaded = LoadedLog::parse(bytes).map_err(|e| fail(CohrtStatus::LogError, e.to_string()))?;
        let inner = fluency_report(&loaded.events, &MetricsOptions { min_activity_ms })
            .map_err(|e| fail(CohrtStatus::MetricsError, e.to_string()))?;
        *out = Box::into_raw(Box::new(CohrtReport { inner }));
        Ok(())
    })
}

/// Destroys a report. NULL is ignored.
///
/// # Safety
/// `report` must come from `cohrt_report_from_log` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_free(report: *mut CohrtReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Session duration in ms, or 0 if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_task_completion_ms(report: *const CohrtReport) -> u64 {
    report.as_ref().map_or(0, |r| r.inner.task_completion_ms)
}

/// Fraction of the session with every agent active, or -1 if `report` is NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_concurrent_activity(report: *const CohrtReport) -> f64 {
    report.as_ref().map_or(-1.0, |r| r.inner.concurrent_activity_fraction)
}

/// Idle time of `agent` (`robot` or `human:<id>`).
///
/// # Safety
/// `report` must be a live handle, `agent` NUL-terminated, `out_ms` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_idle_ms(
    report: *const CohrtReport,
    agent: *const c_char,
    out_ms: *mut u64,
) -> CohrtStatus {
    guard(|| {
        let r = report
            .as_ref()
            .ok_or_else(|| fail(CohrtStatus::NullPointer, "report is null"))?;
        if out_ms.is_null() {
            return Err(fail(CohrtStatus::NullPointer, "output pointer is null"));
        }
        let name = str_arg(agent, "agent")?;
        let id: AgentId = name
            .parse()
            .map_err(|e: cohrt_core::ids::ParseAgentError| fail(CohrtStatus::UnknownAgent, e.to_string()))?;
        let a = r
            .inner
            .agents
            .get(&id)
            .ok_or_else(|| fail(CohrtStatus::UnknownAgent, format!("{name} is not part of this session")))?;
        *out_ms = a.idle_ms;
        Ok(())
    })
}

/// The full report as JSON.
///
/// # Safety
/// `report` must be a live handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cohrt_report_json(report: *const CohrtReport, out_json: *mut *mut c_char) -> CohrtStatus {
    guard(|| {
        let r = report
            .as_ref()
            .ok_or_else(|| fail(CohrtStatus::NullPointer, "report is null"))?;
        let text = serde_json::to_string(&r.inner).map_err(|e| fail(CohrtStatus::Panic, e.to_string()))?;
        put_string(out_json, text)
    })
}
