//! C ABI for hybridplane.
//!
//! Specs and simulated worlds are opaque handles. Every function returns an
//! [`HpStatus`]; on failure [`hp_last_error`] describes what went wrong.
//! Results come back as NUL-terminated JSON strings owned by the caller and
//! released with [`hp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybridplane::control::{ChannelKey, ControlError};
use hybridplane::model::{ModelError, ParseError};
use hybridplane::simnet::{SimError, TunnelState};
use hybridplane::{DeploymentSpec, SimWorld};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not UTF-8.
    InvalidUtf8 = 2,
    /// The spec document is malformed or breaks the schema.
    ParseError = 3,
    /// The spec parsed but fails validation.
    ValidationFailed = 4,
    /// No such cluster, pod, service or channel.
    NotFound = 5,
    /// Allocator exhaustion, inconsistent configs or a caught panic.
    Internal = 6,
}

/// A parsed deployment spec.
pub struct HpSpec(DeploymentSpec);

/// A simulated network built from a spec's converged configs.
pub struct HpWorld {
    world: SimWorld,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(HpStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::Invalid(_) => HpStatus::ValidationFailed,
            _ => HpStatus::NotFound,
        };
        Failure(status, e.to_string())
    }
}

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        let status = match e {
            ControlError::ValidationFailed(_) => HpStatus::ValidationFailed,
            ControlError::UnknownCluster(_) | ControlError::UnknownService(_) => HpStatus::NotFound,
            _ => HpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match &e {
            SimError::ValidationFailed(_) => HpStatus::ValidationFailed,
            SimError::UnknownPod(_) | SimError::UnknownService(_) | SimError::UnknownChannel(_) => HpStatus::NotFound,
            SimError::Model(ModelError::Invalid(_)) | SimError::Control(ControlError::ValidationFailed(_)) => {
                HpStatus::ValidationFailed
            }
            _ => HpStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

/// Run `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HpStatus::Internal
        }
    }
}

unsafe fn arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HpStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(HpStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HpStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(HpStatus::NullArgument, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(HpStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(HpStatus::Internal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(HpStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Message for the most recent failed call on this thread, or null. Valid
/// until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a spec document. Parsing does not validate; see
/// [`hp_spec_validate`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_spec_parse(json: *const c_char, out: *mut *mut HpSpec) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let text = str_arg(json, "json")?;
        let spec = hybridplane::parse_spec(text.as_bytes()).map_err(|e| {
            let what = match e {
                ParseError::Syntax { .. } => "syntax",
                ParseError::Schema(_) => "schema",
            };
            Failure(HpStatus::ParseError, format!("{what}: {e}"))
        })?;
        put(out, HpSpec(spec))
    })
}

/// # Safety
/// `spec` must come from [`hp_spec_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_spec_free(spec: *mut HpSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Validation report as a JSON array of `{subject, kind, detail}`; empty
/// means valid. Returns `HP_STATUS_OK` either way.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_spec_validate(spec: *const HpSpec, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let spec = arg(spec, "spec")?;
        put_string(
            out,
            serde_json::to_string(&spec.0.validate()).expect("report serializes"),
        )
    })
}

/// Canonical JSON config for `cluster`.
///
/// # Safety
/// `spec` must be a live handle, `cluster` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hp_converge(spec: *const HpSpec, cluster: *const c_char, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let spec = arg(spec, "spec")?;
        let cluster = str_arg(cluster, "cluster")?;
        let cfg = hybridplane::converge(&spec.0, &cluster.into())?;
        put_string(out, cfg.to_canonical_json())
    })
}

/// Expected reachability matrix computed from the spec alone.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_oracle_matrix(spec: *const HpSpec, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let spec = arg(spec, "spec")?;
        put_string(out, hybridplane::oracle_matrix(&spec.0)?.to_canonical_json())
    })
}

/// Converge every cluster of `spec` and build a world with all tunnels up.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_world_new(spec: *const HpSpec, out: *mut *mut HpWorld) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let spec = arg(spec, "spec")?;
        put(
            out,
            HpWorld {
                world: SimWorld::converged(&spec.0)?,
            },
        )
    })
}

/// # Safety
/// `world` must come from [`hp_world_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_world_free(world: *mut HpWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Trace one connection. `HP_STATUS_OK` means a trace was produced; the
/// verdict is inside it.
///
/// # Safety
/// `world` must be a live handle, `pod` and `service` NUL-terminated and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_world_trace(
    world: *const HpWorld,
    pod: *const c_char,
    service: *const c_char,
    out: *mut *mut c_char,
) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let world = arg(world, "world")?;
        let pod = str_arg(pod, "pod")?;
        let service = str_arg(service, "service")?;
        let t = world.world.resolve_connection(&pod.into(), &service.into())?;
        put_string(out, t.to_canonical_json())
    })
}

/// Simulated reachability matrix under the current tunnel states.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_world_matrix(world: *const HpWorld, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        check_out(out)?;
        let world = arg(world, "world")?;
        put_string(out, hybridplane::reachability_matrix(&world.world).to_canonical_json())
    })
}

/// Bring the tunnel named `key` (`<mode>:<private cluster>:<service>`) up or
/// down.
///
/// # Safety
/// `world` must be a live handle not used concurrently by another thread,
/// and `key` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hp_world_set_tunnel(world: *mut HpWorld, key: *const c_char, up: bool) -> HpStatus {
    guard(|| {
        let world = world
            .as_mut()
            .ok_or_else(|| Failure(HpStatus::NullArgument, "`world` is null".into()))?;
        let key = str_arg(key, "key")?;
        let key: ChannelKey = key
            .parse()
            .map_err(|_| Failure(HpStatus::NotFound, format!("`{key}` is not a channel key")))?;
        let state = if up { TunnelState::Up } else { TunnelState::Down };
        world.world.set_tunnel_state(&key, state)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn hp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
