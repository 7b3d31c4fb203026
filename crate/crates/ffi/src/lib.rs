//! C ABI for cachelearn.
//!
//! Objects cross the boundary as opaque handles created by `cl_*_new` /
//! `cl_*_load` functions and released by the matching `cl_*_free`. Every
//! fallible function returns a [`ClStatus`]; on failure the message is
//! available from [`cl_last_error`] on the same thread.
//!
//! Strings are returned through caller buffers: the function writes at most
//! `len` bytes including the terminating NUL, stores the full required size
//! in `*needed`, and returns `CL_BUFFER_TOO_SMALL` if it did not fit.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cachelearn::cache::ActionVector;
use cachelearn::harness::{run_seed, ExperimentConfig, RunRecord};
use cachelearn::mdp::{build_mdp, policy_iteration};
use cachelearn::network::network_cost;
use cachelearn::single_node::SingleNodeEnv;
use cachelearn::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Io = 5,
    Utf8 = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed and validated experiment configuration.
pub struct ClConfig(ExperimentConfig);

/// Cost trace of one seed.
pub struct ClRecord(RunRecord);

/// Single-cache environment driven step by step from C.
pub struct ClEnv(SingleNodeEnv);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(ClStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } | Error::ConfigParse(_) => ClStatus::Config,
            Error::Io { .. } => ClStatus::Io,
            Error::InvalidArgument(_) | Error::InvalidPartition { .. } => ClStatus::InvalidArgument,
            _ => ClStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: ClStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ClStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ClStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside cachelearn");
            ClStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(ClStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(ClStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(ClStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(ClStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(ClStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let bytes = s.as_bytes();
    if !needed.is_null() {
        needed.write(bytes.len() + 1);
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err(fail(
            ClStatus::BufferTooSmall,
            format!("{} bytes required", bytes.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    buf.add(bytes.len()).write(0);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `cl_*` call on the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_config_load(path: *const c_char, out: *mut *mut ClConfig) -> ClStatus {
    guard(|| {
        let path = text(path, "path")?;
        let cfg = ExperimentConfig::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(ClConfig(cfg))), "out")
    })
}

/// Parses and validates a TOML configuration held in memory.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_config_parse(toml: *const c_char, out: *mut *mut ClConfig) -> ClStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml_str(text(toml, "toml")?)?;
        write_out(out, Box::into_raw(Box::new(ClConfig(cfg))), "out")
    })
}

/// # Safety
/// `cfg` must come from `cl_config_load` / `cl_config_parse` and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cl_config_free(cfg: *mut ClConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Number of configured seeds.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_config_seed_count(cfg: *const ClConfig, out: *mut usize) -> ClStatus {
    guard(|| write_out(out, borrow(cfg, "cfg")?.0.seed_list().len(), "out"))
}

/// Copies the configured seeds into `seeds` (capacity `len`).
///
/// # Safety
/// `cfg` must be a live handle; `seeds` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cl_config_seeds(cfg: *const ClConfig, seeds: *mut u64, len: usize) -> ClStatus {
    guard(|| {
        let list = borrow(cfg, "cfg")?.0.seed_list();
        if seeds.is_null() {
            return Err(fail(ClStatus::NullPointer, "seeds is null"));
        }
        if len < list.len() {
            return Err(fail(ClStatus::BufferTooSmall, format!("{} seeds", list.len())));
        }
        ptr::copy_nonoverlapping(list.as_ptr(), seeds, list.len());
        Ok(())
    })
}

/// Runs the configured scenario for one seed.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_run_seed(cfg: *const ClConfig, seed: u64, out: *mut *mut ClRecord) -> ClStatus {
    guard(|| {
        let record = run_seed(&borrow(cfg, "cfg")?.0, seed)?;
        write_out(out, Box::into_raw(Box::new(ClRecord(record))), "out")
    })
}

/// # Safety
/// `rec` must come from `cl_run_seed` and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cl_record_free(rec: *mut ClRecord) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Number of steps in the trace.
///
/// # Safety
/// `rec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_record_steps(rec: *const ClRecord, out: *mut usize) -> ClStatus {
    guard(|| write_out(out, borrow(rec, "rec")?.0.steps(), "out"))
}

/// Number of policy columns; column 0 is the primary policy.
///
/// # Safety
/// `rec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_record_column_count(rec: *const ClRecord, out: *mut usize) -> ClStatus {
    guard(|| write_out(out, borrow(rec, "rec")?.0.columns.len() + 1, "out"))
}

fn column(rec: &RunRecord, index: usize) -> Result<(&str, &[f64]), Failure> {
    if index == 0 {
        return Ok((&rec.policy, &rec.cost));
    }
    rec.columns
        .get(index - 1)
        .map(|(n, v)| (n.as_str(), v.as_slice()))
        .ok_or_else(|| fail(ClStatus::InvalidArgument, format!("column {index} out of range")))
}

/// Name of policy column `index`.
///
/// # Safety
/// `rec` must be a live handle; `buf` must hold `len` bytes; `needed` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn cl_record_column_name(
    rec: *const ClRecord,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ClStatus {
    guard(|| write_str(column(&borrow(rec, "rec")?.0, index)?.0, buf, len, needed))
}

/// Copies policy column `index` into `values`, which must hold at least
/// `cl_record_steps` entries.
///
/// # Safety
/// `rec` must be a live handle; `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cl_record_column(
    rec: *const ClRecord,
    index: usize,
    values: *mut f64,
    len: usize,
) -> ClStatus {
    guard(|| {
        let (_, v) = column(&borrow(rec, "rec")?.0, index)?;
        if values.is_null() {
            return Err(fail(ClStatus::NullPointer, "values is null"));
        }
        if len < v.len() {
            return Err(fail(ClStatus::BufferTooSmall, format!("{} values", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), values, v.len());
        Ok(())
    })
}

/// The trace in the harness CSV format.
///
/// # Safety
/// `rec` must be a live handle; `buf` must hold `len` bytes; `needed` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn cl_record_csv(
    rec: *const ClRecord,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ClStatus {
    guard(|| write_str(&borrow(rec, "rec")?.0.to_csv(), buf, len, needed))
}

/// Optimal single-node policy for `seed` as JSON (values, policy, indexing).
///
/// # Safety
/// `cfg` must be a live handle; `buf` must hold `len` bytes; `needed` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn cl_oracle_json(
    cfg: *const ClConfig,
    seed: u64,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ClStatus {
    guard(|| {
        let env = borrow(cfg, "cfg")?.0.env_config(seed)?;
        let (mdp, _) = build_mdp(&env.global, &env.local, env.files, env.capacity, &env.weights, env.gamma)?;
        let json = policy_iteration(&mdp)?.to_json(&mdp)?;
        write_str(&json, buf, len, needed)
    })
}

/// Single-cache environment of a single-node configuration.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_env_new(cfg: *const ClConfig, seed: u64, out: *mut *mut ClEnv) -> ClStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        if cfg.scenario.is_network() {
            return Err(fail(ClStatus::InvalidArgument, "environment needs a single-node configuration"));
        }
        let env = SingleNodeEnv::new(cfg.env_config(seed)?, seed)?;
        write_out(out, Box::into_raw(Box::new(ClEnv(env))), "out")
    })
}

/// # Safety
/// `env` must come from `cl_env_new` and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cl_env_free(env: *mut ClEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// File count and cache capacity.
///
/// # Safety
/// `env` must be a live handle; `files` and `capacity` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_env_dims(env: *const ClEnv, files: *mut usize, capacity: *mut usize) -> ClStatus {
    guard(|| {
        let c = borrow(env, "env")?.0.config();
        write_out(files, c.files, "files")?;
        write_out(capacity, c.capacity, "capacity")
    })
}

/// Current chain indices and cache contents (`action` holds `files` bytes).
///
/// # Safety
/// `env` must be a live handle; the out pointers must be writable and
/// `action` must hold `files` bytes.
#[no_mangle]
pub unsafe extern "C" fn cl_env_state(
    env: *const ClEnv,
    global_idx: *mut usize,
    local_idx: *mut usize,
    action: *mut u8,
    files: usize,
) -> ClStatus {
    guard(|| {
        let s = borrow(env, "env")?.0.state();
        let bits = s.action.bits();
        if action.is_null() {
            return Err(fail(ClStatus::NullPointer, "action is null"));
        }
        if files != bits.len() {
            return Err(fail(ClStatus::InvalidArgument, format!("expected {} files", bits.len())));
        }
        ptr::copy_nonoverlapping(bits.as_ptr(), action, bits.len());
        write_out(global_idx, s.global_idx, "global_idx")?;
        write_out(local_idx, s.local_idx, "local_idx")
    })
}

/// Caches `action` (0/1 bytes, exactly `capacity` ones) for the next slot and
/// returns the slot's cost.
///
/// # Safety
/// `env` must be a live handle; `action` must hold `files` bytes; `cost`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_env_step(env: *mut ClEnv, action: *const u8, files: usize, cost: *mut f64) -> ClStatus {
    guard(|| {
        let env = &mut borrow_mut(env, "env")?.0;
        if action.is_null() {
            return Err(fail(ClStatus::NullPointer, "action is null"));
        }
        let bits = std::slice::from_raw_parts(action, files).to_vec();
        let a = ActionVector::new(bits, env.config().capacity)?;
        let out = env.step(&a)?;
        write_out(cost, out.cost, "cost")
    })
}

/// Network cost `sum_f D_f (2 - a0_f)` of parent action `a0` given the
/// weighted leaf misses `misses`.
///
/// # Safety
/// `misses` must hold `files` doubles and `a0` `files` bytes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cl_network_cost(
    misses: *const f64,
    a0: *const u8,
    files: usize,
    out: *mut f64,
) -> ClStatus {
    guard(|| {
        if misses.is_null() || a0.is_null() {
            return Err(fail(ClStatus::NullPointer, "misses or a0 is null"));
        }
        let d = std::slice::from_raw_parts(misses, files);
        let a = ActionVector::try_from(std::slice::from_raw_parts(a0, files).to_vec())?;
        write_out(out, network_cost(d, &a)?, "out")
    })
}
