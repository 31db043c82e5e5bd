//! C ABI bindings for the grub replication framework.
//!
//! Conventions:
//! - Every object is an opaque handle created by a `*_new` function and
//!   released by the matching `*_free` function. `*_free` accepts null.
//! - Functions that can fail return a `grub_status` code (`GRUB_OK` == 0)
//!   and write results through out-pointers. Out-pointers are only written
//!   on success.
//! - Keys are arbitrary byte strings that must be valid UTF-8.
//! - Strings returned to the caller are freed with `grub_string_free`.
//!
//! The matching C declarations live in `include/grub.h`.

use std::ffi::CString;
use std::os::raw::c_char;
use std::slice;

use grub::decision::{AdaptiveKState, AdaptiveVariant, Decider, MemorizingState, MemorylessState};
use grub::sim::{self, Policy, SimConfig, SimResult};
use grub::trace::{Key, Operation, ReplState};

/// Status codes returned by fallible functions.
pub const GRUB_OK: i32 = 0;
/// A required pointer argument was null.
pub const GRUB_ERR_NULL: i32 = 1;
/// An argument was out of range (zero parameter, unknown enum value, ...).
pub const GRUB_ERR_INVALID: i32 = 2;
/// A key was not valid UTF-8.
pub const GRUB_ERR_UTF8: i32 = 3;
/// The simulation rejected the trace or configuration.
pub const GRUB_ERR_SIM: i32 = 4;

/// Replication states as seen across the ABI.
pub const GRUB_STATE_NR: u8 = 0;
pub const GRUB_STATE_R: u8 = 1;

fn state_code(state: ReplState) -> u8 {
    match state {
        ReplState::Nr => GRUB_STATE_NR,
        ReplState::R => GRUB_STATE_R,
    }
}

/// Opaque handle over any online replication policy.
pub struct GrubDecider {
    inner: Box<dyn Decider>,
}

/// Opaque handle over an operation trace under construction.
pub struct GrubTrace {
    ops: Vec<Operation>,
}

/// Opaque handle over a finished simulation run.
pub struct GrubSimResult {
    inner: SimResult,
}

/// Mirror of `sim::SimConfig` with C-representable fields.
///
/// `policy_kind`: 0 memoryless, 1 memorizing, 2 adaptive-k1, 3 adaptive-k2,
/// 4 baseline BL1 (nothing replicated), 5 baseline BL2 (everything replicated).
/// `policy_a`/`policy_b` carry the policy parameters: K for memoryless,
/// (K', D) for memorizing, (window, unused) for the adaptive variants.
#[repr(C)]
pub struct grub_sim_config {
    pub epoch_len: u64,
    pub block_time: u64,
    pub finality_blocks: u64,
    pub propagation_delay: u64,
    pub rng_seed: u64,
    pub policy_kind: i32,
    pub policy_a: u32,
    pub policy_b: u32,
    pub always_digest: u8,
}

unsafe fn key_from_raw(key: *const u8, key_len: usize) -> Result<Key, i32> {
    if key.is_null() {
        return Err(GRUB_ERR_NULL);
    }
    let bytes = slice::from_raw_parts(key, key_len);
    match std::str::from_utf8(bytes) {
        Ok(s) => Ok(Key::new(s)),
        Err(_) => Err(GRUB_ERR_UTF8),
    }
}

fn box_out<T>(out: *mut *mut T, value: T) -> i32 {
    if out.is_null() {
        return GRUB_ERR_NULL;
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    GRUB_OK
}

// ---------------------------------------------------------------------------
// Deciders
// ---------------------------------------------------------------------------

/// Creates a memoryless decider with read threshold `k` (must be > 0).
#[no_mangle]
pub extern "C" fn grub_decider_memoryless_new(k: u32, out: *mut *mut GrubDecider) -> i32 {
    match MemorylessState::new(k) {
        Ok(d) => box_out(out, GrubDecider { inner: Box::new(d) }),
        Err(_) => GRUB_ERR_INVALID,
    }
}

/// Creates a memorizing decider with cost ratio `k_prime` and hysteresis `d`
/// (both must be > 0).
#[no_mangle]
pub extern "C" fn grub_decider_memorizing_new(
    k_prime: u32,
    d: u32,
    out: *mut *mut GrubDecider,
) -> i32 {
    match MemorizingState::new(k_prime, d) {
        Ok(s) => box_out(out, GrubDecider { inner: Box::new(s) }),
        Err(_) => GRUB_ERR_INVALID,
    }
}

/// Creates an adaptive decider. `variant` is 1 or 2, `window` the number of
/// write intervals averaged, `threshold` the reads-per-write break-even point.
#[no_mangle]
pub extern "C" fn grub_decider_adaptive_new(
    variant: i32,
    window: usize,
    threshold: f64,
    out: *mut *mut GrubDecider,
) -> i32 {
    let variant = match variant {
        1 => AdaptiveVariant::K1,
        2 => AdaptiveVariant::K2,
        _ => return GRUB_ERR_INVALID,
    };
    match AdaptiveKState::new(variant, window, threshold) {
        Ok(s) => box_out(out, GrubDecider { inner: Box::new(s) }),
        Err(_) => GRUB_ERR_INVALID,
    }
}

/// Feeds one operation on `key` to the decider. `is_write` is 0 for a read.
/// On success writes the key's replication state after the operation
/// (GRUB_STATE_NR or GRUB_STATE_R) to `state_out`.
#[no_mangle]
pub unsafe extern "C" fn grub_decider_step(
    decider: *mut GrubDecider,
    key: *const u8,
    key_len: usize,
    is_write: u8,
    state_out: *mut u8,
) -> i32 {
    if decider.is_null() || state_out.is_null() {
        return GRUB_ERR_NULL;
    }
    let key = match key_from_raw(key, key_len) {
        Ok(k) => k,
        Err(code) => return code,
    };
    let decider = &mut *decider;
    decider.inner.step(&key, is_write != 0);
    *state_out = state_code(decider.inner.state_of(&key));
    GRUB_OK
}

/// Reads the current replication state of `key` without advancing the decider.
#[no_mangle]
pub unsafe extern "C" fn grub_decider_state(
    decider: *const GrubDecider,
    key: *const u8,
    key_len: usize,
    state_out: *mut u8,
) -> i32 {
    if decider.is_null() || state_out.is_null() {
        return GRUB_ERR_NULL;
    }
    let key = match key_from_raw(key, key_len) {
        Ok(k) => k,
        Err(code) => return code,
    };
    *state_out = state_code((*decider).inner.state_of(&key));
    GRUB_OK
}

/// Releases a decider. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn grub_decider_free(decider: *mut GrubDecider) {
    if !decider.is_null() {
        drop(Box::from_raw(decider));
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Creates an empty trace.
#[no_mangle]
pub extern "C" fn grub_trace_new(out: *mut *mut GrubTrace) -> i32 {
    box_out(out, GrubTrace { ops: Vec::new() })
}

/// Appends a write of `value_words` 32-byte words to `key`.
#[no_mangle]
pub unsafe extern "C" fn grub_trace_push_write(
    trace: *mut GrubTrace,
    key: *const u8,
    key_len: usize,
    value_words: u64,
) -> i32 {
    if trace.is_null() {
        return GRUB_ERR_NULL;
    }
    if value_words == 0 {
        return GRUB_ERR_INVALID;
    }
    let key = match key_from_raw(key, key_len) {
        Ok(k) => k,
        Err(code) => return code,
    };
    (*trace).ops.push(Operation::Write {
        key,
        words: value_words,
    });
    GRUB_OK
}

/// Appends a point read of `key`.
#[no_mangle]
pub unsafe extern "C" fn grub_trace_push_read(
    trace: *mut GrubTrace,
    key: *const u8,
    key_len: usize,
) -> i32 {
    if trace.is_null() {
        return GRUB_ERR_NULL;
    }
    let key = match key_from_raw(key, key_len) {
        Ok(k) => k,
        Err(code) => return code,
    };
    (*trace).ops.push(Operation::Read { key });
    GRUB_OK
}

/// Appends a range scan of up to `count` records starting at `start_key`.
#[no_mangle]
pub unsafe extern "C" fn grub_trace_push_scan(
    trace: *mut GrubTrace,
    start_key: *const u8,
    key_len: usize,
    count: u64,
) -> i32 {
    if trace.is_null() {
        return GRUB_ERR_NULL;
    }
    if count == 0 {
        return GRUB_ERR_INVALID;
    }
    let start_key = match key_from_raw(start_key, key_len) {
        Ok(k) => k,
        Err(code) => return code,
    };
    (*trace).ops.push(Operation::Scan { start_key, count });
    GRUB_OK
}

/// Number of operations currently in the trace.
#[no_mangle]
pub unsafe extern "C" fn grub_trace_len(trace: *const GrubTrace) -> usize {
    if trace.is_null() {
        return 0;
    }
    (*trace).ops.len()
}

/// Releases a trace. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn grub_trace_free(trace: *mut GrubTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Fills `out` with the default simulation configuration
/// (60-tick epochs, 15-tick blocks, 6-block finality, memoryless K=2).
#[no_mangle]
pub unsafe extern "C" fn grub_sim_config_default(out: *mut grub_sim_config) -> i32 {
    if out.is_null() {
        return GRUB_ERR_NULL;
    }
    let d = SimConfig::default();
    *out = grub_sim_config {
        epoch_len: d.epoch_len,
        block_time: d.block_time,
        finality_blocks: d.finality_blocks,
        propagation_delay: d.propagation_delay,
        rng_seed: d.rng_seed,
        policy_kind: 0,
        policy_a: 2,
        policy_b: 0,
        always_digest: u8::from(d.always_digest),
    };
    GRUB_OK
}

fn policy_from_config(config: &grub_sim_config) -> Result<Policy, i32> {
    Ok(match config.policy_kind {
        0 => Policy::Memoryless(config.policy_a),
        1 => Policy::Memorizing(config.policy_a, config.policy_b),
        2 => Policy::AdaptiveK1 {
            window: config.policy_a as usize,
        },
        3 => Policy::AdaptiveK2 {
            window: config.policy_a as usize,
        },
        4 => Policy::Bl1,
        5 => Policy::Bl2,
        _ => return Err(GRUB_ERR_INVALID),
    })
}

/// Runs the simulation over `trace` with an honest storage provider and
/// returns a result handle.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_run(
    trace: *const GrubTrace,
    config: *const grub_sim_config,
    out: *mut *mut GrubSimResult,
) -> i32 {
    if trace.is_null() || config.is_null() {
        return GRUB_ERR_NULL;
    }
    let config = &*config;
    let policy = match policy_from_config(config) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let sim_config = SimConfig {
        epoch_len: config.epoch_len,
        block_time: config.block_time,
        finality_blocks: config.finality_blocks,
        propagation_delay: config.propagation_delay,
        rng_seed: config.rng_seed,
        always_digest: config.always_digest != 0,
        policy,
        ..SimConfig::default()
    };
    match sim::run(&(*trace).ops, &sim_config) {
        Ok(result) => box_out(out, GrubSimResult { inner: result }),
        Err(_) => GRUB_ERR_SIM,
    }
}

/// Total gas consumed over the run.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_total_gas(result: *const GrubSimResult) -> u64 {
    if result.is_null() {
        return 0;
    }
    (*result).inner.ledger.total_gas()
}

/// Mean gas per operation over the run.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_per_op_gas(result: *const GrubSimResult) -> f64 {
    if result.is_null() {
        return 0.0;
    }
    (*result).inner.ledger.per_op_gas()
}

/// Number of deliveries whose proofs verified.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_delivered_ok(result: *const GrubSimResult) -> u64 {
    if result.is_null() {
        return 0;
    }
    (*result).inner.delivered_ok
}

/// Number of deliveries rejected by proof verification.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_integrity_failures(result: *const GrubSimResult) -> u64 {
    if result.is_null() {
        return 0;
    }
    (*result).inner.integrity_failures
}

/// Returns the per-epoch gas ledger as a CSV string. The caller owns the
/// string and must release it with `grub_string_free`.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_ledger_csv(
    result: *const GrubSimResult,
    out: *mut *mut c_char,
) -> i32 {
    if result.is_null() || out.is_null() {
        return GRUB_ERR_NULL;
    }
    match CString::new((*result).inner.ledger.csv()) {
        Ok(s) => {
            *out = s.into_raw();
            GRUB_OK
        }
        Err(_) => GRUB_ERR_INVALID,
    }
}

/// Releases a simulation result. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn grub_sim_result_free(result: *mut GrubSimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Releases a string returned by this library. Accepts null.
#[no_mangle]
pub unsafe extern "C" fn grub_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
