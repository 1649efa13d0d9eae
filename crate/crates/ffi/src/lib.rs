//! C interface to `clubsim`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`ClubsimStatus`]; on failure [`clubsim_last_error`] describes what went
//! wrong on the calling thread. Strings handed out by the library are
//! NUL-terminated and released with [`clubsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clubsim::config::parse_scenario;
use clubsim::equilibrium::{solve, EquilibriumSolution, SolverOptions};
use clubsim::experiments::{
    build_two_type_scenario, mixing_gain_sweep, nonviable_rescue_sweep, q_grid, write_fig2_csv,
    write_fig3_csv, StochasticSettings, SweepMode,
};
use clubsim::sim::{estimate_equilibrium, run, SimConfig, SimTrace};
use clubsim::{check_viability, Error, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClubsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NumericFailure = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClubsimMode {
    Deterministic = 0,
    Stochastic = 1,
}

/// A validated scenario.
pub struct ClubsimScenario(Scenario);

/// An equilibrium found by the solver.
pub struct ClubsimSolution(EquilibriumSolution);

/// Per-round membership counts from a simulation run.
pub struct ClubsimTrace(SimTrace);

/// Viability diagnostics for the empty club.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ClubsimViability {
    pub contributing_population: u64,
    pub sufficient_lhs: f64,
    pub sufficient_rhs: f64,
    pub sufficient_holds: bool,
    pub necessary_value: f64,
    pub necessary_holds: bool,
    pub empty_club_growth_rate: f64,
}

/// Settings shared by the two sweep entry points. `rounds`, `warmup` and
/// `seed` are read only in stochastic mode.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ClubsimSweepOptions {
    pub q_max: f64,
    pub steps: usize,
    pub kappa: f64,
    pub mode: ClubsimMode,
    pub seed: u64,
    pub rounds: usize,
    pub warmup: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(ClubsimStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_numeric() {
            ClubsimStatus::NumericFailure
        } else {
            ClubsimStatus::InvalidInput
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ClubsimStatus::InvalidInput, msg.into())
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

/// Runs `body`, turning errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ClubsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            ClubsimStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ClubsimStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(ClubsimStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(ClubsimStatus::NullPointer, format!("{name} is null")))
}

fn into_c_string(bytes: Vec<u8>) -> Result<*mut c_char, Failure> {
    CString::new(bytes)
        .map(CString::into_raw)
        .map_err(|_| invalid("output contains a NUL byte"))
}

fn sweep_mode(opts: &ClubsimSweepOptions) -> SweepMode {
    match opts.mode {
        ClubsimMode::Deterministic => SweepMode::deterministic(),
        ClubsimMode::Stochastic => SweepMode::Stochastic(StochasticSettings {
            rounds: opts.rounds,
            warmup: opts.warmup,
            master_seed: opts.seed,
        }),
    }
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn clubsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clubsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scenario from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_scenario_from_json(
    json: *const c_char,
    out: *mut *mut ClubsimScenario,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = CStr::from_ptr(deref(json, "json")?)
            .to_str()
            .map_err(|_| invalid("json is not valid UTF-8"))?;
        let scenario = parse_scenario(text).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(ClubsimScenario(scenario)));
        Ok(())
    })
}

/// Two peer types over two goods with overlap `q`, constant incentive `kappa`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_scenario_two_type(
    q: f64,
    n1: u64,
    n2: u64,
    kappa: f64,
    phi0: f64,
    out: *mut *mut ClubsimScenario,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let scenario = build_two_type_scenario(q, n1, n2, kappa, phi0)?;
        *out = Box::into_raw(Box::new(ClubsimScenario(scenario)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clubsim_scenario_free(scenario: *mut ClubsimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of peer classes, 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_scenario_class_count(scenario: *const ClubsimScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.classes().len())
}

/// Solves for the equilibrium membership. Zero `tolerance` or
/// `max_iterations` select the defaults.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solve(
    scenario: *const ClubsimScenario,
    tolerance: f64,
    max_iterations: usize,
    out: *mut *mut ClubsimSolution,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let scenario = deref(scenario, "scenario")?;
        let mut options = SolverOptions::default();
        if tolerance != 0.0 {
            options.tolerance = tolerance;
        }
        if max_iterations != 0 {
            options.max_iterations = max_iterations;
        }
        let solution = solve(&scenario.0, options)?;
        *out = Box::into_raw(Box::new(ClubsimSolution(solution)));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_free(solution: *mut ClubsimSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Total equilibrium membership, NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_total(solution: *const ClubsimSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.0.total())
}

/// Equilibrium membership of class `class`, NaN when out of range.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_count(solution: *const ClubsimSolution, class: usize) -> f64 {
    solution
        .as_ref()
        .and_then(|s| s.0.state.counts().get(class).copied())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_residual(solution: *const ClubsimSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.0.residual)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_iterations(solution: *const ClubsimSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.0.iterations)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_solution_stable(solution: *const ClubsimSolution) -> bool {
    solution.as_ref().is_some_and(|s| s.0.stable)
}

/// Fills `out` with the viability diagnostics of `scenario`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_viability(
    scenario: *const ClubsimScenario,
    out: *mut ClubsimViability,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let v = check_viability(&deref(scenario, "scenario")?.0);
        *out = ClubsimViability {
            contributing_population: v.contributing_population,
            sufficient_lhs: v.sufficient_lhs,
            sufficient_rhs: v.sufficient_rhs,
            sufficient_holds: v.sufficient_holds,
            necessary_value: v.necessary_value,
            necessary_holds: v.necessary_holds,
            empty_club_growth_rate: v.empty_club_growth_rate,
        };
        Ok(())
    })
}

/// Simulates `rounds` rounds starting from full membership.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_simulate(
    scenario: *const ClubsimScenario,
    rounds: usize,
    seed: u64,
    out: *mut *mut ClubsimTrace,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let scenario = &deref(scenario, "scenario")?.0;
        let trace = run(scenario, &SimConfig::from_full(scenario, rounds, 0, seed))?;
        *out = Box::into_raw(Box::new(ClubsimTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn clubsim_trace_free(trace: *mut ClubsimTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded rows, the initial state included.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn clubsim_trace_len(trace: *const ClubsimTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Members of `class` after round `round`.
///
/// # Safety
/// `trace` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_trace_count(
    trace: *const ClubsimTrace,
    round: usize,
    class: usize,
    out: *mut u64,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let trace = &deref(trace, "trace")?.0;
        *out = *trace
            .rounds
            .get(round)
            .and_then(|row| row.get(class))
            .ok_or_else(|| invalid(format!("no entry for round {round}, class {class}")))?;
        Ok(())
    })
}

/// Batch-means estimate of the total membership after `warmup` rounds.
///
/// # Safety
/// `trace` must be a live handle; `mean` and `stderr` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn clubsim_trace_estimate(
    trace: *const ClubsimTrace,
    warmup: usize,
    mean: *mut f64,
    stderr: *mut f64,
) -> ClubsimStatus {
    guard(|| {
        let mean = out_ptr(mean, "mean")?;
        let stderr = out_ptr(stderr, "stderr")?;
        let est = estimate_equilibrium(&deref(trace, "trace")?.0, warmup)?;
        *mean = est.total_mean;
        *stderr = est.total_stderr;
        Ok(())
    })
}

/// The trace as CSV text, one row per round.
///
/// # Safety
/// `trace` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn clubsim_trace_csv(
    trace: *const ClubsimTrace,
    out: *mut *mut c_char,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let mut bytes = Vec::new();
        deref(trace, "trace")?
            .0
            .write_csv(&mut bytes)
            .map_err(|e| Failure(ClubsimStatus::Io, e.to_string()))?;
        *out = into_c_string(bytes)?;
        Ok(())
    })
}

/// Mixing-gain sweep of two populations of sizes `n1` and `n2`, as CSV.
///
/// # Safety
/// `options` must point to valid settings and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn clubsim_mixing_gain_csv(
    options: *const ClubsimSweepOptions,
    n1: u64,
    n2: u64,
    out: *mut *mut c_char,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let opts = deref(options, "options")?;
        let sweep = mixing_gain_sweep(&q_grid(opts.q_max, opts.steps), n1, n2, opts.kappa, sweep_mode(opts))?;
        let mut bytes = Vec::new();
        write_fig2_csv(&sweep.rows, &mut bytes).map_err(|e| Failure(ClubsimStatus::Io, e.to_string()))?;
        *out = into_c_string(bytes)?;
        Ok(())
    })
}

/// Participation of a small second population merged into a club of
/// `total` peers, for each of the `n2_len` sizes in `n2_values`, as CSV.
///
/// # Safety
/// `options` must point to valid settings, `n2_values` to `n2_len` values,
/// and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn clubsim_rescue_csv(
    options: *const ClubsimSweepOptions,
    n2_values: *const u64,
    n2_len: usize,
    total: u64,
    out: *mut *mut c_char,
) -> ClubsimStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let opts = deref(options, "options")?;
        let n2s = std::slice::from_raw_parts(deref(n2_values, "n2_values")?, n2_len);
        let sweep =
            nonviable_rescue_sweep(&q_grid(opts.q_max, opts.steps), n2s, total, opts.kappa, sweep_mode(opts))?;
        let mut bytes = Vec::new();
        write_fig3_csv(&sweep.rows, &mut bytes).map_err(|e| Failure(ClubsimStatus::Io, e.to_string()))?;
        *out = into_c_string(bytes)?;
        Ok(())
    })
}
