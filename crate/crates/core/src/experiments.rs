//! Two-population, two-goods mixing experiments.
//!
//! Peers of type 1 want good 1 and type 2 want good 2. Each type supplies its
//! own good with probability `1 - q` and the other type's good with
//! probability `q`, so `q` measures how much the two supplies overlap.

use std::io::Write;

use rayon::prelude::*;

use crate::equilibrium::{check_viability, solve, SolverOptions};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::model::{GoodsDistribution, IncentiveFunction, PeerClass, Scenario, UtilityModel};
use crate::sim::{estimate_equilibrium, run_quasi_stationary, SimConfig};

/// Search efficiency times potential contribution used in the experiments.
pub const KAPPA: f64 = 0.015;
pub const DEFAULT_Q_MAX: f64 = 0.2;
pub const DEFAULT_Q_STEPS: usize = 21;
pub const DEFAULT_ROUNDS: usize = 20_000;
pub const DEFAULT_WARMUP: usize = 5_000;

/// Two goods, two classes; `kbar = 1` and a constant incentive `rho = kappa`.
pub fn build_two_type_scenario(q: f64, n1: u64, n2: u64, kappa: f64, phi0: f64) -> Result<Scenario> {
    if !(0.0..=0.5).contains(&q) {
        return Err(Error::param("q", format!("{q} not in [0, 0.5]")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::param("kappa", format!("{kappa} not in (0, 1]")));
    }
    let incentive = IncentiveFunction::constant(kappa)?;
    let make = |size, own: usize| -> Result<PeerClass> {
        let mut supply = vec![q; 2];
        supply[own] = 1.0 - q;
        Ok(PeerClass {
            size,
            demand: GoodsDistribution::point(2, own)?,
            supply: GoodsDistribution::new(supply)?,
            kbar: 1.0,
            contribution: 1.0,
            incentive,
            utility: UtilityModel::default(),
        })
    };
    Scenario::new(
        vec![make(n1, 0)?, make(n2, 1)?],
        phi0,
        GoodsDistribution::uniform(2)?,
        false,
    )
}

/// `steps` evenly spaced points on `[0, q_max]`.
pub fn q_grid(q_max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..steps)
            .map(|i| q_max * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticSettings {
    pub rounds: usize,
    pub warmup: usize,
    pub master_seed: u64,
}

impl Default for StochasticSettings {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            warmup: DEFAULT_WARMUP,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Deterministic(SolverOptions),
    Stochastic(StochasticSettings),
}

impl SweepMode {
    pub fn deterministic() -> Self {
        SweepMode::Deterministic(SolverOptions::default())
    }
}

/// An equilibrium size, with its batch-means standard error when simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSweepRow {
    pub q: f64,
    pub n1: Measured,
    pub n2: Measured,
    pub n_mixed: Measured,
    /// `n_mixed / (n1 + n2)`.
    pub gain: Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescueSweepRow {
    pub q: f64,
    pub n2_population: u64,
    pub type2_participation: Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep<R> {
    pub rows: Vec<R>,
    /// Rows whose preconditions did not hold.
    pub warnings: Vec<String>,
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one simulation cell, from the master seed and the sweep keys.
pub fn cell_seed(master: u64, q: f64, n2: u64, part: u64) -> u64 {
    mix64(mix64(mix64(mix64(master) ^ q.to_bits()) ^ n2) ^ part)
}

/// Equilibrium per-class counts in the given mode.
fn equilibrium(scenario: &Scenario, mode: SweepMode, seed: u64) -> Result<Vec<Measured>> {
    match mode {
        SweepMode::Deterministic(options) => {
            let solution = solve(scenario, options)?;
            scenario.check_state(&solution.state)?;
            Ok(solution
                .state
                .counts()
                .iter()
                .map(|&value| Measured {
                    value,
                    stderr: None,
                })
                .collect())
        }
        SweepMode::Stochastic(settings) => {
            let config = SimConfig::from_full(scenario, settings.rounds, settings.warmup, seed);
            let trace = run_quasi_stationary(scenario, &config)?;
            let estimate = estimate_equilibrium(&trace, settings.warmup)?;
            Ok(estimate
                .mean
                .iter()
                .zip(&estimate.stderr)
                .map(|(&value, &se)| Measured {
                    value,
                    stderr: Some(se),
                })
                .collect())
        }
    }
}

fn total(parts: &[Measured]) -> Measured {
    let value = parts.iter().map(|m| m.value).sum();
    let stderr = parts
        .iter()
        .map(|m| m.stderr.map(|s| s * s))
        .sum::<Option<f64>>()
        .map(f64::sqrt);
    Measured { value, stderr }
}

fn ratio(num: Measured, den: Measured) -> Measured {
    let value = num.value / den.value;
    let stderr = match (num.stderr, den.stderr) {
        (Some(a), Some(b)) => Some(((a / den.value).powi(2) + (value * b / den.value).powi(2)).sqrt()),
        _ => None,
    };
    Measured { value, stderr }
}

fn in_sweep<T>(what: &str, q: f64, result: Result<T>) -> Result<T> {
    result.map_err(|source| Error::Sweep {
        context: format!("{what} at q = {q}"),
        source: Box::new(source),
    })
}

/// Separate clubs of each type and the mixed club, per overlap `q`.
pub fn mixing_gain_sweep(
    q_values: &[f64],
    n1: u64,
    n2: u64,
    kappa: f64,
    mode: SweepMode,
) -> Result<Sweep<MixSweepRow>> {
    let master = match mode {
        SweepMode::Stochastic(s) => s.master_seed,
        SweepMode::Deterministic(_) => 0,
    };
    let results: Vec<Result<(MixSweepRow, Vec<String>)>> = q_values
        .par_iter()
        .map(|&q| {
            let mut warnings = Vec::new();
            let alone1 = in_sweep("type-1 club", q, build_two_type_scenario(q, n1, 0, kappa, 0.0))?;
            let alone2 = in_sweep("type-2 club", q, build_two_type_scenario(q, 0, n2, kappa, 0.0))?;
            let mixed = in_sweep("mixed club", q, build_two_type_scenario(q, n1, n2, kappa, 0.0))?;
            for (name, sc) in [("type-1", &alone1), ("type-2", &alone2)] {
                if !check_viability(sc).sufficient_holds {
                    warnings.push(format!("q = {q}: separate {name} club is not viable"));
                }
            }
            let a = in_sweep("type-1 club", q, equilibrium(&alone1, mode, cell_seed(master, q, n2, 1)))?;
            let b = in_sweep("type-2 club", q, equilibrium(&alone2, mode, cell_seed(master, q, n2, 2)))?;
            let m = in_sweep("mixed club", q, equilibrium(&mixed, mode, cell_seed(master, q, n2, 3)))?;
            let (n1, n2, n_mixed) = (a[0], b[1], total(&m));
            let gain = ratio(n_mixed, total(&[n1, n2]));
            Ok((
                MixSweepRow {
                    q,
                    n1,
                    n2,
                    n_mixed,
                    gain,
                },
                warnings,
            ))
        })
        .collect();
    collect_sweep(results, |r: &MixSweepRow| (r.q, 0))
}

/// Participation of the (alone non-viable) type-2 peers in the mixed club,
/// for each `N2` with `N1 = total - N2`.
pub fn nonviable_rescue_sweep(
    q_values: &[f64],
    n2_values: &[u64],
    total_population: u64,
    kappa: f64,
    mode: SweepMode,
) -> Result<Sweep<RescueSweepRow>> {
    if let Some(&n2) = n2_values.iter().find(|&&n2| n2 > total_population) {
        return Err(Error::param(
            "N2",
            format!("{n2} exceeds total population {total_population}"),
        ));
    }
    let master = match mode {
        SweepMode::Stochastic(s) => s.master_seed,
        SweepMode::Deterministic(_) => 0,
    };
    let cells: Vec<(f64, u64)> = q_values
        .iter()
        .flat_map(|&q| n2_values.iter().map(move |&n2| (q, n2)))
        .collect();
    let results: Vec<Result<(RescueSweepRow, Vec<String>)>> = cells
        .par_iter()
        .map(|&(q, n2)| {
            let mut warnings = Vec::new();
            let n1 = total_population - n2;
            let alone2 = in_sweep("type-2 club", q, build_two_type_scenario(q, 0, n2, kappa, 0.0))?;
            if check_viability(&alone2).sufficient_holds {
                warnings.push(format!("q = {q}, N2 = {n2}: type-2 club is viable on its own"));
            }
            let mixed = in_sweep("mixed club", q, build_two_type_scenario(q, n1, n2, kappa, 0.0))?;
            let counts = in_sweep(
                "mixed club",
                q,
                equilibrium(&mixed, mode, cell_seed(master, q, n2, 3)),
            )?;
            Ok((
                RescueSweepRow {
                    q,
                    n2_population: n2,
                    type2_participation: counts[1],
                },
                warnings,
            ))
        })
        .collect();
    collect_sweep(results, |r: &RescueSweepRow| (r.q, r.n2_population))
}

fn collect_sweep<R>(
    results: Vec<Result<(R, Vec<String>)>>,
    key: impl Fn(&R) -> (f64, u64),
) -> Result<Sweep<R>> {
    let mut sweep = Sweep {
        rows: Vec::with_capacity(results.len()),
        warnings: Vec::new(),
    };
    for result in results {
        let (row, warnings) = result?;
        sweep.rows.push(row);
        sweep.warnings.extend(warnings);
    }
    sweep
        .rows
        .sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite sweep keys"));
    Ok(sweep)
}

pub fn write_fig2_csv<W: Write>(rows: &[MixSweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "q,n1,n2,n_mixed,gain")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            sig6(r.q),
            sig6(r.n1.value),
            sig6(r.n2.value),
            sig6(r.n_mixed.value),
            sig6(r.gain.value)
        )?;
    }
    Ok(())
}

pub fn write_fig3_csv<W: Write>(rows: &[RescueSweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "q,N2,type2_participation")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{}",
            sig6(r.q),
            r.n2_population,
            sig6(r.type2_participation.value)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_builder() {
        let sc = build_two_type_scenario(0.0, 100, 100, KAPPA, 0.0).unwrap();
        assert_eq!(sc.classes()[0].supply.weights(), &[1.0, 0.0]);
        assert_eq!(sc.classes()[1].supply.weights(), &[0.0, 1.0]);
        let sc = build_two_type_scenario(0.5, 100, 100, KAPPA, 0.0).unwrap();
        assert_eq!(sc.classes()[0].supply.weights(), &[0.5, 0.5]);
        assert_eq!(sc.classes()[1].supply.weights(), &[0.5, 0.5]);
        let sc = build_two_type_scenario(0.2, 100, 100, KAPPA, 0.0).unwrap();
        assert_eq!(sc.classes()[1].demand.weights(), &[0.0, 1.0]);
        assert!(build_two_type_scenario(0.6, 1, 1, KAPPA, 0.0).is_err());
        assert!(build_two_type_scenario(-0.1, 1, 1, KAPPA, 0.0).is_err());
        assert!(build_two_type_scenario(0.1, 1, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid() {
        let g = q_grid(0.2, 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 0.2);
        assert!((g[1] - 0.01).abs() < 1e-15);
        assert_eq!(q_grid(0.0, 1), vec![0.0]);
    }

    #[test]
    fn gain_endpoints() {
        let sweep = mixing_gain_sweep(&[0.0, 0.2], 100, 100, KAPPA, SweepMode::deterministic()).unwrap();
        assert!((sweep.rows[0].gain.value - 1.0).abs() < 1e-9);
        // oracle: 2 * 58.2812 / (2 * 31.3698)
        assert!((sweep.rows[1].gain.value - 1.8578729505233933).abs() < 1e-6);
        assert!(sweep.warnings.is_empty());
    }

    #[test]
    fn rescue_at_zero_overlap() {
        let sweep =
            nonviable_rescue_sweep(&[0.0, 0.1], &[40, 50, 60], 200, KAPPA, SweepMode::deterministic())
                .unwrap();
        assert_eq!(sweep.rows.len(), 6);
        for row in &sweep.rows[..3] {
            assert!(row.type2_participation.value <= 0.5);
        }
        // frozen from an independent damped-iteration computation
        let expected = [12.3097, 16.7941, 22.2727];
        for (row, e) in sweep.rows[3..].iter().zip(expected) {
            assert!((row.type2_participation.value - e).abs() < 1e-3, "{row:?}");
        }
    }

    #[test]
    fn warns_on_nonviable_separate_clubs() {
        let sweep = mixing_gain_sweep(&[0.0], 60, 100, KAPPA, SweepMode::deterministic()).unwrap();
        assert_eq!(sweep.warnings.len(), 1);
    }

    #[test]
    fn fig3_csv_layout() {
        let rows = vec![RescueSweepRow {
            q: 0.05,
            n2_population: 40,
            type2_participation: Measured {
                value: 7.647389,
                stderr: None,
            },
        }];
        let mut out = Vec::new();
        write_fig3_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "q,N2,type2_participation\n0.05,40,7.64739\n");
    }

    #[test]
    fn seeds_differ_by_key() {
        let a = cell_seed(1, 0.1, 40, 3);
        assert_ne!(a, cell_seed(1, 0.1, 50, 3));
        assert_ne!(a, cell_seed(1, 0.15, 40, 3));
        assert_ne!(a, cell_seed(2, 0.1, 40, 3));
        assert_eq!(a, cell_seed(1, 0.1, 40, 3));
    }
}
