//! Deterministic analysis: influx rates, the membership fixed point, local
//! stability and the two viability conditions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ClubState, Scenario};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
pub const DEFAULT_DAMPING: f64 = 0.5;

/// Iterations between stall checks of the damped map.
const STALL_WINDOW: usize = 10_000;
const BISECTION_HALVINGS: usize = 1100;

/// Net rate of peers entering the club, per class and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluxRate {
    pub joining: Vec<f64>,
    pub leaving: Vec<f64>,
    pub net: Vec<f64>,
    pub total: f64,
}

/// `r_c = N_c P_c - n_c`, split as `(N_c - n_c) P_c` joining and
/// `n_c (1 - P_c)` leaving.
pub fn influx_rate(scenario: &Scenario, state: &ClubState) -> Result<InfluxRate> {
    scenario.check_state(state)?;
    let probs = scenario.probabilities_raw(state.counts());
    let mut rate = InfluxRate {
        joining: Vec::with_capacity(probs.len()),
        leaving: Vec::with_capacity(probs.len()),
        net: Vec::with_capacity(probs.len()),
        total: 0.0,
    };
    for ((class, &n), p) in scenario.classes().iter().zip(state.counts()).zip(probs) {
        let size = class.size as f64;
        rate.joining.push((size - n) * p);
        rate.leaving.push(n * (1.0 - p));
        rate.net.push(size * p - n);
    }
    rate.total = rate.net.iter().sum();
    Ok(rate)
}

fn influx_raw(scenario: &Scenario, counts: &[f64]) -> Vec<f64> {
    scenario
        .probabilities_raw(counts)
        .into_iter()
        .zip(scenario.classes())
        .zip(counts)
        .map(|((p, class), n)| class.size as f64 * p - n)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Weight of the new image in `n <- (1 - d) n + d N P(n)`.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            damping: DEFAULT_DAMPING,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    DampedIteration,
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub state: ClubState,
    /// `max_c |N_c P_c(n*) - n*_c|`.
    pub residual: f64,
    pub stable: bool,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl EquilibriumSolution {
    pub fn total(&self) -> f64 {
        self.state.total()
    }
}

fn residual_of(scenario: &Scenario, counts: &[f64]) -> f64 {
    influx_raw(scenario, counts)
        .into_iter()
        .fold(0.0, |m, r| m.max(r.abs()))
}

/// Solves `N_c P_c(n) = n_c` from full membership.
pub fn solve(scenario: &Scenario, options: SolverOptions) -> Result<EquilibriumSolution> {
    solve_equilibrium(scenario, &ClubState::full(scenario), options)
}

/// Damped fixed-point iteration of `n -> N o P(n)` from `init`.
///
/// Starting from full membership the iterates decrease monotonically onto the
/// largest fixed point. If a single-class scenario stalls (near-critical
/// slope), the root is bracketed and bisected instead. A limit of zero, when
/// the empty club is itself a fixed point, is reported as exactly zero.
pub fn solve_equilibrium(
    scenario: &Scenario,
    init: &ClubState,
    options: SolverOptions,
) -> Result<EquilibriumSolution> {
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(Error::param("tol", "must be > 0"));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::param("damping", "must be in (0, 1]"));
    }
    scenario.check_state(init)?;

    let sizes = scenario.sizes();
    let lambda = options.damping;
    let mut counts = init.counts().to_vec();
    let mut window_start = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for iteration in 0..options.max_iterations {
        let target: Vec<f64> = scenario
            .probabilities_raw(&counts)
            .into_iter()
            .zip(&sizes)
            .map(|(p, n)| n * p)
            .collect();
        residual = target
            .iter()
            .zip(&counts)
            .fold(0.0, |m, (t, n)| m.max((t - n).abs()));
        // l1 test so the summed influx is within tolerance too
        let spread: f64 = target.iter().zip(&counts).map(|(t, n)| (t - n).abs()).sum();
        if spread < options.tolerance {
            snap_to_empty(scenario, &mut counts, options.tolerance);
            return finish(scenario, counts, iteration, SolveMethod::DampedIteration);
        }
        if iteration % STALL_WINDOW == 0 && iteration > 0 {
            if residual > 0.5 * window_start {
                if let Some(solution) = bisect_single_class(scenario, &counts, options, iteration)? {
                    return Ok(solution);
                }
            }
            window_start = residual;
        } else if iteration == 0 {
            window_start = residual;
        }
        for ((n, t), size) in counts.iter_mut().zip(&target).zip(&sizes) {
            *n = ((1.0 - lambda) * *n + lambda * t).clamp(0.0, *size);
        }
    }

    Err(Error::NonConvergence {
        state: ClubState::from_raw(counts),
        residual,
        iterations: options.max_iterations,
    })
}

fn snap_to_empty(scenario: &Scenario, counts: &mut [f64], tol: f64) {
    let zero = vec![0.0; counts.len()];
    if residual_of(scenario, &zero) >= tol {
        return;
    }
    let near_zero = counts
        .iter()
        .zip(scenario.classes())
        .all(|(n, class)| *n <= tol.sqrt() * (class.size as f64).max(1.0));
    if near_zero {
        counts.iter_mut().for_each(|n| *n = 0.0);
    }
}

fn finish(
    scenario: &Scenario,
    counts: Vec<f64>,
    iterations: usize,
    method: SolveMethod,
) -> Result<EquilibriumSolution> {
    let state = ClubState::from_raw(counts);
    let residual = residual_of(scenario, state.counts());
    let stable = classify_stability(scenario, &state)?;
    Ok(EquilibriumSolution {
        state,
        residual,
        stable,
        iterations,
        method,
    })
}

/// Largest root of `N P(n) - n` for scenarios where only one class has peers.
fn bisect_single_class(
    scenario: &Scenario,
    current: &[f64],
    options: SolverOptions,
    iterations: usize,
) -> Result<Option<EquilibriumSolution>> {
    let mut populated = scenario
        .classes()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.size > 0);
    let (class, size) = match (populated.next(), populated.next()) {
        (Some((c, pc)), None) => (c, pc.size as f64),
        _ => return Ok(None),
    };
    let dims = scenario.classes().len();
    let f = |x: f64| {
        let mut counts = vec![0.0; dims];
        counts[class] = x;
        influx_raw(scenario, &counts)[class]
    };

    // Bracket below the current iterate by halving towards zero.
    let mut hi = current[class];
    let at_current = f(hi);
    if at_current.is_nan() || at_current > 0.0 {
        hi = size;
    }
    let mut lo = None;
    for _ in 0..BISECTION_HALVINGS {
        let x = 0.5 * hi;
        if f(x) > 0.0 {
            lo = Some(x);
            break;
        }
        hi = x;
    }
    let root = match lo {
        Some(mut lo) => {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        None => 0.0,
    };
    let mut counts = vec![0.0; dims];
    counts[class] = root;
    if residual_of(scenario, &counts) >= options.tolerance {
        return Ok(None);
    }
    finish(scenario, counts, iterations, SolveMethod::Bisection).map(Some)
}

/// Central-difference Jacobian of the per-class influx at `counts`.
pub fn influx_jacobian(scenario: &Scenario, state: &ClubState) -> Result<DMatrix<f64>> {
    scenario.check_state(state)?;
    let dims = state.counts().len();
    let step = (1e-6 * scenario.population() as f64).max(1e-4);
    let mut jac = DMatrix::zeros(dims, dims);
    let mut probe = state.counts().to_vec();
    for d in 0..dims {
        let base = probe[d];
        probe[d] = base + step;
        let up = influx_raw(scenario, &probe);
        probe[d] = base - step;
        let down = influx_raw(scenario, &probe);
        probe[d] = base;
        for c in 0..dims {
            jac[(c, d)] = (up[c] - down[c]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Stable iff every eigenvalue of the influx Jacobian has negative real part.
pub fn classify_stability(scenario: &Scenario, state: &ClubState) -> Result<bool> {
    let jac = influx_jacobian(scenario, state)?;
    if jac.nrows() == 0 {
        return Ok(true);
    }
    if jac.nrows() == 1 {
        return Ok(jac[(0, 0)] < 0.0);
    }
    Ok(jac.complex_eigenvalues().iter().all(|z| z.re < 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityReport {
    /// Potentially contributing population at the empty club, `N(0)`.
    pub contributing_population: u64,
    /// `N(0) sum_s g(s) h(s)`.
    pub sufficient_lhs: f64,
    /// `(kbar rho(0+))^-1`, infinite when the product vanishes.
    pub sufficient_rhs: f64,
    pub sufficient_holds: bool,
    /// `rho'(0) phi0`.
    pub necessary_value: f64,
    pub necessary_holds: bool,
    /// Slope of the total influx at the empty club.
    pub empty_club_growth_rate: f64,
}

/// Evaluates the sufficient and necessary viability conditions.
///
/// Supply, demand, `kbar` and `rho(0+)` are averaged over the potentially
/// contributing classes with class sizes as weights.
pub fn check_viability(scenario: &Scenario) -> ViabilityReport {
    let goods = scenario.goods();
    let pc: Vec<_> = scenario
        .classes()
        .iter()
        .zip(scenario.contributing())
        .enumerate()
        .filter(|(_, (class, &contributes))| contributes && class.size > 0)
        .map(|(c, (class, _))| (c, class))
        .collect();
    let n0: u64 = pc.iter().map(|(_, class)| class.size).sum();

    let mut supply = vec![0.0; goods];
    let mut demand = vec![0.0; goods];
    let mut kbar = 0.0;
    let mut rho = 0.0;
    for (_, class) in &pc {
        let w = class.size as f64;
        for s in 0..goods {
            supply[s] += w * class.supply.get(s);
            demand[s] += w * class.demand.get(s);
        }
        kbar += w * class.kbar;
        rho += w * class.incentive.rho_at_zero_plus();
    }
    let growth = if n0 > 0 {
        let g: Vec<f64> = supply.iter().map(|x| x / n0 as f64).collect();
        pc.iter()
            .map(|&(c, class)| {
                let gh: f64 = class.demand.weights().iter().zip(&g).map(|(h, g)| h * g).sum();
                class.size as f64 * class.kbar * scenario.effective_rho(c) * gh
            })
            .sum::<f64>()
            - 1.0
    } else {
        -1.0
    };

    let (lhs, rhs) = if n0 > 0 {
        let gh: f64 = supply.iter().zip(&demand).map(|(g, h)| g * h).sum::<f64>() / n0 as f64;
        let product = kbar * rho / (n0 as f64 * n0 as f64);
        let rhs = if product > 0.0 {
            product.recip()
        } else {
            f64::INFINITY
        };
        (gh, rhs)
    } else {
        (0.0, f64::INFINITY)
    };

    let population = scenario.population();
    let slope = if population > 0 {
        scenario
            .classes()
            .iter()
            .map(|class| class.size as f64 * class.incentive.derivative_at_zero())
            .sum::<f64>()
            / population as f64
    } else {
        0.0
    };
    let necessary = slope * scenario.phi0();

    ViabilityReport {
        contributing_population: n0,
        sufficient_lhs: lhs,
        sufficient_rhs: rhs,
        sufficient_holds: rhs.is_finite() && rhs > 0.0 && lhs > rhs,
        necessary_value: necessary,
        necessary_holds: necessary > 0.0,
        empty_club_growth_rate: growth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::class;
    use crate::model::{IncentiveFunction, UtilityModel};

    fn single(n: u64, q: f64) -> Scenario {
        Scenario::with_uniform_seed(vec![class(n, &[1.0, 0.0], &[1.0 - q, q], 0.015)], 0.0)
            .unwrap()
    }

    fn mixed(q: f64, n1: u64, n2: u64) -> Scenario {
        Scenario::with_uniform_seed(
            vec![
                class(n1, &[1.0, 0.0], &[1.0 - q, q], 0.015),
                class(n2, &[0.0, 1.0], &[q, 1.0 - q], 0.015),
            ],
            0.0,
        )
        .unwrap()
    }

    fn at(c: &[f64]) -> ClubState {
        ClubState::new(c.to_vec()).unwrap()
    }

    /// Independent scalar oracle: bisection for the largest root of
    /// `n = N (1 - exp(-kappa n))`.
    fn scalar_root(size: f64, kappa: f64) -> f64 {
        let f = |n: f64| size * (1.0 - (-kappa * n).exp()) - n;
        let (mut lo, mut hi) = (size * 1e-3, size);
        if f(lo) <= 0.0 {
            return 0.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    #[test]
    fn scalar_oracle_matches_frozen_value() {
        assert!((scalar_root(100.0, 0.015) - 58.281164386581125).abs() < 1e-9);
    }

    #[test]
    fn influx_examples() {
        let sc = single(100, 0.0);
        assert_eq!(influx_rate(&sc, &at(&[0.0])).unwrap().total, 0.0);
        let r = influx_rate(&sc, &at(&[30.0])).unwrap();
        assert!((r.total - 6.237184837822667).abs() < 1e-10);
        assert!((r.joining[0] - r.leaving[0] - r.total).abs() < 1e-12);
    }

    #[test]
    fn solves_single_club() {
        let sol = solve(&single(100, 0.0), SolverOptions::default()).unwrap();
        assert!((sol.total() - 58.281164386581125).abs() < 1e-7);
        assert!(sol.residual < DEFAULT_TOLERANCE);
        assert!(sol.stable);
        assert!(influx_rate(&single(100, 0.0), &sol.state).unwrap().total.abs() < DEFAULT_TOLERANCE);
    }

    #[test]
    fn subcritical_club_collapses_to_zero() {
        let sol = solve(&single(60, 0.0), SolverOptions::default()).unwrap();
        assert_eq!(sol.total(), 0.0);
        assert!(sol.stable);
    }

    #[test]
    fn mixed_club_is_q_independent() {
        for q in [0.0, 0.07, 0.2] {
            let sol = solve(&mixed(q, 100, 100), SolverOptions::default()).unwrap();
            assert!((sol.total() - 2.0 * 58.281164386581125).abs() < 1e-6, "q={q}");
        }
    }

    #[test]
    fn near_critical_falls_back_to_bisection() {
        // N kappa = 1 + 1e-6, the damped map contracts by ~1 - 5e-7 per step
        let sc = Scenario::with_uniform_seed(vec![class(1_000_001, &[1.0], &[1.0], 1e-6)], 0.0)
            .unwrap();
        let sol = solve(&sc, SolverOptions::default()).unwrap();
        assert_eq!(sol.method, SolveMethod::Bisection);
        assert!(sol.residual < DEFAULT_TOLERANCE);
        assert!((sol.total() - 2.0).abs() < 1e-2, "{}", sol.total());
    }

    #[test]
    fn reports_non_convergence() {
        let opts = SolverOptions {
            max_iterations: 3,
            ..SolverOptions::default()
        };
        match solve(&mixed(0.1, 100, 100), opts) {
            Err(Error::NonConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(solve(&mixed(0.1, 100, 100), SolverOptions { tolerance: 0.0, ..opts }).is_err());
    }

    #[test]
    fn stability_examples() {
        assert!(!classify_stability(&single(100, 0.0), &at(&[0.0])).unwrap());
        assert!(classify_stability(&single(60, 0.0), &at(&[0.0])).unwrap());
        let jac = influx_jacobian(&single(100, 0.0), &at(&[0.0])).unwrap();
        assert!((jac[(0, 0)] - 0.5).abs() < 1e-6);
        assert!(!classify_stability(&mixed(0.1, 100, 100), &at(&[0.0, 0.0])).unwrap());
    }

    #[test]
    fn viability_examples() {
        let v = check_viability(&single(100, 0.2));
        assert!((v.sufficient_lhs - 80.0).abs() < 1e-12);
        assert!((v.sufficient_rhs - 1.0 / 0.015).abs() < 1e-9);
        assert!(v.sufficient_holds);
        assert!(!check_viability(&single(60, 0.0)).sufficient_holds);
        assert_eq!(v.necessary_value, 0.0);
        assert!(!v.necessary_holds);
        assert!((check_viability(&single(100, 0.0)).empty_club_growth_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn necessary_condition_with_incentive_and_seed() {
        let mut pc = class(50, &[0.5, 0.5], &[0.5, 0.5], 0.0);
        pc.incentive = IncentiveFunction::saturating(0.01, 0.5, 2.0).unwrap();
        pc.utility = UtilityModel::new(4.0, 1.0).unwrap();
        let seeded = Scenario::with_uniform_seed(vec![pc.clone()], 2.0).unwrap();
        let v = check_viability(&seeded);
        assert!((v.necessary_value - 0.98 * 2.0).abs() < 1e-12);
        assert!(v.necessary_holds);
        let unseeded = Scenario::with_uniform_seed(vec![pc], 0.0).unwrap();
        assert!(!check_viability(&unseeded).necessary_holds);
    }

    #[test]
    fn nobody_contributes_without_incentive() {
        let classes = vec![class(100, &[1.0], &[1.0], 0.015)];
        let sc = Scenario::new(
            classes,
            1.0,
            crate::model::GoodsDistribution::uniform(1).unwrap(),
            true,
        )
        .unwrap();
        let v = check_viability(&sc);
        assert_eq!(v.contributing_population, 0);
        assert!(!v.sufficient_holds);
    }
}
