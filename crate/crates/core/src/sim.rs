//! Monte Carlo realisation of the join/leave dynamics.
//!
//! Time advances in synchronous rounds. At the start of a round the joining
//! probability `P_c` of every class is computed from the current counts; then
//! each outside peer joins with probability `P_c` and each member leaves with
//! probability `1 - P_c`, all independently.
//!
//! Random numbers come from ChaCha8. The key is `ChaCha8Rng::seed_from_u64(seed)`
//! and round `r`, class `c` draws from stream `(r << 16) | c` starting at word
//! zero: first one uniform per outside peer (join iff `u < P_c`), then one per
//! member (leave iff `u >= P_c`). A uniform is `(next_u64() >> 11) * 2^-53`.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::model::{ClubState, Scenario};

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

const MAX_CLASSES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rounds: usize,
    pub warmup: usize,
    pub seed: u64,
    pub initial_counts: Vec<u64>,
}

impl SimConfig {
    /// Configuration starting from full membership.
    pub fn from_full(scenario: &Scenario, rounds: usize, warmup: usize, seed: u64) -> Self {
        Self {
            rounds,
            warmup,
            seed,
            initial_counts: scenario.classes().iter().map(|c| c.size).collect(),
        }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("rounds", "must be >= 1"));
        }
        if self.warmup >= self.rounds {
            return Err(Error::param(
                "warmup",
                format!("{} must be below rounds = {}", self.warmup, self.rounds),
            ));
        }
        if scenario.classes().len() >= MAX_CLASSES {
            return Err(Error::param("classes", "too many classes for stream derivation"));
        }
        scenario.check_state(&ClubState::from_integers(&self.initial_counts))
    }
}

/// Per-round per-class counts, including the initial state as round 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rounds: Vec<Vec<u64>>,
    pub seed: u64,
    pub fingerprint: u64,
    /// Times an absorbed run was resampled from its own history.
    pub revivals: usize,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.rounds.first().map_or(0, Vec::len)
    }

    pub fn totals(&self) -> impl Iterator<Item = u64> + '_ {
        self.rounds.iter().map(|r| r.iter().sum())
    }

    /// CSV with header `round,class_0,...,total`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("round");
        for c in 0..self.classes() {
            header.push_str(&format!(",class_{c}"));
        }
        writeln!(out, "{header},total")?;
        for (round, counts) in self.rounds.iter().enumerate() {
            write!(out, "{round}")?;
            for n in counts {
                write!(out, ",{n}")?;
            }
            writeln!(out, ",{}", counts.iter().sum::<u64>())?;
        }
        Ok(())
    }
}

/// Deterministic per-round random streams for one seed.
#[derive(Debug, Clone)]
pub struct Streams {
    base: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn stream(&self, round: u64, class: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream((round << 16) | class as u64);
        rng.set_word_pos(0);
        rng
    }

    /// Stream reserved for bookkeeping draws (above any class index).
    fn aux(&self, round: u64) -> ChaCha8Rng {
        self.stream(round, MAX_CLASSES - 1)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One synchronous round from `counts`.
pub fn step(scenario: &Scenario, counts: &[u64], streams: &Streams, round: u64) -> Vec<u64> {
    let state = ClubState::from_integers(counts);
    let probs = scenario.probabilities_raw(state.counts());
    scenario
        .classes()
        .iter()
        .zip(counts)
        .zip(probs)
        .enumerate()
        .map(|(c, ((class, &inside), p))| {
            if p <= 0.0 {
                // nobody joins and every member leaves
                return 0;
            }
            let mut rng = streams.stream(round, c);
            let outside = class.size - inside;
            let joined = (0..outside).filter(|_| uniform(&mut rng) < p).count() as u64;
            let stayed = (0..inside).filter(|_| uniform(&mut rng) < p).count() as u64;
            joined + stayed
        })
        .collect()
}

/// Runs `config.rounds` rounds; the trace has `rounds + 1` rows.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<SimTrace> {
    simulate(scenario, config, false)
}

/// Like [`run`], but whenever the club is absorbed at the empty state it is
/// restarted from a uniformly chosen earlier non-empty state of the same run.
/// The trace then samples the distribution of the club conditioned on
/// survival, which is what an equilibrium size means for clubs that would
/// otherwise eventually die out.
pub fn run_quasi_stationary(scenario: &Scenario, config: &SimConfig) -> Result<SimTrace> {
    simulate(scenario, config, true)
}

fn simulate(scenario: &Scenario, config: &SimConfig, revive: bool) -> Result<SimTrace> {
    config.validate(scenario)?;
    let streams = Streams::new(config.seed);
    let absorbing = scenario.phi0() == 0.0;
    let mut rows = Vec::with_capacity(config.rounds + 1);
    rows.push(config.initial_counts.clone());
    let mut revivals = 0;
    for round in 1..=config.rounds {
        let prev = rows.last().expect("trace starts non-empty");
        let mut next = step(scenario, prev, &streams, round as u64);
        if revive && absorbing && next.iter().all(|&n| n == 0) {
            let alive: Vec<usize> = (0..rows.len())
                .filter(|&r| rows[r].iter().any(|&n| n > 0))
                .collect();
            if !alive.is_empty() {
                let pick = streams.aux(round as u64).next_u64() % alive.len() as u64;
                next = rows[alive[pick as usize]].clone();
                revivals += 1;
            }
        }
        rows.push(next);
    }
    Ok(SimTrace {
        rounds: rows,
        seed: config.seed,
        fingerprint: fingerprint(scenario),
        revivals,
    })
}

/// FNV-1a over the scenario's numeric content.
pub fn fingerprint(scenario: &Scenario) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u64| {
        for b in x.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    };
    feed(scenario.phi0().to_bits());
    feed(scenario.endogenous_contribution() as u64);
    scenario.seed_distribution().weights().iter().for_each(|w| feed(w.to_bits()));
    for class in scenario.classes() {
        feed(class.size);
        feed(class.kbar.to_bits());
        feed(class.contribution.to_bits());
        class.demand.weights().iter().for_each(|w| feed(w.to_bits()));
        class.supply.weights().iter().for_each(|w| feed(w.to_bits()));
        feed(class.incentive.rho(0.0).to_bits());
        feed(class.incentive.derivative_at_zero().to_bits());
        feed(class.utility.propensity_to_contribute().to_bits());
    }
    hash
}

/// Post-warmup time averages with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub total_mean: f64,
    pub total_stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithError {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean of all samples and the standard error from [`BATCHES`] equal batches
/// (the remainder after the last full batch is left out of the batches only).
pub fn batch_means(samples: &[f64]) -> MeanWithError {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let size = samples.len() / BATCHES;
    let batch: Vec<f64> = samples
        .chunks_exact(size)
        .take(BATCHES)
        .map(|b| b.iter().sum::<f64>() / size as f64)
        .collect();
    let centre = batch.iter().sum::<f64>() / BATCHES as f64;
    let var = batch.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    MeanWithError {
        mean,
        stderr: (var / BATCHES as f64).sqrt(),
    }
}

pub fn estimate_equilibrium(trace: &SimTrace, warmup: usize) -> Result<Estimate> {
    if trace.len() < warmup + BATCHES {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            warmup,
            min_rows: BATCHES,
        });
    }
    let rows = &trace.rounds[warmup..];
    let mut mean = Vec::with_capacity(trace.classes());
    let mut stderr = Vec::with_capacity(trace.classes());
    for c in 0..trace.classes() {
        let series: Vec<f64> = rows.iter().map(|r| r[c] as f64).collect();
        let est = batch_means(&series);
        mean.push(est.mean);
        stderr.push(est.stderr);
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let total = batch_means(&totals);
    Ok(Estimate {
        mean,
        stderr,
        total_mean: total.mean,
        total_stderr: total.stderr,
        samples: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::influx_rate;
    use crate::model::tests::class;

    fn single(n: u64) -> Scenario {
        Scenario::with_uniform_seed(vec![class(n, &[1.0], &[1.0], 0.015)], 0.0).unwrap()
    }

    fn trace(rows: Vec<Vec<u64>>) -> SimTrace {
        SimTrace {
            rounds: rows,
            seed: 0,
            fingerprint: 0,
            revivals: 0,
        }
    }

    #[test]
    fn empty_club_is_absorbing() {
        let sc = single(100);
        let streams = Streams::new(7);
        for round in 0..1000 {
            assert_eq!(step(&sc, &[0], &streams, round), vec![0]);
        }
    }

    #[test]
    fn certain_joining_fills_the_club() {
        // rho = 1 with a huge seed makes P = 1 to double precision
        let sc = Scenario::with_uniform_seed(vec![class(40, &[1.0], &[1.0], 1.0)], 1e3).unwrap();
        assert_eq!(step(&sc, &[3], &Streams::new(1), 1), vec![40]);
    }

    #[test]
    fn one_step_mean_matches_influx() {
        let sc = single(100);
        let expected = 30.0 + influx_rate(&sc, &ClubState::from_integers(&[30])).unwrap().total;
        assert!((expected - 36.23718483782267).abs() < 1e-9);
        let samples: Vec<f64> = (0..10_000)
            .map(|r| step(&sc, &[30], &Streams::new(99), r)[0] as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let p = 1.0 - (-0.45f64).exp();
        let se = (100.0 * p * (1.0 - p) / samples.len() as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn run_shapes_and_replay() {
        let sc = single(100);
        let cfg = SimConfig::from_full(&sc, 1, 0, 5);
        assert_eq!(run(&sc, &cfg).unwrap().len(), 2);
        let cfg = SimConfig::from_full(&sc, 500, 100, 5);
        assert_eq!(run(&sc, &cfg).unwrap(), run(&sc, &cfg).unwrap());
        let other = SimConfig { seed: 6, ..cfg.clone() };
        assert_ne!(run(&sc, &cfg).unwrap().rounds, run(&sc, &other).unwrap().rounds);
    }

    #[test]
    fn config_validation() {
        let sc = single(100);
        assert!(run(&sc, &SimConfig::from_full(&sc, 0, 0, 1)).is_err());
        assert!(run(&sc, &SimConfig::from_full(&sc, 10, 10, 1)).is_err());
        let cfg = SimConfig {
            initial_counts: vec![101],
            ..SimConfig::from_full(&sc, 10, 0, 1)
        };
        assert!(run(&sc, &cfg).is_err());
    }

    #[test]
    fn estimate_examples() {
        let est = estimate_equilibrium(&trace(vec![vec![7, 3]; 50]), 10).unwrap();
        assert_eq!(est.mean, vec![7.0, 3.0]);
        assert_eq!(est.stderr, vec![0.0, 0.0]);
        assert_eq!(est.total_mean, 10.0);
        let est = estimate_equilibrium(&trace(vec![vec![0]; 40]), 0).unwrap();
        assert_eq!(est.mean, vec![0.0]);
        assert!(matches!(
            estimate_equilibrium(&trace(vec![vec![0]; 25]), 10),
            Err(Error::TraceTooShort { .. })
        ));
    }

    #[test]
    fn batch_means_of_alternating_series() {
        let xs: Vec<f64> = (0..400).map(|i| (i / 20) as f64).collect();
        let est = batch_means(&xs);
        assert!((est.mean - 9.5).abs() < 1e-12);
        // batch means are 0..19, sample sd sqrt(35)
        assert!((est.stderr - (35.0f64 / 20.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn revival_keeps_subcritical_club_alive() {
        let sc = single(70);
        let cfg = SimConfig::from_full(&sc, 3000, 0, 11);
        let plain = run(&sc, &cfg).unwrap();
        assert_eq!(*plain.rounds.last().unwrap(), vec![0]);
        let revived = run_quasi_stationary(&sc, &cfg).unwrap();
        assert!(revived.revivals > 0);
        assert!(revived.rounds.iter().skip(1).all(|r| r[0] > 0));
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        trace(vec![vec![1, 2], vec![3, 4]]).write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "round,class_0,class_1,total\n0,1,2,3\n1,3,4,7\n"
        );
    }
}
