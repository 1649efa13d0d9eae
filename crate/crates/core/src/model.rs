//! Domain types and the pointwise model equations.
//!
//! A [`Scenario`] is a set of homogeneous peer classes over one goods domain.
//! Members of a class share demand and supply distributions, a potential
//! contribution `kbar`, a chosen contribution `K` and an incentive curve
//! `rho(K)` giving the search efficiency they see. A [`ClubState`] holds the
//! (expected) number of members of each class currently in the club.
//!
//! The quantities derived from a state are:
//!
//! * content per goods type `q(s) = sum_c n_c kbar_c g_c(s) + phi0 seed(s)`,
//! * total content `Phi = sum_s q(s)` and content mix `g(s) = q(s) / Phi`,
//! * joining probability `P_c = sum_s h_c(s) (1 - exp(-rho(K_c) q(s)))`.

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-12;

/// Probability vector over goods types.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodsDistribution {
    weights: Vec<f64>,
}

impl GoodsDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no goods types".into()));
        }
        if let Some((s, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} at goods type {s} is not a non-negative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(goods: usize) -> Result<Self> {
        if goods == 0 {
            return Err(Error::InvalidDistribution("no goods types".into()));
        }
        Ok(Self {
            weights: vec![1.0 / goods as f64; goods],
        })
    }

    /// All mass on goods type `s`.
    pub fn point(goods: usize, s: usize) -> Result<Self> {
        if s >= goods {
            return Err(Error::InvalidDistribution(format!(
                "goods type {s} outside domain of size {goods}"
            )));
        }
        let mut weights = vec![0.0; goods];
        weights[s] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn goods(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, s: usize) -> f64 {
        self.weights[s]
    }

    /// `sum_s self(s) other(s)`.
    pub fn overlap(&self, other: &GoodsDistribution) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Search efficiency as a function of a peer's contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncentiveFunction {
    Constant {
        rho0: f64,
    },
    /// `rho(K) = rho0 + (rho_max - rho0) (1 - exp(-beta K))`.
    SaturatingExponential {
        rho0: f64,
        rho_max: f64,
        beta: f64,
    },
}

impl IncentiveFunction {
    pub fn constant(rho0: f64) -> Result<Self> {
        let f = IncentiveFunction::Constant { rho0 };
        f.validate()?;
        Ok(f)
    }

    pub fn saturating(rho0: f64, rho_max: f64, beta: f64) -> Result<Self> {
        let f = IncentiveFunction::SaturatingExponential {
            rho0,
            rho_max,
            beta,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} not in [0, 1]")))
            }
        };
        match *self {
            IncentiveFunction::Constant { rho0 } => unit("rho0", rho0),
            IncentiveFunction::SaturatingExponential {
                rho0,
                rho_max,
                beta,
            } => {
                unit("rho0", rho0)?;
                unit("rho_max", rho_max)?;
                if rho_max < rho0 {
                    return Err(Error::param(
                        "rho_max",
                        format!("{rho_max} is below rho0 = {rho0}"),
                    ));
                }
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::param("beta", format!("{beta} is not >= 0")));
                }
                Ok(())
            }
        }
    }

    pub fn rho(&self, k: f64) -> f64 {
        match *self {
            IncentiveFunction::Constant { rho0 } => rho0,
            IncentiveFunction::SaturatingExponential {
                rho0,
                rho_max,
                beta,
            } => rho0 + (rho_max - rho0) * -(-beta * k).exp_m1(),
        }
    }

    pub fn derivative(&self, k: f64) -> f64 {
        match *self {
            IncentiveFunction::Constant { .. } => 0.0,
            IncentiveFunction::SaturatingExponential {
                rho0,
                rho_max,
                beta,
            } => (rho_max - rho0) * beta * (-beta * k).exp(),
        }
    }

    pub fn derivative_at_zero(&self) -> f64 {
        self.derivative(0.0)
    }

    /// `rho(0+)`; both variants are right-continuous at zero.
    pub fn rho_at_zero_plus(&self) -> f64 {
        self.rho(0.0)
    }
}

/// Locally linear utility around zero contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityModel {
    /// Utility per unit of benefit at `C = 0`.
    pub marginal_benefit: f64,
    /// Utility lost per unit of contribution.
    pub marginal_cost: f64,
}

impl UtilityModel {
    pub fn new(marginal_benefit: f64, marginal_cost: f64) -> Result<Self> {
        for (name, v) in [("a", marginal_benefit), ("c", marginal_cost)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} is not a positive number")));
            }
        }
        Ok(Self {
            marginal_benefit,
            marginal_cost,
        })
    }

    /// Gamma = a / c.
    pub fn propensity_to_contribute(&self) -> f64 {
        self.marginal_benefit / self.marginal_cost
    }
}

impl Default for UtilityModel {
    fn default() -> Self {
        Self {
            marginal_benefit: 1.0,
            marginal_cost: 1.0,
        }
    }
}

/// A homogeneous sub-population of peers.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerClass {
    pub size: u64,
    pub demand: GoodsDistribution,
    pub supply: GoodsDistribution,
    /// Potential contribution per member, realised while in the club.
    pub kbar: f64,
    /// Contribution level `K` each member chooses.
    pub contribution: f64,
    pub incentive: IncentiveFunction,
    pub utility: UtilityModel,
}

impl PeerClass {
    pub fn validate(&self) -> Result<()> {
        if self.demand.goods() != self.supply.goods() {
            return Err(Error::DimensionMismatch {
                expected: self.demand.goods(),
                found: self.supply.goods(),
            });
        }
        if !(self.kbar >= 0.0 && self.kbar.is_finite()) {
            return Err(Error::param("kbar", format!("{} is not >= 0", self.kbar)));
        }
        if !(self.contribution >= 0.0 && self.contribution.is_finite()) {
            return Err(Error::param(
                "contribution",
                format!("{} is not >= 0", self.contribution),
            ));
        }
        self.incentive.validate()
    }

    pub fn goods(&self) -> usize {
        self.demand.goods()
    }
}

/// Per-class in-club member counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClubState {
    counts: Vec<f64>,
}

impl ClubState {
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if let Some((class, &count)) = counts
            .iter()
            .enumerate()
            .find(|(_, c)| !(**c >= 0.0 && c.is_finite()))
        {
            return Err(Error::StateOutOfBounds {
                class,
                count,
                size: 0,
            });
        }
        Ok(Self { counts })
    }

    pub fn from_integers(counts: &[u64]) -> Self {
        Self {
            counts: counts.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            counts: vec![0.0; scenario.classes().len()],
        }
    }

    /// Every peer of every class in the club.
    pub fn full(scenario: &Scenario) -> Self {
        Self {
            counts: scenario.sizes(),
        }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub(crate) fn from_raw(counts: Vec<f64>) -> Self {
        Self { counts }
    }
}

/// A complete model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    classes: Vec<PeerClass>,
    phi0: f64,
    seed_distribution: GoodsDistribution,
    endogenous_contribution: bool,
    /// Which classes contribute their supply while in the club.
    contributes: Vec<bool>,
}

impl Scenario {
    /// Builds a scenario. When `endogenous_contribution` is set, each class is
    /// classified once, at the empty club, as contributing or free-riding;
    /// free-riders keep joining but add nothing to the club content.
    pub fn new(
        classes: Vec<PeerClass>,
        phi0: f64,
        seed_distribution: GoodsDistribution,
        endogenous_contribution: bool,
    ) -> Result<Self> {
        let goods = seed_distribution.goods();
        for class in &classes {
            class.validate()?;
            if class.goods() != goods {
                return Err(Error::DimensionMismatch {
                    expected: goods,
                    found: class.goods(),
                });
            }
        }
        if !(phi0 >= 0.0 && phi0.is_finite()) {
            return Err(Error::param("phi0", format!("{phi0} is not >= 0")));
        }
        let mut scenario = Self {
            contributes: vec![true; classes.len()],
            classes,
            phi0,
            seed_distribution,
            endogenous_contribution,
        };
        if endogenous_contribution {
            let empty = ClubState::empty(&scenario);
            scenario.contributes = (0..scenario.classes.len())
                .map(|c| scenario.is_contributor(c, &empty))
                .collect::<Result<_>>()?;
        }
        Ok(scenario)
    }

    /// Scenario with the seed content spread uniformly over goods types.
    pub fn with_uniform_seed(classes: Vec<PeerClass>, phi0: f64) -> Result<Self> {
        let goods = classes
            .first()
            .map(PeerClass::goods)
            .ok_or_else(|| Error::param("classes", "at least one class is required"))?;
        Self::new(classes, phi0, GoodsDistribution::uniform(goods)?, false)
    }

    pub fn classes(&self) -> &[PeerClass] {
        &self.classes
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn seed_distribution(&self) -> &GoodsDistribution {
        &self.seed_distribution
    }

    pub fn endogenous_contribution(&self) -> bool {
        self.endogenous_contribution
    }

    pub fn goods(&self) -> usize {
        self.seed_distribution.goods()
    }

    /// Classes counted as potentially contributing.
    pub fn contributing(&self) -> &[bool] {
        &self.contributes
    }

    pub fn population(&self) -> u64 {
        self.classes.iter().map(|c| c.size).sum()
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.size as f64).collect()
    }

    /// Checks dimension and `0 <= n_c <= N_c`.
    pub fn check_state(&self, state: &ClubState) -> Result<()> {
        if state.counts.len() != self.classes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.classes.len(),
                found: state.counts.len(),
            });
        }
        for (class, (&count, pc)) in state.counts.iter().zip(&self.classes).enumerate() {
            if !(count >= 0.0 && count <= pc.size as f64) {
                return Err(Error::StateOutOfBounds {
                    class,
                    count,
                    size: pc.size,
                });
            }
        }
        Ok(())
    }

    fn class(&self, c: usize) -> Result<&PeerClass> {
        self.classes.get(c).ok_or(Error::DimensionMismatch {
            expected: self.classes.len(),
            found: c + 1,
        })
    }

    /// Total quantity of goods in the club, `sum_c n_c kbar_c + phi0`.
    pub fn phi(&self, state: &ClubState) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.phi_raw(&state.counts))
    }

    /// Distribution of the club content over goods types. An empty club with
    /// no seed content reports the seed distribution.
    pub fn content_mix(&self, state: &ClubState) -> Result<GoodsDistribution> {
        self.check_state(state)?;
        let phi = self.phi_raw(&state.counts);
        if phi.is_nan() || phi <= 0.0 {
            return Ok(self.seed_distribution.clone());
        }
        // Mixture weights first, so a lone supplier's mix is its supply exactly.
        let mut mix: Vec<f64> = self
            .seed_distribution
            .weights()
            .iter()
            .map(|w| self.phi0 / phi * w)
            .collect();
        for (c, (class, n)) in self.classes.iter().zip(&state.counts).enumerate() {
            let weight = n * self.effective_kbar(c) / phi;
            if weight != 0.0 {
                for (m, g) in mix.iter_mut().zip(class.supply.weights()) {
                    *m += weight * g;
                }
            }
        }
        Ok(GoodsDistribution { weights: mix })
    }

    /// Probability that a member of class `c` joins (or stays in) the club.
    pub fn joining_probability(&self, c: usize, state: &ClubState) -> Result<f64> {
        self.check_state(state)?;
        let class = self.class(c)?;
        let content = self.content_raw(&state.counts);
        Ok(joining_raw(class, self.effective_contribution(c), &content))
    }

    /// Population-weighted average joining probability.
    pub fn mean_joining_probability(&self, state: &ClubState) -> Result<f64> {
        self.check_state(state)?;
        let population = self.population();
        if population == 0 {
            return Err(Error::EmptyPopulation);
        }
        let probs = self.probabilities_raw(&state.counts);
        Ok(self
            .classes
            .iter()
            .zip(probs)
            .map(|(class, p)| class.size as f64 * p)
            .sum::<f64>()
            / population as f64)
    }

    /// Marginal change of class `c`'s joining probability per unit of its own
    /// contribution, at its current contribution level. One peer's
    /// contribution is treated as too small to move `Phi` or the content mix.
    pub fn club_response(&self, c: usize, state: &ClubState) -> Result<f64> {
        self.check_state(state)?;
        let class = self.class(c)?;
        Ok(response_raw(
            class,
            class.contribution,
            &self.content_raw(&state.counts),
        ))
    }

    /// Club response at zero contribution.
    pub fn initial_club_response(&self, c: usize, state: &ClubState) -> Result<f64> {
        self.check_state(state)?;
        let class = self.class(c)?;
        Ok(response_raw(class, 0.0, &self.content_raw(&state.counts)))
    }

    /// Rational-contribution test: a peer contributes iff the inverse of the
    /// club response at zero contribution is below its propensity to
    /// contribute. `false` means the peer free-rides.
    pub fn is_contributor(&self, c: usize, state: &ClubState) -> Result<bool> {
        let response = self.initial_club_response(c, state)?;
        let gamma = self.class(c)?.utility.propensity_to_contribute();
        Ok(response > 0.0 && response.recip() < gamma)
    }

    /// `kbar` actually realised by a member of class `c`.
    pub fn effective_kbar(&self, c: usize) -> f64 {
        if self.contributes[c] {
            self.classes[c].kbar
        } else {
            0.0
        }
    }

    /// Contribution level that sets the search efficiency of class `c`.
    pub fn effective_contribution(&self, c: usize) -> f64 {
        if self.contributes[c] {
            self.classes[c].contribution
        } else {
            0.0
        }
    }

    pub fn effective_rho(&self, c: usize) -> f64 {
        self.classes[c].incentive.rho(self.effective_contribution(c))
    }

    // Unchecked evaluations on raw count slices. Counts may be slightly
    // negative here, which the finite-difference routines rely on.

    pub(crate) fn phi_raw(&self, counts: &[f64]) -> f64 {
        counts
            .iter()
            .enumerate()
            .map(|(c, n)| n * self.effective_kbar(c))
            .sum::<f64>()
            + self.phi0
    }

    /// Quantity of goods per type, `Phi g(s)`.
    pub(crate) fn content_raw(&self, counts: &[f64]) -> Vec<f64> {
        let mut content: Vec<f64> = self
            .seed_distribution
            .weights()
            .iter()
            .map(|w| self.phi0 * w)
            .collect();
        for (c, (class, n)) in self.classes.iter().zip(counts).enumerate() {
            let mass = n * self.effective_kbar(c);
            if mass != 0.0 {
                for (q, g) in content.iter_mut().zip(class.supply.weights()) {
                    *q += mass * g;
                }
            }
        }
        content
    }

    pub(crate) fn probabilities_raw(&self, counts: &[f64]) -> Vec<f64> {
        let content = self.content_raw(counts);
        self.classes
            .iter()
            .enumerate()
            .map(|(c, class)| joining_raw(class, self.effective_contribution(c), &content))
            .collect()
    }
}

fn joining_raw(class: &PeerClass, k: f64, content: &[f64]) -> f64 {
    let rho = class.incentive.rho(k);
    class
        .demand
        .weights()
        .iter()
        .zip(content)
        .map(|(h, q)| h * -(-rho * q).exp_m1())
        .sum()
}

fn response_raw(class: &PeerClass, k: f64, content: &[f64]) -> f64 {
    let slope = class.incentive.derivative(k);
    if slope == 0.0 {
        return 0.0;
    }
    let rho = class.incentive.rho(k);
    slope
        * class
            .demand
            .weights()
            .iter()
            .zip(content)
            .map(|(h, q)| h * q * (-rho * q).exp())
            .sum::<f64>()
}
