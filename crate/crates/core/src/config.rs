//! JSON scenario documents.
//!
//! ```json
//! {
//!   "goods": 2,
//!   "phi0": 0.0,
//!   "classes": [
//!     { "n": 100, "demand": [1, 0], "supply": [1, 0], "kbar": 1,
//!       "incentive": { "kind": "constant", "rho0": 0.015 } }
//!   ]
//! }
//! ```
//!
//! Optional keys: `seed_distribution` (default uniform), `endogenous_contribution`
//! (default false), and per class `contribution` (default `kbar`) and
//! `utility` `{ "a": .., "c": .. }` (default `a = c = 1`).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{GoodsDistribution, IncentiveFunction, PeerClass, Scenario, UtilityModel};

/// Load failure with the location of the offending input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Field path such as `classes[0].supply`, or `line 3, column 7`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub goods: usize,
    pub phi0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_distribution: Option<Vec<f64>>,
    #[serde(default)]
    pub endogenous_contribution: bool,
    pub classes: Vec<ClassDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDocument {
    pub n: u64,
    pub demand: Vec<f64>,
    pub supply: Vec<f64>,
    pub kbar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution: Option<f64>,
    pub incentive: IncentiveDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityDocument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum IncentiveDocument {
    Constant { rho0: f64 },
    Saturating { rho0: f64, rho_max: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityDocument {
    pub a: f64,
    pub c: f64,
}

fn at(location: impl Into<String>) -> impl FnOnce(Error) -> ConfigError {
    let location = location.into();
    move |e| ConfigError {
        location,
        message: match e {
            Error::InvalidDistribution(m) => m,
            other => other.to_string(),
        },
    }
}

fn distribution(
    weights: &[f64],
    goods: usize,
    location: String,
) -> Result<GoodsDistribution, ConfigError> {
    if weights.len() != goods {
        return Err(ConfigError {
            location,
            message: format!("has {} entries, expected goods = {goods}", weights.len()),
        });
    }
    GoodsDistribution::new(weights.to_vec()).map_err(at(location))
}

impl ScenarioDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        if self.goods == 0 {
            return Err(ConfigError {
                location: "goods".into(),
                message: "must be at least 1".into(),
            });
        }
        let seed = match &self.seed_distribution {
            Some(w) => distribution(w, self.goods, "seed_distribution".into())?,
            None => GoodsDistribution::uniform(self.goods).map_err(at("goods"))?,
        };
        let classes = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_class(self.goods, &format!("classes[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        if classes.is_empty() {
            return Err(ConfigError {
                location: "classes".into(),
                message: "at least one class is required".into(),
            });
        }
        Scenario::new(classes, self.phi0, seed, self.endogenous_contribution).map_err(|e| {
            let location = match &e {
                Error::InvalidParameter { name: "phi0", .. } => "phi0",
                _ => "scenario",
            };
            at(location)(e)
        })
    }
}

impl ClassDocument {
    fn to_class(&self, goods: usize, path: &str) -> Result<PeerClass, ConfigError> {
        let incentive = match self.incentive {
            IncentiveDocument::Constant { rho0 } => IncentiveFunction::constant(rho0),
            IncentiveDocument::Saturating {
                rho0,
                rho_max,
                beta,
            } => IncentiveFunction::saturating(rho0, rho_max, beta),
        }
        .map_err(|e| match e {
            Error::InvalidParameter { name, reason } => ConfigError {
                location: format!("{path}.incentive.{name}"),
                message: reason,
            },
            other => at(format!("{path}.incentive"))(other),
        })?;
        let utility = match self.utility {
            Some(u) => UtilityModel::new(u.a, u.c).map_err(|e| match e {
                Error::InvalidParameter { name, reason } => ConfigError {
                    location: format!("{path}.utility.{name}"),
                    message: reason,
                },
                other => at(format!("{path}.utility"))(other),
            })?,
            None => UtilityModel::default(),
        };
        let class = PeerClass {
            size: self.n,
            demand: distribution(&self.demand, goods, format!("{path}.demand"))?,
            supply: distribution(&self.supply, goods, format!("{path}.supply"))?,
            kbar: self.kbar,
            contribution: self.contribution.unwrap_or(self.kbar),
            incentive,
            utility,
        };
        class.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => ConfigError {
                location: format!("{path}.{name}"),
                message: reason,
            },
            other => at(path.to_string())(other),
        })?;
        Ok(class)
    }
}

impl From<&Scenario> for ScenarioDocument {
    fn from(scenario: &Scenario) -> Self {
        ScenarioDocument {
            goods: scenario.goods(),
            phi0: scenario.phi0(),
            seed_distribution: Some(scenario.seed_distribution().weights().to_vec()),
            endogenous_contribution: scenario.endogenous_contribution(),
            classes: scenario
                .classes()
                .iter()
                .map(|c| ClassDocument {
                    n: c.size,
                    demand: c.demand.weights().to_vec(),
                    supply: c.supply.weights().to_vec(),
                    kbar: c.kbar,
                    contribution: Some(c.contribution),
                    incentive: match c.incentive {
                        IncentiveFunction::Constant { rho0 } => IncentiveDocument::Constant { rho0 },
                        IncentiveFunction::SaturatingExponential {
                            rho0,
                            rho_max,
                            beta,
                        } => IncentiveDocument::Saturating {
                            rho0,
                            rho_max,
                            beta,
                        },
                    },
                    utility: Some(UtilityDocument {
                        a: c.utility.marginal_benefit,
                        c: c.utility.marginal_cost,
                    }),
                })
                .collect(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    ScenarioDocument::parse(text)?.to_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"{
        "goods": 2,
        "phi0": 0,
        "classes": [
            { "n": 100, "demand": [1, 0], "supply": [1, 0], "kbar": 1,
              "incentive": { "kind": "constant", "rho0": 0.015 } }
        ]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let sc = parse_scenario(SINGLE).unwrap();
        assert_eq!(sc.classes().len(), 1);
        assert_eq!(sc.classes()[0].contribution, 1.0);
        assert_eq!(sc.seed_distribution().weights(), &[0.5, 0.5]);
        assert!(!sc.endogenous_contribution());
    }

    #[test]
    fn names_bad_distribution() {
        let text = SINGLE.replace("\"supply\": [1, 0]", "\"supply\": [0.5, 0.4]");
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.location, "classes[0].supply");
        let text = SINGLE.replace("\"demand\": [1, 0]", "\"demand\": [1]");
        assert_eq!(parse_scenario(&text).unwrap_err().location, "classes[0].demand");
    }

    #[test]
    fn names_bad_parameters() {
        let text = SINGLE.replace("\"rho0\": 0.015", "\"rho0\": 1.5");
        assert_eq!(parse_scenario(&text).unwrap_err().location, "classes[0].incentive.rho0");
        let text = SINGLE.replace("\"kbar\": 1", "\"kbar\": -1");
        assert_eq!(parse_scenario(&text).unwrap_err().location, "classes[0].kbar");
        let text = SINGLE.replace("\"phi0\": 0", "\"phi0\": -2");
        assert_eq!(parse_scenario(&text).unwrap_err().location, "phi0");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = SINGLE.replace("\"kbar\": 1", "\"kbar\": ");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.location.starts_with("line 5"), "{err}");
        let text = SINGLE.replace("\"kbar\"", "\"kbarr\"");
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn saturating_and_utility() {
        let text = SINGLE.replace(
            r#"{ "kind": "constant", "rho0": 0.015 }"#,
            r#"{ "kind": "saturating", "rho0": 0.01, "rho_max": 0.5, "beta": 2 }, "utility": { "a": 4, "c": 1 }"#,
        );
        let sc = parse_scenario(&text).unwrap();
        assert_eq!(sc.classes()[0].utility.propensity_to_contribute(), 4.0);
        assert!((sc.classes()[0].incentive.derivative_at_zero() - 0.98).abs() < 1e-15);
    }

    #[test]
    fn document_round_trip() {
        let sc = crate::experiments::build_two_type_scenario(0.1, 100, 60, 0.015, 0.5).unwrap();
        let text = serde_json::to_string(&ScenarioDocument::from(&sc)).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), sc);
    }
}
