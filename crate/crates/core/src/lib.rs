//! Formation of information-sharing clubs by rational peers.
//!
//! Peers with heterogeneous demand and supply over goods types join a club
//! with a probability that grows with how much of what they want the club
//! holds, and their own supply feeds the club content in turn. This crate
//! computes the resulting statistical equilibrium club size, both by solving
//! the membership fixed point ([`equilibrium`]) and by simulating the join and
//! leave dynamics ([`sim`]), checks the conditions under which an empty club
//! self-starts, and reproduces the club-mixing experiments ([`experiments`]).

pub mod cli;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod format;
pub mod model;
pub mod sim;

pub use equilibrium::{
    check_viability, classify_stability, influx_rate, solve, solve_equilibrium,
    EquilibriumSolution, InfluxRate, SolverOptions, ViabilityReport,
};
pub use error::{Error, Result};
pub use model::{ClubState, GoodsDistribution, IncentiveFunction, PeerClass, Scenario, UtilityModel};
pub use sim::{estimate_equilibrium, run, run_quasi_stationary, Estimate, SimConfig, SimTrace};
