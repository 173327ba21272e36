//! Battery-aware ISL power and rate allocation for LEO constellations.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which is what the CLI and the scenario loader use.

mod real;

pub mod constellation;
pub mod energy;
pub mod game;
pub mod link;
pub mod metrics;
pub mod mfg;
pub mod scenario;
pub mod solvers;
pub mod traffic;

pub use real::Real;

pub type LinkParams = link::LinkParams<f64>;
pub type EnergyParams = energy::EnergyParams<f64>;
pub type ConstellationConfig = constellation::ConstellationConfig<f64>;
pub type Ephemeris = constellation::Ephemeris<f64>;
pub type BatteryTrace = energy::BatteryTrace<f64>;
pub type Flow = traffic::Flow<f64>;
pub type FlowAllocation = traffic::FlowAllocation<f64>;
pub type GameParams = game::GameParams<f64>;
pub type SlotGame = game::SlotGame<f64>;
pub type SolverConfig = solvers::SolverConfig<f64>;
pub type SlotSolution = solvers::SlotSolution<f64>;
pub type EpisodeResult = solvers::EpisodeResult<f64>;
pub use scenario::Scenario;
