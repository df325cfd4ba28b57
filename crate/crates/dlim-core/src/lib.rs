//! Simulation and analysis toolkit for Ising machines built from
//! delay-line oscillators.
//!
//! The machine hosts `n` artificial spins as weakly nonlinear oscillators
//! circulating in a delayed feedback loop. A binarizing signal injected
//! near twice the loop frequency locks each oscillator phase to one of two
//! values, and phase-only mutual couplings encode the problem couplings.
//! The crate provides:
//!
//! - [`problem`]: Ising instances, benchmark graph generators, and an
//!   exhaustive ground-state oracle,
//! - [`dynamics`]: the delay-oscillator equations of motion,
//! - [`integrate`]: a fixed-step Runge-Kutta integrator with dense delayed
//!   history,
//! - [`readout`]: frequency estimation, locking classification, and spin
//!   binarization,
//! - [`sweep`]: deterministic parallel parameter sweeps and their
//!   aggregated statistics,
//! - [`output`]: plain-text emitters for sweep tables, heatmap matrices,
//!   and trajectory traces.
//!
//! All numerics are generic over the scalar type through
//! [`scalar::Real`]; the aliases below fix the `f64` instantiation used
//! by the command-line front end.

pub mod dynamics;
pub mod integrate;
pub mod output;
pub mod problem;
pub mod readout;
pub mod scalar;
pub mod sweep;

pub use scalar::{Real, C};

/// Default scalar used by the CLI.
pub type Scalar = f64;
/// Complex amplitude at the default scalar.
pub type Amplitude = C<Scalar>;
/// Ising instance at the default scalar.
pub type Problem = problem::IsingProblem<Scalar>;
/// Ground-truth record at the default scalar.
pub type Ground = problem::GroundTruth<Scalar>;
/// Machine parameters at the default scalar.
pub type Params = dynamics::MachineParams<Scalar>;
/// Integrator settings at the default scalar.
pub type Integrator = integrate::IntegratorConfig<Scalar>;
/// Readout settings at the default scalar.
pub type Readout = readout::ReadoutConfig<Scalar>;

#[cfg(test)]
pub(crate) mod tests_support {
    /// Ground energy of `random_graph(8, 0.5, [-1, 1], seed 7)`, recorded
    /// by the exhaustive oracle when the generator stream was frozen.
    pub const SEED7_GROUND_ENERGY: f64 = -24.0;
}
