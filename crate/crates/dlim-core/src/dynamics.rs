//! Right-hand side of the coupled delay-oscillator model.
//!
//! Each artificial spin is a weakly nonlinear oscillator with delayed
//! feedback. In the co-rotating convention used throughout this crate the
//! free solution rotates as `e^{+i omega0 t}` and the equation of motion
//! for the complex amplitude `c_j` reads
//!
//! ```text
//! dc_j/dt = (i (omega0 + offset_j) - gamma0) c_j
//!         + K [1 - beta_r u_j] e^{i (beta_i u_j + loop_phase)} c_j(t - tau)
//!         + xi_j(t)
//! u_j     = (|c_j(t - tau)|^2 - p0) / p0
//! xi_j(t) = Ke e^{i omega_e t} conj(c_j) + kappa sum_{i != j} J_ij c_i/|c_i|
//! ```
//!
//! The injection term is resonant for `omega_e ~ 2 omega0`, which is what
//! phase-binarizes the oscillators. The conjugate convention is recovered
//! by conjugating all fields and negating `omega_e`; `beta_i` keeps its
//! sign so sweep outputs are labeled consistently either way.

use thiserror::Error;

use crate::problem::IsingProblem;
use crate::scalar::{cis, Real, C};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("omega_offsets length {got} does not match oscillator count {expected}")]
    OffsetLength { expected: usize, got: usize },
}

/// All dynamical constants of the machine, in angular units (rad per time
/// unit) unless stated otherwise.
#[derive(Debug, Clone)]
pub struct MachineParams<T: Real> {
    /// Oscillator count.
    pub n: usize,
    /// Loop resonant frequency.
    pub omega0: T,
    /// Loss rate.
    pub gamma0: T,
    /// Amplification gain.
    pub k_gain: T,
    /// Gain-compression coefficient (dimensionless).
    pub beta_r: T,
    /// Nonlinear frequency-shift coefficient (dimensionless).
    pub beta_i: T,
    /// Operating-point power (amplitude^2 units).
    pub p0: T,
    /// Loop delay (time units).
    pub tau: T,
    /// Injection strength of the binarizing signal.
    pub k_e: T,
    /// Binarizing drive frequency, near `2 omega0`.
    pub omega_e: T,
    /// Mutual coupling strength.
    pub kappa: T,
    /// Per-oscillator additive shifts to `omega0`.
    pub omega_offsets: Vec<T>,
    /// Constant extra phase on the delayed feedback, used by rotating-frame
    /// transforms; zero in the lab frame.
    pub loop_phase: T,
}

impl<T: Real> MachineParams<T> {
    /// Default operating point: omega0/2pi = 1, omega_e/2pi = 2*1.0015,
    /// tau = 10, gamma0/2pi = 0.05, K/2pi = 0.06, kappa/2pi = 0.003,
    /// Ke/2pi = 0.01, p0 = 1.
    pub fn defaults(n: usize) -> Self {
        let two_pi = T::TAU();
        Self {
            n,
            omega0: two_pi,
            gamma0: two_pi * T::of(0.05),
            k_gain: two_pi * T::of(0.06),
            beta_r: T::of(0.3),
            beta_i: T::zero(),
            p0: T::one(),
            tau: T::of(10.0),
            k_e: two_pi * T::of(0.01),
            omega_e: two_pi * T::of(2.0 * 1.0015),
            kappa: two_pi * T::of(0.003),
            omega_offsets: vec![T::zero(); n],
            loop_phase: T::zero(),
        }
    }

    /// Validate positivity constraints and vector lengths. Logs a warning
    /// when the loop is below oscillation threshold (`K <= gamma0`).
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("gamma0", self.gamma0),
            ("K", self.k_gain),
            ("p0", self.p0),
            ("tau", self.tau),
        ];
        for (name, value) in positive {
            if value <= T::zero() {
                return Err(DynamicsError::NonPositive {
                    name,
                    value: value.to_f64_lossy(),
                });
            }
        }
        if self.omega_offsets.len() != self.n {
            return Err(DynamicsError::OffsetLength {
                expected: self.n,
                got: self.omega_offsets.len(),
            });
        }
        if self.k_gain <= self.gamma0 {
            log::warn!(
                "K = {} does not exceed gamma0 = {}; loop is below oscillation threshold",
                self.k_gain,
                self.gamma0
            );
        }
        Ok(())
    }

    /// Amplitudes below this floor carry no usable phase; the phase-only
    /// coupling treats them as silent.
    pub fn amplitude_floor(&self) -> T {
        T::of(1e-12) * self.p0.sqrt()
    }

    /// Free-running steady power ratio `p*/p0 = 1 + (1 - gamma0/K)/beta_r`
    /// from gain-loss balance, valid for `beta_i = 0` and no drives.
    pub fn steady_power_ratio(&self) -> T {
        T::one() + (T::one() - self.gamma0 / self.k_gain) / self.beta_r
    }
}

/// Snapshot of the oscillator network at one instant.
#[derive(Debug, Clone)]
pub struct OscillatorState<T: Real> {
    /// Complex amplitudes, one per oscillator.
    pub c: Vec<C<T>>,
    /// Time of the snapshot.
    pub t: T,
}

impl<T: Real> OscillatorState<T> {
    /// Instantaneous power `|c_j|^2`.
    pub fn power(&self, j: usize) -> T {
        self.c[j].norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Dense coupling matrix consumed by the dynamics. Unlike
/// [`IsingProblem`], a single free-running oscillator (`n = 1`, no edges)
/// is a valid coupling.
#[derive(Debug, Clone)]
pub struct Coupling<T: Real> {
    n: usize,
    j: Vec<T>,
}

impl<T: Real> Coupling<T> {
    /// No mutual coupling at all.
    pub fn none(n: usize) -> Self {
        Self {
            n,
            j: vec![T::zero(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.j[i * self.n..(i + 1) * self.n]
    }
}

impl<T: Real> From<&IsingProblem<T>> for Coupling<T> {
    fn from(problem: &IsingProblem<T>) -> Self {
        let n = problem.n();
        let mut j = Vec::with_capacity(n * n);
        for i in 0..n {
            j.extend_from_slice(problem.coupling_row(i));
        }
        Self { n, j }
    }
}

/// Normalize to a unit phasor, or zero below the amplitude floor.
#[inline]
fn unit_phasor<T: Real>(z: C<T>, floor: T) -> C<T> {
    let norm = z.norm();
    if norm > floor {
        C::new(z.re / norm, z.im / norm)
    } else {
        C::new(T::zero(), T::zero())
    }
}

/// External drive `xi_j`: binarizing injection plus phase-only couplings
/// from the other oscillators, evaluated at `state.t`.
pub fn drive_term<T: Real>(
    params: &MachineParams<T>,
    state: &OscillatorState<T>,
    coupling: &Coupling<T>,
    j: usize,
) -> C<T> {
    let floor = params.amplitude_floor();
    let shil = cis(params.omega_e * state.t).scale(params.k_e) * state.c[j].conj();
    let mut sum = C::new(T::zero(), T::zero());
    for (i, &w) in coupling.row(j).iter().enumerate() {
        if i != j && w != T::zero() {
            sum = sum + unit_phasor(state.c[i], floor).scale(w);
        }
    }
    shil + sum.scale(params.kappa)
}

/// Scratch space for [`rhs_into`]; reuse across calls to keep the
/// integrator allocation-free.
#[derive(Debug, Clone)]
pub struct RhsScratch<T: Real> {
    units: Vec<C<T>>,
}

impl<T: Real> RhsScratch<T> {
    pub fn new(n: usize) -> Self {
        Self {
            units: vec![C::new(T::zero(), T::zero()); n],
        }
    }
}

/// Full right-hand side `dc_j/dt` for every oscillator, writing into `out`.
///
/// `delayed` must hold `c(t - tau)` as supplied by the integrator history.
pub fn rhs_into<T: Real>(
    params: &MachineParams<T>,
    t: T,
    now: &[C<T>],
    delayed: &[C<T>],
    coupling: &Coupling<T>,
    scratch: &mut RhsScratch<T>,
    out: &mut [C<T>],
) {
    let n = params.n;
    debug_assert_eq!(now.len(), n);
    debug_assert_eq!(delayed.len(), n);
    let floor = params.amplitude_floor();
    let inv_p0 = T::one() / params.p0;
    // the injection phasor is shared by every oscillator
    let shil_phasor = cis(params.omega_e * t).scale(params.k_e);
    for (unit, &z) in scratch.units.iter_mut().zip(now.iter()) {
        *unit = unit_phasor(z, floor);
    }
    for j in 0..n {
        let u = (delayed[j].norm_sqr() - params.p0) * inv_p0;
        let gain = params.k_gain * (T::one() - params.beta_r * u);
        let feedback = cis(params.beta_i * u + params.loop_phase).scale(gain) * delayed[j];
        let natural = C::new(-params.gamma0, params.omega0 + params.omega_offsets[j]) * now[j];
        let mut sum = C::new(T::zero(), T::zero());
        for (i, &w) in coupling.row(j).iter().enumerate() {
            if w != T::zero() && i != j {
                sum = sum + scratch.units[i].scale(w);
            }
        }
        out[j] = natural + feedback + shil_phasor * now[j].conj() + sum.scale(params.kappa);
    }
}

/// Allocating convenience wrapper around [`rhs_into`].
pub fn rhs<T: Real>(
    params: &MachineParams<T>,
    state: &OscillatorState<T>,
    delayed: &[C<T>],
    coupling: &Coupling<T>,
) -> Vec<C<T>> {
    let mut scratch = RhsScratch::new(params.n);
    let mut out = vec![C::new(T::zero(), T::zero()); params.n];
    rhs_into(params, state.t, &state.c, delayed, coupling, &mut scratch, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::IsingProblem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: C<f64>, b: C<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn drive_vanishes_without_injection_or_coupling() {
        let mut params = MachineParams::<f64>::defaults(2);
        params.k_e = 0.0;
        params.kappa = 0.0;
        let problem = IsingProblem::from_edges(2, &[(0, 1, 1.0)], "ferro2").unwrap();
        let coupling = Coupling::from(&problem);
        let state = OscillatorState {
            c: vec![C::new(0.3, 0.4), C::new(-0.2, 0.9)],
            t: 12.3,
        };
        for j in 0..2 {
            assert_eq!(drive_term(&params, &state, &coupling, j), C::new(0.0, 0.0));
        }
    }

    #[test]
    fn drive_injection_of_real_amplitude_at_t_zero() {
        let mut params = MachineParams::<f64>::defaults(1);
        params.kappa = 0.0;
        let coupling = Coupling::none(1);
        let amp = params.p0.sqrt();
        let state = OscillatorState {
            c: vec![C::new(amp, 0.0)],
            t: 0.0,
        };
        let xi = drive_term(&params, &state, &coupling, 0);
        assert!(close(xi, C::new(params.k_e * amp, 0.0), 1e-15));
    }

    #[test]
    fn drive_coupling_is_phase_only() {
        let mut params = MachineParams::<f64>::defaults(2);
        params.k_e = 0.0;
        let problem = IsingProblem::from_edges(2, &[(0, 1, 1.0)], "ferro2").unwrap();
        let coupling = Coupling::from(&problem);
        let phase = std::f64::consts::PI / 3.0;
        let mk = |scale: f64| OscillatorState {
            c: vec![
                C::new(1.0, 0.0),
                C::from_polar(scale * params.p0.sqrt(), phase),
            ],
            t: 0.0,
        };
        let expected = C::from_polar(params.kappa, phase);
        assert!(close(drive_term(&params, &mk(1.0), &coupling, 0), expected, 1e-15));
        // rescaling the neighbor amplitude by a positive factor changes nothing
        assert!(close(drive_term(&params, &mk(7.5), &coupling, 0), expected, 1e-15));
    }

    #[test]
    fn drive_silent_channel_contributes_zero() {
        let mut params = MachineParams::<f64>::defaults(2);
        params.k_e = 0.0;
        let problem = IsingProblem::from_edges(2, &[(0, 1, 1.0)], "ferro2").unwrap();
        let coupling = Coupling::from(&problem);
        let state = OscillatorState {
            c: vec![C::new(1.0, 0.0), C::new(0.0, 0.0)],
            t: 0.0,
        };
        assert_eq!(drive_term(&params, &state, &coupling, 0), C::new(0.0, 0.0));
    }

    #[test]
    fn rhs_at_operating_point_reduces_to_linear_rates() {
        // u = 0 kills both nonlinear factors
        let mut params = MachineParams::<f64>::defaults(1);
        params.k_e = 0.0;
        params.kappa = 0.0;
        let amp = params.p0.sqrt();
        let state = OscillatorState {
            c: vec![C::new(amp, 0.0)],
            t: 0.0,
        };
        let out = rhs(&params, &state, &[C::new(amp, 0.0)], &Coupling::none(1));
        let expected = C::new(-params.gamma0 + params.k_gain, params.omega0).scale(amp);
        assert!(close(out[0], expected, 1e-12));
    }

    #[test]
    fn rhs_linear_superposition_when_nonlinearities_off() {
        let mut params = MachineParams::<f64>::defaults(3);
        params.beta_r = 0.0;
        params.beta_i = 0.0;
        params.k_e = 0.0; // the injection term is antilinear, not linear
        let problem =
            IsingProblem::from_edges(3, &[(0, 1, 1.0), (1, 2, -1.0)], "chain").unwrap();
        let coupling = Coupling::from(&problem);
        // phase-only coupling is nonlinear in amplitude; drop it too
        let mut params_lin = params.clone();
        params_lin.kappa = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut draw = || {
            (0..3)
                .map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect::<Vec<_>>()
        };
        let a = draw();
        let b = draw();
        let sum: Vec<C<f64>> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let eval = |c: &Vec<C<f64>>| {
            rhs(
                &params_lin,
                &OscillatorState { c: c.clone(), t: 0.7 },
                c,
                &coupling,
            )
        };
        let fa = eval(&a);
        let fb = eval(&b);
        let fsum = eval(&sum);
        for j in 0..3 {
            assert!(close(fsum[j], fa[j] + fb[j], 1e-12));
        }
    }

    #[test]
    fn rhs_global_phase_covariance_without_injection() {
        let mut params = MachineParams::<f64>::defaults(2);
        params.k_e = 0.0;
        params.beta_r = 0.3;
        params.beta_i = 0.4;
        let problem = IsingProblem::from_edges(2, &[(0, 1, -1.0)], "anti").unwrap();
        let coupling = Coupling::from(&problem);
        let now = vec![C::new(0.8, 0.1), C::new(-0.4, 0.55)];
        let delayed = vec![C::new(0.7, -0.2), C::new(0.3, 0.6)];
        let base = rhs(
            &params,
            &OscillatorState { c: now.clone(), t: 1.3 },
            &delayed,
            &coupling,
        );
        for &alpha in &[0.3, 1.9, -2.4] {
            let rot = cis(alpha);
            let now_r: Vec<_> = now.iter().map(|z| z * rot).collect();
            let del_r: Vec<_> = delayed.iter().map(|z| z * rot).collect();
            let out = rhs(
                &params,
                &OscillatorState { c: now_r, t: 1.3 },
                &del_r,
                &coupling,
            );
            for j in 0..2 {
                assert!(close(out[j], base[j] * rot, 1e-12), "alpha = {alpha}");
            }
        }
    }

    #[test]
    fn validate_flags_bad_parameters() {
        let mut params = MachineParams::<f64>::defaults(2);
        params.gamma0 = 0.0;
        assert!(params.validate().is_err());
        let mut params = MachineParams::<f64>::defaults(2);
        params.omega_offsets = vec![0.0];
        assert!(params.validate().is_err());
        assert!(MachineParams::<f64>::defaults(4).validate().is_ok());
    }

    #[test]
    fn steady_power_ratio_matches_hand_value() {
        let mut params = MachineParams::<f64>::defaults(1);
        params.beta_r = 0.3;
        // 1 + (1 - 5/6)/0.3
        assert!((params.steady_power_ratio() - 1.5555555555555556).abs() < 1e-12);
    }
}
