//! Conversion of recorded trajectories into observables: per-oscillator
//! frequency estimates, locking classification, and the two spin readouts
//! (against the injection reference inside the locked region, and from
//! relative phases when the network is pulled but mutually coherent).

use thiserror::Error;

use crate::dynamics::MachineParams;
use crate::integrate::Trace;
use crate::problem::{ProblemError, SpinConfig};
use crate::scalar::{cis, Real, C};

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("window holds {got} samples, need at least {need}")]
    TooFewSamples { need: usize, got: usize },
    #[error(
        "phase not stationary over readout window: oscillator {osc} has variance {variance:.4} rad^2 \
         (threshold {threshold})"
    )]
    NonStationary {
        osc: usize,
        variance: f64,
        threshold: f64,
    },
    #[error(
        "oscillators not mutually frequency-coherent: pairwise spread {spread:.3e} rad/unit \
         exceeds {tol:.3e}"
    )]
    Incoherent { spread: f64, tol: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Thresholds for locking classification and spin extraction.
#[derive(Debug, Clone)]
pub struct ReadoutConfig<T: Real> {
    /// Trailing time window the readout averages over.
    pub window: T,
    /// Absolute lock tolerance on `|2 omega - omega_e|` (rad per time unit).
    pub lock_tol: T,
    /// Largest tolerated phase variance (rad^2) for a stationary readout.
    pub phase_var_tol: T,
    /// Minimum number of samples a frequency estimate needs.
    pub min_samples: usize,
}

impl<T: Real> ReadoutConfig<T> {
    /// Defaults: 50-unit window, lock tolerance `1e-3 omega0` (two orders
    /// below the injection locking half-width at the default drive), 0.1
    /// rad^2 stationarity gate.
    pub fn defaults(omega0: T) -> Self {
        Self {
            window: T::of(50.0),
            lock_tol: T::of(1e-3) * omega0,
            phase_var_tol: T::of(0.1),
            min_samples: 100,
        }
    }
}

/// Locking classification of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockClass {
    /// Every oscillator locked to the binarizing signal.
    RegionI,
    /// Partially locked, or fully pulled yet mutually coherent.
    RegionII,
    /// No locking and no mutual coherence.
    Unlocked,
}

impl LockClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            LockClass::RegionI => "region-I",
            LockClass::RegionII => "region-II",
            LockClass::Unlocked => "unlocked",
        }
    }
}

/// Per-oscillator locking diagnostics.
#[derive(Debug, Clone)]
pub struct LockingReport<T: Real> {
    /// `2 omega_j - omega_e` estimates (rad per time unit, lab frame).
    pub freq_offsets: Vec<T>,
    pub locked: Vec<bool>,
    pub class: LockClass,
}

/// Which readout produced the spins of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutMode {
    ShilReference,
    RelativePhase,
}

impl ReadoutMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReadoutMode::ShilReference => "shil-reference",
            ReadoutMode::RelativePhase => "relative-phase",
        }
    }
}

/// Unwrap a phase series in place: successive differences are folded into
/// `(-pi, pi]` and re-accumulated.
pub fn unwrap_phases<T: Real>(phases: &mut [T]) {
    let tau = T::TAU();
    let pi = T::PI();
    let mut offset = T::zero();
    let mut prev = match phases.first() {
        Some(&p) => p,
        None => return,
    };
    for p in phases.iter_mut().skip(1) {
        let raw = *p;
        let mut diff = raw - prev;
        while diff > pi {
            diff = diff - tau;
        }
        while diff <= -pi {
            diff = diff + tau;
        }
        offset = offset + diff - (raw - prev);
        *p = raw + offset;
        prev = raw;
    }
}

/// Ordinary least-squares slope of `y` against `x`.
fn ols_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let n = T::of(x.len() as f64);
    let mut mx = T::zero();
    let mut my = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        mx = mx + a;
        my = my + b;
    }
    mx = mx / n;
    my = my / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        sxy = sxy + dx * (b - my);
        sxx = sxx + dx * dx;
    }
    sxy / sxx
}

/// Lab-frame angular frequency of one oscillator: the recorded phase is
/// unwrapped over the trailing window and fitted with a least-squares
/// line, then corrected for the integration frame.
pub fn estimate_frequency<T: Real>(
    trace: &Trace<T>,
    osc: usize,
    cfg: &ReadoutConfig<T>,
) -> Result<T, ReadoutError> {
    let start = trace.window_start(cfg.window);
    let count = trace.len() - start;
    if count < cfg.min_samples {
        return Err(ReadoutError::TooFewSamples {
            need: cfg.min_samples,
            got: count,
        });
    }
    let times: Vec<T> = trace.times()[start..].to_vec();
    let mut phases: Vec<T> = (start..trace.len())
        .map(|k| trace.sample(k)[osc].arg())
        .collect();
    unwrap_phases(&mut phases);
    Ok(ols_slope(&times, &phases) + trace.frame_freq())
}

/// In-frame frequency slopes for all oscillators over the window.
fn window_slopes<T: Real>(
    trace: &Trace<T>,
    cfg: &ReadoutConfig<T>,
) -> Result<Vec<T>, ReadoutError> {
    (0..trace.n())
        .map(|j| estimate_frequency(trace, j, cfg).map(|w| w - trace.frame_freq()))
        .collect()
}

/// Classify locking from the `2 omega_j - omega_e` offsets: locked means
/// `|offset| < lock_tol`; a fully pulled network still counts as region II
/// when the offsets are mutually coherent (pairwise frequency differences
/// within the lock tolerance).
pub fn classify_locking<T: Real>(freq_offsets: &[T], lock_tol: T) -> LockingReport<T> {
    let locked: Vec<bool> = freq_offsets.iter().map(|&o| o.abs() < lock_tol).collect();
    let all = locked.iter().all(|&l| l);
    let none = locked.iter().all(|&l| !l);
    let class = if all {
        LockClass::RegionI
    } else if none {
        // offsets are 2*(omega_i - omega_j) apart for pair (i, j)
        let mut lo = freq_offsets[0];
        let mut hi = freq_offsets[0];
        for &o in freq_offsets.iter().skip(1) {
            lo = lo.min(o);
            hi = hi.max(o);
        }
        if (hi - lo) < lock_tol + lock_tol {
            LockClass::RegionII
        } else {
            LockClass::Unlocked
        }
    } else {
        LockClass::RegionII
    };
    LockingReport {
        freq_offsets: freq_offsets.to_vec(),
        locked,
        class,
    }
}

/// Circular mean and variance of an angle series: the mean is the argument
/// of the resultant phasor; the variance averages squared angular
/// deviations from it, folded into `(-pi, pi]`.
fn circular_stats<T: Real>(angles: impl Iterator<Item = T> + Clone) -> (T, T) {
    let mut sum = C::new(T::zero(), T::zero());
    let mut count = 0usize;
    for a in angles.clone() {
        sum = sum + cis(a);
        count += 1;
    }
    let mean = sum.arg();
    let mut var = T::zero();
    for a in angles {
        let mut dev = (a - mean) % T::TAU();
        if dev > T::PI() {
            dev = dev - T::TAU();
        } else if dev < -T::PI() {
            dev = dev + T::TAU();
        }
        var = var + dev * dev;
    }
    (mean, var / T::of(count as f64))
}

/// Spin readout against the injection reference: each oscillator's phase
/// relative to the half-frequency of the binarizing signal is averaged
/// over the window, gauged on oscillator 0, and thresholded on the
/// half-plane `cos > 0`. Requires stationary phases.
pub fn binarize_shil<T: Real>(
    trace: &Trace<T>,
    lab_params: &MachineParams<T>,
    cfg: &ReadoutConfig<T>,
) -> Result<SpinConfig, ReadoutError> {
    let start = trace.window_start(cfg.window);
    // phase of c_j relative to the injection half-frequency, in the frame
    // the trace was recorded in
    let rel_rate = trace.frame_freq() - lab_params.omega_e / T::of(2.0);
    let n = trace.n();
    let mut means = Vec::with_capacity(n);
    for j in 0..n {
        let angles = (start..trace.len()).map(|k| {
            let t = trace.time(k);
            trace.sample(k)[j].arg() + rel_rate * t
        });
        let (mean, var) = circular_stats(angles);
        if var > cfg.phase_var_tol {
            return Err(ReadoutError::NonStationary {
                osc: j,
                variance: var.to_f64_lossy(),
                threshold: cfg.phase_var_tol.to_f64_lossy(),
            });
        }
        means.push(mean);
    }
    let gauge = means[0];
    let spins: Vec<i8> = means
        .iter()
        .map(|&m| if (m - gauge).cos() > T::zero() { 1 } else { -1 })
        .collect();
    Ok(SpinConfig::new(spins).expect("spins are +-1"))
}

/// Spin readout from relative phases: oscillator 0 fixes the gauge and
/// each mean phase difference is thresholded on the half-plane. Requires
/// mutual frequency coherence.
pub fn binarize_relative<T: Real>(
    trace: &Trace<T>,
    cfg: &ReadoutConfig<T>,
) -> Result<SpinConfig, ReadoutError> {
    let slopes = window_slopes(trace, cfg)?;
    let mut lo = slopes[0];
    let mut hi = slopes[0];
    for &s in slopes.iter().skip(1) {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi - lo >= cfg.lock_tol {
        return Err(ReadoutError::Incoherent {
            spread: (hi - lo).to_f64_lossy(),
            tol: cfg.lock_tol.to_f64_lossy(),
        });
    }
    let start = trace.window_start(cfg.window);
    let n = trace.n();
    let mut spins = vec![1i8; n];
    for j in 1..n {
        let angles = (start..trace.len()).map(|k| {
            let s = trace.sample(k);
            (s[j] * s[0].conj()).arg()
        });
        let (mean, _var) = circular_stats(angles);
        spins[j] = if mean.cos() > T::zero() { 1 } else { -1 };
    }
    Ok(SpinConfig::new(spins).expect("spins are +-1"))
}

/// Frequency offsets `2 omega_j - omega_e` in the lab frame for a whole
/// trace.
pub fn frequency_offsets<T: Real>(
    trace: &Trace<T>,
    lab_params: &MachineParams<T>,
    cfg: &ReadoutConfig<T>,
) -> Result<Vec<T>, ReadoutError> {
    (0..trace.n())
        .map(|j| {
            estimate_frequency(trace, j, cfg).map(|w| w + w - lab_params.omega_e)
        })
        .collect()
}

/// Everything a sweep needs to know about one finished trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome<T: Real> {
    pub spins: SpinConfig,
    pub energy: T,
    pub is_ground: bool,
    /// True when every oscillator locked to the binarizing signal.
    pub locked: bool,
    pub class: LockClass,
    pub mean_freq_offsets: Vec<T>,
    pub readout_mode: ReadoutMode,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Trace;

    fn synthetic_trace(
        n: usize,
        frame_freq: f64,
        dt: f64,
        samples: usize,
        phase_fn: impl Fn(usize, f64) -> f64,
    ) -> Trace<f64> {
        let mut times = Vec::with_capacity(samples);
        let mut states = Vec::with_capacity(samples * n);
        for k in 0..samples {
            let t = k as f64 * dt;
            times.push(t);
            for j in 0..n {
                states.push(C::from_polar(1.0, phase_fn(j, t)));
            }
        }
        Trace::from_parts(n, frame_freq, times, states)
    }

    fn cfg() -> ReadoutConfig<f64> {
        ReadoutConfig::defaults(std::f64::consts::TAU)
    }

    #[test]
    fn frequency_of_pure_rotation() {
        let omega = std::f64::consts::TAU;
        let trace = synthetic_trace(1, 0.0, 0.05, 2001, |_, t| omega * t);
        let est = estimate_frequency(&trace, 0, &cfg()).unwrap();
        assert!((est - omega).abs() < 1e-6, "estimate {est}");
    }

    #[test]
    fn frequency_with_oscillatory_ripple_averages_out() {
        let omega = std::f64::consts::TAU;
        let trace = synthetic_trace(1, 0.0, 0.05, 4001, |_, t| {
            omega * t + 0.1 * (0.5 * t).sin()
        });
        let mut c = cfg();
        c.window = 200.0;
        let est = estimate_frequency(&trace, 0, &c).unwrap();
        assert!((est - omega).abs() < 1e-3, "estimate {est}");
    }

    #[test]
    fn frequency_corrects_for_the_frame() {
        // constant phase in a frame rotating at omega_e/2
        let frame = std::f64::consts::TAU * 1.0015;
        let trace = synthetic_trace(1, frame, 0.05, 2001, |_, _| 0.4);
        let est = estimate_frequency(&trace, 0, &cfg()).unwrap();
        assert_eq!(est, frame + 0.0);
    }

    #[test]
    fn frequency_invariant_under_phase_offset() {
        let omega = 1.7;
        let a = synthetic_trace(1, 0.0, 0.05, 2001, |_, t| omega * t);
        let b = synthetic_trace(1, 0.0, 0.05, 2001, |_, t| omega * t + 1.234);
        let ea = estimate_frequency(&a, 0, &cfg()).unwrap();
        let eb = estimate_frequency(&b, 0, &cfg()).unwrap();
        assert!((ea - eb).abs() < 1e-12);
    }

    #[test]
    fn frequency_needs_enough_samples() {
        let trace = synthetic_trace(1, 0.0, 1.0, 30, |_, t| t);
        assert!(matches!(
            estimate_frequency(&trace, 0, &cfg()),
            Err(ReadoutError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn classify_all_zero_offsets_is_region_one() {
        let report = classify_locking(&[0.0, 0.0, 0.0], 1e-3);
        assert_eq!(report.class, LockClass::RegionI);
        assert!(report.locked.iter().all(|&l| l));
    }

    #[test]
    fn classify_large_incoherent_offsets_is_unlocked() {
        let report = classify_locking(&[1e-2, -1e-2], 1e-3);
        assert_eq!(report.class, LockClass::Unlocked);
        assert!(report.locked.iter().all(|&l| !l));
    }

    #[test]
    fn classify_mixed_offsets_is_region_two() {
        let report = classify_locking(&[0.0, 5e-3], 1e-3);
        assert_eq!(report.class, LockClass::RegionII);
        assert_eq!(report.locked, vec![true, false]);
    }

    #[test]
    fn classify_pulled_but_coherent_is_region_two() {
        let report = classify_locking(&[5e-3, 5.5e-3], 1e-3);
        assert_eq!(report.class, LockClass::RegionII);
        assert!(report.locked.iter().all(|&l| !l));
    }

    #[test]
    fn classify_is_monotone_in_lock_tol() {
        let offsets = [0.0, 2e-3, 8e-3, -3e-3];
        let tols = [1e-4, 1e-3, 5e-3, 1e-2, 1e-1];
        let mut prev = 0;
        for &tol in &tols {
            let locked = classify_locking(&offsets, tol)
                .locked
                .iter()
                .filter(|&&l| l)
                .count();
            assert!(locked >= prev, "lock count dropped as tol grew");
            prev = locked;
        }
    }

    fn shil_params() -> MachineParams<f64> {
        MachineParams::defaults(2)
    }

    #[test]
    fn shil_readout_of_aligned_and_opposed_phases() {
        let params = shil_params();
        let frame = params.omega_e / 2.0;
        let aligned = synthetic_trace(2, frame, 0.05, 2001, |_, _| 0.0);
        assert_eq!(
            binarize_shil(&aligned, &params, &cfg()).unwrap().spins(),
            &[1, 1]
        );
        let opposed = synthetic_trace(2, frame, 0.05, 2001, |j, _| {
            if j == 0 {
                0.0
            } else {
                std::f64::consts::PI
            }
        });
        assert_eq!(
            binarize_shil(&opposed, &params, &cfg()).unwrap().spins(),
            &[1, -1]
        );
    }

    #[test]
    fn shil_readout_tolerates_detuning_offsets() {
        // stationary lock phases sit away from exactly {0, pi} inside the
        // locking tongue; the half-plane rule still separates them
        let params = shil_params();
        let frame = params.omega_e / 2.0;
        let trace = synthetic_trace(2, frame, 0.05, 2001, |j, _| {
            if j == 0 {
                0.0
            } else {
                std::f64::consts::PI + 0.3
            }
        });
        assert_eq!(
            binarize_shil(&trace, &params, &cfg()).unwrap().spins(),
            &[1, -1]
        );
    }

    #[test]
    fn shil_readout_rejects_non_stationary_phases() {
        let params = shil_params();
        let frame = params.omega_e / 2.0;
        // phase wanders by +-1 rad, variance far above the gate
        let trace = synthetic_trace(2, frame, 0.05, 2001, |j, t| {
            if j == 0 {
                0.0
            } else {
                (0.37 * t).sin()
            }
        });
        assert!(matches!(
            binarize_shil(&trace, &params, &cfg()),
            Err(ReadoutError::NonStationary { osc: 1, .. })
        ));
    }

    #[test]
    fn relative_readout_of_phase_pattern() {
        let pi = std::f64::consts::PI;
        let trace = synthetic_trace(3, 0.0, 0.05, 2001, |j, _| if j == 0 { 0.0 } else { pi });
        assert_eq!(
            binarize_relative(&trace, &cfg()).unwrap().spins(),
            &[1, -1, -1]
        );
    }

    #[test]
    fn relative_readout_cancels_common_drift() {
        let pi = std::f64::consts::PI;
        let drift = 0.02;
        let trace = synthetic_trace(2, 0.0, 0.05, 2001, |j, t| {
            drift * t + if j == 0 { 0.0 } else { pi }
        });
        assert_eq!(
            binarize_relative(&trace, &cfg()).unwrap().spins(),
            &[1, -1]
        );
    }

    #[test]
    fn relative_readout_rejects_incoherent_network() {
        let trace = synthetic_trace(2, 0.0, 0.05, 2001, |j, t| {
            if j == 0 {
                0.0
            } else {
                0.05 * t // beating at 0.05 rad/unit, far above lock_tol
            }
        });
        assert!(matches!(
            binarize_relative(&trace, &cfg()),
            Err(ReadoutError::Incoherent { .. })
        ));
    }

    #[test]
    fn readouts_are_gauge_invariant_in_energy() {
        use crate::problem::IsingProblem;
        let params = shil_params();
        let frame = params.omega_e / 2.0;
        let problem = IsingProblem::from_edges(2, &[(0, 1, 1.0)], "ferro2").unwrap();
        let pi = std::f64::consts::PI;
        for &alpha in &[0.0, 0.9, 2.5, 4.4] {
            let trace = synthetic_trace(2, frame, 0.05, 2001, |j, _| {
                alpha + if j == 0 { 0.0 } else { pi }
            });
            let shil = binarize_shil(&trace, &params, &cfg()).unwrap();
            let rel = binarize_relative(&trace, &cfg()).unwrap();
            assert_eq!(problem.energy(&shil).unwrap(), 2.0, "alpha {alpha}");
            assert_eq!(problem.energy(&rel).unwrap(), 2.0, "alpha {alpha}");
        }
    }

    #[test]
    fn unwrap_handles_many_turns() {
        let omega = 3.0;
        let mut phases: Vec<f64> = (0..500)
            .map(|k| {
                let t = k as f64 * 0.1;
                (omega * t).rem_euclid(std::f64::consts::TAU)
            })
            .collect();
        unwrap_phases(&mut phases);
        let expect = omega * 499.0 * 0.1;
        assert!((phases[499] - expect).abs() < 1e-9);
    }
}
