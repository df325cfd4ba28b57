//! Experiment orchestration: grids over circuit parameters, deterministic
//! per-trial seeding, parallel execution, and aggregation into success
//! statistics.
//!
//! Every trial derives its seed from `(master_seed, point_index,
//! trial_index)` alone, so results are reproducible bit-for-bit regardless
//! of worker count or execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{Coupling, MachineParams};
use crate::integrate::{integrate, InitialHistory, IntegratorConfig};
use crate::problem::{GroundTruth, IsingProblem};
use crate::readout::{
    binarize_relative, binarize_shil, classify_locking, frequency_offsets, LockClass,
    ReadoutConfig, ReadoutError, ReadoutMode, TrialOutcome,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep spec has kind {got:?}, expected {want:?}")]
    WrongKind { want: SweepKind, got: SweepKind },
    #[error("no transition found: {0}")]
    NoTransition(String),
    #[error("transition fit refused: only {0} boundary points, need at least 3")]
    TooFewBoundaryPoints(usize),
    #[error("axis step must be positive, got {0}")]
    BadAxisStep(f64),
    #[error("trials_per_point must be at least 1")]
    NoTrials,
}

/// One step of the SplitMix64 sequence.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed from the master seed and grid coordinates.
pub fn trial_seed(master_seed: u64, point_index: u64, trial_index: u64) -> u64 {
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    let mut state = a ^ point_index.wrapping_mul(0xD134_2543_DE82_EF95);
    let b = splitmix64(&mut state);
    let mut state = b ^ trial_index.wrapping_mul(0x2545_F491_4F6C_DD1D);
    splitmix64(&mut state)
}

/// Binomial standard error of a proportion estimate.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Inclusive uniform grid `min, min + step, ..` up to `max`.
#[derive(Debug, Clone, Copy)]
pub struct Axis<T: Real> {
    pub min: T,
    pub max: T,
    pub step: T,
}

impl<T: Real> Axis<T> {
    pub fn new(min: T, max: T, step: T) -> Self {
        Self { min, max, step }
    }

    /// Degenerate single-value axis.
    pub fn fixed(value: T) -> Self {
        Self {
            min: value,
            max: value,
            step: T::one(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.step <= T::zero() {
            return Err(SweepError::BadAxisStep(self.step.to_f64_lossy()));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        if self.max < self.min {
            return 0;
        }
        let span = (self.max - self.min) / self.step;
        (span + T::of(1e-9)).floor().to_f64_lossy() as usize + 1
    }

    pub fn values(&self) -> Vec<T> {
        (0..self.count())
            .map(|i| self.min + self.step * T::of(i as f64))
            .collect()
    }
}

/// Which experiment a [`SweepSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Success-probability map over `(beta_r, beta_i)`.
    BetaPlane,
    /// Single-oscillator locking map over `(Ke, detuning)`.
    Arnold,
    /// Success probability over the mutual coupling strength.
    Kappa,
    /// Success probability over the injection detuning at several
    /// `beta_i` values.
    Detuning,
    /// One grid point, many trials.
    SinglePoint,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::BetaPlane => "beta-plane",
            SweepKind::Arnold => "arnold",
            SweepKind::Kappa => "kappa",
            SweepKind::Detuning => "detuning",
            SweepKind::SinglePoint => "single-point",
        }
    }
}

/// Integration frame the sweep runs in.
#[derive(Debug, Clone, Copy)]
pub enum Frame<T: Real> {
    Lab,
    /// Co-rotating at half the (per-point) injection frequency; locked
    /// solutions become quasi-stationary and allow a 10x coarser step.
    HalfOmegaE,
    Fixed(T),
}

impl<T: Real> Frame<T> {
    pub fn freq(&self, omega_e: T) -> T {
        match self {
            Frame::Lab => T::zero(),
            Frame::HalfOmegaE => omega_e / T::of(2.0),
            Frame::Fixed(f) => *f,
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone)]
pub struct SweepSpec<T: Real> {
    pub kind: SweepKind,
    /// First grid axis: `beta_r` (beta-plane), `Ke` (arnold), `kappa`
    /// (kappa sweep), detuning `omega_e - 2 omega0` (detuning sweep).
    pub axis_a: Axis<T>,
    /// Second grid axis: `beta_i` (beta-plane, detuning), detuning
    /// (arnold); fixed otherwise.
    pub axis_b: Axis<T>,
    pub trials_per_point: usize,
    /// Machine parameters at the grid origin; each point overrides the
    /// swept fields.
    pub base: MachineParams<T>,
    pub master_seed: u64,
    /// Relative standard deviation of per-oscillator frequency offsets,
    /// in units of `omega0`; 0 disables dispersion. Offsets are redrawn
    /// every trial.
    pub dispersion_sigma: T,
    pub amplitude_scale: T,
    pub integrator: IntegratorConfig<T>,
    pub frame: Frame<T>,
    pub readout: ReadoutConfig<T>,
}

impl<T: Real> SweepSpec<T> {
    fn common(kind: SweepKind, base: MachineParams<T>, master_seed: u64) -> Self {
        let readout = ReadoutConfig::defaults(base.omega0);
        Self {
            kind,
            axis_a: Axis::fixed(T::zero()),
            axis_b: Axis::fixed(T::zero()),
            trials_per_point: 200,
            integrator: IntegratorConfig::rotating_defaults(T::zero()),
            frame: Frame::HalfOmegaE,
            master_seed,
            dispersion_sigma: T::zero(),
            amplitude_scale: T::of(0.05),
            base,
            readout,
        }
    }

    /// Success-probability map over the default nonlinearity grid:
    /// `beta_r` in [0.1, 0.5], `beta_i` in [-1, 1], step 0.02, 200 trials.
    pub fn beta_plane(base: MachineParams<T>, master_seed: u64) -> Self {
        let mut spec = Self::common(SweepKind::BetaPlane, base, master_seed);
        spec.axis_a = Axis::new(T::of(0.1), T::of(0.5), T::of(0.02));
        spec.axis_b = Axis::new(T::of(-1.0), T::of(1.0), T::of(0.02));
        spec
    }

    /// Desk-scale profile: step 0.04 and 50 trials per point.
    pub fn fast(mut self) -> Self {
        if self.kind == SweepKind::BetaPlane {
            self.axis_a.step = T::of(0.04);
            self.axis_b.step = T::of(0.04);
        }
        self.trials_per_point = self.trials_per_point.min(50);
        self
    }

    /// Single-oscillator locking map over injection strength and detuning.
    pub fn arnold(base: MachineParams<T>, master_seed: u64) -> Self {
        let two_pi = T::TAU();
        let mut spec = Self::common(SweepKind::Arnold, base, master_seed);
        spec.axis_a = Axis::new(
            two_pi * T::of(0.002),
            two_pi * T::of(0.02),
            two_pi * T::of(0.002),
        );
        spec.axis_b = Axis::new(
            two_pi * T::of(-0.025),
            two_pi * T::of(0.025),
            two_pi * T::of(0.001),
        );
        spec.trials_per_point = 1;
        spec
    }

    /// Coupling-strength sweep bracketing the useful range.
    pub fn kappa(base: MachineParams<T>, master_seed: u64) -> Self {
        let two_pi = T::TAU();
        let mut spec = Self::common(SweepKind::Kappa, base, master_seed);
        spec.axis_a = Axis::new(
            two_pi * T::of(0.003),
            two_pi * T::of(0.018),
            two_pi * T::of(0.003),
        );
        spec.axis_b = Axis::fixed(spec.base.beta_i);
        spec
    }

    /// Detuning sweep at a few `beta_i` values (including the 0 baseline).
    pub fn detuning(base: MachineParams<T>, master_seed: u64) -> Self {
        let two_pi = T::TAU();
        let mut spec = Self::common(SweepKind::Detuning, base, master_seed);
        spec.axis_a = Axis::new(
            two_pi * T::of(-0.006),
            two_pi * T::of(0.006),
            two_pi * T::of(0.003),
        );
        spec.axis_b = Axis::new(T::of(-0.16), T::of(0.16), T::of(0.16));
        spec
    }

    /// Repeated trials of the base parameter set.
    pub fn single_point(base: MachineParams<T>, master_seed: u64) -> Self {
        Self::common(SweepKind::SinglePoint, base, master_seed)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.axis_a.validate()?;
        self.axis_b.validate()?;
        if self.trials_per_point == 0 {
            return Err(SweepError::NoTrials);
        }
        Ok(())
    }

    /// Machine parameters at grid point `(a, b)`.
    pub fn params_at(&self, a: T, b: T) -> MachineParams<T> {
        let mut p = self.base.clone();
        match self.kind {
            SweepKind::BetaPlane => {
                p.beta_r = a;
                p.beta_i = b;
            }
            SweepKind::Arnold => {
                p.k_e = a;
                p.omega_e = p.omega0 + p.omega0 + b;
            }
            SweepKind::Kappa => {
                p.kappa = a;
            }
            SweepKind::Detuning => {
                p.omega_e = p.omega0 + p.omega0 + a;
                p.beta_i = b;
            }
            SweepKind::SinglePoint => {}
        }
        p
    }

    /// Integrator configuration for a point, with the frame resolved
    /// against that point's injection frequency.
    pub fn integrator_at(&self, params: &MachineParams<T>) -> IntegratorConfig<T> {
        let mut cfg = self.integrator.clone();
        cfg.frame_freq = self.frame.freq(params.omega_e);
        cfg
    }
}

/// Why a trial was left out of the success statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcludeReason {
    /// Neither injection nor mutual coupling: no binarization reference
    /// exists and nothing enforces mutual coherence.
    NoDrive,
    /// Phase variance over the readout window above the stationarity gate.
    NonStationary,
    /// Oscillators not mutually frequency-coherent.
    Incoherent,
}

impl ExcludeReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExcludeReason::NoDrive => "no-drive",
            ExcludeReason::NonStationary => "non-stationary",
            ExcludeReason::Incoherent => "incoherent",
        }
    }
}

/// Outcome of one stochastic trial.
#[derive(Debug, Clone)]
pub enum TrialResult<T: Real> {
    Completed(TrialOutcome<T>),
    /// Readable classification but no trustworthy spin readout; excluded
    /// from both numerator and denominator.
    Excluded {
        reason: ExcludeReason,
        class: LockClass,
        seed: u64,
    },
    /// Integration aborted (non-finite state or configuration error).
    Failed { message: String, seed: u64 },
}

/// Shared read-only context for trials of one problem.
#[derive(Clone, Copy)]
pub struct TrialContext<'a, T: Real> {
    pub problem: &'a IsingProblem<T>,
    pub coupling: &'a Coupling<T>,
    pub oracle: &'a GroundTruth<T>,
    pub readout: &'a ReadoutConfig<T>,
}

/// Draw the stochastic inputs of one trial from its seed: initial phases
/// always, per-oscillator frequency offsets when dispersion is enabled.
/// Returns the per-trial parameters and initial history.
pub fn draw_trial_inputs<T: Real>(
    params: &MachineParams<T>,
    amplitude_scale: T,
    dispersion_sigma: T,
    seed: u64,
) -> (MachineParams<T>, InitialHistory<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<T> = (0..params.n)
        .map(|_| T::of(rng.random::<f64>()) * T::TAU())
        .collect();
    let mut params = params.clone();
    if dispersion_sigma > T::zero() {
        let sigma = (dispersion_sigma * params.omega0).to_f64_lossy();
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        params.omega_offsets = (0..params.n)
            .map(|_| T::of(normal.sample(&mut rng)))
            .collect();
    }
    let init = InitialHistory {
        amplitude_scale,
        phases: Some(phases),
        rng_seed: seed,
    };
    (params, init)
}

/// Run one trial: draw initial phases (and frequency offsets when
/// dispersion is enabled) from `seed`, integrate, classify locking, and
/// binarize with the readout matching the classification.
pub fn run_trial<T: Real>(
    params: &MachineParams<T>,
    ctx: &TrialContext<'_, T>,
    integrator: &IntegratorConfig<T>,
    amplitude_scale: T,
    dispersion_sigma: T,
    seed: u64,
) -> TrialResult<T> {
    let (params, init) = draw_trial_inputs(params, amplitude_scale, dispersion_sigma, seed);

    let run = match integrate(&params, ctx.coupling, integrator, &init) {
        Ok(run) => run,
        Err(e) => {
            return TrialResult::Failed {
                message: e.to_string(),
                seed,
            }
        }
    };

    let offsets = match frequency_offsets(&run.trace, &params, ctx.readout) {
        Ok(o) => o,
        Err(e) => {
            return TrialResult::Failed {
                message: e.to_string(),
                seed,
            }
        }
    };
    let report = classify_locking(&offsets, ctx.readout.lock_tol);

    // With no injection and no coupling there is neither a binarization
    // reference nor anything forcing mutual coherence; flag as unreadable.
    if params.k_e == T::zero() && params.kappa == T::zero() {
        return TrialResult::Excluded {
            reason: ExcludeReason::NoDrive,
            class: LockClass::Unlocked,
            seed,
        };
    }

    let (spins, mode) = match report.class {
        LockClass::RegionI => match binarize_shil(&run.trace, &params, ctx.readout) {
            Ok(s) => (s, ReadoutMode::ShilReference),
            Err(ReadoutError::NonStationary { .. }) => {
                return TrialResult::Excluded {
                    reason: ExcludeReason::NonStationary,
                    class: report.class,
                    seed,
                }
            }
            Err(e) => {
                return TrialResult::Failed {
                    message: e.to_string(),
                    seed,
                }
            }
        },
        _ => match binarize_relative(&run.trace, ctx.readout) {
            Ok(s) => (s, ReadoutMode::RelativePhase),
            Err(ReadoutError::Incoherent { .. }) => {
                return TrialResult::Excluded {
                    reason: ExcludeReason::Incoherent,
                    class: report.class,
                    seed,
                }
            }
            Err(e) => {
                return TrialResult::Failed {
                    message: e.to_string(),
                    seed,
                }
            }
        },
    };

    let energy = ctx
        .problem
        .energy(&spins)
        .expect("readout spin count matches problem");
    // Ground truth is exact: no readout may ever undercut the oracle.
    assert!(
        energy >= ctx.oracle.energy,
        "trial energy {} below oracle minimum {}",
        energy.to_f64_lossy(),
        ctx.oracle.energy.to_f64_lossy()
    );
    let is_ground = (energy - ctx.oracle.energy).abs() < T::of(1e-9);

    TrialResult::Completed(TrialOutcome {
        spins,
        energy,
        is_ground,
        locked: report.class == LockClass::RegionI,
        class: report.class,
        mean_freq_offsets: offsets,
        readout_mode: mode,
        seed,
    })
}

/// Aggregated statistics of one grid point.
#[derive(Debug, Clone)]
pub struct PointSummary<T: Real> {
    /// Coordinates on (axis_a, axis_b).
    pub a: T,
    pub b: T,
    pub trials: usize,
    pub completed: usize,
    pub excluded: usize,
    pub failed: usize,
    pub ground: usize,
    /// Fraction of counted (non-excluded, non-failed) trials that reached
    /// the oracle minimum; 0 when nothing counted.
    pub gmp: T,
    /// Mean readout energy over counted trials; NaN when nothing counted.
    pub mean_energy: T,
    /// Fraction of classified trials fully locked to the injection.
    pub locked_fraction: T,
}

/// Least-squares fit of the line above which success collapses.
#[derive(Debug, Clone)]
pub struct TransitionFit<T: Real> {
    /// Slope of the boundary in the `(beta_r, beta_i)` plane.
    pub nu_th: T,
    pub intercept: T,
    pub n_boundary_points: usize,
    pub rmse: T,
    /// 95% half-widths for slope and intercept (normal approximation).
    pub slope_ci95: T,
    pub intercept_ci95: T,
    /// The fitted boundary points `(beta_r, beta_i)`.
    pub boundary: Vec<(T, T)>,
}

impl<T: Real> TransitionFit<T> {
    /// Boundary height at a given `beta_r`.
    pub fn line(&self, beta_r: T) -> T {
        self.nu_th * beta_r + self.intercept
    }
}

/// Run metadata echoed alongside sweep outputs.
#[derive(Debug, Clone)]
pub struct SweepMeta {
    pub master_seed: u64,
    pub trials_per_point: usize,
    pub dispersion_sigma: f64,
    /// Wall-clock duration; informational only and never written into
    /// deterministic outputs.
    pub wall_secs: f64,
    pub version: &'static str,
}

/// Aggregated result of a grid sweep.
#[derive(Debug, Clone)]
pub struct SweepSummary<T: Real> {
    pub kind: SweepKind,
    pub a_values: Vec<T>,
    pub b_values: Vec<T>,
    /// Point summaries with `axis_b` fastest: index `ia * b_count + ib`.
    pub points: Vec<PointSummary<T>>,
    pub transition: Option<TransitionFit<T>>,
    /// Nonlinearity pair of the base parameter set, echoed by sweeps that
    /// hold it fixed.
    pub base_beta: (T, T),
    pub meta: SweepMeta,
}

impl<T: Real> SweepSummary<T> {
    pub fn point(&self, ia: usize, ib: usize) -> &PointSummary<T> {
        &self.points[ia * self.b_values.len() + ib]
    }

    /// Highest-success point as `(a, b, gmp)`.
    pub fn peak(&self) -> (T, T, T) {
        let mut best = &self.points[0];
        for p in &self.points {
            if p.gmp > best.gmp {
                best = p;
            }
        }
        (best.a, best.b, best.gmp)
    }
}

fn aggregate_points<T: Real>(
    spec: &SweepSpec<T>,
    a_values: &[T],
    b_values: &[T],
    results: Vec<(usize, TrialResult<T>)>,
) -> Vec<PointSummary<T>> {
    let n_points = a_values.len() * b_values.len();
    let mut acc: Vec<PointSummary<T>> = (0..n_points)
        .map(|idx| PointSummary {
            a: a_values[idx / b_values.len()],
            b: b_values[idx % b_values.len()],
            trials: 0,
            completed: 0,
            excluded: 0,
            failed: 0,
            ground: 0,
            gmp: T::zero(),
            mean_energy: T::nan(),
            locked_fraction: T::zero(),
        })
        .collect();
    let mut energy_sums = vec![T::zero(); n_points];
    let mut region_i = vec![0usize; n_points];

    for (idx, result) in results {
        let p = &mut acc[idx];
        p.trials += 1;
        match result {
            TrialResult::Completed(outcome) => {
                p.completed += 1;
                if outcome.is_ground {
                    p.ground += 1;
                }
                energy_sums[idx] = energy_sums[idx] + outcome.energy;
                if outcome.class == LockClass::RegionI {
                    region_i[idx] += 1;
                }
            }
            TrialResult::Excluded { class, .. } => {
                p.excluded += 1;
                if class == LockClass::RegionI {
                    region_i[idx] += 1;
                }
            }
            TrialResult::Failed { message, seed } => {
                p.failed += 1;
                log::warn!(
                    "trial failed at point {} (seed {seed}): {message}",
                    spec.kind.as_str()
                );
            }
        }
    }

    for (idx, p) in acc.iter_mut().enumerate() {
        if p.completed > 0 {
            p.gmp = T::of(p.ground as f64) / T::of(p.completed as f64);
            p.mean_energy = energy_sums[idx] / T::of(p.completed as f64);
        }
        let classified = p.completed + p.excluded;
        if classified > 0 {
            p.locked_fraction = T::of(region_i[idx] as f64) / T::of(classified as f64);
        }
    }
    acc
}

/// Execute a grid sweep of trials against one problem. Work items are
/// independent `(point, trial)` pairs; the aggregation is a commutative
/// count, so the summary does not depend on worker count or ordering.
pub fn run_sweep<T: Real>(
    spec: &SweepSpec<T>,
    problem: &IsingProblem<T>,
    oracle: &GroundTruth<T>,
) -> Result<SweepSummary<T>, SweepError> {
    spec.validate()?;
    let start = std::time::Instant::now();
    let a_values = spec.axis_a.values();
    let b_values = spec.axis_b.values();
    let coupling = Coupling::from(problem);
    let ctx = TrialContext {
        problem,
        coupling: &coupling,
        oracle,
        readout: &spec.readout,
    };
    let n_points = a_values.len() * b_values.len();
    let trials = spec.trials_per_point;

    let results: Vec<(usize, TrialResult<T>)> = (0..n_points * trials)
        .into_par_iter()
        .map(|flat| {
            let point = flat / trials;
            let trial = flat % trials;
            let a = a_values[point / b_values.len()];
            let b = b_values[point % b_values.len()];
            let params = spec.params_at(a, b);
            let integ = spec.integrator_at(&params);
            let seed = trial_seed(spec.master_seed, point as u64, trial as u64);
            (
                point,
                run_trial(
                    &params,
                    &ctx,
                    &integ,
                    spec.amplitude_scale,
                    spec.dispersion_sigma,
                    seed,
                ),
            )
        })
        .collect();

    let points = aggregate_points(spec, &a_values, &b_values, results);
    let transition = if spec.kind == SweepKind::BetaPlane {
        fit_transition_line(&a_values, &b_values, |ia, ib| {
            points[ia * b_values.len() + ib].gmp
        })
        .ok()
    } else {
        None
    };

    Ok(SweepSummary {
        kind: spec.kind,
        a_values,
        b_values,
        points,
        transition,
        base_beta: (spec.base.beta_r, spec.base.beta_i),
        meta: SweepMeta {
            master_seed: spec.master_seed,
            trials_per_point: trials,
            dispersion_sigma: spec.dispersion_sigma.to_f64_lossy(),
            wall_secs: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
        },
    })
}

/// One cell of the single-oscillator locking map.
#[derive(Debug, Clone)]
pub struct ArnoldPoint<T: Real> {
    pub ke: T,
    /// Injection detuning `omega_e - 2 omega0`.
    pub detuning: T,
    /// Estimated `2 omega - omega_e`; NaN when the run failed.
    pub freq_offset: T,
    pub locked: bool,
}

/// Locking map over `(Ke, detuning)`.
#[derive(Debug, Clone)]
pub struct ArnoldSummary<T: Real> {
    pub ke_values: Vec<T>,
    pub detuning_values: Vec<T>,
    /// Detuning fastest: index `ik * detuning_count + id`.
    pub points: Vec<ArnoldPoint<T>>,
    pub meta: SweepMeta,
}

impl<T: Real> ArnoldSummary<T> {
    /// Locking half-width per injection strength: half the detuning span
    /// of the longest contiguous locked run. The run is generally not
    /// centered on zero detuning because the frequency nonlinearity
    /// shifts the free-running frequency and the tongue with it.
    pub fn half_widths(&self) -> Vec<(T, T)> {
        let nd = self.detuning_values.len();
        let step = if nd > 1 {
            self.detuning_values[1] - self.detuning_values[0]
        } else {
            T::zero()
        };
        self.ke_values
            .iter()
            .enumerate()
            .map(|(ik, &ke)| {
                let row = &self.points[ik * nd..(ik + 1) * nd];
                let mut best = 0usize;
                let mut run = 0usize;
                for p in row {
                    run = if p.locked { run + 1 } else { 0 };
                    best = best.max(run);
                }
                (ke, T::of(best as f64) * step / T::of(2.0))
            })
            .collect()
    }
}

/// Map the single-oscillator response over injection strength and
/// detuning. Each cell integrates one free oscillator (no mutual
/// coupling) and records how far its doubled frequency sits from the
/// injection.
pub fn sweep_arnold<T: Real>(spec: &SweepSpec<T>) -> Result<ArnoldSummary<T>, SweepError> {
    if spec.kind != SweepKind::Arnold {
        return Err(SweepError::WrongKind {
            want: SweepKind::Arnold,
            got: spec.kind,
        });
    }
    spec.validate()?;
    let start = std::time::Instant::now();
    let ke_values = spec.axis_a.values();
    let det_values = spec.axis_b.values();
    let nd = det_values.len();
    let coupling = Coupling::none(1);

    let points: Vec<ArnoldPoint<T>> = (0..ke_values.len() * nd)
        .into_par_iter()
        .map(|idx| {
            let ke = ke_values[idx / nd];
            let det = det_values[idx % nd];
            let mut params = spec.base.clone();
            params.n = 1;
            params.omega_offsets = vec![T::zero()];
            params.kappa = T::zero();
            params.k_e = ke;
            params.omega_e = params.omega0 + params.omega0 + det;
            let integ = spec.integrator_at(&params);
            let seed = trial_seed(spec.master_seed, idx as u64, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase = T::of(rng.random::<f64>()) * T::TAU();
            let init = InitialHistory {
                amplitude_scale: spec.amplitude_scale,
                phases: Some(vec![phase]),
                rng_seed: seed,
            };
            let offset = integrate(&params, &coupling, &integ, &init)
                .ok()
                .and_then(|run| frequency_offsets(&run.trace, &params, &spec.readout).ok())
                .map(|o| o[0]);
            match offset {
                Some(off) => ArnoldPoint {
                    ke,
                    detuning: det,
                    freq_offset: off,
                    locked: off.abs() < spec.readout.lock_tol,
                },
                None => ArnoldPoint {
                    ke,
                    detuning: det,
                    freq_offset: T::nan(),
                    locked: false,
                },
            }
        })
        .collect();

    Ok(ArnoldSummary {
        ke_values,
        detuning_values: det_values,
        points,
        meta: SweepMeta {
            master_seed: spec.master_seed,
            trials_per_point: 1,
            dispersion_sigma: 0.0,
            wall_secs: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Fit the collapse boundary on a `(beta_r, beta_i)` success grid.
///
/// For every `beta_r` column the boundary is the lowest `beta_i` whose
/// cell and everything above it read zero, confirmed over at least three
/// cells so single noisy zeros cannot fake a boundary. Columns without a
/// confirmed boundary (all-zero, all-positive, or success re-appearing
/// above) are skipped. The surviving boundary points are fitted with a
/// least-squares line.
pub fn fit_transition_line<T: Real>(
    beta_r: &[T],
    beta_i: &[T],
    gmp: impl Fn(usize, usize) -> T,
) -> Result<TransitionFit<T>, SweepError> {
    let nb = beta_i.len();
    // the collapse must be visible in the upper half-plane
    let mut upper_zero = false;
    let mut upper_pos = false;
    for ia in 0..beta_r.len() {
        for ib in 0..nb {
            if beta_i[ib] > T::zero() {
                if gmp(ia, ib) > T::zero() {
                    upper_pos = true;
                } else {
                    upper_zero = true;
                }
            }
        }
    }
    if !(upper_zero && upper_pos) {
        return Err(SweepError::NoTransition(
            "upper half-plane lacks both zero and positive success cells".into(),
        ));
    }

    let mut boundary: Vec<(T, T)> = Vec::new();
    for (ia, &br) in beta_r.iter().enumerate() {
        // length of the all-zero suffix of this column
        let mut ib = nb;
        while ib > 0 && gmp(ia, ib - 1) == T::zero() {
            ib -= 1;
        }
        let run = nb - ib;
        if ib == 0 || run < 3 {
            continue; // all-zero column, all-positive column, or unconfirmed
        }
        boundary.push((br, beta_i[ib]));
    }
    let m = boundary.len();
    if m < 3 {
        return Err(SweepError::TooFewBoundaryPoints(m));
    }

    let mf = T::of(m as f64);
    let mut mx = T::zero();
    let mut my = T::zero();
    for &(x, y) in &boundary {
        mx = mx + x;
        my = my + y;
    }
    mx = mx / mf;
    my = my / mf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in &boundary {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = T::zero();
    let mut sum_x2 = T::zero();
    for &(x, y) in &boundary {
        let r = y - (slope * x + intercept);
        ss_res = ss_res + r * r;
        sum_x2 = sum_x2 + x * x;
    }
    let rmse = (ss_res / mf).sqrt();
    let (slope_ci, intercept_ci) = if m > 2 {
        let s2 = ss_res / T::of((m - 2) as f64);
        let se_slope = (s2 / sxx).sqrt();
        let se_int = (s2 * sum_x2 / (mf * sxx)).sqrt();
        (T::of(1.96) * se_slope, T::of(1.96) * se_int)
    } else {
        (T::zero(), T::zero())
    };

    Ok(TransitionFit {
        nu_th: slope,
        intercept,
        n_boundary_points: m,
        rmse,
        slope_ci95: slope_ci,
        intercept_ci95: intercept_ci,
        boundary,
    })
}
