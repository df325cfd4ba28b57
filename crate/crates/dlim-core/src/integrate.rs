//! Fixed-step integration of the delay system by the method of steps:
//! classical fourth-order Runge-Kutta over a dense history ring buffer,
//! with cubic Hermite interpolation supplying the delayed state at the
//! half-step stage times.
//!
//! The delay is pinned to an integer number of steps, so delayed lookups
//! at stage boundaries are exact grid reads and only the midpoint stages
//! interpolate. Storing the state derivative alongside each grid point
//! keeps the interpolant at the order of the integrator.

use thiserror::Error;

use crate::dynamics::{rhs_into, DynamicsError, MachineParams, RhsScratch, Coupling};
use crate::scalar::{cis, Real, C};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("integration span must be positive, got {0}")]
    BadSpan(f64),
    #[error("record stride must be at least 1")]
    BadStride,
    #[error(
        "step {h} too coarse for the fastest in-frame rate {rate} rad/unit; need h <= {max_h}"
    )]
    StepGuard { h: f64, rate: f64, max_h: f64 },
    #[error("amplitude scale must lie in (0, 2], got {0}")]
    BadAmplitudeScale(f64),
    #[error("initial phase vector length {got} does not match oscillator count {expected}")]
    PhaseLength { expected: usize, got: usize },
    #[error("delayed lookup at t = {t} outside buffered span [{min}, {max}]")]
    OutOfSpan { t: f64, min: f64, max: f64 },
    #[error(
        "non-finite state at t = {t} (beta_r = {beta_r}, beta_i = {beta_i}, seed = {seed}); \
         aborting trial"
    )]
    NonFinite {
        t: f64,
        beta_r: f64,
        beta_i: f64,
        seed: u64,
    },
    #[error(transparent)]
    Params(#[from] DynamicsError),
}

/// Integrator settings. `frame_freq` selects the co-rotating frame the
/// equations are integrated in; zero means the lab frame.
#[derive(Debug, Clone)]
pub struct IntegratorConfig<T: Real> {
    /// Requested step size; rounded down so the delay is an integer
    /// multiple of the actual step.
    pub h: T,
    /// Total integration time.
    pub t_end: T,
    /// Steps between recorded trace samples.
    pub record_stride: usize,
    /// Reference rotation rate of the integration frame (rad per time
    /// unit); 0 = lab frame.
    pub frame_freq: T,
}

impl<T: Real> IntegratorConfig<T> {
    /// Lab-frame defaults: 200 steps per carrier period.
    pub fn lab_defaults() -> Self {
        Self {
            h: T::of(0.005),
            t_end: T::of(1000.0),
            record_stride: 10,
            frame_freq: T::zero(),
        }
    }

    /// Rotating-frame defaults for a frame at `frame_freq` (usually
    /// `omega_e / 2`): envelope timescales allow a 10x coarser step.
    pub fn rotating_defaults(frame_freq: T) -> Self {
        Self {
            h: T::of(0.05),
            t_end: T::of(1000.0),
            record_stride: 10,
            frame_freq,
        }
    }

    /// Resolve the actual step plan for a delay `tau`, enforcing the
    /// integer-delay constraint and the step-size stability guard against
    /// the fastest in-frame oscillation rate.
    pub fn plan(&self, tau: T, max_rate: T) -> Result<StepPlan<T>, IntegrateError> {
        if self.h <= T::zero() {
            return Err(IntegrateError::BadStep(self.h.to_f64_lossy()));
        }
        if self.t_end <= T::zero() {
            return Err(IntegrateError::BadSpan(self.t_end.to_f64_lossy()));
        }
        if self.record_stride == 0 {
            return Err(IntegrateError::BadStride);
        }
        let ratio = (tau / self.h).ceil().to_f64_lossy() as usize;
        let delay_steps = ratio.max(4);
        let h = tau / T::of(delay_steps as f64);
        if max_rate > T::zero() {
            let max_h = T::TAU() / max_rate / T::of(20.0);
            if h > max_h {
                return Err(IntegrateError::StepGuard {
                    h: h.to_f64_lossy(),
                    rate: max_rate.to_f64_lossy(),
                    max_h: max_h.to_f64_lossy(),
                });
            }
        }
        let steps = (self.t_end / h - T::of(1e-9)).ceil().to_f64_lossy() as usize;
        Ok(StepPlan {
            h,
            delay_steps,
            steps: steps.max(1),
            record_stride: self.record_stride,
        })
    }
}

/// Resolved discretization: `tau = delay_steps * h` exactly.
#[derive(Debug, Clone)]
pub struct StepPlan<T: Real> {
    pub h: T,
    pub delay_steps: usize,
    pub steps: usize,
    pub record_stride: usize,
}

/// Constant-envelope initial history with per-oscillator phases, rotating
/// at the free-running rate of the integration frame.
#[derive(Debug, Clone)]
pub struct InitialHistory<T: Real> {
    /// Start amplitude as a fraction of `sqrt(p0)`. Small values emulate
    /// buildup from noise, which lets the mutual couplings steer the phase
    /// configuration before the injection hardens it.
    pub amplitude_scale: T,
    /// Explicit initial phases; drawn uniformly from `[0, 2pi)` when absent.
    pub phases: Option<Vec<T>>,
    pub rng_seed: u64,
}

impl<T: Real> InitialHistory<T> {
    pub fn random(rng_seed: u64) -> Self {
        Self {
            amplitude_scale: T::of(0.05),
            phases: None,
            rng_seed,
        }
    }

    pub fn with_phases(phases: Vec<T>) -> Self {
        Self {
            amplitude_scale: T::of(0.05),
            phases: Some(phases),
            rng_seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), IntegrateError> {
        if !(self.amplitude_scale > T::zero() && self.amplitude_scale <= T::of(2.0)) {
            return Err(IntegrateError::BadAmplitudeScale(
                self.amplitude_scale.to_f64_lossy(),
            ));
        }
        if let Some(p) = &self.phases {
            if p.len() != n {
                return Err(IntegrateError::PhaseLength {
                    expected: n,
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    /// Phases used by the run: supplied, or drawn from `rng_seed`.
    pub fn resolve_phases(&self, n: usize) -> Vec<T> {
        match &self.phases {
            Some(p) => p.clone(),
            None => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.rng_seed);
                (0..n)
                    .map(|_| T::of(rng.random::<f64>()) * T::TAU())
                    .collect()
            }
        }
    }
}

/// Ring buffer of `(state, derivative)` grid points spanning at least the
/// delay window behind the newest point.
#[derive(Debug, Clone)]
pub struct TrajectoryHistory<T: Real> {
    n: usize,
    h: T,
    capacity: usize,
    latest_step: i64,
    len: usize,
    states: Vec<C<T>>,
    derivs: Vec<C<T>>,
}

impl<T: Real> TrajectoryHistory<T> {
    pub fn new(n: usize, h: T, capacity: usize) -> Self {
        let zero = C::new(T::zero(), T::zero());
        Self {
            n,
            h,
            capacity,
            latest_step: 0,
            len: 0,
            states: vec![zero; capacity * n],
            derivs: vec![zero; capacity * n],
        }
    }

    #[inline]
    fn slot(&self, step: i64) -> usize {
        step.rem_euclid(self.capacity as i64) as usize
    }

    /// Append the grid point for `step`; steps must arrive contiguously.
    pub fn push(&mut self, step: i64, state: &[C<T>], deriv: &[C<T>]) {
        debug_assert!(self.len == 0 || step == self.latest_step + 1);
        let s = self.slot(step) * self.n;
        self.states[s..s + self.n].copy_from_slice(state);
        self.derivs[s..s + self.n].copy_from_slice(deriv);
        self.latest_step = step;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn latest_step(&self) -> i64 {
        self.latest_step
    }

    fn first_step(&self) -> i64 {
        self.latest_step - self.len as i64 + 1
    }

    /// Buffered time span `[t_min, t_max]`.
    pub fn span(&self) -> (T, T) {
        (
            T::of(self.first_step() as f64) * self.h,
            T::of(self.latest_step as f64) * self.h,
        )
    }

    #[inline]
    pub fn state(&self, step: i64) -> &[C<T>] {
        debug_assert!(step >= self.first_step() && step <= self.latest_step);
        let s = self.slot(step) * self.n;
        &self.states[s..s + self.n]
    }

    #[inline]
    pub fn deriv(&self, step: i64) -> &[C<T>] {
        debug_assert!(step >= self.first_step() && step <= self.latest_step);
        let s = self.slot(step) * self.n;
        &self.derivs[s..s + self.n]
    }

    /// Cubic Hermite interpolation at fraction `theta` into the interval
    /// `[step, step + 1]`; exact at the endpoints.
    pub fn interpolate_interval_into(&self, step: i64, theta: T, out: &mut [C<T>]) {
        if theta == T::zero() {
            out.copy_from_slice(self.state(step));
            return;
        }
        if theta == T::one() {
            out.copy_from_slice(self.state(step + 1));
            return;
        }
        let t2 = theta * theta;
        let t3 = t2 * theta;
        // increment form (h00 = 1 - h01) reproduces constants exactly
        let h10 = theta - t2 - t2 + t3;
        let h01 = t2 + t2 + t2 - t3 - t3;
        let h11 = t3 - t2;
        let c0 = self.state(step);
        let d0 = self.deriv(step);
        let c1 = self.state(step + 1);
        let d1 = self.deriv(step + 1);
        for j in 0..self.n {
            out[j] = c0[j]
                + (c1[j] - c0[j]).scale(h01)
                + d0[j].scale(h10 * self.h)
                + d1[j].scale(h11 * self.h);
        }
    }

    /// Interpolate the full state vector at an arbitrary buffered time.
    /// Grid points are returned bit-exactly.
    pub fn interpolate_delayed(&self, t_query: T) -> Result<Vec<C<T>>, IntegrateError> {
        let (t_min, t_max) = self.span();
        let pos = t_query / self.h;
        let mut step = pos.floor().to_f64_lossy() as i64;
        let mut theta = pos - T::of(step as f64);
        // snap to the grid within a relative tolerance
        let snap = T::of(1e-9);
        if theta < snap {
            theta = T::zero();
        } else if T::one() - theta < snap {
            step += 1;
            theta = T::zero();
        }
        let last_needed = if theta == T::zero() { step } else { step + 1 };
        if step < self.first_step() || last_needed > self.latest_step {
            return Err(IntegrateError::OutOfSpan {
                t: t_query.to_f64_lossy(),
                min: t_min.to_f64_lossy(),
                max: t_max.to_f64_lossy(),
            });
        }
        let mut out = vec![C::new(T::zero(), T::zero()); self.n];
        self.interpolate_interval_into(step, theta, &mut out);
        Ok(out)
    }
}

/// Recorded samples of one integration, kept in the integration frame.
#[derive(Debug, Clone)]
pub struct Trace<T: Real> {
    n: usize,
    frame_freq: T,
    times: Vec<T>,
    states: Vec<C<T>>,
}

impl<T: Real> Trace<T> {
    /// Assemble a trace from raw samples (`states` is sample-major,
    /// `samples * n` long).
    pub fn from_parts(n: usize, frame_freq: T, times: Vec<T>, states: Vec<C<T>>) -> Self {
        assert_eq!(times.len() * n, states.len());
        Self {
            n,
            frame_freq,
            times,
            states,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rotation rate of the frame the samples are stored in.
    pub fn frame_freq(&self) -> T {
        self.frame_freq
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, k: usize) -> T {
        self.times[k]
    }

    /// All oscillators at sample `k`.
    pub fn sample(&self, k: usize) -> &[C<T>] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    /// Amplitude series of one oscillator.
    pub fn osc_series(&self, j: usize) -> Vec<C<T>> {
        (0..self.len()).map(|k| self.sample(k)[j]).collect()
    }

    /// Index of the first sample inside the trailing `window`.
    pub fn window_start(&self, window: T) -> usize {
        let t_last = *self.times.last().expect("non-empty trace");
        let cutoff = t_last - window - T::of(1e-9);
        self.times.partition_point(|&t| t < cutoff)
    }
}

/// One completed integration.
#[derive(Debug)]
pub struct Integration<T: Real> {
    pub trace: Trace<T>,
    pub history: TrajectoryHistory<T>,
    /// Parameters actually integrated (frame-transformed).
    pub frame_params: MachineParams<T>,
    /// Initial phases used by the run.
    pub phases: Vec<T>,
    pub plan: StepPlan<T>,
}

impl<T: Real> Integration<T> {
    pub fn final_state(&self) -> &[C<T>] {
        self.history.state(self.history.latest_step())
    }
}

/// Transform parameters into a frame rotating at `frame_freq`: for the
/// envelope `a(t) = c(t) e^{-i frame_freq t}` the resonance and drive
/// frequencies shift and the delayed feedback picks up the constant phase
/// `-frame_freq * tau` per circulation. Integrating the transformed system
/// and mapping back agrees with lab-frame integration.
pub fn to_rotating_frame<T: Real>(params: &MachineParams<T>, frame_freq: T) -> MachineParams<T> {
    let mut out = params.clone();
    if frame_freq == T::zero() {
        return out;
    }
    out.omega0 = params.omega0 - frame_freq;
    out.omega_e = params.omega_e - (frame_freq + frame_freq);
    let wrapped = wrap_angle(params.loop_phase - frame_freq * params.tau);
    out.loop_phase = wrapped;
    out
}

fn wrap_angle<T: Real>(x: T) -> T {
    let tau = T::TAU();
    let mut y = x % tau;
    if y > T::PI() {
        y = y - tau;
    } else if y < -T::PI() {
        y = y + tau;
    }
    y
}

/// Context threaded through the low-level engine for error diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunDiagnostics {
    pub beta_r: f64,
    pub beta_i: f64,
    pub seed: u64,
}

/// Low-level fixed-step DDE engine. `seed_history` fills state and
/// derivative at a (possibly negative) history time; `rhs` evaluates the
/// derivative given the current and delayed state vectors.
pub fn integrate_delay_system<T, S, F>(
    n: usize,
    plan: &StepPlan<T>,
    diag: RunDiagnostics,
    mut seed_history: S,
    mut rhs: F,
) -> Result<(Trace<T>, TrajectoryHistory<T>), IntegrateError>
where
    T: Real,
    S: FnMut(T, &mut [C<T>], &mut [C<T>]),
    F: FnMut(T, &[C<T>], &[C<T>], &mut [C<T>]),
{
    let h = plan.h;
    let delay = plan.delay_steps as i64;
    let steps = plan.steps;
    let zero = C::new(T::zero(), T::zero());

    let mut history = TrajectoryHistory::new(n, h, plan.delay_steps + 3);
    let mut state = vec![zero; n];
    let mut deriv = vec![zero; n];
    for step in -delay..=0 {
        let t = T::of(step as f64) * h;
        seed_history(t, &mut state, &mut deriv);
        history.push(step, &state, &deriv);
    }

    let samples = steps / plan.record_stride + 1;
    let mut trace_times = Vec::with_capacity(samples);
    let mut trace_states = Vec::with_capacity(samples * n);
    trace_times.push(T::zero());
    trace_states.extend_from_slice(history.state(0));

    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut stage = vec![zero; n];
    let mut delayed_mid = vec![zero; n];
    let mut next = vec![zero; n];
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);

    state.copy_from_slice(history.state(0));
    // The seeded derivative at step 0 belongs to the declared history
    // function; the stepping derivative must come from the equation.
    rhs(T::zero(), &state, history.state(-delay), &mut k1);

    for m in 0..steps {
        let step = m as i64;
        let t = T::of(m as f64) * h;
        history.interpolate_interval_into(step - delay, half, &mut delayed_mid);
        let delayed_end = step - delay + 1;

        for j in 0..n {
            stage[j] = state[j] + k1[j].scale(half * h);
        }
        rhs(t + half * h, &stage, &delayed_mid, &mut k2);
        for j in 0..n {
            stage[j] = state[j] + k2[j].scale(half * h);
        }
        rhs(t + half * h, &stage, &delayed_mid, &mut k3);
        {
            let dl = history.state(delayed_end);
            for j in 0..n {
                stage[j] = state[j] + k3[j].scale(h);
            }
            rhs(t + h, &stage, dl, &mut k4);
        }
        for j in 0..n {
            let incr = k1[j] + (k2[j] + k3[j]).scale(T::of(2.0)) + k4[j];
            next[j] = state[j] + incr.scale(sixth * h);
        }

        let t_next = T::of((m + 1) as f64) * h;
        if !next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(IntegrateError::NonFinite {
                t: t_next.to_f64_lossy(),
                beta_r: diag.beta_r,
                beta_i: diag.beta_i,
                seed: diag.seed,
            });
        }

        // derivative at the new point doubles as next step's k1
        rhs(t_next, &next, history.state(delayed_end), &mut k1);
        history.push(step + 1, &next, &k1);
        state.copy_from_slice(&next);

        if (m + 1) % plan.record_stride == 0 {
            trace_times.push(t_next);
            trace_states.extend_from_slice(&state);
        }
    }

    let trace = Trace {
        n,
        frame_freq: T::zero(),
        times: trace_times,
        states: trace_states,
    };
    Ok((trace, history))
}

/// Integrate the oscillator machine. Parameters are given in the lab
/// frame; `config.frame_freq` selects the integration frame and the
/// returned trace is recorded in that frame.
pub fn integrate<T: Real>(
    params: &MachineParams<T>,
    coupling: &Coupling<T>,
    config: &IntegratorConfig<T>,
    init: &InitialHistory<T>,
) -> Result<Integration<T>, IntegrateError> {
    params.validate()?;
    init.validate(params.n)?;
    let frame_params = to_rotating_frame(params, config.frame_freq);

    let mut max_rate = T::zero();
    for &off in &frame_params.omega_offsets {
        max_rate = max_rate.max((frame_params.omega0 + off).abs());
    }
    max_rate = max_rate.max(frame_params.omega_e.abs());
    let plan = config.plan(frame_params.tau, max_rate)?;

    let phases = init.resolve_phases(params.n);
    let amp = init.amplitude_scale * params.p0.sqrt();
    let rot: Vec<T> = frame_params
        .omega_offsets
        .iter()
        .map(|&off| frame_params.omega0 + off)
        .collect();
    let phases_seed = phases.clone();
    let seed_fn = move |t: T, state: &mut [C<T>], deriv: &mut [C<T>]| {
        for j in 0..state.len() {
            let z = cis(phases_seed[j] + rot[j] * t).scale(amp);
            state[j] = z;
            deriv[j] = C::new(T::zero(), rot[j]) * z;
        }
    };

    let mut scratch = RhsScratch::new(params.n);
    let fp = frame_params.clone();
    let rhs_fn = move |t: T, now: &[C<T>], delayed: &[C<T>], out: &mut [C<T>]| {
        rhs_into(&fp, t, now, delayed, coupling, &mut scratch, out);
    };

    let diag = RunDiagnostics {
        beta_r: params.beta_r.to_f64_lossy(),
        beta_i: params.beta_i.to_f64_lossy(),
        seed: init.rng_seed,
    };
    let (mut trace, history) = integrate_delay_system(params.n, &plan, diag, seed_fn, rhs_fn)?;
    trace.frame_freq = config.frame_freq;

    Ok(Integration {
        trace,
        history,
        frame_params,
        phases,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MachineParams;

    fn plan(h: f64, t_end: f64, stride: usize) -> StepPlan<f64> {
        IntegratorConfig {
            h,
            t_end,
            record_stride: stride,
            frame_freq: 0.0,
        }
        .plan(10.0, 0.0)
        .unwrap()
    }

    #[test]
    fn plan_pins_delay_to_integer_steps() {
        let p = plan(0.03, 100.0, 1);
        assert_eq!(p.delay_steps as f64 * p.h, 10.0);
        assert!(p.h <= 0.03);
        // very coarse requests still give at least 4 steps per delay
        let p = IntegratorConfig {
            h: 9.0,
            t_end: 100.0,
            record_stride: 1,
            frame_freq: 0.0,
        }
        .plan(10.0, 0.0)
        .unwrap();
        assert_eq!(p.delay_steps, 4);
    }

    #[test]
    fn plan_rejects_step_guard_violation() {
        let cfg = IntegratorConfig {
            h: 0.05,
            t_end: 10.0,
            record_stride: 1,
            frame_freq: 0.0,
        };
        // lab-frame carrier at 2pi rad/unit needs h <= 1/20
        assert!(cfg.plan(10.0, std::f64::consts::TAU * 10.0).is_err());
        assert!(cfg.plan(10.0, std::f64::consts::TAU).is_ok());
    }

    #[test]
    fn history_returns_grid_points_bit_exactly() {
        let mut hist = TrajectoryHistory::<f64>::new(1, 0.25, 8);
        for step in -4..=0 {
            let v = C::new(0.1 * step as f64 + 0.77, -0.3 * step as f64);
            hist.push(step, &[v], &[C::new(1.0, 2.0)]);
        }
        let got = hist.interpolate_delayed(-0.5).unwrap();
        assert_eq!(got[0], C::new(0.1 * -2.0 + 0.77, 0.6));
    }

    #[test]
    fn history_interpolates_complex_exponential_to_fourth_order() {
        let h = 0.01;
        let omega = std::f64::consts::TAU;
        let mut hist = TrajectoryHistory::<f64>::new(1, h, 16);
        for step in 0..=10 {
            let t = step as f64 * h;
            let z = C::from_polar(1.0, omega * t);
            hist.push(step, &[z], &[C::new(0.0, omega) * z]);
        }
        let t_query = 5.5 * h;
        let got = hist.interpolate_delayed(t_query).unwrap()[0];
        let exact = C::from_polar(1.0, omega * t_query);
        assert!(
            (got - exact).norm() < 1e-7,
            "interpolation error {}",
            (got - exact).norm()
        );
    }

    #[test]
    fn history_reproduces_constants_exactly() {
        let mut hist = TrajectoryHistory::<f64>::new(2, 0.1, 8);
        let v = [C::new(0.4, -1.2), C::new(-0.9, 0.3)];
        let zero = [C::new(0.0, 0.0); 2];
        for step in 0..=5 {
            hist.push(step, &v, &zero);
        }
        for &t in &[0.05, 0.17, 0.33, 0.49] {
            let got = hist.interpolate_delayed(t).unwrap();
            assert_eq!(got[0], v[0]);
            assert_eq!(got[1], v[1]);
        }
    }

    #[test]
    fn history_rejects_queries_outside_span() {
        let mut hist = TrajectoryHistory::<f64>::new(1, 0.1, 4);
        for step in 0..=3 {
            hist.push(step, &[C::new(1.0, 0.0)], &[C::new(0.0, 0.0)]);
        }
        assert!(matches!(
            hist.interpolate_delayed(-0.5),
            Err(IntegrateError::OutOfSpan { .. })
        ));
        assert!(matches!(
            hist.interpolate_delayed(0.9),
            Err(IntegrateError::OutOfSpan { .. })
        ));
    }

    /// dc/dt = -(pi/(2 tau)) c(t - tau) with cosine history has the exact
    /// solution c(t) = cos(pi t / (2 tau)).
    fn cosine_dde_max_error(h_divisor: usize) -> f64 {
        let tau = 1.0;
        let rate = std::f64::consts::FRAC_PI_2 / tau;
        let plan = IntegratorConfig {
            h: tau / h_divisor as f64,
            t_end: 40.0 * tau, // 10 periods of the 4-tau-period cosine
            record_stride: h_divisor / 10,
            frame_freq: 0.0,
        }
        .plan(tau, 0.0)
        .unwrap();
        let (trace, _) = integrate_delay_system(
            1,
            &plan,
            RunDiagnostics::default(),
            |t, s, d| {
                s[0] = C::new((rate * t).cos(), 0.0);
                d[0] = C::new(-rate * (rate * t).sin(), 0.0);
            },
            |_t, _now, delayed, out| {
                out[0] = delayed[0].scale(-rate);
            },
        )
        .unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..trace.len() {
            let t = trace.time(k);
            let exact = (rate * t).cos();
            let err = (trace.sample(k)[0] - C::new(exact, 0.0)).norm();
            max_err = max_err.max(err);
        }
        max_err
    }

    #[test]
    fn linear_dde_matches_analytic_solution() {
        let err = cosine_dde_max_error(1000);
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn halving_step_shows_fourth_order_convergence() {
        // measured where truncation still dominates the rounding floor
        // (the error at tau/1000 is already ~1e-13)
        let e250 = cosine_dde_max_error(250);
        let e500 = cosine_dde_max_error(500);
        let e1000 = cosine_dde_max_error(1000);
        for ratio in [e250 / e500, e500 / e1000] {
            assert!(
                (12.0..=20.0).contains(&ratio),
                "convergence ratio {ratio} outside [12, 20]"
            );
        }
    }

    #[test]
    fn zero_rhs_keeps_state_constant() {
        let plan = plan(0.05, 50.0, 10);
        let (trace, _) = integrate_delay_system(
            2,
            &plan,
            RunDiagnostics::default(),
            |_t, s, d| {
                s[0] = C::new(0.3, -0.4);
                s[1] = C::new(-1.1, 0.2);
                d[0] = C::new(0.0, 0.0);
                d[1] = C::new(0.0, 0.0);
            },
            |_t, _now, _delayed, out| {
                out[0] = C::new(0.0, 0.0);
                out[1] = C::new(0.0, 0.0);
            },
        )
        .unwrap();
        for k in 0..trace.len() {
            assert_eq!(trace.sample(k)[0], C::new(0.3, -0.4));
            assert_eq!(trace.sample(k)[1], C::new(-1.1, 0.2));
        }
    }

    #[test]
    fn free_running_power_reaches_gain_loss_balance() {
        let mut params = MachineParams::<f64>::defaults(1);
        params.k_e = 0.0;
        params.kappa = 0.0;
        params.beta_r = 0.3;
        params.beta_i = 0.0;
        let config = IntegratorConfig {
            t_end: 400.0,
            ..IntegratorConfig::rotating_defaults(params.omega0)
        };
        let run = integrate(
            &params,
            &Coupling::none(1),
            &config,
            &InitialHistory::with_phases(vec![0.0]),
        )
        .unwrap();
        let power = run.final_state()[0].norm_sqr() / params.p0;
        let expected = params.steady_power_ratio();
        assert!(
            (power - expected).abs() / expected < 0.01,
            "power {power} vs {expected}"
        );
    }

    #[test]
    fn rotating_frame_identity_and_shil_cancellation() {
        let params = MachineParams::<f64>::defaults(2);
        let same = to_rotating_frame(&params, 0.0);
        assert_eq!(same.omega0, params.omega0);
        assert_eq!(same.omega_e, params.omega_e);
        assert_eq!(same.loop_phase, params.loop_phase);

        let half = to_rotating_frame(&params, params.omega_e / 2.0);
        assert!(half.omega_e.abs() < 1e-12);
        assert!((half.omega0 - (params.omega0 - params.omega_e / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn lab_and_rotating_frames_agree_on_one_oscillator() {
        let mut params = MachineParams::<f64>::defaults(1);
        params.kappa = 0.0;
        params.beta_r = 0.3;
        params.beta_i = 0.2;
        let t_end = 200.0;
        let lab_cfg = IntegratorConfig {
            t_end,
            record_stride: 200,
            ..IntegratorConfig::lab_defaults()
        };
        let rot_cfg = IntegratorConfig {
            t_end,
            record_stride: 20,
            ..IntegratorConfig::rotating_defaults(params.omega_e / 2.0)
        };
        let init = InitialHistory {
            amplitude_scale: 0.5,
            phases: Some(vec![0.8]),
            rng_seed: 0,
        };
        let lab = integrate(&params, &Coupling::none(1), &lab_cfg, &init).unwrap();
        let rot = integrate(&params, &Coupling::none(1), &rot_cfg, &init).unwrap();
        let z_lab = *lab.final_state().first().unwrap();
        // map the rotating-frame envelope back to the lab: c = a e^{i f t}
        let a = *rot.final_state().first().unwrap();
        let z_rot = a * cis(rot.trace.frame_freq() * t_end);
        assert!(
            (z_lab.norm() - z_rot.norm()).abs() < 1e-4,
            "|c| mismatch: {} vs {}",
            z_lab.norm(),
            z_rot.norm()
        );
        let dphi = (z_lab * z_rot.conj()).arg();
        assert!(dphi.abs() < 1e-3, "phase mismatch {dphi}");
    }

    #[test]
    fn integration_is_deterministic() {
        let params = MachineParams::<f64>::defaults(2);
        let problem =
            crate::problem::IsingProblem::from_edges(2, &[(0, 1, 1.0)], "ferro2").unwrap();
        let coupling = Coupling::from(&problem);
        let config = IntegratorConfig {
            t_end: 100.0,
            ..IntegratorConfig::rotating_defaults(params.omega_e / 2.0)
        };
        let init = InitialHistory::random(42);
        let a = integrate(&params, &coupling, &config, &init).unwrap();
        let b = integrate(&params, &coupling, &config, &init).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for k in 0..a.trace.len() {
            assert_eq!(a.trace.sample(k), b.trace.sample(k));
        }
    }

    #[test]
    fn trace_row_arithmetic() {
        let plan = plan(0.05, 10.0, 10);
        assert_eq!(plan.steps, 200);
        let (trace, _) = integrate_delay_system(
            1,
            &plan,
            RunDiagnostics::default(),
            |_t, s, d| {
                s[0] = C::new(1.0, 0.0);
                d[0] = C::new(0.0, 0.0);
            },
            |_t, now, _delayed, out| {
                out[0] = now[0].scale(-0.01);
            },
        )
        .unwrap();
        assert_eq!(trace.len(), plan.steps / plan.record_stride + 1);
    }
}
