//! Strict key-value run configuration.
//!
//! Every field is optional and falls back to the model defaults; unknown
//! keys are rejected so typos fail fast. Frequencies in the file are
//! given divided by 2 pi, matching all emitted tables.

use dlim_core::sweep::{Axis, Frame, SweepKind, SweepSpec};
use dlim_core::{Integrator, Params, Readout, Scalar};
use serde::Deserialize;

use crate::CliError;

const TWO_PI: Scalar = std::f64::consts::TAU;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub machine: MachineSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Machine constants; frequencies divided by 2 pi.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    pub omega0: Option<Scalar>,
    pub omega_e: Option<Scalar>,
    pub gamma0: Option<Scalar>,
    pub k: Option<Scalar>,
    pub ke: Option<Scalar>,
    pub kappa: Option<Scalar>,
    pub beta_r: Option<Scalar>,
    pub beta_i: Option<Scalar>,
    pub p0: Option<Scalar>,
    pub tau: Option<Scalar>,
    /// Relative standard deviation of per-oscillator frequency offsets.
    pub dispersion_sigma: Option<Scalar>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub h: Option<Scalar>,
    pub t_end: Option<Scalar>,
    pub record_stride: Option<usize>,
    /// "rotating" (default) or "lab".
    pub frame: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub window: Option<Scalar>,
    /// Lock tolerance relative to omega0.
    pub lock_tol: Option<Scalar>,
    pub phase_var_tol: Option<Scalar>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub amplitude_scale: Option<Scalar>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: Option<String>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub fast: Option<bool>,
    pub beta_r: Option<AxisSection>,
    pub beta_i: Option<AxisSection>,
    /// Coupling-strength axis, divided by 2 pi.
    pub kappa: Option<AxisSection>,
    /// Detuning axis `omega_e - 2 omega0`, divided by 2 pi.
    pub detuning: Option<AxisSection>,
    /// Injection-strength axis, divided by 2 pi.
    pub ke: Option<AxisSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub min: Scalar,
    pub max: Scalar,
    pub step: Scalar,
}

impl AxisSection {
    fn axis(&self, scale: Scalar) -> Axis<Scalar> {
        Axis::new(self.min * scale, self.max * scale, self.step * scale)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// Flag-level overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub beta_r: Option<Scalar>,
    pub beta_i: Option<Scalar>,
    pub kappa: Option<Scalar>,
    pub ke: Option<Scalar>,
    pub omega_e: Option<Scalar>,
    pub t_end: Option<Scalar>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub frame: Option<String>,
    pub dispersion_sigma: Option<Scalar>,
    pub amplitude_scale: Option<Scalar>,
}

impl RunConfig {
    pub fn load(path: Option<&str>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {p}: {e}")))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Input(format!("config {p}: {e}")))
            }
        }
    }

    /// Machine parameters for `n` oscillators with overrides applied.
    pub fn params(&self, n: usize, ov: &Overrides) -> Params {
        let m = &self.machine;
        let mut p = Params::defaults(n);
        if let Some(v) = m.omega0 {
            p.omega0 = v * TWO_PI;
        }
        if let Some(v) = m.omega_e {
            p.omega_e = v * TWO_PI;
        }
        if let Some(v) = m.gamma0 {
            p.gamma0 = v * TWO_PI;
        }
        if let Some(v) = m.k {
            p.k_gain = v * TWO_PI;
        }
        if let Some(v) = m.ke {
            p.k_e = v * TWO_PI;
        }
        if let Some(v) = m.kappa {
            p.kappa = v * TWO_PI;
        }
        if let Some(v) = m.beta_r {
            p.beta_r = v;
        }
        if let Some(v) = m.beta_i {
            p.beta_i = v;
        }
        if let Some(v) = m.p0 {
            p.p0 = v;
        }
        if let Some(v) = m.tau {
            p.tau = v;
        }
        if let Some(v) = ov.beta_r {
            p.beta_r = v;
        }
        if let Some(v) = ov.beta_i {
            p.beta_i = v;
        }
        if let Some(v) = ov.kappa {
            p.kappa = v * TWO_PI;
        }
        if let Some(v) = ov.ke {
            p.k_e = v * TWO_PI;
        }
        if let Some(v) = ov.omega_e {
            p.omega_e = v * TWO_PI;
        }
        p
    }

    pub fn dispersion_sigma(&self, ov: &Overrides) -> Scalar {
        ov.dispersion_sigma
            .or(self.machine.dispersion_sigma)
            .unwrap_or(0.0)
    }

    pub fn amplitude_scale(&self, ov: &Overrides) -> Scalar {
        ov.amplitude_scale
            .or(self.initial.amplitude_scale)
            .unwrap_or(0.05)
    }

    pub fn frame(&self, ov: &Overrides) -> Result<Frame<Scalar>, CliError> {
        let name = ov
            .frame
            .clone()
            .or_else(|| self.integrator.frame.clone())
            .unwrap_or_else(|| "rotating".to_string());
        match name.as_str() {
            "rotating" => Ok(Frame::HalfOmegaE),
            "lab" => Ok(Frame::Lab),
            other => Err(CliError::Input(format!(
                "unknown frame `{other}` (expected `rotating` or `lab`)"
            ))),
        }
    }

    /// Integrator settings; the frame frequency is resolved per point by
    /// the sweep engine, so only the step geometry is set here.
    pub fn integrator(&self, ov: &Overrides) -> Integrator {
        let lab = matches!(
            self.frame(ov).unwrap_or(Frame::HalfOmegaE),
            Frame::Lab
        );
        let mut cfg = if lab {
            Integrator::lab_defaults()
        } else {
            Integrator::rotating_defaults(0.0)
        };
        if let Some(v) = self.integrator.h {
            cfg.h = v;
        }
        if let Some(v) = ov.t_end.or(self.integrator.t_end) {
            cfg.t_end = v;
        }
        if let Some(v) = self.integrator.record_stride {
            cfg.record_stride = v;
        }
        cfg
    }

    pub fn readout(&self, params: &Params) -> Readout {
        let mut cfg = Readout::defaults(params.omega0);
        if let Some(v) = self.readout.window {
            cfg.window = v;
        }
        if let Some(v) = self.readout.lock_tol {
            cfg.lock_tol = v * params.omega0;
        }
        if let Some(v) = self.readout.phase_var_tol {
            cfg.phase_var_tol = v;
        }
        cfg
    }

    /// Resolve the full sweep specification for `kind`.
    pub fn sweep_spec(
        &self,
        kind: SweepKind,
        n: usize,
        ov: &Overrides,
    ) -> Result<SweepSpec<Scalar>, CliError> {
        let mut base = self.params(n, ov);
        // coupling and detuning sweeps default to the high-success corner
        // of the nonlinearity plane
        if matches!(kind, SweepKind::Kappa | SweepKind::Detuning) {
            if self.machine.beta_r.is_none() && ov.beta_r.is_none() {
                base.beta_r = 0.42;
            }
            if self.machine.beta_i.is_none() && ov.beta_i.is_none() {
                base.beta_i = -0.16;
            }
        }
        let master_seed = ov.master_seed.or(self.sweep.master_seed).unwrap_or(1);
        let mut spec = match kind {
            SweepKind::BetaPlane => SweepSpec::beta_plane(base, master_seed),
            SweepKind::Arnold => SweepSpec::arnold(base, master_seed),
            SweepKind::Kappa => SweepSpec::kappa(base, master_seed),
            SweepKind::Detuning => SweepSpec::detuning(base, master_seed),
            SweepKind::SinglePoint => SweepSpec::single_point(base, master_seed),
        };
        if let Some(ax) = &self.sweep.beta_r {
            if kind == SweepKind::BetaPlane {
                spec.axis_a = ax.axis(1.0);
            }
        }
        if let Some(ax) = &self.sweep.beta_i {
            match kind {
                SweepKind::BetaPlane | SweepKind::Detuning => spec.axis_b = ax.axis(1.0),
                _ => {}
            }
        }
        if let Some(ax) = &self.sweep.kappa {
            if kind == SweepKind::Kappa {
                spec.axis_a = ax.axis(TWO_PI);
            }
        }
        if let Some(ax) = &self.sweep.detuning {
            if kind == SweepKind::Detuning {
                spec.axis_a = ax.axis(TWO_PI);
            }
        }
        if let Some(ax) = &self.sweep.ke {
            if kind == SweepKind::Arnold {
                spec.axis_a = ax.axis(TWO_PI);
            }
        }
        if let Some(ax) = &self.sweep.detuning {
            if kind == SweepKind::Arnold {
                spec.axis_b = ax.axis(TWO_PI);
            }
        }
        if let Some(t) = ov.trials.or(self.sweep.trials) {
            spec.trials_per_point = t;
        }
        if self.sweep.fast.unwrap_or(false) {
            spec = spec.fast();
        }
        spec.dispersion_sigma = self.dispersion_sigma(ov);
        spec.amplitude_scale = self.amplitude_scale(ov);
        spec.integrator = self.integrator(ov);
        spec.frame = self.frame(ov)?;
        spec.readout = self.readout(&spec.base);
        Ok(spec)
    }

    /// Render the resolved configuration as a deterministic document.
    pub fn render_resolved(&self, ov: &Overrides) -> String {
        let p = self.params(2, ov);
        let integ = self.integrator(ov);
        let readout = self.readout(&p);
        let frame = match self.frame(ov) {
            Ok(Frame::Lab) => "lab",
            _ => "rotating",
        };
        format!(
            "[machine]\n\
             omega0 = {}\n\
             omega_e = {}\n\
             gamma0 = {}\n\
             k = {}\n\
             ke = {}\n\
             kappa = {}\n\
             beta_r = {}\n\
             beta_i = {}\n\
             p0 = {}\n\
             tau = {}\n\
             dispersion_sigma = {}\n\
             \n[integrator]\n\
             h = {}\n\
             t_end = {}\n\
             record_stride = {}\n\
             frame = \"{}\"\n\
             \n[readout]\n\
             window = {}\n\
             lock_tol = {}\n\
             phase_var_tol = {}\n\
             \n[initial]\n\
             amplitude_scale = {}\n",
            p.omega0 / TWO_PI,
            p.omega_e / TWO_PI,
            p.gamma0 / TWO_PI,
            p.k_gain / TWO_PI,
            p.k_e / TWO_PI,
            p.kappa / TWO_PI,
            p.beta_r,
            p.beta_i,
            p.p0,
            p.tau,
            self.dispersion_sigma(ov),
            integ.h,
            integ.t_end,
            integ.record_stride,
            frame,
            readout.window,
            readout.lock_tol / p.omega0,
            readout.phase_var_tol,
            self.amplitude_scale(ov),
        )
    }
}

pub fn parse_kind(name: &str) -> Result<SweepKind, CliError> {
    match name {
        "beta-plane" => Ok(SweepKind::BetaPlane),
        "arnold" => Ok(SweepKind::Arnold),
        "kappa" => Ok(SweepKind::Kappa),
        "detuning" => Ok(SweepKind::Detuning),
        "single-point" => Ok(SweepKind::SinglePoint),
        other => Err(CliError::Input(format!(
            "unknown sweep kind `{other}` (expected beta-plane, arnold, kappa, detuning, single-point)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_model_operating_point() {
        let cfg = RunConfig::default();
        let p = cfg.params(4, &Overrides::default());
        assert!((p.omega0 / TWO_PI - 1.0).abs() < 1e-12);
        assert!((p.omega_e / TWO_PI - 2.003).abs() < 1e-12);
        assert!((p.gamma0 / TWO_PI - 0.05).abs() < 1e-12);
        assert!((p.k_gain / TWO_PI - 0.06).abs() < 1e-12);
        assert!((p.kappa / TWO_PI - 0.003).abs() < 1e-12);
        assert!((p.k_e / TWO_PI - 0.01).abs() < 1e-12);
        assert_eq!(p.p0, 1.0);
        assert_eq!(p.tau, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_key_named() {
        let err = toml::from_str::<RunConfig>("[machine]\nomga0 = 1.0\n")
            .err()
            .expect("parse must fail");
        assert!(err.to_string().contains("omga0"), "{err}");
    }

    #[test]
    fn overrides_beat_config_values() {
        let cfg: RunConfig = toml::from_str("[machine]\nbeta_r = 0.2\n").unwrap();
        let ov = Overrides {
            beta_r: Some(0.45),
            ..Default::default()
        };
        assert_eq!(cfg.params(2, &ov).beta_r, 0.45);
    }

    #[test]
    fn sweep_spec_kind_defaults() {
        let cfg = RunConfig::default();
        let spec = cfg
            .sweep_spec(SweepKind::Kappa, 8, &Overrides::default())
            .unwrap();
        assert_eq!(spec.base.beta_r, 0.42);
        assert_eq!(spec.base.beta_i, -0.16);
        assert_eq!(spec.axis_a.values().len(), 6);
        let spec = cfg
            .sweep_spec(SweepKind::BetaPlane, 8, &Overrides::default())
            .unwrap();
        assert_eq!(spec.axis_a.values().len(), 21);
        assert_eq!(spec.axis_b.values().len(), 101);
        let fast = {
            let cfg: RunConfig = toml::from_str("[sweep]\nfast = true\n").unwrap();
            cfg.sweep_spec(SweepKind::BetaPlane, 8, &Overrides::default())
                .unwrap()
        };
        assert_eq!(fast.trials_per_point, 50);
        assert_eq!(fast.axis_a.values().len(), 11);
    }
}
