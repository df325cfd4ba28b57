//! Plain-text emitters: sweep tables as CSV, heatmaps as dense matrices,
//! and per-trial trajectory traces.
//!
//! All angular frequencies are written divided by 2 pi. Formats are fixed
//! so identical runs produce byte-identical files regardless of thread
//! count.

use std::io::{self, Write};

use crate::integrate::Trace;
use crate::readout::unwrap_phases;
use crate::scalar::Real;
use crate::sweep::{ArnoldSummary, SweepKind, SweepSummary, TransitionFit};

fn fmt<T: Real>(value: T, decimals: usize) -> String {
    let v = value.to_f64_lossy();
    if v.is_finite() {
        format!("{v:.decimals$}")
    } else {
        "nan".to_string()
    }
}

fn per_two_pi<T: Real>(value: T) -> T {
    value / T::TAU()
}

/// Grid sweep table. Column layout depends on the sweep kind:
/// `beta-plane`, `kappa`, and `detuning` each get the schema of the
/// figure family they reproduce; `single-point` uses the beta-plane
/// schema.
pub fn write_sweep_csv<T: Real, W: Write>(w: &mut W, s: &SweepSummary<T>) -> io::Result<()> {
    match s.kind {
        SweepKind::BetaPlane | SweepKind::SinglePoint => {
            writeln!(
                w,
                "beta_r,beta_i,trials,excluded,gmp,mean_energy,locked_fraction"
            )?;
            for p in &s.points {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    fmt(p.a, 4),
                    fmt(p.b, 4),
                    p.trials,
                    p.excluded,
                    fmt(p.gmp, 6),
                    fmt(p.mean_energy, 6),
                    fmt(p.locked_fraction, 6),
                )?;
            }
        }
        SweepKind::Kappa => {
            writeln!(w, "kappa,beta_r,beta_i,trials,gmp")?;
            for p in &s.points {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fmt(per_two_pi(p.a), 6),
                    fmt(s.base_beta.0, 4),
                    fmt(p.b, 4),
                    p.trials,
                    fmt(p.gmp, 6),
                )?;
            }
        }
        SweepKind::Detuning => {
            writeln!(w, "detuning,beta_i,trials,gmp")?;
            for p in &s.points {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt(per_two_pi(p.a), 6),
                    fmt(p.b, 4),
                    p.trials,
                    fmt(p.gmp, 6),
                )?;
            }
        }
        SweepKind::Arnold => unreachable!("arnold sweeps use write_arnold_csv"),
    }
    Ok(())
}

/// Single-oscillator locking map table.
pub fn write_arnold_csv<T: Real, W: Write>(w: &mut W, s: &ArnoldSummary<T>) -> io::Result<()> {
    writeln!(w, "ke,detuning,freq_offset,locked")?;
    for p in &s.points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(per_two_pi(p.ke), 6),
            fmt(per_two_pi(p.detuning), 6),
            fmt(per_two_pi(p.freq_offset), 9),
            u8::from(p.locked),
        )?;
    }
    Ok(())
}

/// Single-row transition-line fit record.
pub fn write_transition_csv<T: Real, W: Write>(
    w: &mut W,
    fit: &TransitionFit<T>,
) -> io::Result<()> {
    writeln!(w, "nu_th,intercept,n_boundary_points,rmse")?;
    writeln!(
        w,
        "{},{},{},{}",
        fmt(fit.nu_th, 6),
        fmt(fit.intercept, 6),
        fit.n_boundary_points,
        fmt(fit.rmse, 6),
    )
}

/// Dense plot-ready matrix: rows run over `axis_b` ascending, columns over
/// `axis_a` ascending, values space-separated.
pub fn write_matrix<T: Real, W: Write>(
    w: &mut W,
    s: &SweepSummary<T>,
    value: impl Fn(&crate::sweep::PointSummary<T>) -> T,
) -> io::Result<()> {
    let nb = s.b_values.len();
    for ib in 0..nb {
        let mut row = Vec::with_capacity(s.a_values.len());
        for ia in 0..s.a_values.len() {
            row.push(fmt(value(s.point(ia, ib)), 6));
        }
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Dense locking-map matrix for an arnold sweep: rows over detuning
/// ascending, columns over `Ke` ascending, values `|2 omega - omega_e|`
/// divided by 2 pi.
pub fn write_arnold_matrix<T: Real, W: Write>(
    w: &mut W,
    s: &ArnoldSummary<T>,
) -> io::Result<()> {
    let nd = s.detuning_values.len();
    for id in 0..nd {
        let mut row = Vec::with_capacity(s.ke_values.len());
        for ik in 0..s.ke_values.len() {
            let p = &s.points[ik * nd + id];
            row.push(fmt(per_two_pi(p.freq_offset).abs(), 9));
        }
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Trajectory trace: one row per (sample, oscillator), phases unwrapped
/// per oscillator in the integration frame.
pub fn write_trace_csv<T: Real, W: Write>(w: &mut W, trace: &Trace<T>) -> io::Result<()> {
    writeln!(w, "t,osc,re,im,power,phase")?;
    let n = trace.n();
    let mut unwrapped: Vec<Vec<T>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut phases: Vec<T> = (0..trace.len())
            .map(|k| trace.sample(k)[j].arg())
            .collect();
        unwrap_phases(&mut phases);
        unwrapped.push(phases);
    }
    for k in 0..trace.len() {
        let t = trace.time(k);
        for (j, phases) in unwrapped.iter().enumerate() {
            let z = trace.sample(k)[j];
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt(t, 4),
                j,
                fmt(z.re, 9),
                fmt(z.im, 9),
                fmt(z.norm_sqr(), 9),
                fmt(phases[k], 9),
            )?;
        }
    }
    Ok(())
}
