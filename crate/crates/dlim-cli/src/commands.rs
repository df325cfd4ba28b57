//! Subcommand implementations.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use dlim_core::dynamics::Coupling;
use dlim_core::output::{
    write_arnold_csv, write_arnold_matrix, write_matrix, write_sweep_csv, write_trace_csv,
    write_transition_csv,
};
use dlim_core::problem::{
    brute_force_ground, fixture, mobius_ladder, random_graph, IsingProblem, ProblemError,
    FIXTURE_NAMES, ORACLE_MAX_SPINS,
};
use dlim_core::sweep::{run_trial, sweep_arnold, run_sweep, SweepKind, TrialContext, TrialResult};
use dlim_core::{Problem, Scalar};

use crate::config::{parse_kind, Overrides, RunConfig};
use crate::{CliError, GraphArgs, RunArgs};

const TWO_PI: Scalar = std::f64::consts::TAU;

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Resolve the problem source flags into an instance.
pub fn resolve_problem(args: &GraphArgs) -> Result<Problem, CliError> {
    if let Some(name) = &args.graph {
        return fixture(name).map_err(|e| match e {
            ProblemError::UnknownFixture(n) => CliError::Input(format!(
                "unknown fixture `{n}`; available: {}",
                FIXTURE_NAMES.join(", ")
            )),
            other => input(other),
        });
    }
    if let Some(path) = &args.problem {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read problem file {path}: {e}")))?;
        return IsingProblem::from_text(&text, path.as_str()).map_err(input);
    }
    if let Some(n) = args.mobius {
        let coupling = args.coupling.unwrap_or(-1.0);
        return mobius_ladder(n, coupling).map_err(input);
    }
    if let Some(n) = args.random {
        let density = args
            .density
            .ok_or_else(|| CliError::Input("--random needs --density".into()))?;
        let weights: Vec<Scalar> = args
            .weights
            .as_deref()
            .ok_or_else(|| CliError::Input("--random needs --weights".into()))?
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<Scalar>()
                    .map_err(|_| CliError::Input(format!("bad weight `{tok}`")))
            })
            .collect::<Result<_, _>>()?;
        let seed = args.graph_seed.unwrap_or(1);
        return random_graph(n, density, &weights, seed).map_err(input);
    }
    Err(CliError::Input(
        "no problem selected; use --graph, --problem, --mobius, or --random".into(),
    ))
}

pub fn ground_truth(args: &GraphArgs) -> Result<(), CliError> {
    let problem = resolve_problem(args)?;
    if problem.n() > ORACLE_MAX_SPINS {
        return Err(CliError::Input(format!(
            "enumeration too large: n = {} exceeds the oracle guard of {ORACLE_MAX_SPINS} spins",
            problem.n()
        )));
    }
    let gt = brute_force_ground(&problem).map_err(input)?;
    println!("problem: {} (n = {})", problem.label(), problem.n());
    println!("minimum energy: {}", gt.energy);
    println!("degeneracy: {}", gt.degeneracy());
    println!("states enumerated: {}", gt.enumerated);
    println!(
        "example configuration: {}",
        gt.configs.first().map(|c| c.compact()).unwrap_or_default()
    );
    Ok(())
}

pub fn trial(
    args: &GraphArgs,
    run_args: &RunArgs,
    seed: u64,
    trace_path: Option<&str>,
) -> Result<(), CliError> {
    let problem = resolve_problem(args)?;
    let config = RunConfig::load(run_args.config.as_deref())?;
    let ov = overrides_of(run_args);
    let params = config.params(problem.n(), &ov);
    let oracle = brute_force_ground(&problem).map_err(input)?;
    let readout = config.readout(&params);
    let coupling = Coupling::from(&problem);
    let ctx = TrialContext {
        problem: &problem,
        coupling: &coupling,
        oracle: &oracle,
        readout: &readout,
    };
    let mut integ = config.integrator(&ov);
    integ.frame_freq = config.frame(&ov)?.freq(params.omega_e);

    let result = run_trial(
        &params,
        &ctx,
        &integ,
        config.amplitude_scale(&ov),
        config.dispersion_sigma(&ov),
        seed,
    );
    match &result {
        TrialResult::Completed(outcome) => {
            println!("seed: {seed}");
            println!("spins: {}", outcome.spins.compact());
            println!("energy: {}", outcome.energy);
            println!("is_ground: {}", outcome.is_ground);
            println!("classification: {}", outcome.class.as_str());
            println!("readout: {}", outcome.readout_mode.as_str());
            let offsets: Vec<String> = outcome
                .mean_freq_offsets
                .iter()
                .map(|o| format!("{:.9}", o / TWO_PI))
                .collect();
            println!("freq offsets (2w - we)/2pi: {}", offsets.join(" "));
        }
        TrialResult::Excluded { reason, class, .. } => {
            println!("seed: {seed}");
            println!("excluded: {}", reason.as_str());
            println!("classification: {}", class.as_str());
        }
        TrialResult::Failed { message, .. } => {
            return Err(CliError::Runtime(format!("trial failed: {message}")));
        }
    }

    if let Some(path) = trace_path {
        // rerun with identical drawn inputs to export the trajectory
        let (trial_params, init) = dlim_core::sweep::draw_trial_inputs(
            &params,
            config.amplitude_scale(&ov),
            config.dispersion_sigma(&ov),
            seed,
        );
        let run = dlim_core::integrate::integrate(&trial_params, &coupling, &integ, &init)
            .map_err(runtime)?;
        let file = fs::File::create(path)
            .map_err(|e| CliError::Input(format!("cannot write trace {path}: {e}")))?;
        let mut w = BufWriter::new(file);
        write_trace_csv(&mut w, &run.trace).map_err(runtime)?;
        w.flush().map_err(runtime)?;
        println!("trace written: {path}");
    }
    Ok(())
}

fn overrides_of(run: &RunArgs) -> Overrides {
    Overrides {
        beta_r: run.beta_r,
        beta_i: run.beta_i,
        kappa: run.kappa,
        ke: run.ke,
        omega_e: run.omega_e,
        t_end: run.t_end,
        frame: run.frame.clone(),
        dispersion_sigma: run.dispersion_sigma,
        amplitude_scale: run.amplitude_scale,
        ..Default::default()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    kind_name: Option<&str>,
    graph: &GraphArgs,
    run_args: &RunArgs,
    out_dir: Option<&str>,
    threads: Option<usize>,
    fast: bool,
    trials: Option<usize>,
    master_seed: Option<u64>,
) -> Result<(), CliError> {
    let config = RunConfig::load(run_args.config.as_deref())?;
    let kind = match kind_name.or(config.sweep.kind.as_deref()) {
        Some(name) => parse_kind(name)?,
        None => {
            return Err(CliError::Input(
                "no sweep kind: pass --kind or set [sweep].kind in the config".into(),
            ))
        }
    };
    let out_dir = out_dir
        .or(config.output.dir.as_deref())
        .unwrap_or("out")
        .to_string();
    let out_dir = out_dir.as_str();
    let mut ov = overrides_of(run_args);
    ov.trials = trials;
    ov.master_seed = master_seed;

    // fail before any computation if the output directory is unusable
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create output dir {out_dir}: {e}")))?;
    let probe = Path::new(out_dir).join(".write-probe");
    fs::write(&probe, b"")
        .map_err(|e| CliError::Input(format!("output dir {out_dir} not writable: {e}")))?;
    let _ = fs::remove_file(&probe);

    let n_threads = threads
        .or_else(|| {
            std::env::var("DLIM_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_threads)
        .build()
        .map_err(runtime)?;

    let start = std::time::Instant::now();
    if kind == SweepKind::Arnold {
        let mut spec = config.sweep_spec(kind, 1, &ov)?;
        if fast {
            spec = spec.fast();
        }
        let summary = pool.install(|| sweep_arnold(&spec)).map_err(input)?;
        write_file(out_dir, "arnold.csv", |w| write_arnold_csv(w, &summary))?;
        write_file(out_dir, "offset_matrix.txt", |w| {
            write_arnold_matrix(w, &summary)
        })?;
        let locked = summary.points.iter().filter(|p| p.locked).count();
        println!(
            "arnold: {} x {} grid, {:.1}s, locked cells {}/{}",
            summary.ke_values.len(),
            summary.detuning_values.len(),
            start.elapsed().as_secs_f64(),
            locked,
            summary.points.len()
        );
        return Ok(());
    }

    let problem = resolve_problem(graph)?;
    let oracle = brute_force_ground(&problem).map_err(input)?;
    let mut spec = config.sweep_spec(kind, problem.n(), &ov)?;
    if fast {
        spec = spec.fast();
    }
    let summary = pool
        .install(|| run_sweep(&spec, &problem, &oracle))
        .map_err(runtime)?;

    let table_name = match kind {
        SweepKind::BetaPlane => "beta_plane.csv",
        SweepKind::Kappa => "kappa.csv",
        SweepKind::Detuning => "detuning.csv",
        SweepKind::SinglePoint => "single_point.csv",
        SweepKind::Arnold => unreachable!(),
    };
    write_file(out_dir, table_name, |w| write_sweep_csv(w, &summary))?;
    if kind == SweepKind::BetaPlane {
        write_file(out_dir, "gmp_matrix.txt", |w| {
            write_matrix(w, &summary, |p| p.gmp)
        })?;
        write_file(out_dir, "locked_matrix.txt", |w| {
            write_matrix(w, &summary, |p| p.locked_fraction)
        })?;
        if let Some(fit) = &summary.transition {
            write_file(out_dir, "transition_fit.csv", |w| {
                write_transition_csv(w, fit)
            })?;
        }
    }

    let (pa, pb, peak) = summary.peak();
    println!(
        "{}: {} x {} grid on {} ({} trials/point), {:.1}s, peak gmp {:.4} at ({:.4}, {:.4})",
        kind.as_str(),
        summary.a_values.len(),
        summary.b_values.len(),
        problem.label(),
        spec.trials_per_point,
        start.elapsed().as_secs_f64(),
        peak,
        if matches!(kind, SweepKind::Kappa | SweepKind::Detuning) {
            pa / TWO_PI
        } else {
            pa
        },
        pb,
    );
    Ok(())
}

fn write_file(
    dir: &str,
    name: &str,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let path = Path::new(dir).join(name);
    let file = fs::File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    Ok(())
}

pub fn gen_graph(args: &GraphArgs, out: &str) -> Result<(), CliError> {
    let problem = resolve_problem(args)?;
    fs::write(out, problem.to_text())
        .map_err(|e| CliError::Runtime(format!("cannot write {out}: {e}")))?;
    println!(
        "wrote {} (n = {}, edges = {})",
        out,
        problem.n(),
        problem.edge_count()
    );
    Ok(())
}

pub fn validate_config(path: &str) -> Result<(), CliError> {
    let config = RunConfig::load(Some(path))?;
    print!("{}", config.render_resolved(&Overrides::default()));
    println!("config ok: {path}");
    Ok(())
}
