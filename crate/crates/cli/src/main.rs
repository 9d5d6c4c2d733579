use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use sfc_ldpc::decoder::{bp_decode, peel_with, sample_erasures, TraceMode};
use sfc_ldpc::evolution::{
    bp_threshold, empirical_moments, gamma_coefficient, solve_ce, solve_ege, EmpiricalConfig, SolverOptions,
};
use sfc_ldpc::harness::{
    emit_plot_data, output_root, reproduce_tables, run_waterfall, write_atomic, ExperimentConfig, RunControl,
    Table, TableOptions, PREDICTION_FILE,
};
use sfc_ldpc::predict::{characterize_ensemble, CharacterizeOptions, EpsGrid};
use sfc_ldpc::sampler::{condition_girth, read_graph, sample_graph, write_graph};
use sfc_ldpc::stats::derive_seed;
use sfc_ldpc::{position_profile, EnsembleParams};

const EXIT_RUNTIME: u8 = 1;
const EXIT_TOLERANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "sfc", version, about = "Spatially Mt. Fuji coupled LDPC ensembles on the erasure channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Tanner graph from an ensemble config.
    Construct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Remove cycles of length 4 and 6.
        #[arg(long)]
        girth_condition: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-position node counts as CSV.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Decode random erasure patterns on a stored graph.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one peeling trace (JSON) per trial into this directory.
        #[arg(long)]
        record_trace: Option<PathBuf>,
        /// Per-trial CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the mean (and optionally covariance) evolution.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Also integrate the covariance system.
        #[arg(long)]
        ce: bool,
        /// Monte-Carlo moments at 20 probe times, e.g. `M=2000,trials=500`.
        #[arg(long)]
        empirical: Option<String>,
        #[arg(long)]
        h: Option<f64>,
        /// Skip the threshold and gamma computation in the summary.
        #[arg(long)]
        no_threshold: bool,
        /// Output directory; defaults under the output root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the waterfall curve.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// `start:stop:step`; defaults to 0.40 through the threshold plus 0.01.
        #[arg(long)]
        eps_grid: Option<String>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Recompute a published table and diff it.
    Reproduce {
        #[arg(long)]
        table: String,
        /// Sampled codes per row for the rank-based rate of Table II.
        #[arg(long, default_value_t = 2)]
        rank_codes: usize,
        #[arg(long)]
        h: Option<f64>,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo waterfall campaign.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        resume: bool,
        /// Also compute the predicted curve and emit figure data.
        #[arg(long)]
        predict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn the artifacts of a run directory into per-figure CSV files.
    Plot {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// A check that ran to completion but missed its tolerance.
#[derive(Debug)]
struct ToleranceFailure(String);

impl std::fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ToleranceFailure {}

fn read_params(path: &Path) -> Result<EnsembleParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    EnsembleParams::from_config_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn solver_options(params: &EnsembleParams, h: Option<f64>) -> SolverOptions {
    let opts = SolverOptions::for_params(params);
    match h {
        Some(h) => opts.with_h(h),
        None => opts,
    }
}

fn construct(config: &Path, seed: u64, girth: bool, out: &Path, profile: Option<&Path>) -> Result<()> {
    let params = read_params(config)?;
    let mut g = sample_graph(&params, seed)?;
    if girth {
        g = condition_girth(&g, 6, derive_seed(seed, 1, 0))?;
    }
    write_graph(&g, out)?;
    if let Some(p) = profile {
        write_atomic(p, position_profile(&params)?.to_csv().as_bytes())?;
    }
    eprintln!(
        "{params}: {} variables, {} checks, {} edges -> {}",
        g.num_variables(),
        g.num_checks(),
        g.num_edges(),
        out.display()
    );
    Ok(())
}

fn simulate(graph: &Path, eps: f64, trials: u64, seed: u64, trace_dir: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let g = read_graph(graph)?;
    if let Some(d) = trace_dir {
        fs::create_dir_all(d)?;
    }
    let mode = if trace_dir.is_some() { TraceMode::default_for(&g) } else { TraceMode::Off };
    let rows: Vec<Result<String>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let pat = sample_erasures(&g, eps, derive_seed(seed, 0, t))?;
            let bp = bp_decode(&g, &pat, None)?;
            let tr = peel_with(&g, &pat, derive_seed(seed, 1, t), &mode)?;
            if let Some(d) = trace_dir {
                write_json(&d.join(format!("trace_{t:06}.json")), &tr)?;
            }
            Ok(format!(
                "{t},{},{:?},{},{},{},{}",
                pat.len(),
                bp.outcome,
                bp.residual,
                bp.iterations,
                tr.steps,
                tr.stall_time.map_or(String::new(), |s| s.to_string())
            ))
        })
        .collect();
    let mut csv = String::from("trial,erased,outcome,residual,bp_iterations,peel_steps,stall_time\n");
    for r in rows {
        csv.push_str(&r?);
        csv.push('\n');
    }
    match out {
        Some(p) => write_atomic(p, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn parse_empirical(spec: &str) -> Result<(u64, usize)> {
    let (mut m, mut trials) = (None, None);
    for part in spec.split(',') {
        let (k, v) = part.split_once('=').context("expected key=value pairs")?;
        match k.trim() {
            "M" | "m" => m = Some(v.trim().parse()?),
            "trials" => trials = Some(v.trim().parse()?),
            other => bail!("unknown empirical key '{other}'"),
        }
    }
    Ok((m.context("empirical: M missing")?, trials.unwrap_or(500)))
}

fn evolve(
    config: &Path,
    eps: f64,
    ce: bool,
    empirical: Option<&str>,
    h: Option<f64>,
    no_threshold: bool,
    out: Option<&Path>,
) -> Result<()> {
    let params = read_params(config)?;
    let opts = solver_options(&params, h);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| output_root().join(stem(config)));
    fs::create_dir_all(&dir)?;

    let mean = solve_ege(&params, eps, &opts)?;
    let mut csv = String::from("tau,r1,total_v\n");
    for ((t, r), v) in mean.tau.iter().zip(&mean.r1).zip(&mean.total_v) {
        let _ = writeln!(csv, "{t},{r:e},{v:e}");
    }
    write_atomic(&dir.join("ege.csv"), csv.as_bytes())?;

    let mut summary = json!({
        "params": params,
        "epsilon": eps,
        "completed": mean.completed,
        "tau_star": mean.tau_star,
        "r1_star": mean.r1_star,
        "max_drift_violation": mean.conservation.max_drift_violation,
    });
    if ce {
        let cov = solve_ce(&params, eps, &opts)?;
        let mut csv = String::from("tau,r1,delta1\n");
        for ((t, r), d) in cov.tau.iter().zip(&cov.r1).zip(&cov.delta1) {
            let _ = writeln!(csv, "{t},{r:e},{d:e}");
        }
        write_atomic(&dir.join("ce.csv"), csv.as_bytes())?;
        summary["delta1_star"] = json!(mean.tau_star.map(|t| cov.delta1_at(t)));
        summary["max_asymmetry"] = json!(cov.conservation.max_asymmetry);
    }
    if let Some(spec) = empirical {
        let (m, trials) = parse_empirical(spec)?;
        let end = mean.end_tau();
        let probes: Vec<f64> = (1..=20).map(|k| end * k as f64 / 21.0).collect();
        let emp = empirical_moments(&params, eps, &EmpiricalConfig::new(m, trials, 0, probes.clone()))?;
        let mut csv = String::from("tau,r1_ege,r1_mc,r1_mc_se,delta1_mc\n");
        for (k, &t) in probes.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{t},{:e},{:e},{:e},{:e}",
                mean.r1_at(t),
                emp.r1_mean(k),
                emp.r1_standard_error(k),
                emp.delta1(k)
            );
        }
        write_atomic(&dir.join("empirical.csv"), csv.as_bytes())?;
    }
    if !no_threshold {
        let eps_bp = bp_threshold(&params, 1e-4, &opts)?;
        let (gamma, _) = gamma_coefficient(&params, eps_bp, &opts)?;
        summary["eps_bp"] = json!(eps_bp);
        summary["gamma"] = json!(gamma);
    }
    write_json(&dir.join("evolve.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn predict(config: &Path, grid: Option<&str>, out: &Path) -> Result<()> {
    let params = read_params(config)?;
    let mut opts = CharacterizeOptions::for_params(&params);
    opts.grid = grid.map(EpsGrid::parse).transpose()?;
    let rep = characterize_ensemble(&params, &opts)?;
    write_json(out, &rep)?;
    write_atomic(&out.with_extension("csv"), rep.to_csv().as_bytes())?;
    println!(
        "eps_bp={:.4} gamma={:.3} delta1*={:.4} steepness={:.3}",
        rep.eps_bp, rep.gamma, rep.delta1_star, rep.steepness
    );
    Ok(())
}

fn reproduce(table: &str, rank_codes: usize, h: Option<f64>, out: Option<&Path>) -> Result<()> {
    let which: Table = table.parse()?;
    let opts = TableOptions {
        rank_codes,
        h,
        ..TableOptions::default()
    };
    let rep = reproduce_tables(which, &opts)?;
    print!("{}", rep.to_text());
    if let Some(p) = out {
        write_json(p, &rep)?;
    }
    if !rep.passed() {
        return Err(ToleranceFailure(format!("table {which}: {} cells outside tolerance", rep.failures())).into());
    }
    Ok(())
}

fn run(config: &Path, workers: Option<usize>, resume: bool, with_prediction: bool, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(w) = workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o.to_path_buf());
    }
    let dir = cfg
        .output_dir
        .get_or_insert_with(|| output_root().join(stem(config)))
        .clone();
    let table = run_waterfall(&cfg, &RunControl { resume })?;
    for r in &table.rows {
        println!(
            "eps={:.4} wer={:.3e} [{:.2e}, {:.2e}] ber={:.3e} iters={:.1}",
            r.epsilon, r.word_error_rate, r.wer_interval.0, r.wer_interval.1, r.bit_error_rate, r.mean_iterations
        );
    }
    if with_prediction {
        let rep = characterize_ensemble(&cfg.params, &CharacterizeOptions::for_params(&cfg.params))?;
        write_json(&dir.join(PREDICTION_FILE), &rep)?;
        emit_plot_data(&dir)?;
    }
    eprintln!("results in {}", dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Construct {
            config,
            seed,
            girth_condition,
            out,
            profile,
        } => construct(&config, seed, girth_condition, &out, profile.as_deref()),
        Command::Simulate {
            graph,
            epsilon,
            trials,
            seed,
            record_trace,
            out,
        } => simulate(&graph, epsilon, trials, seed, record_trace.as_deref(), out.as_deref()),
        Command::Evolve {
            config,
            epsilon,
            ce,
            empirical,
            h,
            no_threshold,
            out,
        } => evolve(&config, epsilon, ce, empirical.as_deref(), h, no_threshold, out.as_deref()),
        Command::Predict { config, eps_grid, out } => predict(&config, eps_grid.as_deref(), &out),
        Command::Reproduce {
            table,
            rank_codes,
            h,
            out,
        } => reproduce(&table, rank_codes, h, out.as_deref()),
        Command::Run {
            config,
            workers,
            resume,
            predict,
            out,
        } => run(&config, workers, resume, predict, out.as_deref()),
        Command::Plot { dir } => {
            let files = emit_plot_data(&dir)?;
            for f in &files.written {
                println!("{}", f.display());
            }
            for (f, needs) in &files.skipped {
                eprintln!("skipped {f}: needs {}", needs.join(", "));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ToleranceFailure>().is_some() {
                ExitCode::from(EXIT_TOLERANCE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
