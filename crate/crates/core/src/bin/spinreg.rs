// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use spinreg::analysis::{
    fit_decaying_sinusoid, fit_exponential_decay, fit_log_echo, fit_log_phase, guess_sinusoid, FitPoint, FitResult,
    SinusoidMask,
};
use spinreg::harness::output::read_averages;
use spinreg::harness::{run_experiment, write_outputs, ExperimentConfig, KindName, RunManifest};
use spinreg::hologram::{wgs_phase, TargetSpots};
use spinreg::model::{sample_loading, Occupancy};
use spinreg::rearrange::{execute_plan, plan_moves, validate_plan, MovePlan};
use spinreg::seed::SeedSpec;
use spinreg::{Error, Result};

#[derive(Parser)]
#[command(name = "spinreg", version, about = "Tweezer-array nuclear-spin register simulator")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides shots per point.
    #[arg(long, global = true)]
    shots: Option<usize>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a hologram phase mask for a grid of spots.
    Wgs {
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 11)]
        cols: usize,
        /// Spot spacing in focal-plane pixels.
        #[arg(long, default_value_t = 10)]
        spacing: usize,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
    },
    /// Sample a stochastic load of the trap array.
    Load,
    /// Plan rearrangement moves for an occupancy file.
    Plan {
        #[arg(long)]
        occupancy: PathBuf,
    },
    /// Execute a move plan with the configured transport loss.
    Exec {
        #[arg(long)]
        occupancy: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run an experiment kind end to end.
    Run {
        kind: KindName,
        /// Record wall-clock time in the manifest.
        #[arg(long)]
        timing: bool,
    },
    /// Fit an averaged-series CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        #[arg(long, default_value = "all")]
        group: String,
        /// Oscillations per decade for `log-echo`.
        #[arg(long, default_value_t = 2.0)]
        n_osc: f64,
        /// Holds up to this length feed the `log-echo` phase fit.
        #[arg(long, default_value_t = 1.0)]
        early: f64,
    },
    /// Summarise a results directory.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Sinusoid,
    Exponential,
    LogEcho,
}

fn load_config(cli: &Cli, kind: Option<KindName>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::for_kind(kind.unwrap_or(KindName::RabiScan)),
    };
    if let Some(kind) = kind {
        if cfg.experiment.name() != kind {
            return Err(Error::Config(format!(
                "config describes {} but `run {kind}` was requested",
                cfg.experiment.name()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = cli.shots {
        cfg.shots = shots;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn fit_file(input: &Path, model: FitModel, group: &str, n_osc: f64, early: f64) -> Result<FitResult> {
    let rows = read_averages(&fs::read_to_string(input)?)?;
    let pts: Vec<FitPoint> = rows
        .iter()
        .filter(|r| r.group == group)
        .filter_map(|r| {
            let (y, lo, hi) = (r.m_corr?, r.wilson_lo?, r.wilson_hi?);
            let half = (0.5 * (hi - lo)).max(0.5 / r.n.max(1) as f64);
            Some(FitPoint::new(r.point_value, y, 1.0 / (half * half)))
        })
        .collect();
    Ok(match model {
        FitModel::Sinusoid => {
            let start = guess_sinusoid(&pts);
            fit_decaying_sinusoid(&pts, &start, &SinusoidMask::free())?
        }
        FitModel::Exponential => {
            let span = pts.iter().map(|p| p.t).fold(0.0, f64::max).max(1e-3);
            fit_exponential_decay(&pts, [0.5, 0.5, span], [false; 3])?
        }
        FitModel::LogEcho => {
            let early_pts: Vec<FitPoint> = pts.iter().copied().filter(|p| p.t <= early).collect();
            let phase = fit_log_phase(&early_pts, n_osc)?;
            fit_log_echo(&pts, phase.get("n_osc"), phase.get("phi"))?
        }
    })
}

fn report(dir: &Path) -> Result<()> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    println!(
        "{} (seed {}, {} shots/point, {} points, {} loads, {} rearrangements)",
        manifest.kind,
        manifest.seed,
        manifest.shots_per_point,
        manifest.points.len(),
        manifest.loads,
        manifest.rearrangements
    );
    println!("config sha256 {}", manifest.config_sha256);
    for f in &manifest.files {
        println!("  {:<28} {:>10} bytes  {}", f.name, f.bytes, &f.sha256[..16]);
    }
    let fit_path = dir.join(format!("{}_fit.json", manifest.kind));
    if let Ok(text) = fs::read_to_string(&fit_path) {
        let fits: std::collections::BTreeMap<String, FitResult> = serde_json::from_str(&text)?;
        for (name, fit) in &fits {
            let params: Vec<String> = fit
                .params
                .iter()
                .filter(|(k, _)| !fit.is_fixed(k))
                .map(|(k, v)| format!("{k}={v:.6} ± {:.2e}", fit.sigmas[k]))
                .collect();
            println!("  fit {name}: {}", params.join(", "));
        }
    }
    for (name, err) in &manifest.fit_errors {
        println!("  fit {name} failed: {err}");
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Wgs {
            rows,
            cols,
            spacing,
            grid,
            iterations,
        } => {
            let targets = TargetSpots::grid(*rows, *cols, *spacing, *grid)?;
            let seed = SeedSpec::new(cli.seed.unwrap_or_default());
            let (mask, report) = wgs_phase(&targets, *grid, *iterations, &seed)?;
            let mut bytes = Vec::new();
            mask.write_to(&mut bytes)?;
            write(&cli.out.join("phase_mask.phmk"), bytes)?;
            write(&cli.out.join("wgs_report.json"), serde_json::to_vec_pretty(&report)?)?;
            println!(
                "uniformity {:.4}, efficiency {:.4}",
                report.uniformity, report.efficiency
            );
        }
        Command::Load => {
            let cfg = load_config(cli, None)?;
            let array = cfg.trap_array()?;
            let occ = sample_loading(&array, cfg.loading, &SeedSpec::new(cfg.seed).derive("load", &[0]))?;
            write(&cli.out.join("occupancy.txt"), occ.to_string())?;
            println!("{} atoms in {} sites", occ.count(), array.len());
        }
        Command::Plan { occupancy } => {
            let cfg = load_config(cli, None)?;
            let array = cfg.trap_array()?;
            let reg = cfg.register_spec(&array)?;
            let occ: Occupancy = fs::read_to_string(occupancy)?.parse()?;
            let plan = plan_moves(&array, &occ, &reg)?;
            let mut bytes = Vec::new();
            plan.write_csv(&array, &mut bytes)?;
            write(&cli.out.join("moves.csv"), bytes)?;
            println!("{} moves ({} parking)", plan.len(), plan.parking_moves());
        }
        Command::Exec { occupancy, plan } => {
            let cfg = load_config(cli, None)?;
            let array = cfg.trap_array()?;
            let occ: Occupancy = fs::read_to_string(occupancy)?.parse()?;
            let plan = MovePlan::read_csv(&array, fs::File::open(plan)?)?;
            let violations = validate_plan(&array, &occ, &plan);
            if !violations.is_empty() {
                return Err(Error::Config(format!("plan is invalid: {violations:?}")));
            }
            let (after, log) = execute_plan(&array, &occ, &plan, &cfg.transport, &SeedSpec::new(cfg.seed));
            write(&cli.out.join("occupancy_after.txt"), after.to_string())?;
            write(&cli.out.join("move_log.json"), serde_json::to_vec_pretty(&log)?)?;
            println!("{} atoms after execution, {} lost", after.count(), log.losses());
        }
        Command::Run { kind, timing } => {
            let cfg = load_config(cli, Some(*kind))?;
            let start = Instant::now();
            let out = run_experiment(&cfg)?;
            let elapsed = timing.then(|| start.elapsed().as_secs_f64());
            let manifest = write_outputs(&out, &cli.out, elapsed)?;
            for f in &manifest.files {
                println!("wrote {}", cli.out.join(&f.name).display());
            }
            println!("wrote {}", cli.out.join("manifest.json").display());
        }
        Command::Fit {
            input,
            model,
            group,
            n_osc,
            early,
        } => {
            let fit = fit_file(input, *model, group, *n_osc, *early)?;
            let text = serde_json::to_string_pretty(&fit)?;
            write(&cli.out.join("fit.json"), format!("{text}\n"))?;
        }
        Command::Report => report(&cli.out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
