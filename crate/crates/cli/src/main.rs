use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stealthlab::harness::{
    default_metrics, export_reports_csv, export_trace_csv, run_episodes, Execution, MetricReport, Mode,
    ScenarioConfig, Simulation,
};
use stealthlab::Error;

#[derive(Parser)]
#[command(name = "stealthlab", version, about = "Stealthy sensor attack and gain-scaling defence co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace and report.
    Run {
        #[command(flatten)]
        common: Common,
        /// u, po or d; overrides the config.
        #[arg(long)]
        mode: Option<Mode>,
        /// Output directory for trace_<mode>.csv and report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print detector threshold, scaling quantile and attacker budget.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Time the attacker through the attack window and print step-halving diagnostics.
    BenchAttack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run all three modes and print a metric table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Optional output directory for the three traces and report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn print_table(reports: &[MetricReport]) {
    println!(
        "{:<4} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10} {:>7} {:>9} {:>8} {:>8}",
        "mode", "seed", "devmax_nom", "devrms_nom", "devmax_atk", "devrms_atk", "effort", "alarms", "max_w/tau", "f_min",
        "f_mean"
    );
    for r in reports {
        println!(
            "{:<4} {:>6} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>10.4} {:>7} {:>9.4} {:>8.4} {:>8.4}",
            r.mode.label(),
            r.seed,
            r.devmax_nominal,
            r.devrms_nominal,
            r.devmax_attack,
            r.devrms_attack,
            r.mean_effort,
            r.alarm_count,
            r.max_w_ratio,
            r.f_min,
            r.f_mean
        );
    }
}

fn run_modes(cfg: &ScenarioConfig, modes: &[Mode], out: Option<&Path>) -> Result<Vec<MetricReport>, Error> {
    let cfgs: Vec<_> = modes.iter().map(|&m| cfg.with_mode(m)).collect();
    let mut reports = Vec::with_capacity(cfgs.len());
    if let Some(dir) = out {
        create_dir(dir)?;
    }
    for tr in run_episodes(&cfgs, Execution::default()) {
        let tr = tr?;
        if let Some(dir) = out {
            export_trace_csv(&tr, cfg.joints(), &dir.join(format!("trace_{}.csv", tr.mode.label())))?;
        }
        reports.push(default_metrics(&tr)?);
    }
    if let Some(dir) = out {
        export_reports_csv(&reports, &dir.join("report.csv"))?;
    }
    Ok(reports)
}

fn bench_attack(cfg: &ScenarioConfig) -> Result<(), Error> {
    if !cfg.attack_enabled {
        return Err(Error::Config("bench-attack needs attack_enabled = true".into()));
    }
    let mut sim = Simulation::new(cfg)?;
    let window = cfg.attack_window();
    let mut times = Vec::with_capacity(window.len());
    let (mut fallbacks, mut budget_max) = (0usize, 0.0_f64);
    let mut richardson = Vec::new();
    while !sim.finished() && sim.step_index() < window.end {
        let in_window = window.contains(&sim.step_index());
        let t0 = Instant::now();
        let rec = sim.step()?;
        if in_window {
            times.push(t0.elapsed().as_secs_f64() * 1e6);
            fallbacks += usize::from(rec.attack_fallback);
            budget_max = budget_max.max(rec.attack_budget_used);
        }
        if rec.richardson.is_finite() {
            richardson.push((rec.k, rec.richardson));
        }
    }
    times.sort_by(f64::total_cmp);
    let n = times.len().max(1);
    let mean = times.iter().sum::<f64>() / n as f64;
    let pct = |q: f64| times.get(((times.len() as f64 - 1.0) * q).round() as usize).copied().unwrap_or(f64::NAN);
    println!("mode {} seed {} attacked steps {}", cfg.mode.label(), cfg.seed, times.len());
    println!(
        "step time (us): mean {mean:.1} median {:.1} p99 {:.1} max {:.1}",
        pct(0.5),
        pct(0.99),
        pct(1.0)
    );
    println!("max budget used {budget_max:.6e} (tau' {:.6e}), fallbacks {fallbacks}", sim.calibration().tau_prime);
    println!("step-halving relative change of the sensitivity:");
    for (k, r) in richardson {
        println!("  k {k:>6}: {r:.3e}");
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, mode, out } => {
            let mut cfg = load(&common)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let reports = run_modes(&cfg, &[cfg.mode], out.as_deref())?;
            print_table(&reports);
        }
        Command::Calibrate { common } => {
            let cfg = load(&common)?;
            let sim = Simulation::new(&cfg)?;
            let c = sim.calibration();
            let line = json!({
                "alpha": c.alpha,
                "tau": c.tau,
                "z_x": c.z_x,
                "tau_prime": c.tau_prime,
                "z_scale": c.z_scale,
                "kp": c.kp,
                "kd": c.kd,
            });
            println!("{line}");
        }
        Command::BenchAttack { common, mode } => {
            let mut cfg = load(&common)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            bench_attack(&cfg)?;
        }
        Command::Compare { common, out } => {
            let cfg = load(&common)?;
            let reports = run_modes(&cfg, &Mode::ALL, out.as_deref())?;
            print_table(&reports);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
