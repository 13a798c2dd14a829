//! Command-line harness: identification data, model fitting, closed-loop
//! scenario runs, comparisons and sweeps.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ivfc_core::harness::config::{
    ControllerKind, DisturbanceSpec, ScenarioConfig, ScenarioMode,
};
use ivfc_core::harness::data::generate_ident_data;
use ivfc_core::harness::identify::{identify_from_data, IdentResult};
use ivfc_core::harness::report::compare_report;
use ivfc_core::harness::scenario::{run_scenario, RunMetrics};
use ivfc_core::harness::sweep::{run_sweep, SweepConfig};

#[derive(Parser)]
#[command(
    name = "ivfc",
    version,
    about = "Interval fuzzy model identification and quadrotor sliding-mode control experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fly the open-loop excitation and write the identification CSVs.
    GenerateData {
        /// Scenario TOML supplying plant and identification settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the identification seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit type-1 and interval models and report validation RMSEs.
    Identify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for models.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one closed-loop scenario and write its log and metrics.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Controller variant: t1fc, ivfc or exact.
        #[arg(long)]
        controller: Option<String>,
        /// Disturbance spec: none, `param:d_jr=0.2,d_i=0,start=12,end=14`
        /// or `angle:d_phi=0.25,phi_start=8,phi_end=8.5,d_theta=0.25,theta_start=9,theta_end=9.5`.
        #[arg(long)]
        disturbance: Option<String>,
        /// Scenario mode: attitude or position.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reuse identified models from a previous `identify` run.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render a comparison report from metrics JSON files.
    Compare {
        /// Metrics files produced by `simulate` or `sweep`.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
    /// Run a controller x disturbance x seed grid and write a report.
    Sweep {
        /// Sweep TOML; defaults to the interval-versus-type-1 pair on the
        /// nominal attitude scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_scenario(config: Option<&Path>) -> Result<ScenarioConfig> {
    Ok(match config {
        Some(path) => ScenarioConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ScenarioConfig::default(),
    })
}

fn parse_mode(s: &str) -> Result<ScenarioMode> {
    match s {
        "attitude" => Ok(ScenarioMode::Attitude),
        "position" => Ok(ScenarioMode::Position),
        other => bail!("unknown mode `{other}` (expected attitude or position)"),
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenerateData { config, seed, out } => {
            let mut cfg = load_scenario(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.ident.seed = seed;
            }
            let data = generate_ident_data(&cfg.plant, &cfg.ident)?;
            data.save_dir(&out)?;
            let names: Vec<&str> = data.channels().iter().map(|c| c.name.as_str()).collect();
            println!(
                "{}",
                serde_json::json!({
                    "dir": out,
                    "channels": names,
                    "samples": data.f_phi.len(),
                    "seed": cfg.ident.seed,
                })
            );
        }
        Cmd::Identify { config, seed, out } => {
            let mut cfg = load_scenario(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.ident.seed = seed;
            }
            let data = generate_ident_data(&cfg.plant, &cfg.ident)?;
            let result = identify_from_data(&data, &cfg.ident)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("models.json");
            result.save(&path)?;
            print!("{}", result.table_markdown());
            eprintln!("wrote {}", path.display());
        }
        Cmd::Simulate {
            config,
            controller,
            disturbance,
            mode,
            seed,
            models,
            out,
        } => {
            let mut cfg = load_scenario(config.as_deref())?;
            if let Some(c) = controller {
                cfg.controller = ControllerKind::from_str(&c)?;
            }
            if let Some(d) = disturbance {
                cfg.disturbance = DisturbanceSpec::from_str(&d)?;
            }
            if let Some(m) = mode {
                cfg.mode = parse_mode(&m)?;
            }
            if let Some(seed) = seed {
                cfg.ident.seed = seed;
            }
            cfg.validate()?;
            let fitted = match (&models, cfg.controller) {
                (_, ControllerKind::Exact) => None,
                (Some(path), _) => Some(
                    IdentResult::load(path)
                        .with_context(|| format!("loading {}", path.display()))?,
                ),
                (None, _) => {
                    let data = generate_ident_data(&cfg.plant, &cfg.ident)?;
                    Some(identify_from_data(&data, &cfg.ident)?)
                }
            };
            let (log, metrics) = run_scenario(&cfg, fitted.as_ref())?;
            std::fs::create_dir_all(&out)?;
            let label = cfg.run_label();
            let log_path = out.join(format!("{label}.csv"));
            let metrics_path = out.join(format!("{label}.metrics.json"));
            log.write_csv(&log_path)?;
            metrics.save(&metrics_path)?;
            println!("{}", serde_json::to_string(&metrics)?);
            eprintln!("wrote {} and {}", log_path.display(), metrics_path.display());
        }
        Cmd::Compare { metrics } => {
            let runs: Vec<RunMetrics> = metrics
                .iter()
                .map(|p| RunMetrics::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<_>>()?;
            print!("{}", compare_report(&runs));
        }
        Cmd::Sweep { config, out } => {
            let cfg = match config {
                Some(path) => SweepConfig::load(&path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => SweepConfig::default(),
            };
            let runs = run_sweep(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut all_metrics = Vec::with_capacity(runs.len());
            for run in &runs {
                let label = &run.metrics.label;
                run.log.write_csv(&out.join(format!("{label}.csv")))?;
                run.metrics.save(&out.join(format!("{label}.metrics.json")))?;
                all_metrics.push(run.metrics.clone());
            }
            let report = compare_report(&all_metrics);
            std::fs::write(out.join("report.md"), &report)?;
            print!("{report}");
            eprintln!("wrote {} runs into {}", runs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run() {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
            std::process::ExitCode::FAILURE
        }
    }
}
