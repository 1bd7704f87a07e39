use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dualtraj::error::Result;
use dualtraj::scenario::{self, ScenarioConfig, Series};
use dualtraj::solver::{SolveMode, SolveStatus};
use dualtraj::validate;

#[derive(Parser)]
#[command(
    name = "dualtraj",
    version,
    about = "Minimum-time joint trajectories for a planar dual-arm cell"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the scenario's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of primal-dual iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Seed recorded with the run; also draws random initial tool angles.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Dual,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize from one tool angle and solve.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "dual")]
        mode: Mode,
        /// Initial tool angle; takes precedence over --seed.
        #[arg(long, allow_negative_numbers = true)]
        phi: Option<f64>,
    },
    /// Solve every initial angle in single-arm and dual-arm mode.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Check closed forms and derivatives against numerical references.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the scenario's desired path as a pose list.
    Path {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file.
        #[arg(long, default_value = "path.csv")]
        out: PathBuf,
    },
}

enum Outcome {
    Ok,
    NoFeasibleIterate,
}

fn load(config: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match config {
        Some(p) => ScenarioConfig::from_file(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn apply(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.iters {
        cfg.solver.max_iters = n;
    }
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve(common: &Common, mode: Mode, phi: Option<f64>) -> Result<Outcome> {
    let cfg = apply(common)?;
    let phi0 = match (phi, common.seed) {
        (Some(p), _) => p,
        (None, Some(seed)) => scenario::random_phi_inits(seed, 1)[0],
        (None, None) => cfg.phi_inits[0],
    };
    let mode = match mode {
        Mode::Single => SolveMode::Single,
        Mode::Dual => SolveMode::Dual,
    };
    let run = scenario::run_single(&cfg, phi0, mode)?;
    let dir = &cfg.output_dir;
    scenario::write_run(dir, &run)?;
    let errors = run.pointwise_errors();
    let svg = scenario::error_plot_svg(
        &format!("Pointwise error, {mode}-arm (phi0 = {phi0})"),
        &[Series {
            label: if mode == SolveMode::Dual {
                "dual-arm"
            } else {
                "single-arm"
            },
            color: "#1f77b4",
            s: run.problem.spec().grid().s(),
            values: &errors,
        }],
    );
    write(&dir.join("error.svg"), &svg)?;
    let m = run.metrics();
    println!(
        "{mode}-arm phi0={phi0}: t_f {:.4} s (initial {:.4} s), max error {:.3} mm, incumbent iteration {}",
        m.final_time,
        m.initial_final_time,
        m.error_max * 1e3,
        m.incumbent_iteration
    );
    println!("wrote {}", dir.display());
    Ok(match m.status {
        SolveStatus::Feasible => Outcome::Ok,
        SolveStatus::NoFeasibleIterate => {
            eprintln!(
                "warning: no iterate met the error tolerance; reporting the smallest-error iterate"
            );
            Outcome::NoFeasibleIterate
        }
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| dualtraj::error::Error::Io {
        path: path.into(),
        source: e,
    })
}

fn experiment(common: &Common) -> Result<Outcome> {
    let mut cfg = apply(common)?;
    if let Some(seed) = common.seed {
        cfg.phi_inits = scenario::random_phi_inits(seed, cfg.phi_inits.len());
    }
    let exp = scenario::run_experiment(&cfg)?;
    scenario::write_experiment(&cfg.output_dir, &exp)?;
    println!(
        "{:<6} {:<6} {:>8} {:>10} {:>10} {:>10}  status",
        "label", "mode", "phi0", "t_f [s]", "err [mm]", "time [s]"
    );
    for r in &exp.aggregate.rows {
        let f =
            |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |v| format!("{:.4}", v * scale));
        println!(
            "{:<6} {:<6} {:>8} {:>10} {:>10} {:>10}  {}",
            r.label,
            r.mode.to_string(),
            f(r.phi0, 1.0),
            f(r.final_time, 1.0),
            f(r.error_max, 1e3),
            f(r.runtime, 1.0),
            r.message.as_deref().unwrap_or(&r.status)
        );
    }
    println!("wrote {}", cfg.output_dir.display());
    let mut outcome = Outcome::Ok;
    for (_, _, r) in &exp.runs {
        match r {
            Ok(run) if run.report.status == SolveStatus::NoFeasibleIterate => {
                outcome = Outcome::NoFeasibleIterate
            }
            Err(e) => {
                eprintln!("warning: run failed: {e}");
            }
            _ => {}
        }
    }
    Ok(outcome)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Solve { common, mode, phi } => solve(&common, mode, phi),
        Command::Experiment { common } => experiment(&common),
        Command::Validate { seed } => {
            let checks = validate::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed()) {
                Ok(Outcome::Ok)
            } else {
                Err(dualtraj::error::Error::InvalidConfig(
                    "validation checks failed".into(),
                ))
            }
        }
        Command::Path { config, out } => {
            let cfg = load(&config)?;
            cfg.validate()?;
            scenario::write_path_file(&out, &cfg.path_spec()?)?;
            println!("wrote {}", out.display());
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NoFeasibleIterate) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(1)
        }
    }
}
