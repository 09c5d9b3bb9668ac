use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tvspline::experiments::{
    self, convergence_csv, profile_csv, write_files_atomically, ExperimentConfig, ExperimentKind, SolverKind,
};
use tvspline::Error;

#[derive(Parser, Debug)]
#[command(name = "tvspline", version, about = "TV-regularized periodic spline reconstruction from Fourier samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reconstruct one random spline from noiseless (or noisy) samples.
    Reconstruct(Flags),
    /// Monte-Carlo study of the error against the grid size.
    Convergence(Flags),
    /// Noisy reconstruction compared with the truncated Fourier series.
    NoisyDemo(Flags),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SolverArg {
    Admm,
    Fw,
}

#[derive(Args, Debug)]
struct Flags {
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Grid size, or a comma-separated ladder for `convergence`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    knots: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

const DEFAULT_LADDER: [usize; 6] = [16, 32, 64, 128, 256, 512];

fn build_config(kind: ExperimentKind, f: Flags) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let cfg: ExperimentConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg
        }
        None => {
            let mut cfg = ExperimentConfig::default();
            if kind == ExperimentKind::Convergence {
                cfg.grid_points = DEFAULT_LADDER.to_vec();
            }
            cfg
        }
    };
    cfg.experiment = kind;
    if let Some(v) = f.order {
        cfg.order = v;
    }
    if let Some(v) = f.cutoff {
        cfg.cutoff = v;
    }
    if let Some(v) = f.grid {
        cfg.grid_points = v;
    }
    if let Some(v) = f.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = f.sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = f.knots {
        cfg.n_knots = v;
    }
    if let Some(v) = f.trials {
        cfg.n_trials = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.solver {
        cfg.solver = match v {
            SolverArg::Admm => SolverKind::Admm,
            SolverArg::Fw => SolverKind::FrankWolfe,
        };
    }
    if let Some(v) = f.out_dir {
        cfg.out_dir = v;
    }
    if kind != ExperimentKind::Convergence && cfg.grid_points.len() != 1 {
        return Err(Error::Config(format!("{kind:?} takes a single grid size")));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Ok(true) when every solve converged.
fn run(cfg: &ExperimentConfig) -> Result<bool, Error> {
    match cfg.experiment {
        ExperimentKind::Reconstruct | ExperimentKind::NoisyDemo => {
            let r = experiments::run_single(cfg)?;
            let rec = &r.reconstruction;
            let summary = json!({
                "config": cfg,
                "reference": "ground_truth",
                "grid_points": cfg.grid_points[0],
                "raw_knots": rec.raw_knots,
                "merged_knots": rec.merged.len(),
                "merged_centroids": rec.merged.iter().map(|c| c.centroid).collect::<Vec<_>>(),
                "ground_truth_knots": r.ground_truth.knots(),
                "objective": rec.objective,
                "solver_iterations": rec.iterations,
                "converged": rec.converged,
                "linf_error": r.linf_error,
                "lowpass_linf_error": r.lowpass_linf_error,
                "wall_time_seconds": r.wall_time_seconds,
            });
            let summary = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))? + "\n";
            write_files_atomically(
                &cfg.out_dir,
                &[("summary.json", summary), ("profile.csv", profile_csv(&r, cfg.order))],
            )?;
            println!(
                "raw knots {} merged {} linf {:.6e} lowpass {:.6e}",
                rec.raw_knots,
                rec.merged.len(),
                r.linf_error,
                r.lowpass_linf_error
            );
            Ok(rec.converged)
        }
        ExperimentKind::Convergence => {
            let report = experiments::convergence_study(cfg)?;
            let summary = json!({
                "config": cfg,
                "reference": "ground_truth",
                "rows": report.rows,
                "slope": report.fit.slope,
                "slope_all_points": report.fit.slope_all,
                "excluded_smallest_grid": report.fit.excluded_smallest,
                "n_failed": report.n_failed,
                "trials": report.records,
            });
            let summary = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))? + "\n";
            write_files_atomically(
                &cfg.out_dir,
                &[("summary.json", summary), ("convergence.csv", convergence_csv(&report))],
            )?;
            println!("slope {:.4} ({} failed solves)", report.fit.slope, report.n_failed);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match cli.command {
        Command::Reconstruct(f) => (ExperimentKind::Reconstruct, f),
        Command::Convergence(f) => (ExperimentKind::Convergence, f),
        Command::NoisyDemo(f) => (ExperimentKind::NoisyDemo, f),
    };
    let cfg = match build_config(kind, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: solver did not converge");
            ExitCode::from(3)
        }
        Err(Error::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
