use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use scsparc::amp::SeMode;
use scsparc::design::{Field, OperatorKind};
use scsparc::harness::{
    progression_for_config, run_experiment, se_for_config, write_cs_csv, write_diagnostics_json, write_results_csv,
    ExperimentConfig, WORKERS_ENV,
};

#[derive(Parser)]
#[command(name = "scsparc", version, about = "Spatially coupled SPARC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run encode/channel/decode trials and write results.csv and diagnostics.json.
    #[command(after_help = format!("Worker threads: set {WORKERS_ENV} (default: all cores)."))]
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        se_mode: Option<SeModeArg>,
        #[arg(long, value_enum)]
        operator: Option<OperatorArg>,
        #[arg(long, value_enum)]
        field: Option<FieldArg>,
    },
    /// Print the state-evolution trajectory (t,c,psi,tau,nu); with --out, also write row CSVs.
    Se {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the decoding-progression report as JSON.
    Progression {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SeModeArg {
    Online,
    Offline,
    OnlineKnownSigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    Dense,
    Dft,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_path(path).with_context(|| format!("reading config {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            out,
            trials,
            seed,
            se_mode,
            operator,
            field,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(m) = se_mode {
                cfg.experiment.se_mode = match m {
                    SeModeArg::Online => SeMode::Online,
                    SeModeArg::Offline => SeMode::Offline,
                    SeModeArg::OnlineKnownSigma => SeMode::OnlineKnownSigma,
                };
            }
            if let Some(o) = operator {
                cfg.experiment.operator = match o {
                    OperatorArg::Dense => OperatorKind::Dense,
                    OperatorArg::Dft => OperatorKind::Dft,
                };
            }
            if let Some(f) = field {
                cfg.channel.field = match f {
                    FieldArg::Real => Field::Real,
                    FieldArg::Complex => Field::Complex,
                };
            }
            let result = run_experiment(&cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            if !result.points.is_empty() {
                let mut w = create(&out, "results.csv")?;
                write_results_csv(&result.records(), &mut w)?;
                w.flush()?;
            }
            if let Some(cs) = &result.cs {
                let mut w = create(&out, "cs.csv")?;
                write_cs_csv(cs, &mut w)?;
                w.flush()?;
            }
            let mut w = create(&out, "diagnostics.json")?;
            write_diagnostics_json(&result, &mut w)?;
            w.flush()?;
        }
        Command::Se { config, out } => {
            let cfg = load(&config)?;
            let runs = se_for_config(&cfg)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
                for (i, (_, traj)) in runs.iter().enumerate() {
                    let suffix = if runs.len() > 1 { format!("_{i}") } else { String::new() };
                    let mut w = create(dir, &format!("se_columns{suffix}.csv"))?;
                    traj.write_column_csv(&mut w)?;
                    w.flush()?;
                    let mut w = create(dir, &format!("se_rows{suffix}.csv"))?;
                    traj.write_row_csv(&mut w)?;
                    w.flush()?;
                }
            }
            let (_, first) = &runs[0];
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            first.write_column_csv(&mut lock)?;
            eprintln!(
                "stopped after {} iterations ({:?}), within bound: {:?}",
                first.iterations, first.stop_reason, first.within_t_bound
            );
        }
        Command::Progression { config } => {
            let cfg = load(&config)?;
            let reports: Vec<_> = progression_for_config(&cfg)?
                .into_iter()
                .map(|(point, report)| serde_json::json!({ "point": point, "report": report }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
    }
    Ok(())
}
