use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use lhua::harness::{
    self, emit_outputs, read_aggregate_csv, read_run_csv, run_ablation, sweep_k, PolicyCheckpoint, RunConfig,
    RunPaths, RunSummary, Variant,
};
use lhua::hindsight::write_audit;
use lhua::seed::{stream, Stream};

#[derive(Parser)]
#[command(name = "lhua", version, about = "Dialog policy learning with simulated and hindsight experience")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write its learning curve, plot, summary and checkpoint.
    Train {
        #[arg(long)]
        variant: Option<Variant>,
        /// JSON run configuration; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fixed-k LHU runs over several k values; writes an AUC table.
    SweepK {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Greedy evaluation of a saved policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        dialogs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Combine every run CSV in a directory into aggregate.csv and a plot.
    Aggregate {
        #[arg(long)]
        runs: PathBuf,
        /// Output directory; defaults to the runs directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an aggregate CSV as an SVG learning-curve plot.
    Plot {
        #[arg(long)]
        aggregate: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> lhua::Result<RunConfig> {
    match path {
        // An unreadable config file is a configuration problem, not a runtime one.
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            lhua::Error::Io { .. } => lhua::Error::Config(e.to_string()),
            e => e,
        }),
        None => Ok(RunConfig::default()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn train(config: RunConfig, out: &Path) -> anyhow::Result<()> {
    let paths = RunPaths::new(out);
    let run = run_ablation(config.clone())?;
    emit_outputs(std::slice::from_ref(&run.curve), &paths)?;
    let summary = RunSummary::of(&run.curve)?;
    write_json(&paths.summary(), &summary)?;
    PolicyCheckpoint::capture(&run.state, false).save(&paths.checkpoint())?;
    if config.audit {
        let path = paths.audit();
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_audit(BufWriter::new(f), &run.state.audit)?;
    }
    println!(
        "{} seed {}: {} episodes, AUC {:.4}, final eval success {:.3}, mean k {:.2}",
        summary.variant, summary.seed, summary.episodes, summary.auc, summary.final_eval_success_rate, summary.mean_k
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            variant,
            config,
            seed,
            episodes,
            out,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(v) = variant {
                c.variant = v;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(e) = episodes {
                c.episodes = e;
            }
            c.validate()?;
            train(c, &out)
        }
        Command::SweepK {
            values,
            config,
            seeds,
            episodes,
            out,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(e) = episodes {
                c.episodes = e;
            }
            c.validate()?;
            let values = values.unwrap_or_else(|| c.k_sweep.clone());
            let (rows, curves) = sweep_k(&c, &values, &seeds)?;
            for (i, k) in values.iter().enumerate() {
                let group = &curves[i * seeds.len()..(i + 1) * seeds.len()];
                emit_outputs(group, &RunPaths::new(out.join(format!("k{k}"))))?;
            }
            let paths = RunPaths::new(&out);
            let path = paths.sweep_csv();
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            harness::write_sweep_csv(f, &rows)?;
            for r in &rows {
                println!("k={:>3}  AUC {:.4} ± {:.4}  final SR {:.3}", r.k, r.auc_mean, r.auc_std, r.final_sr_mean);
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            dialogs,
            seed,
        } => {
            let cp = PolicyCheckpoint::load(&checkpoint)?;
            let env = cp.env()?;
            let agent = lhua::agent::QAgent::from_checkpoint(&cp.agent)?;
            let mut rng = stream(seed, Stream::Evaluation);
            let e = harness::evaluate_policy(&env, &agent, dialogs, &mut rng)?;
            println!(
                "{dialogs} dialogs: success rate {:.3}, average reward {:.2}, average turns {:.2}",
                e.success_rate, e.avg_reward, e.avg_turns
            );
            Ok(())
        }
        Command::Aggregate { runs, out } => {
            let files = RunPaths::new(&runs).find_run_csvs()?;
            if files.is_empty() {
                return Err(lhua::Error::Config(format!("no run_*.csv files in {}", runs.display())).into());
            }
            let mut curves = Vec::new();
            for f in &files {
                let file = File::open(f).with_context(|| format!("opening {}", f.display()))?;
                curves.push(read_run_csv(file)?);
            }
            let paths = RunPaths::new(out.unwrap_or(runs));
            // Per-run files are already in place; rewrite only the combined outputs.
            let rows = harness::aggregate_curves(&curves);
            let path = paths.aggregate_csv();
            std::fs::create_dir_all(&paths.dir)?;
            harness::write_aggregate_csv(File::create(&path)?, &rows)?;
            std::fs::write(paths.plot_svg(), harness::plot_svg(&rows))?;
            println!("aggregated {} runs into {}", curves.len(), path.display());
            Ok(())
        }
        Command::Plot { aggregate, out } => {
            let file = File::open(&aggregate).with_context(|| format!("opening {}", aggregate.display()))?;
            let rows = read_aggregate_csv(file)?;
            std::fs::write(&out, harness::plot_svg(&rows)).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<lhua::Error>().is_some_and(lhua::Error::is_config))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
