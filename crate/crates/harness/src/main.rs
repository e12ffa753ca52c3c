use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actmap_harness::config::RunConfig;
use actmap_harness::manifest::RunManifest;
use actmap_harness::{plots, run, sweep, timing, HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actmap", version, about = "Train and evaluate action-mapping agents")]
struct Cli {
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omitted sections use the preset defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set agent.actor_lr=1e-4`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p, &self.overrides),
            None => RunConfig::from_toml("", &self.overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration.
    Config(ConfigArgs),
    /// Pretrain feasibility policies only.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain when needed, then train every seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Take the configuration from an existing manifest.
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
        #[arg(long, required_unless_present = "resume")]
        out: Option<PathBuf>,
        /// Continue an interrupted run directory.
        #[arg(long, conflicts_with_all = ["out", "manifest", "config"])]
        resume: Option<PathBuf>,
    },
    /// Roll out trained policies without learning.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Use the mean action instead of sampling.
        #[arg(long)]
        deterministic: bool,
    },
    /// Per-decision latency of base, action mapping and the wrappers.
    Timing {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Use the trained networks of this run directory.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        decisions: usize,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Path feasibility agreement across spline sample counts.
    SSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = sweep::DEFAULT_S)]
        s: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also pretrain a feasibility policy per S for this many steps.
        #[arg(long)]
        train_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median and min/max bands of return and violation rate per run.
    ExportPlots {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Bin width in environment steps.
        #[arg(long, default_value_t = 1000)]
        bin: usize,
    },
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let verbose = !cli.quiet;
    match cli.command {
        Command::Config(c) => print!("{}", c.load()?.to_toml()),
        Command::Pretrain { cfg, out } => {
            for p in run::pretrain_run(&cfg.load()?, &out, verbose)? {
                println!("{}", p.display());
            }
        }
        Command::Train { cfg, manifest, out, resume } => {
            let completion = match resume {
                Some(dir) => run::resume(&dir, verbose)?,
                None => {
                    let config = match manifest {
                        Some(m) => RunManifest::read(&m)?.config,
                        None => cfg.load()?,
                    };
                    run::run(&config, out.as_deref().expect("clap requires --out"), verbose)?
                }
            };
            write_json(None, &completion)?;
        }
        Command::Eval { run: dir, episodes, deterministic } => {
            for (seed, eps) in run::evaluate(&dir, episodes, deterministic)? {
                let n = eps.len().max(1) as f64;
                let ret = eps.iter().map(|e| e.ret).sum::<f64>() / n;
                let vio = eps.iter().filter(|e| e.violation).count() as f64 / n;
                println!("seed {seed}: mean return {ret:.4}, violation rate {vio:.4} over {} episodes", eps.len());
            }
        }
        Command::Timing { cfg, run: dir, decisions, out } => {
            let rows = timing::timing(&cfg.load()?, decisions, dir.as_deref())?;
            for r in &rows {
                eprintln!("{:<16} {:>10.4} ms  x{:.2}", r.method, r.mean_ms, r.ratio_to_base);
            }
            write_json(out.as_deref(), &rows)?;
        }
        Command::SSweep { cfg, s, pairs, seed, train_steps, out } => {
            let config = cfg.load()?;
            let train = train_steps.map(|steps| actmap::feaspolicy::FeasTrainConfig { steps, ..config.feasibility.to_train_config() });
            let report = sweep::s_sweep(&run::path_config(&config), &s, pairs, seed, train.as_ref())?;
            write_json(out.as_deref(), &report)?;
        }
        Command::ExportPlots { runs, out, bin } => {
            for p in plots::export_plots(&runs, &out, bin)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::Runtime(inner) = &e {
                for cause in inner.chain().skip(1) {
                    eprintln!("  caused by: {cause}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
