//! `chainflux`: run flux maps, optimization campaigns, dephasing sweeps,
//! steady-state reports and closed-form checks, writing CSV and JSON results.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chainflux::experiments::{self, Axis, Experiment, ExperimentConfig, ExperimentKind};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chainflux", version, about = "Steady-state flux experiments on open tight-binding chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flux over an (eps2, eps3) grid of a three-site chain.
    Fluxmap {
        #[command(flatten)]
        common: Common,
        /// Grid points per axis over [-1, 1].
        #[arg(long)]
        points: Option<usize>,
        /// Skip the optimizer overlay.
        #[arg(long)]
        no_overlay: bool,
    },
    /// Multi-start gradient ascent from hypergrid starts.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Flux versus local dephasing rate for a fixed (or freshly optimized) profile.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        /// Site energies eps_1..eps_N, comma separated; optimized when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        profile: Option<Vec<f64>>,
    },
    /// Steady state of one configuration.
    Steadystate {
        #[command(flatten)]
        common: Common,
        /// Site energies eps_1..eps_N, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        energies: Option<Vec<f64>>,
        /// Also write the Liouvillian and thermal rates.
        #[arg(long)]
        dump_operators: bool,
    },
    /// Closed-form three-site flux against the numeric solver.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Points of the eps2 grid over [-1, 1].
        #[arg(long)]
        points: Option<usize>,
    },
    /// List the named systems accepted by --preset.
    Presets,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named system, e.g. three-site-dephasing-nnn or thermal-n9-alpha3.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "chainflux-out")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => {
                ExperimentConfig::load(path, Some(kind)).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(name)) => experiments::preset(name, kind)?,
            (None, None) => bail!("either --config or --preset is required"),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        Ok(config)
    }
}

fn execute(common: &Common, config: ExperimentConfig) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    log::info!("running {} into {}", config.experiment.kind().label(), common.out.display());
    let bundle = pool.install(|| experiments::run(&config))?;
    bundle
        .write(&common.out)
        .with_context(|| format!("writing results to {}", common.out.display()))?;
    println!("{}", serde_json::to_string_pretty(&bundle.manifest.summary)?);
    Ok(())
}

fn square_map(points: usize) -> Experiment {
    Experiment::FluxMap {
        eps2: Axis::new(-1.0, 1.0, points),
        eps3: Axis::new(-1.0, 1.0, points),
        overlay: true,
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Fluxmap {
            common,
            points,
            no_overlay,
        } => {
            let mut config = common.load(ExperimentKind::FluxMap)?;
            if let Some(p) = points {
                config.experiment = square_map(p);
            }
            if let Experiment::FluxMap { overlay, .. } = &mut config.experiment {
                *overlay &= !no_overlay;
            }
            execute(&common, config)
        }
        Command::Optimize { common } => execute(&common, common.load(ExperimentKind::Optimize)?),
        Command::SweepGamma { common, profile } => {
            let mut config = common.load(ExperimentKind::GammaSweep)?;
            if let (Some(p), Experiment::GammaSweep { profile: slot, .. }) = (profile, &mut config.experiment) {
                *slot = Some(p);
            }
            execute(&common, config)
        }
        Command::Steadystate {
            common,
            energies,
            dump_operators,
        } => {
            let mut config = common.load(ExperimentKind::SteadyStateReport)?;
            if let Some(e) = energies {
                config.chain = config.chain.with_energies(e)?;
            }
            if let Experiment::SteadyStateReport { dump_operators: d } = &mut config.experiment {
                *d |= dump_operators;
            }
            execute(&common, config)
        }
        Command::OracleCheck { common, points } => {
            let mut config = common.load(ExperimentKind::OracleCheck)?;
            if let Some(p) = points {
                config.experiment = Experiment::OracleCheck {
                    eps2: Axis::new(-1.0, 1.0, p),
                };
            }
            execute(&common, config)
        }
        Command::Presets => {
            for name in experiments::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}
