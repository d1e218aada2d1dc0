//! The `cvmp` command line: simulate datasets, fit the three samplers,
//! score results, and reproduce the simulation tables.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvmp::{Assignment, Error as CoreError, SamplerConfig};
use cvmp_cli::run::{self, Model, SimulateMode};

#[derive(Parser)]
#[command(name = "cvmp", about = "Bayesian activation mapping for complex-valued fMRI")]
struct Cli {
    /// Worker threads for parcel-parallel sampling (0 = all cores).
    #[arg(long, global = true, env = "CVMP_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SamplerArgs {
    /// Sampling model.
    #[arg(long, env = "CVMP_MODEL", default_value = "cvmp")]
    model: Model,

    /// Number of parcels G.
    #[arg(long, env = "CVMP_PARCELS", default_value_t = 16)]
    parcels: usize,

    /// Total MCMC iterations.
    #[arg(long, env = "CVMP_ITERS", default_value_t = 1000)]
    iters: usize,

    /// Burn-in iterations discarded from the summaries.
    #[arg(long, env = "CVMP_BURNIN", default_value_t = 200)]
    burnin: usize,

    /// RNG seed.
    #[arg(long, env = "CVMP_SEED", default_value_t = 0)]
    seed: u64,

    /// Spike-and-slab prior location Φ⁻¹ offset for λ (default per model).
    #[arg(long, env = "CVMP_PSI_LAMBDA")]
    psi_lambda: Option<f64>,

    /// Prior offset for ω (cvmp only; default per model).
    #[arg(long, env = "CVMP_PSI_OMEGA")]
    psi_omega: Option<f64>,

    /// Posterior probability cut for calling a voxel active.
    #[arg(long, env = "CVMP_THRESHOLD")]
    threshold: Option<f64>,

    /// Random-walk step size of the phase update.
    #[arg(long, env = "CVMP_MH_STEP")]
    mh_step: Option<f64>,

    /// Spatial eigenvectors per parcel (default scales with parcel size).
    #[arg(long, env = "CVMP_Q")]
    q: Option<usize>,
}

impl SamplerArgs {
    fn config(&self) -> SamplerConfig {
        let mut cfg = self.model.default_config();
        cfg.n_iter = self.iters;
        cfg.burn_in = self.burnin;
        cfg.seed = self.seed;
        if let Some(v) = self.psi_lambda {
            cfg.psi_lambda = v;
        }
        if let Some(v) = self.psi_omega {
            cfg.psi_omega = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.mh_step {
            cfg.mh_step = v;
        }
        if self.q.is_some() {
            cfg.q_override = self.q;
        }
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic dataset directories.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,

        /// Number of random Table-2 truth maps; omit for the fixed
        /// single-simulation map.
        #[arg(long)]
        random_maps: Option<usize>,

        /// Signal assignment: mag-only, phase-only, both, or all.
        #[arg(long, default_value = "both")]
        assignment: String,

        #[arg(long, env = "CVMP_SEED", default_value_t = 0)]
        seed: u64,
    },

    /// Fit one model to a dataset directory.
    Fit {
        /// Dataset directory produced by `simulate`.
        #[arg(long)]
        data: PathBuf,

        /// Results directory.
        #[arg(long)]
        out: PathBuf,

        #[command(flatten)]
        sampler: SamplerArgs,
    },

    /// Score a results directory against a dataset's truth maps.
    Metrics {
        /// Results directory produced by `fit`.
        #[arg(long)]
        results: PathBuf,

        /// Dataset directory holding the truth maps.
        #[arg(long)]
        data: PathBuf,

        /// Report CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// End-to-end reproduction of a simulation table.
    Repro {
        /// Which table: table1 or table3-scaled.
        table: String,

        #[arg(long)]
        out: PathBuf,

        #[arg(long, env = "CVMP_SEED", default_value_t = 0)]
        seed: u64,

        /// Random maps per assignment for table3-scaled.
        #[arg(long, default_value_t = 10)]
        maps: usize,
    },
}

fn parse_assignments(s: &str) -> Result<Vec<Assignment>, String> {
    match s {
        "mag-only" => Ok(vec![Assignment::MagOnly]),
        "phase-only" => Ok(vec![Assignment::PhaseOnly]),
        "both" => Ok(vec![Assignment::Both]),
        "all" => Ok(vec![
            Assignment::MagOnly,
            Assignment::PhaseOnly,
            Assignment::Both,
        ]),
        other => Err(format!(
            "unknown assignment {:?} (expected mag-only, phase-only, both, all)",
            other
        )),
    }
}

/// 1 = configuration error, 2 = data error, 3 = numerical failure.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::InvalidArgument(_) | CoreError::RankDeficientDesign => 1,
            CoreError::NonFinite { .. }
            | CoreError::DegenerateVariance(_)
            | CoreError::Linalg(_)
            | CoreError::AucUndefined
            | CoreError::ZeroTruthVariance => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    let text = err.to_string();
    if text.contains("manifest") || text.contains(".csv") || text.contains("dataset") {
        2
    } else {
        1
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {}", e))?;
    }
    match cli.command {
        Command::Simulate {
            out,
            random_maps,
            assignment,
            seed,
        } => {
            let assignments = parse_assignments(&assignment).map_err(anyhow::Error::msg)?;
            let mode = match random_maps {
                Some(n) => SimulateMode::Random { n },
                None => SimulateMode::Single,
            };
            run::cmd_simulate(&out, mode, &assignments, seed)
        }
        Command::Fit { data, out, sampler } => {
            let cfg = sampler.config();
            cfg.validate()?;
            let dataset = cvmp_cli::io::read_dataset(&data)?;
            let summary = run::fit(&dataset, sampler.model, sampler.parcels, &cfg)?;
            run::write_fit_outputs(&out, sampler.model, &dataset.dims, &summary, cfg.threshold)
        }
        Command::Metrics { results, data, out } => {
            run::cmd_metrics(&results, &data, &out).map(|_| ())
        }
        Command::Repro {
            table,
            out,
            seed,
            maps,
        } => match table.as_str() {
            "table1" => run::repro_table1(&out, seed, None).map(|_| ()),
            "table3-scaled" => run::repro_table3_scaled(&out, seed, maps, None).map(|_| ()),
            other => anyhow::bail!("unknown table {:?} (expected table1 or table3-scaled)", other),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err);
            ExitCode::from(classify(&err))
        }
    }
}
