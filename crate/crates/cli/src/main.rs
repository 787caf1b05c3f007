use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use quench_core::duality::{build_div_s1, duality_check, ghost_layout};
use quench_core::exact::exact_height;
use quench_core::lab::{run_acceptance, run_experiment, write_report, AcceptanceOptions, ExperimentConfig, THREADS_ENV};
use quench_core::mcmc::{height_box, run_height_chain, ChainConfig, HeightModel};
use quench_core::percolation::{dual_config, good_box, renorm_window, sample_bernoulli, Kind, PlanarBox};
use quench_core::renorm::{bound_chain, sample_instance, Layout};
use quench_core::rng;

#[derive(Parser)]
#[command(name = "quenchlab", version, about = "Disordered spin and height model laboratory")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Gff,
    Zxy,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the good-box probability under Bernoulli bond percolation.
    Perc {
        #[arg(long, default_value_t = 10)]
        l: usize,
        #[arg(long, default_value_t = 0.6)]
        p: f64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
    },
    /// Exact variance at the origin of a box with zero boundary.
    Exact {
        #[arg(long, value_enum, default_value = "zxy")]
        model: Model,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        l: usize,
    },
    /// Chain estimate of the same variance.
    Mcmc {
        #[arg(long, value_enum, default_value = "zxy")]
        model: Model,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        l: usize,
        #[arg(long, default_value_t = 20_000)]
        sweeps: usize,
    },
    /// Compare both sides of the spin-height duality on a ghost graph.
    Duality {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        l: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        beta1: f64,
        #[arg(long, default_value_t = 0.7)]
        beta2: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
    },
    /// Variance bound chain on a sampled coarse-graining instance.
    Renorm {
        #[arg(long, default_value_t = 0.85)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Run the scenario described by --config.
    Scan,
    /// Run the acceptance criteria.
    Accept {
        /// Restrict to these criterion ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Deliberately break the first criterion.
        #[arg(long)]
        tamper: bool,
    },
}

fn height_model(m: Model) -> HeightModel {
    match m {
        Model::Gff => HeightModel::Gff,
        Model::Zxy => HeightModel::Zxy,
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => std::env::var(THREADS_ENV).ok().and_then(|s| s.parse().ok()),
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::Perc { l, p, trials } => {
            let pb = PlanarBox::new(renorm_window(l, 0))?;
            let mut hits = 0u64;
            for s in 0..trials {
                let omega = sample_bernoulli(&pb.graph, Kind::Edge, p, rng::mix(seed, s))?;
                if good_box(&pb, &dual_config(&pb.graph, &omega)?, (0, 0), l)?.verdict {
                    hits += 1;
                }
            }
            println!("l={l} p={p} good={hits}/{trials} frequency={}", hits as f64 / trials as f64);
        }
        Command::Exact { model, beta, l } => {
            let spec = height_box(height_model(model), beta, l)?;
            let sol = exact_height(&spec, spec.graph.origin())?;
            println!("var={} log_z={}", sol.var.value, sol.log_z.value);
        }
        Command::Mcmc { model, beta, l, sweeps } => {
            let spec = height_box(height_model(model), beta, l)?;
            let cfg = ChainConfig::new(sweeps, sweeps / 10, seed);
            let e = run_height_chain(&spec, &cfg, spec.graph.origin())?;
            println!("var={} stderr={} n_eff={}", e.mean, e.stderr, e.n_eff);
        }
        Command::Duality { d, l, n, beta1, beta2, lambda } => {
            let lay = ghost_layout(d, l, n, beta1, beta2, lambda)?;
            let space = build_div_s1(&lay.graph)?;
            let r = duality_check(&lay.model(&space, lay.couplings(lay.all_open(), 1.0)))?;
            println!(
                "var_height={} spin={} diff={:e} log_z_height={} log_z_spin={} z_rel_err={:e}",
                r.var_height, r.spin_cos2, r.diff, r.log_z_height, r.log_z_spin, r.z_rel_err
            );
        }
        Command::Renorm { p, beta } => {
            let lay = Layout::micro_strip();
            let (pb, omega) = sample_instance(lay, p, seed)?;
            let chain = bound_chain(&pb, &omega, lay, beta)?;
            for (label, value, err) in &chain.values {
                println!("{label:<16} {value:.10} ± {err:.1e}");
            }
            println!("non_increasing={}", chain.non_increasing());
        }
        Command::Scan => {
            let path = cli.config.context("scan needs --config")?;
            let mut cfg = ExperimentConfig::load(&path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = cli.out {
                cfg.output = o;
            }
            for p in run_experiment(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Accept { only, tamper } => {
            let outcomes = run_acceptance(&AcceptanceOptions { tamper }, &only);
            for o in &outcomes {
                println!("{}", o.summary());
            }
            if let Some(dir) = cli.out {
                std::fs::create_dir_all(&dir)?;
                write_report(&dir.join("acceptance.csv"), &outcomes)?;
            }
            let failed = outcomes.iter().filter(|o| !o.pass()).count();
            if failed > 0 {
                bail!("{failed} criteria failed");
            }
        }
    }
    Ok(())
}
