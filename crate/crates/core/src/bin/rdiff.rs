//! `rdiff`: run, validate and inspect decentralized diffusion experiments.

use clap::{Args, Parser, Subcommand};
use riemann_diffusion::curvature::compute_constants;
use riemann_diffusion::exec::{configure_threads, Exec};
use riemann_diffusion::runner::{paper_preset, prepare, preset_names, run_experiment, ExperimentConfig, RunnerError};
use riemann_diffusion::suites::{geometry_suite, lemma_suites};
use riemann_diffusion::Geometry;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rdiff", version, about = "Decentralized stochastic Riemannian diffusion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace CSVs and summary.json.
    Run(Source),
    /// Parse a config, build graph and problem, and check every assumption.
    Validate(Source),
    /// Print geometry and theorem constants for a config.
    Constants(Source),
    /// Run the geometry and comparison-inequality certification suites.
    Lemmas {
        #[command(flatten)]
        source: Source,
        /// Random triples per inequality.
        #[arg(long, default_value_t = 10_000)]
        triples: usize,
        /// Random configurations per variance suite.
        #[arg(long, default_value_t = 500)]
        configs: usize,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct Source {
    /// Experiment config (JSON).
    #[arg(conflicts_with_all = ["config", "preset"])]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset, e.g. `er35/diminishing` or `desk/cycle10/fixed`.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated run seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    serial: bool,
}

impl Source {
    fn load(&self) -> Result<(ExperimentConfig, Exec), RunnerError> {
        let mut cfg = match (&self.path, &self.config, &self.preset) {
            (Some(p), _, _) | (None, Some(p), _) => ExperimentConfig::load(p)?,
            (None, None, Some(name)) => paper_preset(name)?,
            (None, None, None) => return Err(RunnerError::Config("give a config path or --preset".into())),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(k) = self.record_every {
            cfg.record_every = k;
        }
        cfg.check()?;
        if let Some(t) = self.threads {
            configure_threads(t);
        }
        Ok((cfg, if self.serial { Exec::Serial } else { Exec::Parallel }))
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, RunnerError> {
    match cli.command {
        Command::Presets => {
            for n in preset_names() {
                println!("{n}");
            }
        }
        Command::Run(src) => {
            let (cfg, exec) = src.load()?;
            let out = run_experiment(&cfg, exec)?;
            let s = &out.summary;
            println!(
                "{} on {} ({} seeds, T = {}): final consensus {:.3e}, final msd {}",
                s.algorithm,
                s.graph,
                s.seeds.len(),
                s.horizon,
                s.mean_final_consensus,
                s.mean_final_msd_db.map(|v| format!("{v:.2} dB")).unwrap_or_else(|| "n/a".into())
            );
            if let Some(g) = s.mean_ergodic_gap {
                println!("ergodic gap {g:.3e} (bound {:.3e})", s.gap_bound_at_horizon.unwrap_or(f64::NAN));
            }
            let viol: usize = s.seeds.iter().map(|x| x.domain_violations).sum();
            if viol > 0 {
                eprintln!("warning: {viol} domain violations");
            }
            match &cfg.output_dir {
                Some(d) => println!("wrote {}", d.display()),
                None => println!("{}", serde_json::to_string_pretty(s).expect("summary serializes")),
            }
        }
        Command::Validate(src) => {
            let (cfg, _) = src.load()?;
            let p = prepare(&cfg)?;
            println!("config ok");
            println!("  manifold {} with D = {}", cfg.manifold, cfg.domain_diameter);
            println!(
                "  graph {}: n = {}, edges = {}, sigma2(W) = {:.6}",
                cfg.graph_label(),
                p.graph.n(),
                p.graph.num_edges(),
                p.mixing.sigma2()
            );
            println!(
                "  gradient bounds: delta = {:.4e}, sigma = {:.4e}, G = {:.4e}",
                p.bounds.delta_hat, p.bounds.sigma_hat, p.bounds.g
            );
            println!("  steps: eta = {}, s = {}, bounds certified: {}", p.eta, p.s, p.bounds_certified());
        }
        Command::Constants(src) => {
            let (cfg, _) = src.load()?;
            let p = prepare(&cfg)?;
            let g = &p.geometry_constants;
            let t = &p.theory;
            println!("C1 = {}\nC2 = {}\nC3 = {}\nC4 = {}", g.c1, g.c2, g.c3, g.c4);
            println!("K_min = {}\nK_max = {}\nD = {}", g.k_min, g.k_max, g.diameter);
            println!("sigma2(W) = {}", t.sigma2_w);
            println!("xi = {}\nC(xi) = {}\nB = {}\nrho1 = {}\nrho2 = {}", t.xi, t.c_of_xi, t.b, t.rho1, t.rho2);
            println!("s = {}\neta0 = {}", t.s, t.eta0);
        }
        Command::Lemmas { source, triples, configs } => {
            let (cfg, exec) = source.load()?;
            let m = Geometry::new(cfg.manifold)?;
            let spec = m.spec(cfg.domain_diameter)?;
            let consts = compute_constants(&spec)?;
            let n = prepare(&cfg).map(|p| p.graph.n()).unwrap_or(10).max(3);
            let mut ok = true;
            let reports = geometry_suite(&m, 1000, cfg.data_seed, exec)
                .into_iter()
                .chain(lemma_suites(&spec, &consts, triples, configs, n, cfg.data_seed, exec));
            for r in reports {
                ok &= r.passed();
                println!("{} {r}", if r.passed() { "PASS" } else { "FAIL" });
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
