use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poweref::algo::Algorithm;
use poweref::harness::{
    compare, compare_csv, run_experiment, saddle_escape_trial, schedule_only, summary_path, write_file,
    CompressorKind, ExperimentConfig,
};
use poweref::parallel::{with_thread_cap, Exec};
use poweref::stationarity::Order;
use poweref::{Error, Result};

#[derive(Parser)]
#[command(name = "poweref", version, about = "Distributed compressed SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run(Overrides),
    /// Run several algorithms or configs on one problem and tabulate them.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Additional config files; each becomes a row.
        #[arg(long = "with")]
        with: Vec<PathBuf>,
        /// Comma-separated algorithms to compare against the base config.
        #[arg(long, value_delimiter = ',')]
        algos: Vec<Algorithm>,
    },
    /// Saddle-escape statistics on the quartic.
    Saddle {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
    },
    /// Print the parameter schedule as JSON.
    Schedule {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "first")]
        order: Order,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the seed list with one seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    compressor: Option<CompressorKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "T")]
    rounds: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heterogeneity: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

impl Overrides {
    fn apply(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(algo) = self.algo {
            cfg.algo = algo;
        }
        if let Some(c) = self.compressor {
            cfg.compressor = c;
        }
        cfg.k = self.k.or(cfg.k);
        cfg.p = self.p.or(cfg.p);
        cfg.eta = self.eta.or(cfg.eta);
        cfg.r = self.r.or(cfg.r);
        cfg.rounds = self.rounds.or(cfg.rounds);
        cfg.n = self.n.unwrap_or(cfg.n);
        cfg.d = self.d.unwrap_or(cfg.d);
        cfg.heterogeneity = self.heterogeneity.unwrap_or(cfg.heterogeneity);
        cfg.sigma = self.sigma.unwrap_or(cfg.sigma);
        Ok(cfg)
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serialize(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.apply()?;
            let runs = run_experiment(&cfg)?;
            println!("seed,final_f,final_grad_norm,uplink_bytes,downlink_bytes");
            for r in &runs {
                let s = &r.summary;
                println!(
                    "{},{},{},{},{}",
                    s.seed, s.final_f, s.final_grad_norm, s.uplink_bytes, s.downlink_bytes
                );
            }
            eprintln!("wrote {}", cfg.out_dir.display());
        }
        Command::Compare {
            overrides,
            with,
            algos,
        } => {
            let base = overrides.apply()?;
            let mut cfgs = vec![base.clone()];
            for path in &with {
                cfgs.push(ExperimentConfig::load(path)?);
            }
            for algo in algos {
                let mut c = base.clone();
                c.algo = algo;
                cfgs.push(c);
            }
            let rows = compare(&cfgs, Exec::default())?;
            let table = compare_csv(&rows);
            write_file(&summary_path(&base.out_dir), &table)?;
            print!("{table}");
        }
        Command::Saddle { overrides, offset } => {
            let cfg = overrides.apply()?;
            let stats = saddle_escape_trial(&cfg, offset, &cfg.seeds, Exec::default())?;
            println!("{}", json(&stats)?);
        }
        Command::Schedule { overrides, order } => {
            let mut cfg = overrides.apply()?;
            cfg.schedule = Some(order);
            println!("{}", json(&schedule_only(&cfg)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_thread_cap(move || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
