//! Command-line harness: generate scenes, run configured episode batches,
//! benchmark the scoring kernels, and re-analyze trace directories.

use anyhow::Context;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use polo_core::config::RunConfig;
use polo_core::metrics::Summary;
use polo_core::runner::{cmd_analyze, cmd_bench, cmd_gen, cmd_run};
use polo_core::scenegen::GenParams;

#[derive(Parser)]
#[command(
    name = "polo",
    version,
    about = "Object-search sandbox: procedural scenes, scoring policies, batch runs and reports"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scenes and write them as text files.
    Gen {
        /// Seeds: a single `N`, a list `3,5,9`, an exclusive range `A..B`,
        /// or an inclusive range `A..=B`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: SeedList,
        /// Optional run config; its [scene] section supplies the generator
        /// parameters (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for scene_<seed>.txt files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured batch of episodes and write traces + reports.
    Run {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured policy name.
        #[arg(long)]
        policy: Option<String>,
        /// Override the configured episode count.
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory for the echoed config, traces and reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the scoring kernels on a mid-episode map snapshot.
    Bench {
        /// Run configuration (TOML); scene scale and score parameters come
        /// from here.
        #[arg(long)]
        config: PathBuf,
        /// Timing repetitions per kernel.
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Rebuild metrics, summary and curves from a directory of traces.
    Analyze {
        /// Directory containing ep_*.jsonl trace files.
        dir: PathBuf,
    },
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let parse_one = |t: &str| -> Result<u64, String> {
        t.trim().parse::<u64>().map_err(|_| format!("bad seed {t:?}"))
    };
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if a > b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(SeedList((a..=b).collect()));
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(SeedList((a..b).collect()));
    }
    let seeds: Result<Vec<u64>, String> = s.split(',').map(parse_one).collect();
    let seeds = seeds?;
    if seeds.is_empty() {
        return Err("no seeds given".to_string());
    }
    Ok(SeedList(seeds))
}

fn print_summary(s: &Summary) {
    println!("episodes               {}", s.episodes);
    println!("success rate           {:.4}", s.success_rate);
    println!("mean SPL               {:.4} (sd {:.4})", s.mean_spl, s.sd_spl);
    println!(
        "explored per meter     {:.4} m²/m (sd {:.4})",
        s.mean_explored_per_dist, s.sd_explored_per_dist
    );
    println!(
        "checked per meter      {:.4} m²/m (sd {:.4})",
        s.mean_checked_per_dist, s.sd_checked_per_dist
    );
    println!("mean explored area     {:.2} m²", s.mean_explored_area);
    println!("mean checked area      {:.2} m²", s.mean_checked_area);
    println!("mean path length       {:.2} m", s.mean_path_len);
    println!("mean steps             {:.1}", s.mean_steps);
    println!("episode errors         {}", s.errors);
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Gen { seeds, config, out } => {
            let params = match config {
                Some(path) => {
                    RunConfig::load(&path)
                        .with_context(|| format!("loading {}", path.display()))?
                        .scene
                }
                None => GenParams::default(),
            };
            let paths = cmd_gen(&seeds.0, &params, &out)?;
            for p in &paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Cmd::Run { config, policy, episodes, out } => {
            let mut cfg = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(name) = policy {
                cfg.policy.name = name;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            let report = cmd_run(&cfg, &out)?;
            print_summary(&report.summary);
            println!("reports written to {}", out.display());
            Ok(())
        }
        Cmd::Bench { config, reps } => {
            let cfg = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let report = cmd_bench(&cfg, reps)?;
            print!("{report}");
            Ok(())
        }
        Cmd::Analyze { dir } => {
            let report = cmd_analyze(&dir)?;
            print_summary(&report.summary);
            println!("reports written to {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
