use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use specplan_bench::{gen, live, report, run, BenchConfig};

#[derive(Parser)]
#[command(name = "specplan", version, about = "Speculative planning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic workload into a directory of trace files.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. --set workload.generator.n_tasks=50
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the policy matrix in simulation.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compute metrics tables for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "fixed-k2")]
        reference: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run against a live chat-completions endpoint.
    Live {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen { config, out, set } => {
            let cfg = BenchConfig::load(config.as_deref(), &set)?;
            let m = gen::cmd_gen(&cfg, &out)?;
            println!(
                "wrote {} traces to {} (mean max k {:.2}, mean min k {:.2})",
                m.tasks.len(),
                out.display(),
                m.stats.mean_max_optimal_k,
                m.stats.mean_min_optimal_k
            );
        }
        Cmd::Run { config, out, seed, mut set } => {
            if let Some(s) = seed {
                set.push(format!("seed={s}"));
            }
            let cfg = BenchConfig::load(config.as_deref(), &set)?;
            let m = run::cmd_run(&cfg, &out)?;
            println!("ran {} policies over {} tasks into {}", m.policies.len(), m.n_tasks, out.display());
        }
        Cmd::Report { run, reference, out } => {
            let out = out.unwrap_or_else(|| run.join("report.csv"));
            let full = report::cmd_report(&run, &reference, &out)?;
            println!("{}", report::TABLE_HEADER.join("\t"));
            for p in &full.policies {
                let r = &p.report;
                println!(
                    "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
                    r.policy,
                    r.delta_time,
                    r.delta_prompt,
                    r.delta_gen,
                    r.delta_cost,
                    r.ratios.time,
                    r.ratios.prompt,
                    r.ratios.gen,
                    r.ratios.cost,
                    r.mean_concurrency,
                    r.mean_k
                );
            }
        }
        Cmd::Live { config, out, set } => {
            let cfg = BenchConfig::load(config.as_deref(), &set)?;
            let m = live::cmd_live(&cfg, &out)?;
            println!("ran {} policies live over {} tasks into {}", m.policies.len(), m.n_tasks, out.display());
        }
    }
    Ok(())
}
