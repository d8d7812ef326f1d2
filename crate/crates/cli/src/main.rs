use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lagrange_bnb::branching::Strategy;
use lagrange_bnb::driver::{solve, BoundMode, Limits, SolveConfig};
use lagrange_bnb::oracle::oracle_from_name;
use lagrange_bnb::workbench::{
    emit_nodes_table, emit_times_table, generate, read_baseline, read_instance, run_benchmark,
    thread_count, write_instance, write_rows_csv, BenchConfig, GenSpec,
};

#[derive(Parser)]
#[command(
    name = "lagrange-bnb",
    version,
    about = "Branch-and-bound for constrained binary quadratic programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and print the report as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "mostviol")]
        strategy: String,
        /// exact, sa, or noisy:<eps>
        #[arg(long, default_value = "exact")]
        oracle: String,
        #[arg(long, default_value_t = 3)]
        rho: usize,
        /// ld, lp, or both
        #[arg(long, default_value = "ld")]
        bound: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-node trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        max_nodes: u64,
        /// Seconds.
        #[arg(long, default_value_t = 600.0)]
        max_time: f64,
    },
    /// Write a random feasible instance.
    Generate {
        #[arg(long)]
        n: usize,
        /// Defaults to n / 2.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        density_q: f64,
        #[arg(long, default_value_t = 0.5)]
        density_a: f64,
        #[arg(long, default_value_t = -10, allow_hyphen_values = true)]
        coeff_min: i64,
        #[arg(long, default_value_t = 10)]
        coeff_max: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every strategy on generated instances and write the tables.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10,12,14")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        per_size: usize,
        /// `all` or a comma-separated list of strategy names.
        #[arg(long, default_value = "all")]
        strategies: String,
        /// CSV with columns size,instance,time.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "ld")]
        bound: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_nodes: PathBuf,
        #[arg(long)]
        out_times: PathBuf,
        /// Lossless per-instance CSV.
        #[arg(long)]
        out_rows: Option<PathBuf>,
        /// Count time spent inside the oracle as zero.
        #[arg(long)]
        oracle_time_zero: bool,
    },
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s == "all" {
        return Ok(Strategy::all());
    }
    s.split(',')
        .map(|name| {
            name.trim()
                .parse()
                .with_context(|| format!("strategy `{name}`"))
        })
        .collect()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Solve {
            instance,
            strategy,
            oracle,
            rho,
            bound,
            seed,
            trace,
            max_nodes,
            max_time,
        } => {
            let file = read_instance(&instance)
                .with_context(|| format!("reading {}", instance.display()))?;
            let inst = file.instance()?;
            let oracle = oracle_from_name(&oracle, seed)?;
            if !max_time.is_finite() || max_time < 0.0 {
                bail!("--max-time must be a nonnegative number of seconds");
            }
            let cfg = SolveConfig {
                strategy: strategy.parse()?,
                rho,
                bound_mode: bound.parse::<BoundMode>()?,
                limits: Limits {
                    max_nodes,
                    max_time: Duration::from_secs_f64(max_time),
                },
                record_trace: true,
                ..SolveConfig::default()
            };
            let report = solve(&inst, oracle.as_ref(), &cfg)?;
            if let Some(path) = trace {
                let mut w = csv::Writer::from_path(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                for rec in &report.trace {
                    w.serialize(rec)?;
                }
                w.flush()?;
            }
            let mut out = io::stdout().lock();
            match writeln!(out, "{}", serde_json::to_string(&report)?) {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
        Command::Generate {
            n,
            m,
            density_q,
            density_a,
            coeff_min,
            coeff_max,
            seed,
            out,
        } => {
            let spec = GenSpec {
                m: m.unwrap_or(n / 2),
                density_q,
                density_a,
                coeff_range: (coeff_min, coeff_max),
                ..GenSpec::new(n, seed)
            };
            write_instance(&out, &generate(&spec)?)?;
        }
        Command::Bench {
            sizes,
            per_size,
            strategies,
            baseline,
            bound,
            seed,
            out_nodes,
            out_times,
            out_rows,
            oracle_time_zero,
        } => {
            let cfg = BenchConfig {
                sizes,
                per_size,
                strategies: parse_strategies(&strategies)?,
                bound_mode: bound.parse()?,
                seed,
                oracle_time_zero,
                baseline: baseline.as_deref().map(read_baseline).transpose()?,
                threads: thread_count(),
                ..BenchConfig::default()
            };
            let table = run_benchmark(&cfg)?;
            emit_nodes_table(&table, BufWriter::new(File::create(&out_nodes)?))?;
            emit_times_table(&table, BufWriter::new(File::create(&out_times)?))?;
            if let Some(path) = out_rows {
                write_rows_csv(&table, BufWriter::new(File::create(&path)?))?;
            }
        }
    }
    Ok(())
}
