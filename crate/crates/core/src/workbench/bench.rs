use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use super::generate::{generate, GenSpec};
use crate::branching::Strategy;
use crate::driver::{solve, BoundMode, SolveConfig};
use crate::error::{Error, Result};
use crate::oracle::{ExactOracle, OracleStats, Spectrum, UbqpInstance, UbqpOracle};

pub const THREADS_ENV: &str = "LAGRANGE_BNB_THREADS";

/// Worker count: `LAGRANGE_BNB_THREADS` if set to a positive integer, else
/// the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Milliseconds per oracle query that the baseline could spend before it
/// stops winning: `(baseline - best) * 1000 / queries`, rounded.
pub fn compute_qal(best_time_s: f64, baseline_time_s: f64, queries: u64) -> Result<i64> {
    if queries == 0 {
        return Err(Error::ZeroQueries);
    }
    Ok(((baseline_time_s - best_time_s) * 1000.0 / queries as f64).round() as i64)
}

/// Wraps an oracle and accumulates the wall time spent inside it.
pub struct TimingOracle {
    inner: Box<dyn UbqpOracle>,
    nanos: AtomicU64,
}

impl TimingOracle {
    pub fn new(inner: Box<dyn UbqpOracle>) -> Self {
        TimingOracle {
            inner,
            nanos: AtomicU64::new(0),
        }
    }

    pub fn elapsed_secs(&self) -> f64 {
        self.nanos.load(Ordering::SeqCst) as f64 * 1e-9
    }
}

impl UbqpOracle for TimingOracle {
    fn solve(&self, u: &UbqpInstance, k_spec: usize) -> Result<Spectrum> {
        let t = Instant::now();
        let r = self.inner.solve(u, k_spec);
        self.nanos
            .fetch_add(t.elapsed().as_nanos() as u64, Ordering::SeqCst);
        r
    }

    fn stats(&self) -> &OracleStats {
        self.inner.stats()
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Externally measured baseline times keyed by `(size, instance)`.
pub type BaselineTimes = HashMap<(usize, usize), f64>;

#[derive(Deserialize)]
struct BaselineRecord {
    size: usize,
    instance: usize,
    time: f64,
}

/// Reads a `size,instance,time` CSV.
pub fn read_baseline(path: &Path) -> Result<BaselineTimes> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for rec in rdr.deserialize() {
        let r: BaselineRecord = rec?;
        out.insert((r.size, r.instance), r.time);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub per_size: usize,
    pub strategies: Vec<Strategy>,
    pub bound_mode: BoundMode,
    pub seed: u64,
    /// Subtract time spent inside the oracle from each strategy's time.
    pub oracle_time_zero: bool,
    /// External baseline; when absent an LP-bound run with `allcst` is timed
    /// instead.
    pub baseline: Option<BaselineTimes>,
    pub solve: SolveConfig,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![10, 12, 14],
            per_size: 8,
            strategies: Strategy::all(),
            bound_mode: BoundMode::Ld,
            seed: 0,
            oracle_time_zero: false,
            baseline: None,
            solve: SolveConfig {
                record_trace: false,
                ..SolveConfig::default()
            },
            threads: thread_count(),
        }
    }
}

/// Generator seed of instance `index` of a given size.
pub fn instance_seed(base: u64, size: usize, index: usize) -> u64 {
    base.wrapping_add(size as u64 * 10_000 + index as u64)
}

/// One instance: per-strategy node counts and times, in the table's strategy
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub instance: usize,
    pub optimum: Option<i64>,
    pub nodes: Vec<u64>,
    pub times: Vec<f64>,
    /// Oracle queries of the fastest strategy.
    pub queries: u64,
    pub baseline_time: Option<f64>,
    pub baseline_nodes: Option<u64>,
    pub qal_ms: Option<i64>,
}

impl BenchRow {
    /// Index of the fastest strategy (first on ties).
    pub fn best(&self) -> Option<usize> {
        (0..self.times.len()).fold(None, |acc, i| match acc {
            Some(b) if self.times[b] <= self.times[i] => Some(b),
            _ => Some(i),
        })
    }

    /// Recomputes `qal_ms` from the other fields.
    pub fn refresh_qal(&mut self) {
        self.qal_ms = match (self.best(), self.baseline_time) {
            (Some(b), Some(base)) => compute_qal(self.times[b], base, self.queries).ok(),
            _ => None,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub strategies: Vec<Strategy>,
    pub rows: Vec<BenchRow>,
}

fn bench_instance(cfg: &BenchConfig, size: usize, index: usize) -> Result<BenchRow> {
    let file = generate(&GenSpec::new(size, instance_seed(cfg.seed, size, index)))?;
    let inst = file.instance()?;
    let mut optimum = None;
    let mut nodes = Vec::new();
    let mut times = Vec::new();
    let mut queries = Vec::new();
    for (k, &s) in cfg.strategies.iter().enumerate() {
        let oracle = TimingOracle::new(Box::new(ExactOracle::new()));
        let sc = SolveConfig {
            strategy: s,
            bound_mode: cfg.bound_mode,
            ..cfg.solve.clone()
        };
        let r = solve(&inst, &oracle, &sc)?;
        let value = r.optimum.value();
        if k > 0 && value != optimum {
            return Err(Error::Disagreement {
                size,
                instance: index,
            });
        }
        optimum = value;
        let oracle_time = if cfg.oracle_time_zero {
            oracle.elapsed_secs()
        } else {
            0.0
        };
        nodes.push(r.nodes);
        times.push((r.wall_time - oracle_time).max(0.0));
        queries.push(r.oracle_queries);
    }
    let (baseline_time, baseline_nodes) = match &cfg.baseline {
        Some(ext) => (ext.get(&(size, index)).copied(), None),
        None => {
            let sc = SolveConfig {
                strategy: Strategy::AllConstraints,
                bound_mode: BoundMode::Lp,
                ..cfg.solve.clone()
            };
            let r = solve(&inst, &ExactOracle::new(), &sc)?;
            (Some(r.wall_time), Some(r.nodes))
        }
    };
    let mut row = BenchRow {
        size,
        instance: index,
        optimum,
        nodes,
        times,
        queries: 0,
        baseline_time,
        baseline_nodes,
        qal_ms: None,
    };
    if let Some(b) = row.best() {
        row.queries = queries[b];
    }
    row.refresh_qal();
    Ok(row)
}

/// Generates `per_size` instances per size and runs every strategy on each
/// with the exact oracle.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchTable> {
    let cells: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.per_size).map(move |i| (s, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, i)| bench_instance(cfg, s, i))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BenchTable {
        strategies: cfg.strategies.clone(),
        rows,
    })
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Win counts per column: every column attaining the row minimum wins.
fn wins(rows: &[Vec<Option<f64>>], columns: usize) -> Vec<u64> {
    let mut w = vec![0u64; columns];
    for row in rows {
        let best = row.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        for (k, v) in row.iter().enumerate() {
            if *v == Some(best) {
                w[k] += 1;
            }
        }
    }
    w
}

/// Node counts per instance, followed by `mean` and `wins` rows.
pub fn emit_nodes_table<W: Write>(table: &BenchTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["size".to_string(), "instance".into(), "optimum".into()];
    header.extend(table.strategies.iter().map(|s| s.to_string()));
    header.push("baseline".into());
    w.write_record(&header)?;
    let mut cols: Vec<Vec<Option<f64>>> = Vec::new();
    for r in &table.rows {
        let mut rec = vec![
            r.size.to_string(),
            r.instance.to_string(),
            opt_str(r.optimum),
        ];
        rec.extend(r.nodes.iter().map(|v| v.to_string()));
        rec.push(opt_str(r.baseline_nodes));
        w.write_record(&rec)?;
        let mut c: Vec<Option<f64>> = r.nodes.iter().map(|&v| Some(v as f64)).collect();
        c.push(r.baseline_nodes.map(|v| v as f64));
        cols.push(c);
    }
    write_footer(&mut w, &cols, 3, table.strategies.len() + 1, 0, |v| {
        format!("{v:.1}")
    })?;
    w.flush()?;
    Ok(())
}

/// Times per instance with the baseline, query count and QAL, followed by
/// `mean` and `wins` rows.
pub fn emit_times_table<W: Write>(table: &BenchTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["size".to_string(), "instance".into()];
    header.extend(table.strategies.iter().map(|s| s.to_string()));
    header.extend(["baseline".into(), "queries".into(), "qal".into()]);
    w.write_record(&header)?;
    let mut cols: Vec<Vec<Option<f64>>> = Vec::new();
    for r in &table.rows {
        let mut rec = vec![r.size.to_string(), r.instance.to_string()];
        rec.extend(r.times.iter().map(|v| format!("{v:.3}")));
        rec.push(
            r.baseline_time
                .map_or_else(String::new, |v| format!("{v:.3}")),
        );
        rec.push(r.queries.to_string());
        rec.push(opt_str(r.qal_ms));
        w.write_record(&rec)?;
        let mut c: Vec<Option<f64>> = r.times.iter().map(|&v| Some(v)).collect();
        c.push(r.baseline_time);
        cols.push(c);
    }
    write_footer(&mut w, &cols, 2, table.strategies.len() + 1, 2, |v| {
        format!("{v:.3}")
    })?;
    w.flush()?;
    Ok(())
}

/// `lead` label columns precede the value columns and `trailing` unsummarized
/// columns follow them.
fn write_footer<W: Write>(
    w: &mut csv::Writer<W>,
    cols: &[Vec<Option<f64>>],
    lead: usize,
    columns: usize,
    trailing: usize,
    fmt: impl Fn(f64) -> String,
) -> Result<()> {
    let width = lead + columns + trailing;
    let pad = |mut rec: Vec<String>| {
        rec.resize(width, String::new());
        rec
    };
    let mut rec = vec!["mean".to_string()];
    rec.resize(lead, String::new());
    for k in 0..columns {
        rec.push(mean(cols.iter().filter_map(|r| r[k])).map_or_else(String::new, &fmt));
    }
    w.write_record(pad(rec))?;
    let mut rec = vec!["wins".to_string()];
    rec.resize(lead, String::new());
    rec.extend(wins(cols, columns).iter().map(|v| v.to_string()));
    w.write_record(pad(rec))?;
    Ok(())
}

/// Lossless per-instance CSV: `size,instance,optimum,nodes:<s>...,time:<s>...,
/// queries,baseline_time,baseline_nodes,qal_ms`.
pub fn write_rows_csv<W: Write>(table: &BenchTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["size".to_string(), "instance".into(), "optimum".into()];
    header.extend(table.strategies.iter().map(|s| format!("nodes:{s}")));
    header.extend(table.strategies.iter().map(|s| format!("time:{s}")));
    header.extend(["queries", "baseline_time", "baseline_nodes", "qal_ms"].map(String::from));
    w.write_record(&header)?;
    for r in &table.rows {
        if r.nodes.len() != table.strategies.len() || r.times.len() != table.strategies.len() {
            return Err(Error::BadTable(
                "row width does not match strategies".into(),
            ));
        }
        let mut rec = vec![
            r.size.to_string(),
            r.instance.to_string(),
            opt_str(r.optimum),
        ];
        rec.extend(r.nodes.iter().map(|v| v.to_string()));
        rec.extend(r.times.iter().map(|v| v.to_string()));
        rec.push(r.queries.to_string());
        rec.push(opt_str(r.baseline_time));
        rec.push(opt_str(r.baseline_nodes));
        rec.push(opt_str(r.qal_ms));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::BadTable(format!("cannot parse `{s}`")))
}

fn opt_field<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s).map(Some)
    }
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<BenchTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let strategies: Vec<Strategy> = header
        .iter()
        .filter_map(|h| h.strip_prefix("nodes:"))
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let k = strategies.len();
    if header.len() != 3 + 2 * k + 4 {
        return Err(Error::BadTable("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        rows.push(BenchRow {
            size: field(get(0))?,
            instance: field(get(1))?,
            optimum: opt_field(get(2))?,
            nodes: (0..k).map(|j| field(get(3 + j))).collect::<Result<_>>()?,
            times: (0..k)
                .map(|j| field(get(3 + k + j)))
                .collect::<Result<_>>()?,
            queries: field(get(3 + 2 * k))?,
            baseline_time: opt_field(get(4 + 2 * k))?,
            baseline_nodes: opt_field(get(5 + 2 * k))?,
            qal_ms: opt_field(get(6 + 2 * k))?,
        });
    }
    Ok(BenchTable { strategies, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::Strategy;
    use proptest::prelude::*;
    use proptest::strategy::Strategy as _;

    #[test]
    fn qal_values() {
        assert_eq!(compute_qal(1.5, 1.5, 10).unwrap(), 0);
        assert_eq!(compute_qal(0.0, 1.0, 4).unwrap(), 250);
        assert!(matches!(compute_qal(0.1, 0.2, 0), Err(Error::ZeroQueries)));
    }

    #[test]
    fn wins_award_ties() {
        let rows = vec![
            vec![Some(3.0), Some(3.0), Some(5.0)],
            vec![Some(4.0), Some(2.0), None],
        ];
        assert_eq!(wins(&rows, 3), vec![1, 2, 0]);
    }

    #[test]
    fn missing_baseline_leaves_qal_empty() {
        let mut row = BenchRow {
            size: 10,
            instance: 0,
            optimum: Some(-4),
            nodes: vec![3],
            times: vec![0.5],
            queries: 7,
            baseline_time: None,
            baseline_nodes: None,
            qal_ms: Some(99),
        };
        row.refresh_qal();
        assert_eq!(row.qal_ms, None);
        row.baseline_time = Some(1.2);
        row.refresh_qal();
        assert_eq!(row.qal_ms, Some(100));
    }

    #[test]
    fn baseline_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.csv");
        std::fs::write(&path, "size,instance,time\n10,0,1.25\n10,1,0.5\n").unwrap();
        let b = read_baseline(&path).unwrap();
        assert_eq!(b.get(&(10, 0)), Some(&1.25));
        assert_eq!(b.get(&(10, 2)), None);
    }

    fn row_strategy(k: usize) -> impl proptest::strategy::Strategy<Value = BenchRow> {
        (
            0usize..100,
            0usize..100,
            proptest::option::of(-1000i64..1000),
            proptest::collection::vec(0u64..1_000_000, k),
            proptest::collection::vec(0.0f64..1e4, k),
            0u64..10_000,
            proptest::option::of(0.0f64..1e4),
            proptest::option::of(0u64..1_000_000),
            proptest::option::of(-10_000i64..10_000),
        )
            .prop_map(
                |(size, instance, optimum, nodes, times, queries, bt, bn, qal)| BenchRow {
                    size,
                    instance,
                    optimum,
                    nodes,
                    times,
                    queries,
                    baseline_time: bt,
                    baseline_nodes: bn,
                    qal_ms: qal,
                },
            )
    }

    proptest! {
        #[test]
        fn rows_round_trip(rows in proptest::collection::vec(row_strategy(3), 0..12)) {
            let table = BenchTable {
                strategies: vec![Strategy::MostViolated, Strategy::LpLookahead(4), Strategy::MaxSd],
                rows,
            };
            let mut buf = Vec::new();
            write_rows_csv(&table, &mut buf).unwrap();
            let back = read_rows_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, table);
        }
    }
}
