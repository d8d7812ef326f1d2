#![allow(clippy::needless_range_loop)]

mod common;

use lagrange_bnb::branching::Strategy;
use lagrange_bnb::driver::{solve, BoundMode, Optimum, SolveConfig};
use lagrange_bnb::oracle::{oracle_from_name, ExactOracle, SaOracle, SaParams};
use lagrange_bnb::workbench::{
    emit_nodes_table, emit_times_table, generate, noise_audit, run_benchmark, BenchConfig, GenSpec,
};

use common::*;

#[test]
fn generated_instances_are_never_infeasible() {
    for seed in 0..100 {
        let f = generate(&GenSpec::new(12, 500 + seed)).unwrap();
        let inst = f.instance().unwrap();
        let cfg = SolveConfig {
            record_trace: false,
            ..SolveConfig::default()
        };
        let r = solve(&inst, &ExactOracle::new(), &cfg).unwrap();
        assert!(matches!(r.optimum, Optimum::Proven(_)), "seed {seed}");
        assert_eq!(r.optimum.value(), enumerate_optimum(&f.q, &f.a, &f.b));
    }
}

#[test]
fn annealing_oracle_keeps_incumbent_feasible() {
    for seed in 0..6 {
        let f = generate(&GenSpec::new(10, 700 + seed)).unwrap();
        let inst = f.instance().unwrap();
        let oracle = SaOracle::new(
            SaParams {
                sweeps: 200,
                restarts: 4,
                ..SaParams::default()
            },
            seed,
        );
        let r = solve(&inst, &oracle, &SolveConfig::default()).unwrap();
        let inc = r.incumbent.expect("generated instances are feasible");
        assert!(feasible(&f.a, &f.b, &inc.bits));
        assert_eq!(objective(&f.q, &inc.bits), inc.value);
        assert!(inc.value >= enumerate_optimum(&f.q, &f.a, &f.b).unwrap());
    }
}

#[test]
fn oracle_names() {
    assert_eq!(oracle_from_name("exact", 0).unwrap().name(), "exact");
    assert_eq!(oracle_from_name("sa", 0).unwrap().name(), "sa");
    assert_eq!(oracle_from_name("noisy:3", 0).unwrap().name(), "noisy:3");
    assert!(oracle_from_name("noisy:x", 0).is_err());
    assert!(oracle_from_name("gurobi", 0).is_err());
}

#[test]
fn heavy_noise_mismatches_are_always_explained() {
    let cfg = SolveConfig {
        audit_max_n: 10,
        ..SolveConfig::default()
    };
    let mut mismatches = 0;
    for seed in 0..20 {
        let f = generate(&GenSpec::new(10, 900 + seed)).unwrap();
        let a = noise_audit(&f.instance().unwrap(), 60, seed, &cfg).unwrap();
        assert!(!a.silent_failure(), "seed {seed}");
        for id in &a.incorrect_prunes {
            assert!(a.inflated_prunes.contains(id));
        }
        let truth = enumerate_optimum(&f.q, &f.a, &f.b);
        assert_eq!(a.mismatch, a.noisy_optimum.value() != truth);
        mismatches += a.mismatch as usize;
    }
    eprintln!("{mismatches}/20 runs returned a wrong optimum under heavy noise");
}

#[test]
fn lp_and_both_modes_report_zero_queries_only_for_lp() {
    let f = generate(&GenSpec::new(10, 3)).unwrap();
    let inst = f.instance().unwrap();
    let lp = solve(
        &inst,
        &ExactOracle::new(),
        &SolveConfig::with_strategy(Strategy::AllConstraints, BoundMode::Lp),
    )
    .unwrap();
    assert_eq!(lp.oracle_queries, 0);
    let both = solve(
        &inst,
        &ExactOracle::new(),
        &SolveConfig::with_strategy(Strategy::AllConstraints, BoundMode::Both),
    )
    .unwrap();
    assert!(both.oracle_queries > 0);
    assert_eq!(lp.optimum, both.optimum);
}

fn bench_config(sizes: Vec<usize>, per_size: usize, strategies: Vec<Strategy>) -> BenchConfig {
    BenchConfig {
        sizes,
        per_size,
        strategies,
        threads: 1,
        ..BenchConfig::default()
    }
}

#[test]
fn bench_table_structure() {
    let table = run_benchmark(&bench_config(vec![10], 2, vec![Strategy::MostViolated])).unwrap();
    let mut buf = Vec::new();
    emit_nodes_table(&table, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 2, "{text}");
    assert_eq!(lines[0], "size,instance,optimum,mostviol,baseline");
    assert!(lines[3].starts_with("mean,"));
    assert!(lines[4].starts_with("wins,"));

    let mut buf = Vec::new();
    emit_times_table(&table, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(
        text.lines().next().unwrap(),
        "size,instance,mostviol,baseline,queries,qal"
    );
}

#[test]
fn bench_optima_agree_and_wins_recount() {
    let table = run_benchmark(&bench_config(vec![8, 10], 3, Strategy::all())).unwrap();
    for row in &table.rows {
        let f = generate(&GenSpec::new(
            row.size,
            lagrange_bnb::workbench::instance_seed(0, row.size, row.instance),
        ))
        .unwrap();
        assert_eq!(row.optimum, enumerate_optimum(&f.q, &f.a, &f.b));
    }
    let mut buf = Vec::new();
    emit_nodes_table(&table, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let records: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let data = &records[..records.len() - 2];
    let wins = &records[records.len() - 1];
    let columns = 3..3 + table.strategies.len() + 1;
    let mut recount = vec![0u64; columns.len()];
    for rec in data {
        let vals: Vec<u64> = columns.clone().map(|c| rec[c].parse().unwrap()).collect();
        let best = *vals.iter().min().unwrap();
        for (k, v) in vals.iter().enumerate() {
            if *v == best {
                recount[k] += 1;
            }
        }
    }
    let reported: Vec<u64> = columns.map(|c| wins[c].parse().unwrap()).collect();
    assert_eq!(reported, recount);
}

#[test]
fn external_baseline_missing_rows_leave_qal_empty() {
    let mut cfg = bench_config(vec![8], 2, vec![Strategy::AllViolated]);
    cfg.baseline = Some([((8, 0), 5.0)].into_iter().collect());
    let table = run_benchmark(&cfg).unwrap();
    assert!(table.rows[0].qal_ms.is_some());
    assert_eq!(table.rows[1].baseline_time, None);
    assert_eq!(table.rows[1].qal_ms, None);
}
