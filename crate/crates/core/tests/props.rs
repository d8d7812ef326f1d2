#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;

use lagrange_bnb::bounds::{bound_to_int, lagrangian_dual, lp_relaxation_bound, LagrangianParams};
use lagrange_bnb::branching::{frequency_candidates, knapsack_count, FrequencyTable};
use lagrange_bnb::oracle::ExactOracle;
use lagrange_bnb::CbqpInstance;

use common::*;

fn small_instance() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<Vec<i64>>, Vec<i64>)> {
    (1usize..=7, 0usize..=3).prop_flat_map(|(n, m)| {
        (
            proptest::collection::vec(-6i64..=6, n * n),
            proptest::collection::vec(proptest::collection::vec(-5i64..=5, n), m),
            proptest::collection::vec(-3i64..=8, m),
        )
            .prop_map(move |(raw, a, b)| {
                let mut q = vec![vec![0; n]; n];
                for i in 0..n {
                    for j in i..n {
                        q[i][j] = raw[i * n + j];
                        q[j][i] = raw[i * n + j];
                    }
                }
                (q, a, b)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_and_lp_bounds_never_exceed_the_optimum((q, a, b) in small_instance()) {
        let inst = CbqpInstance::new(q.clone(), a.clone(), b.clone(), 0).unwrap();
        let n = q.len();
        let r = lagrangian_dual(&inst, &ExactOracle::new(), &[vec![false; n]], &LagrangianParams::default()).unwrap();
        if let Some(opt) = enumerate_optimum(&q, &a, &b) {
            prop_assert!(r.bound_int <= opt);
            let lp = lp_relaxation_bound(&inst).unwrap().expect("feasible instance has a feasible LP");
            prop_assert!(bound_to_int(lp) <= opt);
        }
        for w in r.history.windows(2) {
            prop_assert!(w[1].mu <= w[0].mu + 1e-9);
        }
    }

    #[test]
    fn knapsack_counts_match_enumeration(
        coeffs in proptest::collection::vec(-9i64..=9, 1..=12),
        rhs in -15i64..=20,
        fix in any::<(prop::sample::Index, bool)>(),
    ) {
        let n = coeffs.len();
        let count = |fixed: Option<(usize, bool)>| {
            (0u64..1 << n)
                .map(|m| bits(m, n))
                .filter(|x| fixed.is_none_or(|(i, v)| x[i] == v))
                .filter(|x| coeffs.iter().zip(x).filter(|(_, &v)| v).map(|(c, _)| c).sum::<i64>() <= rhs)
                .count() as u64
        };
        let fixed = Some((fix.0.index(n), fix.1));
        prop_assert_eq!(knapsack_count(&coeffs, rhs, None).unwrap(), count(None));
        prop_assert_eq!(knapsack_count(&coeffs, rhs, fixed).unwrap(), count(fixed));
        let i = fix.0.index(n);
        let total = knapsack_count(&coeffs, rhs, None).unwrap();
        let split = knapsack_count(&coeffs, rhs, Some((i, true))).unwrap()
            + knapsack_count(&coeffs, rhs, Some((i, false))).unwrap();
        prop_assert_eq!(total, split);
    }

    #[test]
    fn frequency_rows_sum_to_pool_size(
        pool in (1usize..=8).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), 1..30))
    ) {
        let t = FrequencyTable::from_pool(&pool).unwrap();
        for c in &t.counts {
            prop_assert_eq!(c[0] + c[1], pool.len() as u64);
        }
        let cands = frequency_candidates(&pool).unwrap();
        prop_assert_eq!(cands.len(), 2 * pool[0].len());
        for w in cands.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn restrict_inverts_lift(
        (q, a, b) in small_instance(),
        picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 0..4),
        x_seed in any::<u64>(),
    ) {
        let root = CbqpInstance::new(q, a, b, 0).unwrap();
        let mut inst = root.clone();
        for (idx, v) in picks {
            if inst.n() == 0 {
                break;
            }
            inst = inst.reduce_fix(idx.index(inst.n()), v).unwrap();
        }
        let y = bits(x_seed, inst.n());
        let x = inst.lift(&y).unwrap();
        prop_assert_eq!(inst.restrict(&x), Some(y.clone()));
        prop_assert_eq!(inst.evaluate_objective(&y).unwrap(), root.evaluate_objective(&x).unwrap());
        prop_assert_eq!(inst.is_feasible(&y).unwrap(), root.is_feasible(&x).unwrap());
    }

    #[test]
    fn bound_rounding_is_a_valid_integer_floor(b in -1e6f64..1e6) {
        let k = bound_to_int(b);
        prop_assert!(k as f64 >= b - 1e-6 - 1e-9);
        prop_assert!((k as f64) < b - 1e-6 + 1.0 + 1e-9);
    }
}
