//! Constrained binary quadratic programs: `min x^T Q x + offset` subject to
//! `Ax <= b`, `x` binary.
//!
//! `Q` is stored dense and symmetric, so an off-diagonal pair contributes
//! `2 q_ij x_i x_j` and the diagonal carries the linear terms (`x_i^2 = x_i`).
//! All arithmetic is exact `i64`; overflow is reported as an error.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A CBQP instance, possibly obtained from a larger one by fixing variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbqpInstance {
    q: Vec<Vec<i64>>,
    a: Vec<Vec<i64>>,
    b: Vec<i64>,
    offset: i64,
    /// `(original_index, value)` in the order the fixings were applied.
    fixings: Vec<(usize, bool)>,
    /// Reduced index -> original index.
    index_map: Vec<usize>,
}

/// A binary assignment together with its objective value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub bits: Vec<bool>,
    pub value: i64,
}

/// Vertices `0..n`, one edge per nonzero off-diagonal entry of `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    pub vertices: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl InteractionGraph {
    /// Subgraph induced on `keep`, relabelled so that `keep[k]` becomes `k`.
    pub fn induced(&self, keep: &[usize]) -> InteractionGraph {
        let mut edges = BTreeSet::new();
        for (ki, &vi) in keep.iter().enumerate() {
            for (kj, &vj) in keep.iter().enumerate().skip(ki + 1) {
                let e = if vi < vj { (vi, vj) } else { (vj, vi) };
                if self.edges.contains(&e) {
                    edges.insert((ki, kj));
                }
            }
        }
        InteractionGraph {
            vertices: keep.len(),
            edges,
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

impl CbqpInstance {
    /// Validates shapes and symmetry of `q`.
    pub fn new(q: Vec<Vec<i64>>, a: Vec<Vec<i64>>, b: Vec<i64>, offset: i64) -> Result<Self> {
        let n = q.len();
        for row in &q {
            check_len(n, row.len())?;
        }
        for i in 0..n {
            for j in 0..i {
                if q[i][j] != q[j][i] {
                    return Err(Error::InvalidInstance(format!(
                        "q is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        check_len(a.len(), b.len())?;
        for row in &a {
            check_len(n, row.len())?;
        }
        Ok(CbqpInstance {
            q,
            a,
            b,
            offset,
            fixings: Vec::new(),
            index_map: (0..n).collect(),
        })
    }

    /// Unconstrained instance.
    pub fn unconstrained(q: Vec<Vec<i64>>) -> Result<Self> {
        CbqpInstance::new(q, Vec::new(), Vec::new(), 0)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &[Vec<i64>] {
        &self.q
    }

    pub fn a(&self) -> &[Vec<i64>] {
        &self.a
    }

    pub fn b(&self) -> &[i64] {
        &self.b
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn fixings(&self) -> &[(usize, bool)] {
        &self.fixings
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// Dimension of the instance this one was reduced from.
    pub fn original_n(&self) -> usize {
        self.n() + self.fixings.len()
    }

    /// Largest absolute entry of `q` (0 for an empty matrix).
    pub fn max_abs_q(&self) -> i64 {
        self.q
            .iter()
            .flatten()
            .map(|v| v.saturating_abs())
            .max()
            .unwrap_or(0)
    }

    /// `x^T Q x + offset`.
    pub fn evaluate_objective(&self, x: &[bool]) -> Result<i64> {
        check_len(self.n(), x.len())?;
        let overflow = || Error::Overflow("evaluating the objective");
        let mut total = self.offset;
        for i in 0..self.n() {
            if !x[i] {
                continue;
            }
            let row = &self.q[i];
            total = total.checked_add(row[i]).ok_or_else(overflow)?;
            for j in (i + 1)..self.n() {
                if x[j] {
                    let pair = row[j].checked_mul(2).ok_or_else(overflow)?;
                    total = total.checked_add(pair).ok_or_else(overflow)?;
                }
            }
        }
        Ok(total)
    }

    /// `a_i . x` for a single row.
    pub fn row_activity(&self, i: usize, x: &[bool]) -> Result<i64> {
        check_len(self.n(), x.len())?;
        let row = self.a.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            limit: self.m(),
        })?;
        row.iter()
            .zip(x)
            .filter(|(_, &xj)| xj)
            .try_fold(0i64, |acc, (&aij, _)| acc.checked_add(aij))
            .ok_or(Error::Overflow("evaluating a constraint row"))
    }

    /// `s_i = b_i - a_i . x` for every row.
    pub fn slacks(&self, x: &[bool]) -> Result<Vec<i64>> {
        check_len(self.n(), x.len())?;
        (0..self.m())
            .map(|i| {
                let act = self.row_activity(i, x)?;
                self.b[i]
                    .checked_sub(act)
                    .ok_or(Error::Overflow("computing a slack"))
            })
            .collect()
    }

    pub fn is_feasible(&self, x: &[bool]) -> Result<bool> {
        Ok(self.slacks(x)?.iter().all(|&s| s >= 0))
    }

    /// Change of `s_i` when `x_j` is flipped: `a_ij (2 x_j - 1)`.
    pub fn delta(&self, x: &[bool], i: usize, j: usize) -> Result<i64> {
        check_len(self.n(), x.len())?;
        if i >= self.m() {
            return Err(Error::IndexOutOfRange {
                index: i,
                limit: self.m(),
            });
        }
        if j >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: j,
                limit: self.n(),
            });
        }
        let aij = self.a[i][j];
        Ok(if x[j] { aij } else { -aij })
    }

    /// Cheap infeasibility certificate: some row cannot be satisfied even
    /// with every negative coefficient switched on and every positive one off.
    pub fn trivially_infeasible(&self) -> bool {
        self.a.iter().zip(&self.b).any(|(row, &bi)| {
            let min_act: i128 = row.iter().filter(|&&v| v < 0).map(|&v| v as i128).sum();
            min_act > bi as i128
        })
    }

    /// Fixes reduced variable `j` to `v` and removes it.
    pub fn reduce_fix(&self, j: usize, v: bool) -> Result<CbqpInstance> {
        let n = self.n();
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, limit: n });
        }
        let overflow = |what| Error::Overflow(what);
        let mut offset = self.offset;
        let mut q: Vec<Vec<i64>> = Vec::with_capacity(n - 1);
        for (i, row) in self.q.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut new_row: Vec<i64> = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &v)| v)
                .collect();
            if v {
                let ii = if i < j { i } else { i - 1 };
                let shift = row[j].checked_mul(2).ok_or(overflow("fixing a variable"))?;
                new_row[ii] = new_row[ii]
                    .checked_add(shift)
                    .ok_or(overflow("fixing a variable"))?;
            }
            q.push(new_row);
        }
        if v {
            offset = offset
                .checked_add(self.q[j][j])
                .ok_or(overflow("fixing a variable"))?;
        }
        let mut a = Vec::with_capacity(self.m());
        let mut b = Vec::with_capacity(self.m());
        for (row, &bi) in self.a.iter().zip(&self.b) {
            let mut new_row = row.clone();
            let aij = new_row.remove(j);
            a.push(new_row);
            b.push(if v {
                bi.checked_sub(aij).ok_or(overflow("fixing a variable"))?
            } else {
                bi
            });
        }
        let mut fixings = self.fixings.clone();
        fixings.push((self.index_map[j], v));
        let mut index_map = self.index_map.clone();
        index_map.remove(j);
        Ok(CbqpInstance {
            q,
            a,
            b,
            offset,
            fixings,
            index_map,
        })
    }

    /// Expands a reduced assignment to the original dimension.
    pub fn lift(&self, y: &[bool]) -> Result<Vec<bool>> {
        check_len(self.n(), y.len())?;
        let mut x = vec![false; self.original_n()];
        for &(orig, v) in &self.fixings {
            x[orig] = v;
        }
        for (k, &orig) in self.index_map.iter().enumerate() {
            x[orig] = y[k];
        }
        Ok(x)
    }

    /// Restricts an original-dimension assignment to this node, if it agrees
    /// with every fixing.
    pub fn restrict(&self, x: &[bool]) -> Option<Vec<bool>> {
        if x.len() != self.original_n() {
            return None;
        }
        if self.fixings.iter().any(|&(orig, v)| x[orig] != v) {
            return None;
        }
        Some(self.index_map.iter().map(|&orig| x[orig]).collect())
    }

    pub fn interaction_graph(&self) -> InteractionGraph {
        let n = self.n();
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.q[i][j] != 0 {
                    edges.insert((i, j));
                }
            }
        }
        InteractionGraph { vertices: n, edges }
    }
}

/// Minimum feasible objective by enumerating all `2^n` points.
/// Intended for small instances in tests and audits.
pub fn brute_force_optimum(inst: &CbqpInstance) -> Result<Option<Assignment>> {
    let n = inst.n();
    if n > 24 {
        return Err(Error::InvalidInstance(format!(
            "brute force limited to 24 variables, got {n}"
        )));
    }
    let mut best: Option<Assignment> = None;
    let mut x = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = mask >> k & 1 == 1;
        }
        if !inst.is_feasible(&x)? {
            continue;
        }
        let value = inst.evaluate_objective(&x)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(Assignment {
                bits: x.clone(),
                value,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CbqpInstance {
        let mut q = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-9..=9);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
        let a = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-5..=5)).collect())
            .collect();
        let b = (0..m).map(|_| rng.gen_range(-3..=8)).collect();
        CbqpInstance::new(q, a, b, rng.gen_range(-4..=4)).unwrap()
    }

    fn bits_of(mask: u64, n: usize) -> Vec<bool> {
        (0..n).map(|k| mask >> k & 1 == 1).collect()
    }

    // Term-by-term sum over all ordered pairs, independent of the
    // diagonal/upper-triangle split used by `evaluate_objective`.
    fn quadratic_form(q: &[Vec<i64>], x: &[bool]) -> i64 {
        let mut s = 0;
        for i in 0..q.len() {
            for j in 0..q.len() {
                s += q[i][j] * (x[i] as i64) * (x[j] as i64);
            }
        }
        s
    }

    #[test]
    fn objective_small_cases() {
        let zero = CbqpInstance::unconstrained(vec![vec![0]]).unwrap();
        assert_eq!(zero.evaluate_objective(&[false]).unwrap(), 0);
        let inst = CbqpInstance::unconstrained(vec![vec![2, -1], vec![-1, 3]]).unwrap();
        assert_eq!(inst.evaluate_objective(&[true, true]).unwrap(), 3);
        assert!(matches!(
            inst.evaluate_objective(&[true]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn objective_matches_term_by_term_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inst = random_instance(&mut rng, 8, 0);
        for mask in 0..256u64 {
            let x = bits_of(mask, 8);
            assert_eq!(
                inst.evaluate_objective(&x).unwrap(),
                quadratic_form(inst.q(), &x) + inst.offset()
            );
        }
    }

    #[test]
    fn objective_overflow_is_an_error() {
        let inst = CbqpInstance::unconstrained(vec![vec![i64::MAX, 1], vec![1, 1]]).unwrap();
        assert!(matches!(
            inst.evaluate_objective(&[true, true]),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn rejects_asymmetric_and_ragged_input() {
        assert!(CbqpInstance::unconstrained(vec![vec![0, 1], vec![2, 0]]).is_err());
        assert!(CbqpInstance::new(vec![vec![0]], vec![vec![1, 2]], vec![0], 0).is_err());
        assert!(CbqpInstance::new(vec![vec![0]], vec![vec![1]], vec![], 0).is_err());
    }

    #[test]
    fn slack_examples() {
        let inst =
            CbqpInstance::new(vec![vec![0, 0], vec![0, 0]], vec![vec![1, 1]], vec![1], 0).unwrap();
        assert_eq!(inst.slacks(&[false, false]).unwrap(), vec![1]);
        assert_eq!(inst.slacks(&[true, true]).unwrap(), vec![-1]);
        assert!(!inst.is_feasible(&[true, true]).unwrap());
    }

    #[test]
    fn feasibility_matches_per_row_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 6, 3);
            for mask in 0..64u64 {
                let x = bits_of(mask, 6);
                let direct = (0..3).all(|i| {
                    let dot: i64 = (0..6).map(|j| inst.a()[i][j] * x[j] as i64).sum();
                    dot <= inst.b()[i]
                });
                assert_eq!(inst.is_feasible(&x).unwrap(), direct);
            }
        }
    }

    #[test]
    fn delta_formula_and_finite_difference() {
        let inst = CbqpInstance::new(vec![vec![0]], vec![vec![5]], vec![0], 0).unwrap();
        assert_eq!(inst.delta(&[false], 0, 0).unwrap(), -5);
        assert_eq!(inst.delta(&[true], 0, 0).unwrap(), 5);
        assert!(inst.delta(&[true], 1, 0).is_err());
        assert!(inst.delta(&[true], 0, 1).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_instance(&mut rng, 7, 4);
        for mask in 0..128u64 {
            let x = bits_of(mask, 7);
            let s = inst.slacks(&x).unwrap();
            for j in 0..7 {
                let mut y = x.clone();
                y[j] = !y[j];
                let sy = inst.slacks(&y).unwrap();
                for i in 0..4 {
                    assert_eq!(sy[i] - s[i], inst.delta(&x, i, j).unwrap());
                }
            }
        }
    }

    #[test]
    fn reduce_fix_hand_example() {
        let inst = CbqpInstance::unconstrained(vec![vec![2, -1], vec![-1, 3]]).unwrap();
        let child = inst.reduce_fix(1, true).unwrap();
        assert_eq!(child.q(), &[vec![0]]);
        assert_eq!(child.offset(), 3);
        assert_eq!(child.evaluate_objective(&[true]).unwrap(), 3);
        assert_eq!(child.fixings(), &[(1, true)]);
        assert_eq!(child.index_map(), &[0]);

        let c0 = inst.reduce_fix(1, false).unwrap();
        assert_eq!(c0.q(), &[vec![2]]);
        assert_eq!(c0.offset(), 0);
        assert!(inst.reduce_fix(2, false).is_err());
    }

    #[test]
    fn reduce_fix_zero_keeps_b() {
        let inst =
            CbqpInstance::new(vec![vec![1, 2], vec![2, 1]], vec![vec![3, 4]], vec![5], 0).unwrap();
        let c = inst.reduce_fix(0, false).unwrap();
        assert_eq!(c.b(), &[5]);
        assert_eq!(c.a(), &[vec![4]]);
        let c1 = inst.reduce_fix(0, true).unwrap();
        assert_eq!(c1.b(), &[2]);
    }

    #[test]
    fn lift_examples() {
        let inst = CbqpInstance::unconstrained(vec![vec![2, -1], vec![-1, 3]]).unwrap();
        assert_eq!(inst.lift(&[true, false]).unwrap(), vec![true, false]);
        let child = inst.reduce_fix(1, true).unwrap();
        assert_eq!(child.lift(&[false]).unwrap(), vec![false, true]);
        assert!(child.lift(&[false, false]).is_err());
        assert_eq!(child.restrict(&[true, true]), Some(vec![true]));
        assert_eq!(child.restrict(&[true, false]), None);
    }

    #[test]
    fn reduction_preserves_objective_and_feasibility_on_all_lifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let inst = random_instance(&mut rng, 10, 5);
            let mut child = inst.clone();
            for _ in 0..3 {
                let j = rng.gen_range(0..child.n());
                child = child.reduce_fix(j, rng.gen()).unwrap();
            }
            assert_eq!(child.n(), 7);
            for mask in 0..128u64 {
                let y = bits_of(mask, 7);
                let x = child.lift(&y).unwrap();
                assert_eq!(
                    child.evaluate_objective(&y).unwrap(),
                    inst.evaluate_objective(&x).unwrap()
                );
                assert_eq!(
                    child.is_feasible(&y).unwrap(),
                    inst.is_feasible(&x).unwrap()
                );
            }
        }
    }

    #[test]
    fn interaction_graph_examples() {
        let diag = CbqpInstance::unconstrained(vec![vec![1, 0], vec![0, -2]]).unwrap();
        assert!(diag.interaction_graph().edges.is_empty());
        let one =
            CbqpInstance::unconstrained(vec![vec![0, 4, 0], vec![4, 0, 0], vec![0, 0, 0]]).unwrap();
        let g = one.interaction_graph();
        assert_eq!(g.vertices, 3);
        assert_eq!(g.edges.iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn trivial_infeasibility() {
        let inst = CbqpInstance::new(vec![vec![0]], vec![vec![1]], vec![-1], 0).unwrap();
        assert!(inst.trivially_infeasible());
        let ok = CbqpInstance::new(vec![vec![0]], vec![vec![-1]], vec![-1], 0).unwrap();
        assert!(!ok.trivially_infeasible());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance_strategy() -> impl Strategy<Value = CbqpInstance> {
            (2usize..7, 0usize..4, any::<u64>()).prop_map(|(n, m, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                random_instance(&mut rng, n, m)
            })
        }

        proptest! {
            #[test]
            fn fixing_restricts_the_interaction_graph(
                inst in instance_strategy(), pick in any::<usize>(), v in any::<bool>()
            ) {
                let j = pick % inst.n();
                let child = inst.reduce_fix(j, v).unwrap();
                let keep: Vec<usize> = (0..inst.n()).filter(|&k| k != j).collect();
                prop_assert_eq!(child.interaction_graph(), inst.interaction_graph().induced(&keep));
                for i in 0..child.n() {
                    for k in 0..child.n() {
                        prop_assert_eq!(child.q()[i][k], child.q()[k][i]);
                    }
                }
            }
        }
    }
}
