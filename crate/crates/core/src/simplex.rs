//! Dense bounded-variable primal simplex.
//!
//! Problems are stated as `maximize c.y` over rows `g.y {<=,>=,=} h` and
//! per-variable bounds. Internally every variable is shifted (or mirrored, or
//! split) to `0 <= z <= U`, `>=` rows are negated and `=` rows become a pair of
//! inequalities. Phase one drives artificials out; phase two optimizes.
//! Dantzig pricing is used until a run of degenerate pivots is seen, after
//! which the solve switches to Bland's rule for good.

use crate::error::{Error, Result};

/// Feasibility/optimality tolerance.
pub const LP_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    /// Maximized.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// `(lower, upper)`; either side may be infinite.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point: optimal for `Optimal`, the current iterate otherwise
    /// (empty when infeasible).
    pub y: Vec<f64>,
    /// Optimal value for `Optimal`; `-inf` for `Infeasible`; `+inf` for
    /// `Unbounded`. For `IterationLimit` this is a valid upper bound on the
    /// optimum derived from the current dual estimate (possibly `+inf`).
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            rows: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.rows.push(LpRow {
            coeffs,
            relation,
            rhs,
        });
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLp("non-finite objective coefficient".into()));
        }
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.bounds.len(),
            });
        }
        for (k, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
                || lo > hi
            {
                return Err(Error::InvalidLp(format!("bad bounds on variable {k}")));
            }
        }
        for row in &self.rows {
            if row.coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.coeffs.len(),
                });
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidLp("non-finite row data".into()));
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `y`.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let act: f64 = row.coeffs.iter().zip(y).map(|(g, v)| g * v).sum();
            let viol = match row.relation {
                Relation::Le => act - row.rhs,
                Relation::Ge => row.rhs - act,
                Relation::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (&(lo, hi), &v) in self.bounds.iter().zip(y) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    pub fn objective_at(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `y = lower + z`
    Shift { col: usize, lower: f64 },
    /// `y = upper - z`
    Mirror { col: usize, upper: f64 },
    /// `y = z_pos - z_neg`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

/// Problem in internal form: `max c.z + c0`, `G z <= h`, `0 <= z <= U`.
struct Internal {
    maps: Vec<VarMap>,
    cost: Vec<f64>,
    cost_const: f64,
    upper: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Internal {
    fn build(p: &LpProblem) -> Internal {
        let mut maps = Vec::with_capacity(p.num_vars());
        let mut upper = Vec::new();
        for &(lo, hi) in &p.bounds {
            if lo.is_finite() {
                maps.push(VarMap::Shift {
                    col: upper.len(),
                    lower: lo,
                });
                upper.push(hi - lo);
            } else if hi.is_finite() {
                maps.push(VarMap::Mirror {
                    col: upper.len(),
                    upper: hi,
                });
                upper.push(f64::INFINITY);
            } else {
                maps.push(VarMap::Split {
                    pos: upper.len(),
                    neg: upper.len() + 1,
                });
                upper.push(f64::INFINITY);
                upper.push(f64::INFINITY);
            }
        }
        let nz = upper.len();
        // Substitute the variable maps into a linear form.
        let transform = |coeffs: &[f64]| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; nz];
            let mut constant = 0.0;
            for (g, map) in coeffs.iter().zip(&maps) {
                match *map {
                    VarMap::Shift { col, lower } => {
                        out[col] += g;
                        constant += g * lower;
                    }
                    VarMap::Mirror { col, upper } => {
                        out[col] -= g;
                        constant += g * upper;
                    }
                    VarMap::Split { pos, neg } => {
                        out[pos] += g;
                        out[neg] -= g;
                    }
                }
            }
            (out, constant)
        };
        let (cost, cost_const) = transform(&p.objective);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for row in &p.rows {
            let (g, constant) = transform(&row.coeffs);
            let h = row.rhs - constant;
            if matches!(row.relation, Relation::Le | Relation::Eq) {
                rows.push(g.clone());
                rhs.push(h);
            }
            if matches!(row.relation, Relation::Ge | Relation::Eq) {
                rows.push(g.iter().map(|v| -v).collect());
                rhs.push(-h);
            }
        }
        Internal {
            maps,
            cost,
            cost_const,
            upper,
            rows,
            rhs,
        }
    }

    fn recover(&self, z: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|map| match *map {
                VarMap::Shift { col, lower } => lower + z[col],
                VarMap::Mirror { col, upper } => upper - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect()
    }

    /// `max c.z` over the box, relaxed by multipliers `pi >= 0` on the rows.
    fn relaxed_bound(&self, pi: &[f64]) -> f64 {
        let mut total = self.cost_const;
        for (p, h) in pi.iter().zip(&self.rhs) {
            total += p * h;
        }
        for j in 0..self.cost.len() {
            let mut reduced = self.cost[j];
            for (p, row) in pi.iter().zip(&self.rows) {
                reduced -= p * row[j];
            }
            if reduced > 0.0 {
                if self.upper[j].is_infinite() {
                    return f64::INFINITY;
                }
                total += reduced * self.upper[j];
            }
        }
        total
    }
}

struct Tableau {
    t: Vec<Vec<f64>>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    upper: Vec<f64>,
    num_struct: usize,
    num_rows: usize,
    first_artificial: usize,
    iterations: usize,
    bland: bool,
    degenerate_run: usize,
}

impl Tableau {
    fn new(inner: &Internal) -> Tableau {
        let nz = inner.cost.len();
        let r = inner.rows.len();
        let negative: Vec<usize> = (0..r).filter(|&i| inner.rhs[i] < 0.0).collect();
        let ncols = nz + r + negative.len();
        let mut t = vec![vec![0.0; ncols]; r];
        let mut beta = vec![0.0; r];
        let mut basis = vec![0; r];
        let mut state = vec![State::Lower; ncols];
        let mut upper = inner.upper.clone();
        upper.extend(std::iter::repeat_n(f64::INFINITY, r + negative.len()));
        let mut art = nz + r;
        for i in 0..r {
            let sign = if inner.rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..nz {
                t[i][j] = sign * inner.rows[i][j];
            }
            t[i][nz + i] = sign;
            beta[i] = sign * inner.rhs[i];
            if sign < 0.0 {
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = nz + i;
            }
            state[basis[i]] = State::Basic;
        }
        Tableau {
            t,
            beta,
            basis,
            state,
            upper,
            num_struct: nz,
            num_rows: r,
            first_artificial: nz + r,
            iterations: 0,
            bland: false,
            degenerate_run: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.state.len()
    }

    fn basic_values(&self) -> Vec<f64> {
        let mut xb = self.beta.clone();
        for j in 0..self.ncols() {
            if self.state[j] == State::Upper {
                for (i, v) in xb.iter_mut().enumerate() {
                    *v -= self.t[i][j] * self.upper[j];
                }
            }
        }
        xb
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.ncols())
            .map(|j| match self.state[j] {
                State::Upper => self.upper[j],
                _ => 0.0,
            })
            .collect();
        for (i, v) in self.basic_values().into_iter().enumerate() {
            x[self.basis[i]] = v;
        }
        x
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.num_rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(&self.t[i]) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        self.beta[row] /= p;
        let pivot_row = self.t[row].clone();
        let pivot_beta = self.beta[row];
        for i in 0..self.num_rows {
            if i == row {
                continue;
            }
            let f = self.t[i][col];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.t[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.beta[i] -= f * pivot_beta;
        }
    }

    fn run(&mut self, cost: &[f64], max_iterations: Option<usize>) -> PhaseEnd {
        let stall_limit = 2 * (self.num_rows + self.ncols());
        loop {
            let d = self.reduced_costs(cost);
            let eligible = |j: usize| match self.state[j] {
                State::Lower => d[j] > COST_TOL && self.upper[j] > 0.0,
                State::Upper => d[j] < -COST_TOL,
                State::Basic => false,
            };
            let entering = if self.bland {
                (0..self.ncols()).find(|&j| eligible(j))
            } else {
                (0..self.ncols())
                    .filter(|&j| eligible(j))
                    .fold(None, |best: Option<usize>, j| match best {
                        Some(b) if d[b].abs() >= d[j].abs() => Some(b),
                        _ => Some(j),
                    })
            };
            let Some(j) = entering else {
                return PhaseEnd::Optimal;
            };
            if max_iterations.is_some_and(|cap| self.iterations >= cap) {
                return PhaseEnd::IterationLimit;
            }
            let dir = if self.state[j] == State::Lower {
                1.0
            } else {
                -1.0
            };
            let xb = self.basic_values();

            // Ratio test: (step, row, leaves at upper?)
            let mut best: Option<(f64, usize, bool)> = None;
            for i in 0..self.num_rows {
                let alpha = dir * self.t[i][j];
                let (limit, to_upper) = if alpha > PIVOT_TOL {
                    ((xb[i].max(0.0)) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    (
                        ((self.upper[self.basis[i]] - xb[i]).max(0.0)) / -alpha,
                        true,
                    )
                } else {
                    continue;
                };
                let replace = match best {
                    None => true,
                    Some((bl, bi, _)) => {
                        if limit < bl - DEGENERATE_STEP {
                            true
                        } else if limit <= bl + DEGENERATE_STEP {
                            if self.bland {
                                self.basis[i] < self.basis[bi]
                            } else {
                                self.t[i][j].abs() > self.t[bi][j].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if replace {
                    best = Some((limit, i, to_upper));
                }
            }
            self.iterations += 1;
            let flip = self.upper[j];
            let step = match best {
                Some((limit, _, _)) if limit < flip => limit,
                _ if flip.is_finite() => {
                    self.state[j] = if self.state[j] == State::Lower {
                        State::Upper
                    } else {
                        State::Lower
                    };
                    self.degenerate_run = 0;
                    continue;
                }
                _ => return PhaseEnd::Unbounded,
            };
            let (_, row, to_upper) = best.expect("ratio test produced a row");
            if step <= DEGENERATE_STEP {
                self.degenerate_run += 1;
                if self.degenerate_run > stall_limit {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            // Basic values are recomputed from beta and the nonbasic bounds,
            // so a pivot needs no explicit value update.
            let leaving = self.basis[row];
            self.pivot(row, j);
            self.basis[row] = j;
            self.state[j] = State::Basic;
            self.state[leaving] = if to_upper { State::Upper } else { State::Lower };
        }
    }
}

/// Solves `p`. With `max_iterations`, a solve that has not finished returns
/// `IterationLimit` with a valid (dual) upper bound as its objective value.
pub fn solve_lp(p: &LpProblem, max_iterations: Option<usize>) -> Result<LpSolution> {
    p.validate()?;
    let inner = Internal::build(p);
    let mut tab = Tableau::new(&inner);
    let ncols = tab.ncols();
    let scale = 1.0 + inner.rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let mut phase1_cost = vec![0.0; ncols];
    for c in phase1_cost.iter_mut().skip(tab.first_artificial) {
        *c = -1.0;
    }
    let mut phase2_cost = vec![0.0; ncols];
    phase2_cost[..tab.num_struct].copy_from_slice(&inner.cost);

    let limit_solution = |tab: &Tableau| -> LpSolution {
        let d = tab.reduced_costs(&phase2_cost);
        let pi: Vec<f64> = (0..tab.num_rows)
            .map(|i| (-d[tab.num_struct + i]).max(0.0))
            .collect();
        let z = tab.values();
        LpSolution {
            status: LpStatus::IterationLimit,
            y: inner.recover(&z[..tab.num_struct]),
            objective_value: inner.relaxed_bound(&pi),
            iterations: tab.iterations,
        }
    };

    if tab.first_artificial < ncols {
        match tab.run(&phase1_cost, max_iterations) {
            PhaseEnd::IterationLimit => return Ok(limit_solution(&tab)),
            PhaseEnd::Unbounded => unreachable!("phase one objective is bounded"),
            PhaseEnd::Optimal => {}
        }
        let x = tab.values();
        let infeasibility: f64 = x[tab.first_artificial..].iter().sum();
        if infeasibility > LP_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                y: Vec::new(),
                objective_value: f64::NEG_INFINITY,
                iterations: tab.iterations,
            });
        }
        for j in tab.first_artificial..ncols {
            tab.upper[j] = 0.0;
            if tab.state[j] == State::Upper {
                tab.state[j] = State::Lower;
            }
        }
    }

    let end = tab.run(&phase2_cost, max_iterations);
    let z = tab.values();
    let y = inner.recover(&z[..tab.num_struct]);
    let (status, objective_value) = match end {
        PhaseEnd::IterationLimit => return Ok(limit_solution(&tab)),
        PhaseEnd::Unbounded => (LpStatus::Unbounded, f64::INFINITY),
        PhaseEnd::Optimal => (LpStatus::Optimal, p.objective_at(&y)),
    };
    Ok(LpSolution {
        status,
        y,
        objective_value,
        iterations: tab.iterations,
    })
}
