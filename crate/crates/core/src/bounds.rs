//! Lower bounds for a CBQP node.
//!
//! * [`lp_relaxation`] linearizes each product `x_i x_j` with a continuous
//!   variable and solves the resulting LP.
//! * [`lagrangian_dual`] maximizes `d(lambda) = min_x x^TQx + lambda^T(Ax - b)`
//!   by outer linearization: a restricted LP over a growing cut set `T`
//!   proposes multipliers, and a UBQP oracle evaluates `d` there and returns
//!   the next cut.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::CbqpInstance;
use crate::oracle::{UbqpInstance, UbqpOracle, DEFAULT_K_SPEC};
use crate::simplex::{solve_lp, LpProblem, LpStatus, Relation};

/// Convergence tolerance on `mu* - d(lambda*)`.
pub const TAU_CONV: f64 = 1e-6;
/// Slack used when rounding a real bound up to an integer bound.
pub const TAU_INT: f64 = 1e-6;
/// Multipliers are snapped to multiples of `2^-LAMBDA_SCALE_BITS`.
pub const LAMBDA_SCALE_BITS: u32 = 20;

/// `ceil(bound - TAU_INT)`, valid because optimal values are integers.
pub fn bound_to_int(bound: f64) -> i64 {
    if bound.is_nan() || bound == f64::NEG_INFINITY {
        return i64::MIN;
    }
    let v = (bound - TAU_INT).ceil();
    if v >= i64::MAX as f64 {
        i64::MAX
    } else if v <= i64::MIN as f64 {
        i64::MIN
    } else {
        v as i64
    }
}

/// Outcome of the linearization relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRelaxation {
    /// Valid lower bound on the node optimum (objective offset included).
    pub bound: f64,
    /// LP values of the original variables.
    pub x: Vec<f64>,
    /// False when an iteration cap stopped the solve early.
    pub solved: bool,
}

/// Linearization of `inst` as a maximization LP: variables `x_0..x_n`, then one
/// `y` per nonzero off-diagonal pair `i < j`.
pub fn linearized_lp(inst: &CbqpInstance) -> LpProblem {
    let n = inst.n();
    let q = inst.q();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| q[i][j] != 0)
        .collect();
    let nv = n + pairs.len();
    let mut objective = vec![0.0; nv];
    for i in 0..n {
        objective[i] = -(q[i][i] as f64);
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        objective[n + k] = -2.0 * q[i][j] as f64;
    }
    let mut lp = LpProblem::new(objective);
    // y <= 1 is implied at every LP optimum (y <= x_i for negative pairs, y
    // minimal for positive ones); the explicit box keeps truncated solves
    // bounded.
    lp.bounds = vec![(0.0, 1.0); nv];
    for (row, &bi) in inst.a().iter().zip(inst.b()) {
        let mut g = vec![0.0; nv];
        for j in 0..n {
            g[j] = row[j] as f64;
        }
        lp.add_row(g, Relation::Le, bi as f64);
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if q[i][j] > 0 {
            // y >= x_i + x_j - 1
            let mut g = vec![0.0; nv];
            g[i] = 1.0;
            g[j] = 1.0;
            g[n + k] = -1.0;
            lp.add_row(g, Relation::Le, 1.0);
        } else {
            for v in [i, j] {
                let mut g = vec![0.0; nv];
                g[n + k] = 1.0;
                g[v] = -1.0;
                lp.add_row(g, Relation::Le, 0.0);
            }
        }
    }
    lp
}

/// Solves the linearization, optionally capped at `max_iterations` simplex
/// iterations. `None` means the node is infeasible.
pub fn lp_relaxation(
    inst: &CbqpInstance,
    max_iterations: Option<usize>,
) -> Result<Option<LpRelaxation>> {
    let lp = linearized_lp(inst);
    let sol = solve_lp(&lp, max_iterations)?;
    let offset = inst.offset() as f64;
    let n = inst.n();
    match sol.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Optimal => Ok(Some(LpRelaxation {
            bound: -sol.objective_value + offset,
            x: sol.y[..n].to_vec(),
            solved: true,
        })),
        LpStatus::IterationLimit => Ok(Some(LpRelaxation {
            bound: -sol.objective_value + offset,
            x: sol.y[..n].to_vec(),
            solved: false,
        })),
        LpStatus::Unbounded => Err(Error::InvalidLp(
            "linearization of a bounded problem reported unbounded".into(),
        )),
    }
}

/// LP-relaxation lower bound; `None` when the relaxation is infeasible.
pub fn lp_relaxation_bound(inst: &CbqpInstance) -> Result<Option<f64>> {
    Ok(lp_relaxation(inst, None)?.map(|r| r.bound))
}

fn snap(v: f64) -> i128 {
    (v * (1u64 << LAMBDA_SCALE_BITS) as f64).round() as i128
}

fn snap_multipliers(lambda: &[f64]) -> Result<Vec<i128>> {
    lambda
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(Error::InvalidLp(format!("non-finite multiplier at {i}")));
            }
            let s = snap(v);
            if s < 0 {
                return Err(Error::NegativeMultiplier { index: i, value: v });
            }
            Ok(s)
        })
        .collect()
}

/// UBQP whose objective is `L(x, lambda) = x^TQx + offset + lambda^T(Ax - b)`,
/// with `lambda` snapped to the `2^-20` grid first.
pub fn build_lagrangian_ubqp(inst: &CbqpInstance, lambda: &[f64]) -> Result<UbqpInstance> {
    if lambda.len() != inst.m() {
        return Err(Error::DimensionMismatch {
            expected: inst.m(),
            actual: lambda.len(),
        });
    }
    let lam = snap_multipliers(lambda)?;
    let den = 1i128 << LAMBDA_SCALE_BITS;
    let n = inst.n();
    let mut q: Vec<Vec<i128>> = inst
        .q()
        .iter()
        .map(|row| row.iter().map(|&v| v as i128 * den).collect())
        .collect();
    let mut offset = inst.offset() as i128 * den;
    for (i, &li) in lam.iter().enumerate() {
        if li == 0 {
            continue;
        }
        for j in 0..n {
            q[j][j] += li * inst.a()[i][j] as i128;
        }
        offset -= li * inst.b()[i] as i128;
    }
    UbqpInstance::new(q, offset, LAMBDA_SCALE_BITS)
}

/// Evaluates the snapped multiplier vector exactly as the oracle sees it.
pub fn snapped(lambda: &[f64]) -> Vec<f64> {
    let den = (1u64 << LAMBDA_SCALE_BITS) as f64;
    lambda.iter().map(|&v| snap(v) as f64 / den).collect()
}

/// Default multiplier cap `2 n max|q| + 1`, applied only when the restricted
/// LP has no feasible cut to keep it bounded.
pub fn default_lambda_upper(inst: &CbqpInstance) -> Vec<f64> {
    let u = 2.0 * inst.n() as f64 * inst.max_abs_q() as f64 + 1.0;
    vec![u; inst.m()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianParams {
    pub max_cuts: usize,
    pub tau_conv: f64,
    pub k_spec: usize,
    /// Forces a finite box `0 <= lambda <= u` from the start.
    pub lambda_upper: Option<Vec<f64>>,
}

impl Default for LagrangianParams {
    fn default() -> Self {
        LagrangianParams {
            max_cuts: 200,
            tau_conv: TAU_CONV,
            k_spec: DEFAULT_K_SPEC,
            lambda_upper: None,
        }
    }
}

/// A cut `mu <= f(x) + lambda . g(x)` with `f(x) = x^TQx + offset` and
/// `g(x) = Ax - b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    pub bits: Vec<bool>,
    pub objective: i64,
    pub residual: Vec<i64>,
}

impl Cut {
    pub fn new(inst: &CbqpInstance, bits: Vec<bool>) -> Result<Cut> {
        let objective = inst.evaluate_objective(&bits)?;
        let residual = inst.slacks(&bits)?.into_iter().map(|s| -s).collect();
        Ok(Cut {
            bits,
            objective,
            residual,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.residual.iter().all(|&r| r <= 0)
    }

    /// Value of the cut's linear function at `lambda`.
    pub fn value_at(&self, lambda: &[f64]) -> f64 {
        self.objective as f64
            + self
                .residual
                .iter()
                .zip(lambda)
                .map(|(&r, &l)| r as f64 * l)
                .sum::<f64>()
    }
}

/// Cutting-plane state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub cuts: Vec<Cut>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub best_dual: f64,
    pub lambda_upper: Vec<f64>,
    pub iterations: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualIteration {
    pub mu: f64,
    pub dual: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub bound: f64,
    pub bound_int: i64,
    /// Snapped multipliers at which `bound` was attained.
    pub certificate_lambda: Vec<f64>,
    /// Oracle minimizer at `certificate_lambda` (node indices).
    pub minimizer: Vec<bool>,
    /// Every assignment returned in any spectrum, first-seen order.
    pub spectrum_pool: Vec<Vec<bool>>,
    pub converged: bool,
    /// Noise added by the oracle to the call that produced `bound`.
    pub inflation: f64,
    pub queries: usize,
    pub history: Vec<DualIteration>,
}

fn restricted_lp(cuts: &[Cut], m: usize, upper: &[f64]) -> LpProblem {
    // Variables: mu, lambda_1..lambda_m.
    let mut objective = vec![0.0; m + 1];
    objective[0] = 1.0;
    let mut lp = LpProblem::new(objective);
    lp.bounds[0] = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..m {
        lp.bounds[i + 1] = (0.0, upper[i]);
    }
    for cut in cuts {
        let mut g = Vec::with_capacity(m + 1);
        g.push(1.0);
        g.extend(cut.residual.iter().map(|&r| -(r as f64)));
        lp.add_row(g, Relation::Le, cut.objective as f64);
    }
    lp
}

/// Lagrangian dual bound by outer linearization, seeded with `seeds` as the
/// initial cut set.
pub fn lagrangian_dual(
    inst: &CbqpInstance,
    oracle: &dyn UbqpOracle,
    seeds: &[Vec<bool>],
    params: &LagrangianParams,
) -> Result<BoundResult> {
    if seeds.is_empty() {
        return Err(Error::EmptyCutSet);
    }
    let m = inst.m();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut cuts = Vec::new();
    for s in seeds {
        if seen.insert(s.clone()) {
            cuts.push(Cut::new(inst, s.clone())?);
        }
    }
    let mut pool_seen: HashSet<Vec<bool>> = HashSet::new();
    let mut pool = Vec::new();
    let mut absorb = |bits: &Vec<bool>, pool: &mut Vec<Vec<bool>>| {
        if pool_seen.insert(bits.clone()) {
            pool.push(bits.clone());
        }
    };

    if m == 0 {
        let u = build_lagrangian_ubqp(inst, &[])?;
        let s = oracle.solve(&u, params.k_spec)?;
        for e in &s.entries {
            absorb(&e.bits, &mut pool);
        }
        let d = s.min_value_f64();
        return Ok(BoundResult {
            bound: d,
            bound_int: bound_to_int(d),
            certificate_lambda: Vec::new(),
            minimizer: s.best().bits.clone(),
            spectrum_pool: pool,
            converged: true,
            inflation: s.inflation as f64 / s.denominator as f64,
            queries: 1,
            history: vec![DualIteration {
                mu: d,
                dual: d,
                lambda: Vec::new(),
            }],
        });
    }

    let mut state = DualState {
        lambda_upper: match &params.lambda_upper {
            Some(u) => u.clone(),
            None if cuts.iter().any(Cut::is_feasible) => vec![f64::INFINITY; m],
            None => default_lambda_upper(inst),
        },
        cuts,
        lambda: vec![0.0; m],
        mu: f64::INFINITY,
        best_dual: f64::NEG_INFINITY,
        iterations: 0,
        queries: 0,
    };
    let mut result = BoundResult {
        bound: f64::NEG_INFINITY,
        bound_int: i64::MIN,
        certificate_lambda: vec![0.0; m],
        minimizer: Vec::new(),
        spectrum_pool: Vec::new(),
        converged: false,
        inflation: 0.0,
        queries: 0,
        history: Vec::new(),
    };

    while state.iterations < params.max_cuts {
        let lp = restricted_lp(&state.cuts, m, &state.lambda_upper);
        let sol = solve_lp(&lp, None)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Unbounded if state.lambda_upper.iter().any(|u| u.is_infinite()) => {
                state.lambda_upper = default_lambda_upper(inst);
                continue;
            }
            other => {
                return Err(Error::InvalidLp(format!(
                    "restricted dual LP ended with {other:?}"
                )))
            }
        }
        state.iterations += 1;
        state.mu = sol.y[0];
        let raw: Vec<f64> = sol.y[1..]
            .iter()
            .zip(&state.lambda_upper)
            .map(|(&l, &u)| l.clamp(0.0, u))
            .collect();
        state.lambda = snapped(&raw);

        let u = build_lagrangian_ubqp(inst, &state.lambda)?;
        let spectrum = oracle.solve(&u, params.k_spec)?;
        state.queries += 1;
        for e in &spectrum.entries {
            absorb(&e.bits, &mut pool);
        }
        let d = spectrum.min_value_f64();
        if d > state.best_dual {
            state.best_dual = d;
            result.certificate_lambda = state.lambda.clone();
            result.minimizer = spectrum.best().bits.clone();
            result.inflation = spectrum.inflation as f64 / spectrum.denominator as f64;
        }
        result.history.push(DualIteration {
            mu: state.mu,
            dual: d,
            lambda: state.lambda.clone(),
        });
        if state.mu - d <= params.tau_conv {
            result.converged = true;
            break;
        }
        let next = spectrum.best().bits.clone();
        if !seen.insert(next.clone()) {
            // Only reachable through multiplier snapping.
            break;
        }
        state.cuts.push(Cut::new(inst, next)?);
    }

    result.bound = state.best_dual;
    result.bound_int = bound_to_int(state.best_dual);
    result.spectrum_pool = pool;
    result.queries = state.queries;
    Ok(result)
}

/// `x^T Q x + c . x - r <= 0` in binary variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticConstraint {
    pub q: Vec<Vec<i64>>,
    pub c: Vec<i64>,
    pub r: i64,
}

/// Lagrangian relaxation of a binary QCQP: the UBQP with matrix
/// `Q0 + sum lambda_i Q_i`, linear parts on the diagonal and offset
/// `-sum lambda_i r_i`.
pub fn relax_quadratic_constraints(
    q0: &[Vec<i64>],
    constraints: &[QuadraticConstraint],
    lambda: &[f64],
) -> Result<UbqpInstance> {
    let n = q0.len();
    if lambda.len() != constraints.len() {
        return Err(Error::DimensionMismatch {
            expected: constraints.len(),
            actual: lambda.len(),
        });
    }
    let check = |len: usize| {
        if len != n {
            Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            })
        } else {
            Ok(())
        }
    };
    for row in q0 {
        check(row.len())?;
    }
    for c in constraints {
        check(c.q.len())?;
        check(c.c.len())?;
        for row in &c.q {
            check(row.len())?;
        }
    }
    let lam = snap_multipliers(lambda)?;
    let den = 1i128 << LAMBDA_SCALE_BITS;
    let mut q: Vec<Vec<i128>> = q0
        .iter()
        .map(|row| row.iter().map(|&v| v as i128 * den).collect())
        .collect();
    let mut offset = 0i128;
    for (con, &li) in constraints.iter().zip(&lam) {
        for i in 0..n {
            for j in 0..n {
                q[i][j] += li * con.q[i][j] as i128;
            }
            q[i][i] += li * con.c[i] as i128;
        }
        offset -= li * con.r as i128;
    }
    UbqpInstance::new(q, offset, LAMBDA_SCALE_BITS)
}
