//! Depth-first branch-and-bound.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bounds::{bound_to_int, lagrangian_dual, lp_relaxation, BoundResult, LagrangianParams};
use crate::branching::{
    all_constraints_select, all_violated_select, delta_candidates, frequency_candidates,
    lookahead_select, maxsd_select, most_violated_select, BranchDecision, Selection, Strategy,
    DEFAULT_LP_ITER_CAP,
};
use crate::error::{Error, Result};
use crate::heuristic::{local_search_capped, DEFAULT_EXPANSION_CAP, DEFAULT_RHO};
use crate::model::{brute_force_optimum, Assignment, CbqpInstance};
use crate::oracle::UbqpOracle;

/// Parent points handed to a child as extra initial cuts.
const MAX_INHERITED_SEEDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    Ld,
    Lp,
    Both,
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMode::Ld => "ld",
            BoundMode::Lp => "lp",
            BoundMode::Both => "both",
        })
    }
}

impl FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ld" => Ok(BoundMode::Ld),
            "lp" => Ok(BoundMode::Lp),
            "both" => Ok(BoundMode::Both),
            _ => Err(Error::UnknownName(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Limits {
    pub max_nodes: u64,
    pub max_time: Duration,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_nodes: 1_000_000,
            max_time: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub strategy: Strategy,
    pub rho: usize,
    pub bound_mode: BoundMode,
    pub limits: Limits,
    pub lagrangian: LagrangianParams,
    pub lp_iter_cap: usize,
    pub local_search_cap: usize,
    /// Nodes with at most this many free variables get their true optimum
    /// enumerated into the trace. 0 disables the audit.
    pub audit_max_n: usize,
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            strategy: Strategy::MostViolated,
            rho: DEFAULT_RHO,
            bound_mode: BoundMode::Ld,
            limits: Limits::default(),
            lagrangian: LagrangianParams::default(),
            lp_iter_cap: DEFAULT_LP_ITER_CAP,
            local_search_cap: DEFAULT_EXPANSION_CAP,
            audit_max_n: 0,
            record_trace: true,
        }
    }
}

impl SolveConfig {
    pub fn with_strategy(strategy: Strategy, bound_mode: BoundMode) -> Self {
        SolveConfig {
            strategy,
            bound_mode,
            ..SolveConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneReason {
    /// `bound_int >= incumbent`.
    Bound,
    Infeasible,
    /// All variables fixed.
    Leaf,
}

/// One processed node. Flat so it can be written as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub depth: usize,
    pub free_vars: usize,
    pub bound: Option<f64>,
    pub bound_int: Option<i64>,
    pub ld_bound_int: Option<i64>,
    pub lp_bound: Option<f64>,
    pub ld_converged: Option<bool>,
    /// Noise the oracle added to the call that produced the LD bound.
    pub inflation: f64,
    /// LD bound with the inflation removed.
    pub deflated_bound_int: Option<i64>,
    pub incumbent_before: Option<i64>,
    pub incumbent_after: Option<i64>,
    pub prune: Option<PruneReason>,
    /// A bound prune that would not have happened without the inflation.
    pub inflated_prune: bool,
    pub branch_variable: Option<usize>,
    pub branch_first_value: Option<bool>,
    pub queries: u64,
    pub audited: bool,
    /// Exhaustive node optimum when audited; empty if the node is infeasible.
    pub true_optimum: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Optimum {
    Proven(i64),
    Infeasible,
    /// A limit stopped the search; carries the incumbent value if any.
    Unproven(Option<i64>),
}

impl Optimum {
    pub fn value(&self) -> Option<i64> {
        match *self {
            Optimum::Proven(v) => Some(v),
            Optimum::Unproven(v) => v,
            Optimum::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub optimum: Optimum,
    pub incumbent: Option<Assignment>,
    pub nodes: u64,
    pub oracle_queries: u64,
    /// Seconds.
    pub wall_time: f64,
    pub strategy: Strategy,
    pub bound_mode: BoundMode,
    pub oracle: String,
    pub trace: Vec<NodeRecord>,
}

pub fn prune_check(lower_bound_int: i64, incumbent_value: Option<i64>) -> bool {
    incumbent_value.is_some_and(|u| lower_bound_int >= u)
}

struct Node {
    inst: CbqpInstance,
    depth: usize,
    /// Original-dimension points from the parent, used as initial cuts.
    seeds: Vec<Vec<bool>>,
}

struct Search<'a> {
    root: &'a CbqpInstance,
    oracle: &'a dyn UbqpOracle,
    cfg: &'a SolveConfig,
    incumbent: Option<Assignment>,
}

impl Search<'_> {
    fn incumbent_value(&self) -> Option<i64> {
        self.incumbent.as_ref().map(|a| a.value)
    }

    /// Offers an original-dimension point; feasible improvements become the
    /// incumbent and are polished by local search.
    fn offer(&mut self, x: &[bool]) -> Result<()> {
        if !self.root.is_feasible(x)? {
            return Ok(());
        }
        let value = self.root.evaluate_objective(x)?;
        if self.incumbent_value().is_some_and(|u| value >= u) {
            return Ok(());
        }
        let polished = local_search_capped(self.root, x, self.cfg.rho, self.cfg.local_search_cap)?;
        self.incumbent = Some(if polished.value < value {
            polished
        } else {
            Assignment {
                bits: x.to_vec(),
                value,
            }
        });
        Ok(())
    }

    fn seeds_for(&self, node: &Node) -> Vec<Vec<bool>> {
        let mut seeds = Vec::new();
        if let Some(inc) = &self.incumbent {
            if let Some(y) = node.inst.restrict(&inc.bits) {
                seeds.push(y);
            }
        }
        seeds.extend(node.seeds.iter().filter_map(|x| node.inst.restrict(x)));
        seeds.push(vec![false; node.inst.n()]);
        seeds
    }

    fn select(
        &self,
        inst: &CbqpInstance,
        x_u: &[bool],
        pool: &[Vec<bool>],
    ) -> Result<Option<BranchDecision>> {
        let fallback = |s: Selection| -> Result<Option<BranchDecision>> {
            match s {
                Selection::Branch(d) => Ok(Some(d)),
                Selection::NoViolation => Ok(Some(all_constraints_select(inst, x_u)?)),
                Selection::NodeInfeasible => Ok(None),
            }
        };
        let strategy = self.cfg.strategy;
        match strategy {
            Strategy::MostViolated => fallback(most_violated_select(inst, x_u)?),
            Strategy::AllViolated => fallback(all_violated_select(inst, x_u)?),
            Strategy::AllConstraints => Ok(Some(all_constraints_select(inst, x_u)?)),
            Strategy::MaxSd => fallback(maxsd_select(inst)?),
            Strategy::LpLookahead(k) => {
                let cands = delta_candidates(inst, x_u)?;
                Ok(Some(lookahead_select(
                    inst,
                    &cands,
                    k,
                    self.cfg.lp_iter_cap,
                    strategy,
                )?))
            }
            Strategy::FrequencyLookahead(k) => {
                let cands = frequency_candidates(pool)?;
                Ok(Some(lookahead_select(
                    inst,
                    &cands,
                    k,
                    self.cfg.lp_iter_cap,
                    strategy,
                )?))
            }
        }
    }
}

/// Solves `inst` to proven optimality unless a limit is reached first.
pub fn solve(
    inst: &CbqpInstance,
    oracle: &dyn UbqpOracle,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let queries_before = oracle.stats().queries();
    let mut search = Search {
        root: inst,
        oracle,
        cfg,
        incumbent: None,
    };
    root_heuristics(&mut search)?;

    let mut stack = vec![Node {
        inst: inst.clone(),
        depth: 0,
        seeds: Vec::new(),
    }];
    let mut trace = Vec::new();
    let mut nodes = 0u64;
    let mut limit_hit = false;

    while let Some(node) = stack.pop() {
        if nodes >= cfg.limits.max_nodes || start.elapsed() >= cfg.limits.max_time {
            limit_hit = true;
            break;
        }
        nodes += 1;
        let q0 = search.oracle.stats().queries();
        let mut rec = NodeRecord {
            id: nodes - 1,
            depth: node.depth,
            free_vars: node.inst.n(),
            bound: None,
            bound_int: None,
            ld_bound_int: None,
            lp_bound: None,
            ld_converged: None,
            inflation: 0.0,
            deflated_bound_int: None,
            incumbent_before: search.incumbent_value(),
            incumbent_after: None,
            prune: None,
            inflated_prune: false,
            branch_variable: None,
            branch_first_value: None,
            queries: 0,
            audited: false,
            true_optimum: None,
        };
        if cfg.audit_max_n > 0 && node.inst.n() <= cfg.audit_max_n {
            rec.audited = true;
            rec.true_optimum = brute_force_optimum(&node.inst)?.map(|a| a.value);
        }
        let children = process_node(&mut search, node, &mut rec)?;
        rec.queries = search.oracle.stats().queries() - q0;
        rec.incumbent_after = search.incumbent_value();
        if cfg.record_trace {
            trace.push(rec);
        }
        stack.extend(children);
    }

    let optimum = match (&search.incumbent, limit_hit) {
        (_, true) => Optimum::Unproven(search.incumbent_value()),
        (Some(a), false) => Optimum::Proven(a.value),
        (None, false) => Optimum::Infeasible,
    };
    Ok(SolveReport {
        optimum,
        incumbent: search.incumbent,
        nodes,
        oracle_queries: oracle.stats().queries() - queries_before,
        wall_time: start.elapsed().as_secs_f64(),
        strategy: cfg.strategy,
        bound_mode: cfg.bound_mode,
        oracle: oracle.name(),
        trace,
    })
}

/// Tries `x = 0`, then greedy repair of the total violation.
fn root_heuristics(search: &mut Search) -> Result<()> {
    let inst = search.root;
    let n = inst.n();
    let mut x = vec![false; n];
    let violation = |x: &[bool]| -> Result<i64> {
        Ok(inst.slacks(x)?.iter().filter(|&&s| s < 0).map(|s| -s).sum())
    };
    let mut v = violation(&x)?;
    for _ in 0..2 * n {
        if v == 0 {
            break;
        }
        let mut best: Option<(usize, i64)> = None;
        for j in 0..n {
            x[j] = !x[j];
            let vj = violation(&x)?;
            x[j] = !x[j];
            if vj < best.map_or(v, |(_, b)| b) {
                best = Some((j, vj));
            }
        }
        let Some((j, vj)) = best else { break };
        x[j] = !x[j];
        v = vj;
    }
    if v == 0 {
        search.offer(&x)?;
    }
    Ok(())
}

/// Bounds, harvests and branches one node. Returns the children in push
/// order (the child to explore first is last).
fn process_node(search: &mut Search, node: Node, rec: &mut NodeRecord) -> Result<Vec<Node>> {
    let inst = &node.inst;
    if inst.n() == 0 {
        rec.prune = Some(PruneReason::Leaf);
        if inst.b().iter().all(|&bi| bi >= 0) {
            rec.bound = Some(inst.offset() as f64);
            rec.bound_int = Some(inst.offset());
            let x = inst.lift(&[])?;
            search.offer(&x)?;
        } else {
            rec.prune = Some(PruneReason::Infeasible);
        }
        return Ok(Vec::new());
    }
    if inst.trivially_infeasible() {
        rec.prune = Some(PruneReason::Infeasible);
        return Ok(Vec::new());
    }

    let cfg = search.cfg;
    let mut ld: Option<BoundResult> = None;
    let mut lp_x: Option<Vec<bool>> = None;
    let mut bound = f64::NEG_INFINITY;

    if matches!(cfg.bound_mode, BoundMode::Lp | BoundMode::Both) {
        match lp_relaxation(inst, None)? {
            None => {
                rec.prune = Some(PruneReason::Infeasible);
                return Ok(Vec::new());
            }
            Some(r) => {
                rec.lp_bound = Some(r.bound);
                bound = bound.max(r.bound);
                lp_x = Some(r.x.iter().map(|&v| v >= 0.5).collect());
            }
        }
    }
    if matches!(cfg.bound_mode, BoundMode::Ld | BoundMode::Both) {
        let seeds = search.seeds_for(&node);
        let r = lagrangian_dual(inst, search.oracle, &seeds, &cfg.lagrangian)?;
        rec.ld_bound_int = Some(r.bound_int);
        rec.ld_converged = Some(r.converged);
        rec.inflation = r.inflation;
        rec.deflated_bound_int = Some(bound_to_int(r.bound - r.inflation));
        bound = bound.max(r.bound);
        ld = Some(r);
    }
    let bound_int = bound_to_int(bound);
    rec.bound = Some(bound);
    rec.bound_int = Some(bound_int);

    // Harvest before the prune test so a feasible minimizer that closes the
    // gap prunes this node immediately.
    let mut pool: Vec<Vec<bool>> = Vec::new();
    if let Some(r) = &ld {
        for y in &r.spectrum_pool {
            let x = inst.lift(y)?;
            search.offer(&x)?;
            pool.push(y.clone());
        }
    }
    let x_u = match (&ld, &lp_x) {
        (Some(r), _) => r.minimizer.clone(),
        (None, Some(x)) => x.clone(),
        (None, None) => unreachable!("every bound mode computes a bound"),
    };
    if ld.is_none() {
        search.offer(&inst.lift(&x_u)?)?;
        pool.push(x_u.clone());
        if let Some(inc) = &search.incumbent {
            if let Some(y) = inst.restrict(&inc.bits) {
                pool.push(y);
            }
        }
    }

    if prune_check(bound_int, search.incumbent_value()) {
        rec.prune = Some(PruneReason::Bound);
        if let Some(d) = rec.deflated_bound_int {
            let honest = match rec.lp_bound {
                Some(lp) => d.max(bound_to_int(lp)),
                None => d,
            };
            rec.inflated_prune =
                rec.inflation > 0.0 && !prune_check(honest, search.incumbent_value());
        }
        return Ok(Vec::new());
    }

    let Some(decision) = search.select(inst, &x_u, &pool)? else {
        rec.prune = Some(PruneReason::Infeasible);
        return Ok(Vec::new());
    };
    rec.branch_variable = Some(decision.variable);
    rec.branch_first_value = Some(decision.first_value);

    let seeds: Vec<Vec<bool>> = pool
        .iter()
        .take(MAX_INHERITED_SEEDS)
        .map(|y| inst.lift(y))
        .collect::<Result<_>>()?;
    let child = |v: bool| -> Result<Node> {
        Ok(Node {
            inst: inst.reduce_fix(decision.local, v)?,
            depth: node.depth + 1,
            seeds: seeds.clone(),
        })
    };
    Ok(vec![
        child(!decision.first_value)?,
        child(decision.first_value)?,
    ])
}
