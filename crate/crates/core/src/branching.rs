//! Variable/value selection.
//!
//! Ties are broken the same way everywhere: lowest variable index first, then
//! value 1 before value 0.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::lp_relaxation;
use crate::error::{Error, Result};
use crate::model::CbqpInstance;

pub const DEFAULT_LP_ITER_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    /// Most violated constraint.
    MostViolated,
    /// Sum over violated constraints.
    AllViolated,
    /// Sum over all constraints.
    AllConstraints,
    /// k-look-ahead on LP child bounds, candidates ranked by `|sum_i delta_ij|`.
    LpLookahead(usize),
    /// k-look-ahead on LP child bounds, candidates ranked by spectrum frequency.
    FrequencyLookahead(usize),
    /// Maximum solution density over knapsack rows.
    MaxSd,
}

impl Strategy {
    /// The eight named presets, in report column order.
    pub fn all() -> Vec<Strategy> {
        vec![
            Strategy::MostViolated,
            Strategy::AllViolated,
            Strategy::AllConstraints,
            Strategy::LpLookahead(4),
            Strategy::LpLookahead(8),
            Strategy::FrequencyLookahead(4),
            Strategy::FrequencyLookahead(8),
            Strategy::MaxSd,
        ]
    }

    pub fn uses_lookahead(&self) -> bool {
        matches!(
            self,
            Strategy::LpLookahead(_) | Strategy::FrequencyLookahead(_)
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::MostViolated => write!(f, "mostviol"),
            Strategy::AllViolated => write!(f, "allviol"),
            Strategy::AllConstraints => write!(f, "allcst"),
            Strategy::LpLookahead(k) => write!(f, "lp{k}"),
            Strategy::FrequencyLookahead(k) => write!(f, "freq{k}"),
            Strategy::MaxSd => write!(f, "maxsd"),
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_k = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::UnknownName(s.to_string()))
        };
        match s {
            "mostviol" => Ok(Strategy::MostViolated),
            "allviol" => Ok(Strategy::AllViolated),
            "allcst" => Ok(Strategy::AllConstraints),
            "maxsd" => Ok(Strategy::MaxSd),
            _ => {
                if let Some(rest) = s.strip_prefix("freq") {
                    Ok(Strategy::FrequencyLookahead(parse_k(rest)?))
                } else if let Some(rest) = s.strip_prefix("lp") {
                    Ok(Strategy::LpLookahead(parse_k(rest)?))
                } else {
                    Err(Error::UnknownName(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDecision {
    /// Index in the original instance.
    pub variable: usize,
    /// Index in the node's reduced instance.
    pub local: usize,
    /// Value whose child is explored first.
    pub first_value: bool,
    pub score: f64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Branch(BranchDecision),
    /// The selector has nothing to act on (e.g. the LD solution is feasible).
    NoViolation,
    /// The selector proved the node has no feasible point.
    NodeInfeasible,
}

/// A `(local variable, value)` pair with a ranking score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub variable: usize,
    pub value: bool,
    pub score: f64,
}

fn decision(
    inst: &CbqpInstance,
    local: usize,
    value: bool,
    score: f64,
    strategy: Strategy,
) -> BranchDecision {
    BranchDecision {
        variable: inst.index_map()[local],
        local,
        first_value: value,
        score,
        strategy,
    }
}

/// First index of the maximum (strict improvement only).
fn argmax(scores: &[i64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(j);
        }
    }
    best
}

/// `sum_{i in rows} delta_ij` for every variable.
fn delta_sums(inst: &CbqpInstance, x_u: &[bool], rows: &[usize]) -> Result<Vec<i64>> {
    (0..inst.n())
        .map(|j| {
            rows.iter()
                .try_fold(0i64, |acc, &i| Ok(acc + inst.delta(x_u, i, j)?))
        })
        .collect()
}

fn flip_branch(
    inst: &CbqpInstance,
    x_u: &[bool],
    rows: &[usize],
    strategy: Strategy,
) -> Result<Selection> {
    let sums = delta_sums(inst, x_u, rows)?;
    match argmax(&sums) {
        Some(j) => Ok(Selection::Branch(decision(
            inst,
            j,
            !x_u[j],
            sums[j] as f64,
            strategy,
        ))),
        None => Ok(Selection::NoViolation),
    }
}

/// Picks the row with the smallest slack and the variable whose flip raises
/// that slack the most. Aborts only when the smallest slack is positive.
pub fn most_violated_select(inst: &CbqpInstance, x_u: &[bool]) -> Result<Selection> {
    let s = inst.slacks(x_u)?;
    let Some(i) = (0..s.len()).min_by_key(|&i| (s[i], i)) else {
        return Ok(Selection::NoViolation);
    };
    if s[i] > 0 {
        return Ok(Selection::NoViolation);
    }
    flip_branch(inst, x_u, &[i], Strategy::MostViolated)
}

pub fn all_violated_select(inst: &CbqpInstance, x_u: &[bool]) -> Result<Selection> {
    let s = inst.slacks(x_u)?;
    let violated: Vec<usize> = (0..s.len()).filter(|&i| s[i] < 0).collect();
    if violated.is_empty() {
        return Ok(Selection::NoViolation);
    }
    flip_branch(inst, x_u, &violated, Strategy::AllViolated)
}

/// Never aborts; the winning score may be nonpositive.
pub fn all_constraints_select(inst: &CbqpInstance, x_u: &[bool]) -> Result<BranchDecision> {
    let rows: Vec<usize> = (0..inst.m()).collect();
    if inst.n() == 0 {
        return Err(Error::EmptyCandidates);
    }
    match flip_branch(inst, x_u, &rows, Strategy::AllConstraints)? {
        Selection::Branch(d) => Ok(d),
        _ => unreachable!("n > 0 always yields an argmax"),
    }
}

/// Unfixed variables ranked by `|sum_i delta_ij|`, each paired with the value
/// that flips it away from `x_u`.
pub fn delta_candidates(inst: &CbqpInstance, x_u: &[bool]) -> Result<Vec<Candidate>> {
    let rows: Vec<usize> = (0..inst.m()).collect();
    let sums = delta_sums(inst, x_u, &rows)?;
    let mut cands: Vec<Candidate> = sums
        .iter()
        .enumerate()
        .map(|(j, &s)| Candidate {
            variable: j,
            value: !x_u[j],
            score: s.unsigned_abs() as f64,
        })
        .collect();
    cands.sort_by(rank);
    Ok(cands)
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.variable.cmp(&b.variable))
        .then(b.value.cmp(&a.value))
}

/// Per-variable counts of each value over a solution pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    pub counts: Vec<[u64; 2]>,
}

impl FrequencyTable {
    pub fn from_pool(pool: &[Vec<bool>]) -> Result<FrequencyTable> {
        let first = pool.first().ok_or(Error::EmptyPool)?;
        let n = first.len();
        let mut counts = vec![[0u64; 2]; n];
        for x in pool {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: x.len(),
                });
            }
            for (c, &v) in counts.iter_mut().zip(x) {
                c[v as usize] += 1;
            }
        }
        Ok(FrequencyTable { counts })
    }
}

/// All `(i, s)` pairs ranked by how often `x_i = s` in the pool.
pub fn frequency_candidates(pool: &[Vec<bool>]) -> Result<Vec<Candidate>> {
    let table = FrequencyTable::from_pool(pool)?;
    let mut cands: Vec<Candidate> = table
        .counts
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            [true, false].map(|v| Candidate {
                variable: i,
                value: v,
                score: c[v as usize] as f64,
            })
        })
        .collect();
    cands.sort_by(rank);
    Ok(cands)
}

/// Walks `candidates` in order, keeping the one with the largest probe value,
/// and stops after `k` consecutive probes without strict improvement.
/// Returns the winner, its probe value and the number of probes made.
pub fn lookahead_with<F>(
    candidates: &[Candidate],
    k: usize,
    mut probe: F,
) -> Result<(Candidate, f64, usize)>
where
    F: FnMut(&Candidate) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let k = k.max(1);
    let mut best: Option<(Candidate, f64)> = None;
    let mut stale = 0;
    let mut probes = 0;
    for cand in candidates {
        let value = probe(cand)?;
        probes += 1;
        match best {
            Some((_, b)) if value <= b => {
                stale += 1;
                if stale >= k {
                    break;
                }
            }
            _ => {
                best = Some((*cand, value));
                stale = 0;
            }
        }
    }
    let (cand, value) = best.expect("at least one probe");
    Ok((cand, value, probes))
}

/// LP bound of the child with `(variable, value)` fixed; `+inf` when the child
/// relaxation is infeasible.
pub fn probe_child_bound(inst: &CbqpInstance, cand: &Candidate, lp_iter_cap: usize) -> Result<f64> {
    let child = inst.reduce_fix(cand.variable, cand.value)?;
    Ok(match lp_relaxation(&child, Some(lp_iter_cap))? {
        None => f64::INFINITY,
        Some(r) => r.bound,
    })
}

/// k-look-ahead using iteration-capped LP bounds of the children.
pub fn lookahead_select(
    inst: &CbqpInstance,
    candidates: &[Candidate],
    k: usize,
    lp_iter_cap: usize,
    strategy: Strategy,
) -> Result<BranchDecision> {
    let (cand, value, _) =
        lookahead_with(candidates, k, |c| probe_child_bound(inst, c, lp_iter_cap))?;
    Ok(decision(inst, cand.variable, cand.value, value, strategy))
}

/// Number of binary vectors with `coeffs . x <= rhs`, optionally with one
/// coordinate fixed.
pub fn knapsack_count(coeffs: &[i64], rhs: i64, fixed: Option<(usize, bool)>) -> Result<u64> {
    let mut rhs = rhs as i128;
    if let Some((idx, bit)) = fixed {
        if idx >= coeffs.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                limit: coeffs.len(),
            });
        }
        if bit {
            rhs -= coeffs[idx] as i128;
        }
    }
    let free = coeffs
        .iter()
        .enumerate()
        .filter(|&(k, _)| fixed.is_none_or(|(idx, _)| idx != k))
        .map(|(_, &c)| c as i128);
    let lo: i128 = free.clone().filter(|&c| c < 0).sum();
    let hi: i128 = free.clone().filter(|&c| c > 0).sum();
    if rhs < lo {
        return Ok(0);
    }
    let width = (hi - lo + 1) as usize;
    if width > 1 << 26 {
        return Err(Error::InvalidInstance(
            "knapsack coefficients too large to count".into(),
        ));
    }
    // counts[s - lo] = number of partial assignments with sum s
    let mut counts = vec![0u64; width];
    counts[(-lo) as usize] = 1;
    let mut reach_lo = 0i128;
    let mut reach_hi = 0i128;
    for c in free {
        if c == 0 {
            for v in counts.iter_mut() {
                *v = v.checked_mul(2).ok_or(Error::CountOverflow)?;
            }
            continue;
        }
        let new_lo = reach_lo + c.min(0);
        let new_hi = reach_hi + c.max(0);
        let mut next = vec![0u64; width];
        for s in reach_lo..=reach_hi {
            let cnt = counts[(s - lo) as usize];
            if cnt == 0 {
                continue;
            }
            for t in [s, s + c] {
                let slot = &mut next[(t - lo) as usize];
                *slot = slot.checked_add(cnt).ok_or(Error::CountOverflow)?;
            }
        }
        counts = next;
        reach_lo = new_lo;
        reach_hi = new_hi;
    }
    let top = rhs.min(hi);
    let mut total = 0u64;
    for s in lo..=top {
        total = total
            .checked_add(counts[(s - lo) as usize])
            .ok_or(Error::CountOverflow)?;
    }
    Ok(total)
}

/// Solution density `#c(x_i = d) / #c` as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Density {
    pub count: u64,
    pub total: u64,
}

impl Density {
    pub fn value(&self) -> f64 {
        self.count as f64 / self.total as f64
    }

    fn gt(&self, other: &Density) -> bool {
        (self.count as u128) * (other.total as u128) > (other.count as u128) * (self.total as u128)
    }
}

/// Picks the `(variable, value)` of highest solution density over all rows.
/// Returns `NodeInfeasible` if some row has no binary solution and
/// `NoViolation` when there are no rows to count.
pub fn maxsd_select(inst: &CbqpInstance) -> Result<Selection> {
    if inst.m() == 0 || inst.n() == 0 {
        return Ok(Selection::NoViolation);
    }
    let mut totals = Vec::with_capacity(inst.m());
    for (row, &bi) in inst.a().iter().zip(inst.b()) {
        let t = knapsack_count(row, bi, None)?;
        if t == 0 {
            return Ok(Selection::NodeInfeasible);
        }
        totals.push(t);
    }
    let mut best: Option<(usize, bool, Density)> = None;
    for i in 0..inst.n() {
        for d in [true, false] {
            for (c, row) in inst.a().iter().enumerate() {
                let sigma = Density {
                    count: knapsack_count(row, inst.b()[c], Some((i, d)))?,
                    total: totals[c],
                };
                if best.is_none_or(|(_, _, b)| sigma.gt(&b)) {
                    best = Some((i, d, sigma));
                }
            }
        }
    }
    let (i, d, sigma) = best.expect("n > 0 and m > 0");
    Ok(Selection::Branch(decision(
        inst,
        i,
        d,
        sigma.value(),
        Strategy::MaxSd,
    )))
}
