//! Upper bounds by 1-flip local search over feasible and "interesting"
//! neighbours.
//!
//! A neighbour is interesting when no row is violated by more than one unit and
//! the number of violated rows plus the number of rows whose looseness
//! (`s_i > 0`) differs from the current best is at most `rho`.

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::{Assignment, CbqpInstance};

pub const DEFAULT_RHO: usize = 3;
pub const DEFAULT_EXPANSION_CAP: usize = 50_000;

/// Frontier and bookkeeping for one local-search run.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub best: Assignment,
    pub frontier: VecDeque<Vec<bool>>,
    pub visited: HashSet<Vec<bool>>,
    pub rho: usize,
}

pub fn is_interesting(inst: &CbqpInstance, y: &[bool], best: &[bool], rho: usize) -> Result<bool> {
    let sy = inst.slacks(y)?;
    let sb = inst.slacks(best)?;
    Ok(interesting_from_slacks(&sy, &sb, rho))
}

fn interesting_from_slacks(sy: &[i64], sb: &[i64], rho: usize) -> bool {
    if sy.iter().any(|&s| s < -1) {
        return false;
    }
    let violated = sy.iter().filter(|&&s| s < 0).count();
    let loose_changed = sy
        .iter()
        .zip(sb)
        .filter(|(&a, &b)| (a > 0) != (b > 0))
        .count();
    violated + loose_changed <= rho
}

pub fn local_search(inst: &CbqpInstance, z0: &[bool], rho: usize) -> Result<Assignment> {
    local_search_capped(inst, z0, rho, DEFAULT_EXPANSION_CAP)
}

/// As [`local_search`], stopping after `cap` frontier pops.
pub fn local_search_capped(
    inst: &CbqpInstance,
    z0: &[bool],
    rho: usize,
    cap: usize,
) -> Result<Assignment> {
    if !inst.is_feasible(z0)? {
        return Err(Error::InfeasibleStart);
    }
    let mut state = SearchState {
        best: Assignment {
            bits: z0.to_vec(),
            value: inst.evaluate_objective(z0)?,
        },
        frontier: VecDeque::from([z0.to_vec()]),
        visited: HashSet::from([z0.to_vec()]),
        rho,
    };
    let mut best_slacks = inst.slacks(z0)?;
    let mut pops = 0;
    'outer: while let Some(x) = state.frontier.pop_front() {
        if pops == cap {
            break;
        }
        pops += 1;
        let mut y = x;
        for j in 0..inst.n() {
            y[j] = !y[j];
            if !state.visited.contains(&y) {
                let sy = inst.slacks(&y)?;
                let feasible = sy.iter().all(|&s| s >= 0);
                if feasible {
                    let value = inst.evaluate_objective(&y)?;
                    if value < state.best.value {
                        state.best = Assignment {
                            bits: y.clone(),
                            value,
                        };
                        best_slacks = sy;
                        state.visited.insert(y.clone());
                        state.frontier.clear();
                        state.frontier.push_back(y);
                        continue 'outer;
                    }
                }
                if interesting_from_slacks(&sy, &best_slacks, state.rho) {
                    state.visited.insert(y.clone());
                    state.frontier.push_back(y.clone());
                }
            }
            y[j] = !y[j];
        }
    }
    Ok(state.best)
}
