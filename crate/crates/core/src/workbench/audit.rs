use serde::{Deserialize, Serialize};

use crate::driver::{solve, Optimum, PruneReason, SolveConfig};
use crate::error::Result;
use crate::model::CbqpInstance;
use crate::oracle::{noisy_wrapper, ExactOracle};

/// Differential run of the exact oracle against a noisy one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAudit {
    pub epsilon: u64,
    pub exact_optimum: Optimum,
    pub noisy_optimum: Optimum,
    pub mismatch: bool,
    /// Noisy-run nodes pruned only because of the injected noise.
    pub inflated_prunes: Vec<u64>,
    /// Audited noisy-run nodes pruned although their true optimum beat the
    /// incumbent.
    pub incorrect_prunes: Vec<u64>,
}

impl NoiseAudit {
    /// A wrong answer with no flagged prune to explain it.
    pub fn silent_failure(&self) -> bool {
        self.mismatch && self.inflated_prunes.is_empty()
    }
}

pub fn noise_audit(
    inst: &CbqpInstance,
    epsilon: u64,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<NoiseAudit> {
    let cfg = SolveConfig {
        record_trace: true,
        ..cfg.clone()
    };
    let exact = solve(inst, &ExactOracle::new(), &cfg)?;
    let noisy_oracle = noisy_wrapper(Box::new(ExactOracle::new()), epsilon, seed);
    let noisy = solve(inst, &noisy_oracle, &cfg)?;
    let inflated_prunes = noisy
        .trace
        .iter()
        .filter(|t| t.inflated_prune)
        .map(|t| t.id)
        .collect();
    let incorrect_prunes = noisy
        .trace
        .iter()
        .filter(|t| {
            t.prune == Some(PruneReason::Bound)
                && t.audited
                && match (t.true_optimum, t.incumbent_after) {
                    (Some(opt), Some(inc)) => opt < inc,
                    _ => false,
                }
        })
        .map(|t| t.id)
        .collect();
    Ok(NoiseAudit {
        epsilon,
        exact_optimum: exact.optimum,
        noisy_optimum: noisy.optimum,
        mismatch: exact.optimum != noisy.optimum,
        inflated_prunes,
        incorrect_prunes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::{generate, GenSpec};

    #[test]
    fn zero_noise_matches_exact() {
        let inst = generate(&GenSpec::new(8, 1)).unwrap().instance().unwrap();
        let a = noise_audit(&inst, 0, 4, &SolveConfig::default()).unwrap();
        assert!(!a.mismatch);
        assert!(a.inflated_prunes.is_empty());
        assert!(a.incorrect_prunes.is_empty());
    }

    #[test]
    fn incorrect_prunes_are_inflated_prunes() {
        let cfg = SolveConfig {
            audit_max_n: 10,
            ..SolveConfig::default()
        };
        for seed in 0..8 {
            let inst = generate(&GenSpec::new(10, seed))
                .unwrap()
                .instance()
                .unwrap();
            let a = noise_audit(&inst, 2, seed, &cfg).unwrap();
            assert!(!a.silent_failure());
            for id in &a.incorrect_prunes {
                assert!(a.inflated_prunes.contains(id));
            }
        }
    }
}
