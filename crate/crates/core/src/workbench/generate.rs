use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CbqpInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    pub density_q: f64,
    pub density_a: f64,
    pub coeff_range: (i64, i64),
    pub seed: u64,
}

impl GenSpec {
    /// `m = n / 2`, densities 0.3 and 0.5, coefficients in `[-10, 10]`.
    pub fn new(n: usize, seed: u64) -> GenSpec {
        GenSpec {
            n,
            m: n / 2,
            density_q: 0.3,
            density_a: 0.5,
            coeff_range: (-10, 10),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let dens_ok = |d: f64| d > 0.0 && d <= 1.0;
        let (lo, hi) = self.coeff_range;
        if self.n == 0 {
            return Err(Error::InvalidInstance("n must be at least 1".into()));
        }
        if !dens_ok(self.density_q) || !dens_ok(self.density_a) {
            return Err(Error::InvalidInstance(
                "densities must lie in (0, 1]".into(),
            ));
        }
        if lo > hi || (lo == 0 && hi == 0) {
            return Err(Error::InvalidInstance(format!(
                "coefficient range [{lo}, {hi}] has no nonzero value"
            )));
        }
        Ok(())
    }
}

/// On-disk instance: the model data plus the generator seed and a feasible
/// witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub q: Vec<Vec<i64>>,
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub offset: i64,
    pub seed: u64,
    pub witness: Vec<u8>,
}

impl InstanceFile {
    pub fn instance(&self) -> Result<CbqpInstance> {
        if self.q.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: self.q.len(),
            });
        }
        if self.a.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: self.a.len(),
            });
        }
        CbqpInstance::new(self.q.clone(), self.a.clone(), self.b.clone(), self.offset)
    }

    pub fn witness_bits(&self) -> Vec<bool> {
        self.witness.iter().map(|&w| w != 0).collect()
    }
}

fn nonzero(rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)) -> i64 {
    loop {
        let v = rng.gen_range(lo..=hi);
        if v != 0 {
            return v;
        }
    }
}

/// Random symmetric `Q` and constraint matrix `A`, with `b = A x + u` for a
/// random witness `x` and slack `u` uniform in `{0, ..., 3}`.
pub fn generate(spec: &GenSpec) -> Result<InstanceFile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut q = vec![vec![0i64; n]; n];
    for i in 0..n {
        q[i][i] = rng.gen_range(spec.coeff_range.0..=spec.coeff_range.1);
        for j in (i + 1)..n {
            if rng.gen_bool(spec.density_q) {
                let v = nonzero(&mut rng, spec.coeff_range);
                q[i][j] = v;
                q[j][i] = v;
            }
        }
    }
    let a: Vec<Vec<i64>> = (0..spec.m)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if rng.gen_bool(spec.density_a) {
                        nonzero(&mut rng, spec.coeff_range)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let witness: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
    let b = a
        .iter()
        .map(|row| {
            let act: i64 = row.iter().zip(&witness).map(|(&c, &w)| c * w as i64).sum();
            act + rng.gen_range(0..=3)
        })
        .collect();
    Ok(InstanceFile {
        n,
        m: spec.m,
        q,
        a,
        b,
        offset: 0,
        seed: spec.seed,
        witness,
    })
}

/// Writes compact single-line JSON followed by a newline.
pub fn write_instance(path: &Path, file: &InstanceFile) -> Result<()> {
    let mut s = serde_json::to_string(file)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<InstanceFile> {
    let file: InstanceFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.instance()?;
    if file.witness.len() != file.n || file.witness.iter().any(|&w| w > 1) {
        return Err(Error::InvalidInstance("witness must be n bits".into()));
    }
    Ok(file)
}
