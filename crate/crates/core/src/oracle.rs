//! UBQP oracles: `minimize x^T Q x + offset` over all binary `x`.
//!
//! Instances carry exact rational data on a common power-of-two denominator,
//! so Lagrangian-folded objectives compare exactly inside the oracle.
//! Every oracle returns a [`Spectrum`], the best few distinct assignments it saw.

use std::collections::{BTreeSet, BinaryHeap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest instance the exhaustive backend accepts.
pub const EXACT_MAX_VARS: usize = 30;

/// Default spectrum capacity.
pub const DEFAULT_K_SPEC: usize = 32;

/// Symmetric matrix and offset, both scaled by `2^scale_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UbqpInstance {
    n: usize,
    q: Vec<i128>,
    offset: i128,
    scale_bits: u32,
}

impl UbqpInstance {
    /// `q` and `offset` are numerators over `2^scale_bits`.
    pub fn new(q: Vec<Vec<i128>>, offset: i128, scale_bits: u32) -> Result<Self> {
        let n = q.len();
        if n == 0 {
            return Err(Error::InvalidInstance(
                "UBQP needs at least one variable".into(),
            ));
        }
        if scale_bits > 62 {
            return Err(Error::InvalidInstance("denominator too large".into()));
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &q {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            for j in 0..i {
                if flat[i * n + j] != flat[j * n + i] {
                    return Err(Error::InvalidInstance(format!(
                        "UBQP matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(UbqpInstance {
            n,
            q: flat,
            offset,
            scale_bits,
        })
    }

    pub fn from_integer(q: &[Vec<i64>], offset: i64) -> Result<Self> {
        let wide = q
            .iter()
            .map(|row| row.iter().map(|&v| v as i128).collect())
            .collect();
        UbqpInstance::new(wide, offset as i128, 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn denominator(&self) -> i128 {
        1i128 << self.scale_bits
    }

    /// Numerator of entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> i128 {
        self.q[i * self.n + j]
    }

    pub fn offset(&self) -> i128 {
        self.offset
    }

    /// Numerator of the objective at `x`.
    pub fn evaluate(&self, x: &[bool]) -> Result<i128> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        let mut total = self.offset;
        for i in 0..self.n {
            if !x[i] {
                continue;
            }
            total += self.entry(i, i);
            for j in (i + 1)..self.n {
                if x[j] {
                    total += 2 * self.entry(i, j);
                }
            }
        }
        Ok(total)
    }

    pub fn to_f64(&self, numerator: i128) -> f64 {
        numerator as f64 / self.denominator() as f64
    }

    fn flip_gain(&self, x: &[bool], field: &[i128], k: usize) -> i128 {
        let g = self.entry(k, k) + 2 * field[k];
        if x[k] {
            -g
        } else {
            g
        }
    }

    /// `field[k] = sum_{j != k} q_kj x_j`.
    fn field(&self, x: &[bool]) -> Vec<i128> {
        (0..self.n)
            .map(|k| {
                (0..self.n)
                    .filter(|&j| j != k && x[j])
                    .map(|j| self.entry(k, j))
                    .sum()
            })
            .collect()
    }

    fn apply_flip(&self, x: &mut [bool], field: &mut [i128], k: usize) {
        let sign = if x[k] { -1 } else { 1 };
        x[k] = !x[k];
        for (j, f) in field.iter_mut().enumerate() {
            if j != k {
                *f += sign * self.entry(j, k);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectrumEntry {
    pub bits: Vec<bool>,
    /// Numerator over the spectrum's denominator.
    pub value: i128,
}

/// Distinct assignments sorted ascending by value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spectrum {
    pub entries: Vec<SpectrumEntry>,
    pub denominator: i128,
    /// Numerator added to every reported value by a noisy backend (0 otherwise).
    pub inflation: i128,
}

impl Spectrum {
    pub fn best(&self) -> &SpectrumEntry {
        &self.entries[0]
    }

    pub fn value_f64(&self, idx: usize) -> f64 {
        self.entries[idx].value as f64 / self.denominator as f64
    }

    pub fn min_value_f64(&self) -> f64 {
        self.value_f64(0)
    }
}

#[derive(Debug, Default)]
pub struct OracleStats {
    queries: AtomicU64,
    last_gap_certified: AtomicBool,
}

impl OracleStats {
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    pub fn last_gap_certified(&self) -> bool {
        self.last_gap_certified.load(Ordering::SeqCst)
    }

    fn record(&self, certified: bool) {
        self.queries.fetch_add(1, Ordering::SeqCst);
        self.last_gap_certified.store(certified, Ordering::SeqCst);
    }
}

pub trait UbqpOracle: Send + Sync {
    fn solve(&self, u: &UbqpInstance, k_spec: usize) -> Result<Spectrum>;
    fn stats(&self) -> &OracleStats;
    fn name(&self) -> String;
}

/// Exhaustive Gray-code enumeration of all `2^n` points.
pub fn solve_exact(u: &UbqpInstance, k_spec: usize) -> Result<Spectrum> {
    let n = u.n();
    if n > EXACT_MAX_VARS {
        return Err(Error::OracleCapacity {
            n,
            max: EXACT_MAX_VARS,
        });
    }
    let k_spec = k_spec.max(1);
    let mut x = vec![false; n];
    let mut field = vec![0i128; n];
    let mut value = u.offset();
    let mut mask: u64 = 0;
    let mut heap: BinaryHeap<(i128, u64)> = BinaryHeap::with_capacity(k_spec + 1);
    heap.push((value, mask));
    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        value += u.flip_gain(&x, &field, k);
        u.apply_flip(&mut x, &mut field, k);
        mask ^= 1 << k;
        let key = (value, mask);
        if heap.len() < k_spec {
            heap.push(key);
        } else if key < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(key);
        }
    }
    let entries = heap
        .into_sorted_vec()
        .into_iter()
        .map(|(value, mask)| SpectrumEntry {
            bits: (0..n).map(|k| mask >> k & 1 == 1).collect(),
            value,
        })
        .collect();
    Ok(Spectrum {
        entries,
        denominator: u.denominator(),
        inflation: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaParams {
    pub sweeps: usize,
    pub restarts: usize,
    /// Defaults to half the largest single-flip change.
    pub t_initial: Option<f64>,
    /// Defaults to `t_initial / 1000`.
    pub t_final: Option<f64>,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            sweeps: 2000,
            restarts: 20,
            t_initial: None,
            t_final: None,
        }
    }
}

/// Keeps the `cap` smallest distinct `(value, bits)` pairs.
struct KBest {
    cap: usize,
    set: BTreeSet<(i128, Vec<bool>)>,
}

impl KBest {
    fn offer(&mut self, value: i128, bits: &[bool]) {
        if self.set.len() == self.cap {
            let worst = self.set.last().expect("nonempty");
            if (value, bits) >= (worst.0, worst.1.as_slice()) {
                return;
            }
        }
        if self.set.insert((value, bits.to_vec())) && self.set.len() > self.cap {
            self.set.pop_last();
        }
    }
}

/// Simulated annealing with a geometric schedule, finished by 1-flip descent.
pub fn solve_sa(u: &UbqpInstance, k_spec: usize, params: &SaParams, seed: u64) -> Spectrum {
    let n = u.n();
    let den = u.denominator() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_gain = (0..n)
        .map(|k| {
            let s: i128 = (0..n).map(|j| u.entry(k, j).abs()).sum::<i128>() * 2;
            s as f64 / den
        })
        .fold(0.0f64, f64::max);
    let t0 = params.t_initial.unwrap_or((0.5 * max_gain).max(1e-9));
    let t1 = params.t_final.unwrap_or(t0 * 1e-3).min(t0);
    let sweeps = params.sweeps.max(1);
    let ratio = if sweeps > 1 {
        (t1 / t0).powf(1.0 / (sweeps - 1) as f64)
    } else {
        1.0
    };
    let mut kept = KBest {
        cap: k_spec.max(1),
        set: BTreeSet::new(),
    };
    for _ in 0..params.restarts.max(1) {
        let mut x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let mut field = u.field(&x);
        let mut value = u.evaluate(&x).expect("dimension checked");
        let mut best = (value, x.clone());
        let mut temp = t0;
        for _ in 0..sweeps {
            for k in 0..n {
                let gain = u.flip_gain(&x, &field, k);
                let accept = gain <= 0 || {
                    let p = (-(gain as f64 / den) / temp).exp();
                    rng.gen::<f64>() < p
                };
                if accept {
                    value += gain;
                    u.apply_flip(&mut x, &mut field, k);
                    if value < best.0 {
                        best = (value, x.clone());
                    }
                }
            }
            kept.offer(value, &x);
            temp *= ratio;
        }
        // Greedy descent from the best state of this restart.
        let (mut value, mut x) = best;
        let mut field = u.field(&x);
        loop {
            let mut improved = false;
            for k in 0..n {
                let gain = u.flip_gain(&x, &field, k);
                if gain < 0 {
                    value += gain;
                    u.apply_flip(&mut x, &mut field, k);
                    improved = true;
                    kept.offer(value, &x);
                }
            }
            if !improved {
                break;
            }
        }
        kept.offer(value, &x);
    }
    Spectrum {
        entries: kept
            .set
            .into_iter()
            .map(|(value, bits)| SpectrumEntry { bits, value })
            .collect(),
        denominator: u.denominator(),
        inflation: 0,
    }
}

#[derive(Debug, Default)]
pub struct ExactOracle {
    stats: OracleStats,
}

impl ExactOracle {
    pub fn new() -> Self {
        Self::default()
    }
}

impl UbqpOracle for ExactOracle {
    fn solve(&self, u: &UbqpInstance, k_spec: usize) -> Result<Spectrum> {
        let s = solve_exact(u, k_spec)?;
        self.stats.record(true);
        Ok(s)
    }

    fn stats(&self) -> &OracleStats {
        &self.stats
    }

    fn name(&self) -> String {
        "exact".into()
    }
}

/// Annealing backend; each call derives its seed from the base seed and the
/// call index, so a run is reproducible.
#[derive(Debug)]
pub struct SaOracle {
    params: SaParams,
    seed: u64,
    stats: OracleStats,
}

impl SaOracle {
    pub fn new(params: SaParams, seed: u64) -> Self {
        SaOracle {
            params,
            seed,
            stats: OracleStats::default(),
        }
    }
}

impl UbqpOracle for SaOracle {
    fn solve(&self, u: &UbqpInstance, k_spec: usize) -> Result<Spectrum> {
        let call = self.stats.queries();
        let seed = self.seed ^ call.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let s = solve_sa(u, k_spec, &self.params, seed);
        self.stats.record(false);
        Ok(s)
    }

    fn stats(&self) -> &OracleStats {
        &self.stats
    }

    fn name(&self) -> String {
        "sa".into()
    }
}

/// Adds a uniform integer in `[0, epsilon]` to every reported value of the
/// inner oracle's spectrum. Bits are untouched.
pub struct NoisyOracle {
    inner: Box<dyn UbqpOracle>,
    epsilon: u64,
    rng: Mutex<ChaCha8Rng>,
    stats: OracleStats,
}

pub fn noisy_wrapper(inner: Box<dyn UbqpOracle>, epsilon: u64, seed: u64) -> NoisyOracle {
    NoisyOracle {
        inner,
        epsilon,
        rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        stats: OracleStats::default(),
    }
}

impl UbqpOracle for NoisyOracle {
    fn solve(&self, u: &UbqpInstance, k_spec: usize) -> Result<Spectrum> {
        let mut s = self.inner.solve(u, k_spec)?;
        let shift = if self.epsilon == 0 {
            0
        } else {
            let mut rng = self.rng.lock().expect("noise rng poisoned");
            rng.gen_range(0..=self.epsilon)
        };
        let num = shift as i128 * s.denominator;
        for e in &mut s.entries {
            e.value += num;
        }
        s.inflation += num;
        self.stats.record(false);
        Ok(s)
    }

    fn stats(&self) -> &OracleStats {
        &self.stats
    }

    fn name(&self) -> String {
        format!("noisy:{}", self.epsilon)
    }
}

/// Builds a backend from its CLI name: `exact`, `sa`, or `noisy:<eps>`
/// (noise on top of the exact backend).
pub fn oracle_from_name(name: &str, seed: u64) -> Result<Box<dyn UbqpOracle>> {
    match name {
        "exact" => Ok(Box::new(ExactOracle::new())),
        "sa" => Ok(Box::new(SaOracle::new(SaParams::default(), seed))),
        _ => {
            let eps = name
                .strip_prefix("noisy:")
                .and_then(|e| e.parse::<u64>().ok())
                .ok_or_else(|| Error::UnknownName(name.to_string()))?;
            Ok(Box::new(noisy_wrapper(
                Box::new(ExactOracle::new()),
                eps,
                seed,
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CbqpInstance;

    fn random_q(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<i64>> {
        let mut q = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = if rng.gen_bool(0.6) {
                    rng.gen_range(-10..=10)
                } else {
                    0
                };
                q[i][j] = v;
                q[j][i] = v;
            }
        }
        q
    }

    fn assert_well_formed(s: &Spectrum, u: &UbqpInstance) {
        for w in s.entries.windows(2) {
            assert!(w[0].value <= w[1].value);
        }
        let distinct: BTreeSet<_> = s.entries.iter().map(|e| e.bits.clone()).collect();
        assert_eq!(distinct.len(), s.entries.len());
        for e in &s.entries {
            assert_eq!(u.evaluate(&e.bits).unwrap() + s.inflation, e.value);
        }
    }

    #[test]
    fn exact_hand_cases() {
        let u = UbqpInstance::from_integer(&[vec![-1]], 0).unwrap();
        let s = solve_exact(&u, 4).unwrap();
        assert_eq!(s.best().bits, vec![true]);
        assert_eq!(s.best().value, -1);
        assert_eq!(s.entries.len(), 2);

        let u = UbqpInstance::from_integer(&[vec![1, -3], vec![-3, 1]], 0).unwrap();
        let s = solve_exact(&u, 1).unwrap();
        assert_eq!(s.best().bits, vec![true, true]);
        assert_eq!(s.best().value, -4);
        assert_eq!(s.entries.len(), 1);
    }

    #[test]
    fn exact_capacity_error() {
        let q = vec![vec![0i64; 31]; 31];
        let u = UbqpInstance::from_integer(&q, 0).unwrap();
        assert!(matches!(
            solve_exact(&u, 1),
            Err(Error::OracleCapacity { n: 31, max: 30 })
        ));
    }

    #[test]
    fn exact_agrees_with_model_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let q = random_q(&mut rng, 12);
            let cb = CbqpInstance::unconstrained(q.clone()).unwrap();
            let expected = crate::model::brute_force_optimum(&cb)
                .unwrap()
                .unwrap()
                .value;
            let u = UbqpInstance::from_integer(&q, 0).unwrap();
            let s = solve_exact(&u, DEFAULT_K_SPEC).unwrap();
            assert_eq!(s.best().value, expected as i128);
            assert_eq!(s.entries.len(), DEFAULT_K_SPEC);
            assert_well_formed(&s, &u);
            // The spectrum really is the k best: nothing outside beats its tail.
            let tail = s.entries.last().unwrap().value;
            let better = (0u64..1 << 12)
                .filter(|m| {
                    let x: Vec<bool> = (0..12).map(|k| m >> k & 1 == 1).collect();
                    cb.evaluate_objective(&x).unwrap() as i128 <= tail
                })
                .count();
            assert!(better >= s.entries.len());
        }
    }

    #[test]
    fn fractional_entries() {
        // 0.5 x0 - 0.75 x1 over denominator 4.
        let u = UbqpInstance::new(vec![vec![2, 0], vec![0, -3]], 1, 2).unwrap();
        let s = solve_exact(&u, 4).unwrap();
        assert_eq!(s.best().bits, vec![false, true]);
        assert!((s.min_value_f64() - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn sa_single_variable_is_exact() {
        let u = UbqpInstance::from_integer(&[vec![-7]], 2).unwrap();
        let s = solve_sa(&u, 4, &SaParams::default(), 1);
        assert_eq!(s.best().bits, vec![true]);
        assert_eq!(s.best().value, -5);
    }

    #[test]
    fn sa_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = UbqpInstance::from_integer(&random_q(&mut rng, 10), 0).unwrap();
        let p = SaParams {
            sweeps: 200,
            restarts: 3,
            ..SaParams::default()
        };
        assert_eq!(solve_sa(&u, 8, &p, 42), solve_sa(&u, 8, &p, 42));
    }

    #[test]
    fn sa_matches_exact_on_most_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut hits = 0;
        for seed in 0..100u64 {
            let u = UbqpInstance::from_integer(&random_q(&mut rng, 12), 0).unwrap();
            let exact = solve_exact(&u, 1).unwrap();
            let sa = solve_sa(&u, 8, &SaParams::default(), seed);
            assert_well_formed(&sa, &u);
            if sa.best().value == exact.best().value {
                hits += 1;
            }
        }
        assert!(hits >= 95, "SA matched exact on {hits}/100");
    }

    #[test]
    fn noisy_wrapper_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = UbqpInstance::from_integer(&random_q(&mut rng, 6), 0).unwrap();
        let clean = solve_exact(&u, 8).unwrap();

        let zero = noisy_wrapper(Box::new(ExactOracle::new()), 0, 5);
        assert_eq!(zero.solve(&u, 8).unwrap(), clean);

        let run = |seed| {
            let o = noisy_wrapper(Box::new(ExactOracle::new()), 2, seed);
            (0..10).map(|_| o.solve(&u, 8).unwrap()).collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        for s in &a {
            assert!(s.inflation >= 0 && s.inflation <= 2);
            assert_eq!(s.best().bits, clean.best().bits);
            assert_eq!(s.best().value, clean.best().value + s.inflation);
            assert_well_formed(s, &u);
        }
    }

    #[test]
    fn query_counting() {
        let u = UbqpInstance::from_integer(&[vec![1]], 0).unwrap();
        let o = oracle_from_name("noisy:1", 0).unwrap();
        for _ in 0..3 {
            o.solve(&u, 2).unwrap();
        }
        assert_eq!(o.stats().queries(), 3);
        let e = ExactOracle::new();
        e.solve(&u, 1).unwrap();
        assert!(e.stats().last_gap_certified());
        assert!(oracle_from_name("quantum", 0).is_err());
        assert_eq!(oracle_from_name("sa", 0).unwrap().name(), "sa");
    }
}
