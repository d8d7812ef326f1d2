//! Plain enumeration helpers shared by the integration tests. Written
//! against raw matrices so they do not depend on the library's evaluators.

#![allow(dead_code)]

pub fn bits(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|k| mask >> k & 1 == 1).collect()
}

pub fn objective(q: &[Vec<i64>], x: &[bool]) -> i64 {
    let mut s = 0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if x[i] && x[j] {
                s += q[i][j];
            }
        }
    }
    s
}

pub fn slacks(a: &[Vec<i64>], b: &[i64], x: &[bool]) -> Vec<i64> {
    a.iter()
        .zip(b)
        .map(|(row, &bi)| {
            bi - row
                .iter()
                .zip(x)
                .filter(|(_, &v)| v)
                .map(|(c, _)| c)
                .sum::<i64>()
        })
        .collect()
}

pub fn feasible(a: &[Vec<i64>], b: &[i64], x: &[bool]) -> bool {
    slacks(a, b, x).iter().all(|&s| s >= 0)
}

/// Minimum of `x^T Q x` over feasible binary `x`, by visiting all `2^n` points.
pub fn enumerate_optimum(q: &[Vec<i64>], a: &[Vec<i64>], b: &[i64]) -> Option<i64> {
    let n = q.len();
    (0u64..1 << n)
        .map(|m| bits(m, n))
        .filter(|x| feasible(a, b, x))
        .map(|x| objective(q, &x))
        .min()
}

/// First index attaining the maximum.
pub fn first_argmax(v: &[i64]) -> usize {
    let best = *v.iter().max().expect("nonempty");
    v.iter().position(|&s| s == best).unwrap()
}
