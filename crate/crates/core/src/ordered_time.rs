//! A Lévy process evaluated at a vector of times.
//!
//! For `t = (t_1, ..., t_n)` sorted as `t_(1) <= ... <= t_(n)`, the vector
//! `X(t) = (X_1(t_1), ..., X_n(t_n))` is the sum over `k` of independent
//! increments `X(t_(k)) - X(t_(k-1))`, each restricted to the coordinates
//! that are still running, `{(k), ..., (n)}`. Its exponent is
//!
//! ```text
//! (t ⊛ Psi)(theta) = sum_k (t_(k) - t_(k-1)) Psi(pi_{(k..n)} theta)
//! ```

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::levy::{CharExponent, SubordinateSpec};

/// A nonnegative time vector together with a sorting permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedTime {
    times: Vec<f64>,
    /// `perm[k]` is the (0-based) index of the k-th smallest time.
    perm: Vec<usize>,
    /// `deltas[k] = t_(k) - t_(k-1)` with `t_(-1) = 0`.
    deltas: Vec<f64>,
}

fn check_times(t: &[f64]) -> Result<()> {
    for (index, &value) in t.iter().enumerate() {
        if value.is_nan() || value < 0.0 || value.is_infinite() {
            return Err(Error::NegativeTime { index, value });
        }
    }
    Ok(())
}

/// Sorts `t`, breaking ties by ascending original index.
pub fn order_times(t: &[f64]) -> Result<OrderedTime> {
    check_times(t)?;
    let mut perm: Vec<usize> = (0..t.len()).collect();
    perm.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    Ok(OrderedTime::build(t.to_vec(), perm))
}

impl OrderedTime {
    fn build(times: Vec<f64>, perm: Vec<usize>) -> Self {
        let mut prev = 0.0;
        let deltas = perm
            .iter()
            .map(|&i| {
                let d = times[i] - prev;
                prev = times[i];
                d
            })
            .collect();
        Self {
            times,
            perm,
            deltas,
        }
    }

    /// Uses a caller-chosen sorting permutation (any tie order is allowed).
    pub fn from_permutation(t: &[f64], perm: Vec<usize>) -> Result<Self> {
        check_times(t)?;
        Error::check_dim("permutation", t.len(), perm.len())?;
        let mut seen = vec![false; t.len()];
        for &p in &perm {
            if p >= t.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter {
                    name: "perm",
                    reason: format!("{perm:?} is not a permutation"),
                });
            }
        }
        if perm.windows(2).any(|w| t[w[0]] > t[w[1]]) {
            return Err(Error::InvalidParameter {
                name: "perm",
                reason: format!("{perm:?} does not sort {t:?}"),
            });
        }
        Ok(Self::build(t.to_vec(), perm))
    }

    /// The same ordering with every block of tied times reversed.
    pub fn with_reversed_ties(&self) -> Self {
        let mut perm = self.perm.clone();
        let mut start = 0;
        while start < perm.len() {
            let mut end = start + 1;
            while end < perm.len() && self.times[perm[end]] == self.times[perm[start]] {
                end += 1;
            }
            perm[start..end].reverse();
            start = end;
        }
        Self::build(self.times.clone(), perm)
    }

    pub fn dim(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// `(delta_k, coordinates still running)` for every nonzero increment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, &[usize])> + '_ {
        self.deltas
            .iter()
            .enumerate()
            .filter(|(_, d)| **d > 0.0)
            .map(move |(k, d)| (*d, &self.perm[k..]))
    }
}

/// `(t ⊛ Psi)(theta)` for a precomputed ordering.
pub fn vector_time_exponent_ordered(
    psi: &dyn CharExponent,
    t: &OrderedTime,
    theta: &[f64],
) -> Result<Complex64> {
    Error::check_dim("vector-time exponent (t)", psi.dim(), t.dim())?;
    Error::check_dim("vector-time exponent (theta)", psi.dim(), theta.len())?;
    let mut projected = vec![0.0; theta.len()];
    let mut acc = Complex64::new(0.0, 0.0);
    for (delta, active) in t.segments() {
        projected.fill(0.0);
        for &j in active {
            projected[j] = theta[j];
        }
        acc += psi.exponent(&projected)? * delta;
    }
    Ok(acc)
}

/// `(t ⊛ Psi)(theta)`, the exponent of `X(t)`.
pub fn vector_time_exponent(psi: &dyn CharExponent, t: &[f64], theta: &[f64]) -> Result<Complex64> {
    vector_time_exponent_ordered(psi, &order_times(t)?, theta)
}

/// Characteristic function of `X(t)`.
pub fn vector_time_cf(psi: &dyn CharExponent, t: &[f64], theta: &[f64]) -> Result<Complex64> {
    Ok(vector_time_exponent(psi, t, theta)?.exp())
}

/// One draw of `X(t)`.
pub fn sample_subordinate_at<R: Rng + ?Sized>(
    x: &SubordinateSpec,
    t: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    Error::check_dim("sample_subordinate_at", x.dim(), t.len())?;
    let ordered = order_times(t)?;
    let mut out = vec![0.0; t.len()];
    let mut scratch = vec![0.0; t.len()];
    sample_ordered_into(x, &ordered, rng, &mut out, &mut scratch);
    Ok(out)
}

/// Accumulates one draw of `X(t)` into `out` (which is overwritten).
pub(crate) fn sample_ordered_into<R: Rng + ?Sized>(
    x: &SubordinateSpec,
    t: &OrderedTime,
    rng: &mut R,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    out.fill(0.0);
    for (delta, active) in t.segments() {
        x.sample_increment(delta, rng, scratch);
        for &j in active {
            out[j] += scratch[j];
        }
    }
}
