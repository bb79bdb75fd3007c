//! Strong and weak subordination.
//!
//! With `T ~ S(d, jumps)` and `X` independent, the weakly subordinated pair
//! `Z = (T, X ⊙ T)` is the Lévy process with exponent
//!
//! ```text
//! Psi_Z(theta_1, theta_2) = i<d, theta_1> + (d ⊛ Psi_X)(theta_2)
//!                         + ∫ (e^{i<theta_1, t>} Phi_{X(t)}(theta_2) - 1) jumps(dt)
//! ```
//!
//! Strong subordination `X ∘ T` evaluates one path of `X` at the times given
//! by each coordinate of `T`. Both simulators here are exact for
//! finite-activity subordinators and the exactly samplable subordinates.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{
    dot, laplace_exponent, norm, Atom, Estimate, JumpMeasure, JumpSampler, MonteCarlo,
    SubordinateSpec, SubordinatorSpec,
};
use crate::ordered_time::{order_times, sample_ordered_into, OrderedTime};
use crate::rng::{Purpose, Streams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Re z below this is treated as rounding when forming the Laplace argument
/// of stacked subordination.
const REAL_PART_SLACK: f64 = 1e-10;

/// `(t ⊛ Psi_X)(theta)` without validation; `t` must be nonnegative and all
/// dimensions must agree.
fn vector_time_exponent_unchecked(
    x: &SubordinateSpec,
    t: &OrderedTime,
    theta: &[f64],
) -> Complex64 {
    let mut projected = vec![0.0; theta.len()];
    let mut acc = Complex64::new(0.0, 0.0);
    for (delta, active) in t.segments() {
        projected.fill(0.0);
        for &j in active {
            projected[j] = theta[j];
        }
        acc += x.exponent_unchecked(&projected) * delta;
    }
    acc
}

/// Characteristic exponent of `(T, X ⊙ T)` at `(theta1, theta2)`.
///
/// Exact for atomic jump measures; a Monte Carlo estimate with standard error
/// for samplable ones.
pub fn weak_exponent(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    theta1: &[f64],
    theta2: &[f64],
    mc: &MonteCarlo,
) -> Result<Estimate> {
    let n = t.dim();
    Error::check_dim("weak exponent (subordinate)", n, x.dim())?;
    Error::check_dim("weak exponent (theta1)", n, theta1.len())?;
    Error::check_dim("weak exponent (theta2)", n, theta2.len())?;
    let drift = t.drift();
    let drift_part = Complex64::new(0.0, dot(drift, theta1))
        + vector_time_exponent_unchecked(x, &order_times(drift)?, theta2);
    let jumps = t.jumps().integrate(
        |jump| {
            let ordered = order_times(jump).expect("subordinator jumps are nonnegative");
            (I * dot(theta1, jump) + vector_time_exponent_unchecked(x, &ordered, theta2)).exp()
                - 1.0
        },
        mc,
    );
    Ok(jumps.map(|j| j + drift_part))
}

/// Per-coordinate Monte Carlo estimate with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Drift `m = ∫_{|(t, x)| <= 1} (t, x) Z(dt, dx)` of the driftless weak
/// subordination, where `Z(dt, dx) = P(X(t) ∈ dx) T(dt)`.
pub fn weak_drift_component<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    reps: usize,
    rng: &mut R,
) -> Result<VectorEstimate> {
    let n = t.dim();
    Error::check_dim("weak drift (subordinate)", n, x.dim())?;
    if t.drift().iter().any(|d| *d != 0.0) {
        return Err(Error::InvalidParameter {
            name: "drift",
            reason: "the weak-subordination drift formula needs a driftless subordinator".into(),
        });
    }
    let atoms: &[Atom] = match t.jumps() {
        JumpMeasure::Zero => &[],
        JumpMeasure::Atoms(a) => a,
        JumpMeasure::Samplable { .. } => {
            return Err(Error::Unsupported(
                "weak drift component needs an atomic jump measure".into(),
            ))
        }
    };
    if reps == 0 && !atoms.is_empty() {
        return Err(Error::InvalidParameter {
            name: "reps",
            reason: "must be positive".into(),
        });
    }
    let mut value = vec![0.0; 2 * n];
    let mut variance = vec![0.0; 2 * n];
    let mut y = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for atom in atoms {
        // every support point (t0, x) has |(t0, x)| >= |t0|
        if norm(&atom.point) > 1.0 {
            continue;
        }
        let ordered = order_times(&atom.point)?;
        let mut sum = vec![0.0; 2 * n];
        let mut sq = vec![0.0; 2 * n];
        for _ in 0..reps {
            sample_ordered_into(x, &ordered, rng, &mut y, &mut scratch);
            let r2 = dot(&atom.point, &atom.point) + dot(&y, &y);
            if r2 > 1.0 {
                continue;
            }
            for (k, v) in atom.point.iter().chain(y.iter()).enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let reps_f = reps as f64;
        for k in 0..2 * n {
            let mean = sum[k] / reps_f;
            value[k] += atom.rate * mean;
            if reps > 1 {
                let var = ((sq[k] / reps_f - mean * mean).max(0.0)) * reps_f / (reps_f - 1.0);
                variance[k] += atom.rate * atom.rate * var / reps_f;
            }
        }
    }
    Ok(VectorEstimate {
        value,
        std_error: variance.into_iter().map(f64::sqrt).collect(),
    })
}

/// Block structure `n_1 + ... + n_d = n` of stacked subordination,
/// `T = (R_1 e_1, ..., R_d e_d) = R A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StackEmbedding {
    dims: Vec<usize>,
}

impl StackEmbedding {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: format!("block dimensions must be positive, got {dims:?}"),
            });
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of blocks `d`.
    pub fn blocks(&self) -> usize {
        self.dims.len()
    }

    /// Total dimension `n`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.dims
            .iter()
            .map(|&d| {
                let r = start..start + d;
                start += d;
                r
            })
            .collect()
    }

    /// The `d x n` matrix `A`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.blocks(), self.total_dim());
        for (m, range) in self.ranges().into_iter().enumerate() {
            for j in range {
                a[(m, j)] = 1.0;
            }
        }
        a
    }

    /// `r A`.
    pub fn embed(&self, r: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for (rm, &d) in r.iter().zip(&self.dims) {
            out.extend(std::iter::repeat_n(*rm, d));
        }
        out
    }

    /// The law of `T = R A`: drift `d A`, jump measure pushed forward by `A`.
    pub fn embed_subordinator(&self, r: &SubordinatorSpec) -> Result<SubordinatorSpec> {
        Error::check_dim("stack embedding", self.blocks(), r.dim())?;
        let jumps = match r.jumps() {
            JumpMeasure::Zero => JumpMeasure::Zero,
            JumpMeasure::Atoms(atoms) => JumpMeasure::Atoms(
                atoms
                    .iter()
                    .map(|a| Atom::new(self.embed(&a.point), a.rate))
                    .collect(),
            ),
            JumpMeasure::Samplable {
                total_mass,
                sampler,
                ..
            } => {
                let sampler = match sampler {
                    JumpSampler::ExponentialRay { direction, mean } => {
                        JumpSampler::ExponentialRay {
                            direction: self.embed(direction),
                            mean: *mean,
                        }
                    }
                    JumpSampler::GammaTail {
                        direction,
                        rate,
                        epsilon,
                    } => JumpSampler::GammaTail {
                        direction: self.embed(direction),
                        rate: *rate,
                        epsilon: *epsilon,
                    },
                };
                JumpMeasure::samplable(*total_mass, sampler)?
            }
        };
        SubordinatorSpec::new(self.embed(r.drift()), jumps)
    }
}

/// Exponent of `(T, X ∘ T)` under stacked subordination, `-Lambda_R(z)` with
/// `z_m = -i<theta_{1m}, e_m> - Psi_{Y_m}(theta_{2m})`.
pub fn stacked_strong_exponent(
    r: &SubordinatorSpec,
    stack: &StackEmbedding,
    y: &[SubordinateSpec],
    theta1: &[f64],
    theta2: &[f64],
    mc: &MonteCarlo,
) -> Result<Estimate> {
    Error::check_dim("stacked exponent (subordinator)", stack.blocks(), r.dim())?;
    Error::check_dim("stacked exponent (blocks)", stack.blocks(), y.len())?;
    Error::check_dim("stacked exponent (theta1)", stack.total_dim(), theta1.len())?;
    Error::check_dim("stacked exponent (theta2)", stack.total_dim(), theta2.len())?;
    let mut z = Vec::with_capacity(stack.blocks());
    for (m, (range, block)) in stack.ranges().into_iter().zip(y).enumerate() {
        Error::check_dim("stacked exponent (block)", range.len(), block.dim())?;
        let lin: f64 = theta1[range.clone()].iter().sum();
        let zm = -I * lin - block.exponent_unchecked(&theta2[range]);
        if zm.re < -REAL_PART_SLACK {
            return Err(Error::NegativeRealPart {
                index: m,
                value: zm.re,
            });
        }
        z.push(Complex64::new(zm.re.max(0.0), zm.im));
    }
    Ok(laplace_exponent(r, &z, mc)?.map(|l| -l))
}

/// Jump list of a finite-activity subordinator on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubordinatorPath {
    pub drift: Vec<f64>,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<Vec<f64>>,
}

impl SubordinatorPath {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// `T(s) = d s + sum of jumps at times <= s`.
    pub fn value_at(&self, s: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.drift.iter().map(|d| d * s).collect();
        for (time, size) in self.jump_times.iter().zip(&self.jump_sizes) {
            if *time > s {
                break;
            }
            for (vi, si) in v.iter_mut().zip(size) {
                *vi += si;
            }
        }
        v
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be positive and finite, got {horizon}"),
        })
    }
}

/// Jump count ~ Poisson(total mass x horizon), times uniform order statistics,
/// sizes i.i.d. from the normalised jump measure.
pub fn simulate_subordinator<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    check_horizon(horizon)?;
    let count = crate::levy::poisson_count(t.total_mass() * horizon, rng) as usize;
    let mut jump_times: Vec<f64> = (0..count)
        .map(|_| horizon * (1.0 - rng.random::<f64>()))
        .collect();
    jump_times.sort_by(f64::total_cmp);
    let jump_sizes = (0..count).map(|_| t.jumps().sample_jump(rng)).collect();
    Ok(SubordinatorPath {
        drift: t.drift().to_vec(),
        horizon,
        jump_times,
        jump_sizes,
    })
}

/// A sampled path of the `2n`-dimensional pair `(T, Z)`, recorded at the
/// subordinator's jump times, the requested observation times, `0` and the
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub horizon: f64,
    /// Strictly increasing, starting at `0`, ending at `horizon`.
    pub event_times: Vec<f64>,
    /// State `(T_1..T_n, Z_1..Z_n)` at each event time (post-jump).
    pub values: Vec<Vec<f64>>,
    /// Subordinator drift: `T` moves linearly with this slope between events.
    /// When it is zero the whole path is piecewise constant.
    pub drift_part: Vec<f64>,
}

impl PathRecord {
    /// `n`, the dimension of each half of the state.
    pub fn dim(&self) -> usize {
        self.drift_part.len()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.drift_part.iter().all(|d| *d == 0.0)
    }

    /// The state at `s`. Exact at recorded times; elsewhere only available
    /// for piecewise-constant paths.
    pub fn value_at(&self, s: f64) -> Result<Vec<f64>> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(Error::NotRecorded(s));
        }
        match self.event_times.binary_search_by(|e| e.total_cmp(&s)) {
            Ok(i) => Ok(self.values[i].clone()),
            Err(i) if self.is_piecewise_constant() => Ok(self.values[i - 1].clone()),
            Err(_) => Err(Error::NotRecorded(s)),
        }
    }

    /// Jumps `(time, state increment)` of a piecewise-constant path.
    pub fn jumps(&self) -> Vec<(f64, Vec<f64>)> {
        let n = self.dim();
        self.event_times
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(_, v)| v[0][..n] != v[1][..n])
            .map(|(t, v)| (t[1], v[1].iter().zip(&v[0]).map(|(a, b)| a - b).collect()))
            .collect()
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols = vec!["time".to_string()];
        cols.extend((1..=n).map(|j| format!("T_{j}")));
        cols.extend((1..=n).map(|j| format!("Z_{j}")));
        cols.join(",")
    }

    /// One CSV row per event, shortest round-trip decimal formatting.
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (t, v) in self.event_times.iter().zip(&self.values) {
            write!(w, "{t}")?;
            for x in v {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Record times: `0`, jumps, observations inside `[0, horizon]`, `horizon`.
fn record_times(path: &SubordinatorPath, observations: &[f64]) -> Vec<f64> {
    let mut times = Vec::with_capacity(path.jump_times.len() + observations.len() + 2);
    times.push(0.0);
    times.extend_from_slice(&path.jump_times);
    times.extend(
        observations
            .iter()
            .copied()
            .filter(|o| *o >= 0.0 && *o <= path.horizon),
    );
    times.push(path.horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// `T` at each record time (record times must include every jump time).
fn subordinator_states(path: &SubordinatorPath, times: &[f64]) -> Vec<Vec<f64>> {
    let mut jumps = path.jump_times.iter().zip(&path.jump_sizes).peekable();
    let mut level = vec![0.0; path.drift.len()];
    times
        .iter()
        .map(|&s| {
            while let Some((_, size)) = jumps.next_if(|(time, _)| **time <= s) {
                for (l, x) in level.iter_mut().zip(size) {
                    *l += x;
                }
            }
            level
                .iter()
                .zip(&path.drift)
                .map(|(l, d)| l + d * s)
                .collect()
        })
        .collect()
}

/// Strong subordination recorded at jumps and the horizon.
pub fn simulate_strong<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    simulate_strong_observed(t, x, horizon, &[], rng)
}

/// Strong subordination `(T, X ∘ T)` with extra observation times.
///
/// All evaluation times `T_j(s)` are merged into one sorted grid and a single
/// path of `X` is drawn on it, so cross-coordinate dependence of `X` at
/// unequal times is kept.
pub fn simulate_strong_observed<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    horizon: f64,
    observations: &[f64],
    rng: &mut R,
) -> Result<PathRecord> {
    let n = t.dim();
    Error::check_dim("strong subordination", n, x.dim())?;
    let path = simulate_subordinator(t, horizon, rng)?;
    let times = record_times(&path, observations);
    let t_states = subordinator_states(&path, &times);

    // (evaluation time, record index, coordinate)
    let mut evals: Vec<(f64, usize, usize)> = Vec::with_capacity(times.len() * n);
    for (i, state) in t_states.iter().enumerate() {
        for (j, &tj) in state.iter().enumerate() {
            evals.push((tj, i, j));
        }
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut z = vec![vec![0.0; n]; times.len()];
    let mut level = vec![0.0; n];
    let mut increment = vec![0.0; n];
    let mut clock = 0.0;
    for (tau, i, j) in evals {
        if tau > clock {
            x.sample_increment(tau - clock, rng, &mut increment);
            for (l, dx) in level.iter_mut().zip(&increment) {
                *l += dx;
            }
            clock = tau;
        }
        z[i][j] = level[j];
    }

    let values = t_states
        .into_iter()
        .zip(z)
        .map(|(mut tv, zv)| {
            tv.extend(zv);
            tv
        })
        .collect();
    Ok(PathRecord {
        horizon,
        event_times: times,
        values,
        drift_part: t.drift().to_vec(),
    })
}

/// Weak subordination recorded at jumps and the horizon.
pub fn simulate_weak<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    simulate_weak_observed(t, x, horizon, &[], rng)
}

/// Weak subordination `(T, X ⊙ T)` with extra observation times.
///
/// The drift part is an independent Lévy process with exponent `d ⊛ Psi_X`
/// (increments over `ds` are draws of `X(d ds)`); each subordinator jump of
/// size `t` carries an independent mark distributed as `X(t)`.
pub fn simulate_weak_observed<R: Rng + ?Sized>(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    horizon: f64,
    observations: &[f64],
    rng: &mut R,
) -> Result<PathRecord> {
    let n = t.dim();
    Error::check_dim("weak subordination", n, x.dim())?;
    let path = simulate_subordinator(t, horizon, rng)?;
    let times = record_times(&path, observations);
    let t_states = subordinator_states(&path, &times);
    let drift = t.drift();
    let drift_order = order_times(drift)?;
    let has_drift = drift.iter().any(|d| *d > 0.0);

    let mut level = vec![0.0; n];
    let mut draw = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut jumps = path.jump_times.iter().zip(&path.jump_sizes).peekable();
    let mut values = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for (&s, tv) in times.iter().zip(t_states) {
        if has_drift && s > prev {
            let scaled: Vec<f64> = drift.iter().map(|d| d * (s - prev)).collect();
            let ordered = OrderedTime::from_permutation(&scaled, drift_order.perm().to_vec())?;
            sample_ordered_into(x, &ordered, rng, &mut draw, &mut scratch);
            for (l, v) in level.iter_mut().zip(&draw) {
                *l += v;
            }
        }
        while let Some((_, size)) = jumps.next_if(|(time, _)| **time <= s) {
            let ordered = order_times(size)?;
            sample_ordered_into(x, &ordered, rng, &mut draw, &mut scratch);
            for (l, v) in level.iter_mut().zip(&draw) {
                *l += v;
            }
        }
        prev = s;
        let mut state = tv;
        state.extend_from_slice(&level);
        values.push(state);
    }
    Ok(PathRecord {
        horizon,
        event_times: times,
        values,
        drift_part: drift.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubordinationKind {
    Strong,
    Weak,
}

impl SubordinationKind {
    fn purpose(self) -> Purpose {
        match self {
            SubordinationKind::Strong => Purpose::Strong,
            SubordinationKind::Weak => Purpose::Weak,
        }
    }
}

/// `replicates` independent paths, replicate `i` drawn from its own stream.
/// The result does not depend on the number of worker threads.
pub fn simulate_replicates(
    kind: SubordinationKind,
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    horizon: f64,
    observations: &[f64],
    streams: &Streams,
    replicates: usize,
) -> Result<Vec<PathRecord>> {
    check_horizon(horizon)?;
    Error::check_dim("subordination", t.dim(), x.dim())?;
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(kind.purpose(), i as u64);
            match kind {
                SubordinationKind::Strong => {
                    simulate_strong_observed(t, x, horizon, observations, &mut rng)
                }
                SubordinationKind::Weak => {
                    simulate_weak_observed(t, x, horizon, observations, &mut rng)
                }
            }
        })
        .collect()
}

/// States of every path at time `s`.
pub fn states_at(paths: &[PathRecord], s: f64) -> Result<Vec<Vec<f64>>> {
    paths.iter().map(|p| p.value_at(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordered_time::vector_time_exponent;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mc() -> MonteCarlo {
        MonteCarlo::default()
    }

    fn corr_bm() -> SubordinateSpec {
        SubordinateSpec::brownian(
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn weak_exponent_examples() {
        let x = SubordinateSpec::standard_brownian(2);
        let t = SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![1.0, 1.0], 1.0)])
            .unwrap();
        let zero = weak_exponent(&t, &x, &[0.0, 0.0], &[0.0, 0.0], &mc()).unwrap();
        assert_eq!(zero.value, c(0.0, 0.0));
        let v = weak_exponent(&t, &x, &[0.0, 0.0], &[1.0, 1.0], &mc()).unwrap();
        assert!((v.value - c((-1.0f64).exp() - 1.0, 0.0)).norm() < 1e-15);
        assert!((v.value.re + 0.63212).abs() < 1e-5);

        let det = SubordinatorSpec::deterministic(vec![1.0, 2.0]).unwrap();
        let v = weak_exponent(&det, &x, &[0.0, 0.0], &[1.0, 1.0], &mc()).unwrap();
        assert!((v.value - c(-1.5, 0.0)).norm() < 1e-15);
        assert!(weak_exponent(&det, &x, &[0.0], &[1.0, 1.0], &mc()).is_err());
    }

    #[test]
    fn deterministic_reduction_is_exact() {
        let x = corr_bm();
        let det = SubordinatorSpec::deterministic(vec![0.3, 1.7]).unwrap();
        let (th1, th2) = ([0.4, -1.0], [0.9, 0.2]);
        let v = weak_exponent(&det, &x, &th1, &th2, &mc()).unwrap().value;
        let w = c(0.0, 0.3 * 0.4 - 1.7) + vector_time_exponent(&x, &[0.3, 1.7], &th2).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn c1_reduction_matches_univariate_laplace() {
        // T = S e with S a univariate atomic subordinator
        let x = corr_bm();
        let s = SubordinatorSpec::with_atoms(
            vec![0.0],
            vec![Atom::new(vec![0.5], 1.5), Atom::new(vec![2.0], 0.3)],
        )
        .unwrap();
        let t = StackEmbedding::new(vec![2])
            .unwrap()
            .embed_subordinator(&s)
            .unwrap();
        for (th1, th2) in [([0.3, -0.2], [1.0, 0.4]), ([1.5, 0.0], [-0.7, 0.7])] {
            let w = weak_exponent(&t, &x, &th1, &th2, &mc()).unwrap().value;
            let z = c(0.0, -(th1[0] + th1[1])) - x.exponent_unchecked(&th2);
            let lam = laplace_exponent(&s, &[z], &mc()).unwrap().value;
            assert!((w + lam).norm() < 1e-12);
        }
    }

    #[test]
    fn weak_drift_examples() {
        let mut rng = Streams::new(3).stream(Purpose::Sampler, 0);
        let far =
            SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![1.0, 1.0], 1.0)])
                .unwrap();
        let m = weak_drift_component(&far, &corr_bm(), 1000, &mut rng).unwrap();
        assert_eq!(m.value, vec![0.0; 4]);
        assert_eq!(m.std_error, vec![0.0; 4]);

        let near =
            SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![0.1, 0.1], 1.0)])
                .unwrap();
        let m = weak_drift_component(&near, &SubordinateSpec::zero(2), 100, &mut rng).unwrap();
        for (got, want) in m.value.iter().zip([0.1, 0.1, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", m.value);
        }

        let m =
            weak_drift_component(&SubordinatorSpec::zero(2), &corr_bm(), 100, &mut rng).unwrap();
        assert_eq!(m.value, vec![0.0; 4]);

        let drifted = SubordinatorSpec::deterministic(vec![1.0, 0.0]).unwrap();
        assert!(weak_drift_component(&drifted, &corr_bm(), 10, &mut rng).is_err());
    }

    #[test]
    fn stacked_examples() {
        let y = vec![
            SubordinateSpec::standard_brownian(1),
            SubordinateSpec::standard_brownian(1),
        ];
        let stack = StackEmbedding::new(vec![1, 1]).unwrap();
        let det = SubordinatorSpec::deterministic(vec![1.0, 2.0]).unwrap();
        let v = stacked_strong_exponent(&det, &stack, &y, &[0.0, 0.0], &[0.0, 0.0], &mc()).unwrap();
        assert_eq!(v.value, c(0.0, 0.0));
        let v = stacked_strong_exponent(&det, &stack, &y, &[0.0, 0.0], &[1.0, 1.0], &mc()).unwrap();
        assert!((v.value - c(-1.5, 0.0)).norm() < 1e-15);

        let jump =
            SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![1.0, 2.0], 1.0)])
                .unwrap();
        let v =
            stacked_strong_exponent(&jump, &stack, &y, &[0.0, 0.0], &[1.0, 1.0], &mc()).unwrap();
        assert!((v.value - c(-(1.0 - (-1.5f64).exp()), 0.0)).norm() < 1e-15);
        assert!((v.value.re + 0.77687).abs() < 1e-5);

        assert!(
            stacked_strong_exponent(&jump, &stack, &y[..1], &[0.0, 0.0], &[1.0, 1.0], &mc())
                .is_err()
        );
        assert!(stacked_strong_exponent(&jump, &stack, &y, &[0.0], &[1.0, 1.0], &mc()).is_err());
    }

    #[test]
    fn embedding_matrix_shape() {
        let e = StackEmbedding::new(vec![2, 1, 3]).unwrap();
        let a = e.matrix();
        assert_eq!((a.nrows(), a.ncols()), (3, 6));
        for c in 0..6 {
            assert_eq!(a.column(c).iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(a.column(c).iter().filter(|v| **v != 0.0).count(), 1);
        }
        let rows: Vec<usize> = (0..3)
            .map(|r| a.row(r).iter().filter(|v| **v == 1.0).count())
            .collect();
        assert_eq!(rows, vec![2, 1, 3]);
        assert_eq!(
            e.embed(&[1.0, 2.0, 3.0]),
            vec![1.0, 1.0, 2.0, 3.0, 3.0, 3.0]
        );
        let r = [0.5, 1.5, 2.5];
        let via_matrix: Vec<f64> = (0..6)
            .map(|c| (0..3).map(|m| r[m] * a[(m, c)]).sum())
            .collect();
        assert_eq!(e.embed(&r), via_matrix);
        assert!(StackEmbedding::new(vec![]).is_err());
        assert!(StackEmbedding::new(vec![1, 0]).is_err());
    }

    #[test]
    fn subordinator_without_jumps_is_linear() {
        let t = SubordinatorSpec::deterministic(vec![1.0, 0.0]).unwrap();
        let mut rng = Streams::new(0).stream(Purpose::Subordinator, 0);
        let p = simulate_subordinator(&t, 5.0, &mut rng).unwrap();
        assert_eq!(p.jump_count(), 0);
        assert_eq!(p.value_at(2.5), vec![2.5, 0.0]);
    }

    #[test]
    fn subordinator_jump_count_mean() {
        let t = SubordinatorSpec::with_atoms(vec![0.0], vec![Atom::new(vec![1.0], 1.0)]).unwrap();
        let streams = Streams::new(9);
        let reps = 10_000;
        let total: usize = (0..reps)
            .map(|i| {
                let mut rng = streams.stream(Purpose::Subordinator, i);
                let p = simulate_subordinator(&t, 10.0, &mut rng).unwrap();
                assert!(p.jump_times.windows(2).all(|w| w[0] <= w[1]));
                assert!(p.jump_times.iter().all(|s| *s > 0.0 && *s <= 10.0));
                p.jump_count()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        assert!(
            (mean - 10.0).abs() <= 4.0 * 10f64.sqrt() / (reps as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn paths_are_nondecreasing_in_t() {
        let t = SubordinatorSpec::with_atoms(
            vec![0.2, 0.0],
            vec![
                Atom::new(vec![1.0, 0.0], 2.0),
                Atom::new(vec![0.3, 0.7], 1.0),
            ],
        )
        .unwrap();
        let streams = Streams::new(4);
        for kind in [SubordinationKind::Strong, SubordinationKind::Weak] {
            let paths =
                simulate_replicates(kind, &t, &corr_bm(), 3.0, &[0.5, 1.0, 1.5], &streams, 200)
                    .unwrap();
            for p in &paths {
                assert_eq!(p.event_times[0], 0.0);
                assert_eq!(p.values[0], vec![0.0; 4]);
                assert_eq!(*p.event_times.last().unwrap(), 3.0);
                assert!(p.event_times.windows(2).all(|w| w[0] < w[1]));
                for w in p.values.windows(2) {
                    assert!(w[0][..2].iter().zip(&w[1][..2]).all(|(a, b)| a <= b));
                }
                assert!(p.value_at(1.0).is_ok());
                assert!(matches!(p.value_at(0.77), Err(Error::NotRecorded(_))));
            }
        }
    }

    #[test]
    fn zero_subordinate_and_zero_subordinator() {
        let mut rng = Streams::new(2).stream(Purpose::Strong, 0);
        let t = SubordinatorSpec::with_atoms(vec![0.5, 0.0], vec![Atom::new(vec![1.0, 1.0], 3.0)])
            .unwrap();
        let p = simulate_strong(&t, &SubordinateSpec::zero(2), 2.0, &mut rng).unwrap();
        assert!(p.values.iter().all(|v| v[2] == 0.0 && v[3] == 0.0));
        let p = simulate_weak(&SubordinatorSpec::zero(2), &corr_bm(), 2.0, &mut rng).unwrap();
        assert!(p.values.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        assert_eq!(p.event_times, vec![0.0, 2.0]);
    }

    #[test]
    fn identity_time_change_reproduces_subordinate() {
        // T(t) = t e: strong subordination is X itself, drawn with the same
        // stream as a direct draw of X(1).
        let x = corr_bm();
        let t = SubordinatorSpec::deterministic(vec![1.0, 1.0]).unwrap();
        let streams = Streams::new(8);
        let p = simulate_strong(&t, &x, 1.0, &mut streams.stream(Purpose::Strong, 0)).unwrap();
        let mut rng = streams.stream(Purpose::Strong, 0);
        let _ = simulate_subordinator(&t, 1.0, &mut rng).unwrap();
        let mut direct = vec![0.0; 2];
        x.sample_increment(1.0, &mut rng, &mut direct);
        assert_eq!(&p.values[1][2..], &direct[..]);
        assert_eq!(&p.values[1][..2], &[1.0, 1.0]);
    }

    #[test]
    fn piecewise_constant_jumps_and_lookup() {
        let t = SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![1.0, 1.0], 2.0)])
            .unwrap();
        let mut rng = Streams::new(6).stream(Purpose::Weak, 0);
        let p = simulate_weak(&t, &corr_bm(), 5.0, &mut rng).unwrap();
        assert!(p.is_piecewise_constant());
        let jumps = p.jumps();
        for (s, dz) in &jumps {
            assert_eq!(&dz[..2], &[1.0, 1.0]);
            assert!(*s > 0.0 && *s <= 5.0);
        }
        // off-grid lookups fall back to the left limit
        let mid = p.value_at(2.123_456).unwrap();
        let idx = p.event_times.partition_point(|e| *e <= 2.123_456) - 1;
        assert_eq!(mid, p.values[idx]);
    }

    #[test]
    fn csv_rows_round_trip_numbers() {
        let p = PathRecord {
            horizon: 1.0,
            event_times: vec![0.0, 0.1, 1.0],
            values: vec![
                vec![0.0, 0.0],
                vec![0.1 + 0.2, -1e-300],
                vec![1.0 / 3.0, 2.0],
            ],
            drift_part: vec![0.0],
        };
        let mut buf = Vec::new();
        p.write_csv_rows(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.1, 0.1 + 0.2, -1e-300]);
        assert_eq!(PathRecord::csv_header(2), "time,T_1,T_2,Z_1,Z_2");
    }

    #[test]
    fn replicates_do_not_depend_on_thread_count() {
        let t = SubordinatorSpec::with_atoms(vec![0.1, 0.2], vec![Atom::new(vec![1.0, 0.5], 1.0)])
            .unwrap();
        let streams = Streams::new(77);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    simulate_replicates(
                        SubordinationKind::Weak,
                        &t,
                        &corr_bm(),
                        1.0,
                        &[],
                        &streams,
                        64,
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }
}
