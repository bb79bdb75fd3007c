//! Poisson random measures on `(0, horizon] x marks` and their Laplace
//! functionals `L(f) = E prod_i e^{-f(Z_i)} = exp(-∫ (1 - e^{-f}) dmu)`.
//!
//! Functionals are restricted to products `f(s, m) = h(s) k(m)` where `h` is a
//! constant, a window indicator or a linear ramp, and `k` is either `1` or the
//! indicator of a box. That family has closed-form integrals and is enough to
//! exercise both the plain and the marked (weak subordination) identities.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{poisson_count, Atom, SubordinateSpec, SubordinatorSpec};
use crate::ordered_time::{order_times, sample_ordered_into};
use crate::rng::{Purpose, StreamRng, Streams};
use crate::subordination::{simulate_strong, simulate_subordinator, simulate_weak, PathRecord};

/// A finite point configuration in `(0, horizon]`, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSet<M = Vec<f64>> {
    pub points: Vec<(f64, M)>,
    pub horizon: f64,
}

impl<M> PointSet<M> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_in(&self, start: f64, end: f64) -> usize {
        self.points
            .iter()
            .filter(|(s, _)| *s > start && *s <= end)
            .count()
    }
}

/// Intensity `rate ds ⊗ P(mark ∈ dm)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intensity {
    pub rate: f64,
    pub marks: MarkLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MarkLaw {
    Unmarked,
    /// Discrete marks; atom rates are used as (unnormalised) weights.
    Discrete(Vec<Atom>),
}

impl Intensity {
    pub fn new(rate: f64, marks: MarkLaw) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rate",
                reason: format!("must be finite and nonnegative, got {rate}"),
            });
        }
        if let MarkLaw::Discrete(atoms) = &marks {
            if atoms.is_empty() || atoms.iter().any(|a| a.rate.is_nan() || a.rate <= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "marks",
                    reason: "discrete mark law needs positive weights".into(),
                });
            }
        }
        Ok(Self { rate, marks })
    }

    pub fn unmarked(rate: f64) -> Result<Self> {
        Self::new(rate, MarkLaw::Unmarked)
    }

    fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.marks {
            MarkLaw::Unmarked => Vec::new(),
            MarkLaw::Discrete(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.rate).sum();
                let mut u = rng.random::<f64>() * total;
                for a in atoms {
                    if u < a.rate {
                        return a.point.clone();
                    }
                    u -= a.rate;
                }
                atoms[atoms.len() - 1].point.clone()
            }
        }
    }
}

/// Count ~ Poisson(rate x horizon), times i.i.d. uniform, marks i.i.d.
pub fn simulate_prm<R, M, F>(
    rate: f64,
    horizon: f64,
    mut mark: F,
    rng: &mut R,
) -> Result<PointSet<M>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> M,
{
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rate",
            reason: format!("must be finite and nonnegative, got {rate}"),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be positive, got {horizon}"),
        });
    }
    let count = poisson_count(rate * horizon, rng) as usize;
    let mut points: Vec<(f64, M)> = (0..count)
        .map(|_| {
            let s = horizon * (1.0 - rng.random::<f64>());
            (s, mark(rng))
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PointSet { points, horizon })
}

/// Simulates the measure with the given intensity.
pub fn simulate_intensity<R: Rng + ?Sized>(
    intensity: &Intensity,
    horizon: f64,
    rng: &mut R,
) -> Result<PointSet> {
    simulate_prm(intensity.rate, horizon, |r| intensity.sample_mark(r), rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TimeFactor {
    /// `c` for every time (`c` may be `+inf`).
    Constant(f64),
    /// `value` on `(start, end]`, zero elsewhere.
    Window { start: f64, end: f64, value: f64 },
    /// `slope * s`.
    Linear(f64),
}

impl TimeFactor {
    fn eval(&self, s: f64) -> f64 {
        match *self {
            TimeFactor::Constant(c) => c,
            TimeFactor::Window { start, end, value } => {
                if s > start && s <= end {
                    value
                } else {
                    0.0
                }
            }
            TimeFactor::Linear(slope) => slope * s,
        }
    }

    /// `∫_0^h (1 - e^{-h(s)}) ds`.
    fn integral(&self, horizon: f64) -> f64 {
        let one_minus = |c: f64| if c.is_infinite() { 1.0 } else { -(-c).exp_m1() };
        match *self {
            TimeFactor::Constant(c) => horizon * one_minus(c),
            TimeFactor::Window { start, end, value } => {
                let len = (end.min(horizon) - start.max(0.0)).max(0.0);
                len * one_minus(value)
            }
            TimeFactor::Linear(slope) => {
                if slope == 0.0 {
                    0.0
                } else if slope.is_infinite() {
                    horizon
                } else {
                    horizon + (-slope * horizon).exp_m1() / slope
                }
            }
        }
    }

    /// Length of the time set where the factor is `+inf`.
    fn infinite_support(&self, horizon: f64) -> f64 {
        match *self {
            TimeFactor::Constant(c) if c.is_infinite() => horizon,
            TimeFactor::Window { start, end, value } if value.is_infinite() => {
                (end.min(horizon) - start.max(0.0)).max(0.0)
            }
            TimeFactor::Linear(slope) if slope.is_infinite() => horizon,
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TimeFactor::Constant(c) => c >= 0.0,
            TimeFactor::Window { start, end, value } => {
                value >= 0.0 && start.is_finite() && end.is_finite() && start <= end
            }
            TimeFactor::Linear(slope) => slope >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "time factor {self:?} is not a nonnegative functional"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MarkFactor {
    One,
    /// Indicator of `lo <= m <= hi` coordinatewise.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl MarkFactor {
    fn contains(&self, m: &[f64]) -> bool {
        match self {
            MarkFactor::One => true,
            MarkFactor::Box { lo, hi } => m
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (a, b))| *x >= *a && *x <= *b),
        }
    }
}

/// `f(s, m) = h(s) k(m)`, with `k ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Functional {
    pub time: TimeFactor,
    pub mark: MarkFactor,
}

impl Functional {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            time: TimeFactor::Constant(c),
            mark: MarkFactor::One,
        }
    }

    pub fn eval(&self, s: f64, mark: &[f64]) -> f64 {
        if self.mark.contains(mark) {
            self.time.eval(s)
        } else {
            0.0
        }
    }

    fn check_mark_dim(&self, dim: usize) -> Result<()> {
        if let MarkFactor::Box { lo, hi } = &self.mark {
            Error::check_dim("functional box (lo)", dim, lo.len())?;
            Error::check_dim("functional box (hi)", dim, hi.len())?;
        }
        Ok(())
    }
}

/// `exp(-∫ (1 - e^{-f}) dmu)` in closed form. Returns `0` when `f` is
/// infinite on a set of positive intensity mass.
pub fn laplace_functional_analytic(
    intensity: &Intensity,
    horizon: f64,
    f: &Functional,
) -> Result<f64> {
    f.time.validate()?;
    let p = match (&f.mark, &intensity.marks) {
        (MarkFactor::One, _) => 1.0,
        (MarkFactor::Box { .. }, MarkLaw::Unmarked) => {
            return Err(Error::Unsupported(
                "box functional needs a marked intensity".into(),
            ))
        }
        (MarkFactor::Box { .. }, MarkLaw::Discrete(atoms)) => {
            f.check_mark_dim(atoms[0].point.len())?;
            let total: f64 = atoms.iter().map(|a| a.rate).sum();
            atoms
                .iter()
                .filter(|a| f.mark.contains(&a.point))
                .map(|a| a.rate / total)
                .sum()
        }
    };
    if intensity.rate * p * f.time.infinite_support(horizon) > 0.0 {
        return Ok(0.0);
    }
    Ok((-intensity.rate * p * f.time.integral(horizon)).exp())
}

/// A real Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl RealEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                value: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }
}

fn product_weight(points: &[(f64, Vec<f64>)], f: &Functional) -> f64 {
    points.iter().map(|(s, m)| (-f.eval(*s, m)).exp()).product()
}

/// Monte Carlo mean of `prod_i e^{-f(Z_i)}` over `reps` simulations.
///
/// Uses `e^{-inf} = 0` literally, so for `f = +inf` on a set of finite mass
/// this estimates `P(no point in that set)`, whereas the analytic routine
/// returns the conventional 0.
pub fn laplace_functional_mc(
    intensity: &Intensity,
    horizon: f64,
    f: &Functional,
    reps: usize,
    streams: &Streams,
) -> Result<RealEstimate> {
    f.time.validate()?;
    if reps == 0 {
        return Err(Error::TooFewSamples { min: 1, got: 0 });
    }
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(Purpose::Prm, i as u64);
            simulate_intensity(intensity, horizon, &mut rng).map(|ps| product_weight(&ps.points, f))
        })
        .collect::<Result<_>>()?;
    Ok(RealEstimate::from_samples(&values))
}

/// Both sides of the marked-point-process Laplace functional identity for the
/// jumps of `(T, X ⊙ T)` (and of `(T, X ∘ T)`), with marks `(ΔT, ΔZ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedCheck {
    /// `E prod e^{-f(s_i, ΔT_i, Y_i)}` over simulated weak-subordination jumps.
    pub weak_lhs: RealEstimate,
    /// The same over simulated strong-subordination jumps, when requested.
    pub strong_lhs: Option<RealEstimate>,
    /// `E prod e^{-g(s_i, ΔT_i)}`, `e^{-g}` estimated by an inner Monte Carlo
    /// over `Y ~ X(ΔT)`.
    pub nested_rhs: RealEstimate,
    pub k: f64,
    pub weak_pass: bool,
    pub strong_pass: Option<bool>,
    pub pass: bool,
}

/// Settings for [`marked_laplace_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedCheckConfig {
    pub horizon: f64,
    pub reps: usize,
    pub inner: usize,
    pub k: f64,
    pub include_strong: bool,
}

impl Default for MarkedCheckConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            reps: 100_000,
            inner: 64,
            k: 4.0,
            include_strong: true,
        }
    }
}

fn path_weight(path: &PathRecord, f: &Functional) -> f64 {
    path.jumps()
        .iter()
        .map(|(s, jump)| (-f.eval(*s, jump)).exp())
        .product()
}

/// Checks the Laplace functional of the jump measure of weak subordination
/// against the nested form where marks are integrated out through the kernel
/// `Q(t, dy) = P(X(t) ∈ dy)`. `f` acts on marks `(ΔT, Y)` of dimension `2n`.
pub fn marked_laplace_check(
    t: &SubordinatorSpec,
    x: &SubordinateSpec,
    f: &Functional,
    config: &MarkedCheckConfig,
    streams: &Streams,
) -> Result<MarkedCheck> {
    let n = t.dim();
    Error::check_dim("marked check (subordinate)", n, x.dim())?;
    f.time.validate()?;
    f.check_mark_dim(2 * n)?;
    if t.drift().iter().any(|d| *d != 0.0) {
        return Err(Error::InvalidParameter {
            name: "drift",
            reason: "marked point process check needs a driftless subordinator".into(),
        });
    }
    if config.reps < 2 || config.inner == 0 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: config.reps.min(config.inner),
        });
    }
    let horizon = config.horizon;
    let lhs = |kind: Purpose| -> Result<RealEstimate> {
        let values: Vec<f64> = (0..config.reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = streams.stream(kind, i as u64);
                let path = match kind {
                    Purpose::Strong => simulate_strong(t, x, horizon, &mut rng)?,
                    _ => simulate_weak(t, x, horizon, &mut rng)?,
                };
                Ok(path_weight(&path, f))
            })
            .collect::<Result<_>>()?;
        Ok(RealEstimate::from_samples(&values))
    };
    let weak_lhs = lhs(Purpose::Weak)?;
    let strong_lhs = if config.include_strong {
        Some(lhs(Purpose::Strong)?)
    } else {
        None
    };

    let rhs_values: Vec<f64> = (0..config.reps)
        .into_par_iter()
        .map(|i| {
            let mut rng: StreamRng = streams.stream(Purpose::NestedInner, i as u64);
            let path = simulate_subordinator(t, horizon, &mut rng)?;
            let mut y = vec![0.0; n];
            let mut scratch = vec![0.0; n];
            let mut mark = vec![0.0; 2 * n];
            let mut weight = 1.0;
            for (s, size) in path.jump_times.iter().zip(&path.jump_sizes) {
                let ordered = order_times(size)?;
                mark[..n].copy_from_slice(size);
                let mut acc = 0.0;
                for _ in 0..config.inner {
                    sample_ordered_into(x, &ordered, &mut rng, &mut y, &mut scratch);
                    mark[n..].copy_from_slice(&y);
                    acc += (-f.eval(*s, &mark)).exp();
                }
                weight *= acc / config.inner as f64;
            }
            Ok(weight)
        })
        .collect::<Result<_>>()?;
    let nested_rhs = RealEstimate::from_samples(&rhs_values);

    let agrees = |a: &RealEstimate| {
        (a.value - nested_rhs.value).abs() <= config.k * a.std_error.hypot(nested_rhs.std_error)
    };
    let weak_pass = agrees(&weak_lhs);
    let strong_pass = strong_lhs.as_ref().map(agrees);
    Ok(MarkedCheck {
        weak_lhs,
        strong_lhs,
        nested_rhs,
        k: config.k,
        weak_pass,
        strong_pass,
        pass: weak_pass && strong_pass.unwrap_or(true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn empty_and_sorted() {
        let mut rng = Streams::new(1).stream(Purpose::Prm, 0);
        let ps = simulate_intensity(&Intensity::unmarked(0.0).unwrap(), 3.0, &mut rng).unwrap();
        assert!(ps.is_empty());
        let ps = simulate_intensity(&Intensity::unmarked(50.0).unwrap(), 1.0, &mut rng).unwrap();
        assert!(ps.points.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(ps.points.iter().all(|(s, _)| *s > 0.0 && *s <= 1.0));
    }

    #[test]
    fn mean_count() {
        let streams = Streams::new(2);
        let intensity = Intensity::unmarked(2.0).unwrap();
        let counts: Vec<f64> = (0..10_000)
            .map(|i| {
                let mut rng = streams.stream(Purpose::Prm, i);
                simulate_intensity(&intensity, 1.0, &mut rng).unwrap().len() as f64
            })
            .collect();
        let est = RealEstimate::from_samples(&counts);
        assert!((est.value - 2.0).abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn disjoint_windows_uncorrelated() {
        let streams = Streams::new(3);
        let intensity = Intensity::unmarked(3.0).unwrap();
        let n = 20_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let mut rng = streams.stream(Purpose::Prm, i);
                let ps = simulate_intensity(&intensity, 2.0, &mut rng).unwrap();
                (ps.count_in(0.0, 1.0) as f64, ps.count_in(1.0, 2.0) as f64)
            })
            .collect();
        let nf = n as f64;
        let ma = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
        let mb = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / nf;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / nf;
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / nf;
        let corr = cov / (va * vb).sqrt();
        // SE of a sample correlation near zero is about 1/sqrt(n)
        assert!(corr.abs() <= 4.0 / nf.sqrt(), "{corr}");
    }

    #[test]
    fn analytic_examples() {
        let i2 = Intensity::unmarked(2.0).unwrap();
        assert_eq!(
            laplace_functional_analytic(&i2, 1.0, &Functional::zero()).unwrap(),
            1.0
        );
        let v = laplace_functional_analytic(&i2, 1.0, &Functional::constant(1.0)).unwrap();
        assert!((v - (-2.0 * (1.0 - (-1.0f64).exp())).exp()).abs() < 1e-15);
        assert!((v - 0.28245).abs() < 1e-5);
        assert_eq!(
            laplace_functional_analytic(&i2, 1.0, &Functional::constant(f64::INFINITY)).unwrap(),
            0.0
        );
        let empty = Intensity::unmarked(0.0).unwrap();
        assert_eq!(
            laplace_functional_analytic(&empty, 1.0, &Functional::constant(f64::INFINITY)).unwrap(),
            1.0
        );
        let bad = Functional::constant(-1.0);
        assert!(laplace_functional_analytic(&i2, 1.0, &bad).is_err());
        let boxed = Functional {
            time: TimeFactor::Constant(1.0),
            mark: MarkFactor::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
        };
        assert!(matches!(
            laplace_functional_analytic(&i2, 1.0, &boxed),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn analytic_linear_and_window_against_quadrature() {
        // midpoint rule on ∫_0^h (1 - e^{-h(s)}) ds
        let quad = |tf: &TimeFactor, h: f64| {
            let m = 200_000;
            (0..m)
                .map(|i| {
                    let s = (i as f64 + 0.5) * h / m as f64;
                    1.0 - (-tf.eval(s)).exp()
                })
                .sum::<f64>()
                * h
                / m as f64
        };
        for tf in [
            TimeFactor::Linear(0.7),
            TimeFactor::Window {
                start: 0.25,
                end: 0.9,
                value: 2.0,
            },
            TimeFactor::Window {
                start: 1.0,
                end: 5.0,
                value: 0.5,
            },
            TimeFactor::Constant(0.3),
        ] {
            // a window edge inside a cell costs at most one cell width
            let h = 1.5;
            assert!(
                (tf.integral(h) - quad(&tf, h)).abs() < 2.0 * h / 200_000.0,
                "{tf:?}"
            );
        }
    }

    #[test]
    fn mc_examples() {
        let streams = Streams::new(4);
        let i2 = Intensity::unmarked(2.0).unwrap();
        let zero = laplace_functional_mc(&i2, 1.0, &Functional::zero(), 1000, &streams).unwrap();
        assert_eq!(zero.value, 1.0);
        let empty = Intensity::unmarked(0.0).unwrap();
        let v =
            laplace_functional_mc(&empty, 1.0, &Functional::constant(3.0), 1000, &streams).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn discrete_marks_box_functional() {
        let marks = MarkLaw::Discrete(vec![Atom::new(vec![0.5], 1.0), Atom::new(vec![2.0], 3.0)]);
        let intensity = Intensity::new(1.5, marks).unwrap();
        let f = Functional {
            time: TimeFactor::Window {
                start: 0.0,
                end: 0.5,
                value: 2.0,
            },
            mark: MarkFactor::Box {
                lo: vec![1.0],
                hi: vec![3.0],
            },
        };
        let exact = laplace_functional_analytic(&intensity, 1.0, &f).unwrap();
        let expected = (-1.5 * 0.75 * 0.5 * (1.0 - (-2.0f64).exp())).exp();
        assert!((exact - expected).abs() < 1e-15);
        let mc = laplace_functional_mc(&intensity, 1.0, &f, 50_000, &Streams::new(5)).unwrap();
        assert!((mc.value - exact).abs() <= 4.0 * mc.std_error);
    }

    #[test]
    fn marked_check_small() {
        let t = SubordinatorSpec::with_atoms(vec![0.0, 0.0], vec![Atom::new(vec![1.0, 1.0], 1.0)])
            .unwrap();
        let x = SubordinateSpec::brownian(
            vec![0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let f = Functional {
            time: TimeFactor::Constant(1.0),
            mark: MarkFactor::Box {
                lo: vec![0.0, 0.0, 0.0, 0.0],
                hi: vec![2.0, 2.0, f64::INFINITY, f64::INFINITY],
            },
        };
        let cfg = MarkedCheckConfig {
            reps: 20_000,
            inner: 16,
            ..Default::default()
        };
        let r = marked_laplace_check(&t, &x, &f, &cfg, &Streams::new(6)).unwrap();
        assert!(r.pass, "{r:?}");
        let drifted = SubordinatorSpec::deterministic(vec![1.0, 1.0]).unwrap();
        assert!(marked_laplace_check(&drifted, &x, &f, &cfg, &Streams::new(6)).is_err());
    }
}
