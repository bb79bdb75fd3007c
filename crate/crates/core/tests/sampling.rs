use nalgebra::DMatrix;
use rayon::prelude::*;

use levysub::rng::{Purpose, Streams};
use levysub::subordination::{simulate_replicates, states_at, SubordinationKind};
use levysub::verify::{cf_compare, default_theta_grid, DEFAULT_K};
use levysub::{
    sample_subordinate_at, vector_time_cf, weak_exponent, Atom, MonteCarlo, SubordinateSpec,
    SubordinatorSpec,
};

const N: usize = 100_000;

fn draws(x: &SubordinateSpec, t: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let streams = Streams::new(seed);
    (0..N)
        .into_par_iter()
        .map(|i| sample_subordinate_at(x, t, &mut streams.stream(Purpose::Sampler, i as u64)).unwrap())
        .collect()
}

#[test]
fn vector_time_sampler_matches_its_characteristic_function() {
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 2.0, 0.3, -0.2, 0.3, 0.5]);
    let bm = SubordinateSpec::brownian(vec![0.2, -0.1, 0.0], sigma).unwrap();
    let cpp = SubordinateSpec::compound_poisson(
        3,
        vec![Atom::new(vec![1.0, -0.5, 0.3], 1.5), Atom::new(vec![0.0, 0.8, -1.0], 0.7)],
    )
    .unwrap();
    let t = [0.5, 2.0, 1.0];
    let grid = default_theta_grid(3, 16, 0.5, 0);
    for (seed, x) in [(1, bm), (2, cpp)] {
        let samples = draws(&x, &t, seed);
        let report = cf_compare(&samples, |theta| vector_time_cf(&x, &t, theta), &grid, DEFAULT_K).unwrap();
        assert!(report.pass, "{report}");
    }
}

#[test]
fn weak_simulation_of_truncated_gamma_matches_mc_exponent() {
    let t = SubordinatorSpec::gamma_truncated(vec![1.0, 0.5], 2.0, 3.0, None).unwrap();
    let x = SubordinateSpec::brownian(vec![0.1, -0.1], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]))
        .unwrap();
    let paths = simulate_replicates(SubordinationKind::Weak, &t, &x, 1.0, &[], &Streams::new(3), N).unwrap();
    let samples = states_at(&paths, 1.0).unwrap();
    let grid = default_theta_grid(4, 16, 0.5, 0);
    let mc = MonteCarlo { samples: 200_000, seed: 4 };
    // the target is itself a Monte Carlo estimate: widen by 4 of its SEs
    // (|e^a − e^b| ≤ |a − b| when both real parts are ≤ 0)
    let mut worst: f64 = 0.0;
    for theta in &grid {
        let psi = weak_exponent(&t, &x, &theta[..2], &theta[2..], &mc).unwrap();
        let target = psi.value.exp();
        let one = cf_compare(&samples, |_| Ok(target), std::slice::from_ref(theta), DEFAULT_K).unwrap();
        let slack = 4.0 * psi.std_error.unwrap();
        worst = worst.max(one.max_deviation() / (one.bound[0] + slack));
    }
    assert!(worst <= 1.0, "{worst}");
}
