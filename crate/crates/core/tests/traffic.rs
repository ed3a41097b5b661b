use fasa_core::traffic::{split_stream, ArrivalModel};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn chi_square_p(observed: &[f64], expected: &[f64], fitted: usize) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let df = (observed.len() - 1 - fitted) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn interrupted_poisson_moments() {
    let model = ArrivalModel::new(0.5, 4.0).unwrap();
    let mut rng = split_stream(2024, 0);
    let n = 1_000_000;
    let samples: Vec<f64> = (0..n).map(|_| model.sample(&mut rng) as f64).collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // theta*lambda and theta*(lambda + lambda^2) - (theta*lambda)^2
    assert!((mean - 2.0).abs() < 0.01, "mean {mean}");
    assert!((var - 6.0).abs() < 0.05, "variance {var}");
    assert!((model.lambda_bar() - 2.0).abs() < 1e-12);
    assert!((model.variance() - 6.0).abs() < 1e-12);
}

#[test]
fn poisson_goodness_of_fit() {
    for (i, &lambda) in [0.3, 2.0, 9.99, 10.0, 17.5, 30.0].iter().enumerate() {
        let model = ArrivalModel::poisson(lambda).unwrap();
        let pois = Poisson::new(lambda).unwrap();
        let mut rng = split_stream(77, i as u64);
        let draws = 200_000usize;
        let mut counts = vec![0f64; 200];
        for _ in 0..draws {
            let k = model.sample(&mut rng) as usize;
            counts[k.min(199)] += 1.0;
        }
        // bins with expectation >= 20, the rest lumped into two tails
        let mode = lambda.floor() as usize;
        let mut lo = mode;
        while lo > 0 && pois.pmf(lo as u64 - 1) * draws as f64 >= 20.0 {
            lo -= 1;
        }
        let mut hi = mode;
        while pois.pmf(hi as u64 + 1) * draws as f64 >= 20.0 {
            hi += 1;
        }
        let mut obs = Vec::new();
        let mut exp = Vec::new();
        let below: f64 = (0..lo).map(|k| pois.pmf(k as u64)).sum();
        if lo > 0 {
            obs.push(counts[..lo].iter().sum());
            exp.push(below * draws as f64);
        }
        for k in lo..=hi {
            obs.push(counts[k]);
            exp.push(pois.pmf(k as u64) * draws as f64);
        }
        let inside: f64 = (lo..=hi).map(|k| pois.pmf(k as u64)).sum();
        obs.push(counts[hi + 1..].iter().sum());
        exp.push((1.0 - below - inside) * draws as f64);
        let p = chi_square_p(&obs, &exp, 0);
        assert!(p > 1e-3, "lambda {lambda}: p = {p}");
    }
}

#[test]
fn streams_look_independent() {
    let pairs = [
        (split_stream(5, 0), split_stream(5, 1)),
        (split_stream(5, 0), split_stream(6, 0)),
        (split_stream(5, 3), split_stream(5, 3).lane(1)),
    ];
    for (mut a, mut b) in pairs {
        let mut table = [[0f64; 10]; 10];
        let n = 200_000;
        for _ in 0..n {
            let i = (a.uniform() * 10.0) as usize;
            let j = (b.uniform() * 10.0) as usize;
            table[i][j] += 1.0;
        }
        let obs: Vec<f64> = table.iter().flatten().copied().collect();
        let exp = vec![n as f64 / 100.0; 100];
        let p = chi_square_p(&obs, &exp, 0);
        assert!(p > 1e-3, "joint cells not uniform: p = {p}");
    }
}

#[test]
fn silent_source_never_fires() {
    let mut rng = split_stream(1, 1);
    let m = ArrivalModel::silent();
    assert!((0..10_000).all(|_| m.sample(&mut rng) == 0));
}

proptest! {
    #[test]
    fn same_provenance_same_draws(seed in any::<u64>(), index in 0u64..1_000_000, lane in 0u64..4) {
        let mut a = split_stream(seed, index).lane(lane);
        let mut b = split_stream(seed, index).lane(lane);
        for _ in 0..32 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        prop_assert_eq!(a.provenance(), (seed, index));
        prop_assert_eq!(a.lane_id(), lane);
    }

    #[test]
    fn uniforms_in_unit_interval(seed in any::<u64>(), index in any::<u64>()) {
        let mut s = split_stream(seed, index);
        for _ in 0..64 {
            let u = s.uniform();
            prop_assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn rate_parametrisation(lambda_bar in 0.001f64..0.5, theta in 0.0001f64..=1.0) {
        let m = ArrivalModel::from_rate(lambda_bar, theta).unwrap();
        prop_assert!((m.lambda_bar() - lambda_bar).abs() <= 1e-12 * lambda_bar.max(1.0));
        prop_assert!((m.theta() * m.lambda() - lambda_bar).abs() <= 1e-12);
        let l = m.lambda();
        let expected = theta * (l + l * l) - (theta * l).powi(2);
        prop_assert!((m.variance() - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn invalid_parameters_rejected(theta in prop_oneof![-1.0f64..-1e-9, 1.0000001f64..5.0], lambda in 0.1f64..10.0) {
        prop_assert!(ArrivalModel::new(theta, lambda).is_err());
        prop_assert!(ArrivalModel::new(0.5, -lambda).is_err());
    }
}
