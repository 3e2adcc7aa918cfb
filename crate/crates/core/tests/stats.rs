use covertime::rng::{stream, Stream};
use covertime::stats::{
    chi_square_pvalue, gaussian_fit, gumbel_cdf, gumbel_fit, gumbel_log_likelihood, integer_histogram,
    kolmogorov_sf, ks_statistic, normal_cdf, randomized_pit, skewness, tv_distance, two_sample_ks,
    uniformity_test,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, Stream::MonteCarlo, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `sup |F_n - F|` from the sorted sample, both one-sided gaps.
fn brute_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `sup |F_a - F_b|` by evaluating both empirical CDFs on the pooled sample.
fn brute_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
    a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
}

#[test]
fn kolmogorov_tail_reference_values() {
    // Classical critical values of the limiting distribution.
    for (lambda, p) in [(1.2239, 0.10), (1.3581, 0.05), (1.6276, 0.01), (1.9495, 0.001)] {
        assert!((kolmogorov_sf(lambda) - p).abs() < 2e-4, "{lambda}");
    }
    assert_eq!(kolmogorov_sf(0.0), 1.0);
    assert!(kolmogorov_sf(10.0) < 1e-40);
}

#[test]
fn ks_matches_sorted_scan() {
    let xs = normals(1, 500);
    let got = ks_statistic(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap();
    assert!((got.statistic - brute_ks(&xs, |x| normal_cdf(x, 0.0, 1.0))).abs() < 1e-15);
    assert!(got.p_value > 0.01);
    let shifted = ks_statistic(&xs, |x| normal_cdf(x, 0.5, 1.0)).unwrap();
    assert!(shifted.p_value < 1e-6);
}

#[test]
fn two_sample_ks_matches_pooled_scan() {
    let a = normals(2, 300);
    let b: Vec<f64> = normals(3, 200).iter().map(|x| x * 1.1).collect();
    let got = two_sample_ks(&a, &b).unwrap();
    assert!((got.statistic - brute_two_sample(&a, &b)).abs() < 1e-15);
    let ties_a = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0];
    let ties_b = [0.0, 1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0];
    let t = two_sample_ks(&ties_a, &ties_b).unwrap();
    assert!((t.statistic - brute_two_sample(&ties_a, &ties_b)).abs() < 1e-15);
}

#[test]
fn chi_square_reference_values() {
    // One degree of freedom at the 5% critical value 3.8415.
    let e = [50.0, 50.0];
    let d = (3.841_458_8f64 * 25.0).sqrt();
    let r = chi_square_pvalue(&[50.0 + d, 50.0 - d], &e).unwrap();
    assert_eq!(r.dof, 1);
    assert!((r.p_value - 0.05).abs() < 1e-6);
    // Sparse tail bins are merged until each expects at least five.
    let r = chi_square_pvalue(&[40.0, 30.0, 20.0, 6.0, 3.0, 1.0], &[40.0, 30.0, 20.0, 6.0, 3.0, 1.0]).unwrap();
    assert_eq!(r.bins, 4);
    assert!(r.p_value > 0.999);
    assert!(chi_square_pvalue(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn randomized_pit_is_uniform_for_a_discrete_law() {
    let mut rng = stream(4, Stream::MonteCarlo, 0);
    let p = 0.3;
    let cdf = |k: u64| 1.0 - (1.0 - p as f64).powi(k as i32 + 1);
    let us: Vec<f64> = (0..20_000)
        .map(|_| {
            let mut k = 0;
            while rng.random::<f64>() >= p {
                k += 1;
            }
            let lower = if k == 0 { 0.0 } else { cdf(k - 1) };
            randomized_pit(lower, cdf(k), rng.random())
        })
        .collect();
    assert!(uniformity_test(&us, 20).unwrap().p_value > 0.001);
}

#[test]
fn gumbel_fit_solves_the_likelihood_equations() {
    let mut rng = stream(5, Stream::MonteCarlo, 0);
    let g = Gumbel::new(2.0, 0.7).unwrap();
    let xs: Vec<f64> = (0..4000).map(|_| g.sample(&mut rng)).collect();
    let fit = gumbel_fit(&xs).unwrap();
    assert!(fit.converged);
    let h = 1e-5;
    let ll = |mu: f64, b: f64| gumbel_log_likelihood(&xs, mu, b);
    let d_mu = (ll(fit.location + h, fit.scale) - ll(fit.location - h, fit.scale)) / (2.0 * h);
    let d_b = (ll(fit.location, fit.scale + h) - ll(fit.location, fit.scale - h)) / (2.0 * h);
    assert!(d_mu.abs() < 1e-2, "{d_mu}");
    assert!(d_b.abs() < 1e-2, "{d_b}");
    assert!((fit.location - 2.0).abs() < 0.05 && (fit.scale - 0.7).abs() < 0.05);
    assert!((fit.log_likelihood - ll(fit.location, fit.scale)).abs() < 1e-9);
    let ks_g = ks_statistic(&xs, |x| gumbel_cdf(x, fit.location, fit.scale)).unwrap();
    let gf = gaussian_fit(&xs).unwrap();
    let ks_n = ks_statistic(&xs, |x| normal_cdf(x, gf.location, gf.scale)).unwrap();
    assert!(ks_g.statistic < ks_n.statistic);
    assert!(skewness(&xs) > 0.9);
}

#[test]
fn distances_and_histograms() {
    assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    assert!((tv_distance(&[1.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    let h = integer_histogram(&[0.0, 1.0, 1.0, 7.0], 3);
    assert_eq!(h, vec![0.25, 0.5, 0.25]);
}

proptest! {
    #[test]
    fn ks_statistic_in_unit_interval(xs in prop::collection::vec(-5.0f64..5.0, 10..200)) {
        let r = ks_statistic(&xs, |x| normal_cdf(x, 0.0, 1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((r.statistic - brute_ks(&xs, |x| normal_cdf(x, 0.0, 1.0))).abs() < 1e-12);
    }
}
