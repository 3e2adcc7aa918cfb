use covertime::onedim::{
    ballot_rate, bridge_min_probability, compound_pmf, compound_sample, compound_tail_bound, conditional_law,
    linear_walk, ln_ballot_rate, local_time_marginal, simulate_bridge_min, simulate_linear_walk, Conditioning,
    CompoundSpec, LinearStop,
};
use covertime::stats::{chi_square_pvalue, ks_statistic_mixed};
use proptest::prelude::*;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_binomial(n, k)
}

/// `P(S = s)` from the negative-binomial form of a sum of `m` geometrics.
fn compound_geo_pmf(count: &dyn Fn(u64) -> f64, max_m: u64, q: f64, s: u64) -> f64 {
    if s == 0 {
        return count(0);
    }
    (1..=max_m.min(s))
        .map(|m| {
            let ln = ln_choose(s - 1, m - 1) + m as f64 * q.ln() + if q < 1.0 { (s - m) as f64 * (1.0 - q).ln() } else { 0.0 };
            let tail = if q == 1.0 && s != m { 0.0 } else { ln.exp() };
            count(m) * tail
        })
        .sum()
}

fn binom(n: u64, p: f64) -> impl Fn(u64) -> f64 {
    move |m| {
        if m > n {
            0.0
        } else if p == 1.0 {
            (m == n) as u64 as f64
        } else {
            (ln_choose(n, m) + m as f64 * p.ln() + (n - m) as f64 * (1.0 - p).ln()).exp()
        }
    }
}

fn poisson(mu: f64) -> impl Fn(u64) -> f64 {
    move |m| (m as f64 * mu.ln() - mu - ln_gamma(m as f64 + 1.0)).exp()
}

#[test]
fn discrete_pmfs_match_negative_binomial_sums() {
    for (n, p, q) in [(5, 0.3, 0.5), (12, 0.25, 0.25), (1, 0.5, 0.9), (30, 0.1, 0.6)] {
        let spec = CompoundSpec::bigeo(n, p, q).unwrap();
        let c = binom(n, p);
        for s in 0..60 {
            assert!((spec.pmf(s) - compound_geo_pmf(&c, n, q, s)).abs() < 1e-12, "{spec:?} s={s}");
        }
    }
    for (mu, q) in [(2.0, 0.5), (7.5, 0.2), (0.3, 1.0)] {
        let spec = CompoundSpec::poigeo(mu, q).unwrap();
        let c = poisson(mu);
        for s in 0..80 {
            assert!((spec.pmf(s) - compound_geo_pmf(&c, 200, q, s)).abs() < 1e-12, "{spec:?} s={s}");
        }
    }
    // P(S = 1) = P(M = 1) q = 1/2 * 1/2.
    let spec = CompoundSpec::bigeo(2, 0.5, 0.5).unwrap();
    assert!((spec.pmf(0) - 0.25).abs() < 1e-15);
    assert!((spec.pmf(1) - 0.25).abs() < 1e-15);
}

#[test]
fn biexp_cdf_matches_erlang_mixture() {
    for (n, p, lambda) in [(4, 0.5, 0.5), (10, 0.2, 2.0), (1, 1.0, 1.0)] {
        let spec = CompoundSpec::biexp(n, p, lambda).unwrap();
        let c = binom(n, p);
        for x in [0.0, 0.1, 0.7, 2.0, 5.5, 20.0] {
            let lx = lambda * x;
            let erlang = |m: u64| {
                let mut term = (-lx as f64).exp();
                let mut acc = 0.0;
                for k in 0..m {
                    if k > 0 {
                        term *= lx / k as f64;
                    }
                    acc += term;
                }
                1.0 - acc
            };
            let oracle: f64 = (0..=n).map(|m| c(m) * if m == 0 { 1.0 } else { erlang(m) }).sum();
            assert!((spec.cdf(x) - oracle).abs() < 1e-10, "{spec:?} x={x}");
        }
        let g = compound_pmf(&spec, &[0.0, 1.0]);
        assert!((g[0] - spec.atom_at_zero()).abs() < 1e-15);
        assert!((g[1] - spec.density(1.0)).abs() < 1e-15);
    }
}

#[test]
fn samples_follow_their_laws() {
    let spec = CompoundSpec::poigeo(3.0, 0.4).unwrap();
    let xs = compound_sample(&spec, 31, 40_000);
    let table = spec.pmf_table();
    let mut obs = vec![0.0; table.len()];
    for x in &xs {
        obs[(*x as usize).min(table.len() - 1)] += 1.0;
    }
    let exp: Vec<f64> = table.iter().map(|p| p * xs.len() as f64).collect();
    assert!(chi_square_pvalue(&obs, &exp).unwrap().p_value > 0.001);

    let spec = CompoundSpec::biexp(6, 0.4, 0.7).unwrap();
    let xs = compound_sample(&spec, 32, 40_000);
    let ks = ks_statistic_mixed(&xs, |x| spec.cdf(x), |x| spec.cdf_left(x)).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn linear_walk_reaches_zero_with_probability_one_over_top() {
    // An excursion from T reaches 0 with probability 1/T.
    let top = 5;
    let runs = simulate_linear_walk(top, LinearStop::Excursions(1), 2, 40_000).unwrap();
    let hits = runs.iter().filter(|r| r.local_times[0] > 0.0).count() as f64 / runs.len() as f64;
    let p = 1.0 / top as f64;
    assert!((hits - p).abs() < 4.0 * (p * (1.0 - p) / runs.len() as f64).sqrt());
    for r in runs.iter().take(100) {
        assert!(r.conservation_error() < 1e-9);
        assert_eq!(r.downcrossings[top], 1);
        assert_eq!(r.downcrossings[0], 0);
    }
    assert!(linear_walk(0, LinearStop::Excursions(1), 0, 0).is_err());
    assert!(linear_walk(3, LinearStop::Time(f64::NAN), 0, 0).is_err());
}

#[test]
fn downcrossing_law_given_downcrossings() {
    // T(T-j) given T(T-i) = m is Bigeo(m, 1/(j-i+1); same).
    let (top, i, j) = (8usize, 1usize, 3usize);
    let runs = simulate_linear_walk(top, LinearStop::Excursions(6), 5, 60_000).unwrap();
    let m = 6u64;
    let law = conditional_law(top, i, j, Conditioning::Downcrossings { m }).unwrap();
    let sel: Vec<u64> = runs
        .iter()
        .filter(|r| r.downcrossings[top - i] == m)
        .map(|r| r.downcrossings[top - j])
        .collect();
    assert!(sel.len() > 1000);
    let table = law.pmf_table();
    let mut obs = vec![0.0; table.len()];
    for &s in &sel {
        obs[(s as usize).min(table.len() - 1)] += 1.0;
    }
    let exp: Vec<f64> = table.iter().map(|p| p * sel.len() as f64).collect();
    assert!(chi_square_pvalue(&obs, &exp).unwrap().p_value > 0.001);
}

#[test]
fn local_time_marginal_matches_simulation() {
    let (top, i, t) = (6usize, 2usize, 3.0);
    let m = local_time_marginal(top, i, t).unwrap();
    assert!((m.mean() - t).abs() < 1e-12);
    assert!((m.atom() - (-t / i as f64).exp()).abs() < 1e-14);
    let xs: Vec<f64> = simulate_linear_walk(top, LinearStop::Time(t), 8, 30_000)
        .unwrap()
        .iter()
        .map(|r| r.local_times[top - i])
        .collect();
    let ks = ks_statistic_mixed(&xs, |x| m.cdf(x), |x| m.cdf_left(x)).unwrap();
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn bridge_probability_matches_simulation() {
    let (a, b, x, top) = (1.0, 0.5, 0.0, 1.0);
    let p = bridge_min_probability(a, b, x, top, 1.0).unwrap();
    assert!((p - (-1.0f64).exp()).abs() < 1e-15);
    let est = simulate_bridge_min(a, b, x, top, 1.0, 20_000, 2000, 4).unwrap();
    assert!((est.estimate - p).abs() < 3.0 * est.std_error + 0.01, "{est:?} vs {p}");
    assert!(bridge_min_probability(1.0, 1.0, 2.0, 1.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn ballot_rate_forms_agree(k in 2.0f64..6.0, top in 2.0f64..10.0, u in 0.1f64..3.0, v in 0.1f64..3.0) {
        let direct = ballot_rate(k, 0.25, top, u, v);
        let ln = ln_ballot_rate(k, 0.25, top, u, v);
        prop_assert!((direct.ln() - ln).abs() < 1e-9);
    }

    #[test]
    fn tails_respect_bounds(n in 1u64..60, p in 0.05f64..1.0, q in 0.05f64..1.0, frac in 0.0f64..4.0) {
        for spec in [
            CompoundSpec::bigeo(n, p, q).unwrap(),
            CompoundSpec::biexp(n, p, q).unwrap(),
            CompoundSpec::poigeo(n as f64 * p, q).unwrap(),
        ] {
            let theta = frac * spec.mean();
            let b = compound_tail_bound(&spec, theta).unwrap();
            prop_assert!(spec.tail(theta, b.side) <= b.bound + 1e-12, "{:?} theta={}", spec, theta);
        }
    }
}
