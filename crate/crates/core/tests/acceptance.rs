//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! `cargo test -p covertime --test acceptance` runs everything;
//! pass criterion numbers as arguments to run a subset, e.g. `-- 1 2 9`.

use std::time::{Duration, Instant};

use covertime::coupling::{default_probes, verify_ray_knight};
use covertime::exact::{
    ball_escape_problem, gambler_ruin_formula, green_matrix, hitting_probability, two_stage_race_probability,
    unvisited_probability,
};
use covertime::experiments::{
    idlaw_check, persist, run_experiment, simulate_two_stage_race, tail_bound_sweep, ExperimentConfig, ExperimentKind,
    OutputFormat, RateConvention, RACE_DEFAULTS,
};
use covertime::gff::{covariance_factor, psi_field, sample_dgff, zero_average_decompose};
use covertime::lattice::{
    bulk_vertices, discretize_domain, floor_exp, wire_boundary, DomainShape, LatticeDomain, Point, WiredGraph,
};
use covertime::onedim::{bridge_min_probability, simulate_bridge_min};
use covertime::rng::par_replicas;
use covertime::walk::{run_to_boundary_time, WalkConfig};
use nalgebra::DMatrix;
use serde_json::Value;

const SEED: u64 = 20261016;

type Verdict = covertime::Result<(bool, String)>;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn square(side: usize) -> WiredGraph {
    wire_boundary(LatticeDomain::square(side).unwrap())
}

fn c1_green() -> Verdict {
    let mut ok = true;
    let mut worst = 0.0f64;
    for rate in [1.0, 1.0 / (2.0 * std::f64::consts::PI)] {
        let one = green_matrix(&square(1), rate)?;
        worst = worst.max((one.get(0, 0) - 1.0 / (4.0 * rate)).abs());
        let two = green_matrix(&WiredGraph::path(2)?, rate)?;
        for (i, j, v) in [(0, 0, 2.0 / 3.0), (1, 1, 2.0 / 3.0), (0, 1, 1.0 / 3.0), (1, 0, 1.0 / 3.0)] {
            worst = worst.max((two.get(i, j) - v / rate).abs());
        }
        let mut graphs: Vec<WiredGraph> = (1..=9).map(square).collect();
        graphs.push(wire_boundary(discretize_domain(&DomainShape::UnitDisc, 2.5)?));
        graphs.push(wire_boundary(discretize_domain(&DomainShape::Annulus { inner_radius: 0.5 }, 2.5)?));
        for g in &graphs {
            let m = green_matrix(g, rate)?;
            ok &= m.asymmetry() == 0.0 && m.is_positive_definite();
        }
    }
    ok &= worst < 1e-12;
    Ok((ok, format!("max error {worst:.2e}; symmetric PD on 11 graphs x 2 rates")))
}

fn c2_gambler() -> Verdict {
    let x = Point::new(0, 0);
    let mut worst_ratio = 0.0f64;
    for r in [2.0f64, 3.0] {
        let big_r = r + 2.0;
        let h = hitting_probability(&ball_escape_problem(x, r, big_r)?)?;
        let tol = 10.0 * (-r).exp();
        let (lo, hi) = (floor_exp(r) as f64, floor_exp(big_r) as f64);
        for k in 0..20 {
            let rho = lo + 1.0 + (hi - lo - 2.0) * (k as f64 + 0.5) / 20.0;
            let th = 2.39996 * k as f64;
            let y = Point::new((rho * th.cos()).round() as i64, (rho * th.sin()).round() as i64);
            let exact = h.at_point(y).expect("start lies in the annulus");
            let err = (exact - gambler_ruin_formula(x, y, r, big_r)).abs();
            worst_ratio = worst_ratio.max(err / tol);
        }
    }
    Ok((worst_ratio <= 1.0, format!("max |err| / (10 e^-r) = {worst_ratio:.3} over 40 starts")))
}

fn c3_unvisited() -> Verdict {
    let g = square(9);
    let x = g.domain().central_vertex();
    let i = g.index_of(x).unwrap();
    let n = 100_000u64;
    let cfg = WalkConfig::new(&g, 1.0, SEED, 0)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let u = unvisited_probability(&g, 1.0, x, t)?;
        let cross = u.excursion_rate * u.green_diagonal;
        ok &= (cross - 1.0).abs() <= 1e-8;
        let hits = par_replicas(n, |r| run_to_boundary_time(&cfg.with_replica(r), t).map(|l| l.interior[i] == 0.0))
            .into_iter()
            .collect::<covertime::Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&b| b)
            .count();
        let f = hits as f64 / n as f64;
        let se = (u.probability * (1.0 - u.probability) / n as f64).sqrt();
        let z = (f - u.probability) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("t={t}: z={z:+.2}"));
        if t == 2.0 {
            parts.push(format!("lambda*G={cross:.10}"));
        }
    }
    Ok((ok, parts.join(", ")))
}

fn c4_mean_local_time() -> Verdict {
    let g = square(9);
    let bulk = bulk_vertices(g.domain());
    let probes: Vec<Point> = default_probes(&g).into_iter().filter(|p| bulk.contains(p)).collect();
    let t = 1.0;
    let n = 10_000u64;
    let cfg = WalkConfig::new(&g, 1.0, SEED, 0)?;
    let idx: Vec<usize> = probes.iter().map(|p| g.index_of(*p).unwrap()).collect();
    let runs = par_replicas(n, |r| {
        run_to_boundary_time(&cfg.with_replica(r), t).map(|l| idx.iter().map(|&i| l.interior[i]).collect::<Vec<f64>>())
    })
    .into_iter()
    .collect::<covertime::Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for k in 0..probes.len() {
        let xs: Vec<f64> = runs.iter().map(|v| v[k]).collect();
        let (m, se) = mean_se(&xs);
        worst = worst.max(((m - t) / se).abs());
    }
    Ok((worst <= 3.0, format!("{} bulk probes, max |z| = {worst:.2}", probes.len())))
}

fn c5_ray_knight() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for side in [5, 7, 9, 11, 13] {
        let g = square(side);
        let f = covariance_factor(&green_matrix(&g, 1.0)?)?;
        let probes = default_probes(&g);
        let rep = verify_ray_knight(&g, &f, 1.0, 1.0, &probes, 100_000, SEED + side as u64)?;
        let failing = rep.failing_probes().len();
        let min_p = rep.probes.iter().map(|p| p.ks.p_value).fold(1.0, f64::min);
        ok &= failing <= 1 && probes.len() == 6;
        parts.push(format!("{side}x{side}: {failing}/6 fail, min p {min_p:.3}"));
    }
    Ok((ok, parts.join("; ")))
}

/// Empirical second moments from `n` draws, accumulated in chunks.
fn empirical_moments(g: &WiredGraph, rate: f64, n: u64, seed: u64) -> covertime::Result<(f64, f64, f64)> {
    let gm = green_matrix(g, rate)?;
    let f = covariance_factor(&gm)?;
    let resid = f.reconstruction_error(&gm);
    let v = g.len();
    let mut s1 = DMatrix::<f64>::zeros(v, v);
    let mut s2 = DMatrix::<f64>::zeros(v, v);
    let chunk = 10_000u64;
    let mut start = 0;
    while start < n {
        let m = chunk.min(n - start);
        let rows: Vec<Vec<f64>> = (start..start + m).map(|r| sample_dgff(&f, seed, r).values().to_vec()).collect();
        let x = DMatrix::from_fn(m as usize, v, |r, c| rows[r][c]);
        let x2 = x.map(|a| a * a);
        s1 += x.transpose() * &x;
        s2 += x2.transpose() * &x2;
        start += m;
    }
    let nf = n as f64;
    let (mut diag, mut off) = (0.0f64, 0.0f64);
    for i in 0..v {
        for j in 0..v {
            let target = gm.get(i, j) / 2.0;
            let m = s1[(i, j)] / nf;
            if i == j {
                diag = diag.max((m - target).abs() / target);
            } else {
                let se = ((s2[(i, j)] / nf - m * m).max(0.0) / nf).sqrt();
                off = off.max((m - target).abs() / se);
            }
        }
    }
    Ok((resid, diag, off))
}

fn c6_covariance() -> Verdict {
    let graphs = vec![
        ("3x3", square(3)),
        ("7x7", square(7)),
        ("14x14", square(14)),
        ("disc", wire_boundary(discretize_domain(&DomainShape::UnitDisc, 2.1)?)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, g)) in graphs.iter().enumerate() {
        assert!(g.len() <= 200);
        let (resid, diag, off) = empirical_moments(g, 1.0, 200_000, SEED + k as u64)?;
        ok &= resid < 1e-8 && diag < 0.05 && off < 5.0;
        parts.push(format!("{name}({}): resid {resid:.1e}, diag {:.2}%, off {off:.2} SE", g.len(), 100.0 * diag));
    }
    Ok((ok, parts.join("; ")))
}

fn c7_decomposition() -> Verdict {
    let g = square(9);
    let gm = green_matrix(&g, 1.0)?;
    let f = covariance_factor(&gm)?;
    let psi = psi_field(&gm);
    let v = g.len() as f64;
    let psi_mean_err = (psi.iter().sum::<f64>() / v - 1.0).abs();
    let probes: Vec<usize> = default_probes(&g).iter().map(|p| g.index_of(*p).unwrap()).collect();
    let n = 100_000u64;
    let draws = par_replicas(n, |r| {
        let h = sample_dgff(&f, SEED, r);
        let (hbar, hhat) = zero_average_decompose(&h, &psi).expect("same graph");
        let ident = h
            .values()
            .iter()
            .zip(&psi)
            .zip(&hhat)
            .map(|((x, p), e)| (x - (p * hbar + e)).abs())
            .fold(0.0, f64::max);
        let hat_mean = (hhat.iter().sum::<f64>() / hhat.len() as f64).abs();
        (hbar, probes.iter().map(|&i| hhat[i]).collect::<Vec<f64>>(), ident, hat_mean)
    });
    let ident = draws.iter().map(|d| d.2).fold(0.0, f64::max);
    let hat_mean = draws.iter().map(|d| d.3).fold(0.0, f64::max);
    let hb: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut worst = 0.0f64;
    for k in 0..probes.len() {
        let e: Vec<f64> = draws.iter().map(|d| d.1[k]).collect();
        let c = correlation(&hb, &e);
        // SE of a sample correlation near zero.
        worst = worst.max(c.abs() * (n as f64).sqrt());
    }
    let ok = ident <= 1e-12 && hat_mean <= 1e-12 && psi_mean_err <= 1e-12 && worst <= 3.0;
    Ok((
        ok,
        format!(
            "identity {ident:.1e}, |mean hhat| {hat_mean:.1e}, |mean psi - 1| {psi_mean_err:.1e}, max |corr|/SE {worst:.2}"
        ),
    ))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_se(a);
    let (mb, _) = mean_se(b);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn c8_idlaw() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (top, i, j)) in [(8, 1, 3), (16, 2, 5), (16, 4, 4)].into_iter().enumerate() {
        let c = idlaw_check(top, i, j, 100_000, SEED + k as u64)?;
        let pass = c.downcrossings.p_value > 0.01 && c.given_local_time.p_value > 0.01 && c.local_time.statistic < 0.02;
        ok &= pass;
        parts.push(format!(
            "({top},{i},{j}): chi2 p {:.3}/{:.3}, KS {:.4}",
            c.downcrossings.p_value, c.given_local_time.p_value, c.local_time.statistic
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c9_tails() -> Verdict {
    let s = tail_bound_sweep()?;
    Ok((
        s.points == 50 && s.violations.is_empty(),
        format!("{} grid points, {} checks, {} violations, max tail-bound {:.2e}", s.points, s.checks, s.violations.len(), s.max_excess),
    ))
}

fn c10_race() -> Verdict {
    let (tau, p, q) = RACE_DEFAULTS;
    let exact = two_stage_race_probability(tau, p, q)?;
    let est = simulate_two_stage_race(tau, p, q, 1_000_000, SEED)?;
    let z = (est.estimate - exact) / est.std_error;
    Ok((z.abs() <= 3.0, format!("exact {exact:.5}, simulated {:.5}, z={z:+.2}", est.estimate)))
}

fn c11_bridge() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (a, b, x, top, var)) in [(1.0, 0.5, 0.0, 1.0, 1.0), (2.0, 1.0, 0.5, 2.0, 0.5)].into_iter().enumerate() {
        let exact = bridge_min_probability(a, b, x, top, var)?;
        let est = simulate_bridge_min(a, b, x, top, var, 100_000, 8000, SEED + k as u64)?;
        let gap = (est.estimate - exact).abs();
        ok &= gap <= 3.0 * est.std_error + 0.01;
        parts.push(format!("exact {exact:.4}, simulated {:.4} (gap {gap:.4})", est.estimate));
    }
    Ok((ok, parts.join("; ")))
}

fn section<'a>(summary: &'a std::collections::BTreeMap<String, Value>) -> &'a Value {
    summary.iter().find(|(k, _)| k.starts_with("n=")).map(|(_, v)| v).expect("one n section")
}

fn c12_cover() -> Verdict {
    let cfg = ExperimentConfig::new(
        ExperimentKind::Cover,
        DomainShape::UnitSquare,
        vec![256f64.ln()],
        RateConvention::One,
        2000,
        SEED,
    );
    let res = run_experiment(&cfg)?;
    let sec = section(&res.summary);
    let ks_g = sec["ks_gumbel"]["statistic"].as_f64().unwrap_or(f64::NAN);
    let ks_n = sec["ks_gaussian"]["statistic"].as_f64().unwrap_or(f64::NAN);
    let skew = sec["skewness"].as_f64().unwrap_or(f64::NAN);
    let bulk = sec["bulk_fraction"].as_f64().unwrap_or(f64::NAN);
    let ok = ks_g < ks_n && skew > 0.0 && bulk >= 0.95;
    Ok((
        ok,
        format!(
            "N={}, {} replicas: KS gumbel {ks_g:.4} vs gaussian {ks_n:.4}, skewness {skew:.3}, last vertex in bulk {:.1}%",
            sec["side"],
            res.records.len(),
            100.0 * bulk
        ),
    ))
}

fn c13_phase_a() -> Verdict {
    let cfg = ExperimentConfig::new(
        ExperimentKind::PhaseA,
        DomainShape::UnitSquare,
        vec![5.0],
        RateConvention::Retuned,
        500,
        SEED,
    );
    let res = run_experiment(&cfg)?;
    let sec = section(&res.summary);
    let in_range = sec["unvisited_in_range_fraction"].as_f64().unwrap_or(f64::NAN);
    let clustered = sec["clustered_fraction"].as_f64().unwrap_or(f64::NAN);
    Ok((
        in_range >= 0.95 && clustered >= 0.8,
        format!(
            "|W|/sqrt(n) in (0.01, 100): {:.1}%, clustered: {:.1}%, mean |W|/sqrt(n) {:.3}",
            100.0 * in_range,
            100.0 * clustered,
            sec["unvisited_scaled"]["mean"].as_f64().unwrap_or(f64::NAN)
        ),
    ))
}

fn c14_determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut bad = Vec::new();
    for kind in ExperimentKind::ALL {
        let (n, replicas) = match kind {
            ExperimentKind::RayKnight => (2.0, 1000),
            ExperimentKind::Race => (1.0, 20_000),
            ExperimentKind::PhaseA | ExperimentKind::PhaseBRace => (3.0, 20),
            _ => (2.5, 60),
        };
        let n = if kind.uses_lattice() { vec![n] } else { vec![] };
        let cfg = ExperimentConfig::new(kind, DomainShape::UnitSquare, n, RateConvention::One, replicas, SEED);
        let a = run_experiment(&cfg)?;
        let b = run_experiment(&cfg)?;
        let da = dir.path().join(format!("{}-a", kind.name()));
        let db = dir.path().join(format!("{}-b", kind.name()));
        persist(&a, &da, OutputFormat::Json)?;
        persist(&b, &db, OutputFormat::Json)?;
        let read = |p: &std::path::Path| std::fs::read(p.join("records.jsonl")).unwrap_or_default();
        if a.records.is_empty() || read(&da) != read(&db) || a.records_digest() != b.records_digest() {
            bad.push(kind.name());
        }
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} suites byte-identical on rerun", ExperimentKind::ALL.len())
        } else {
            format!("differing: {}", bad.join(", "))
        },
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, u64, fn() -> Verdict); 14] = [
        (1, "Green exactness", 1, c1_green),
        (2, "Gambler's ruin", 10, c2_gambler),
        (3, "Unvisited probability", 120, c3_unvisited),
        (4, "Mean local time", 60, c4_mean_local_time),
        (5, "Ray-Knight isomorphism", 300, c5_ray_knight),
        (6, "DGFF covariance", 120, c6_covariance),
        (7, "Zero-average decomposition", 60, c7_decomposition),
        (8, "Conditional 1D laws", 120, c8_idlaw),
        (9, "Compound tail bounds", 10, c9_tails),
        (10, "Excursion race", 30, c10_race),
        (11, "Bridge minimum", 60, c11_bridge),
        (12, "Cover-time shape", 1800, c12_cover),
        (13, "Phase-A shadow", 1200, c13_phase_a),
        (14, "Determinism", 0, c14_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = f();
        let elapsed = start.elapsed();
        let in_budget = budget == 0 || elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match verdict {
            Ok((pass, detail)) => (pass && in_budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = if budget == 0 {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s / {budget}s", elapsed.as_secs_f64())
        };
        println!("{} {id:>2} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
        failed += (!pass) as usize;
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
