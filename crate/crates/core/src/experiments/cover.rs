use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{describe, error_value, histogram, replica_id, section_key, wired_domain, ExperimentConfig, ReplicaRecord, ResultRecord};
use crate::error::Result;
use crate::exact::{green_matrix, DENSE_VERTEX_LIMIT};
use crate::gff::{covariance_factor, eval_centering, lqg_proxy_measure, sample_dgff_on, Centering, SquareSpectralSampler};
use crate::lattice::{bulk_vertices, floor_exp, Point, WiredGraph};
use crate::rng::{par_replicas, Stream};
use crate::stats::{gaussian_fit, gumbel_cdf, gumbel_fit, ks_statistic, normal_cdf, skewness};
use crate::walk::{run_to_cover, WalkConfig};

/// Field samples drawn for the overlay.
pub const OVERLAY_FIELDS: u64 = 256;
const CRITICAL_ALPHA: f64 = 4.0 * 1.772_453_850_905_516;

/// Fitted mixture overlay. `ln_c_star` is a fit parameter, not a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayFit {
    pub label: String,
    pub ln_c_star: f64,
    pub sse: f64,
    pub ks_statistic: f64,
    pub fields: usize,
    /// `(ln Z, hbar)` per field sample.
    pub pairs: Vec<(f64, f64)>,
}

/// `E exp(-C Z e^{-2 pi s + 4 sqrt(pi) hbar})` averaged over `(ln Z, hbar)`.
pub fn mixture_cdf(s: f64, ln_c: f64, pairs: &[(f64, f64)]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let total: f64 = pairs
        .iter()
        .map(|&(ln_z, hbar)| {
            if ln_z == f64::NEG_INFINITY {
                1.0
            } else {
                (-(ln_c + ln_z - two_pi * s + CRITICAL_ALPHA * hbar).exp()).exp()
            }
        })
        .sum();
    total / pairs.len() as f64
}

fn overlay_pairs(g: &WiredGraph, seed: u64, grid_index: usize) -> Result<Vec<(f64, f64)>> {
    let domain = g.domain();
    let pair = |h: &crate::gff::GaussianFieldSample, var: &[f64]| -> Result<(f64, f64)> {
        let z = lqg_proxy_measure(h, CRITICAL_ALPHA, var)?.total_mass();
        Ok((z.ln(), h.average()))
    };
    let ids: Vec<u64> = (0..OVERLAY_FIELDS).map(|j| replica_id(grid_index, j)).collect();
    if let Ok(sampler) = SquareSpectralSampler::new(domain, 1.0) {
        let var = sampler.variances();
        return par_replicas(ids.len() as u64, |j| pair(&sampler.sample(seed, ids[j as usize]), &var))
            .into_iter()
            .collect();
    }
    if g.len() > DENSE_VERTEX_LIMIT {
        return Err(crate::error::Error::TooLarge {
            vertices: g.len(),
            limit: DENSE_VERTEX_LIMIT,
        });
    }
    let factor = covariance_factor(&green_matrix(g, 1.0)?)?;
    let var = factor.variances().to_vec();
    par_replicas(ids.len() as u64, |j| {
        pair(&sample_dgff_on(&factor, Stream::Field, seed, ids[j as usize]), &var)
    })
    .into_iter()
    .collect()
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Least-squares fit of `ln C` against the empirical CDF of `samples`.
fn fit_overlay(samples: &[f64], pairs: Vec<(f64, f64)>) -> Result<OverlayFit> {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let sse = |ln_c: f64| {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (mixture_cdf(x, ln_c, &pairs) - (i as f64 + 0.5) / m).powi(2))
            .sum::<f64>()
    };
    let mut shifts: Vec<f64> = pairs
        .iter()
        .filter(|p| p.0.is_finite())
        .map(|&(lz, hb)| lz + CRITICAL_ALPHA * hb)
        .collect();
    shifts.sort_by(f64::total_cmp);
    let median_shift = shifts.get(shifts.len() / 2).copied().unwrap_or(0.0);
    let median_x = xs[xs.len() / 2];
    let c0 = 2.0 * std::f64::consts::PI * median_x - median_shift + 2f64.ln().ln();
    let ln_c = golden_min(sse, c0 - 30.0, c0 + 30.0);
    let ks = ks_statistic(samples, |s| mixture_cdf(s, ln_c, &pairs))?;
    Ok(OverlayFit {
        label: "FIT".into(),
        ln_c_star: ln_c,
        sse: sse(ln_c),
        ks_statistic: ks.statistic,
        fields: pairs.len(),
        pairs,
    })
}

/// Cover-time fluctuations `(T rate / |D| - t_N) / log N` with
/// `sqrt(t_N)` the cover centering at `N = floor(e^n)`, the last vertex, and
/// shape diagnostics.
pub fn run_cover_time_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let big_n = floor_exp(n) as f64;
        let t_n = eval_centering(big_n, Centering::IntroCover)?.powi(2);
        let size = g.len() as f64;
        let bulk: HashSet<Point> = bulk_vertices(g.domain()).into_iter().collect();
        let walk = WalkConfig::new(&g, rate, cfg.seed, 0)?;
        let runs = par_replicas(cfg.replicas, |r| run_to_cover(&walk.with_replica(replica_id(gi, r))));
        let (x0, x1, y0, y1) = bounding_box(g.domain().vertices());
        let mut fl = Vec::with_capacity(runs.len());
        let (mut px, mut py) = (Vec::new(), Vec::new());
        let mut in_bulk = 0usize;
        for (r, run) in runs.into_iter().enumerate() {
            let run = run?;
            let f = (run.real_time * rate / size - t_n) / big_n.ln();
            let last = run.last_vertex;
            let pos = [last.x as f64 / big_n, last.y as f64 / big_n];
            let b = bulk.contains(&last);
            in_bulk += b as usize;
            fl.push(f);
            px.push(last.x as f64);
            py.push(last.y as f64);
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, r as u64),
                params: json!({ "n": n, "side": big_n, "rate": rate, "vertices": g.len() }),
                observables: json!({
                    "cover_time": run.real_time,
                    "boundary_time": run.boundary_time,
                    "fluctuation": f,
                    "last_vertex": last,
                    "last_position": pos,
                    "last_in_bulk": b,
                }),
            });
        }
        let mut sec = serde_json::Map::new();
        sec.insert("n".into(), json!(n));
        sec.insert("side".into(), json!(big_n));
        sec.insert("centering".into(), json!(t_n));
        sec.insert("fluctuation".into(), describe(&fl));
        sec.insert("skewness".into(), json!(skewness(&fl)));
        sec.insert("bulk_fraction".into(), json!(in_bulk as f64 / fl.len() as f64));
        sec.insert("reference_scale".into(), json!(1.0 / (2.0 * std::f64::consts::PI)));
        match gumbel_fit(&fl) {
            Ok(fit) => {
                sec.insert("gumbel_fit".into(), json!(fit));
                if let Ok(ks) = ks_statistic(&fl, |x| gumbel_cdf(x, fit.location, fit.scale)) {
                    sec.insert("ks_gumbel".into(), json!(ks));
                }
            }
            Err(e) => {
                sec.insert("gumbel_fit".into(), error_value(&e));
            }
        }
        match gaussian_fit(&fl) {
            Ok(fit) => {
                sec.insert("gaussian_fit".into(), json!(fit));
                if let Ok(ks) = ks_statistic(&fl, |x| normal_cdf(x, fit.location, fit.scale)) {
                    sec.insert("ks_gaussian".into(), json!(ks));
                }
            }
            Err(e) => {
                sec.insert("gaussian_fit".into(), error_value(&e));
            }
        }
        sec.insert(
            "last_vertex_histogram".into(),
            json!({
                "x": histogram(&px, x0, x1 + 1.0, 10),
                "y": histogram(&py, y0, y1 + 1.0, 10),
                "joint": joint_histogram(&px, &py, (x0, x1 + 1.0), (y0, y1 + 1.0), 10),
            }),
        );
        if cfg.overlay {
            let fit = overlay_pairs(&g, cfg.seed, gi).and_then(|p| fit_overlay(&fl, p));
            sec.insert(
                "overlay".into(),
                match fit {
                    Ok(f) => json!(f),
                    Err(e) => error_value(&e),
                },
            );
        }
        out.summary.insert(section_key(n), Value::Object(sec));
    }
    Ok(out)
}

fn bounding_box(pts: &[Point]) -> (f64, f64, f64, f64) {
    let x0 = pts.iter().map(|p| p.x).min().unwrap_or(0) as f64;
    let x1 = pts.iter().map(|p| p.x).max().unwrap_or(0) as f64;
    let y0 = pts.iter().map(|p| p.y).min().unwrap_or(0) as f64;
    let y1 = pts.iter().map(|p| p.y).max().unwrap_or(0) as f64;
    (x0, x1, y0, y1)
}

fn joint_histogram(xs: &[f64], ys: &[f64], xr: (f64, f64), yr: (f64, f64), bins: usize) -> Vec<Vec<u64>> {
    let mut h = vec![vec![0u64; bins]; bins];
    let bin = |v: f64, (lo, hi): (f64, f64)| ((((v - lo) / (hi - lo)) * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    for (&x, &y) in xs.iter().zip(ys) {
        h[bin(x, xr)][bin(y, yr)] += 1;
    }
    h
}
