use serde::{Deserialize, Serialize};
use serde_json::json;

use super::suites::{race_summary, RACE_DEFAULTS};
use super::{describe, histogram, replica_id, section_key, wired_domain, ExperimentConfig, ReplicaRecord, ResultRecord};
use crate::error::{Error, Result};
use crate::exact::{green_row_sums, unvisited_probability};
use crate::gff::{eval_centering, field_average_variance, Centering};
use crate::lattice::{ball, bulk_vertices, floor_exp, is_clustered, minimal_cover, Point, WiredGraph};
use crate::rng::par_replicas;
use crate::stats;
use crate::walk::{clustering_scale, phase_observables_at, WalkConfig, Walker};

/// Default offsets `s` at which `P(T_A <= t_n^B + s n)` is estimated.
pub const S_GRID: [f64; 6] = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

/// Unvisited-bulk statistics at `∂`-time `t_n^A` (or `cfg.t`).
pub fn run_phase_a_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let t = match cfg.t {
            Some(t) => t,
            None => eval_centering(n, Centering::RetunedMinimum)?.powi(2),
        };
        let bulk = bulk_vertices(g.domain());
        let walk = WalkConfig::new(&g, rate, cfg.seed, 0)?;
        let runs = par_replicas(cfg.replicas, |r| {
            phase_observables_at(&walk.with_replica(replica_id(gi, r)), n, t, &bulk)
        });
        let (mut scaled, mut counts, mut that) = (Vec::new(), Vec::new(), Vec::new());
        let (mut in_range, mut clustered) = (0usize, 0usize);
        for (r, rec) in runs.into_iter().enumerate() {
            let rec = rec?;
            in_range += (rec.unvisited_scaled > 0.01 && rec.unvisited_scaled < 100.0) as usize;
            clustered += rec.clustered as usize;
            scaled.push(rec.unvisited_scaled);
            counts.push(rec.cluster_count_scaled);
            that.push(rec.time_fluctuation);
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, r as u64),
                params: json!({ "n": n, "t": t, "rate": rate, "vertices": g.len(), "bulk": bulk.len() }),
                observables: json!({
                    "unvisited_bulk": rec.unvisited_bulk,
                    "unvisited_scaled": rec.unvisited_scaled,
                    "cluster_count": rec.cluster_count,
                    "cluster_count_scaled": rec.cluster_count_scaled,
                    "cover_minimal": rec.cover_minimal,
                    "clustered": rec.clustered,
                    "time_fluctuation": rec.time_fluctuation,
                    "real_time": rec.real_time,
                    "unvisited": rec.unvisited,
                }),
            });
        }
        let m = scaled.len() as f64;
        let size = g.len() as f64;
        let var_hbar = field_average_variance(&green_row_sums(&g, rate)?);
        let max_scaled = scaled.iter().copied().fold(1.0, f64::max);
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "t": t,
                "cluster_scale": clustering_scale(n),
                "bulk_vertices": bulk.len(),
                "unvisited_scaled": describe(&scaled),
                "unvisited_in_range_fraction": in_range as f64 / m,
                "clustered_fraction": clustered as f64 / m,
                "cluster_count_scaled": describe(&counts),
                "time_fluctuation": describe(&that),
                "time_fluctuation_mean_predicted": t.sqrt() / (2.0 * size),
                "time_fluctuation_variance": stats::variance(&that),
                "field_average_variance": var_hbar,
                "corr_time_unvisited": correlation(&that, &scaled),
                "corr_time_clusters": correlation(&that, &counts),
                "unvisited_histogram": histogram(&scaled, 0.0, max_scaled, 20),
                "time_fluctuation_histogram": histogram(
                    &that,
                    that.iter().copied().fold(f64::INFINITY, f64::min),
                    that.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    20
                ),
            }),
        );
    }
    Ok(out)
}

pub(crate) fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        f64::NAN
    } else {
        cov / (va * vb).sqrt()
    }
}

/// `balls` discrete balls of radius `radius` laid out along the horizontal
/// line through the bulk's centre, at mutual distance `e^{n - r_n}` or more.
/// `balls = 0` gives the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSet {
    pub balls: usize,
    pub radius: i64,
}

impl Default for PlantedSet {
    fn default() -> Self {
        PlantedSet { balls: 1, radius: 0 }
    }
}

impl PlantedSet {
    /// The planted points, checked to lie in the bulk and to be
    /// `(r_n, n - r_n)`-clustered.
    pub fn realize(&self, g: &WiredGraph, n: f64) -> Result<Vec<Point>> {
        if self.radius < 0 {
            return Err(Error::InvalidParameter(format!("radius must be >= 0, got {}", self.radius)));
        }
        if self.balls == 0 {
            return Ok(Vec::new());
        }
        let bulk = bulk_vertices(g.domain());
        if bulk.is_empty() {
            return Err(Error::Domain(format!("no bulk vertices at n = {n}")));
        }
        let r = clustering_scale(n);
        let cy = (bulk.iter().map(|p| p.y).sum::<i64>() as f64 / bulk.len() as f64).round() as i64;
        let cx = (bulk.iter().map(|p| p.x).sum::<i64>() as f64 / bulk.len() as f64).round() as i64;
        let spacing = (n - r).exp().ceil() as i64 + 2 * self.radius + 1;
        let k = self.balls as i64;
        let x_first = cx - spacing * (k - 1) / 2;
        let bulk_set: std::collections::HashSet<Point> = bulk.iter().copied().collect();
        let mut pts = Vec::new();
        for b in 0..k {
            let c = Point::new(x_first + b * spacing, cy);
            for p in ball(c, self.radius) {
                if !bulk_set.contains(&p) {
                    return Err(Error::NotClustered(format!("planted point {p} lies outside the bulk")));
                }
                pts.push(p);
            }
        }
        if !is_clustered(&pts, r, n - r) {
            return Err(Error::NotClustered(format!(
                "planted set is not ({r:.3}, {:.3})-clustered",
                n - r
            )));
        }
        Ok(pts)
    }
}

/// Cover `∂`-time of `targets`, or `None` when it exceeds `horizon`.
fn cover_boundary_time(walk: &WalkConfig, targets: &[usize], horizon: f64) -> Result<(Option<f64>, Option<Point>)> {
    if targets.is_empty() {
        return Ok((Some(0.0), None));
    }
    let g = walk.graph;
    let mut pending = vec![false; g.len()];
    for &i in targets {
        pending[i] = true;
    }
    let mut remaining = targets.len();
    let mut w = Walker::new(walk);
    loop {
        let ex = w.run_excursion()?;
        if w.boundary_time() > horizon {
            return Ok((None, None));
        }
        for p in ex.visited {
            let i = g.index_of(p).expect("walk stays in the domain");
            if pending[i] {
                pending[i] = false;
                remaining -= 1;
                if remaining == 0 {
                    return Ok((Some(w.boundary_time()), Some(p)));
                }
            }
        }
    }
}

/// Empirical `P(T_A <= t_n^B + s n)` over [`S_GRID`] for a planted clustered
/// set `A`, against `exp(-e^{-(s - log(|Xi| / sqrt n))})`, the tail bound
/// `2 e^{-s} |A| / sqrt n`, and for `|A| = 1` the exact hitting law.
pub fn run_phase_b_race_experiment(cfg: &ExperimentConfig, planted: &PlantedSet) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let a = planted.realize(&g, n)?;
        let r = clustering_scale(n);
        let clusters = if a.is_empty() { 0 } else { minimal_cover(&a, r)?.centers.len() };
        let t_b = match cfg.t {
            Some(t) => t,
            None => eval_centering(n, Centering::PhaseB)?,
        };
        let horizon = t_b + S_GRID[S_GRID.len() - 1] * n;
        let targets: Vec<usize> = a.iter().map(|&p| g.index_of(p).expect("planted in domain")).collect();
        let walk = WalkConfig::new(&g, rate, cfg.seed, 0)?;
        let runs = par_replicas(cfg.replicas, |rep| {
            cover_boundary_time(&walk.with_replica(replica_id(gi, rep)), &targets, horizon)
        });
        let mut times = Vec::with_capacity(runs.len());
        for (rep, run) in runs.into_iter().enumerate() {
            let (t, last) = run?;
            times.push(t);
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, rep as u64),
                params: json!({ "n": n, "t_b": t_b, "horizon": horizon, "rate": rate, "set_size": a.len() }),
                observables: json!({ "cover_boundary_time": t, "last_vertex": last, "censored": t.is_none() }),
            });
        }
        let m = times.len() as f64;
        let size_a = a.len() as f64;
        let exact_single = if a.len() == 1 { Some(a[0]) } else { None };
        let mut rows = Vec::new();
        let (mut gap, mut exact_gap) = (0.0f64, 0.0f64);
        let mut tail_ok = true;
        for &s in &S_GRID {
            let thr = t_b + s * n;
            let hits = times.iter().filter(|t| t.is_some_and(|t| t <= thr)).count() as f64;
            let f = hits / m;
            let se = (f * (1.0 - f) / m).sqrt();
            let predicted = if clusters == 0 {
                1.0
            } else {
                (-(clusters as f64 / n.sqrt()) * (-s).exp()).exp()
            };
            let bound = 2.0 * (-s).exp() * size_a / n.sqrt();
            let tail_holds = 1.0 - f <= bound;
            tail_ok &= tail_holds;
            gap = gap.max((f - predicted).abs());
            let exact = match exact_single {
                Some(x) if thr > 0.0 => Some(1.0 - unvisited_probability(&g, rate, x, thr)?.probability),
                Some(_) => Some(0.0),
                None => None,
            };
            if let Some(e) = exact {
                exact_gap = exact_gap.max((f - e).abs());
            }
            rows.push(json!({
                "s": s,
                "threshold": thr,
                "empirical": f,
                "std_error": se,
                "predicted": predicted,
                "exact": exact,
                "tail_bound": bound,
                "tail_bound_holds": tail_holds,
            }));
        }
        let (tau, p, q) = RACE_DEFAULTS;
        let race = race_summary(tau, p, q, cfg.replicas, cfg.seed)?;
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "t_b": t_b,
                "side": floor_exp(n),
                "set_size": a.len(),
                "planted": planted,
                "cluster_scale": r,
                "clusters": clusters,
                "censored_fraction": times.iter().filter(|t| t.is_none()).count() as f64 / m,
                "grid": rows,
                "sup_gap_predicted": gap,
                "sup_gap_exact": exact_single.map(|_| exact_gap),
                "tail_bound_holds": tail_ok,
                "race": race,
            }),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{discretize_domain, wire_boundary, DomainShape};

    #[test]
    fn planted_sets() {
        let g = wire_boundary(discretize_domain(&DomainShape::UnitSquare, 5.0).unwrap());
        let one = PlantedSet::default().realize(&g, 5.0).unwrap();
        assert_eq!(one.len(), 1);
        let two = PlantedSet { balls: 2, radius: 2 }.realize(&g, 5.0).unwrap();
        assert_eq!(two.len(), 2 * ball(Point::new(0, 0), 2).len());
        assert_eq!(minimal_cover(&two, clustering_scale(5.0)).unwrap().centers.len(), 2);
        assert!(PlantedSet { balls: 0, radius: 0 }.realize(&g, 5.0).unwrap().is_empty());
        assert!(matches!(
            PlantedSet { balls: 1, radius: 40 }.realize(&g, 5.0),
            Err(Error::NotClustered(_))
        ));
    }

    #[test]
    fn empty_target_is_covered_at_once() {
        let g = wire_boundary(crate::lattice::LatticeDomain::square(3).unwrap());
        let w = WalkConfig::new(&g, 1.0, 1, 0).unwrap();
        assert_eq!(cover_boundary_time(&w, &[], 10.0).unwrap().0, Some(0.0));
    }

    #[test]
    fn correlation_bounds() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((correlation(&a, &a) - 1.0).abs() < 1e-12);
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x).collect();
        assert!((correlation(&a, &b) + 1.0).abs() < 1e-12);
    }
}
