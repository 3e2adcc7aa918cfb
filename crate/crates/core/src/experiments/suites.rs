use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{describe, replica_id, section_key, wired_domain, ExperimentConfig, ReplicaRecord, ResultRecord};
use crate::coupling::{default_probes, ray_knight_draws, report_from_draws, second_moment_check, MIN_REPLICAS, SECOND_MOMENT_BOUND};
use crate::error::{Error, Result};
use crate::exact::{green_column, green_matrix, green_row_sums, two_stage_race_probability, DENSE_VERTEX_LIMIT};
use crate::gff::{
    covariance_factor, default_patch_radius, eval_centering, extremal_process, field_average_variance, level_set,
    sample_dgff_on, Centering, CovarianceFactor, GaussianFieldSample, SquareSpectralSampler,
};
use crate::lattice::{bulk_vertices, floor_exp, WiredGraph};
use crate::onedim::{is_repelled, ln_ballot_rate, linear_walk, recentered_count, repulsion_window, LinearStop, MonteCarloEstimate};
use crate::rng::{par_replicas, stream, Stream};
use crate::stats;

/// Default `(tau, p, q)` for the two-stage race check.
pub const RACE_DEFAULTS: (f64, f64, f64) = (40.0, 0.05, 0.3);
/// Replicas summarized per persisted race record.
pub const RACE_CHUNK: u64 = 10_000;

/// Green function at rate `cfg.rate`: diagonal and row sums per vertex,
/// symmetry and definiteness when the dense matrix is affordable.
pub fn run_green(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let sums = green_row_sums(&g, rate)?;
        let (diag, dense) = if g.len() <= DENSE_VERTEX_LIMIT {
            let m = green_matrix(&g, rate)?;
            let d = m.diagonal();
            (d, Some(json!({ "asymmetry": m.asymmetry(), "positive_definite": m.is_positive_definite() })))
        } else {
            let d = (0..g.len()).map(|i| green_column(&g, rate, i).map(|c| c[i])).collect::<Result<Vec<_>>>()?;
            (d, None)
        };
        for (i, (d, s)) in diag.iter().zip(&sums).enumerate() {
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, i as u64),
                params: json!({ "n": n, "rate": rate }),
                observables: json!({ "vertex": g.position(i), "diagonal": d, "row_sum": s }),
            });
        }
        let centre = g.domain().central_vertex();
        let ci = g.index_of(centre).expect("central vertex is interior");
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "rate": rate,
                "vertices": g.len(),
                "central_vertex": centre,
                "central_diagonal": diag[ci],
                "diagonal": describe(&diag),
                "field_average_variance": field_average_variance(&sums),
                "dense": dense,
            }),
        );
    }
    Ok(out)
}

enum Sampler {
    Dense(CovarianceFactor),
    Spectral(SquareSpectralSampler),
}

impl Sampler {
    fn new(g: &WiredGraph, rate: f64) -> Result<Self> {
        if let Ok(s) = SquareSpectralSampler::new(g.domain(), rate) {
            return Ok(Sampler::Spectral(s));
        }
        Ok(Sampler::Dense(covariance_factor(&green_matrix(g, rate)?)?))
    }

    fn sample(&self, seed: u64, replica: u64) -> GaussianFieldSample {
        match self {
            Sampler::Dense(f) => sample_dgff_on(f, Stream::Field, seed, replica),
            Sampler::Spectral(s) => s.sample(seed, replica),
        }
    }

    fn variances(&self) -> Vec<f64> {
        match self {
            Sampler::Dense(f) => f.variances().to_vec(),
            Sampler::Spectral(s) => s.variances(),
        }
    }
}

/// DGFF samples: average, extrema and the value at the central vertex.
pub fn run_gff_sample(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let sampler = Sampler::new(&g, rate)?;
        let var = sampler.variances();
        let centre = g.domain().central_vertex();
        let ci = g.index_of(centre).expect("central vertex is interior");
        let obs = par_replicas(cfg.replicas, |r| {
            let h = sampler.sample(cfg.seed, replica_id(gi, r));
            let v = h.values();
            let (imin, &min) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (h.average(), min, g.position(imin), max, v[ci])
        });
        let mut avg = Vec::new();
        let mut centre_vals = Vec::new();
        let mut mins = Vec::new();
        for (r, (a, min, at, max, c)) in obs.into_iter().enumerate() {
            avg.push(a);
            centre_vals.push(c);
            mins.push(min);
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, r as u64),
                params: json!({ "n": n, "rate": rate }),
                observables: json!({ "average": a, "min": min, "argmin": at, "max": max, "central": c }),
            });
        }
        let var_hbar = field_average_variance(&green_row_sums(&g, rate)?);
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "rate": rate,
                "vertices": g.len(),
                "average": describe(&avg),
                "average_variance": stats::variance(&avg),
                "average_variance_exact": var_hbar,
                "central": describe(&centre_vals),
                "central_variance": stats::variance(&centre_vals),
                "central_variance_exact": var[ci],
                "min": describe(&mins),
            }),
        );
    }
    Ok(out)
}

/// Min-extremal process at log-radius `log N / 2` with patch radius `log 4`,
/// centred by `m_N` (rate 1) or `sqrt(t_n^A)` (retuned rate). With `cfg.u`
/// set, also counts the bulk level set `{h^2 <= u}`.
pub fn run_extremes(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let rate = cfg.rate.value();
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let big_n = floor_exp(n) as f64;
        let centering = match cfg.rate {
            super::RateConvention::One => eval_centering(big_n, Centering::IntroMinimum)?,
            super::RateConvention::Retuned => eval_centering(n, Centering::RetunedMinimum)?,
        };
        let r = 0.5 * big_n.ln();
        let k = default_patch_radius();
        let bulk = bulk_vertices(g.domain());
        let sampler = Sampler::new(&g, rate)?;
        let obs = par_replicas(cfg.replicas, |rep| -> Result<Value> {
            let h = sampler.sample(cfg.seed, replica_id(gi, rep));
            let mut pts = extremal_process(&h, r, k, centering)?;
            pts.sort_by(|a, b| a.depth.total_cmp(&b.depth));
            let deepest: Vec<Value> = pts
                .iter()
                .take(5)
                .map(|p| json!({ "vertex": p.vertex, "position": p.position, "depth": p.depth }))
                .collect();
            let level = match cfg.u {
                Some(u) => Some(level_set(&h, u, &bulk)?.len()),
                None => None,
            };
            Ok(json!({ "points": pts.len(), "min_depth": pts[0].depth, "deepest": deepest, "level_set_size": level }))
        });
        let mut depths = Vec::new();
        let mut counts = Vec::new();
        for (rep, o) in obs.into_iter().enumerate() {
            let o = o?;
            depths.push(o["min_depth"].as_f64().expect("numeric"));
            counts.push(o["points"].as_f64().expect("numeric"));
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, rep as u64),
                params: json!({ "n": n, "rate": rate, "r": r, "patch_radius": k, "centering": centering }),
                observables: o,
            });
        }
        let gumbel = stats::gumbel_fit(&depths.iter().map(|d| -d).collect::<Vec<_>>());
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "centering": centering,
                "r": r,
                "min_depth": describe(&depths),
                "points": describe(&counts),
                "negated_min_gumbel_fit": match gumbel {
                    Ok(f) => json!(f),
                    Err(e) => super::error_value(&e),
                },
            }),
        );
    }
    Ok(out)
}

/// Ray-Knight law comparison (`t = cfg.t`, default 1) at the default probes
/// and the second-moment bound, on each domain of the grid.
pub fn run_isomorphism_suite(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    if cfg.replicas < MIN_REPLICAS {
        return Err(Error::TooFewSamples {
            got: cfg.replicas as usize,
            need: MIN_REPLICAS as usize,
        });
    }
    let rate = cfg.rate.value();
    let t = cfg.t.unwrap_or(1.0);
    let mut out = ResultRecord::new(cfg);
    for (gi, &n) in cfg.n.iter().enumerate() {
        let g = wired_domain(&cfg.domain, n)?;
        let factor = covariance_factor(&green_matrix(&g, rate)?)?;
        let probes = default_probes(&g);
        let seed = cfg.seed.wrapping_add(gi as u64);
        let draws = ray_knight_draws(&g, &factor, rate, t, &probes, cfg.replicas, seed)?;
        let mut rep = report_from_draws(&draws, &probes, t)?;
        rep.rate = rate;
        rep.seed = seed;
        rep.vertex_count = g.len();
        rep.graph_fingerprint = g.fingerprint();
        for (r, d) in draws.iter().enumerate() {
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(gi, r as u64),
                params: json!({ "n": n, "rate": rate, "t": t, "probes": probes }),
                observables: json!(d),
            });
        }
        let second = second_moment_check(&factor, cfg.replicas, seed)?;
        let failing = rep.failing_probes();
        let means_ok = rep.probes.iter().all(|p| p.mean_residual.abs() <= 3.0 && p.local_time_residual.abs() <= 3.0);
        out.summary.insert(
            section_key(n),
            json!({
                "n": n,
                "report": rep,
                "failing_probes": failing,
                "mean_identity_within_3se": means_ok,
                "second_moment": second,
                "second_moment_bounded": second.ratio <= SECOND_MOMENT_BOUND,
                "passed": failing.len() <= 1 && means_ok && second.ratio <= SECOND_MOMENT_BOUND,
            }),
        );
    }
    Ok(out)
}

/// One row of the ballot table: the simulated frequency of
/// `{T(1) = m} \ T^{eta,[2,T-1]}` against `r_{k,T}(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallotRow {
    pub k: f64,
    pub top: usize,
    pub excursions: u64,
    pub u_hat: f64,
    pub v_hat: f64,
    pub count: u64,
    pub frequency: MonteCarloEstimate,
    pub ln_rate: f64,
    /// `frequency / r_{k,T}`.
    pub ratio: f64,
}

pub const BALLOT_K: [f64; 3] = [2.0, 3.0, 4.0];
pub const BALLOT_GAMMA: f64 = 0.25;
pub const BALLOT_ETA: f64 = 0.1;
const BALLOT_ROWS_PER_K: usize = 3;

/// For each `k`, with `T = 2k` and `v` at the centre of the window at `T`:
/// simulates `replicas` walks of `round(v^2 / k^gamma)` excursions, and
/// tabulates the most frequent repelled values of `T(1)` with positive
/// recentred `u`.
pub fn ballot_diagnostic(ks: &[f64], gamma: f64, eta: f64, replicas: u64, seed: u64) -> Result<Vec<BallotRow>> {
    Ok(ballot_runs(ks, gamma, eta, replicas, seed)?.0)
}

/// Per-walk outcome behind a ballot row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallotSample {
    pub k: f64,
    pub top: usize,
    pub excursions: u64,
    pub downcrossings_at_1: u64,
    pub repelled: bool,
    pub u_hat: f64,
}

fn ballot_runs(
    ks: &[f64],
    gamma: f64,
    eta: f64,
    replicas: u64,
    seed: u64,
) -> Result<(Vec<BallotRow>, Vec<BallotSample>)> {
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (gi, &k) in ks.iter().enumerate() {
        let top = (2.0 * k).round() as usize;
        let kg = k.powf(gamma);
        let (lo, hi) = repulsion_window(k, gamma, eta, top);
        let v_hat_target = 0.5 * (lo + hi);
        let v = v_hat_target + std::f64::consts::SQRT_2 * (k + (top as f64 - 1.0) * kg);
        let excursions = ((v * v / kg).round() as u64).max(1);
        let v_hat = recentered_count(k, gamma, top, excursions);
        let runs = par_replicas(replicas, |r| linear_walk(top, LinearStop::Excursions(excursions), seed, replica_id(gi, r)));
        let mut tally = std::collections::BTreeMap::<u64, u64>::new();
        for run in runs {
            let run = run?;
            let m = run.downcrossings[1];
            let u_hat = recentered_count(k, gamma, 1, m);
            let repelled = top < 3 || is_repelled(&run.downcrossings, k, gamma, eta, 2..=top - 1);
            if repelled && u_hat > 0.0 {
                *tally.entry(m).or_default() += 1;
            }
            samples.push(BallotSample {
                k,
                top,
                excursions,
                downcrossings_at_1: m,
                repelled,
                u_hat,
            });
        }
        let mut modal: Vec<(u64, u64)> = tally.into_iter().collect();
        modal.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(m, c) in modal.iter().take(BALLOT_ROWS_PER_K) {
            let u_hat = recentered_count(k, gamma, 1, m);
            let ln_rate = ln_ballot_rate(k, gamma, top as f64, u_hat, v_hat);
            let freq = MonteCarloEstimate::from_hits(c, replicas);
            rows.push(BallotRow {
                k,
                top,
                excursions,
                u_hat,
                v_hat,
                count: c,
                ratio: (freq.estimate.ln() - ln_rate).exp(),
                frequency: freq,
                ln_rate,
            });
        }
    }
    Ok((rows, samples))
}

fn trend(values: &[f64]) -> &'static str {
    if values.len() < 2 {
        return "insufficient data";
    }
    if values.windows(2).all(|w| w[1] >= w[0]) {
        "increasing"
    } else if values.windows(2).all(|w| w[1] <= w[0]) {
        "decreasing"
    } else {
        "non-monotone"
    }
}

/// Ballot trend table; a diagnostic with no pass/fail verdict.
pub fn run_ballot_diagnostic(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let mut out = ResultRecord::new(cfg);
    let (rows, samples) = ballot_runs(&BALLOT_K, BALLOT_GAMMA, BALLOT_ETA, cfg.replicas, cfg.seed)?;
    for (i, smp) in samples.iter().enumerate() {
        let gi = i as u64 / cfg.replicas;
        out.records.push(ReplicaRecord {
            experiment: cfg.experiment,
            seed: cfg.seed,
            replica: replica_id(gi as usize, i as u64 % cfg.replicas),
            params: json!({ "k": smp.k, "gamma": BALLOT_GAMMA, "eta": BALLOT_ETA, "top": smp.top, "excursions": smp.excursions }),
            observables: json!({ "downcrossings_at_1": smp.downcrossings_at_1, "repelled": smp.repelled, "u_hat": smp.u_hat }),
        });
    }
    let repelled_by_k: Vec<u64> = BALLOT_K
        .iter()
        .map(|&k| samples.iter().filter(|s| s.k == k && s.repelled && s.u_hat > 0.0).count() as u64)
        .collect();
    out.summary.insert("repelled_by_k".into(), json!(repelled_by_k));
    let per_k: Vec<f64> = BALLOT_K
        .iter()
        .filter_map(|&k| {
            let rs: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.ratio).collect();
            (!rs.is_empty()).then(|| stats::mean(&rs))
        })
        .collect();
    out.summary.insert("rows".into(), json!(rows));
    out.summary.insert("mean_ratio_by_k".into(), json!(per_k));
    out.summary.insert("trend".into(), json!(trend(&per_k)));
    out.summary.insert(
        "note".into(),
        json!("diagnostic only; ratios are expected to drift toward a constant as k grows"),
    );
    Ok(out)
}

fn race_hits(tau: f64, p: f64, q: f64, replicas: u64, seed: u64) -> Result<Vec<bool>> {
    two_stage_race_probability(tau, p, q)?;
    let poisson = if tau > 0.0 {
        Some(Poisson::new(tau).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    Ok(par_replicas(replicas, |r| {
        let mut rng = stream(seed, Stream::Race, r);
        let trials = poisson.map_or(0, |d| d.sample(&mut rng) as u64);
        let (mut any_fail, mut any_double) = (false, false);
        for _ in 0..trials {
            if rng.random::<f64>() < p {
                if rng.random::<f64>() < q {
                    any_fail = true;
                } else {
                    any_double = true;
                }
            }
        }
        any_fail && !any_double
    }))
}

/// Direct simulation of the two-stage Poisson race: `Poisson(tau)` trials,
/// each passing the first stage with probability `p` and then failing the
/// second with probability `q`. Estimates the probability that some trial
/// fails at the second stage and none passes both.
pub fn simulate_two_stage_race(tau: f64, p: f64, q: f64, replicas: u64, seed: u64) -> Result<MonteCarloEstimate> {
    let hits = race_hits(tau, p, q, replicas, seed)?;
    Ok(MonteCarloEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, replicas))
}

pub(crate) fn race_summary(tau: f64, p: f64, q: f64, replicas: u64, seed: u64) -> Result<Value> {
    race_summary_from(tau, p, q, &race_hits(tau, p, q, replicas, seed)?)
}

fn race_summary_from(tau: f64, p: f64, q: f64, hits: &[bool]) -> Result<Value> {
    let exact = two_stage_race_probability(tau, p, q)?;
    let est = MonteCarloEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, hits.len() as u64);
    let z = if est.std_error > 0.0 { (est.estimate - exact) / est.std_error } else { f64::NAN };
    Ok(json!({
        "tau": tau,
        "p": p,
        "q": q,
        "exact": exact,
        "simulated": est,
        "z": z,
        "within_3se": (est.estimate - exact).abs() <= 3.0 * est.std_error,
    }))
}

/// Race formula against simulation; `cfg.t` overrides `tau`.
pub fn run_race_check(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let (tau0, p, q) = RACE_DEFAULTS;
    let tau = cfg.t.unwrap_or(tau0);
    let mut out = ResultRecord::new(cfg);
    let hits = race_hits(tau, p, q, cfg.replicas, cfg.seed)?;
    for (c, chunk) in hits.chunks(RACE_CHUNK as usize).enumerate() {
        out.records.push(ReplicaRecord {
            experiment: cfg.experiment,
            seed: cfg.seed,
            replica: c as u64 * RACE_CHUNK,
            params: json!({ "tau": tau, "p": p, "q": q, "first_replica": c as u64 * RACE_CHUNK }),
            observables: json!({ "replicas": chunk.len(), "hits": chunk.iter().filter(|&&h| h).count() }),
        });
    }
    out.summary.insert("race".into(), race_summary_from(tau, p, q, &hits)?);
    Ok(out)
}
