use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{replica_id, ExperimentConfig, ReplicaRecord, ResultRecord};
use crate::error::Result;
use crate::onedim::{
    compound_tail_bound_on, conditional_law, linear_walk, local_time_marginal, CompoundSpec, Conditioning, LinearStop,
    Tail,
};
use crate::rng::par_replicas;
use crate::stats::{chi_square_pvalue, ks_statistic_mixed, ChiSquareResult, KsResult};

/// `(T, i, j)` triples for the conditional-law checks.
pub const IDLAW_GRID: [(usize, usize, usize); 3] = [(8, 1, 3), (16, 2, 5), (16, 4, 4)];
/// Excursions from `T` per simulated walk.
pub const IDLAW_EXCURSIONS: u64 = 10;
pub const IDLAW_SIGNIFICANCE: f64 = 0.01;
pub const KS_TOLERANCE: f64 = 0.02;
/// `(T, i, t)` for the local-time marginal check.
pub const MARGINAL_POINT: (usize, usize, f64) = (16, 4, 3.0);
pub const TAIL_TOLERANCE: f64 = 1e-12;

const LOWER_FRACTIONS: [f64; 7] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
const UPPER_FRACTIONS: [f64; 7] = [1.0, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0];
const CHUNK: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdLawCheck {
    pub top: usize,
    pub i: usize,
    pub j: usize,
    pub excursions: u64,
    pub samples: u64,
    /// `T(T-j)` given `T(T-i)`, against the Bigeo mixture.
    pub downcrossings: ChiSquareResult,
    /// `L(T-i)` after the excursions, against Biexp.
    pub local_time: KsResult,
    /// `T(T-j)` given `L(T-i)`, against the Poigeo mixture.
    pub given_local_time: ChiSquareResult,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub top: usize,
    pub i: usize,
    pub t: f64,
    pub ks: KsResult,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailViolation {
    pub spec: CompoundSpec,
    pub theta: f64,
    pub side: Tail,
    pub tail: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSweep {
    pub points: usize,
    pub checks: usize,
    /// Largest `tail - bound` seen; negative when every bound is slack.
    pub max_excess: f64,
    pub violations: Vec<TailViolation>,
}

/// Sum over samples of the exact conditional pmfs, evaluated in fixed chunks
/// so the result does not depend on the thread count.
fn mixture_expected(specs: &[CompoundSpec]) -> Vec<f64> {
    let chunks = (specs.len() as u64).div_ceil(CHUNK);
    let partial = par_replicas(chunks, |c| {
        let lo = (c * CHUNK) as usize;
        let hi = (lo + CHUNK as usize).min(specs.len());
        let mut acc: Vec<f64> = Vec::new();
        for s in &specs[lo..hi] {
            let t = s.pmf_table();
            if t.len() > acc.len() {
                acc.resize(t.len(), 0.0);
            }
            for (a, p) in acc.iter_mut().zip(&t) {
                *a += p;
            }
        }
        acc
    });
    let mut total: Vec<f64> = Vec::new();
    for p in partial {
        if p.len() > total.len() {
            total.resize(p.len(), 0.0);
        }
        for (a, v) in total.iter_mut().zip(&p) {
            *a += v;
        }
    }
    total
}

fn chi_square_against(observed: &[u64], expected: Vec<f64>) -> Result<ChiSquareResult> {
    let len = expected.len().max(observed.iter().map(|&v| v as usize + 1).max().unwrap_or(0));
    let mut obs = vec![0.0; len];
    for &v in observed {
        obs[v as usize] += 1.0;
    }
    let mut exp = expected;
    exp.resize(len, 0.0);
    chi_square_pvalue(&obs, &exp)
}

struct IdLawSamples {
    m: Vec<u64>,
    tj: Vec<u64>,
    ell: Vec<f64>,
}

fn simulate_idlaw(top: usize, i: usize, j: usize, samples: u64, seed: u64, grid_index: usize) -> Result<IdLawSamples> {
    let runs = par_replicas(samples, |r| {
        linear_walk(top, LinearStop::Excursions(IDLAW_EXCURSIONS), seed, replica_id(grid_index, r))
    });
    let mut out = IdLawSamples {
        m: Vec::with_capacity(runs.len()),
        tj: Vec::with_capacity(runs.len()),
        ell: Vec::with_capacity(runs.len()),
    };
    for run in runs {
        let run = run?;
        out.m.push(run.downcrossings[top - i]);
        out.tj.push(run.downcrossings[top - j]);
        out.ell.push(run.local_times[top - i]);
    }
    Ok(out)
}

fn check_samples(top: usize, i: usize, j: usize, s: &IdLawSamples) -> Result<IdLawCheck> {
    let by_count: Vec<CompoundSpec> = s
        .m
        .iter()
        .map(|&m| conditional_law(top, i, j, Conditioning::Downcrossings { m }))
        .collect::<Result<_>>()?;
    let by_time: Vec<CompoundSpec> = s
        .ell
        .iter()
        .map(|&ell| conditional_law(top, i, j, Conditioning::LocalTime { ell }))
        .collect::<Result<_>>()?;
    let downcrossings = chi_square_against(&s.tj, mixture_expected(&by_count))?;
    let given_local_time = chi_square_against(&s.tj, mixture_expected(&by_time))?;
    let law = conditional_law(top, i, j, Conditioning::Excursions { v: IDLAW_EXCURSIONS })?;
    let local_time = ks_statistic_mixed(&s.ell, |x| law.cdf(x), |x| law.cdf_left(x))?;
    let passed = downcrossings.p_value > IDLAW_SIGNIFICANCE
        && given_local_time.p_value > IDLAW_SIGNIFICANCE
        && local_time.statistic < KS_TOLERANCE;
    Ok(IdLawCheck {
        top,
        i,
        j,
        excursions: IDLAW_EXCURSIONS,
        samples: s.m.len() as u64,
        downcrossings,
        local_time,
        given_local_time,
        passed,
    })
}

/// Simulates `samples` walks with [`IDLAW_EXCURSIONS`] excursions and tests
/// the three conditional laws at `(T, i, j)`.
pub fn idlaw_check(top: usize, i: usize, j: usize, samples: u64, seed: u64) -> Result<IdLawCheck> {
    let s = simulate_idlaw(top, i, j, samples, seed, 0)?;
    check_samples(top, i, j, &s)
}

/// KS of the simulated local time at `T - i` at `T`-time `t` against the
/// compound-Poisson marginal.
pub fn local_time_marginal_check(top: usize, i: usize, t: f64, samples: u64, seed: u64) -> Result<MarginalCheck> {
    let law = local_time_marginal(top, i, t)?;
    let runs = par_replicas(samples, |r| linear_walk(top, LinearStop::Time(t), seed, r));
    let xs: Vec<f64> = runs
        .into_iter()
        .map(|r| r.map(|r| r.local_times[top - i]))
        .collect::<Result<_>>()?;
    let ks = ks_statistic_mixed(&xs, |x| law.cdf(x), |x| law.cdf_left(x))?;
    Ok(MarginalCheck {
        top,
        i,
        t,
        passed: ks.statistic < KS_TOLERANCE,
        ks,
    })
}

/// The 50-point parameter grid for the tail bounds.
pub fn tail_grid() -> Vec<CompoundSpec> {
    let mut out = Vec::with_capacity(50);
    for n in [5u64, 20, 100] {
        for p in [0.3, 0.8] {
            for q in [0.2, 0.5, 0.9] {
                out.push(CompoundSpec::Bigeo { n, p, q });
            }
        }
    }
    for n in [5u64, 20] {
        for p in [0.3, 0.8] {
            for lambda in [0.25, 0.5, 1.0, 2.0] {
                out.push(CompoundSpec::Biexp { n, p, lambda });
            }
        }
    }
    for mu in [0.5, 2.0, 10.0, 40.0] {
        for q in [0.2, 0.4, 0.7, 1.0] {
            out.push(CompoundSpec::Poigeo { mu, q });
        }
    }
    out
}

/// Exact tails against the bounds at fixed fractions of the pivot on both
/// sides, for every point of [`tail_grid`].
pub fn tail_bound_sweep() -> Result<TailSweep> {
    let grid = tail_grid();
    let mut checks = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for spec in &grid {
        let pivot = compound_tail_bound_on(spec, 0.0, Tail::Lower)?.pivot;
        let sides = LOWER_FRACTIONS
            .iter()
            .map(|f| (Tail::Lower, f))
            .chain(UPPER_FRACTIONS.iter().map(|f| (Tail::Upper, f)));
        for (side, &f) in sides {
            let theta = f * pivot;
            let b = compound_tail_bound_on(spec, theta, side)?;
            let tail = spec.tail(theta, side);
            checks += 1;
            max_excess = max_excess.max(tail - b.bound);
            if tail > b.bound + TAIL_TOLERANCE {
                violations.push(TailViolation {
                    spec: *spec,
                    theta,
                    side,
                    tail,
                    bound: b.bound,
                });
            }
        }
    }
    Ok(TailSweep {
        points: grid.len(),
        checks,
        max_excess,
        violations,
    })
}

/// Conditional laws on [`IDLAW_GRID`], the local-time marginal, and the tail
/// sweep. `cfg.replicas` walks per check.
pub fn run_onedim_laws_suite(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let mut out = ResultRecord::new(cfg);
    let mut checks = Vec::new();
    for (g, &(top, i, j)) in IDLAW_GRID.iter().enumerate() {
        let s = simulate_idlaw(top, i, j, cfg.replicas, cfg.seed, g)?;
        for r in 0..s.m.len() {
            out.records.push(ReplicaRecord {
                experiment: cfg.experiment,
                seed: cfg.seed,
                replica: replica_id(g, r as u64),
                params: json!({ "check": "idlaw", "top": top, "i": i, "j": j, "excursions": IDLAW_EXCURSIONS }),
                observables: json!({ "count_i": s.m[r], "count_j": s.tj[r], "local_time_i": s.ell[r] }),
            });
        }
        checks.push(check_samples(top, i, j, &s)?);
    }
    let (top, i, t) = MARGINAL_POINT;
    let g = IDLAW_GRID.len();
    let runs = par_replicas(cfg.replicas, |r| linear_walk(top, LinearStop::Time(t), cfg.seed, replica_id(g, r)));
    let mut xs = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let x = run?.local_times[top - i];
        xs.push(x);
        out.records.push(ReplicaRecord {
            experiment: cfg.experiment,
            seed: cfg.seed,
            replica: replica_id(g, r as u64),
            params: json!({ "check": "marginal", "top": top, "i": i, "t": t }),
            observables: json!({ "local_time_i": x }),
        });
    }
    let law = local_time_marginal(top, i, t)?;
    let ks = ks_statistic_mixed(&xs, |x| law.cdf(x), |x| law.cdf_left(x))?;
    let marginal = MarginalCheck {
        top,
        i,
        t,
        passed: ks.statistic < KS_TOLERANCE,
        ks,
    };
    let sweep = tail_bound_sweep()?;
    let passed = checks.iter().all(|c| c.passed) && marginal.passed && sweep.violations.is_empty();
    out.summary.insert("idlaw".into(), json!(checks));
    out.summary.insert("marginal".into(), json!(marginal));
    out.summary.insert("tail_bounds".into(), json!(sweep));
    out.summary.insert("passed".into(), json!(passed));
    Ok(out)
}
