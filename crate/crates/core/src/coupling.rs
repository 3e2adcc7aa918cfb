//! Distributional checks of the generalized second Ray-Knight theorem on
//! wired domains: `L_t + h^2` and `(h' + sqrt t)^2` have the same law when
//! `h, h'` are fields with covariance `G/2` at the walk's rate, independent
//! of the walk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::{sample_dgff_on, CovarianceFactor};
use crate::lattice::{Point, WiredGraph};
use crate::rng::{par_replicas, Stream};
use crate::stats::{mean, std_error, two_sample_ks, KsResult};
use crate::walk::{run_to_boundary_time, WalkConfig};

pub const MIN_REPLICAS: u64 = 1000;
pub const PROBE_SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Uniform,
    Center,
    /// `(-1)^{x+y}`.
    Checkerboard,
}

impl Weights {
    pub const ALL: [Weights; 3] = [Weights::Uniform, Weights::Center, Weights::Checkerboard];

    pub fn vector(self, g: &WiredGraph) -> Vec<f64> {
        let center = g.domain().central_vertex();
        (0..g.len())
            .map(|i| {
                let p = g.position(i);
                match self {
                    Weights::Uniform => 1.0,
                    Weights::Center => (p == center) as u8 as f64,
                    Weights::Checkerboard => {
                        if (p.x + p.y).rem_euclid(2) == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub position: Point,
    pub ks: KsResult,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `(mean(A) - mean(B)) / SE`.
    pub mean_residual: f64,
    pub mean_local_time: f64,
    /// `(mean(L_t(x)) - t) / SE`.
    pub local_time_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub weights: Weights,
    pub ks: KsResult,
    pub mean_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub rate: f64,
    pub t: f64,
    pub replicas: u64,
    pub seed: u64,
    pub vertex_count: usize,
    pub graph_fingerprint: u64,
    pub probes: Vec<ProbeReport>,
    pub functionals: Vec<FunctionalReport>,
}

impl IsomorphismReport {
    /// Probes whose KS p-value falls below `PROBE_SIGNIFICANCE`.
    pub fn failing_probes(&self) -> Vec<Point> {
        self.probes
            .iter()
            .filter(|p| p.ks.p_value < PROBE_SIGNIFICANCE)
            .map(|p| p.position)
            .collect()
    }
}

/// One replica: probe values of `A` and `B`, the walk's local times at the
/// probes, and the three weighted sums of `A` and `B` over all vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayKnightDraw {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub local: Vec<f64>,
    pub functional_a: [f64; 3],
    pub functional_b: [f64; 3],
}

fn diff_residual(a: &[f64], b: &[f64]) -> f64 {
    let se = (std_error(a).powi(2) + std_error(b).powi(2)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (mean(a) - mean(b)) / se
    }
}

fn check_inputs(graph: &WiredGraph, factor: &CovarianceFactor, rate: f64, t: f64, probes: &[Point]) -> Result<Vec<usize>> {
    if factor.rate() != rate {
        return Err(Error::ConfigMismatch(format!(
            "field built at rate {} but walk runs at rate {rate}",
            factor.rate()
        )));
    }
    if factor.graph_fingerprint() != graph.fingerprint() {
        return Err(Error::ConfigMismatch("field and walk live on different graphs".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t must be finite and >= 0, got {t}")));
    }
    probes
        .iter()
        .map(|&p| {
            graph
                .index_of(p)
                .ok_or_else(|| Error::InvalidParameter(format!("probe {p} is not an interior vertex")))
        })
        .collect()
}

/// Draws, for each replica, `L_t` (walk stream), `h` (field stream) and `h'`
/// (second field stream), and forms `A = L_t + h^2`, `B = (h' + sqrt t)^2`.
pub fn ray_knight_draws(
    graph: &WiredGraph,
    factor: &CovarianceFactor,
    rate: f64,
    t: f64,
    probes: &[Point],
    replicas: u64,
    seed: u64,
) -> Result<Vec<RayKnightDraw>> {
    let idx = check_inputs(graph, factor, rate, t, probes)?;
    let cfg = WalkConfig::new(graph, rate, seed, 0)?;
    let weights: Vec<Vec<f64>> = Weights::ALL.iter().map(|w| w.vector(graph)).collect();
    let st = t.sqrt();
    Ok(par_replicas(replicas, |r| {
        let l = run_to_boundary_time(&cfg.with_replica(r), t).expect("validated");
        let h = sample_dgff_on(factor, Stream::Field, seed, r);
        let hp = sample_dgff_on(factor, Stream::FieldPrime, seed, r);
        let a_all: Vec<f64> = l.interior.iter().zip(h.values()).map(|(l, h)| l + h * h).collect();
        let b_all: Vec<f64> = hp.values().iter().map(|h| (h + st).powi(2)).collect();
        let dot = |w: &[f64], v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        RayKnightDraw {
            a: idx.iter().map(|&i| a_all[i]).collect(),
            b: idx.iter().map(|&i| b_all[i]).collect(),
            local: idx.iter().map(|&i| l.interior[i]).collect(),
            functional_a: [0, 1, 2].map(|k| dot(&weights[k], &a_all)),
            functional_b: [0, 1, 2].map(|k| dot(&weights[k], &b_all)),
        }
    }))
}

/// Per-probe two-sample KS and mean residuals, plus the three functionals.
pub fn verify_ray_knight(
    graph: &WiredGraph,
    factor: &CovarianceFactor,
    rate: f64,
    t: f64,
    probes: &[Point],
    replicas: u64,
    seed: u64,
) -> Result<IsomorphismReport> {
    check_inputs(graph, factor, rate, t, probes)?;
    if replicas < MIN_REPLICAS {
        return Err(Error::TooFewSamples {
            got: replicas as usize,
            need: MIN_REPLICAS as usize,
        });
    }
    let draws = ray_knight_draws(graph, factor, rate, t, probes, replicas, seed)?;
    let mut rep = report_from_draws(&draws, probes, t)?;
    rep.rate = rate;
    rep.seed = seed;
    rep.vertex_count = graph.len();
    rep.graph_fingerprint = graph.fingerprint();
    Ok(rep)
}

/// Assembles the statistics from draws; configuration fields other than `t`
/// and `replicas` are left for the caller to fill.
pub fn report_from_draws(draws: &[RayKnightDraw], probes: &[Point], t: f64) -> Result<IsomorphismReport> {
    let column = |f: &dyn Fn(&RayKnightDraw) -> f64| draws.iter().map(f).collect::<Vec<f64>>();
    let mut probe_reports = Vec::with_capacity(probes.len());
    for (k, &p) in probes.iter().enumerate() {
        let a = column(&|d| d.a[k]);
        let b = column(&|d| d.b[k]);
        let l = column(&|d| d.local[k]);
        let se_l = std_error(&l);
        probe_reports.push(ProbeReport {
            position: p,
            ks: two_sample_ks(&a, &b)?,
            mean_a: mean(&a),
            mean_b: mean(&b),
            mean_residual: diff_residual(&a, &b),
            mean_local_time: mean(&l),
            local_time_residual: if se_l == 0.0 { 0.0 } else { (mean(&l) - t) / se_l },
        });
    }
    let mut functionals = Vec::new();
    for (k, w) in Weights::ALL.iter().enumerate() {
        let a = column(&|d| d.functional_a[k]);
        let b = column(&|d| d.functional_b[k]);
        functionals.push(FunctionalReport {
            weights: *w,
            ks: two_sample_ks(&a, &b)?,
            mean_residual: diff_residual(&a, &b),
        });
    }
    Ok(IsomorphismReport {
        rate: f64::NAN,
        t,
        replicas: draws.len() as u64,
        seed: 0,
        vertex_count: 0,
        graph_fingerprint: 0,
        probes: probe_reports,
        functionals,
    })
}

/// Six spread-out probes: the center, the four quarter points of the
/// bounding box, and a vertex next to the boundary.
pub fn default_probes(g: &WiredGraph) -> Vec<Point> {
    let d = g.domain();
    let c = d.central_vertex();
    let vs = d.vertices();
    let (x0, x1) = (vs.iter().map(|p| p.x).min().unwrap(), vs.iter().map(|p| p.x).max().unwrap());
    let (y0, y1) = (vs.iter().map(|p| p.y).min().unwrap(), vs.iter().map(|p| p.y).max().unwrap());
    let nearest = |target: Point| {
        *vs.iter()
            .min_by_key(|p| ((**p - target).norm2(), **p))
            .expect("nonempty")
    };
    let q = |a: i64, b: i64| a + (b - a) / 4;
    let mut out = vec![c];
    for target in [
        Point::new(q(x0, x1), q(y0, y1)),
        Point::new(x1 - (x1 - x0) / 4, q(y0, y1)),
        Point::new(q(x0, x1), y1 - (y1 - y0) / 4),
        Point::new(x1 - (x1 - x0) / 4, y1 - (y1 - y0) / 4),
        Point::new(x0, c.y),
    ] {
        let p = nearest(target);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentReport {
    pub vertex_count: usize,
    pub samples: usize,
    /// Empirical `Var(Σ_x h(x)^2)`.
    pub variance: f64,
    /// `2 tr(C^2)`, the Gaussian value.
    pub exact_variance: Option<f64>,
    /// Standard error of the empirical variance.
    pub std_error: f64,
    /// `variance / |D|^2`.
    pub ratio: f64,
}

/// Bound on `Var(Σ h^2) / |D|^2` asserted across the tested range.
pub const SECOND_MOMENT_BOUND: f64 = 50.0;

/// `Var(Σ_x h(x)^2)` from field realizations given as value vectors.
pub fn second_moment_from_fields(fields: &[Vec<f64>], vertex_count: usize) -> Result<SecondMomentReport> {
    if fields.len() < 2 {
        return Err(Error::TooFewSamples {
            got: fields.len(),
            need: 2,
        });
    }
    let s: Vec<f64> = fields.iter().map(|h| h.iter().map(|v| v * v).sum()).collect();
    let m = mean(&s);
    let n = s.len() as f64;
    let dev2: Vec<f64> = s.iter().map(|v| (v - m).powi(2)).collect();
    let variance = dev2.iter().sum::<f64>() / (n - 1.0);
    let m4 = dev2.iter().map(|d| d * d).sum::<f64>() / n;
    let se = ((m4 - variance * variance).max(0.0) / n).sqrt();
    Ok(SecondMomentReport {
        vertex_count,
        samples: fields.len(),
        variance,
        exact_variance: None,
        std_error: se,
        ratio: variance / (vertex_count as f64).powi(2),
    })
}

pub fn second_moment_check(factor: &CovarianceFactor, replicas: u64, seed: u64) -> Result<SecondMomentReport> {
    let fields = par_replicas(replicas, |r| sample_dgff_on(factor, Stream::Field, seed, r).values().to_vec());
    let mut rep = second_moment_from_fields(&fields, factor.domain().len())?;
    let l = factor.lower();
    let c = l * l.transpose();
    rep.exact_variance = Some(2.0 * c.norm_squared());
    Ok(rep)
}
