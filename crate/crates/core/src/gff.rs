//! The discrete Gaussian free field with covariance `G/2`, its field average
//! and zero-average part, the min-extremal process and the critical LQG proxy.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::GreenMatrix;
use crate::lattice::{ball, floor_exp, geometry_query, GeometryKind, LatticeDomain, Point};
use crate::rng::{stream, Stream};

pub use crate::lattice::DiscreteMeasure;

/// Lower-triangular square root of `C = G/2`.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    rate: f64,
    fingerprint: u64,
    domain: Arc<LatticeDomain>,
    lower: DMatrix<f64>,
    variances: Vec<f64>,
}

impl CovarianceFactor {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn graph_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `Var h(x) = G(x,x)/2`.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `|L L^T - G/2|_F / |G/2|_F`.
    pub fn reconstruction_error(&self, g: &GreenMatrix) -> f64 {
        let c = g.values() * 0.5;
        (&self.lower * self.lower.transpose() - &c).norm() / c.norm()
    }
}

pub fn covariance_factor(g: &GreenMatrix) -> Result<CovarianceFactor> {
    let c = g.values() * 0.5;
    let variances = (0..g.len()).map(|i| c[(i, i)]).collect();
    let chol = Cholesky::new(c).ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
    Ok(CovarianceFactor {
        rate: g.rate(),
        fingerprint: g.graph_fingerprint(),
        domain: g.domain().clone(),
        lower: chol.l(),
        variances,
    })
}

/// One realization of the field on the interior.
#[derive(Debug, Clone)]
pub struct GaussianFieldSample {
    domain: Arc<LatticeDomain>,
    values: Vec<f64>,
    average: f64,
    /// Walk rate whose Green function (halved) is the covariance.
    pub rate: f64,
}

impl GaussianFieldSample {
    pub fn new(domain: Arc<LatticeDomain>, values: Vec<f64>, rate: f64) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for {} vertices",
                values.len(),
                domain.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        let average = values.iter().sum::<f64>() / values.len() as f64;
        Ok(GaussianFieldSample {
            domain,
            values,
            average,
            rate,
        })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn average(&self) -> f64 {
        self.average
    }

    pub fn at(&self, p: Point) -> Option<f64> {
        self.domain.index_of(p).map(|i| self.values[i])
    }
}

/// `h = L z` with `z` i.i.d. standard normals from the `(seed, replica)` stream.
pub fn sample_dgff(factor: &CovarianceFactor, seed: u64, replica: u64) -> GaussianFieldSample {
    sample_dgff_on(factor, Stream::Field, seed, replica)
}

/// As [`sample_dgff`] on a chosen stream, for drawing independent copies.
pub fn sample_dgff_on(factor: &CovarianceFactor, purpose: Stream, seed: u64, replica: u64) -> GaussianFieldSample {
    let mut rng = stream(seed, purpose, replica);
    let n = factor.lower.nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let h = &factor.lower * z;
    GaussianFieldSample::new(factor.domain.clone(), h.iter().copied().collect(), factor.rate)
        .expect("factor and domain agree")
}

/// Exact sampler for the square block `{a..a+M-1}^2` using the sine basis
/// that diagonalizes the killed generator; handles blocks far beyond the
/// dense limit.
#[derive(Debug, Clone)]
pub struct SquareSpectralSampler {
    domain: Arc<LatticeDomain>,
    rate: f64,
    side: usize,
    basis: DMatrix<f64>,
    scale: DMatrix<f64>,
}

impl SquareSpectralSampler {
    pub fn new(domain: &LatticeDomain, rate: f64) -> Result<Self> {
        let side = (domain.len() as f64).sqrt().round() as usize;
        let x0 = domain.vertices()[0];
        let is_block = side * side == domain.len()
            && domain
                .vertices()
                .iter()
                .enumerate()
                .all(|(k, p)| *p == Point::new(x0.x + (k / side) as i64, x0.y + (k % side) as i64));
        if !is_block {
            return Err(Error::Domain("spectral sampler needs a full square block".into()));
        }
        let m1 = (side + 1) as f64;
        let pi = std::f64::consts::PI;
        let norm = (2.0 / m1).sqrt();
        let basis = DMatrix::from_fn(side, side, |i, a| norm * (pi * ((i + 1) * (a + 1)) as f64 / m1).sin());
        let scale = DMatrix::from_fn(side, side, |a, b| {
            let lambda = rate * (4.0 - 2.0 * (pi * (a + 1) as f64 / m1).cos() - 2.0 * (pi * (b + 1) as f64 / m1).cos());
            (0.5 / lambda).sqrt()
        });
        Ok(SquareSpectralSampler {
            domain: Arc::new(domain.clone()),
            rate,
            side,
            basis,
            scale,
        })
    }

    pub fn sample(&self, seed: u64, replica: u64) -> GaussianFieldSample {
        let mut rng = stream(seed, Stream::Field, replica);
        let m = self.side;
        let z = DMatrix::from_fn(m, m, |a, b| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * self.scale[(a, b)]
        });
        let h = &self.basis * z * &self.basis;
        let values = (0..m * m).map(|k| h[(k / m, k % m)]).collect();
        GaussianFieldSample::new(self.domain.clone(), values, self.rate).expect("block sizes agree")
    }

    /// `Var h(x) = G(x,x)/2` from the spectral sum.
    pub fn variances(&self) -> Vec<f64> {
        let m = self.side;
        let s2 = self.scale.map(|c| c * c);
        let b2 = self.basis.map(|v| v * v);
        let v = &b2 * s2 * b2.transpose();
        (0..m * m).map(|k| v[(k / m, k % m)]).collect()
    }
}

/// `psi(y) = mean_x G(x,y) / mean_{x,y} G(x,y)`.
pub fn psi_field(g: &GreenMatrix) -> Vec<f64> {
    psi_from_row_sums(&(0..g.len()).map(|j| g.values().column(j).sum()).collect::<Vec<_>>())
}

/// `psi` from the row sums `sum_x G(x, y)` (e.g. from a sparse solve).
pub fn psi_from_row_sums(row_sums: &[f64]) -> Vec<f64> {
    let n = row_sums.len() as f64;
    let mean = row_sums.iter().sum::<f64>() / n;
    row_sums.iter().map(|s| s / mean).collect()
}

/// `Var(hbar) = mean_{x,y} G(x,y) / 2`.
pub fn field_average_variance(row_sums: &[f64]) -> f64 {
    let n = row_sums.len() as f64;
    0.5 * row_sums.iter().sum::<f64>() / (n * n)
}

/// `h = psi * hbar + hhat` with `hhat` of zero mean and uncorrelated with `hbar`.
pub fn zero_average_decompose(h: &GaussianFieldSample, psi: &[f64]) -> Result<(f64, Vec<f64>)> {
    if psi.len() != h.values.len() {
        return Err(Error::ConfigMismatch("psi and field live on different graphs".into()));
    }
    let hbar = h.average;
    Ok((hbar, h.values.iter().zip(psi).map(|(v, p)| v - p * hbar).collect()))
}

/// Centering sequences for the field minimum and the cover time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// `m_N = log N / sqrt(pi) - 3 log log N / (8 sqrt(pi))`, argument `N`.
    IntroMinimum,
    /// `sqrt(t_N) = log N / sqrt(pi) - log log N / (4 sqrt(pi))`, argument `N`.
    IntroCover,
    /// `sqrt(t_n^A) = sqrt(2) n - 3 log n / (4 sqrt(2))`, argument `n`.
    RetunedMinimum,
    /// `sqrt(t_n) = sqrt(2) n - log n / (2 sqrt(2))`, argument `n`.
    RetunedCover,
    /// `t_n^B = n log n / 2`, argument `n`.
    PhaseB,
}

pub fn eval_centering(arg: f64, convention: Centering) -> Result<f64> {
    if !(arg > 1.0) {
        return Err(Error::InvalidParameter(format!("centering needs an argument > 1, got {arg}")));
    }
    let sp = std::f64::consts::PI.sqrt();
    let s2 = std::f64::consts::SQRT_2;
    let l = arg.ln();
    Ok(match convention {
        Centering::IntroMinimum => l / sp - 3.0 * l.ln() / (8.0 * sp),
        Centering::IntroCover => l / sp - l.ln() / (4.0 * sp),
        Centering::RetunedMinimum => s2 * arg - 3.0 * l / (4.0 * s2),
        Centering::RetunedCover => s2 * arg - l / (2.0 * s2),
        Centering::PhaseB => 0.5 * arg * l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalPoint {
    /// `x / N`.
    pub position: [f64; 2],
    pub vertex: Point,
    /// `h(x) + centering`.
    pub depth: f64,
    /// `(y, h(x+y) - h(x))` for `x + y` in `Q(x;K)` inside the domain.
    pub patch: Vec<(Point, f64)>,
}

/// Default patch log-radius.
pub fn default_patch_radius() -> f64 {
    4f64.ln()
}

/// All `r`-local minima: `x` with `h(x) <= h(z)` on `B(x;r) ∩ D`, keeping the
/// lexicographically smallest minimizer on ties.
pub fn extremal_process(h: &GaussianFieldSample, r: f64, k: f64, centering: f64) -> Result<Vec<ExtremalPoint>> {
    if !(r >= 0.0) || !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("need r, K >= 0, got r={r}, K={k}")));
    }
    let d = &h.domain;
    let offsets = ball(Point::new(0, 0), floor_exp(r));
    let side = d.side().max(1) as f64;
    let mut out = Vec::new();
    for (i, &x) in d.vertices().iter().enumerate() {
        let hx = h.values[i];
        let is_min = offsets.iter().all(|&o| match d.index_of(x + o) {
            Some(j) => {
                let hz = h.values[j];
                hz > hx || (hz == hx && x + o >= x)
            }
            None => true,
        });
        if !is_min {
            continue;
        }
        let patch = geometry_query(x, k, GeometryKind::LogBox)
            .into_iter()
            .filter_map(|z| d.index_of(z).map(|j| (z - x, h.values[j] - hx)))
            .collect();
        out.push(ExtremalPoint {
            position: [x.x as f64 / side, x.y as f64 / side],
            vertex: x,
            depth: hx + centering,
            patch,
        });
    }
    Ok(out)
}

/// `{x in bulk : f(x)^2 <= u}`.
pub fn level_set(h: &GaussianFieldSample, u: f64, bulk: &[Point]) -> Result<Vec<Point>> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!("u must be >= 0, got {u}")));
    }
    Ok(bulk
        .iter()
        .copied()
        .filter(|&p| h.at(p).is_some_and(|v| v * v <= u))
        .collect())
}

/// Atom at `e^{-n} x` with weight
/// `max(0, alpha Var(x) - h(x)) exp(alpha h(x) - alpha^2 Var(x) / 2)`.
pub fn lqg_proxy_measure(h: &GaussianFieldSample, alpha: f64, variances: &[f64]) -> Result<DiscreteMeasure> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if variances.len() != h.values.len() {
        return Err(Error::ConfigMismatch("variances and field live on different graphs".into()));
    }
    let scale = (-h.domain.n()).exp();
    Ok(DiscreteMeasure {
        atoms: h
            .domain
            .vertices()
            .iter()
            .zip(h.values.iter().zip(variances))
            .map(|(x, (&v, &var))| {
                let w = (alpha * var - v).max(0.0) * (alpha * v - 0.5 * alpha * alpha * var).exp();
                ([x.x as f64 * scale, x.y as f64 * scale], w)
            })
            .collect(),
    })
}
