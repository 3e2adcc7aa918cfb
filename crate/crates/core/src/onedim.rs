//! The continuous-time simple random walk on `{0, ..., T}` started from `T`,
//! the compound laws of its local times and downcrossing counts, and the
//! closed-form ballot and Brownian-bridge estimates that go with it.
//!
//! Downcrossing counts are indexed by the upper site: `downcrossings[s]`
//! counts jumps `s -> s-1`, so `downcrossings[T]` is the number of
//! excursions away from `T`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Exp1, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::{par_replicas, stream, Stream};

/// Mass beyond which discrete pmf tables are truncated.
pub const PMF_TRUNCATION: f64 = 1e-12;

/// A random sum `S = V_1 + ... + V_M` with independent count and summands.
/// Geometric summands live on `{1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CompoundSpec {
    /// Binomial(n, p) count, Geometric(q) summands.
    Bigeo { n: u64, p: f64, q: f64 },
    /// Binomial(n, p) count, Exponential(lambda) summands.
    Biexp { n: u64, p: f64, lambda: f64 },
    /// Poisson(mu) count, Geometric(q) summands.
    Poigeo { mu: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Summand {
    Geometric(f64),
    Exponential(f64),
}

/// Count weights `P(M = m)` for `m = 0..weights.len()` and the summand law.
#[derive(Debug, Clone)]
struct Mixture {
    weights: Vec<f64>,
    summand: Summand,
}

fn is_prob(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn binomial_weights(n: u64, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|m| {
            if p == 0.0 {
                return if m == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if m == n { 1.0 } else { 0.0 };
            }
            (ln_binomial(n, m) + m as f64 * p.ln() + (n - m) as f64 * (1.0 - p).ln()).exp()
        })
        .collect()
}

fn poisson_weights(mu: f64) -> Vec<f64> {
    if mu == 0.0 {
        return vec![1.0];
    }
    let mut w = Vec::new();
    let mut cum = 0.0;
    let mut m = 0u64;
    loop {
        let v = (-mu + m as f64 * mu.ln() - ln_gamma(m as f64 + 1.0)).exp();
        w.push(v);
        cum += v;
        if m as f64 > mu && (1.0 - cum < 1e-16 || v < 1e-300) {
            return w;
        }
        m += 1;
    }
}

/// `P(G_1 + ... + G_m = s)` for i.i.d. Geometric(q) on `{1, 2, ...}`.
fn negative_binomial(m: u64, q: f64, s: u64) -> f64 {
    if m == 0 {
        return if s == 0 { 1.0 } else { 0.0 };
    }
    if s < m {
        return 0.0;
    }
    if q == 1.0 {
        return if s == m { 1.0 } else { 0.0 };
    }
    (ln_binomial(s - 1, m - 1) + m as f64 * q.ln() + (s - m) as f64 * (1.0 - q).ln()).exp()
}

fn gamma_density(m: u64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let m = m as f64;
    (m * rate.ln() + (m - 1.0) * x.ln() - rate * x - ln_gamma(m)).exp()
}

impl Mixture {
    fn count_mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(m, w)| m as f64 * w).sum()
    }

    fn count_var(&self) -> f64 {
        let mean = self.count_mean();
        self.weights
            .iter()
            .enumerate()
            .map(|(m, w)| (m as f64 - mean).powi(2) * w)
            .sum()
    }

    fn summand_moments(&self) -> (f64, f64) {
        match self.summand {
            Summand::Geometric(q) => (1.0 / q, (1.0 - q) / (q * q)),
            Summand::Exponential(l) => (1.0 / l, 1.0 / (l * l)),
        }
    }

    fn mean(&self) -> f64 {
        self.count_mean() * self.summand_moments().0
    }

    fn variance(&self) -> f64 {
        let (m1, v1) = self.summand_moments();
        self.count_mean() * v1 + self.count_var() * m1 * m1
    }

    fn atom(&self) -> f64 {
        self.weights[0]
    }

    fn pmf_at(&self, s: u64) -> f64 {
        let Summand::Geometric(q) = self.summand else {
            return if s == 0 { self.atom() } else { 0.0 };
        };
        let top = (s as usize).min(self.weights.len() - 1);
        (0..=top)
            .map(|m| self.weights[m] * negative_binomial(m as u64, q, s))
            .sum()
    }

    fn pmf_table(&self) -> Vec<f64> {
        let cap = (self.mean() + 60.0 * self.variance().sqrt() + 60.0).ceil() as u64;
        let mut out = Vec::new();
        let mut cum = 0.0;
        for s in 0..=cap {
            let v = self.pmf_at(s);
            out.push(v);
            cum += v;
            if cum > 1.0 - PMF_TRUNCATION && s as f64 >= self.mean() {
                break;
            }
        }
        out
    }

    fn density(&self, x: f64) -> f64 {
        match self.summand {
            Summand::Geometric(_) => 0.0,
            Summand::Exponential(l) => self
                .weights
                .iter()
                .enumerate()
                .skip(1)
                .map(|(m, w)| w * gamma_density(m as u64, l, x))
                .sum(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let v = match self.summand {
            Summand::Geometric(_) => (0..=x.floor() as u64).map(|s| self.pmf_at(s)).sum(),
            Summand::Exponential(_) if x == 0.0 => self.atom(),
            Summand::Exponential(l) => {
                self.atom()
                    + self
                        .weights
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(m, w)| w * gamma_lr(m as f64, l * x))
                        .sum::<f64>()
            }
        };
        v.min(1.0)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.summand {
            Summand::Geometric(_) => {
                let f = x.floor();
                if f == x {
                    self.cdf(x - 1.0)
                } else {
                    self.cdf(f)
                }
            }
            Summand::Exponential(_) => self.cdf(x),
        }
    }
}

impl CompoundSpec {
    pub fn bigeo(n: u64, p: f64, q: f64) -> Result<Self> {
        let s = CompoundSpec::Bigeo { n, p, q };
        s.validate()?;
        Ok(s)
    }

    pub fn biexp(n: u64, p: f64, lambda: f64) -> Result<Self> {
        let s = CompoundSpec::Biexp { n, p, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn poigeo(mu: f64, q: f64) -> Result<Self> {
        let s = CompoundSpec::Poigeo { mu, q };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CompoundSpec::Bigeo { p, q, .. } => is_prob(p) && is_prob(q) && q > 0.0,
            CompoundSpec::Biexp { p, lambda, .. } => is_prob(p) && lambda > 0.0 && lambda.is_finite(),
            CompoundSpec::Poigeo { mu, q } => mu >= 0.0 && mu.is_finite() && is_prob(q) && q > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("compound parameters out of range: {self:?}")))
        }
    }

    fn mixture(&self) -> Mixture {
        match *self {
            CompoundSpec::Bigeo { n, p, q } => Mixture {
                weights: binomial_weights(n, p),
                summand: Summand::Geometric(q),
            },
            CompoundSpec::Biexp { n, p, lambda } => Mixture {
                weights: binomial_weights(n, p),
                summand: Summand::Exponential(lambda),
            },
            CompoundSpec::Poigeo { mu, q } => Mixture {
                weights: poisson_weights(mu),
                summand: Summand::Geometric(q),
            },
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, CompoundSpec::Biexp { .. })
    }

    /// Closed-form mean: `np/q`, `np/lambda` or `mu/q`.
    pub fn mean(&self) -> f64 {
        match *self {
            CompoundSpec::Bigeo { n, p, q } => n as f64 * p / q,
            CompoundSpec::Biexp { n, p, lambda } => n as f64 * p / lambda,
            CompoundSpec::Poigeo { mu, q } => mu / q,
        }
    }

    pub fn variance(&self) -> f64 {
        self.mixture().variance()
    }

    /// `P(S = 0)`.
    pub fn atom_at_zero(&self) -> f64 {
        self.mixture().atom()
    }

    /// `P(S = s)`; for `Biexp` only the atom at zero is a point mass.
    pub fn pmf(&self, s: u64) -> f64 {
        self.mixture().pmf_at(s)
    }

    /// pmf on `0..len`, truncated once the cumulative mass exceeds
    /// `1 - PMF_TRUNCATION`. For `Biexp` this is just the atom at zero.
    pub fn pmf_table(&self) -> Vec<f64> {
        let mix = self.mixture();
        if self.is_discrete() {
            mix.pmf_table()
        } else {
            vec![mix.atom()]
        }
    }

    /// Density of the absolutely continuous part (zero for discrete kinds).
    pub fn density(&self, x: f64) -> f64 {
        self.mixture().density(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.mixture().cdf(x)
    }

    /// `P(S < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.mixture().cdf_left(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let count = match *self {
            CompoundSpec::Bigeo { n, p, .. } | CompoundSpec::Biexp { n, p, .. } => {
                Binomial::new(n, p).expect("validated").sample(rng)
            }
            CompoundSpec::Poigeo { mu, .. } => {
                if mu == 0.0 {
                    0
                } else {
                    Poisson::new(mu).expect("validated").sample(rng) as u64
                }
            }
        };
        match *self {
            CompoundSpec::Bigeo { q, .. } | CompoundSpec::Poigeo { q, .. } => {
                let g = Geometric::new(q).expect("validated");
                (0..count).map(|_| g.sample(rng) + 1).sum::<u64>() as f64
            }
            CompoundSpec::Biexp { lambda, .. } => {
                let e = Exp::new(lambda).expect("validated");
                (0..count).map(|_| e.sample(rng)).sum()
            }
        }
    }
}

/// Evaluates the law on a grid: pmf values at integer points for the
/// discrete kinds; for `Biexp`, the atom at `x = 0` and the density elsewhere.
pub fn compound_pmf(spec: &CompoundSpec, grid: &[f64]) -> Vec<f64> {
    let mix = spec.mixture();
    grid.iter()
        .map(|&x| {
            if x < 0.0 {
                0.0
            } else if spec.is_discrete() {
                if x.fract() == 0.0 {
                    mix.pmf_at(x as u64)
                } else {
                    0.0
                }
            } else if x == 0.0 {
                mix.atom()
            } else {
                mix.density(x)
            }
        })
        .collect()
}

/// `count` i.i.d. draws from one `Stream::Compound` stream.
pub fn compound_sample(spec: &CompoundSpec, seed: u64, count: usize) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Compound, 0);
    (0..count).map(|_| spec.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `P(S <= theta)`.
    Lower,
    /// `P(S >= theta)`.
    Upper,
}

impl Tail {
    fn name(self) -> &'static str {
        match self {
            Tail::Lower => "lower",
            Tail::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub side: Tail,
    /// The mean, where the two regimes meet.
    pub pivot: f64,
    pub bound: f64,
}

impl CompoundSpec {
    /// `(a, b)` with bound `exp(-(sqrt(a) - sqrt(theta b))^2)` and pivot `a/b`.
    fn bound_parameters(&self) -> (f64, f64) {
        match *self {
            CompoundSpec::Bigeo { n, p, q } => (n as f64 * p, q),
            CompoundSpec::Biexp { n, p, lambda } => (n as f64 * p, lambda),
            CompoundSpec::Poigeo { mu, q } => (mu, q),
        }
    }

    /// Exact tail probability on the given side.
    pub fn tail(&self, theta: f64, side: Tail) -> f64 {
        match side {
            Tail::Lower => self.cdf(theta),
            Tail::Upper => (1.0 - self.cdf_left(theta)).max(0.0),
        }
    }
}

/// Bound on the tail of the side `theta` falls in: lower below the mean,
/// upper above it.
pub fn compound_tail_bound(spec: &CompoundSpec, theta: f64) -> Result<TailBound> {
    spec.validate()?;
    let side = if theta <= spec.mean() { Tail::Lower } else { Tail::Upper };
    compound_tail_bound_on(spec, theta, side)
}

/// Bound on a chosen side; errors if `theta` is on the wrong side of the mean.
pub fn compound_tail_bound_on(spec: &CompoundSpec, theta: f64, side: Tail) -> Result<TailBound> {
    spec.validate()?;
    let (a, b) = spec.bound_parameters();
    let pivot = a / b;
    if !(theta >= 0.0) {
        return Err(Error::Regime {
            side: side.name(),
            detail: format!("theta = {theta} must be nonnegative"),
        });
    }
    let ok = match side {
        Tail::Lower => theta <= pivot,
        Tail::Upper => theta >= pivot,
    };
    if !ok {
        let rel = if side == Tail::Lower { "<=" } else { ">=" };
        return Err(Error::Regime {
            side: side.name(),
            detail: format!("need theta {rel} {pivot}, got theta = {theta}"),
        });
    }
    let gap = a.sqrt() - (theta * b).sqrt();
    Ok(TailBound {
        side,
        pivot,
        bound: (-gap * gap).exp(),
    })
}

/// When to stop the linear walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearStop {
    /// After this many completed excursions away from `T`.
    Excursions(u64),
    /// When the local time at `T` reaches this value.
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearWalkResult {
    pub top: usize,
    pub stop: LinearStop,
    /// Local time per site `0..=T`.
    pub local_times: Vec<f64>,
    /// `downcrossings[s]` counts jumps `s -> s-1`; entry 0 is always 0.
    pub downcrossings: Vec<u64>,
    pub excursions: u64,
    pub elapsed: f64,
}

impl LinearWalkResult {
    pub fn conservation_error(&self) -> f64 {
        (self.local_times.iter().sum::<f64>() - self.elapsed).abs()
    }
}

/// One run of the unit-rate walk on `{0, ..., top}` from `top`. Each
/// sojourn draws an `Exp1` hold scaled by `1/degree` and, at interior sites,
/// one fair coin for the direction.
pub fn linear_walk(top: usize, stop: LinearStop, seed: u64, replica: u64) -> Result<LinearWalkResult> {
    if top == 0 {
        return Err(Error::InvalidParameter("linear walk needs T >= 1".into()));
    }
    if let LinearStop::Time(t) = stop {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("T-time must be finite and >= 0, got {t}")));
        }
    }
    let mut rng = stream(seed, Stream::LinearWalk, replica);
    let mut local = vec![0.0; top + 1];
    let mut down = vec![0u64; top + 1];
    let mut excursions = 0u64;
    let mut pos = top;
    loop {
        if pos == top {
            let done = match stop {
                LinearStop::Excursions(v) => excursions >= v,
                LinearStop::Time(t) => local[top] >= t,
            };
            if done {
                break;
            }
        }
        let hold: f64 = rng.sample(Exp1);
        if pos == top {
            if let LinearStop::Time(t) = stop {
                if local[top] + hold >= t {
                    local[top] = t;
                    break;
                }
            }
            local[top] += hold;
            down[top] += 1;
            pos = top - 1;
            continue;
        }
        if pos == 0 {
            local[0] += hold;
            pos = 1;
        } else {
            local[pos] += hold / 2.0;
            if rng.random_bool(0.5) {
                pos += 1;
            } else {
                down[pos] += 1;
                pos -= 1;
            }
        }
        if pos == top {
            excursions += 1;
        }
    }
    let elapsed = local.iter().sum();
    Ok(LinearWalkResult {
        top,
        stop,
        local_times: local,
        downcrossings: down,
        excursions,
        elapsed,
    })
}

/// Replicas `0..count` of [`linear_walk`], in order.
pub fn simulate_linear_walk(top: usize, stop: LinearStop, seed: u64, count: u64) -> Result<Vec<LinearWalkResult>> {
    linear_walk(top, stop, seed, 0)?;
    Ok(par_replicas(count, |r| linear_walk(top, stop, seed, r).expect("validated")))
}

/// What the downcrossing or local-time law is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Law of `T(T-j)` given `T(T-i) = m`.
    Downcrossings { m: u64 },
    /// Law of `L(T-i)` after `v` excursions; `j` is unused.
    Excursions { v: u64 },
    /// Law of `T(T-j)` given local time `ell` at `T-i`.
    LocalTime { ell: f64 },
}

pub fn conditional_law(top: usize, i: usize, j: usize, c: Conditioning) -> Result<CompoundSpec> {
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    match c {
        Conditioning::Excursions { v } => {
            if !(1..=top).contains(&i) {
                return bad(format!("need 1 <= i <= T, got i = {i}, T = {top}"));
            }
            let r = 1.0 / i as f64;
            CompoundSpec::biexp(v, r, r)
        }
        Conditioning::Downcrossings { m } => {
            if !(i <= j && j < top) {
                return bad(format!("need 0 <= i <= j < T, got i = {i}, j = {j}, T = {top}"));
            }
            let r = 1.0 / (j - i + 1) as f64;
            CompoundSpec::bigeo(m, r, r)
        }
        Conditioning::LocalTime { ell } => {
            if !(i <= j && j < top) {
                return bad(format!("need 0 <= i <= j < T, got i = {i}, j = {j}, T = {top}"));
            }
            let r = 1.0 / (j - i + 1) as f64;
            CompoundSpec::poigeo(ell * r, r)
        }
    }
}

/// Law of the local time at `T-i` when the walk is stopped at `T`-time `t`:
/// a Poisson(t/i) number of excursions reach `T-i`, each leaving an
/// Exponential(1/i) amount of local time there.
#[derive(Debug, Clone)]
pub struct LocalTimeMarginal {
    pub top: usize,
    pub i: usize,
    pub t: f64,
    mixture: Mixture,
}

pub fn local_time_marginal(top: usize, i: usize, t: f64) -> Result<LocalTimeMarginal> {
    if !(1..=top).contains(&i) || !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= i <= T and t > 0, got i = {i}, T = {top}, t = {t}"
        )));
    }
    let r = 1.0 / i as f64;
    Ok(LocalTimeMarginal {
        top,
        i,
        t,
        mixture: Mixture {
            weights: poisson_weights(t * r),
            summand: Summand::Exponential(r),
        },
    })
}

impl LocalTimeMarginal {
    pub fn atom(&self) -> f64 {
        self.mixture.atom()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.mixture.density(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.mixture.cdf(x)
    }

    pub fn cdf_left(&self, x: f64) -> f64 {
        self.mixture.cdf_left(x)
    }

    pub fn mean(&self) -> f64 {
        self.mixture.mean()
    }
}

/// `r_{k,T}(u, v)` evaluated directly.
pub fn ballot_rate(k: f64, gamma: f64, top: f64, u_hat: f64, v_hat: f64) -> f64 {
    let kg = k.powf(gamma);
    let s2 = std::f64::consts::SQRT_2;
    (2.0 / std::f64::consts::PI).sqrt() / (top * k.powf(1.5))
        * (-2.0 * (top - 1.0) * kg).exp()
        * (u_hat * (2.0 * s2 * u_hat).exp())
        * (v_hat * (-2.0 * s2 * v_hat - v_hat * v_hat / (top * kg)).exp())
}

/// `ln r_{k,T}(u, v)`, summed term by term.
pub fn ln_ballot_rate(k: f64, gamma: f64, top: f64, u_hat: f64, v_hat: f64) -> f64 {
    let kg = k.powf(gamma);
    let s2 = std::f64::consts::SQRT_2;
    0.5 * (2.0f64.ln() - std::f64::consts::PI.ln()) - top.ln() - 1.5 * k.ln() - 2.0 * (top - 1.0) * kg
        + u_hat.ln()
        + 2.0 * s2 * u_hat
        + v_hat.ln()
        - 2.0 * s2 * v_hat
        - v_hat * v_hat / (top * kg)
}

/// Probability that a Brownian bridge from `a` to `b` over time `T`, with
/// the given variance per unit time, dips to level `x`.
pub fn bridge_min_probability(a: f64, b: f64, x: f64, top: f64, variance: f64) -> Result<f64> {
    if !(x <= a.min(b)) || !(top > 0.0) || !(variance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need x <= min(a, b), T > 0, variance > 0; got a={a}, b={b}, x={x}, T={top}, variance={variance}"
        )));
    }
    Ok((-2.0 * (b - x) * (a - x) / (variance * top)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl MonteCarloEstimate {
    pub fn from_hits(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        MonteCarloEstimate {
            estimate: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// Fraction of discretized bridges (`steps` increments) whose minimum over
/// the grid is at most `x`.
pub fn simulate_bridge_min(
    a: f64,
    b: f64,
    x: f64,
    top: f64,
    variance: f64,
    paths: u64,
    steps: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    bridge_min_probability(a, b, x, top, variance)?;
    if steps == 0 || paths == 0 {
        return Err(Error::InvalidParameter("need at least one path and one step".into()));
    }
    let dt = top / steps as f64;
    let sd = (variance * dt).sqrt();
    let hits: u64 = par_replicas(paths, |r| {
        let mut rng = stream(seed, Stream::Bridge, r);
        let mut w = vec![0.0; steps + 1];
        for s in 1..=steps {
            let z: f64 = rng.sample(StandardNormal);
            w[s] = w[s - 1] + sd * z;
        }
        let end = w[steps] - (b - a);
        let hit = (0..=steps).any(|s| a + w[s] - (s as f64 / steps as f64) * end <= x);
        hit as u64
    })
    .into_iter()
    .sum();
    Ok(MonteCarloEstimate::from_hits(hits, paths))
}

/// Repulsion window for the square-rooted normalized count at site `i`:
/// `sqrt(k^g T(i)) - sqrt(2)(k + (i-1)k^g)` must lie in
/// `[(k + i k^g)^{1/2-eta}, (k + i k^g)^{1/2+eta}]`.
pub fn repulsion_window(k: f64, gamma: f64, eta: f64, i: usize) -> (f64, f64) {
    let scale = k + i as f64 * k.powf(gamma);
    (scale.powf(0.5 - eta), scale.powf(0.5 + eta))
}

/// Recentered square-root count `sqrt(k^g m) - sqrt(2)(k + (i-1)k^g)`.
pub fn recentered_count(k: f64, gamma: f64, i: usize, m: u64) -> f64 {
    let kg = k.powf(gamma);
    (kg * m as f64).sqrt() - std::f64::consts::SQRT_2 * (k + (i as f64 - 1.0) * kg)
}

/// Whether every site in `sites` has its recentered count inside the window.
pub fn is_repelled(downcrossings: &[u64], k: f64, gamma: f64, eta: f64, sites: std::ops::RangeInclusive<usize>) -> bool {
    sites.into_iter().all(|i| {
        let (lo, hi) = repulsion_window(k, gamma, eta, i);
        let u = recentered_count(k, gamma, i, downcrossings[i]);
        lo <= u && u <= hi
    })
}
