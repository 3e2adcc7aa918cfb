//! Seeded, persisted experiment drivers.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: the seed
//! and the replica index select the random streams, and replicas are
//! evaluated in parallel but collected in order. When a config carries
//! several values of `n`, replica `r` at grid position `g` runs under the
//! replica id `(g << 32) | r`.

mod cover;
mod onedim_suite;
mod persist;
mod phase;
mod suites;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats;
use crate::lattice::{discretize_domain, wire_boundary, DomainShape, WiredGraph};

pub use cover::{mixture_cdf, run_cover_time_experiment, OverlayFit};
pub use onedim_suite::{
    idlaw_check, local_time_marginal_check, run_onedim_laws_suite, tail_bound_sweep, tail_grid, IdLawCheck, MarginalCheck,
    TailSweep, TailViolation, IDLAW_GRID,
};
pub use persist::{load, persist, Manifest, OutputFormat};
pub use phase::{run_phase_a_experiment, run_phase_b_race_experiment, PlantedSet, S_GRID};
pub use suites::{
    BallotSample,
    ballot_diagnostic, run_ballot_diagnostic, run_extremes, run_gff_sample, run_green, run_isomorphism_suite,
    run_race_check, simulate_two_stage_race, BallotRow, BALLOT_ETA, BALLOT_GAMMA, BALLOT_K, RACE_DEFAULTS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Green,
    GffSample,
    Extremes,
    Cover,
    PhaseA,
    PhaseBRace,
    RayKnight,
    OnedimLaws,
    Ballot,
    Race,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Green,
        ExperimentKind::GffSample,
        ExperimentKind::Extremes,
        ExperimentKind::Cover,
        ExperimentKind::PhaseA,
        ExperimentKind::PhaseBRace,
        ExperimentKind::RayKnight,
        ExperimentKind::OnedimLaws,
        ExperimentKind::Ballot,
        ExperimentKind::Race,
    ];

    /// Whether the experiment runs on lattice domains and reads the `n` grid.
    pub fn uses_lattice(self) -> bool {
        !matches!(self, ExperimentKind::OnedimLaws | ExperimentKind::Ballot | ExperimentKind::Race)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Green => "green",
            ExperimentKind::GffSample => "gff-sample",
            ExperimentKind::Extremes => "extremes",
            ExperimentKind::Cover => "cover",
            ExperimentKind::PhaseA => "phase-a",
            ExperimentKind::PhaseBRace => "phase-b-race",
            ExperimentKind::RayKnight => "ray-knight",
            ExperimentKind::OnedimLaws => "onedim-laws",
            ExperimentKind::Ballot => "ballot",
            ExperimentKind::Race => "race",
        }
    }
}

/// The two rate conventions: edge rate 1, or the retuned rate `1/(2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateConvention {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "retuned")]
    Retuned,
}

impl RateConvention {
    pub fn value(self) -> f64 {
        match self {
            RateConvention::One => 1.0,
            RateConvention::Retuned => 1.0 / (2.0 * std::f64::consts::PI),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" => Some(RateConvention::One),
            "retuned" => Some(RateConvention::Retuned),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateConvention::One => "1",
            RateConvention::Retuned => "retuned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: DomainShape,
    /// Log-scale sizes; the lattice scale is `N = floor(e^n)`.
    pub n: Vec<f64>,
    pub rate: RateConvention,
    pub replicas: u64,
    pub seed: u64,
    /// Time parameter where the experiment takes one.
    pub t: Option<f64>,
    /// Level parameter where the experiment takes one.
    pub u: Option<f64>,
    /// Cover experiment: also fit the field-mixture overlay.
    #[serde(default)]
    pub overlay: bool,
    /// Output directory; not part of the config hash.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Summary format; not part of the config hash.
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, domain: DomainShape, n: Vec<f64>, rate: RateConvention, replicas: u64, seed: u64) -> Self {
        ExperimentConfig {
            experiment,
            domain,
            n,
            rate,
            replicas,
            seed,
            t: None,
            u: None,
            overlay: false,
            out: None,
            format: OutputFormat::Json,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replicas must be >= 1".into()));
        }
        if self.experiment.uses_lattice() && self.n.is_empty() {
            return Err(Error::InvalidParameter("n grid is empty".into()));
        }
        if let Some(bad) = self.n.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
            return Err(Error::InvalidParameter(format!("n must be positive and finite, got {bad}")));
        }
        self.domain.validate()
    }

    /// SHA-256 of the canonical JSON encoding, leaving out `out` and
    /// `format`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("out");
            m.remove("format");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// One replica's observables with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub replica: u64,
    pub params: Value,
    pub observables: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub version: String,
    pub records: Vec<ReplicaRecord>,
    /// Summary statistics, keyed by section.
    pub summary: BTreeMap<String, Value>,
}

impl ResultRecord {
    fn new(config: &ExperimentConfig) -> Self {
        ResultRecord {
            experiment: config.experiment,
            config: config.clone(),
            version: VERSION.to_string(),
            records: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    /// Digest of the per-replica records as written to JSON lines.
    pub fn records_digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(serde_json::to_vec(r).expect("records serialize"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn replica_id(grid_index: usize, r: u64) -> u64 {
    ((grid_index as u64) << 32) | r
}

pub(crate) fn section_key(n: f64) -> String {
    format!("n={n}")
}

/// Mean, standard deviation, standard error and count.
pub(crate) fn describe(samples: &[f64]) -> Value {
    if samples.is_empty() {
        return serde_json::json!({ "count": 0 });
    }
    serde_json::json!({
        "count": samples.len(),
        "mean": stats::mean(samples),
        "std_dev": stats::variance(samples).sqrt(),
        "std_error": stats::std_error(samples),
        "min": samples.iter().copied().fold(f64::INFINITY, f64::min),
        "max": samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Equal-width histogram over `[lo, hi]`; values outside are clamped.
pub(crate) fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Value {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        let b = if width > 0.0 { ((x - lo) / width).floor() } else { 0.0 };
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    serde_json::json!({ "lo": lo, "hi": hi, "counts": counts })
}

pub(crate) fn error_value(e: &Error) -> Value {
    serde_json::json!({ "error": e.to_string() })
}

/// Discretized, wired domain at scale `n`, rejecting interiors under 9
/// vertices.
pub(crate) fn wired_domain(shape: &DomainShape, n: f64) -> Result<WiredGraph> {
    let d = discretize_domain(shape, n)?;
    if d.len() < 9 {
        return Err(Error::Domain(format!(
            "interior at n = {n} has {} vertices; at least 9 are needed",
            d.len()
        )));
    }
    Ok(wire_boundary(d))
}

/// Dispatches on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Green => run_green(config),
        ExperimentKind::GffSample => run_gff_sample(config),
        ExperimentKind::Extremes => run_extremes(config),
        ExperimentKind::Cover => run_cover_time_experiment(config),
        ExperimentKind::PhaseA => run_phase_a_experiment(config),
        ExperimentKind::PhaseBRace => run_phase_b_race_experiment(config, &PlantedSet::default()),
        ExperimentKind::RayKnight => run_isomorphism_suite(config),
        ExperimentKind::OnedimLaws => run_onedim_laws_suite(config),
        ExperimentKind::Ballot => run_ballot_diagnostic(config),
        ExperimentKind::Race => run_race_check(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::new(ExperimentKind::Cover, DomainShape::UnitSquare, vec![2.5], RateConvention::One, 10, 1);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.out = Some("elsewhere".into());
        b.format = OutputFormat::Csv;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"rate\":\"1\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), a);
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::new(ExperimentKind::Cover, DomainShape::UnitSquare, vec![], RateConvention::One, 10, 1);
        assert!(c.validate().is_err());
        c.n = vec![2.0];
        c.replicas = 0;
        assert!(c.validate().is_err());
        c.replicas = 1;
        assert!(c.validate().is_ok());
        assert!(wired_domain(&DomainShape::UnitSquare, 1.5).is_err());
    }

    #[test]
    fn kinds_round_trip_names() {
        for k in ExperimentKind::ALL {
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(s, format!("\"{}\"", k.name()));
        }
    }
}
