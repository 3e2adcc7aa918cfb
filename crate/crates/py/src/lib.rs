//! Python module `covertime_py`.

use std::path::PathBuf;

use covertime::exact::green_matrix as exact_green;
use covertime::experiments::{persist, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, RateConvention};
use covertime::lattice::{discretize_domain, wire_boundary, DomainShape};
use covertime::onedim::CompoundSpec;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn runtime(e: covertime::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn shape(domain: &str, polygon: Option<Vec<[f64; 2]>>) -> PyResult<DomainShape> {
    let s = match (domain.split_once(':'), polygon) {
        (_, Some(vertices)) if domain == "polygon" => DomainShape::Polygon { vertices },
        (None, None) if domain == "square" => DomainShape::UnitSquare,
        (None, None) if domain == "disc" => DomainShape::UnitDisc,
        (Some(("annulus", r)), None) => DomainShape::Annulus {
            inner_radius: r.parse().map_err(|_| PyValueError::new_err(format!("bad annulus radius {r:?}")))?,
        },
        _ => {
            return Err(PyValueError::new_err(format!(
                "domain must be square, disc, annulus:R, or polygon with vertices; got {domain:?}"
            )))
        }
    };
    s.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(s)
}

fn rate(r: &str) -> PyResult<RateConvention> {
    RateConvention::parse(r).ok_or_else(|| PyValueError::new_err(format!("rate must be \"1\" or \"retuned\", got {r:?}")))
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Green function of the wired domain at scale `n`, as rows.
#[pyfunction]
#[pyo3(signature = (n, domain = "square", rate = "1", polygon = None))]
fn green_matrix(n: f64, domain: &str, rate: &str, polygon: Option<Vec<[f64; 2]>>) -> PyResult<Vec<Vec<f64>>> {
    let d = discretize_domain(&shape(domain, polygon)?, n).map_err(runtime)?;
    let g = wire_boundary(d);
    let m = exact_green(&g, self::rate(rate)?.value()).map_err(runtime)?;
    Ok((0..m.len()).map(|i| (0..m.len()).map(|j| m.get(i, j)).collect()).collect())
}

/// Exact pmf `P(S = s)` for `s = 0..len`, for `law` in bigeo or poigeo.
#[pyfunction]
#[pyo3(signature = (law, params, len))]
fn compound_pmf(law: &str, params: Vec<f64>, len: u64) -> PyResult<Vec<f64>> {
    let spec = match (law, params.as_slice()) {
        ("bigeo", &[n, p, q]) if n >= 0.0 && n.fract() == 0.0 => CompoundSpec::bigeo(n as u64, p, q),
        ("poigeo", &[mu, q]) => CompoundSpec::poigeo(mu, q),
        _ => return Err(PyValueError::new_err("expected bigeo [n, p, q] or poigeo [mu, q]")),
    }
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((0..len).map(|s| spec.pmf(s)).collect())
}

/// Runs one experiment. Returns a dict with the summary, the records, the
/// config hash and the records digest; with `out` the result is also
/// written there.
#[pyfunction]
#[pyo3(signature = (
    experiment, n = None, domain = "square", rate = "1", replicas = 100, seed = 0,
    t = None, u = None, overlay = false, polygon = None, out = None, format = "json"
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    experiment: &str,
    n: Option<Vec<f64>>,
    domain: &str,
    rate: &str,
    replicas: u64,
    seed: u64,
    t: Option<f64>,
    u: Option<f64>,
    overlay: bool,
    polygon: Option<Vec<[f64; 2]>>,
    out: Option<PathBuf>,
    format: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = ExperimentKind::parse(experiment)
        .ok_or_else(|| PyValueError::new_err(format!("unknown experiment {experiment:?}")))?;
    let mut cfg = ExperimentConfig::new(kind, shape(domain, polygon)?, n.unwrap_or_default(), self::rate(rate)?, replicas, seed);
    cfg.t = t;
    cfg.u = u;
    cfg.overlay = overlay;
    cfg.format = OutputFormat::parse(format).ok_or_else(|| PyValueError::new_err("format must be json or csv"))?;
    cfg.out = out;
    cfg.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| run_experiment(&cfg)).map_err(runtime)?;
    if let Some(dir) = &cfg.out {
        persist(&result, dir, cfg.format).map_err(runtime)?;
    }
    let v = serde_json::json!({
        "config": result.config,
        "config_hash": cfg.hash(),
        "records_sha256": result.records_digest(),
        "records": result.records,
        "summary": result.summary,
    });
    to_py(py, &v)
}

#[pymodule]
fn covertime_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(green_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(compound_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
