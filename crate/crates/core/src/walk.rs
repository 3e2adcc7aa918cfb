//! Event-driven continuous-time simple random walk on a [`WiredGraph`].
//!
//! The walk starts at the boundary vertex. Each sojourn at `v` lasts an
//! `Exp(rate * deg(v))` time, after which one of the edges at `v` is chosen
//! uniformly. Per sojourn the random stream is consumed in a fixed order: one
//! `Exp1` draw for the holding time, then one `random_range` draw for the
//! edge (skipped when the walk stops during that sojourn).
//!
//! Time is tracked both as real time and as `∂`-time, the local time
//! accumulated at the boundary vertex.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gff::{eval_centering, Centering};
use crate::lattice::{
    ball, cluster_process, floor_exp, inner_boundary, is_clustered, minimal_cover, outer_boundary, LatticeDomain,
    Point, WiredGraph, BOUNDARY,
};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy)]
pub struct WalkConfig<'g> {
    pub graph: &'g WiredGraph,
    pub rate: f64,
    pub seed: u64,
    pub replica: u64,
}

impl<'g> WalkConfig<'g> {
    pub fn new(graph: &'g WiredGraph, rate: f64, seed: u64, replica: u64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
        }
        if graph.is_empty() {
            return Err(Error::Domain("walk needs a nonempty interior".into()));
        }
        Ok(WalkConfig {
            graph,
            rate,
            seed,
            replica,
        })
    }

    pub fn with_replica(self, replica: u64) -> Self {
        WalkConfig { replica, ..self }
    }
}

/// One sojourn: the vertex (or [`BOUNDARY`]) and the time spent there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub vertex: u32,
    pub hold: f64,
}

/// Sojourn log. Binary layout: consecutive 12-byte records, each a
/// little-endian `u32` vertex index (`u32::MAX` for the boundary) followed by
/// a little-endian `f64` holding time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub const RECORD_BYTES: usize = 12;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.events.len() * Self::RECORD_BYTES);
        for e in &self.events {
            out.extend_from_slice(&e.vertex.to_le_bytes());
            out.extend_from_slice(&e.hold.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % Self::RECORD_BYTES != 0 {
            return Err(Error::InvalidParameter(format!(
                "event log length {} is not a multiple of {}",
                bytes.len(),
                Self::RECORD_BYTES
            )));
        }
        let events = bytes
            .chunks_exact(Self::RECORD_BYTES)
            .map(|c| Event {
                vertex: u32::from_le_bytes(c[..4].try_into().unwrap()),
                hold: f64::from_le_bytes(c[4..].try_into().unwrap()),
            })
            .collect();
        Ok(EventLog { events })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Hex SHA-256 of the binary form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Events up to the moment `∂`-time reaches `t`.
    fn prefix_until(&self, t: f64) -> &[Event] {
        let mut acc = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if e.vertex == BOUNDARY {
                acc += e.hold;
                if acc >= t {
                    return &self.events[..=i];
                }
            }
        }
        &self.events
    }
}

/// Occupation times at a fixed moment.
#[derive(Debug, Clone)]
pub struct LocalTimeField {
    domain: Arc<LatticeDomain>,
    /// Local time per interior vertex.
    pub interior: Vec<f64>,
    /// Local time at the boundary vertex, i.e. the elapsed `∂`-time.
    pub boundary: f64,
    /// Elapsed real time.
    pub real_time: f64,
}

impl LocalTimeField {
    pub fn new(domain: Arc<LatticeDomain>, interior: Vec<f64>, boundary: f64, real_time: f64) -> Self {
        LocalTimeField {
            domain,
            interior,
            boundary,
            real_time,
        }
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn boundary_time(&self) -> f64 {
        self.boundary
    }

    pub fn at(&self, p: Point) -> Option<f64> {
        self.domain.index_of(p).map(|i| self.interior[i])
    }

    /// `|sum of local times - real time| / real time`.
    pub fn conservation_error(&self) -> f64 {
        let total: f64 = self.interior.iter().sum::<f64>() + self.boundary;
        if self.real_time == 0.0 {
            total.abs()
        } else {
            (total - self.real_time).abs() / self.real_time
        }
    }
}

/// Newly accumulated state of one excursion from the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionTrace {
    /// Time spent at the boundary before leaving.
    pub boundary_hold: f64,
    /// Distinct interior vertices visited, in order of first visit.
    pub visited: Vec<Point>,
    /// Total time spent in the interior.
    pub interior_time: f64,
}

/// Stateful walker; the low-level engine behind the `run_*` functions.
pub struct Walker<'g> {
    g: &'g WiredGraph,
    rng: ChaCha8Rng,
    inv_interior: f64,
    inv_boundary: f64,
    pos: u32,
    local: Vec<f64>,
    boundary_local: f64,
    real_time: f64,
    log: Option<Vec<Event>>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl<'g> Walker<'g> {
    pub fn new(cfg: &WalkConfig<'g>) -> Self {
        let g = cfg.graph;
        Walker {
            g,
            rng: stream(cfg.seed, Stream::Walk, cfg.replica),
            inv_interior: 1.0 / (cfg.rate * g.degree() as f64),
            inv_boundary: 1.0 / (cfg.rate * g.boundary_degree() as f64),
            pos: BOUNDARY,
            local: vec![0.0; g.len()],
            boundary_local: 0.0,
            real_time: 0.0,
            log: None,
            stamp: Vec::new(),
            epoch: 0,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn position(&self) -> u32 {
        self.pos
    }

    pub fn boundary_time(&self) -> f64 {
        self.boundary_local
    }

    pub fn real_time(&self) -> f64 {
        self.real_time
    }

    #[inline]
    fn draw_hold(&mut self) -> f64 {
        let e: f64 = Exp1.sample(&mut self.rng);
        e * if self.pos == BOUNDARY {
            self.inv_boundary
        } else {
            self.inv_interior
        }
    }

    #[inline]
    fn draw_next(&mut self) -> u32 {
        if self.pos == BOUNDARY {
            let edges = self.g.boundary_edges();
            edges[self.rng.random_range(0..edges.len())]
        } else {
            let nb = self.g.neighbors(self.pos as usize);
            nb[self.rng.random_range(0..nb.len())]
        }
    }

    #[inline]
    fn accumulate(&mut self, h: f64) {
        if self.pos == BOUNDARY {
            self.boundary_local += h;
        } else {
            self.local[self.pos as usize] += h;
        }
        self.real_time += h;
        if let Some(log) = &mut self.log {
            log.push(Event {
                vertex: self.pos,
                hold: h,
            });
        }
    }

    /// One full sojourn followed by a jump.
    #[inline]
    fn step(&mut self) {
        let h = self.draw_hold();
        self.accumulate(h);
        self.pos = self.draw_next();
    }

    /// Runs until the `∂`-time reaches `t` (stopping mid-sojourn).
    pub fn advance_to_boundary_time(&mut self, t: f64) {
        if self.boundary_local >= t && self.pos == BOUNDARY {
            return;
        }
        loop {
            let h = self.draw_hold();
            if self.pos == BOUNDARY && self.boundary_local + h >= t {
                let dt = (t - self.boundary_local).max(0.0);
                self.accumulate(dt);
                self.boundary_local = t;
                return;
            }
            self.accumulate(h);
            self.pos = self.draw_next();
        }
    }

    /// One excursion: the boundary sojourn, then the interior path back to
    /// the boundary.
    pub fn run_excursion(&mut self) -> Result<ExcursionTrace> {
        if self.pos != BOUNDARY {
            return Err(Error::InvalidParameter("excursions start at the boundary".into()));
        }
        if self.stamp.is_empty() {
            self.stamp = vec![0; self.g.len()];
        }
        self.epoch += 1;
        let h = self.draw_hold();
        self.accumulate(h);
        self.pos = self.draw_next();
        let mut visited = Vec::new();
        let mut interior_time = 0.0;
        while self.pos != BOUNDARY {
            let v = self.pos as usize;
            if self.stamp[v] != self.epoch {
                self.stamp[v] = self.epoch;
                visited.push(self.g.position(v));
            }
            let h = self.draw_hold();
            interior_time += h;
            self.accumulate(h);
            self.pos = self.draw_next();
        }
        Ok(ExcursionTrace {
            boundary_hold: h,
            visited,
            interior_time,
        })
    }

    pub fn local_times(&self) -> LocalTimeField {
        LocalTimeField::new(
            self.g.shared_domain().clone(),
            self.local.clone(),
            self.boundary_local,
            self.real_time,
        )
    }

    pub fn take_log(&mut self) -> EventLog {
        EventLog {
            events: self.log.take().unwrap_or_default(),
        }
    }
}

pub fn run_to_boundary_time(cfg: &WalkConfig, t: f64) -> Result<LocalTimeField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let mut w = Walker::new(cfg);
    w.advance_to_boundary_time(t);
    Ok(w.local_times())
}

/// As [`run_to_boundary_time`], also returning the sojourn log.
pub fn record_to_boundary_time(cfg: &WalkConfig, t: f64) -> Result<(LocalTimeField, EventLog)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let mut w = Walker::new(cfg).with_log();
    w.advance_to_boundary_time(t);
    Ok((w.local_times(), w.take_log()))
}

#[derive(Debug, Clone)]
pub struct CoverResult {
    /// Real time at which the last interior vertex is first entered.
    pub real_time: f64,
    /// Cover `∂`-time: the boundary local time at that moment.
    pub boundary_time: f64,
    pub last_vertex: Point,
    /// Real time of the first visit to each interior vertex.
    pub first_visit: Vec<f64>,
    /// Local times at the end of the covering excursion, i.e. at the real
    /// time where the `∂`-time first exceeds the cover `∂`-time.
    pub local_times: LocalTimeField,
}

pub fn run_to_cover(cfg: &WalkConfig) -> Result<CoverResult> {
    let g = cfg.graph;
    let mut w = Walker::new(cfg);
    let mut first_visit = vec![f64::NAN; g.len()];
    let mut remaining = g.len();
    let (real_time, boundary_time, last) = loop {
        w.step();
        let p = w.pos;
        if p != BOUNDARY && first_visit[p as usize].is_nan() {
            first_visit[p as usize] = w.real_time;
            remaining -= 1;
            if remaining == 0 {
                break (w.real_time, w.boundary_local, p as usize);
            }
        }
    };
    while w.pos != BOUNDARY {
        w.step();
    }
    Ok(CoverResult {
        real_time,
        boundary_time,
        last_vertex: g.position(last),
        first_visit,
        local_times: w.local_times(),
    })
}

/// `{x in bulk : L(x) <= u}`.
pub fn low_local_time_set(ltf: &LocalTimeField, u: f64, bulk: &[Point]) -> Result<Vec<Point>> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!("u must be >= 0, got {u}")));
    }
    Ok(bulk
        .iter()
        .copied()
        .filter(|&p| ltf.at(p).is_some_and(|l| l <= u))
        .collect())
}

/// Downcrossings of an annulus `B(x;l)^c -> B(x;k)` and the entry and exit
/// points of the excursions that follow them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DowncrossingRecord {
    pub center: Point,
    pub inner_log_radius: f64,
    pub outer_log_radius: f64,
    pub count: u64,
    /// `count` times the annulus log-width (`l - k`, or `k^gamma` in an annuli family).
    pub normalized: f64,
    /// Entry points on the inner boundary of `B(x;k)`, centred at `x`.
    pub entries: Vec<Point>,
    /// Exit points on the outer boundary of `B(x;l)`, centred at `x`.
    pub exits: Vec<Point>,
}

impl DowncrossingRecord {
    /// `sqrt(normalized count)`, the first coordinate of the record vector.
    pub fn sqrt_normalized(&self) -> f64 {
        self.normalized.sqrt()
    }
}

fn check_closure_inside(g: &WiredGraph, x: Point, radius: i64) -> Result<()> {
    let b = ball(x, radius);
    if let Some(p) = b.iter().chain(outer_boundary(&b).iter()).find(|p| !g.domain().contains(**p)) {
        return Err(Error::Geometry(format!(
            "closure of B({x}; radius {radius}) leaves the domain at {p}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct AnnulusState {
    inner2: i64,
    outer2: i64,
    inside_phase: bool,
}

/// Single pass over `events` tracking several annuli at once.
fn scan_annuli(g: &WiredGraph, events: &[Event], x: Point, radii: &[(i64, i64)]) -> Vec<(u64, Vec<Point>, Vec<Point>)> {
    let mut st: Vec<AnnulusState> = radii
        .iter()
        .map(|&(a, b)| AnnulusState {
            inner2: a * a,
            outer2: b * b,
            inside_phase: false,
        })
        .collect();
    let mut out: Vec<(u64, Vec<Point>, Vec<Point>)> = vec![(0, Vec::new(), Vec::new()); radii.len()];
    for e in events {
        let d2 = if e.vertex == BOUNDARY {
            i64::MAX
        } else {
            (g.position(e.vertex as usize) - x).norm2()
        };
        for (s, o) in st.iter_mut().zip(out.iter_mut()) {
            if !s.inside_phase {
                if d2 <= s.inner2 {
                    s.inside_phase = true;
                    o.0 += 1;
                    o.1.push(g.position(e.vertex as usize) - x);
                }
            } else if d2 > s.outer2 {
                s.inside_phase = false;
                o.2.push(g.position(e.vertex as usize) - x);
            }
        }
    }
    out
}

/// `(x;k,l)`-downcrossings up to `∂`-time `t`, from a sojourn log.
pub fn downcrossing_counts(g: &WiredGraph, log: &EventLog, x: Point, k: f64, l: f64, t: f64) -> Result<DowncrossingRecord> {
    if !(0.0 <= k && k < l) {
        return Err(Error::InvalidParameter(format!("need 0 <= k < l, got k={k}, l={l}")));
    }
    check_closure_inside(g, x, floor_exp(l))?;
    let (count, entries, exits) = scan_annuli(g, log.prefix_until(t), x, &[(floor_exp(k), floor_exp(l))])
        .pop()
        .expect("one annulus");
    Ok(DowncrossingRecord {
        center: x,
        inner_log_radius: k,
        outer_log_radius: l,
        count,
        normalized: (l - k) * count as f64,
        entries,
        exits,
    })
}

/// Log-radii of `B^-[x;i]` and `B^+[x;i]`, `i = 1..=T`.
pub fn annulus_log_radii(k: f64, gamma: f64, big_t: usize) -> Vec<(f64, f64)> {
    let kg = k.powf(gamma);
    (1..=big_t)
        .map(|i| (k + (i as f64 - 1.0) * kg, k + i as f64 * kg - 4.0 * (-kg).exp()))
        .collect()
}

/// Checks `closure(B^+[i]) ⊂ B^-[i+1]` and
/// `e^{k+(i-1)k^γ} <= d(closure(B^+[i]), inner boundary of B^-[i+1]) <= 5 e^{k+(i-1)k^γ}`.
pub fn check_annuli_nesting(x: Point, k: f64, gamma: f64, big_t: usize) -> Result<()> {
    let radii = annulus_log_radii(k, gamma, big_t);
    for i in 0..big_t.saturating_sub(1) {
        let plus = ball(x, floor_exp(radii[i].1));
        let closure_edge = outer_boundary(&plus);
        let next_minus = floor_exp(radii[i + 1].0);
        if closure_edge.iter().any(|p| (*p - x).norm2() > next_minus * next_minus) {
            return Err(Error::Nesting {
                index: i + 1,
                reason: "closure of B+[i] is not inside B-[i+1]".into(),
            });
        }
        let inner = inner_boundary(&ball(x, next_minus));
        let d = closure_edge
            .iter()
            .flat_map(|a| inner.iter().map(move |b| (*a - *b).norm()))
            .fold(f64::INFINITY, f64::min);
        let scale = (k + i as f64 * k.powf(gamma)).exp();
        if !(scale <= d && d <= 5.0 * scale) {
            return Err(Error::Nesting {
                index: i + 1,
                reason: format!("separation {d:.3} outside [{scale:.3}, {:.3}]", 5.0 * scale),
            });
        }
    }
    Ok(())
}

/// Records `Z_t[x;i]` for the annuli `B^-[x;i] ⊂ B^+[x;i]`, `i = 1..=T`,
/// from one pass over the log. Normalized counts use the factor `k^gamma`.
pub fn annuli_records(
    g: &WiredGraph,
    log: &EventLog,
    x: Point,
    k: f64,
    gamma: f64,
    big_t: usize,
    t: f64,
) -> Result<Vec<DowncrossingRecord>> {
    if big_t == 0 || !(k > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need k > 0, gamma > 0, T >= 1; got k={k}, gamma={gamma}, T={big_t}"
        )));
    }
    let radii = annulus_log_radii(k, gamma, big_t);
    check_closure_inside(g, x, floor_exp(radii[big_t - 1].1))?;
    check_annuli_nesting(x, k, gamma, big_t)?;
    let int_radii: Vec<(i64, i64)> = radii.iter().map(|&(a, b)| (floor_exp(a), floor_exp(b))).collect();
    let kg = k.powf(gamma);
    Ok(scan_annuli(g, log.prefix_until(t), x, &int_radii)
        .into_iter()
        .zip(radii)
        .map(|((count, entries, exits), (a, b))| DowncrossingRecord {
            center: x,
            inner_log_radius: a,
            outer_log_radius: b,
            count,
            normalized: kg * count as f64,
            entries,
            exits,
        })
        .collect())
}

/// Phase-A observables at `∂`-time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub n: f64,
    pub t: f64,
    pub unvisited_bulk: usize,
    /// `|W| / sqrt(n)`.
    pub unvisited_scaled: f64,
    /// Clustering scale `r_n = n^{1/2 - eta0}`.
    pub cluster_scale: f64,
    /// Number of atoms of the cluster process at scale `r_n`.
    pub cluster_count: usize,
    pub cluster_count_scaled: f64,
    pub cover_minimal: bool,
    /// Whether `W` is `(r_n, n - r_n)`-clustered.
    pub clustered: bool,
    /// `(T_t / |D| - t) / (2 sqrt t)` with `T_t` the real time.
    pub time_fluctuation: f64,
    pub real_time: f64,
    pub unvisited: Vec<Point>,
}

/// Default exponent in `r_n = n^{1/2 - eta0}`.
pub const ETA0: f64 = 0.1;

pub fn clustering_scale(n: f64) -> f64 {
    n.powf(0.5 - ETA0)
}

/// Runs to `∂`-time `t` and collects the unvisited bulk, its cluster process
/// and the running-time fluctuation. `bulk` is the bulk of the walk's domain.
pub fn phase_observables_at(cfg: &WalkConfig, n: f64, t: f64, bulk: &[Point]) -> Result<PhaseRecord> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("phase time must be positive, got {t}")));
    }
    let ltf = run_to_boundary_time(cfg, t)?;
    let w = low_local_time_set(&ltf, 0.0, bulk)?;
    let r = clustering_scale(n);
    let (cluster_count, cover_minimal) = if w.is_empty() {
        (0, true)
    } else {
        let c = minimal_cover(&w, r)?;
        (c.centers.len(), c.minimal)
    };
    debug_assert_eq!(cluster_process(&w, r, n)?.total_mass() as usize, cluster_count);
    let size = cfg.graph.len() as f64;
    Ok(PhaseRecord {
        n,
        t,
        unvisited_bulk: w.len(),
        unvisited_scaled: w.len() as f64 / n.sqrt(),
        cluster_scale: r,
        cluster_count,
        cluster_count_scaled: cluster_count as f64 / n.sqrt(),
        cover_minimal,
        clustered: is_clustered(&w, r, n - r),
        time_fluctuation: (ltf.real_time / size - t) / (2.0 * t.sqrt()),
        real_time: ltf.real_time,
        unvisited: w,
    })
}

/// Phase-A observables at `t = t_n^A`.
pub fn phase_observables(cfg: &WalkConfig, n: f64, bulk: &[Point]) -> Result<PhaseRecord> {
    if !(n >= 2.0) {
        return Err(Error::InvalidParameter(format!("phase A needs n >= 2, got {n}")));
    }
    let t = eval_centering(n, Centering::RetunedMinimum)?.powi(2);
    phase_observables_at(cfg, n, t, bulk)
}
