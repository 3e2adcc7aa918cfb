//! Lattice domains, the wired graph, log-scale geometry and clustering.
//!
//! Vertices are kept in untranslated `Z^2` coordinates. Length parameters are
//! given on a logarithmic scale: a log-radius `r` stands for the integer radius
//! `floor(e^r)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex of `Z^2`. Ordering is lexicographic in `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }

    pub fn norm2(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// Supremum norm.
    pub fn sup_norm(self) -> i64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn neighbors(self) -> [Point; 4] {
        [
            Point::new(self.x + 1, self.y),
            Point::new(self.x - 1, self.y),
            Point::new(self.x, self.y + 1),
            Point::new(self.x, self.y - 1),
        ]
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// `floor(e^r)`, snapping values that are within rounding error of an integer
/// (so that `floor_exp(ln 8) == 8`).
pub fn floor_exp(r: f64) -> i64 {
    let v = r.exp();
    let k = v.round();
    if (v - k).abs() <= 1e-9 * v.max(1.0) {
        k as i64
    } else {
        v.floor() as i64
    }
}

/// Continuum domain shapes. The unit square is `[0,1]^2`; the disc, annulus
/// and any polygon are taken as given in the plane (disc and annulus centred
/// at the origin, outer radius 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainShape {
    UnitSquare,
    UnitDisc,
    Annulus { inner_radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl DomainShape {
    pub fn validate(&self) -> Result<()> {
        match self {
            DomainShape::UnitSquare | DomainShape::UnitDisc => Ok(()),
            DomainShape::Annulus { inner_radius } => {
                if *inner_radius > 0.0 && *inner_radius < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidShape(format!(
                        "annulus inner radius must lie in (0, 1), got {inner_radius}"
                    )))
                }
            }
            DomainShape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidShape("polygon needs at least 3 vertices".into()));
                }
                if vertices.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidShape("polygon vertices must be finite".into()));
                }
                if polygon_area(vertices).abs() < 1e-12 {
                    return Err(Error::InvalidShape("polygon has zero area".into()));
                }
                Ok(())
            }
        }
    }

    /// Lebesgue measure of the continuum domain.
    pub fn area(&self) -> f64 {
        match self {
            DomainShape::UnitSquare => 1.0,
            DomainShape::UnitDisc => std::f64::consts::PI,
            DomainShape::Annulus { inner_radius } => std::f64::consts::PI * (1.0 - inner_radius * inner_radius),
            DomainShape::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            DomainShape::UnitSquare => ([0.0, 0.0], [1.0, 1.0]),
            DomainShape::UnitDisc | DomainShape::Annulus { .. } => ([-1.0, -1.0], [1.0, 1.0]),
            DomainShape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Whether `d(p/N, D^c) > 1/N`, evaluated in the N-scaled plane.
    fn admits(&self, side: i64, p: Point) -> bool {
        match self {
            DomainShape::UnitSquare => p.x.min(side - p.x).min(p.y).min(side - p.y) > 1,
            DomainShape::UnitDisc => side > 1 && p.norm2() < (side - 1) * (side - 1),
            DomainShape::Annulus { inner_radius } => {
                let inner = inner_radius * side as f64 + 1.0;
                side > 1 && p.norm2() < (side - 1) * (side - 1) && (p.norm2() as f64) > inner * inner
            }
            DomainShape::Polygon { vertices } => {
                let s = side as f64;
                let scaled: Vec<[f64; 2]> = vertices.iter().map(|v| [v[0] * s, v[1] * s]).collect();
                let q = [p.x as f64, p.y as f64];
                point_in_polygon(&scaled, q) && distance_to_polygon_boundary(&scaled, q) > 1.0
            }
        }
    }

    fn label(&self) -> String {
        match self {
            DomainShape::UnitSquare => "unit-square".into(),
            DomainShape::UnitDisc => "unit-disc".into(),
            DomainShape::Annulus { inner_radius } => format!("annulus({inner_radius})"),
            DomainShape::Polygon { vertices } => format!("polygon({} vertices)", vertices.len()),
        }
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_polygon(v: &[[f64; 2]], q: [f64; 2]) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > q[1]) != (b[1] > q[1]) {
            let xc = a[0] + (q[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if q[0] < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn distance_to_polygon_boundary(v: &[[f64; 2]], q: [f64; 2]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 {
                (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let c = [a[0] + t * d[0] - q[0], a[1] + t * d[1] - q[1]];
            (c[0] * c[0] + c[1] * c[1]).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Dense lookup table from lattice points to vertex indices.
#[derive(Debug, Clone)]
struct IndexGrid {
    x0: i64,
    y0: i64,
    width: i64,
    height: i64,
    slots: Vec<u32>,
}

impl IndexGrid {
    const EMPTY: u32 = u32::MAX;

    fn build(vertices: &[Point]) -> Self {
        let x0 = vertices.iter().map(|p| p.x).min().unwrap_or(0);
        let y0 = vertices.iter().map(|p| p.y).min().unwrap_or(0);
        let x1 = vertices.iter().map(|p| p.x).max().unwrap_or(-1);
        let y1 = vertices.iter().map(|p| p.y).max().unwrap_or(-1);
        let width = (x1 - x0 + 1).max(0);
        let height = (y1 - y0 + 1).max(0);
        let mut slots = vec![Self::EMPTY; (width * height) as usize];
        for (i, p) in vertices.iter().enumerate() {
            slots[((p.y - y0) * width + (p.x - x0)) as usize] = i as u32;
        }
        IndexGrid {
            x0,
            y0,
            width,
            height,
            slots,
        }
    }

    fn get(&self, p: Point) -> Option<usize> {
        let (dx, dy) = (p.x - self.x0, p.y - self.y0);
        if dx < 0 || dy < 0 || dx >= self.width || dy >= self.height {
            return None;
        }
        match self.slots[(dy * self.width + dx) as usize] {
            Self::EMPTY => None,
            i => Some(i as usize),
        }
    }
}

/// The interior vertex set `D_N`, with `N = floor(e^n)`.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    n: f64,
    side: i64,
    shape: Option<DomainShape>,
    vertices: Vec<Point>,
    grid: IndexGrid,
}

/// Compact JSON description of a domain for experiment manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub shape: Option<DomainShape>,
    pub n: f64,
    pub vertex_count: usize,
}

impl LatticeDomain {
    /// Builds a domain from an explicit vertex set (small test graphs,
    /// corridors). `n` only sets the scale used for positions and the bulk.
    pub fn from_vertices(n: f64, vertices: impl IntoIterator<Item = Point>) -> Result<Self> {
        if !(n >= 0.0) {
            return Err(Error::InvalidParameter(format!("n must be >= 0, got {n}")));
        }
        let mut vertices: Vec<Point> = vertices.into_iter().collect();
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.is_empty() {
            return Err(Error::EmptyInterior {
                shape: "explicit vertex set".into(),
                side: floor_exp(n) as u64,
            });
        }
        let grid = IndexGrid::build(&vertices);
        Ok(LatticeDomain {
            n,
            side: floor_exp(n),
            shape: None,
            vertices,
            grid,
        })
    }

    /// The discretized unit square with a `side x side` block of interior
    /// vertices (`N = side + 3`).
    pub fn square(side: usize) -> Result<Self> {
        discretize_domain(&DomainShape::UnitSquare, ((side + 3) as f64).ln())
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    /// `N = floor(e^n)`.
    pub fn side(&self) -> i64 {
        self.side
    }

    pub fn shape(&self) -> Option<&DomainShape> {
        self.shape.as_ref()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, p: Point) -> Option<usize> {
        self.grid.get(p)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.grid.get(p).is_some()
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        DomainDescriptor {
            shape: self.shape.clone(),
            n: self.n,
            vertex_count: self.vertices.len(),
        }
    }

    /// Vertex closest to the barycentre (ties broken lexicographically).
    pub fn central_vertex(&self) -> Point {
        let k = self.vertices.len() as f64;
        let cx = self.vertices.iter().map(|p| p.x as f64).sum::<f64>() / k;
        let cy = self.vertices.iter().map(|p| p.y as f64).sum::<f64>() / k;
        *self
            .vertices
            .iter()
            .min_by(|a, b| {
                let da = (a.x as f64 - cx).powi(2) + (a.y as f64 - cy).powi(2);
                let db = (b.x as f64 - cx).powi(2) + (b.y as f64 - cy).powi(2);
                da.total_cmp(&db).then(a.cmp(b))
            })
            .expect("domain is nonempty")
    }
}

/// `D_N = { x in Z^2 : d(x/N, D^c) > 1/N }` with `N = floor(e^n)`.
pub fn discretize_domain(shape: &DomainShape, n: f64) -> Result<LatticeDomain> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("n must be finite and >= 0, got {n}")));
    }
    shape.validate()?;
    let side = floor_exp(n);
    let (lo, hi) = shape.bounding_box();
    let s = side as f64;
    let (xa, xb) = ((lo[0] * s).floor() as i64, (hi[0] * s).ceil() as i64);
    let (ya, yb) = ((lo[1] * s).floor() as i64, (hi[1] * s).ceil() as i64);
    let mut vertices = Vec::new();
    for x in xa..=xb {
        for y in ya..=yb {
            let p = Point::new(x, y);
            if shape.admits(side, p) {
                vertices.push(p);
            }
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyInterior {
            shape: shape.label(),
            side: side as u64,
        });
    }
    vertices.sort_unstable();
    let grid = IndexGrid::build(&vertices);
    Ok(LatticeDomain {
        n,
        side,
        shape: Some(shape.clone()),
        vertices,
        grid,
    })
}

/// Sentinel node id for the contracted boundary vertex.
pub const BOUNDARY: u32 = u32::MAX;

/// `D_N` together with its outer boundary contracted to one vertex.
///
/// Each interior vertex keeps its four lattice edges; an edge leaving the
/// interior points to [`BOUNDARY`]. The boundary vertex holds one entry per
/// such edge, so `deg(boundary)` counts multiplicities. [`WiredGraph::path`]
/// builds the one-dimensional variant where vertices have degree 2.
#[derive(Debug, Clone)]
pub struct WiredGraph {
    domain: Arc<LatticeDomain>,
    neighbors: Vec<[u32; 4]>,
    degree: u8,
    boundary_edges: Vec<u32>,
    fingerprint: u64,
}

pub fn wire_boundary(domain: LatticeDomain) -> WiredGraph {
    let mut neighbors = Vec::with_capacity(domain.len());
    let mut boundary_edges = Vec::new();
    for (i, p) in domain.vertices().iter().enumerate() {
        let mut row = [BOUNDARY; 4];
        for (slot, q) in p.neighbors().into_iter().enumerate() {
            match domain.index_of(q) {
                Some(j) => row[slot] = j as u32,
                None => boundary_edges.push(i as u32),
            }
        }
        neighbors.push(row);
    }
    let fingerprint = fingerprint(domain.vertices());
    WiredGraph {
        domain: Arc::new(domain),
        neighbors,
        degree: 4,
        boundary_edges,
        fingerprint,
    }
}

fn fingerprint(vertices: &[Point]) -> u64 {
    // FNV-1a over the sorted coordinates.
    let mut h: u64 = 0xcbf29ce484222325;
    for p in vertices {
        for b in p.x.to_le_bytes().into_iter().chain(p.y.to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl WiredGraph {
    /// The wired path `0 - 1 - ... - len - (len+1)` with both ends contracted
    /// to the boundary; interior vertices sit at `(1, 0), ..., (len, 0)`.
    pub fn path(len: usize) -> Result<Self> {
        let domain = LatticeDomain::from_vertices(1.0, (1..=len as i64).map(|k| Point::new(k, 0)))?;
        let mut neighbors = Vec::with_capacity(len);
        for i in 0..len {
            let left = if i == 0 { BOUNDARY } else { i as u32 - 1 };
            let right = if i + 1 == len { BOUNDARY } else { i as u32 + 1 };
            neighbors.push([left, right, BOUNDARY, BOUNDARY]);
        }
        let boundary_edges = if len == 1 { vec![0, 0] } else { vec![0, len as u32 - 1] };
        let fingerprint = fingerprint(domain.vertices()) ^ 0x9e3779b97f4a7c15;
        Ok(WiredGraph {
            domain: Arc::new(domain),
            neighbors,
            degree: 2,
            boundary_edges,
            fingerprint,
        })
    }

    pub fn domain(&self) -> &LatticeDomain {
        &self.domain
    }

    pub fn shared_domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    /// Number of interior vertices.
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// The lattice neighbours of interior vertex `i`, [`BOUNDARY`] for
    /// edges to the contracted boundary.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i][..self.degree as usize]
    }

    /// Total degree of every interior vertex (4, or 2 for paths).
    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    /// One entry per edge from the boundary vertex into the interior.
    pub fn boundary_edges(&self) -> &[u32] {
        &self.boundary_edges
    }

    pub fn boundary_degree(&self) -> usize {
        self.boundary_edges.len()
    }

    /// Number of lattice edges from interior vertex `i` to the boundary.
    pub fn multiplicity(&self, i: usize) -> usize {
        self.neighbors(i).iter().filter(|&&j| j == BOUNDARY).count()
    }

    pub fn interior_degree(&self, i: usize) -> usize {
        self.degree() - self.multiplicity(i)
    }

    /// Total number of edges of the wired graph (counting multiplicity).
    pub fn edge_count(&self) -> usize {
        let interior: usize = (0..self.len()).map(|i| self.interior_degree(i)).sum();
        interior / 2 + self.boundary_degree()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn position(&self, i: usize) -> Point {
        self.domain.vertices()[i]
    }

    pub fn index_of(&self, p: Point) -> Option<usize> {
        self.domain.index_of(p)
    }
}

/// Ball (Euclidean) or box (half-open square) of log-size `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    LogBall,
    LogBox,
}

/// `B(x;r) = { y : |x-y| <= floor(e^r) }` or
/// `Q(x;r) = { y : x-y in (-s/2, s/2]^2 }` with `s = floor(e^r)`.
pub fn geometry_query(x: Point, r: f64, kind: GeometryKind) -> Vec<Point> {
    match kind {
        GeometryKind::LogBall => ball(x, floor_exp(r.max(0.0))),
        GeometryKind::LogBox => {
            let s = floor_exp(r.max(0.0));
            // x - y = d with d in (-s/2, s/2], i.e. 2d in (-s, s].
            let offsets: Vec<i64> = (-s..=s).filter(|d| -s < 2 * d && 2 * d <= s).collect();
            let mut out = Vec::with_capacity(offsets.len() * offsets.len());
            for &dx in &offsets {
                for &dy in &offsets {
                    out.push(Point::new(x.x - dx, x.y - dy));
                }
            }
            out.sort_unstable();
            out
        }
    }
}

/// Lattice points within Euclidean distance `radius` of `x`.
pub fn ball(x: Point, radius: i64) -> Vec<Point> {
    let mut out = Vec::new();
    for dx in -radius..=radius {
        for dy in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                out.push(Point::new(x.x + dx, x.y + dy));
            }
        }
    }
    out
}

/// Outer boundary: lattice points outside `set` adjacent to it.
pub fn outer_boundary(set: &[Point]) -> Vec<Point> {
    let members: std::collections::HashSet<Point> = set.iter().copied().collect();
    let mut out: Vec<Point> = set
        .iter()
        .flat_map(|p| p.neighbors())
        .filter(|q| !members.contains(q))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Inner boundary: points of `set` adjacent to its complement.
pub fn inner_boundary(set: &[Point]) -> Vec<Point> {
    let members: std::collections::HashSet<Point> = set.iter().copied().collect();
    let mut out: Vec<Point> = set
        .iter()
        .copied()
        .filter(|p| p.neighbors().iter().any(|q| !members.contains(q)))
        .collect();
    out.sort_unstable();
    out
}

/// Bulk margin `e^n / n^2` (the log-radius `n - 2 log n` read as a length).
pub fn bulk_margin(n: f64) -> f64 {
    (n - 2.0 * n.ln()).exp()
}

/// `{ x in D_n : d(x, D_n^c) > e^n / n^2 }`, distances to lattice points
/// outside the domain.
pub fn bulk_vertices(domain: &LatticeDomain) -> Vec<Point> {
    let n = domain.n();
    if n <= 0.0 {
        return Vec::new();
    }
    let margin = bulk_margin(n);
    let m = margin.floor() as i64;
    let m2 = margin * margin;
    domain
        .vertices()
        .iter()
        .copied()
        .filter(|&p| {
            for dx in -m..=m {
                for dy in -m..=m {
                    if ((dx * dx + dy * dy) as f64) <= m2 && !domain.contains(Point::new(p.x + dx, p.y + dy)) {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// `log|x-y|` never falls in the open gap `(r, R)`.
pub fn is_clustered(set: &[Point], r: f64, big_r: f64) -> bool {
    for (i, a) in set.iter().enumerate() {
        for b in &set[i + 1..] {
            let d2 = (*a - *b).norm2();
            if d2 == 0 {
                continue;
            }
            let l = 0.5 * (d2 as f64).ln();
            if l > r && l < big_r {
                return false;
            }
        }
    }
    true
}

/// A set of ball centres whose log-radius-`r` balls cover a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCover {
    pub radius_log: f64,
    pub centers: Vec<Point>,
    /// Size of the covered set.
    pub covered: usize,
    /// `true` when the cover is provably minimal (one ball per cluster of a
    /// clustered input), `false` for the greedy fallback.
    pub minimal: bool,
}

impl ClusterCover {
    pub fn covers(&self, set: &[Point]) -> bool {
        let rad = floor_exp(self.radius_log);
        set.iter()
            .all(|p| self.centers.iter().any(|c| (*p - *c).norm2() <= rad * rad))
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Components of `set` under `log|x-y| <= r`, each sorted, ordered by their
/// smallest member.
pub fn log_distance_components(set: &[Point], r: f64) -> Vec<Vec<Point>> {
    let mut pts = set.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let thr = r.exp();
    let thr2 = thr * thr;
    let mut uf = UnionFind::new(pts.len());
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if ((pts[i] - pts[j]).norm2() as f64) <= thr2 {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Point>> = Default::default();
    for i in 0..pts.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(pts[i]);
    }
    groups.into_values().collect()
}

fn single_center(component: &[Point], rad: i64) -> Option<Point> {
    let covers = |c: Point| component.iter().all(|p| (*p - c).norm2() <= rad * rad);
    if let Some(&c) = component.iter().find(|&&c| covers(c)) {
        return Some(c);
    }
    let x0 = component.iter().map(|p| p.x).min()?;
    let x1 = component.iter().map(|p| p.x).max()?;
    let y0 = component.iter().map(|p| p.y).min()?;
    let y1 = component.iter().map(|p| p.y).max()?;
    (x0..=x1)
        .flat_map(|x| (y0..=y1).map(move |y| Point::new(x, y)))
        .find(|&c| covers(c))
}

fn greedy_cover(set: &[Point], rad: i64) -> Vec<Point> {
    let mut pts = set.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let mut covered = vec![false; pts.len()];
    let mut centers = Vec::new();
    for i in 0..pts.len() {
        if covered[i] {
            continue;
        }
        let c = pts[i];
        centers.push(c);
        for (j, p) in pts.iter().enumerate() {
            if (*p - c).norm2() <= rad * rad {
                covered[j] = true;
            }
        }
    }
    centers
}

/// Minimal `r`-cover. Exact (one centre per log-distance component, centres
/// taken from the set when possible) whenever the input is
/// `(r, r + log 4)`-clustered and every component fits in one ball; greedy
/// otherwise, with `minimal = false`.
pub fn minimal_cover(set: &[Point], r: f64) -> Result<ClusterCover> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("minimal_cover needs a nonempty set".into()));
    }
    let rad = floor_exp(r);
    let covered = set.len();
    if is_clustered(set, r, r + 4f64.ln()) {
        let comps = log_distance_components(set, r);
        let centers: Option<Vec<Point>> = comps.iter().map(|c| single_center(c, rad)).collect();
        if let Some(centers) = centers {
            return Ok(ClusterCover {
                radius_log: r,
                centers,
                covered,
                minimal: true,
            });
        }
    }
    Ok(ClusterCover {
        radius_log: r,
        centers: greedy_cover(set, rad),
        covered,
        minimal: false,
    })
}

/// A finite measure made of weighted atoms in the plane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<([f64; 2], f64)>,
}

impl DiscreteMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn normalized(&self) -> DiscreteMeasure {
        let m = self.total_mass();
        DiscreteMeasure {
            atoms: self.atoms.iter().map(|&(p, w)| (p, w / m)).collect(),
        }
    }
}

/// `sum_{z in cover} delta_{e^{-n} z}`; the zero measure for an empty set.
pub fn cluster_process(set: &[Point], r: f64, n: f64) -> Result<DiscreteMeasure> {
    if set.is_empty() {
        return Ok(DiscreteMeasure::default());
    }
    let cover = minimal_cover(set, r)?;
    let scale = (-n).exp();
    Ok(DiscreteMeasure {
        atoms: cover
            .centers
            .iter()
            .map(|c| ([c.x as f64 * scale, c.y as f64 * scale], 1.0))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Vertex set from the closed-form distance to the complement.
    fn brute_vertex_set(shape: &DomainShape, side: i64) -> Vec<Point> {
        let s = side as f64;
        let inside = |x: f64, y: f64| match shape {
            DomainShape::UnitSquare => x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0,
            DomainShape::UnitDisc => x * x + y * y < 1.0,
            _ => unreachable!(),
        };
        let dist = |x: f64, y: f64| -> f64 {
            if !inside(x, y) {
                return 0.0;
            }
            match shape {
                DomainShape::UnitSquare => x.min(1.0 - x).min(y).min(1.0 - y),
                DomainShape::UnitDisc => 1.0 - (x * x + y * y).sqrt(),
                _ => unreachable!(),
            }
        };
        let mut out = Vec::new();
        for x in -side..=side {
            for y in -side..=side {
                let d = dist(x as f64 / s, y as f64 / s) * s;
                if d > 1.0 + 1e-9 {
                    out.push(Point::new(x, y));
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn square_at_log8_matches_enumeration() {
        let d = discretize_domain(&DomainShape::UnitSquare, 8f64.ln()).unwrap();
        assert_eq!(d.side(), 8);
        assert_eq!(d.vertices(), brute_vertex_set(&DomainShape::UnitSquare, 8).as_slice());
        // Strict inequality leaves {2..6}^2.
        assert_eq!(d.len(), 25);
        assert!(d.vertices().iter().all(|p| (2..=6).contains(&p.x) && (2..=6).contains(&p.y)));
    }

    #[test]
    fn n_zero_is_empty_interior() {
        let err = discretize_domain(&DomainShape::UnitSquare, 0.0).unwrap_err();
        assert!(matches!(err, Error::EmptyInterior { .. }));
    }

    #[test]
    fn disc_at_log16_matches_enumeration() {
        let d = discretize_domain(&DomainShape::UnitDisc, 16f64.ln()).unwrap();
        let brute = brute_vertex_set(&DomainShape::UnitDisc, 16);
        assert_eq!(d.len(), brute.len());
        assert_eq!(d.vertices(), brute.as_slice());
    }

    #[test]
    fn annulus_and_polygon() {
        assert!(DomainShape::Annulus { inner_radius: 1.0 }.validate().is_err());
        let a = discretize_domain(&DomainShape::Annulus { inner_radius: 0.3 }, 32f64.ln()).unwrap();
        assert!(!a.contains(Point::new(0, 0)));
        assert!(a.contains(Point::new(20, 0)));
        let sq = DomainShape::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        let p = discretize_domain(&sq, 20f64.ln()).unwrap();
        let u = discretize_domain(&DomainShape::UnitSquare, 20f64.ln()).unwrap();
        assert_eq!(p.vertices(), u.vertices());
    }

    #[test]
    fn square_helper_gives_requested_block() {
        for side in [1, 2, 7, 9, 13] {
            let d = LatticeDomain::square(side).unwrap();
            assert_eq!(d.len(), side * side);
        }
    }

    #[test]
    fn density_of_square_approaches_one() {
        for n in [64f64, 100.0, 200.0] {
            let d = discretize_domain(&DomainShape::UnitSquare, n.ln()).unwrap();
            let ratio = d.len() as f64 / (n * n);
            assert!((0.9..=1.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn wiring_single_vertex() {
        let g = wire_boundary(LatticeDomain::from_vertices(1.0, [Point::new(0, 0)]).unwrap());
        assert_eq!(g.multiplicity(0), 4);
        assert_eq!(g.boundary_degree(), 4);
    }

    #[test]
    fn wiring_two_vertex_path() {
        let g = wire_boundary(LatticeDomain::from_vertices(1.0, [Point::new(0, 0), Point::new(1, 0)]).unwrap());
        assert_eq!(g.multiplicity(0), 3);
        assert_eq!(g.multiplicity(1), 3);
        assert_eq!(g.boundary_degree(), 6);
    }

    #[test]
    fn wired_path() {
        let g = WiredGraph::path(2).unwrap();
        assert_eq!(g.degree(), 2);
        assert_eq!(g.multiplicity(0), 1);
        assert_eq!(g.boundary_degree(), 2);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(WiredGraph::path(1).unwrap().multiplicity(0), 2);
    }

    #[test]
    fn wiring_seven_square() {
        let g = wire_boundary(LatticeDomain::square(7).unwrap());
        // Border edges counted by enumeration of the block.
        let brute: usize = g
            .domain()
            .vertices()
            .iter()
            .map(|p| p.neighbors().iter().filter(|q| !g.domain().contains(**q)).count())
            .sum();
        assert_eq!(g.boundary_degree(), brute);
        assert_eq!(g.boundary_degree(), 28);
        for i in 0..g.len() {
            assert_eq!(g.interior_degree(i) + g.multiplicity(i), 4);
        }
        assert_eq!(4 * g.len() + g.boundary_degree(), 2 * g.edge_count());
    }

    #[test]
    fn geometry_examples() {
        let o = Point::new(0, 0);
        assert_eq!(geometry_query(o, 0.0, GeometryKind::LogBall).len(), 5);
        let b = geometry_query(o, 2f64.ln(), GeometryKind::LogBox);
        assert_eq!(b.len(), 4);
        assert_eq!(
            b,
            vec![Point::new(-1, -1), Point::new(-1, 0), Point::new(0, -1), Point::new(0, 0)]
        );
        assert!(geometry_query(Point::new(3, 4), 5f64.ln(), GeometryKind::LogBall).contains(&o));
        // Odd sides are centred.
        let b3 = geometry_query(o, 3f64.ln(), GeometryKind::LogBox);
        assert_eq!(b3.len(), 9);
        assert!(b3.iter().all(|p| p.sup_norm() <= 1));
    }

    #[test]
    fn bulk_at_log8_square_is_two_steps_in() {
        // n = ln 12 gives the 9x9 block {2..10}^2; margin 12 / ln(12)^2 = 1.94.
        let d = LatticeDomain::square(9).unwrap();
        let bulk = bulk_vertices(&d);
        // Distance transform by brute force over the whole complement box.
        let margin = bulk_margin(d.n());
        let brute: Vec<Point> = d
            .vertices()
            .iter()
            .copied()
            .filter(|p| {
                let mut best = f64::INFINITY;
                for x in -5..20 {
                    for y in -5..20 {
                        let q = Point::new(x, y);
                        if !d.contains(q) {
                            best = best.min((*p - q).norm());
                        }
                    }
                }
                best > margin
            })
            .collect();
        assert_eq!(bulk, brute);
        assert_eq!(bulk.len(), 49);
        let d8 = discretize_domain(&DomainShape::UnitSquare, 8f64.ln()).unwrap();
        let b8 = bulk_vertices(&d8);
        assert!((bulk_margin(d8.n()) - 1.85).abs() < 0.01);
        assert!(b8.iter().all(|p| (3..=5).contains(&p.x) && (3..=5).contains(&p.y)));
        assert!(b8.iter().all(|p| d8.contains(*p)));
    }

    #[test]
    fn tiny_domain_has_empty_bulk() {
        let d = LatticeDomain::from_vertices(0.5, [Point::new(0, 0)]).unwrap();
        assert!(bulk_vertices(&d).is_empty());
    }

    #[test]
    fn clustering_examples() {
        let (r, big_r) = (1.0, 3.0);
        assert!(is_clustered(&[Point::new(0, 0)], r, big_r));
        let gap = floor_exp((r + big_r) / 2.0);
        assert!(!is_clustered(&[Point::new(0, 0), Point::new(0, gap)], r, big_r));
        let mut s = vec![Point::new(0, 0), Point::new(1, 0), Point::new(0, 1)];
        s.extend([Point::new(40, 0), Point::new(41, 1)]);
        assert!(is_clustered(&s, r, big_r));
    }

    #[test]
    fn cover_of_three_separated_clumps() {
        let r = 1.5;
        let mut s = Vec::new();
        for c in [Point::new(0, 0), Point::new(100, 0), Point::new(0, 100)] {
            s.extend([c, c + Point::new(1, 0), c + Point::new(1, 2)]);
        }
        let cover = minimal_cover(&s, r).unwrap();
        assert!(cover.minimal);
        assert_eq!(cover.centers.len(), log_distance_components(&s, r).len());
        assert_eq!(cover.centers.len(), 3);
        assert!(cover.centers.iter().all(|c| s.contains(c)));
        assert!(cover.covers(&s));
        let mu = cluster_process(&s, r, 100f64.ln()).unwrap();
        assert_eq!(mu.total_mass(), 3.0);
        assert!(mu.atoms.iter().any(|(p, _)| (p[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn cover_of_single_clump_and_chain() {
        let s = vec![Point::new(5, 5), Point::new(6, 5)];
        let cover = minimal_cover(&s, 1.0).unwrap();
        assert_eq!(cover.centers.len(), 1);
        assert!(s.contains(&cover.centers[0]));
        let mu = cluster_process(&[Point::new(10, 20)], 1.0, 10f64.ln()).unwrap();
        assert_eq!(mu.atoms.len(), 1);
        let ([x, y], w) = mu.atoms[0];
        assert!((x - 1.0).abs() < 1e-12 && (y - 2.0).abs() < 1e-12 && w == 1.0);
        assert_eq!(cluster_process(&[], 1.0, 1.0).unwrap().total_mass(), 0.0);

        let r = 2f64.ln();
        let chain: Vec<Point> = (0..10).map(|i| Point::new(2 * i, 0)).collect();
        let cover = minimal_cover(&chain, r).unwrap();
        assert!(!cover.minimal);
        assert!(cover.centers.len() <= chain.len());
        assert!(cover.covers(&chain));
    }

    proptest! {
        #[test]
        fn prop_discretization_is_monotone(a in 1.0f64..4.0, b in 0.0f64..1.0) {
            let small = discretize_domain(&DomainShape::UnitDisc, a);
            let large = discretize_domain(&DomainShape::UnitDisc, a + b).unwrap();
            if let Ok(small) = small {
                prop_assert!(small.len() <= large.len());
            }
        }

        #[test]
        fn prop_clustered_cover_is_separated(
            centers in proptest::collection::btree_set((0i64..6, 0i64..6), 1..6),
            jitter in proptest::collection::vec((0i64..2, 0i64..2), 6),
        ) {
            let r = 1.2;
            let mut s = Vec::new();
            for (k, &(cx, cy)) in centers.iter().enumerate() {
                let c = Point::new(cx * 200, cy * 200);
                s.push(c);
                let (jx, jy) = jitter[k];
                s.push(c + Point::new(jx, jy));
            }
            let cover = minimal_cover(&s, r).unwrap();
            prop_assert!(cover.minimal);
            prop_assert!(cover.covers(&s));
            let thr = r.exp();
            for (i, a) in cover.centers.iter().enumerate() {
                for b in &cover.centers[i + 1..] {
                    prop_assert!((*a - *b).norm() > thr);
                }
            }
            prop_assert_eq!(cluster_process(&s, r, 5.0).unwrap().total_mass(), cover.centers.len() as f64);
        }
    }
}
