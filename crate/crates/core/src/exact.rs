//! Exact linear-algebra computations on small graphs: the Green function of
//! the killed walk, hitting probabilities, Poisson kernels and harmonic
//! measures, together with closed forms used as references.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::lattice::{ball, floor_exp, inner_boundary, outer_boundary, LatticeDomain, Point, WiredGraph, BOUNDARY};
use crate::sparse::{conjugate_gradient, CsrMatrix};

/// Largest interior handled by the dense solver.
pub const DENSE_VERTEX_LIMIT: usize = 10_000;

const CG_TOL: f64 = 1e-13;

/// `G(x,y)`: expected time spent at `y` by the walk started at `x` and killed
/// on hitting the boundary, for the walk with the given per-edge rate.
#[derive(Debug, Clone)]
pub struct GreenMatrix {
    rate: f64,
    fingerprint: u64,
    domain: Arc<LatticeDomain>,
    values: DMatrix<f64>,
}

impl GreenMatrix {
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn graph_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        self.domain.vertices()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[(i, i)]).collect()
    }

    /// Largest `|G - G^T|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.amax();
        (&self.values - self.values.transpose()).amax() / scale
    }

    pub fn is_positive_definite(&self) -> bool {
        Cholesky::new(self.values.clone()).is_some()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:e}", self.values[(i, j)])).collect();
            writeln!(f, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")))
    }
}

/// The killed generator: `deg * rate` on the diagonal, `-rate` per interior edge.
pub fn killed_generator(g: &WiredGraph, rate: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(5 * g.len());
    let d = g.degree() as f64;
    for i in 0..g.len() {
        t.push((i as u32, i as u32, d * rate));
        for &j in g.neighbors(i) {
            if j != BOUNDARY {
                t.push((i as u32, j, -rate));
            }
        }
    }
    CsrMatrix::from_triplets(g.len(), t)
}

pub fn green_matrix(g: &WiredGraph, rate: f64) -> Result<GreenMatrix> {
    check_rate(rate)?;
    let n = g.len();
    if n > DENSE_VERTEX_LIMIT {
        return Err(Error::TooLarge {
            vertices: n,
            limit: DENSE_VERTEX_LIMIT,
        });
    }
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = g.degree() as f64 * rate;
        for &j in g.neighbors(i) {
            if j != BOUNDARY {
                k[(i, j as usize)] -= rate;
            }
        }
    }
    let chol = Cholesky::new(k).ok_or_else(|| Error::Singular("killed generator is not positive definite".into()))?;
    let mut values = chol.inverse();
    // Symmetrize away rounding.
    let t = values.transpose();
    values = (values + t) * 0.5;
    Ok(GreenMatrix {
        rate,
        fingerprint: g.fingerprint(),
        domain: g.shared_domain().clone(),
        values,
    })
}

/// Column `G(., x)` by a sparse solve (any graph size).
pub fn green_column(g: &WiredGraph, rate: f64, x: usize) -> Result<Vec<f64>> {
    check_rate(rate)?;
    let mut e = vec![0.0; g.len()];
    e[x] = 1.0;
    conjugate_gradient(&killed_generator(g, rate), &e, CG_TOL)
}

/// Row sums `sum_x G(x, y)` by a sparse solve (any graph size).
pub fn green_row_sums(g: &WiredGraph, rate: f64) -> Result<Vec<f64>> {
    check_rate(rate)?;
    conjugate_gradient(&killed_generator(g, rate), &vec![1.0; g.len()], CG_TOL)
}

/// Node of a hitting problem: a lattice point or the wired boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Vertex(Point),
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Free,
    Target,
    Avoid,
}

/// Discrete-time SRW (or any symmetric multigraph walk) absorbed at two
/// disjoint sets; solving gives `P(hit A before B)` from every node.
#[derive(Debug, Clone)]
pub struct HittingProblem {
    nodes: Vec<Node>,
    adjacency: Vec<Vec<u32>>,
    roles: Vec<Role>,
    index: HashMap<Node, usize>,
}

impl HittingProblem {
    /// General symmetric multigraph. Edges are undirected and may repeat.
    pub fn from_edges(nodes: Vec<Node>, edges: &[(usize, usize)], a: &[Node], b: &[Node]) -> Result<Self> {
        let index: HashMap<Node, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::InvalidParameter("duplicate nodes in hitting problem".into()));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(u, v) in edges {
            if u >= nodes.len() || v >= nodes.len() {
                return Err(Error::InvalidParameter(format!("edge ({u}, {v}) out of range")));
            }
            adjacency[u].push(v as u32);
            adjacency[v].push(u as u32);
        }
        let mut roles = vec![Role::Free; nodes.len()];
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidParameter("absorbing sets A and B must be nonempty".into()));
        }
        for (set, role) in [(a, Role::Target), (b, Role::Avoid)] {
            for n in set {
                let i = *index
                    .get(n)
                    .ok_or_else(|| Error::InvalidParameter(format!("absorbing node {n:?} is not in the graph")))?;
                if roles[i] != Role::Free {
                    return Err(Error::InvalidParameter(format!("A and B intersect at {n:?}")));
                }
                roles[i] = role;
            }
        }
        Ok(HittingProblem {
            nodes,
            adjacency,
            roles,
            index,
        })
    }

    /// Nearest-neighbour walk on `Z^2` restricted to `free`, absorbed at `a`
    /// and `b`. Every neighbour of a free point must lie in `free ∪ a ∪ b`.
    pub fn lattice(free: &[Point], a: &[Point], b: &[Point]) -> Result<Self> {
        let mut nodes: Vec<Node> = Vec::with_capacity(free.len() + a.len() + b.len());
        nodes.extend(free.iter().map(|&p| Node::Vertex(p)));
        nodes.extend(a.iter().map(|&p| Node::Vertex(p)));
        nodes.extend(b.iter().map(|&p| Node::Vertex(p)));
        let index: HashMap<Node, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut edges = Vec::with_capacity(2 * free.len());
        for (i, p) in free.iter().enumerate() {
            for q in p.neighbors() {
                let j = *index.get(&Node::Vertex(q)).ok_or_else(|| {
                    Error::Geometry(format!("free point {p} has neighbour {q} outside the problem region"))
                })?;
                // Each free-free edge is seen twice; keep one copy.
                if j >= free.len() || i < j {
                    edges.push((i, j));
                }
            }
        }
        let a: Vec<Node> = a.iter().map(|&p| Node::Vertex(p)).collect();
        let b: Vec<Node> = b.iter().map(|&p| Node::Vertex(p)).collect();
        Self::from_edges(nodes, &edges, &a, &b)
    }

    /// The wired graph with targets `a` and avoided set `b` (interior points);
    /// `boundary` fixes the role of the contracted boundary vertex.
    pub fn wired(g: &WiredGraph, a: &[Point], b: &[Point], boundary: BoundaryRole) -> Result<Self> {
        let mut nodes: Vec<Node> = g.domain().vertices().iter().map(|&p| Node::Vertex(p)).collect();
        nodes.push(Node::Boundary);
        let bd = g.len();
        let mut edges = Vec::new();
        for i in 0..g.len() {
            for &j in g.neighbors(i) {
                if j == BOUNDARY {
                    edges.push((i, bd));
                } else if (i as u32) < j {
                    edges.push((i, j as usize));
                }
            }
        }
        let mut a: Vec<Node> = a.iter().map(|&p| Node::Vertex(p)).collect();
        let mut b: Vec<Node> = b.iter().map(|&p| Node::Vertex(p)).collect();
        match boundary {
            BoundaryRole::Target => a.push(Node::Boundary),
            BoundaryRole::Avoid => b.push(Node::Boundary),
            BoundaryRole::Free => {}
        }
        Self::from_edges(nodes, &edges, &a, &b)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn degree(&self, node: Node) -> Option<usize> {
        self.index.get(&node).map(|&i| self.adjacency[i].len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRole {
    Target,
    Avoid,
    Free,
}

/// `P_v(tau_A < tau_B)` for every node of a [`HittingProblem`].
#[derive(Debug, Clone)]
pub struct HittingProbabilities {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    values: Vec<f64>,
    /// Max-norm residual of the harmonic system on the free nodes.
    pub residual: f64,
}

impl HittingProbabilities {
    pub fn at(&self, node: Node) -> Option<f64> {
        self.index.get(&node).map(|&i| self.values[i])
    }

    pub fn at_point(&self, p: Point) -> Option<f64> {
        self.at(Node::Vertex(p))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Node, f64)> + '_ {
        self.nodes.iter().copied().zip(self.values.iter().copied())
    }
}

pub fn hitting_probability(p: &HittingProblem) -> Result<HittingProbabilities> {
    let free: Vec<usize> = (0..p.nodes.len()).filter(|&i| p.roles[i] == Role::Free).collect();
    let mut local = vec![u32::MAX; p.nodes.len()];
    for (k, &i) in free.iter().enumerate() {
        local[i] = k as u32;
    }
    // Every free component must reach an absorbing node.
    let mut reach = vec![false; p.nodes.len()];
    let mut queue: VecDeque<usize> = (0..p.nodes.len()).filter(|&i| p.roles[i] != Role::Free).collect();
    for &i in &queue {
        reach[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &j in &p.adjacency[i] {
            if !reach[j as usize] {
                reach[j as usize] = true;
                queue.push_back(j as usize);
            }
        }
    }
    if let Some(&i) = free.iter().find(|&&i| !reach[i]) {
        return Err(Error::Singular(format!(
            "node {:?} cannot reach the absorbing sets",
            p.nodes[i]
        )));
    }

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    for (k, &i) in free.iter().enumerate() {
        triplets.push((k as u32, k as u32, p.adjacency[i].len() as f64));
        for &j in &p.adjacency[i] {
            match p.roles[j as usize] {
                Role::Free => triplets.push((k as u32, local[j as usize], -1.0)),
                Role::Target => rhs[k] += 1.0,
                Role::Avoid => {}
            }
        }
    }
    let m = CsrMatrix::from_triplets(free.len(), triplets);
    let h = conjugate_gradient(&m, &rhs, CG_TOL)?;
    let residual = if free.is_empty() { 0.0 } else { m.residual(&h, &rhs) };
    let values = (0..p.nodes.len())
        .map(|i| match p.roles[i] {
            Role::Free => h[local[i] as usize].clamp(0.0, 1.0),
            Role::Target => 1.0,
            Role::Avoid => 0.0,
        })
        .collect();
    Ok(HittingProbabilities {
        nodes: p.nodes.clone(),
        index: p.index.clone(),
        values,
        residual,
    })
}

/// `P_y(hit B(x;r) before leaving B(x;R))` for all `y` in the annulus, the
/// gambler's-ruin setting with log-radii `r < R`.
pub fn ball_escape_problem(x: Point, r: f64, big_r: f64) -> Result<HittingProblem> {
    if !(0.0 <= r && r < big_r) {
        return Err(Error::InvalidParameter(format!("need 0 <= r < R, got r={r}, R={big_r}")));
    }
    let inner = ball(x, floor_exp(r));
    let outer = ball(x, floor_exp(big_r));
    let ri = floor_exp(r);
    let free: Vec<Point> = outer.iter().copied().filter(|p| (*p - x).norm2() > ri * ri).collect();
    let target = inner_boundary(&inner);
    // Interior points of the small ball are unreachable without crossing the
    // inner boundary, so only the latter is needed.
    HittingProblem::lattice(&free, &target, &outer_boundary(&outer))
}

/// The closed form `(R - log|x-y|) / (R - r)`.
pub fn gambler_ruin_formula(x: Point, y: Point, r: f64, big_r: f64) -> f64 {
    (big_r - (y - x).norm().ln()) / (big_r - r)
}

/// Exit distribution of the discrete-time SRW from `B(x;R)` started at
/// `start`, indexed by the points of the outer boundary (sorted).
pub fn poisson_kernel(x: Point, big_r: f64, start: Point) -> Result<Vec<(Point, f64)>> {
    let rad = floor_exp(big_r);
    if (start - x).norm2() > rad * rad {
        return Err(Error::Geometry(format!("start {start} lies outside B({x}; {big_r})")));
    }
    let pts = ball(x, rad);
    let index: HashMap<Point, usize> = pts.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut t = Vec::with_capacity(5 * pts.len());
    for (i, p) in pts.iter().enumerate() {
        t.push((i as u32, i as u32, 4.0));
        for q in p.neighbors() {
            if let Some(&j) = index.get(&q) {
                t.push((i as u32, j as u32, -1.0));
            }
        }
    }
    let m = CsrMatrix::from_triplets(pts.len(), t);
    let mut e = vec![0.0; pts.len()];
    e[index[&start]] = 4.0;
    // Expected number of visits to each ball point.
    let visits = conjugate_gradient(&m, &e, CG_TOL)?;
    let boundary = outer_boundary(&pts);
    Ok(boundary
        .into_iter()
        .map(|z| {
            let w: f64 = z
                .neighbors()
                .iter()
                .filter_map(|q| index.get(q))
                .map(|&j| visits[j] / 4.0)
                .sum();
            (z, w)
        })
        .collect())
}

/// Harmonic measure of a finite set, truncated at the ball `B(center; m)`:
/// normalized escape probabilities `P_w(leave B(center;m) before returning)`.
pub fn harmonic_measure_of_set(set: &[Point], center: Point, m: f64) -> Result<Vec<(Point, f64)>> {
    let rad = floor_exp(m);
    let outer = ball(center, rad);
    let members: std::collections::HashSet<Point> = set.iter().copied().collect();
    if !set.iter().all(|p| (*p - center).norm2() < (rad - 1).max(0).pow(2)) {
        return Err(Error::Geometry("set must lie well inside the truncation ball".into()));
    }
    let free: Vec<Point> = outer.iter().copied().filter(|p| !members.contains(p)).collect();
    let mut a: Vec<Point> = set.to_vec();
    a.sort_unstable();
    a.dedup();
    let prob = hitting_probability(&HittingProblem::lattice(&free, &a, &outer_boundary(&outer))?)?;
    let boundary = inner_boundary(&a);
    let escape: Vec<(Point, f64)> = boundary
        .iter()
        .map(|&w| {
            let es: f64 = w
                .neighbors()
                .iter()
                .filter(|q| !members.contains(q))
                .map(|&q| 1.0 - prob.at_point(q).expect("neighbour lies in the truncation ball"))
                .sum::<f64>()
                / 4.0;
            (w, es)
        })
        .collect();
    let total: f64 = escape.iter().map(|e| e.1).sum();
    if !(total > 0.0) {
        return Err(Error::Normalization(format!("escape mass {total}")));
    }
    Ok(escape.into_iter().map(|(w, e)| (w, e / total)).collect())
}

/// Harmonic measure of `B(x;k)` on its inner boundary, truncated at log-radius `m`.
pub fn harmonic_measure(x: Point, k: f64, m: f64) -> Result<Vec<(Point, f64)>> {
    if !(m > k + 1.0) {
        return Err(Error::InvalidParameter(format!("need m > k + 1, got k={k}, m={m}")));
    }
    harmonic_measure_of_set(&ball(x, floor_exp(k)), x, m)
}

/// Largest entrywise change of the truncated harmonic measure from `m` to `m + 1`.
pub fn harmonic_measure_truncation_gap(x: Point, k: f64, m: f64) -> Result<f64> {
    let a = harmonic_measure(x, k, m)?;
    let b = harmonic_measure(x, k, m + 1.0)?;
    Ok(a.iter().zip(&b).map(|(u, v)| (u.1 - v.1).abs()).fold(0.0, f64::max))
}

/// `P(L_t(x) = 0) = exp(-t / G(x,x))` together with the excursion-rate
/// cross-check `lambda_x = rate * sum_y mult(y) P_y(tau_x < tau_boundary)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnvisitedProbability {
    pub probability: f64,
    pub green_diagonal: f64,
    pub excursion_rate: f64,
    pub rate: f64,
}

pub fn unvisited_probability(g: &WiredGraph, rate: f64, x: Point, t: f64) -> Result<UnvisitedProbability> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let i = g
        .index_of(x)
        .ok_or_else(|| Error::Domain(format!("{x} is not an interior vertex")))?;
    let gxx = green_column(g, rate, i)?[i];
    let hit = hitting_probability(&HittingProblem::wired(g, &[x], &[], BoundaryRole::Avoid)?)?;
    let lambda = rate
        * g.boundary_edges()
            .iter()
            .map(|&y| hit.at_point(g.position(y as usize)).expect("interior vertex"))
            .sum::<f64>();
    let defect = (lambda * gxx - 1.0).abs();
    if defect > 1e-8 {
        return Err(Error::Normalization(format!(
            "lambda * G(x,x) = {} deviates from 1",
            lambda * gxx
        )));
    }
    Ok(UnvisitedProbability {
        probability: (-t / gxx).exp(),
        green_diagonal: gxx,
        excursion_rate: lambda,
        rate,
    })
}

/// `(1 - e^{-tau p q}) e^{-tau p (1-q)}`: among Poisson(tau) two-stage trials
/// none succeeds twice while at least one fails at the second stage.
pub fn two_stage_race_probability(tau: f64, p: f64, q: f64) -> Result<f64> {
    if !(tau >= 0.0) || !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "need tau >= 0 and p, q in [0,1]; got tau={tau}, p={p}, q={q}"
        )));
    }
    Ok((1.0 - (-tau * p * q).exp()) * (-tau * p * (1.0 - q)).exp())
}
