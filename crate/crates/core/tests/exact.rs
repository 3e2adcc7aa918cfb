use covertime::exact::{
    ball_escape_problem, gambler_ruin_formula, green_column, green_matrix, green_row_sums, harmonic_measure,
    hitting_probability, poisson_kernel, two_stage_race_probability, unvisited_probability, HittingProblem, Node,
};
use covertime::lattice::{discretize_domain, floor_exp, wire_boundary, DomainShape, LatticeDomain, Point, WiredGraph};
use nalgebra::DMatrix;
use std::collections::HashMap;

/// `(rate * (4I - A))^{-1}` by LU on a matrix assembled from coordinates.
fn green_oracle(vertices: &[Point], rate: f64) -> DMatrix<f64> {
    let idx: HashMap<Point, usize> = vertices.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let n = vertices.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, p) in vertices.iter().enumerate() {
        m[(i, i)] = 4.0 * rate;
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(&j) = idx.get(&Point::new(p.x + dx, p.y + dy)) {
                m[(i, j)] = -rate;
            }
        }
    }
    m.lu().try_inverse().unwrap()
}

fn graphs() -> Vec<WiredGraph> {
    let mut out: Vec<WiredGraph> = (1..=6).map(|k| wire_boundary(LatticeDomain::square(k).unwrap())).collect();
    for shape in [
        DomainShape::UnitDisc,
        DomainShape::Annulus { inner_radius: 0.5 },
        DomainShape::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.2, 0.8]],
        },
    ] {
        out.push(wire_boundary(discretize_domain(&shape, 2.6).unwrap()));
    }
    out
}

#[test]
fn green_single_vertex_and_pair() {
    for rate in [1.0, 0.25, 1.0 / (2.0 * std::f64::consts::PI)] {
        let g = wire_boundary(LatticeDomain::square(1).unwrap());
        assert!((green_matrix(&g, rate).unwrap().get(0, 0) - 1.0 / (4.0 * rate)).abs() < 1e-12);
        let p = WiredGraph::path(2).unwrap();
        let m = green_matrix(&p, rate).unwrap();
        for (i, j, v) in [(0, 0, 2.0 / 3.0), (1, 1, 2.0 / 3.0), (0, 1, 1.0 / 3.0), (1, 0, 1.0 / 3.0)] {
            assert!((m.get(i, j) - v / rate).abs() < 1e-12);
        }
    }
}

#[test]
fn green_agrees_with_lu_oracle() {
    for g in graphs() {
        for rate in [1.0, 0.3] {
            let m = green_matrix(&g, rate).unwrap();
            let o = green_oracle(g.domain().vertices(), rate);
            let err = (m.values() - &o).abs().max();
            assert!(err < 1e-10 * o.abs().max(), "err {err}");
            assert!(m.asymmetry() < 1e-14);
            assert!(m.is_positive_definite());
        }
    }
}

#[test]
fn sparse_solves_agree_with_dense() {
    let g = wire_boundary(discretize_domain(&DomainShape::UnitDisc, 3.0).unwrap());
    let m = green_matrix(&g, 0.5).unwrap();
    let sums = green_row_sums(&g, 0.5).unwrap();
    for i in (0..g.len()).step_by(7) {
        let row: f64 = (0..g.len()).map(|j| m.get(i, j)).sum();
        assert!((row - sums[i]).abs() < 1e-8 * row);
        let col = green_column(&g, 0.5, i).unwrap();
        for j in 0..g.len() {
            assert!((col[j] - m.get(j, i)).abs() < 1e-8 * m.get(i, i));
        }
    }
}

#[test]
fn green_is_monotone_in_the_domain() {
    let small = green_matrix(&wire_boundary(LatticeDomain::square(5).unwrap()), 1.0).unwrap();
    let big = green_matrix(&wire_boundary(LatticeDomain::square(7).unwrap()), 1.0).unwrap();
    let c5 = LatticeDomain::square(5).unwrap().central_vertex();
    let c7 = LatticeDomain::square(7).unwrap().central_vertex();
    let i5 = small.vertices().iter().position(|p| *p == c5).unwrap();
    let i7 = big.vertices().iter().position(|p| *p == c7).unwrap();
    assert!(big.get(i7, i7) > small.get(i5, i5));
}

/// Twenty annulus points on a spiral between the two radii.
fn starts(x: Point, r: f64, big_r: f64) -> Vec<Point> {
    let (lo, hi) = (floor_exp(r) as f64, floor_exp(big_r) as f64);
    (0..20)
        .map(|k| {
            let rho = lo + 1.0 + (hi - lo - 2.0) * (k as f64 + 0.5) / 20.0;
            let th = 2.39996 * k as f64;
            Point::new(x.x + (rho * th.cos()).round() as i64, x.y + (rho * th.sin()).round() as i64)
        })
        .collect()
}

#[test]
fn gambler_ruin_grid() {
    let x = Point::new(3, -2);
    for r in [2.0, 3.0] {
        let big_r = r + 2.0;
        let h = hitting_probability(&ball_escape_problem(x, r, big_r).unwrap()).unwrap();
        let tol = 10.0 * (-r as f64).exp();
        for y in starts(x, r, big_r) {
            let exact = h.at_point(y).unwrap();
            let formula = gambler_ruin_formula(x, y, r, big_r);
            assert!((exact - formula).abs() <= tol, "r={r} y={y}: {exact} vs {formula}");
        }
    }
}

#[test]
fn hitting_on_a_cycle_is_linear() {
    // Cycle 0..12 with A = {0}, B = {6}: P_k = 1 - k/6 on the short arc.
    let nodes: Vec<Node> = (0..12).map(|k| Node::Vertex(Point::new(k, 0))).collect();
    let edges: Vec<(usize, usize)> = (0..12).map(|k| (k, (k + 1) % 12)).collect();
    let p = HittingProblem::from_edges(nodes, &edges, &[Node::Vertex(Point::new(0, 0))], &[Node::Vertex(Point::new(6, 0))])
        .unwrap();
    let h = hitting_probability(&p).unwrap();
    for k in 0..=6 {
        let v = h.at_point(Point::new(k, 0)).unwrap();
        assert!((v - (1.0 - k as f64 / 6.0)).abs() < 1e-9);
        let w = h.at_point(Point::new((12 - k) % 12, 0)).unwrap();
        assert!((w - v).abs() < 1e-9);
    }
}

#[test]
fn poisson_kernel_is_a_harmonic_exit_law() {
    let x = Point::new(0, 0);
    let big_r = 2.5;
    let center = poisson_kernel(x, big_r, x).unwrap();
    assert!((center.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-9);
    // Mean-value property at the centre: average of the four neighbours' kernels.
    let nb: Vec<Vec<(Point, f64)>> = x.neighbors().iter().map(|&s| poisson_kernel(x, big_r, s).unwrap()).collect();
    for (k, (z, w)) in center.iter().enumerate() {
        let avg = nb.iter().map(|v| v[k].1).sum::<f64>() / 4.0;
        assert_eq!(nb[0][k].0, *z);
        assert!((avg - w).abs() < 1e-9);
    }
    assert!(poisson_kernel(x, big_r, Point::new(100, 0)).is_err());
}

#[test]
fn harmonic_measure_is_rotation_invariant() {
    let x = Point::new(0, 0);
    let hm = harmonic_measure(x, 1.5, 3.0).unwrap();
    let table: HashMap<Point, f64> = hm.iter().copied().collect();
    assert!((hm.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
    for (p, w) in &hm {
        let rot = Point::new(-p.y, p.x);
        assert!((table[&rot] - w).abs() < 1e-8, "{p}");
    }
}

#[test]
fn unvisited_probability_matches_green_diagonal() {
    for shape in [DomainShape::UnitSquare, DomainShape::UnitDisc] {
        let g = wire_boundary(discretize_domain(&shape, 2.8).unwrap());
        let m = green_matrix(&g, 0.7).unwrap();
        for i in (0..g.len()).step_by(5) {
            let u = unvisited_probability(&g, 0.7, g.position(i), 1.5).unwrap();
            assert!((u.green_diagonal - m.get(i, i)).abs() < 1e-9);
            assert!((u.excursion_rate * u.green_diagonal - 1.0).abs() < 1e-8);
            assert!((u.probability - (-1.5 / m.get(i, i)).exp()).abs() < 1e-12);
        }
    }
}

#[test]
fn race_formula_matches_thinned_poisson_sum() {
    // Sum over the Poisson(tau) number of trials directly.
    for (tau, p, q) in [(3.0f64, 0.4f64, 0.5f64), (40.0, 0.05, 0.3), (0.0, 0.5, 0.5), (5.0, 1.0, 0.0)] {
        let mut total = 0.0;
        let mut w = (-tau as f64).exp();
        for n in 0..400 {
            if n > 0 {
                w *= tau / n as f64;
            }
            let none_double = (1.0 - p * (1.0 - q)).powi(n);
            let none_at_all = (1.0 - p).powi(n);
            total += w * (none_double - none_at_all);
        }
        let f = two_stage_race_probability(tau, p, q).unwrap();
        assert!((f - total).abs() < 1e-12, "{tau} {p} {q}: {f} vs {total}");
    }
    assert!(two_stage_race_probability(-1.0, 0.5, 0.5).is_err());
    assert!(two_stage_race_probability(1.0, 1.5, 0.5).is_err());
}
