//! Thin wrappers over `microlp` for the two feasibility questions the crate
//! asks: is a bounded polyhedron nonempty, and is a point in the convex hull
//! of a finite set.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

/// Whether `{lo <= x <= hi, rows * x <= rhs}` has a real point.
pub(crate) fn polyhedron_nonempty(lo: &[f64], hi: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> bool {
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return false;
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = lo
        .iter()
        .zip(hi)
        .map(|(&l, &h)| problem.add_var(0.0, (l, h)))
        .collect();
    for (row, &b) in rows.iter().zip(rhs) {
        let terms: Vec<_> = vars.iter().copied().zip(row.iter().copied()).collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, b);
    }
    problem.solve().is_ok()
}

/// Whether `point` is a convex combination of `vertices`.
pub(crate) fn in_convex_hull(point: &[f64], vertices: &[Vec<f64>]) -> bool {
    if vertices.is_empty() {
        return false;
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let weights: Vec<_> = vertices
        .iter()
        .map(|_| problem.add_var(0.0, (0.0, 1.0)))
        .collect();
    let all: Vec<_> = weights.iter().map(|&w| (w, 1.0)).collect();
    problem.add_constraint(all.as_slice(), ComparisonOp::Eq, 1.0);
    for (coord, &x) in point.iter().enumerate() {
        let terms: Vec<_> = weights
            .iter()
            .zip(vertices)
            .map(|(&w, v)| (w, v[coord]))
            .collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Eq, x);
    }
    problem.solve().is_ok()
}
