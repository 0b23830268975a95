//! Polyhedral kernels: row normalization, Chebyshev centers, bounding boxes,
//! vertex enumeration and Euclidean projection by a primal active-set loop.

use nalgebra::{DMatrix, DVector};

use super::SetError;

/// One inequality `⟨normal, x⟩ ≤ offset`, normal of unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl HalfSpace {
    /// Normalizes `⟨a, x⟩ ≤ b` so that `‖a‖ = 1`.
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self, SetError> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0) || !offset.is_finite() {
            return Err(SetError::Invalid("half-space normal must be finite and nonzero".into()));
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    /// `offset − ⟨normal, z⟩`: Euclidean distance to the bounding hyperplane,
    /// positive inside.
    #[inline]
    pub fn slack(&self, z: &DVector<f64>) -> f64 {
        self.offset - self.normal.dot(z)
    }
}

/// Maximizes `t` subject to `⟨a_i, x⟩ + t ≤ b_i` (unit normals) and returns
/// the maximizer `(x, t)`: the center and radius of the largest inscribed ball.
///
/// The linear program lives in `dim + 1` variables with a handful of rows, so
/// it is solved exactly by enumerating the vertices of the lifted feasible
/// region, boxed by `|x_j| ≤ B` and `t ≤ B` with `B = 1e6 (1 + max |b_i|)` so
/// that unbounded polyhedra still have an attained optimum.
pub(crate) fn chebyshev_center(rows: &[HalfSpace], dim: usize) -> Option<(DVector<f64>, f64)> {
    let scale = 1.0 + rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max);
    let big = 1e6 * scale;
    let n = dim + 1;
    let mut lifted: Vec<(DVector<f64>, f64)> = rows
        .iter()
        .map(|r| {
            let mut a = DVector::zeros(n);
            a.rows_mut(0, dim).copy_from(&r.normal);
            a[dim] = 1.0;
            (a, r.offset)
        })
        .collect();
    for j in 0..n {
        let mut a = DVector::zeros(n);
        a[j] = 1.0;
        lifted.push((a.clone(), big));
        if j < dim {
            lifted.push((-a, big));
        }
    }
    let tol = 1e-9 * big;
    let mut best: Option<(DVector<f64>, f64)> = None;
    for subset in combinations(lifted.len(), n) {
        let a = DMatrix::from_fn(n, n, |i, j| lifted[subset[i]].0[j]);
        let b = DVector::from_iterator(n, subset.iter().map(|&i| lifted[i].1));
        let Some(z) = a.lu().solve(&b) else { continue };
        if !z.iter().all(|v| v.is_finite()) {
            continue;
        }
        if lifted.iter().any(|(a, b)| a.dot(&z) > b + tol) {
            continue;
        }
        let t = z[dim];
        if best.as_ref().is_none_or(|(_, bt)| t > *bt) {
            best = Some((z.rows(0, dim).into_owned(), t));
        }
    }
    best
}

/// True when the recession cone `{d : ⟨a_i, d⟩ ≤ 0 ∀i}` is `{0}`.
///
/// An extreme ray of a pointed recession cone is cut out by `dim − 1`
/// independent rows, so checking the null direction of every such subset is
/// exhaustive.
pub(crate) fn is_bounded(rows: &[HalfSpace], dim: usize) -> bool {
    let full = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].normal[j]);
    if rows.len() < dim + 1 || full.rank(1e-12) < dim {
        return false;
    }
    let escapes = |d: &DVector<f64>| rows.iter().all(|r| r.normal.dot(d) <= 1e-12);
    for subset in combinations(rows.len(), dim - 1) {
        let d = if dim == 1 {
            DVector::from_element(1, 1.0)
        } else {
            let a = DMatrix::from_fn(dim - 1, dim, |i, j| rows[subset[i]].normal[j]);
            // null direction: last right-singular vector of the padded square matrix
            let mut square = DMatrix::zeros(dim, dim);
            square.rows_mut(0, dim - 1).copy_from(&a);
            let svd = square.svd(false, true);
            let Some(vt) = svd.v_t else { continue };
            let (k, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            if a.rank(1e-12) < dim - 1 {
                continue;
            }
            vt.row(k).transpose()
        };
        if escapes(&d) || escapes(&-d) {
            return false;
        }
    }
    true
}

/// Axis-aligned bounding box from the vertices; `None` if unbounded.
pub(crate) fn bounding_box(rows: &[HalfSpace], dim: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    if !is_bounded(rows, dim) {
        return None;
    }
    let verts = vertices(rows, dim);
    let first = verts.first()?;
    let mut lower = first.clone();
    let mut upper = first.clone();
    for v in &verts[1..] {
        lower = lower.inf(v);
        upper = upper.sup(v);
    }
    Some((lower, upper))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// All vertices of `{x : ⟨a_i,x⟩ ≤ b_i}` by brute-force enumeration of
/// `dim`-subsets of rows. Intended for the tiny polytopes used here.
pub(crate) fn vertices(rows: &[HalfSpace], dim: usize) -> Vec<DVector<f64>> {
    let scale = 1.0 + rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let mut out: Vec<DVector<f64>> = Vec::new();
    for subset in combinations(rows.len(), dim) {
        let a = DMatrix::from_fn(dim, dim, |i, j| rows[subset[i]].normal[j]);
        let b = DVector::from_iterator(dim, subset.iter().map(|&i| rows[i].offset));
        let Some(x) = a.lu().solve(&b) else { continue };
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        if rows.iter().all(|r| r.slack(&x) >= -tol) && !out.iter().any(|y| (y - &x).norm() <= tol) {
            out.push(x);
        }
    }
    out
}

/// Euclidean projection of `v` onto `{x : ⟨a_i,x⟩ ≤ b_i}` by a primal
/// active-set method started from the strictly feasible point `start`.
///
/// With an identity Hessian the equality-constrained subproblem on the
/// working set `W` reduces to the small system `A_W A_Wᵀ λ = −A_W (w − v)`.
pub(crate) fn project(
    rows: &[HalfSpace],
    start: &DVector<f64>,
    v: &DVector<f64>,
    budget: usize,
) -> Result<DVector<f64>, SetError> {
    if rows.iter().all(|r| r.slack(v) >= 0.0) {
        return Ok(v.clone());
    }
    let dim = v.len();
    let scale = 1.0 + v.norm() + start.norm();
    let step_tol = 1e-13 * scale;
    let mut w = start.clone();
    let mut working: Vec<usize> = Vec::new();

    for _ in 0..budget {
        let g = &w - v;
        let (p, lambda) = if working.is_empty() {
            (-&g, DVector::zeros(0))
        } else {
            let aw = DMatrix::from_fn(working.len(), dim, |i, j| rows[working[i]].normal[j]);
            let gram = &aw * aw.transpose();
            let rhs = -(&aw * &g);
            let lambda = match gram.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => gram.lu().solve(&rhs).ok_or(SetError::NonConvergence(budget))?,
            };
            (-&g - aw.transpose() * &lambda, lambda)
        };

        if p.norm() <= step_tol {
            let most_negative = lambda
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -1e-14 * scale)
                .min_by(|a, b| a.1.total_cmp(b.1));
            match most_negative {
                None => return Ok(w),
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, row) in rows.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = row.normal.dot(&p);
            if ap > 0.0 {
                let s = (row.slack(&w) / ap).max(0.0);
                if s < alpha {
                    alpha = s;
                    blocking = Some(i);
                }
            }
        }
        w += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(SetError::NonConvergence(budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Vec<HalfSpace> {
        vec![
            HalfSpace::new(DVector::from_vec(vec![-1.0, 0.0]), 0.0).unwrap(),
            HalfSpace::new(DVector::from_vec(vec![0.0, -1.0]), 0.0).unwrap(),
            HalfSpace::new(DVector::from_vec(vec![1.0, 1.0]), 1.0).unwrap(),
        ]
    }

    #[test]
    fn rows_are_normalized() {
        let r = HalfSpace::new(DVector::from_vec(vec![3.0, 4.0]), 10.0).unwrap();
        assert!((r.normal.norm() - 1.0).abs() < 1e-15);
        assert!((r.offset - 2.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_center_and_vertices() {
        let rows = triangle();
        let (c, t) = chebyshev_center(&rows, 2).unwrap();
        // inradius of the right isosceles triangle with legs 1
        let expected = 1.0 / (2.0 + 2f64.sqrt());
        assert!((t - expected).abs() < 1e-14, "{t}");
        assert!(rows.iter().all(|r| r.slack(&c) > 0.0));
        assert_eq!(vertices(&rows, 2).len(), 3);
        let (lo, hi) = bounding_box(&rows, 2).unwrap();
        assert!((lo[0]).abs() < 1e-9 && (hi[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_polyhedron_has_no_box() {
        let rows = vec![HalfSpace::new(DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap()];
        assert!(bounding_box(&rows, 2).is_none());
        assert!(chebyshev_center(&rows, 2).is_some());
    }

    #[test]
    fn projection_to_vertex_and_face() {
        let rows = triangle();
        let start = DVector::from_vec(vec![0.25, 0.25]);
        let w = project(&rows, &start, &DVector::from_vec(vec![1.0, 1.0]), 100).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        let w = project(&rows, &start, &DVector::from_vec(vec![-1.0, -2.0]), 100).unwrap();
        assert!(w.norm() < 1e-12);
    }
}
