//! Compact convex constraint sets.
//!
//! A [`ConvexSet`] provides the Euclidean projection `P_X`, the directional
//! derivative of the projection `Π_X(z, v)` (projection of `v` onto the
//! tangent cone at `z`, with the unit-speed exterior extension), and the
//! distance and normal-cone queries the simulators need.
//!
//! Values are immutable after construction, so every query is a pure
//! function and sets can be shared freely between threads.

mod polyhedron;
mod spec;

pub use polyhedron::HalfSpace;
pub use spec::{RowSpec, SetSpec};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg;

/// Iteration budget of the polyhedral active-set projection.
const ACTIVE_SET_BUDGET: usize = 500;
/// Cycle budget of Dykstra's alternating projections (intersections only).
const DYKSTRA_BUDGET: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("set has an empty interior")]
    EmptyInterior,
    #[error("invalid set data: {0}")]
    Invalid(String),
    #[error("projection did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("tangent-cone projection failed at a degenerate corner")]
    DegenerateNormalCone,
}

/// Band used to decide that a point sits on the boundary: `1e-9 (1 + ‖z‖)`.
#[inline]
pub fn tol_active(z: &DVector<f64>) -> f64 {
    1e-9 * (1.0 + z.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `⟨a_i, x⟩ ≤ b_i` for every row, unit normals.
    HPolyhedron(Vec<HalfSpace>),
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    AxisBox {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    Intersection(Vec<ConvexSet>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSet {
    kind: SetKind,
    dim: usize,
    interior: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

/// Result of [`ConvexSet::tangent_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDecomposition {
    /// `Π_X(z, v)`.
    pub projected: DVector<f64>,
    /// Outward unit normals of the constraints active at `z`.
    pub active_normals: Vec<DVector<f64>>,
    /// Length of the removed outward component, `‖v − Π_X(z, v)‖` on the boundary.
    pub beta: f64,
    pub location: Location,
}

fn check_dim(expected: usize, v: &DVector<f64>) -> Result<(), SetError> {
    if v.len() != expected {
        return Err(SetError::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

impl ConvexSet {
    /// Polyhedron `{x : ⟨a_i, x⟩ ≤ b_i}`; rows are normalized and the set must
    /// have a nonempty interior.
    pub fn polyhedron(rows: Vec<(DVector<f64>, f64)>) -> Result<Self, SetError> {
        let dim = rows
            .first()
            .map(|(a, _)| a.len())
            .ok_or_else(|| SetError::Invalid("polyhedron needs at least one row".into()))?;
        if dim == 0 {
            return Err(SetError::Invalid("dimension must be positive".into()));
        }
        let rows = rows
            .into_iter()
            .map(|(a, b)| {
                check_dim(dim, &a)?;
                HalfSpace::new(a, b)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (center, depth) = polyhedron::chebyshev_center(&rows, dim).ok_or(SetError::EmptyInterior)?;
        let scale = 1.0 + rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max);
        let exact_depth = rows.iter().map(|r| r.slack(&center)).fold(f64::INFINITY, f64::min);
        if depth <= 1e-12 * scale || exact_depth <= 0.0 {
            return Err(SetError::EmptyInterior);
        }
        Ok(Self {
            kind: SetKind::HPolyhedron(rows),
            dim,
            interior: center,
        })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self, SetError> {
        if center.is_empty() {
            return Err(SetError::Invalid("dimension must be positive".into()));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(SetError::EmptyInterior);
        }
        Ok(Self {
            dim: center.len(),
            interior: center.clone(),
            kind: SetKind::Ball { center, radius },
        })
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`; requires `lower < upper`.
    pub fn axis_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, SetError> {
        check_dim(lower.len(), &upper)?;
        if lower.is_empty() {
            return Err(SetError::Invalid("dimension must be positive".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l.is_finite() && u.is_finite())) {
            return Err(SetError::Invalid("box bounds must be finite".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l >= u) {
            return Err(SetError::EmptyInterior);
        }
        Ok(Self {
            dim: lower.len(),
            interior: (&lower + &upper) * 0.5,
            kind: SetKind::AxisBox { lower, upper },
        })
    }

    /// Intersection of sets of equal dimension. Nested intersections are
    /// flattened; a strictly feasible point is found by a cutting-plane
    /// maximization of the common depth.
    pub fn intersection(members: Vec<ConvexSet>) -> Result<Self, SetError> {
        let dim = members
            .first()
            .map(|m| m.dim)
            .ok_or_else(|| SetError::Invalid("intersection needs at least one member".into()))?;
        let mut flat = Vec::new();
        for m in members {
            if m.dim != dim {
                return Err(SetError::DimensionMismatch {
                    expected: dim,
                    found: m.dim,
                });
            }
            match m.kind {
                SetKind::Intersection(inner) => flat.extend(inner),
                _ => flat.push(m),
            }
        }
        let interior = common_interior_point(&flat, dim)?;
        Ok(Self {
            kind: SetKind::Intersection(flat),
            dim,
            interior,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    /// A strictly feasible point found at construction.
    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior
    }

    /// Signed depth: for points inside, the exact distance to the boundary;
    /// negative outside (not a distance there for polyhedra).
    fn depth(&self, z: &DVector<f64>) -> f64 {
        match &self.kind {
            SetKind::HPolyhedron(rows) => rows.iter().map(|r| r.slack(z)).fold(f64::INFINITY, f64::min),
            SetKind::Ball { center, radius } => radius - (z - center).norm(),
            SetKind::AxisBox { lower, upper } => (0..self.dim)
                .map(|i| (z[i] - lower[i]).min(upper[i] - z[i]))
                .fold(f64::INFINITY, f64::min),
            SetKind::Intersection(members) => members.iter().map(|m| m.depth(z)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest constraint violation at `z` (zero iff `z` is in the set).
    pub fn constraint_violation(&self, z: &DVector<f64>) -> f64 {
        match &self.kind {
            SetKind::Intersection(members) => members.iter().map(|m| m.constraint_violation(z)).fold(0.0, f64::max),
            _ => (-self.depth(z)).max(0.0),
        }
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.constraint_violation(z) <= tol
    }

    /// Euclidean projection `P_X(v) = argmin_{w ∈ X} ‖v − w‖`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>, SetError> {
        check_dim(self.dim, v)?;
        match &self.kind {
            SetKind::Ball { center, radius } => {
                let d = v - center;
                let n = d.norm();
                if n <= *radius {
                    Ok(v.clone())
                } else {
                    Ok(center + d * (radius / n))
                }
            }
            SetKind::AxisBox { lower, upper } => Ok(DVector::from_fn(self.dim, |i, _| v[i].clamp(lower[i], upper[i]))),
            SetKind::HPolyhedron(rows) => polyhedron::project(rows, &self.interior, v, ACTIVE_SET_BUDGET),
            SetKind::Intersection(members) => self.dykstra(members, v),
        }
    }

    fn dykstra(&self, members: &[ConvexSet], v: &DVector<f64>) -> Result<DVector<f64>, SetError> {
        if self.constraint_violation(v) == 0.0 {
            return Ok(v.clone());
        }
        let tol = 1e-13 * (1.0 + v.norm());
        let mut x = v.clone();
        let mut increments = vec![DVector::zeros(self.dim); members.len()];
        for _ in 0..DYKSTRA_BUDGET {
            let cycle_start = x.clone();
            let mut increment_change = 0.0_f64;
            for (m, p) in members.iter().zip(increments.iter_mut()) {
                let y = m.project(&(&x + &*p))?;
                let next_p = &x + &*p - &y;
                increment_change = increment_change.max((&next_p - &*p).norm());
                *p = next_p;
                x = y;
            }
            if (&x - &cycle_start).norm() <= tol && increment_change <= tol && self.constraint_violation(&x) <= tol {
                return Ok(x);
            }
        }
        Err(SetError::NonConvergence(DYKSTRA_BUDGET))
    }

    /// Euclidean distance from `z` to the set.
    pub fn distance(&self, z: &DVector<f64>) -> Result<f64, SetError> {
        Ok((z - self.project(z)?).norm())
    }

    /// Distance to the boundary: exact and nonnegative for `z` in the set,
    /// minus the distance to the set for exterior points.
    pub fn distance_to_boundary(&self, z: &DVector<f64>) -> f64 {
        let depth = self.depth(z);
        if depth >= 0.0 {
            return depth;
        }
        match self.distance(z) {
            Ok(d) => -d,
            Err(_) => depth,
        }
    }

    /// Outward unit normals of every constraint within `tol` of being active.
    pub fn active_normals(&self, z: &DVector<f64>, tol: f64) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        self.collect_active(z, tol, &mut out);
        out
    }

    fn collect_active(&self, z: &DVector<f64>, tol: f64, out: &mut Vec<DVector<f64>>) {
        let mut push = |n: DVector<f64>| {
            if !out.iter().any(|m| (m - &n).norm() < 1e-12) {
                out.push(n);
            }
        };
        match &self.kind {
            SetKind::HPolyhedron(rows) => {
                for r in rows.iter().filter(|r| r.slack(z) <= tol) {
                    push(r.normal.clone());
                }
            }
            SetKind::Ball { center, radius } => {
                let d = z - center;
                let n = d.norm();
                if n > 0.0 && radius - n <= tol {
                    push(d / n);
                }
            }
            SetKind::AxisBox { lower, upper } => {
                for i in 0..self.dim {
                    if z[i] - lower[i] <= tol {
                        let mut e = DVector::zeros(self.dim);
                        e[i] = -1.0;
                        push(e);
                    }
                    if upper[i] - z[i] <= tol {
                        let mut e = DVector::zeros(self.dim);
                        e[i] = 1.0;
                        push(e);
                    }
                }
            }
            SetKind::Intersection(members) => {
                for m in members {
                    m.collect_active(z, tol, out);
                }
            }
        }
    }

    /// `Π_X(z, v)`: `v` itself in the interior, the projection of `v` onto the
    /// tangent cone `{w : ⟨n_i, w⟩ ≤ 0}` of the active constraints on the
    /// boundary, and the unit vector towards `P_X(z)` outside the set.
    ///
    /// On the boundary the outward part `Σ λ_i n_i` is found by a small
    /// nonnegative least-squares solve, which also covers corners with
    /// linearly dependent normals.
    pub fn tangent_project(&self, z: &DVector<f64>, v: &DVector<f64>) -> Result<TangentDecomposition, SetError> {
        check_dim(self.dim, z)?;
        check_dim(self.dim, v)?;
        let tol = tol_active(z);
        if self.constraint_violation(z) > tol {
            let p = self.project(z)?;
            let d = (&p - z).norm();
            if d > 0.0 {
                return Ok(TangentDecomposition {
                    projected: (p - z) / d,
                    active_normals: Vec::new(),
                    beta: 0.0,
                    location: Location::Exterior,
                });
            }
        }
        let normals = self.active_normals(z, tol);
        if normals.is_empty() {
            return Ok(TangentDecomposition {
                projected: v.clone(),
                active_normals: normals,
                beta: 0.0,
                location: Location::Interior,
            });
        }
        let e = DMatrix::from_columns(&normals);
        let lambda = linalg::nnls(&e, v, 100).ok_or(SetError::DegenerateNormalCone)?;
        let removed = &e * lambda;
        Ok(TangentDecomposition {
            projected: v - &removed,
            beta: removed.norm(),
            active_normals: normals,
            location: Location::Boundary,
        })
    }

    /// Difference quotient `(P_X(z + δ v) − z) / δ`, an independent check of
    /// [`tangent_project`](Self::tangent_project).
    pub fn finite_difference_pi(&self, z: &DVector<f64>, v: &DVector<f64>, delta: f64) -> Result<DVector<f64>, SetError> {
        if !(delta > 0.0) {
            return Err(SetError::Invalid("delta must be positive".into()));
        }
        check_dim(self.dim, z)?;
        Ok((self.project(&(z + v * delta))? - z) / delta)
    }

    /// Axis-aligned bounding box, `None` for unbounded sets.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        match &self.kind {
            SetKind::Ball { center, radius } => Some((center.add_scalar(-radius), center.add_scalar(*radius))),
            SetKind::AxisBox { lower, upper } => Some((lower.clone(), upper.clone())),
            SetKind::HPolyhedron(rows) => polyhedron::bounding_box(rows, self.dim),
            SetKind::Intersection(members) => {
                let rows: Vec<HalfSpace> = members
                    .iter()
                    .filter_map(|m| match &m.kind {
                        SetKind::HPolyhedron(r) => Some(r.clone()),
                        _ => None,
                    })
                    .flatten()
                    .collect();
                let mut boxes: Vec<_> = members
                    .iter()
                    .filter_map(|m| match m.kind {
                        SetKind::HPolyhedron(_) => None,
                        _ => m.bounding_box(),
                    })
                    .collect();
                if !rows.is_empty() {
                    if let Some(b) = polyhedron::bounding_box(&rows, self.dim) {
                        boxes.push(b);
                    }
                }
                let (mut lo, mut hi) = boxes.pop()?;
                for (l, h) in boxes {
                    lo = lo.sup(&l);
                    hi = hi.inf(&h);
                }
                Some((lo, hi))
            }
        }
    }

    /// Vertices of a bounded polyhedron (brute-force enumeration); `None`
    /// for other kinds.
    pub fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        match &self.kind {
            SetKind::HPolyhedron(rows) => Some(polyhedron::vertices(rows, self.dim)),
            SetKind::AxisBox { lower, upper } => {
                let n = self.dim;
                Some(
                    (0..(1usize << n))
                        .map(|mask| DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { upper[i] } else { lower[i] }))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Diameter (exact for balls, boxes and bounded polyhedra; the bounding-box
    /// diagonal for intersections); infinite for unbounded sets.
    pub fn diameter(&self) -> f64 {
        match &self.kind {
            SetKind::Ball { radius, .. } => 2.0 * radius,
            SetKind::AxisBox { lower, upper } => (upper - lower).norm(),
            SetKind::HPolyhedron(rows) => {
                if polyhedron::bounding_box(rows, self.dim).is_none() {
                    return f64::INFINITY;
                }
                let verts = polyhedron::vertices(rows, self.dim);
                let mut best = 0.0_f64;
                for (i, a) in verts.iter().enumerate() {
                    for b in &verts[i + 1..] {
                        best = best.max((a - b).norm());
                    }
                }
                best
            }
            SetKind::Intersection(_) => match self.bounding_box() {
                Some((lo, hi)) => (hi - lo).norm(),
                None => f64::INFINITY,
            },
        }
    }

    /// The set shifted by `offset`.
    pub fn translated(&self, offset: &DVector<f64>) -> Result<Self, SetError> {
        check_dim(self.dim, offset)?;
        let kind = match &self.kind {
            SetKind::HPolyhedron(rows) => SetKind::HPolyhedron(
                rows.iter()
                    .map(|r| HalfSpace {
                        normal: r.normal.clone(),
                        offset: r.offset + r.normal.dot(offset),
                    })
                    .collect(),
            ),
            SetKind::Ball { center, radius } => SetKind::Ball {
                center: center + offset,
                radius: *radius,
            },
            SetKind::AxisBox { lower, upper } => SetKind::AxisBox {
                lower: lower + offset,
                upper: upper + offset,
            },
            SetKind::Intersection(members) => {
                SetKind::Intersection(members.iter().map(|m| m.translated(offset)).collect::<Result<_, _>>()?)
            }
        };
        Ok(Self {
            kind,
            dim: self.dim,
            interior: &self.interior + offset,
        })
    }

    /// A random point of the set. Uniform for balls and boxes; rejection
    /// sampling from the bounding box otherwise (falls back to the interior
    /// point for unbounded sets).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.kind {
            SetKind::Ball { center, radius } => {
                let dir = unit_direction(rng, self.dim);
                let r = radius * rng.random::<f64>().powf(1.0 / self.dim as f64);
                center + dir * r
            }
            SetKind::AxisBox { lower, upper } => {
                DVector::from_fn(self.dim, |i, _| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>())
            }
            _ => {
                let Some((lo, hi)) = self.bounding_box() else {
                    return self.interior.clone();
                };
                for _ in 0..10_000 {
                    let z = DVector::from_fn(self.dim, |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
                    if self.constraint_violation(&z) == 0.0 {
                        return z;
                    }
                }
                self.interior.clone()
            }
        }
    }

    /// A random boundary point: the projection of a far-away point in a random
    /// direction from the interior point.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>, SetError> {
        let reach = if self.diameter().is_finite() {
            2.0 * self.diameter()
        } else {
            1e3
        };
        let dir = unit_direction(rng, self.dim);
        self.project(&(&self.interior + dir * reach.max(1.0)))
    }
}

/// Uniform random unit vector (rejection from the cube).
pub(crate) fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let d = DVector::from_fn(dim, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let n = d.norm();
        if n > 1e-3 && n <= 1.0 {
            return d / n;
        }
    }
}

/// Strictly feasible point of an intersection by Kelley cutting planes on
/// `max t s.t. depth_j(x) ≥ t`: polyhedra and boxes contribute their rows,
/// balls contribute tangent cuts refined at each iterate.
fn common_interior_point(members: &[ConvexSet], dim: usize) -> Result<DVector<f64>, SetError> {
    let mut rows: Vec<HalfSpace> = Vec::new();
    let axis = |i: usize, sign: f64| {
        let mut e = DVector::zeros(dim);
        e[i] = sign;
        e
    };
    for m in members {
        match &m.kind {
            SetKind::HPolyhedron(r) => rows.extend(r.iter().cloned()),
            SetKind::AxisBox { lower, upper } => {
                for i in 0..dim {
                    rows.push(HalfSpace {
                        normal: axis(i, 1.0),
                        offset: upper[i],
                    });
                    rows.push(HalfSpace {
                        normal: axis(i, -1.0),
                        offset: -lower[i],
                    });
                }
            }
            SetKind::Ball { center, radius } => {
                for i in 0..dim {
                    for sign in [1.0, -1.0] {
                        let n = axis(i, sign);
                        let offset = n.dot(center) + radius;
                        rows.push(HalfSpace { normal: n, offset });
                    }
                }
            }
            SetKind::Intersection(_) => unreachable!("intersections are flattened"),
        }
    }
    let depth = |z: &DVector<f64>| members.iter().map(|m| m.depth(z)).fold(f64::INFINITY, f64::min);
    for _ in 0..200 {
        let (x, t) = polyhedron::chebyshev_center(&rows, dim).ok_or(SetError::EmptyInterior)?;
        if t <= 0.0 {
            return Err(SetError::EmptyInterior);
        }
        let d = depth(&x);
        if d > 0.0 && d >= 0.5 * t.min(1e12) {
            return Ok(x);
        }
        for m in members {
            if let SetKind::Ball { center, radius } = &m.kind {
                let diff = &x - center;
                let n = diff.norm();
                if n > 0.0 && radius - n < t {
                    let normal = diff / n;
                    let offset = normal.dot(center) + radius;
                    rows.push(HalfSpace { normal, offset });
                }
            }
        }
    }
    let (x, _) = polyhedron::chebyshev_center(&rows, dim).ok_or(SetError::EmptyInterior)?;
    if depth(&x) > 0.0 {
        Ok(x)
    } else {
        Err(SetError::EmptyInterior)
    }
}
