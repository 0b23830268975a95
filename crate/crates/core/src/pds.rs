//! Projected dynamical systems `ż = Π_X(z, −F(z))`.
//!
//! Integration is projected explicit Euler: predictor `z − h F(z)` followed by
//! the Euclidean projection onto `X`, which keeps every accepted state exactly
//! feasible. Starts outside `X` first travel at unit speed towards `P_X(z0)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::fmt17;
use crate::sets::{tol_active, ConvexSet, SetError};

#[derive(Debug, Error)]
pub enum PdsError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step too large: h·‖F‖ = {displacement:.3e} exceeds the set diameter {diameter:.3e}")]
    StepTooLarge { displacement: f64, diameter: f64 },
    #[error("field returned a non-finite value at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A vector field `F: R^q → R^q`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, z: &DVector<f64>) -> DVector<f64>;
    /// Analytic Jacobian, when known.
    fn jacobian(&self, _z: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.f)(z)
    }
}

/// Affine field `F(z) = A z + b`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn evaluate(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.a * z + &self.b
    }
    fn jacobian(&self, _z: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdsTermination {
    ReachedHorizon,
    EquilibriumDetected,
    StepFailure,
}

impl PdsTermination {
    pub fn as_str(self) -> &'static str {
        match self {
            PdsTermination::ReachedHorizon => "reached_horizon",
            PdsTermination::EquilibriumDetected => "equilibrium_detected",
            PdsTermination::StepFailure => "step_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PdsTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub termination: PdsTermination,
    /// Largest distance from `X` of any state recorded after entering `X`.
    pub max_violation: f64,
    /// Time at which the exterior phase ended (0 for starts inside `X`).
    pub entry_time: f64,
}

impl PdsTrajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    /// CSV with header `t,z_1,...,z_q`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PdsError> {
        let q = self.states.first().map_or(0, |s| s.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=q).map(|i| format!("z_{i}")));
        out.write_record(&header)?;
        for (t, z) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt17(*t)];
            row.extend(z.iter().map(|v| fmt17(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdsOptions {
    /// Equilibrium threshold on `‖Π_X(z, −F(z))‖`; defaults to
    /// `1e-8 · max(1, ‖F(z_entry)‖)`.
    pub tol_eq: Option<f64>,
    /// Consecutive steps below `tol_eq` before stopping.
    pub n_consecutive: usize,
    /// Stop on equilibrium detection at all.
    pub detect_equilibrium: bool,
}

impl Default for PdsOptions {
    fn default() -> Self {
        Self {
            tol_eq: None,
            n_consecutive: 5,
            detect_equilibrium: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistenceEstimate {
    pub growth_b: f64,
    pub one_sided_b: f64,
    pub sample_count: usize,
}

fn check_dim(expected: usize, v: &DVector<f64>) -> Result<(), PdsError> {
    if v.len() != expected {
        return Err(PdsError::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

fn check_field(set: &ConvexSet, field: &dyn VectorField) -> Result<(), PdsError> {
    if field.dim() != set.dim() {
        return Err(PdsError::DimensionMismatch {
            expected: set.dim(),
            found: field.dim(),
        });
    }
    Ok(())
}

/// One projected-Euler step `P_X(z − h F(z))`.
pub fn step_projected_euler(
    set: &ConvexSet,
    field: &dyn VectorField,
    z: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, PdsError> {
    check_field(set, field)?;
    check_dim(set.dim(), z)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(PdsError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let f = field.evaluate(z);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(PdsError::NonFinite(f64::NAN));
    }
    Ok(set.project(&(z - f * h))?)
}

/// `‖Π_X(z, −F(z))‖ ≤ tol`.
pub fn is_equilibrium(set: &ConvexSet, field: &dyn VectorField, z: &DVector<f64>, tol: f64) -> Result<bool, PdsError> {
    check_field(set, field)?;
    let pi = set.tangent_project(z, &-field.evaluate(z))?;
    Ok(pi.projected.norm() <= tol)
}

/// Fixed-step simulation on `[0, horizon]`; the last step is shortened to
/// land on the horizon.
pub fn simulate_pds(
    set: &ConvexSet,
    field: &dyn VectorField,
    z0: &DVector<f64>,
    horizon: f64,
    h: f64,
    options: &PdsOptions,
) -> Result<PdsTrajectory, PdsError> {
    check_field(set, field)?;
    check_dim(set.dim(), z0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(PdsError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(PdsError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let diameter = set.diameter();
    let end_tol = 1e-12 * horizon;

    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut z = z0.clone();
    let mut t = 0.0;

    // exterior phase: unit speed straight at P_X(z0)
    if set.constraint_violation(z0) > tol_active(z0) {
        let target = set.project(z0)?;
        let gap = (&target - z0).norm();
        let dir = (&target - z0) / gap;
        let mut travelled = 0.0;
        while travelled < gap && t < horizon - end_tol {
            let step = h.min(horizon - t);
            if gap - travelled <= step {
                t += gap - travelled;
                travelled = gap;
                z = target.clone();
            } else {
                t += step;
                travelled += step;
                z = z0 + &dir * travelled;
            }
            times.push(t);
            states.push(z.clone());
        }
        if travelled < gap {
            return Ok(PdsTrajectory {
                times,
                states,
                termination: PdsTermination::ReachedHorizon,
                max_violation: 0.0,
                entry_time: f64::INFINITY,
            });
        }
    }
    let entry_time = t;
    let mut max_violation = set.constraint_violation(&z);

    let scale_field = field.evaluate(&z);
    let tol_eq = options.tol_eq.unwrap_or_else(|| 1e-8 * scale_field.norm().max(1.0));
    let mut quiet = 0usize;
    let mut termination = PdsTermination::ReachedHorizon;

    while t < horizon - end_tol {
        let f = field.evaluate(&z);
        if f.iter().any(|v| !v.is_finite()) {
            termination = PdsTermination::StepFailure;
            break;
        }
        if options.detect_equilibrium {
            let pi = set.tangent_project(&z, &-&f)?;
            if pi.projected.norm() < tol_eq {
                quiet += 1;
                if quiet >= options.n_consecutive {
                    termination = PdsTermination::EquilibriumDetected;
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        let step = h.min(horizon - t);
        let displacement = step * f.norm();
        if displacement > diameter {
            return Err(PdsError::StepTooLarge { displacement, diameter });
        }
        z = set.project(&(&z - f * step))?;
        t = if horizon - (t + step) <= end_tol { horizon } else { t + step };
        max_violation = max_violation.max(set.constraint_violation(&z));
        times.push(t);
        states.push(z.clone());
    }

    Ok(PdsTrajectory {
        times,
        states,
        termination,
        max_violation,
        entry_time,
    })
}

/// Sampled estimates of the linear-growth constant `sup ‖F(z)‖ / (1 + ‖z‖)`
/// and the one-sided Lipschitz constant
/// `sup ⟨−F(x) + F(y), x − y⟩ / ‖x − y‖²` over seeded points of the set.
///
/// Points are drawn sequentially from one seeded stream, so a larger
/// `samples` always extends the smaller sample set and the estimates are
/// monotone in it.
pub fn estimate_existence_constants(
    set: &ConvexSet,
    field: &dyn VectorField,
    samples: usize,
    seed: u64,
) -> Result<ExistenceEstimate, PdsError> {
    check_field(set, field)?;
    if samples < 2 {
        return Err(PdsError::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<DVector<f64>> = (0..samples).map(|_| set.sample(&mut rng)).collect();
    let values: Vec<DVector<f64>> = points.iter().map(|z| field.evaluate(z)).collect();

    let mut growth_b = 0.0_f64;
    for (z, f) in points.iter().zip(&values) {
        growth_b = growth_b.max(f.norm() / (1.0 + z.norm()));
    }
    let mut one_sided_b = f64::NEG_INFINITY;
    for i in 0..samples {
        for j in i + 1..samples {
            let d = &points[i] - &points[j];
            let d2 = d.norm_squared();
            if d2.sqrt() <= 1e-8 {
                continue;
            }
            let q = (&values[j] - &values[i]).dot(&d) / d2;
            one_sided_b = one_sided_b.max(q);
        }
    }
    if one_sided_b == f64::NEG_INFINITY {
        one_sided_b = 0.0;
    }
    Ok(ExistenceEstimate {
        growth_b,
        one_sided_b,
        sample_count: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn boxed(lo: &[f64], hi: &[f64]) -> ConvexSet {
        ConvexSet::axis_box(v(lo), v(hi)).unwrap()
    }

    #[test]
    fn euler_step_in_the_interior() {
        let set = boxed(&[-10.0], &[10.0]);
        let f = FnField::new(1, |z: &DVector<f64>| z.clone());
        let z = step_projected_euler(&set, &f, &v(&[1.0]), 0.1).unwrap();
        assert!((z[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn euler_step_absorbed_by_boundary() {
        let set = boxed(&[0.0], &[1.0]);
        let f = FnField::new(1, |_: &DVector<f64>| v(&[-1.0]));
        let z = step_projected_euler(&set, &f, &v(&[1.0]), 0.1).unwrap();
        assert_eq!(z[0], 1.0);
    }

    #[test]
    fn euler_step_slides_along_face() {
        let set = boxed(&[0.0, 0.0], &[1.0, 1.0]);
        let f = FnField::new(2, |_: &DVector<f64>| v(&[-1.0, 1.0]));
        let z0 = v(&[1.0, 0.5]);
        let z = step_projected_euler(&set, &f, &z0, 0.1).unwrap();
        let oracle = set.project(&v(&[1.1, 0.4])).unwrap();
        assert!((&z - &oracle).norm() < 1e-15);
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn boundary_equilibrium_with_nonzero_field() {
        let set = boxed(&[0.0], &[1.0]);
        let f = FnField::new(1, |z: &DVector<f64>| z.add_scalar(-2.0));
        let traj = simulate_pds(&set, &f, &v(&[0.2]), 10.0, 1e-2, &PdsOptions::default()).unwrap();
        assert_eq!(traj.termination, PdsTermination::EquilibriumDetected);
        assert!((traj.final_state()[0] - 1.0).abs() < 1e-12);
        assert!(is_equilibrium(&set, &f, traj.final_state(), 1e-8).unwrap());
    }

    #[test]
    fn exterior_start_arrives_at_unit_speed() {
        let set = ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let f = FnField::new(2, |_: &DVector<f64>| v(&[0.0, 0.0]));
        let h = 0.03;
        let traj = simulate_pds(&set, &f, &v(&[3.0, 0.0]), 5.0, h, &PdsOptions::default()).unwrap();
        assert!((traj.entry_time - 2.0).abs() <= 2.0 * h);
        assert!((traj.final_state() - v(&[1.0, 0.0])).norm() < 1e-12);
        for (t, z) in traj.times.iter().zip(&traj.states) {
            if *t >= traj.entry_time {
                assert!(set.contains(z, 1e-12));
            }
        }
    }

    #[test]
    fn stable_linear_flow_reaches_origin() {
        let set = boxed(&[-1.0, -1.0], &[1.0, 1.0]);
        let f = FnField::new(2, |z: &DVector<f64>| z.clone());
        let traj = simulate_pds(&set, &f, &v(&[0.5, -0.5]), 40.0, 1e-2, &PdsOptions::default()).unwrap();
        assert!(traj.final_state().norm() < 1e-7);
    }

    #[test]
    fn equilibrium_predicate() {
        let set = boxed(&[0.0], &[1.0]);
        let zero = FnField::new(1, |_: &DVector<f64>| v(&[0.0]));
        assert!(is_equilibrium(&set, &zero, &v(&[0.5]), 1e-12).unwrap());
        let out = FnField::new(1, |_: &DVector<f64>| v(&[-3.0]));
        assert!(is_equilibrium(&set, &out, &v(&[1.0]), 1e-12).unwrap());
        let inward = FnField::new(1, |_: &DVector<f64>| v(&[3.0]));
        assert!(!is_equilibrium(&set, &inward, &v(&[1.0]), 1e-12).unwrap());
    }

    #[test]
    fn oversized_step_is_rejected() {
        let set = boxed(&[0.0], &[1.0]);
        let f = FnField::new(1, |_: &DVector<f64>| v(&[100.0]));
        let err = simulate_pds(&set, &f, &v(&[0.5]), 1.0, 0.1, &PdsOptions::default()).unwrap_err();
        assert!(matches!(err, PdsError::StepTooLarge { .. }));
    }

    #[test]
    fn non_finite_field_stops_the_run() {
        let set = boxed(&[0.0], &[1.0]);
        let f = FnField::new(1, |_: &DVector<f64>| v(&[f64::NAN]));
        let traj = simulate_pds(&set, &f, &v(&[0.5]), 1.0, 0.1, &PdsOptions::default()).unwrap();
        assert_eq!(traj.termination, PdsTermination::StepFailure);
    }

    #[test]
    fn existence_constants_match_closed_forms() {
        let ball = ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let id = FnField::new(2, |z: &DVector<f64>| z.clone());
        let est = estimate_existence_constants(&ball, &id, 200, 7).unwrap();
        assert!(est.growth_b > 0.0 && est.growth_b <= 0.5);

        let c = FnField::new(2, |_: &DVector<f64>| v(&[3.0, 4.0]));
        let est = estimate_existence_constants(&ball, &c, 50, 7).unwrap();
        assert!(est.growth_b <= 5.0 && est.growth_b > 2.5);
        assert!(est.one_sided_b.abs() < 1e-15);

        let neg = FnField::new(2, |z: &DVector<f64>| -z);
        let est = estimate_existence_constants(&ball, &neg, 50, 7).unwrap();
        assert!((est.one_sided_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn existence_constants_grow_with_nested_samples() {
        let ball = ConvexSet::ball(v(&[0.0, 0.0]), 2.0).unwrap();
        let f = FnField::new(2, |z: &DVector<f64>| v(&[z[0] * z[0], z[1].sin()]));
        let small = estimate_existence_constants(&ball, &f, 20, 3).unwrap();
        let large = estimate_existence_constants(&ball, &f, 80, 3).unwrap();
        assert!(large.growth_b >= small.growth_b);
        assert!(large.one_sided_b >= small.one_sided_b);
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let set = boxed(&[0.0], &[1.0]);
        let f = FnField::new(1, |z: &DVector<f64>| z.clone());
        let traj = simulate_pds(&set, &f, &v(&[1.0 / 3.0]), 0.2, 0.1, &PdsOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,z_1");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
