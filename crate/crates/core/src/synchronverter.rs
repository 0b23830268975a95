//! Grid-connected synchronverter: a 4th-order synchronous-machine emulator
//! against an infinite bus, with state `x = [i_d, i_q, ω, δ]`, input
//! `v = [T_m, i_f]` and output `y = [P, Q]`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    grid_nodes, linearization_certificate, min_sym_jacobian_eigenvalue, AnalysisError, CertificateOptions, SteadyStateMaps,
};
use crate::control::{AwPiController, ControlError, InputMap, IntegratorMode, MatrixMap, Plant, PlantError, ReferenceStep};
use crate::linalg::fmt17;
use crate::sets::{ConvexSet, SetError};

#[derive(Debug, Error)]
pub enum SvError {
    #[error("U construction failed at vertex {vertex:?}: {reason}")]
    ConstructionFailure { vertex: Vec<f64>, reason: String },
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Machine and grid parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvParams {
    /// Rotor inertia.
    pub j: f64,
    /// Frequency droop.
    pub dp: f64,
    pub r: f64,
    pub l: f64,
    /// `√(3/2)·M_f`.
    pub m: f64,
    /// Rms line voltage.
    pub v: f64,
    pub omega_n: f64,
    pub omega_g: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        Self {
            j: 0.2,
            dp: 3.0,
            r: 1.875,
            l: 56.75e-3,
            m: 3.5,
            v: 230.0 * 3f64.sqrt(),
            omega_n: 100.0 * PI,
            omega_g: 100.0 * PI,
        }
    }
}

impl SvParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let named = [
            ("J", self.j),
            ("Dp", self.dp),
            ("R", self.r),
            ("L", self.l),
            ("m", self.m),
            ("V", self.v),
            ("omega_g", self.omega_g),
        ];
        for (name, x) in named {
            if !(x.is_finite() && x > 0.0) {
                return Err(PlantError::Invalid(format!("{name} must be positive and finite, got {x}")));
            }
        }
        if !self.omega_n.is_finite() {
            return Err(PlantError::Invalid("omega_n must be finite".into()));
        }
        Ok(())
    }

    /// `p = R/L`.
    pub fn p(&self) -> f64 {
        self.r / self.l
    }

    /// `φ` with `tan φ = ω_g L / R`.
    pub fn phi(&self) -> f64 {
        (self.omega_g * self.l / self.r).atan()
    }

    /// `C = (−V²/(2R), 0)`.
    pub fn c_point(&self) -> DVector<f64> {
        DVector::from_vec(vec![-self.v * self.v / (2.0 * self.r), 0.0])
    }

    /// `Z = (R, ω_g L)`.
    pub fn z_vec(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.r, self.omega_g * self.l])
    }

    /// `M = −(V²/‖Z‖²) Z`.
    pub fn m_point(&self) -> DVector<f64> {
        let z = self.z_vec();
        -(self.v * self.v / z.norm_squared()) * z
    }

    /// Unit normal of the line through `C` and `M`, pointing away from the
    /// side that contains the origin.
    pub fn cm_normal(&self) -> DVector<f64> {
        let d = self.m_point() - self.c_point();
        let mut n = DVector::from_vec(vec![d[1], -d[0]]).normalize();
        if n.dot(&-self.c_point()) > 0.0 {
            n = -n;
        }
        n
    }
}

/// Angle wrapped into `(−π, π]`.
pub fn canonical_angle(delta: f64) -> f64 {
    PI - (PI - delta).rem_euclid(2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynchronverterState {
    pub i_d: f64,
    pub i_q: f64,
    pub omega: f64,
    /// Power angle in `(−π, π]`.
    pub delta: f64,
}

impl SynchronverterState {
    pub fn new(i_d: f64, i_q: f64, omega: f64, delta: f64) -> Self {
        Self {
            i_d,
            i_q,
            omega,
            delta: canonical_angle(delta),
        }
    }

    pub fn from_vector(x: &DVector<f64>) -> Result<Self, PlantError> {
        crate::control::check_len("synchronverter state", 4, x)?;
        Ok(Self::new(x[0], x[1], x[2], x[3]))
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.i_d, self.i_q, self.omega, self.delta])
    }
}

fn split_input(v: &DVector<f64>) -> Result<(f64, f64), PlantError> {
    crate::control::check_len("synchronverter input", 2, v)?;
    if !(v[1] > 0.0) {
        return Err(PlantError::NonPositiveFieldCurrent(v[1]));
    }
    Ok((v[0], v[1]))
}

/// `Λ(v)`; the constant-input equilibrium exists iff `|Λ(v)| < 1`.
pub fn lambda(params: &SvParams, v: &DVector<f64>) -> Result<f64, PlantError> {
    let (tm, i_f) = split_input(v)?;
    let p = params.p();
    let s = (p * p + params.omega_g * params.omega_g).sqrt();
    Ok(-(tm / (params.m * i_f)) * params.l * s / params.v + params.m * i_f * params.omega_g * p / (params.v * s))
}

/// Closed-form equilibrium `Ξ(v)` (the stable branch `δ = arccos Λ − φ`).
pub fn xi(params: &SvParams, v: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
    let lam = lambda(params, v)?;
    if !(lam.abs() < 1.0) {
        return Err(PlantError::InfeasibleInput(format!(
            "|Λ({:?})| = {:.6} ≥ 1",
            v.as_slice(),
            lam.abs()
        )));
    }
    let (tm, i_f) = (v[0], v[1]);
    let delta = lam.acos() - params.phi();
    let mi = params.m * i_f;
    Ok(SynchronverterState::new(
        -tm * params.omega_g / (mi * params.p()) + params.v * delta.sin() / params.r,
        -tm / mi,
        params.omega_g,
        delta,
    )
    .to_vector())
}

/// `G⁻¹_right(u)`: the input whose equilibrium delivers the power pair `u`.
pub fn right_inverse(params: &SvParams, u: &DVector<f64>) -> DVector<f64> {
    let v2 = params.v * params.v;
    let num = 4.0 * params.r * params.r * (u - params.c_point()).norm_squared() - v2 * v2;
    DVector::from_vec(vec![
        num / (4.0 * v2 * params.omega_g * params.r),
        (u - params.m_point()).norm() * params.z_vec().norm() / (params.v * params.omega_g * params.m),
    ])
}

/// The synchronverter as a [`Plant`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synchronverter {
    params: SvParams,
    bounds: (DVector<f64>, DVector<f64>),
}

impl Synchronverter {
    pub fn new(params: SvParams) -> Result<Self, PlantError> {
        params.validate()?;
        Ok(Self {
            params,
            bounds: input_rectangle(),
        })
    }

    pub fn params(&self) -> &SvParams {
        &self.params
    }
}

/// The input rectangle `[−60, 70] × [0.01, 1.2]` used for region scans.
pub fn input_rectangle() -> (DVector<f64>, DVector<f64>) {
    (DVector::from_vec(vec![-60.0, 0.01]), DVector::from_vec(vec![70.0, 1.2]))
}

impl Plant for Synchronverter {
    fn name(&self) -> &str {
        "synchronverter"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }

    fn rhs(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        crate::control::check_len("synchronverter state", 4, x)?;
        let (tm, i_f) = split_input(v)?;
        let p = &self.params;
        let (i_d, i_q, w, d) = (x[0], x[1], x[2], x[3]);
        let (s, c) = d.sin_cos();
        Ok(DVector::from_vec(vec![
            (-p.r * i_d + w * p.l * i_q + p.v * s) / p.l,
            (-w * p.l * i_d - p.r * i_q - p.m * i_f * w + p.v * c) / p.l,
            (p.m * i_f * i_q - p.dp * w + tm + p.dp * p.omega_n) / p.j,
            w - p.omega_g,
        ]))
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        let (s, c) = x[3].sin_cos();
        let v = self.params.v;
        DVector::from_vec(vec![-v * (c * x[1] + s * x[0]), -v * (-s * x[1] + c * x[0])])
    }

    fn input_admissible(&self, v: &DVector<f64>) -> bool {
        v.len() == 2 && v.iter().all(|c| c.is_finite()) && lambda(&self.params, v).is_ok_and(|l| l.abs() < 1.0)
    }

    fn input_bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some(self.bounds.clone())
    }

    fn analytic_steady_state(&self, v: &DVector<f64>) -> Option<Result<DVector<f64>, PlantError>> {
        Some(xi(&self.params, v))
    }

    fn state_jacobian(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        if x.len() != 4 || v.len() != 2 {
            return None;
        }
        let p = &self.params;
        let (i_d, i_q, w, d) = (x[0], x[1], x[2], x[3]);
        let i_f = v[1];
        let (s, c) = d.sin_cos();
        let rl = p.r / p.l;
        #[rustfmt::skip]
        let jac = DMatrix::from_row_slice(4, 4, &[
            -rl, w, i_q, p.v * c / p.l,
            -w, -rl, (-p.l * i_d - p.m * i_f) / p.l, -p.v * s / p.l,
            0.0, p.m * i_f / p.j, -p.dp / p.j, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        Some(jac)
    }

    fn canonicalize(&self, x: &mut DVector<f64>) {
        if x.len() == 4 {
            x[3] = canonical_angle(x[3]);
        }
    }

    fn default_state_guess(&self, v: &DVector<f64>) -> DVector<f64> {
        xi(&self.params, v).unwrap_or_else(|_| DVector::from_vec(vec![0.0, 0.0, self.params.omega_g, 0.0]))
    }
}

/// [`right_inverse`] as an [`InputMap`]. Its domain is the open half-plane
/// strictly on the origin's side of the `C`–`M` line (the other side maps
/// onto the same inputs) intersected with `|Λ(𝒩(u))| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvRightInverse {
    pub params: SvParams,
}

impl InputMap for SvRightInverse {
    fn name(&self) -> &str {
        "sv-right-inverse"
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        right_inverse(&self.params, u)
    }
    fn in_domain(&self, u: &DVector<f64>) -> bool {
        if u.len() != 2 || u.iter().any(|c| !c.is_finite()) {
            return false;
        }
        let n = self.params.cm_normal();
        n.dot(u) < n.dot(&self.params.c_point()) && lambda(&self.params, &self.apply(u)).is_ok_and(|l| l.abs() < 1.0)
    }
}

/// The baseline static map `K = diag(1/50, 1/5000)`.
pub fn static_gain_k() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 50.0, 1.0 / 5000.0]))
}

pub fn static_gain_map() -> MatrixMap {
    MatrixMap::labelled(static_gain_k(), "static-matrix K")
}

/// Shape of the constraint polygon `U` in the `(P, Q)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UOptions {
    /// Circumradius of the regular polygon (VA).
    pub radius: f64,
    pub vertices: usize,
    /// Inward offset of the clipping edge from the `C`–`M` line (VA).
    pub margin: f64,
}

impl Default for UOptions {
    fn default() -> Self {
        Self {
            radius: 15_000.0,
            vertices: 12,
            margin: 500.0,
        }
    }
}

/// Half-plane rows of `U`: a regular polygon inscribed in the disk of the
/// given radius (one vertex on the positive `P` axis), clipped by a line
/// parallel to `C`–`M` shifted `margin` towards the origin.
pub fn u_rows(params: &SvParams, opts: &UOptions) -> Vec<(DVector<f64>, f64)> {
    let n = opts.vertices;
    let vertex = |i: usize| {
        let a = 2.0 * PI * i as f64 / n as f64;
        DVector::from_vec(vec![opts.radius * a.cos(), opts.radius * a.sin()])
    };
    let mut rows: Vec<(DVector<f64>, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (vertex(i), vertex((i + 1) % n));
            let e = &b - &a;
            let normal = DVector::from_vec(vec![e[1], -e[0]]).normalize();
            let off = normal.dot(&a);
            (normal, off)
        })
        .collect();
    let cm = params.cm_normal();
    let off = cm.dot(&params.c_point()) - opts.margin;
    rows.push((cm, off));
    rows
}

/// Builds `U` and checks every vertex: inside the disk, strictly on the
/// origin's side of the `C`–`M` line, `|Λ(𝒩(vertex))| < 1`, and the
/// symmetric part of `∂(G∘𝒩)/∂u` positive definite there.
pub fn build_u(params: &SvParams, opts: &UOptions) -> Result<ConvexSet, SvError> {
    if opts.vertices < 3 || !(opts.radius > 0.0) || !(opts.margin >= 0.0) {
        return Err(SvError::ConstructionFailure {
            vertex: vec![],
            reason: "need at least 3 vertices, a positive radius and a nonnegative margin".into(),
        });
    }
    let set = ConvexSet::polyhedron(u_rows(params, opts))?;
    let plant = Synchronverter::new(*params)?;
    let nmap = SvRightInverse { params: *params };
    let maps = SteadyStateMaps::new(Arc::new(plant), Arc::new(nmap))?;
    let composed = |u: &DVector<f64>| maps.composed(u).ok();
    let cm = params.cm_normal();
    let line = cm.dot(&params.c_point());
    for vtx in set.vertices().unwrap_or_default() {
        let fail = |reason: String| SvError::ConstructionFailure {
            vertex: vtx.iter().copied().collect(),
            reason,
        };
        if vtx.norm() > opts.radius * (1.0 + 1e-9) {
            return Err(fail(format!("outside the {} VA disk", opts.radius)));
        }
        if cm.dot(&vtx) >= line {
            return Err(fail("not strictly above the C–M line".into()));
        }
        let lam = lambda(params, &right_inverse(params, &vtx))?;
        if !(lam.abs() < 1.0) {
            return Err(fail(format!("|Λ| = {:.6} ≥ 1", lam.abs())));
        }
        match min_sym_jacobian_eigenvalue(&composed, &vtx) {
            Some(e) if e > 0.0 => {}
            Some(e) => return Err(fail(format!("monotonicity test fails ({e:.3e})"))),
            None => return Err(fail("composed map undefined near the vertex".into())),
        }
    }
    Ok(set)
}

/// Reference values of the 100 s experiment (W, VAR), 10 s each.
pub const POWER_SCHEDULE: [[f64; 2]; 10] = [
    [-4e3, 9e3],
    [-5e3, 17e3],
    [3e3, 12e3],
    [5e3, 16e3],
    [6e3, 12e3],
    [10e3, 15e3],
    [11e3, 7e3],
    [17e3, 2e3],
    [12e3, -7e3],
    [5e3, -2e3],
];

pub fn power_schedule() -> Vec<ReferenceStep> {
    POWER_SCHEDULE
        .iter()
        .map(|r| ReferenceStep {
            r: DVector::from_column_slice(r),
            duration: 10.0,
        })
        .collect()
}

/// Saturating loop with `𝒩 = G⁻¹_right` (no proportional path).
pub fn saturating_controller(params: &SvParams, u_set: ConvexSet, k: f64) -> Result<AwPiController, ControlError> {
    AwPiController::new(
        u_set,
        Arc::new(SvRightInverse { params: *params }),
        k,
        0.0,
        IntegratorMode::Saturating,
    )
}

/// Classical integrator with `𝒩 = K`. `U` is carried along only for the
/// boundary diagnostics; the classical flow ignores it.
pub fn classical_controller(u_set: ConvexSet, k: f64) -> Result<AwPiController, ControlError> {
    AwPiController::new(u_set, Arc::new(static_gain_map()), k, 0.0, IntegratorMode::Classical)
}

/// Default initial condition: `u0 = P_U(r)` and the matching equilibrium
/// `x0 = Ξ(𝒩(u0))`.
pub fn initial_condition(
    params: &SvParams,
    u_set: &ConvexSet,
    r: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), SvError> {
    let u0 = u_set.project(r)?;
    let x0 = xi(params, &right_inverse(params, &u0))?;
    Ok((x0, u0))
}

/// Integrator state for the `𝒩 = K` loop that drives the plant with the same
/// input as `u0_saturating` does under `G⁻¹_right`: `K⁻¹ 𝒩(u0)`.
pub fn classical_initial_integrator(params: &SvParams, u0_saturating: &DVector<f64>) -> DVector<f64> {
    let v = right_inverse(params, u0_saturating);
    DVector::from_vec(vec![v[0] * 50.0, v[1] * 5000.0])
}

/// One node of the input-plane raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionNode {
    pub v1: f64,
    pub v2: f64,
    pub lambda: f64,
    /// `NaN` where there is no equilibrium.
    pub spectral_abscissa: f64,
    /// Equilibrium exists and its linearization is stable.
    pub in_v: bool,
}

impl RegionNode {
    pub fn lambda_abs_lt_1(&self) -> bool {
        self.lambda.abs() < 1.0
    }
}

/// Evaluates `Λ` and the linearization certificate on an `nx × ny` grid over
/// `[lower, upper]` in the `(T_m, i_f)` plane.
pub fn region_raster(
    params: &SvParams,
    lower: [f64; 2],
    upper: [f64; 2],
    nx: usize,
    ny: usize,
) -> Result<Vec<RegionNode>, SvError> {
    let plant = Synchronverter::new(*params)?;
    let opts = CertificateOptions::default();
    Ok(grid_nodes(lower, upper, nx, ny)
        .par_iter()
        .map(|&(v1, v2)| {
            let v = DVector::from_vec(vec![v1, v2]);
            let lam = lambda(params, &v).unwrap_or(f64::NAN);
            let cert = if lam.abs() < 1.0 {
                linearization_certificate(&plant, &v, &opts).ok()
            } else {
                None
            };
            RegionNode {
                v1,
                v2,
                lambda: lam,
                spectral_abscissa: cert.as_ref().map_or(f64::NAN, |c| c.spectral_abscissa),
                in_v: cert.is_some_and(|c| c.stable),
            }
        })
        .collect())
}

/// Share of nodes with `|Λ| < 1 − band` whose certificate is stable, and
/// the number of such nodes.
pub fn region_agreement(nodes: &[RegionNode], band: f64) -> (f64, usize) {
    let feasible: Vec<&RegionNode> = nodes.iter().filter(|n| n.lambda.abs() < 1.0 - band).collect();
    if feasible.is_empty() {
        return (1.0, 0);
    }
    let agree = feasible.iter().filter(|n| n.in_v).count();
    (agree as f64 / feasible.len() as f64, feasible.len())
}

/// CSV `v_1,v_2,in_V,spectral_abscissa,lambda_abs_lt_1`.
pub fn write_region_csv<W: Write>(nodes: &[RegionNode], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["v_1", "v_2", "in_V", "spectral_abscissa", "lambda_abs_lt_1"])?;
    for n in nodes {
        out.write_record([
            fmt17(n.v1),
            fmt17(n.v2),
            u8::from(n.in_v).to_string(),
            fmt17(n.spectral_abscissa),
            u8::from(n.lambda_abs_lt_1()).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One node of the output-plane raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputNode {
    pub u1: f64,
    pub u2: f64,
    /// In the domain of `G⁻¹_right`, i.e. in `𝒰`.
    pub in_feasible: bool,
    pub in_u: bool,
}

/// Marks `𝒰` and `U` on a grid over the `(P, Q)` plane.
pub fn output_raster(
    params: &SvParams,
    u_set: &ConvexSet,
    lower: [f64; 2],
    upper: [f64; 2],
    nx: usize,
    ny: usize,
) -> Vec<OutputNode> {
    let nmap = SvRightInverse { params: *params };
    grid_nodes(lower, upper, nx, ny)
        .into_iter()
        .map(|(u1, u2)| {
            let u = DVector::from_vec(vec![u1, u2]);
            OutputNode {
                u1,
                u2,
                in_feasible: nmap.in_domain(&u),
                in_u: u_set.contains(&u, 0.0),
            }
        })
        .collect()
}

/// CSV `u_1,u_2,in_calU,in_U`.
pub fn write_output_csv<W: Write>(nodes: &[OutputNode], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["u_1", "u_2", "in_calU", "in_U"])?;
    for n in nodes {
        out.write_record([
            fmt17(n.u1),
            fmt17(n.u2),
            u8::from(n.in_feasible).to_string(),
            u8::from(n.in_u).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::solve_steady_state;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn plant() -> Synchronverter {
        Synchronverter::new(SvParams::default()).unwrap()
    }

    #[test]
    fn geometric_constants() {
        let p = SvParams::default();
        assert_relative_eq!(p.v * p.v, 158_700.0, max_relative = 1e-12);
        assert_relative_eq!(p.c_point()[0], -158_700.0 / 3.75, max_relative = 1e-12);
        assert_eq!(p.c_point()[1], 0.0);
        assert_relative_eq!(p.z_vec()[1], 17.8285, epsilon = 1e-4);
        assert_relative_eq!(p.z_vec().norm_squared(), 321.37, epsilon = 0.01);
        let m = p.m_point();
        assert!((m[0] + 925.9).abs() < 0.1 && (m[1] + 8804.1).abs() < 0.1, "{m}");
    }

    #[test]
    fn equilibrium_is_a_zero_of_the_field() {
        let p = plant();
        let x = xi(p.params(), &v(&[5.0, 0.6])).unwrap();
        let f = p.rhs(&x, &v(&[5.0, 0.6])).unwrap();
        assert!(f.norm() <= 1e-9 * (1.0 + x.norm()), "{f}");
        assert_eq!(x[2], p.params().omega_g);
        let x = xi(p.params(), &v(&[7.0, 0.5])).unwrap();
        assert_relative_eq!(x[1], -4.0, max_relative = 1e-14);
    }

    #[test]
    fn newton_agrees_with_the_closed_form() {
        let p = plant();
        let vin = v(&[5.0, 0.6]);
        let exact = xi(p.params(), &vin).unwrap();
        let mut guess = exact.clone();
        guess[0] += 0.5;
        guess[1] -= 0.3;
        guess[3] += 0.05;
        let x = solve_steady_state(&p, &vin, &guess).unwrap();
        assert!((&x - &exact).norm() <= 1e-8 * exact.norm(), "{x} vs {exact}");
    }

    #[test]
    fn delta_is_still_when_speed_matches_the_grid() {
        let p = plant();
        let x = v(&[3.0, -2.0, p.params().omega_g, 1.0]);
        assert_eq!(p.rhs(&x, &v(&[1.0, 0.5])).unwrap()[3], 0.0);
    }

    #[test]
    fn non_positive_field_current_is_rejected() {
        let p = plant();
        assert!(matches!(
            p.rhs(&v(&[0.0, 0.0, 314.0, 0.0]), &v(&[1.0, 0.0])),
            Err(PlantError::NonPositiveFieldCurrent(_))
        ));
    }

    #[test]
    fn doubling_v_doubles_only_the_forcing() {
        let base = SvParams::default();
        let double = SvParams { v: 2.0 * base.v, ..base };
        let x = v(&[1.0, -2.0, 300.0, 0.4]);
        let vin = v(&[3.0, 0.5]);
        let a = Synchronverter::new(base).unwrap().rhs(&x, &vin).unwrap();
        let b = Synchronverter::new(double).unwrap().rhs(&x, &vin).unwrap();
        let d = &b - &a;
        assert_relative_eq!(d[0], base.v * 0.4f64.sin() / base.l, max_relative = 1e-12);
        assert_relative_eq!(d[1], base.v * 0.4f64.cos() / base.l, max_relative = 1e-12);
        assert_eq!((d[2], d[3]), (0.0, 0.0));
    }

    #[test]
    fn output_examples() {
        let p = plant();
        let vv = p.params().v;
        let y = p.output(&v(&[0.0, -1.0, 0.0, 0.0]));
        assert_relative_eq!(y[0], vv, max_relative = 1e-15);
        assert_eq!(y[1], 0.0);
        let y = p.output(&v(&[-1.0, 0.0, 0.0, PI / 2.0]));
        assert_relative_eq!(y[0], vv, max_relative = 1e-15);
        assert!(y[1].abs() < 1e-12 * vv);
    }

    #[test]
    fn lambda_zero_locus() {
        let p = SvParams::default();
        let i_f = 0.7;
        let tm = (p.m * i_f).powi(2) * p.omega_g * p.p() / (p.l * (p.p().powi(2) + p.omega_g.powi(2)));
        assert!(lambda(&p, &v(&[tm, i_f])).unwrap().abs() < 1e-14);
        assert!(lambda(&p, &v(&[70.0, 0.02])).unwrap() < -1.0);
        assert!(matches!(xi(&p, &v(&[70.0, 0.02])), Err(PlantError::InfeasibleInput(_))));
    }

    #[test]
    fn right_inverse_circle_gives_zero_torque() {
        let p = SvParams::default();
        let rad = p.v * p.v / (2.0 * p.r);
        let u = p.c_point() + v(&[0.6, 0.8]) * rad;
        assert!(right_inverse(&p, &u)[0].abs() < 1e-9);
    }

    #[test]
    fn right_inverse_reproduces_the_output() {
        let p = plant();
        for u in [v(&[-4000.0, 9000.0]), v(&[12000.0, -7000.0]), v(&[0.0, 0.0])] {
            let y = p.output(&xi(p.params(), &right_inverse(p.params(), &u)).unwrap());
            assert!((&y - &u).norm() <= 1e-6 * (1.0 + u.norm()), "{y} vs {u}");
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = plant();
        let vin = v(&[5.0, 0.6]);
        let x = xi(p.params(), &vin).unwrap() + v(&[0.3, -0.2, 1.0, 0.1]);
        let a = p.state_jacobian(&x, &vin).unwrap();
        let fd = crate::linalg::central_jacobian(|z| p.rhs(z, &vin), &x).unwrap();
        assert!((&a - &fd).norm() <= 1e-5 * a.norm(), "{a}{fd}");
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(canonical_angle(PI), PI);
        assert_eq!(canonical_angle(-PI), PI);
        assert_relative_eq!(canonical_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(canonical_angle(0.3 + 4.0 * PI), 0.3, epsilon = 1e-12);
        assert_eq!(SynchronverterState::new(0.0, 0.0, 0.0, 7.0).delta, canonical_angle(7.0));
    }

    #[test]
    fn static_gain_examples() {
        let k = static_gain_k();
        assert_eq!(&k * v(&[50.0, 5000.0]), v(&[1.0, 1.0]));
        assert_relative_eq!(k.determinant(), 1.0 / 250_000.0, max_relative = 1e-15);
    }

    #[test]
    fn u_polygon_properties() {
        let p = SvParams::default();
        let u = build_u(&p, &UOptions::default()).unwrap();
        let verts = u.vertices().unwrap();
        assert!(verts.len() >= 10);
        let cm = p.cm_normal();
        for x in &verts {
            assert!(x.norm() <= 15_000.0 + 1e-6);
            assert!(cm.dot(x) < cm.dot(&p.c_point()));
        }
        let q = u.project(&v(&[17_000.0, 2_000.0])).unwrap();
        assert!(q.norm() <= 15_000.0 + 1e-6);
        assert!(u.distance_to_boundary(&q) <= 1e-6);
    }

    #[test]
    fn bad_margin_fails_the_gate() {
        // a negative-free but huge margin empties U
        let err = build_u(
            &SvParams::default(),
            &UOptions {
                margin: 1e6,
                ..UOptions::default()
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn power_schedule_entries() {
        let s = power_schedule();
        assert_eq!(s.len(), 10);
        assert_eq!(s[8].r, v(&[12_000.0, -7_000.0]));
        assert_relative_eq!(s[7].r.norm(), 17_117.2, epsilon = 0.1);
        assert_eq!(s.iter().map(|x| x.duration).sum::<f64>(), 100.0);
    }

    #[test]
    fn small_raster_agrees() {
        let (lo, hi) = input_rectangle();
        let nodes = region_raster(&SvParams::default(), [lo[0], lo[1]], [hi[0], hi[1]], 14, 12).unwrap();
        assert_eq!(nodes.len(), 168);
        let (share, count) = region_agreement(&nodes, 0.05);
        assert!(count > 0 && share >= 0.99, "{share} over {count}");
        assert!(nodes.iter().all(|n| n.lambda_abs_lt_1() || !n.in_v));
        let mut buf = Vec::new();
        write_region_csv(&nodes, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("v_1,v_2,in_V,spectral_abscissa,lambda_abs_lt_1\n"));
    }
}
