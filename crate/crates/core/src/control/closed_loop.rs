//! The saturating-integrator PI loop
//!
//! ```text
//! ẋ   = f0(x, 𝒩(u)),      u = u_I + τ_p k (r − g(x))
//! u̇_I = Π_U(u_I, k (r − g(x)))
//! ```
//!
//! together with the classical integrator (`u̇_I = k e`) and the penalty
//! approximation `u̇_I = k e − (u_I − P_U(u_I)) / K` whose plant input is
//! `𝒩(P_U(u_I))`.
//!
//! Each step is operator-split: the plant state takes one RK4 step with
//! `u_I` frozen (the proportional path is re-evaluated at every stage), then
//! `u_I` takes one projected-Euler step driven by the error at the start of
//! the step.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::{InputMap, Plant, PlantError};
use crate::linalg::{self, fmt17};
use crate::sets::{ConvexSet, SetError};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("dimension mismatch in {what}: expected {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("controller input {0:?} is outside the region of interest")]
    LeftRegionOfInterest(Vec<f64>),
    #[error("schedule segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<ControlError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("metadata serialization: {0}")]
    Metadata(#[from] toml::ser::Error),
}

fn check_len(what: &'static str, expected: usize, v: &DVector<f64>) -> Result<(), ControlError> {
    if v.len() != expected {
        return Err(ControlError::DimensionMismatch {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorMode {
    /// `u̇_I = Π_U(u_I, k e)`.
    Saturating,
    /// `u̇_I = k e`, no constraint.
    Classical,
    /// `u̇_I = k e − (u_I − P_U(u_I)) / k_soft`.
    SoftProjection { k_soft: f64 },
}

impl IntegratorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntegratorMode::Saturating => "saturating",
            IntegratorMode::Classical => "classical",
            IntegratorMode::SoftProjection { .. } => "soft_projection",
        }
    }
}

#[derive(Clone)]
pub struct AwPiController {
    u_set: ConvexSet,
    nmap: Arc<dyn InputMap>,
    k: f64,
    tau_p: f64,
    mode: IntegratorMode,
}

impl fmt::Debug for AwPiController {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AwPiController")
            .field("u_set", &self.u_set)
            .field("nmap", &self.nmap.name())
            .field("k", &self.k)
            .field("tau_p", &self.tau_p)
            .field("mode", &self.mode)
            .finish()
    }
}

impl AwPiController {
    pub fn new(
        u_set: ConvexSet,
        nmap: Arc<dyn InputMap>,
        k: f64,
        tau_p: f64,
        mode: IntegratorMode,
    ) -> Result<Self, ControlError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(ControlError::InvalidArgument(format!("gain k must be positive, got {k}")));
        }
        if !(tau_p >= 0.0 && tau_p.is_finite()) {
            return Err(ControlError::InvalidArgument(format!(
                "tau_p must be nonnegative, got {tau_p}"
            )));
        }
        if let IntegratorMode::SoftProjection { k_soft } = mode {
            if !(k_soft > 0.0 && k_soft.is_finite()) {
                return Err(ControlError::InvalidArgument(format!(
                    "k_soft must be positive, got {k_soft}"
                )));
            }
            if tau_p != 0.0 {
                return Err(ControlError::InvalidArgument(
                    "the soft-projection loop is only defined for tau_p = 0".into(),
                ));
            }
        }
        if nmap.input_dim() != u_set.dim() {
            return Err(ControlError::DimensionMismatch {
                what: "input map domain vs U",
                expected: u_set.dim(),
                found: nmap.input_dim(),
            });
        }
        Ok(Self {
            u_set,
            nmap,
            k,
            tau_p,
            mode,
        })
    }

    pub fn u_set(&self) -> &ConvexSet {
        &self.u_set
    }
    pub fn nmap(&self) -> &Arc<dyn InputMap> {
        &self.nmap
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn tau_p(&self) -> f64 {
        self.tau_p
    }
    pub fn mode(&self) -> IntegratorMode {
        self.mode
    }

    pub fn with_gain(&self, k: f64) -> Result<Self, ControlError> {
        Self::new(self.u_set.clone(), self.nmap.clone(), k, self.tau_p, self.mode)
    }

    pub fn with_mode(&self, mode: IntegratorMode) -> Result<Self, ControlError> {
        Self::new(self.u_set.clone(), self.nmap.clone(), self.k, self.tau_p, mode)
    }

    /// Controller output `u` seen by `𝒩`.
    pub fn control(&self, u_i: &DVector<f64>, e: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        let base = match self.mode {
            IntegratorMode::SoftProjection { .. } => self.u_set.project(u_i)?,
            _ => u_i.clone(),
        };
        Ok(base + e * (self.tau_p * self.k))
    }

    /// `u ∈ 𝒰`: in the map's domain and mapped into the plant's admissible inputs.
    pub fn in_region(&self, plant: &dyn Plant, u: &DVector<f64>) -> bool {
        u.iter().all(|c| c.is_finite()) && self.nmap.in_domain(u) && plant.input_admissible(&self.nmap.apply(u))
    }

    /// Points of `U` (vertices, boundary and interior samples) that fail
    /// [`in_region`](Self::in_region). Empty means the sampled check `U ⊂ 𝒰` passed.
    pub fn region_violations(&self, plant: &dyn Plant, samples: usize, seed: u64) -> Vec<DVector<f64>> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut points = self.u_set.vertices().unwrap_or_default();
        for _ in 0..samples {
            if let Ok(b) = self.u_set.sample_boundary(&mut rng) {
                points.push(b);
            }
            points.push(self.u_set.sample(&mut rng));
        }
        points.into_iter().filter(|u| !self.in_region(plant, u)).collect()
    }

    /// Integrator velocity for the given error.
    pub fn integrator_rate(&self, u_i: &DVector<f64>, e: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        let drive = e * self.k;
        Ok(match self.mode {
            IntegratorMode::Saturating => self.u_set.tangent_project(u_i, &drive)?.projected,
            IntegratorMode::Classical => drive,
            IntegratorMode::SoftProjection { k_soft } => {
                let p = self.u_set.project(u_i)?;
                drive - (u_i - p) / k_soft
            }
        })
    }

    /// One integrator step of length `h` driven by the error `e`.
    fn integrator_step(&self, u_i: &DVector<f64>, e: &DVector<f64>, h: f64) -> Result<DVector<f64>, ControlError> {
        let w = u_i + e * (h * self.k);
        Ok(match self.mode {
            IntegratorMode::Saturating => self.u_set.project(&w)?,
            IntegratorMode::Classical => w,
            IntegratorMode::SoftProjection { k_soft } => {
                // semi-implicit in the penalty so that tiny k_soft stays stable
                let ratio = h / k_soft;
                let p = self.u_set.project(&w)?;
                &w - (&w - p) * (ratio / (1.0 + ratio))
            }
        })
    }
}

/// Right-hand side of the closed loop at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRhs {
    pub dx: DVector<f64>,
    pub du_i: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub e: DVector<f64>,
}

fn check_loop_dims(plant: &dyn Plant, ctrl: &AwPiController, r: &DVector<f64>) -> Result<(), ControlError> {
    check_len("reference", plant.output_dim(), r)?;
    if ctrl.u_set.dim() != plant.output_dim() {
        return Err(ControlError::DimensionMismatch {
            what: "U vs plant output",
            expected: plant.output_dim(),
            found: ctrl.u_set.dim(),
        });
    }
    if ctrl.nmap.output_dim() != plant.input_dim() {
        return Err(ControlError::DimensionMismatch {
            what: "input map image vs plant input",
            expected: plant.input_dim(),
            found: ctrl.nmap.output_dim(),
        });
    }
    Ok(())
}

pub fn closed_loop_rhs(
    plant: &dyn Plant,
    ctrl: &AwPiController,
    r: &DVector<f64>,
    x: &DVector<f64>,
    u_i: &DVector<f64>,
) -> Result<ClosedLoopRhs, ControlError> {
    check_loop_dims(plant, ctrl, r)?;
    check_len("state", plant.state_dim(), x)?;
    check_len("integrator state", ctrl.u_set.dim(), u_i)?;
    let y = plant.output(x);
    let e = r - &y;
    let u = ctrl.control(u_i, &e)?;
    if !ctrl.in_region(plant, &u) {
        return Err(ControlError::LeftRegionOfInterest(u.iter().copied().collect()));
    }
    let dx = plant.rhs(x, &ctrl.nmap.apply(&u))?;
    let du_i = ctrl.integrator_rate(u_i, &e)?;
    Ok(ClosedLoopRhs { dx, du_i, u, y, e })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Converged,
    StateBlowup,
    BoundaryApproach,
    LeftRegionOfInterest,
}

impl Termination {
    pub fn is_abnormal(self) -> bool {
        !matches!(self, Termination::Horizon | Termination::Converged)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::Converged => "converged",
            Termination::StateBlowup => "state_blowup",
            Termination::BoundaryApproach => "boundary_approach",
            Termination::LeftRegionOfInterest => "left_region_of_interest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// `StateBlowup` once `‖x‖ > blowup_factor · (1 + ‖x0‖)`.
    pub blowup_factor: f64,
    /// `BoundaryApproach` once the estimated distance from `u` to `∂𝒰` drops
    /// below this; defaults to `1e-6 · diam(U)`.
    pub boundary_margin: Option<f64>,
    /// Steps between boundary-distance estimates (each costs a few hundred
    /// predicate evaluations); 0 disables the estimate.
    pub boundary_check_stride: usize,
    /// Keep every `record_stride`-th step (the first, last and terminal
    /// samples are always kept).
    pub record_stride: usize,
    /// Stop with `Converged` once `‖ẋ‖ ≤ tol (1 + ‖x‖)` and
    /// `‖u̇_I‖ ≤ tol (1 + ‖u_I‖)` for `converge_hold` consecutive steps.
    pub converge_tol: Option<f64>,
    pub converge_hold: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            blowup_factor: 1e6,
            boundary_margin: None,
            boundary_check_stride: 100,
            record_stride: 1,
            converge_tol: None,
            converge_hold: 10,
        }
    }
}

/// One recorded instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub u_i: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub e: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub reference: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub termination: Termination,
    pub final_error_norm: f64,
    pub final_state: Vec<f64>,
    pub final_integrator: Vec<f64>,
    pub final_output: Vec<f64>,
    /// Smallest estimated distance from `u` to `∂𝒰` (infinite when no
    /// boundary was found within reach).
    pub min_boundary_distance: f64,
    /// Largest distance of `u_I` from `U` over every step (not only the
    /// recorded ones).
    pub max_integrator_violation: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub segments: Vec<SegmentSummary>,
    pub mode: IntegratorMode,
    pub k: f64,
    pub tau_p: f64,
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    mode: &'static str,
    k_soft: Option<f64>,
    k: f64,
    tau_p: f64,
    termination: Termination,
    final_error_norm: f64,
    min_boundary_distance: f64,
    max_integrator_violation: f64,
    samples: usize,
    segments: &'a [SegmentSummary],
}

impl ClosedLoopRun {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("runs hold at least the initial sample")
    }

    pub fn final_error_norm(&self) -> f64 {
        self.last().e.norm()
    }

    pub fn min_boundary_distance(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.min_boundary_distance)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_integrator_violation(&self) -> f64 {
        self.segments.iter().map(|s| s.max_integrator_violation).fold(0.0, f64::max)
    }

    /// CSV with columns `t, x_*, uI_*, u_*, y_*, e_*`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ControlError> {
        let mut out = csv::Writer::from_writer(w);
        let first = &self.samples[0];
        let mut header = vec!["t".to_string()];
        for (prefix, len) in [
            ("x", first.x.len()),
            ("uI", first.u_i.len()),
            ("u", first.u.len()),
            ("y", first.y.len()),
            ("e", first.e.len()),
        ] {
            header.extend((1..=len).map(|i| format!("{prefix}_{i}")));
        }
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(header.len());
            row.push(fmt17(s.t));
            for v in [&s.x, &s.u_i, &s.u, &s.y, &s.e] {
                row.extend(v.iter().map(|c| fmt17(*c)));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Run metadata (mode, gains, termination, per-segment summaries) as TOML.
    pub fn metadata_toml(&self) -> Result<String, ControlError> {
        let meta = RunMetadata {
            mode: self.mode.as_str(),
            k_soft: match self.mode {
                IntegratorMode::SoftProjection { k_soft } => Some(k_soft),
                _ => None,
            },
            k: self.k,
            tau_p: self.tau_p,
            termination: self.termination,
            final_error_norm: self.final_error_norm(),
            min_boundary_distance: finite_or_max(self.min_boundary_distance()),
            max_integrator_violation: self.max_integrator_violation(),
            samples: self.samples.len(),
            segments: &self.segments,
        };
        Ok(toml::to_string(&meta)?)
    }
}

// TOML has no infinity literal in every reader; clamp for the sidecar
fn finite_or_max(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

/// Ray directions used to estimate the distance to `∂𝒰`.
fn probe_directions(dim: usize) -> Vec<DVector<f64>> {
    if dim == 2 {
        return (0..8)
            .map(|j| {
                let a = j as f64 * std::f64::consts::FRAC_PI_4;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect();
    }
    let mut out = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut d = DVector::zeros(dim);
            d[i] = s;
            out.push(d);
        }
    }
    out
}

/// Upper estimate of `d(u, ∂𝒰)`: the nearest exit along a fixed fan of rays,
/// located by doubling from `start` up to `reach` and then bisection.
/// Infinite when no exit is found within reach.
pub fn estimate_boundary_distance(plant: &dyn Plant, ctrl: &AwPiController, u: &DVector<f64>, start: f64, reach: f64) -> f64 {
    if !ctrl.in_region(plant, u) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for d in probe_directions(u.len()) {
        let inside = |t: f64| ctrl.in_region(plant, &(u + &d * t));
        let mut lo = 0.0;
        let mut hi = start.max(f64::MIN_POSITIVE);
        let mut found = false;
        while hi <= reach && hi < best {
            if !inside(hi) {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !found {
            continue;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.min(hi);
    }
    best
}

struct SegmentOutcome {
    samples: Vec<Sample>,
    summary: SegmentSummary,
    x: DVector<f64>,
    u_i: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn simulate_segment(
    plant: &dyn Plant,
    ctrl: &AwPiController,
    r: &DVector<f64>,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    t0: f64,
    horizon: f64,
    h: f64,
    opts: &SimOptions,
    index: usize,
) -> Result<SegmentOutcome, ControlError> {
    check_loop_dims(plant, ctrl, r)?;
    check_len("initial state", plant.state_dim(), x0)?;
    check_len("initial integrator state", ctrl.u_set.dim(), u0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ControlError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(ControlError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if opts.record_stride == 0 {
        return Err(ControlError::InvalidArgument("record_stride must be at least 1".into()));
    }
    if ctrl.mode == IntegratorMode::Saturating && !ctrl.u_set.contains(u0, 1e-9 * (1.0 + u0.norm())) {
        return Err(ControlError::InvalidArgument(format!(
            "initial integrator state {:?} is not in U",
            u0.as_slice()
        )));
    }

    let n_steps = ((horizon / h).round() as usize).max(1);
    let h = horizon / n_steps as f64;
    let diameter = ctrl.u_set.diameter();
    let margin = opts
        .boundary_margin
        .unwrap_or_else(|| 1e-6 * if diameter.is_finite() { diameter } else { 1.0 });
    let reach = if diameter.is_finite() { 10.0 * diameter.max(1.0) } else { 1e6 };
    let blowup = opts.blowup_factor * (1.0 + x0.norm());
    let saturating = ctrl.mode == IntegratorMode::Saturating;

    let mut x = x0.clone();
    plant.canonicalize(&mut x);
    let mut u_i = u0.clone();
    let mut samples = Vec::with_capacity(n_steps / opts.record_stride + 2);
    let mut min_dist = f64::INFINITY;
    let mut max_violation = 0.0_f64;
    let mut quiet = 0usize;
    let mut termination = Termination::Horizon;
    let mut steps = 0usize;

    for n in 0..=n_steps {
        let t = if n == n_steps { t0 + horizon } else { t0 + n as f64 * h };
        let y = plant.output(&x);
        let e = r - &y;
        let u = ctrl.control(&u_i, &e)?;
        if saturating {
            max_violation = max_violation.max(ctrl.u_set.constraint_violation(&u_i));
        }

        let mut stop = None;
        if x.iter().any(|c| !c.is_finite()) || x.norm() > blowup {
            stop = Some(Termination::StateBlowup);
        } else if !ctrl.in_region(plant, &u) {
            stop = Some(Termination::LeftRegionOfInterest);
        } else if opts.boundary_check_stride > 0 && (n % opts.boundary_check_stride == 0 || n == n_steps) {
            let d = estimate_boundary_distance(plant, ctrl, &u, margin, reach);
            min_dist = min_dist.min(d);
            if d < margin {
                stop = Some(Termination::BoundaryApproach);
            }
        }

        let sample = Sample {
            t,
            x: x.clone(),
            u_i: u_i.clone(),
            u,
            y,
            e: e.clone(),
        };
        if let Some(s) = stop {
            termination = s;
            samples.push(sample);
            break;
        }
        if n == n_steps {
            samples.push(sample);
            break;
        }
        if n % opts.record_stride == 0 {
            samples.push(sample);
        }

        let frozen = u_i.clone();
        let stage = |xs: &DVector<f64>| -> Result<DVector<f64>, ControlError> {
            let es = r - plant.output(xs);
            let us = ctrl.control(&frozen, &es)?;
            Ok(plant.rhs(xs, &ctrl.nmap.apply(&us))?)
        };
        let mut x_next = match linalg::rk4_step(stage, &x, h) {
            Ok(xn) => xn,
            Err(ControlError::Plant(_)) => {
                termination = Termination::LeftRegionOfInterest;
                break;
            }
            Err(other) => return Err(other),
        };
        plant.canonicalize(&mut x_next);
        let u_next = ctrl.integrator_step(&u_i, &e, h)?;
        steps += 1;

        if let Some(tol) = opts.converge_tol {
            let mut dx = &x_next - &x;
            plant.canonicalize(&mut dx);
            let still = dx.norm() / h <= tol * (1.0 + x.norm()) && (&u_next - &u_i).norm() / h <= tol * (1.0 + u_i.norm());
            quiet = if still { quiet + 1 } else { 0 };
            x = x_next;
            u_i = u_next;
            if quiet >= opts.converge_hold {
                termination = Termination::Converged;
                let y = plant.output(&x);
                let e = r - &y;
                let u = ctrl.control(&u_i, &e)?;
                samples.push(Sample {
                    t: t + h,
                    x: x.clone(),
                    u_i: u_i.clone(),
                    u,
                    y,
                    e,
                });
                break;
            }
        } else {
            x = x_next;
            u_i = u_next;
        }
    }
    if termination == Termination::LeftRegionOfInterest && samples.last().is_none_or(|s| s.x != x) {
        // the RK4 stage failed: the last sample is the state before the step
        let y = plant.output(&x);
        let e = r - &y;
        let u = ctrl.control(&u_i, &e)?;
        let t = t0 + steps as f64 * h;
        if samples.last().is_none_or(|s| s.t < t) {
            samples.push(Sample {
                t,
                x: x.clone(),
                u_i: u_i.clone(),
                u,
                y,
                e,
            });
        }
    }

    let last = samples.last().expect("at least one sample");
    let summary = SegmentSummary {
        index,
        reference: r.iter().copied().collect(),
        t_start: t0,
        t_end: last.t,
        termination,
        final_error_norm: last.e.norm(),
        final_state: last.x.iter().copied().collect(),
        final_integrator: last.u_i.iter().copied().collect(),
        final_output: last.y.iter().copied().collect(),
        min_boundary_distance: min_dist,
        max_integrator_violation: max_violation,
        steps,
    };
    Ok(SegmentOutcome {
        samples,
        summary,
        x,
        u_i,
    })
}

/// Simulates the loop at constant reference `r` over `[0, horizon]`. The step
/// is adjusted to `horizon / round(horizon / h)` so the horizon is hit exactly.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    plant: &dyn Plant,
    ctrl: &AwPiController,
    r: &DVector<f64>,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    horizon: f64,
    h: f64,
    opts: &SimOptions,
) -> Result<ClosedLoopRun, ControlError> {
    let seg = simulate_segment(plant, ctrl, r, x0, u0, 0.0, horizon, h, opts, 0)?;
    Ok(ClosedLoopRun {
        termination: seg.summary.termination,
        samples: seg.samples,
        segments: vec![seg.summary],
        mode: ctrl.mode,
        k: ctrl.k,
        tau_p: ctrl.tau_p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStep {
    pub r: DVector<f64>,
    pub duration: f64,
}

/// Piecewise-constant reference: each switch restarts the loop from the
/// terminal `(x, u_I)` of the previous segment. Stops at the first segment
/// that ends abnormally.
pub fn run_reference_schedule(
    plant: &dyn Plant,
    ctrl: &AwPiController,
    schedule: &[ReferenceStep],
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    h: f64,
    opts: &SimOptions,
) -> Result<ClosedLoopRun, ControlError> {
    if schedule.is_empty() {
        return Err(ControlError::InvalidArgument("schedule is empty".into()));
    }
    let mut samples: Vec<Sample> = Vec::new();
    let mut segments = Vec::with_capacity(schedule.len());
    let mut x = x0.clone();
    let mut u_i = u0.clone();
    let mut t0 = 0.0;
    let mut termination = Termination::Horizon;
    for (index, step) in schedule.iter().enumerate() {
        let seg = simulate_segment(plant, ctrl, &step.r, &x, &u_i, t0, step.duration, h, opts, index).map_err(|e| {
            ControlError::Segment {
                index,
                source: Box::new(e),
            }
        })?;
        let skip = usize::from(index > 0);
        samples.extend(seg.samples.into_iter().skip(skip));
        termination = seg.summary.termination;
        t0 += step.duration;
        x = seg.x;
        u_i = seg.u_i;
        segments.push(seg.summary);
        if termination.is_abnormal() {
            break;
        }
    }
    Ok(ClosedLoopRun {
        samples,
        termination,
        segments,
        mode: ctrl.mode,
        k: ctrl.k,
        tau_p: ctrl.tau_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SoftProjectionPoint {
    pub k_soft: f64,
    pub sup_error: f64,
}

/// Compares the penalty loop against the saturating loop for each `K`:
/// `sup_t ‖(x, u_I)_soft − (x, u_I)_saturating‖` on the common time grid.
#[allow(clippy::too_many_arguments)]
pub fn soft_projection_convergence_check(
    plant: &dyn Plant,
    ctrl_base: &AwPiController,
    r: &DVector<f64>,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    horizon: f64,
    h: f64,
    k_list: &[f64],
) -> Result<Vec<SoftProjectionPoint>, ControlError> {
    if ctrl_base.mode != IntegratorMode::Saturating || ctrl_base.tau_p != 0.0 {
        return Err(ControlError::InvalidArgument(
            "the soft-projection comparison needs a saturating controller with tau_p = 0".into(),
        ));
    }
    let opts = SimOptions {
        boundary_check_stride: 0,
        ..SimOptions::default()
    };
    let reference = simulate_closed_loop(plant, ctrl_base, r, x0, u0, horizon, h, &opts)?;
    k_list
        .par_iter()
        .map(|&k_soft| {
            let ctrl = ctrl_base.with_mode(IntegratorMode::SoftProjection { k_soft })?;
            let soft = simulate_closed_loop(plant, &ctrl, r, x0, u0, horizon, h, &opts)?;
            let sup_error = reference
                .samples
                .iter()
                .zip(&soft.samples)
                .map(|(a, b)| {
                    let mut dx = &a.x - &b.x;
                    plant.canonicalize(&mut dx);
                    (dx.norm_squared() + (&a.u_i - &b.u_i).norm_squared()).sqrt()
                })
                .fold(0.0, f64::max);
            Ok(SoftProjectionPoint { k_soft, sup_error })
        })
        .collect()
}
