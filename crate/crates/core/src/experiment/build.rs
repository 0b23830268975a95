//! Turning a parsed config into plants, controllers and initial conditions,
//! and the static checks behind `validate`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::config::*;
use crate::analysis::{equilibrium, linear_right_inverse};
use crate::control::{
    AwPiController, CubicPlant, IdentityMap, InputMap, IntegratorMode, LtiPlant, MatrixMap, Plant, ReferenceStep,
};
use crate::sets::ConvexSet;
use crate::synchronverter::{self, build_u, static_gain_k, SvParams, SvRightInverse, Synchronverter};

pub(crate) type BuildResult<T> = Result<T, Diagnostic>;

pub(crate) fn matrix(rows: &MatrixRows, field: &str) -> BuildResult<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Diagnostic::new(field, "matrix must be a nonempty list of equal-length rows"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Diagnostic::new(field, "matrix entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(nr, nc, rows.iter().flatten().copied()))
}

pub(crate) fn vector(xs: &[f64], dim: usize, field: &str) -> BuildResult<DVector<f64>> {
    if xs.len() != dim {
        return Err(Diagnostic::new(field, format!("expected {dim} entries, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Diagnostic::new(field, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(xs))
}

/// The plant and, for the synchronverter, its parameters.
pub(crate) struct BuiltPlant {
    pub plant: Arc<dyn Plant>,
    pub sv: Option<SvParams>,
    pub lti: Option<LtiPlant>,
}

pub(crate) fn build_plant(cfg: &PlantConfig) -> BuildResult<BuiltPlant> {
    match cfg {
        PlantConfig::Lti { a, b, c, lag_chain } => {
            let lti = match (a, b, c, lag_chain) {
                (None, None, None, Some(lc)) => LtiPlant::lag_chain(lc.lags, lc.tau),
                (Some(a), Some(b), Some(c), None) => {
                    LtiPlant::new(matrix(a, "plant.a")?, matrix(b, "plant.b")?, matrix(c, "plant.c")?)
                }
                _ => return Err(Diagnostic::new("plant", "give either a, b and c, or lag_chain")),
            }
            .map_err(|e| Diagnostic::new("plant", e.to_string()))?;
            Ok(BuiltPlant {
                plant: Arc::new(lti.clone()),
                sv: None,
                lti: Some(lti),
            })
        }
        PlantConfig::ScalarTestbed { a1, a3 } => {
            if !(a1.is_finite() && a3.is_finite()) {
                return Err(Diagnostic::new("plant", "a1 and a3 must be finite"));
            }
            Ok(BuiltPlant {
                plant: Arc::new(CubicPlant { a1: *a1, a3: *a3 }),
                sv: None,
                lti: None,
            })
        }
        PlantConfig::Synchronverter { params } => {
            let p = params.unwrap_or_default();
            let sv = Synchronverter::new(p).map_err(|e| Diagnostic::new("plant.params", e.to_string()))?;
            Ok(BuiltPlant {
                plant: Arc::new(sv),
                sv: Some(p),
                lti: None,
            })
        }
    }
}

pub(crate) fn build_map(cfg: &ControllerConfig, plant: &BuiltPlant) -> BuildResult<Arc<dyn InputMap>> {
    let m = plant.plant.input_dim();
    match cfg.input_map {
        MapConfig::Identity => Ok(Arc::new(IdentityMap { dim: m })),
        MapConfig::StaticMatrix => {
            let n = match (&cfg.matrix, plant.sv) {
                (Some(rows), _) => matrix(rows, "controller.matrix")?,
                (None, Some(_)) => static_gain_k(),
                (None, None) => return Err(Diagnostic::new("controller.matrix", "static-matrix map needs a matrix")),
            };
            if n.nrows() != m {
                return Err(Diagnostic::new(
                    "controller.matrix",
                    format!("matrix must have {m} rows (plant inputs), got {}", n.nrows()),
                ));
            }
            Ok(Arc::new(MatrixMap::new(n)))
        }
        MapConfig::SvRightInverse => match plant.sv {
            Some(params) => Ok(Arc::new(SvRightInverse { params })),
            None => Err(Diagnostic::new(
                "controller.input_map",
                "sv-right-inverse needs the synchronverter plant",
            )),
        },
        MapConfig::LinearRightInverse => {
            let lti = plant
                .lti
                .as_ref()
                .ok_or_else(|| Diagnostic::new("controller.input_map", "linear-right-inverse needs an lti plant"))?;
            let dc = lti
                .dc_gain()
                .ok_or_else(|| Diagnostic::new("controller.input_map", "plant matrix A is singular"))?;
            let n = linear_right_inverse(&dc).map_err(|e| Diagnostic::new("controller.input_map", e.to_string()))?;
            Ok(Arc::new(MatrixMap::labelled(n, "linear-right-inverse")))
        }
    }
}

pub(crate) fn build_u_set(cfg: &ControllerConfig, plant: &BuiltPlant) -> BuildResult<ConvexSet> {
    match (&cfg.u_set, &cfg.sv_polygon) {
        (Some(spec), None) => spec.build().map_err(|e| Diagnostic::new("controller.u_set", e.to_string())),
        (None, Some(opts)) => {
            let params = plant
                .sv
                .ok_or_else(|| Diagnostic::new("controller.sv_polygon", "sv_polygon needs the synchronverter plant"))?;
            build_u(&params, opts).map_err(|e| Diagnostic::new("controller.sv_polygon", e.to_string()))
        }
        _ => Err(Diagnostic::new("controller", "give exactly one of u_set and sv_polygon")),
    }
}

pub(crate) fn build_controller(cfg: &ControllerConfig, plant: &BuiltPlant) -> BuildResult<AwPiController> {
    let nmap = build_map(cfg, plant)?;
    let u_set = build_u_set(cfg, plant)?;
    let mode = match (cfg.mode, cfg.k_soft) {
        (ModeConfig::Saturating, _) => IntegratorMode::Saturating,
        (ModeConfig::Classical, _) => IntegratorMode::Classical,
        (ModeConfig::SoftProjection, Some(k_soft)) => IntegratorMode::SoftProjection { k_soft },
        (ModeConfig::SoftProjection, None) => {
            return Err(Diagnostic::new("controller.k_soft", "soft_projection mode needs k_soft"))
        }
    };
    if nmap.input_dim() != plant.plant.output_dim() {
        return Err(Diagnostic::new(
            "controller.input_map",
            format!(
                "integrator dimension {} differs from the plant output dimension {}",
                nmap.input_dim(),
                plant.plant.output_dim()
            ),
        ));
    }
    AwPiController::new(u_set, nmap, cfg.k, cfg.tau_p, mode).map_err(|e| Diagnostic::new("controller", e.to_string()))
}

/// `(x0, u0)` for reference `r` under the configured policy; `probe`
/// overrides take precedence over `initial.x0` / `initial.u0`.
pub(crate) fn initial_state(
    cfg: &ExperimentConfig,
    plant: &BuiltPlant,
    ctrl: &AwPiController,
    r: &DVector<f64>,
    probe: Option<&ProbeConfig>,
) -> BuildResult<(DVector<f64>, DVector<f64>)> {
    let n = plant.plant.state_dim();
    let p = ctrl.u_set().dim();
    let x0_given = probe.and_then(|q| q.x0.as_ref()).or(cfg.initial.x0.as_ref());
    let u0_given = probe.and_then(|q| q.u0.as_ref()).or(cfg.initial.u0.as_ref());
    if let (Some(x0), Some(u0)) = (x0_given, u0_given) {
        return Ok((vector(x0, n, "initial.x0")?, vector(u0, p, "initial.u0")?));
    }
    let start = match &cfg.initial.start_reference {
        Some(s) => vector(s, r.len(), "initial.start_reference")?,
        None => r.clone(),
    };
    let r = &start;
    match cfg.initial.policy {
        InitialPolicy::Explicit => Err(Diagnostic::new("initial", "explicit policy needs x0 and u0")),
        InitialPolicy::ProjectedReference => {
            let u0 = ctrl
                .u_set()
                .project(r)
                .map_err(|e| Diagnostic::new("initial", e.to_string()))?;
            let v0 = ctrl.nmap().apply(&u0);
            let x0 = equilibrium(plant.plant.as_ref(), &v0)
                .map_err(|e| Diagnostic::new("initial", format!("no equilibrium at the projected reference: {e}")))?;
            Ok((x0, u0))
        }
        InitialPolicy::MatchedRightInverse => {
            let params = plant
                .sv
                .ok_or_else(|| Diagnostic::new("initial.policy", "matched_right_inverse needs the synchronverter plant"))?;
            let polygon = cfg.controller.as_ref().and_then(|c| c.sv_polygon).unwrap_or_default();
            let u_ref = build_u(&params, &polygon)
                .map_err(|e| Diagnostic::new("initial.policy", e.to_string()))?
                .project(r)
                .map_err(|e| Diagnostic::new("initial", e.to_string()))?;
            let v0 = synchronverter::right_inverse(&params, &u_ref);
            // the map is linear here, so its columns are the images of the unit vectors
            let columns: Vec<DVector<f64>> = (0..2)
                .map(|i| ctrl.nmap().apply(&DVector::from_fn(2, |j, _| if i == j { 1.0 } else { 0.0 })))
                .collect();
            let u0 = DMatrix::from_columns(&columns)
                .lu()
                .solve(&v0)
                .ok_or_else(|| Diagnostic::new("controller.matrix", "matched_right_inverse needs an invertible matrix map"))?;
            let x0 = synchronverter::xi(&params, &v0).map_err(|e| Diagnostic::new("initial", e.to_string()))?;
            Ok((x0, u0))
        }
    }
}

pub(crate) fn schedule(cfg: &ExperimentConfig, plant: &BuiltPlant) -> BuildResult<Vec<ReferenceStep>> {
    let sc = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| Diagnostic::new("schedule", "reference_schedule needs a schedule"))?;
    let p = plant.plant.output_dim();
    match (sc.preset, sc.steps.is_empty()) {
        (Some(SchedulePreset::PowerSchedule), true) => {
            if plant.sv.is_none() {
                return Err(Diagnostic::new(
                    "schedule.preset",
                    "power_schedule needs the synchronverter plant",
                ));
            }
            Ok(synchronverter::power_schedule())
        }
        (None, false) => sc
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !(s.duration > 0.0 && s.duration.is_finite()) {
                    return Err(Diagnostic::new(format!("schedule.steps[{i}].duration"), "must be positive"));
                }
                Ok(ReferenceStep {
                    r: vector(&s.r, p, &format!("schedule.steps[{i}].r"))?,
                    duration: s.duration,
                })
            })
            .collect(),
        _ => Err(Diagnostic::new(
            "schedule",
            "give either a preset or a nonempty list of steps",
        )),
    }
}

fn need<'a, T>(x: &'a Option<T>, field: &str, kind: ExperimentKind, out: &mut Vec<Diagnostic>) -> Option<&'a T> {
    if x.is_none() {
        out.push(Diagnostic::new(field, format!("required by {}", kind.as_str())));
    }
    x.as_ref()
}

fn check_positive(x: f64, field: &str, out: &mut Vec<Diagnostic>) {
    if !(x > 0.0 && x.is_finite()) {
        out.push(Diagnostic::new(field, format!("must be positive, got {x}")));
    }
}

fn check_gains(gains: &[f64], increasing: bool, out: &mut Vec<Diagnostic>) {
    if gains.is_empty() {
        out.push(Diagnostic::new("gains", "must not be empty"));
    }
    for (i, g) in gains.iter().enumerate() {
        check_positive(*g, &format!("gains[{i}]"), out);
    }
    let ordered = gains.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if !ordered {
        out.push(Diagnostic::new(
            "gains",
            if increasing {
                "must be strictly increasing"
            } else {
                "must be strictly decreasing"
            },
        ));
    }
}

fn check_grid(lower: [f64; 2], upper: [f64; 2], nx: usize, ny: usize, field: &str, out: &mut Vec<Diagnostic>) {
    if nx == 0 || ny == 0 {
        out.push(Diagnostic::new(field, "nx and ny must be positive"));
    }
    if !(0..2).all(|i| lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
        out.push(Diagnostic::new(field, "lower must be strictly below upper"));
    }
}

/// Schema and cross-field checks; nothing is simulated.
pub fn validate_experiment(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    use ExperimentKind::*;
    let mut out = Vec::new();
    let kind = cfg.experiment;
    let num = &cfg.numerics;
    check_positive(num.h, "numerics.h", &mut out);
    check_positive(num.horizon, "numerics.horizon", &mut out);
    if num.h > num.horizon {
        out.push(Diagnostic::new("numerics.h", "step is longer than the horizon"));
    }
    check_positive(num.tol_track, "numerics.tol_track", &mut out);
    if !(num.blowup_factor > 1.0) {
        out.push(Diagnostic::new("numerics.blowup_factor", "must exceed 1"));
    }
    if let Some(m) = num.boundary_margin {
        if !(m >= 0.0) {
            out.push(Diagnostic::new("numerics.boundary_margin", "must be nonnegative"));
        }
    }
    if let Some(t) = num.converge_tol {
        check_positive(t, "numerics.converge_tol", &mut out);
    }
    if cfg.output.record_stride == 0 {
        out.push(Diagnostic::new("output.record_stride", "must be at least 1"));
    }

    if kind == PdsDemo {
        if let Some(pds) = need(&cfg.pds, "pds", kind, &mut out) {
            let set = pds.set.build();
            if let Err(e) = &set {
                out.push(Diagnostic::new("pds.set", e.to_string()));
            }
            let q = pds.set.dimension();
            match matrix(&pds.field_a, "pds.field_a") {
                Ok(a) if a.nrows() == q && a.ncols() == q => {}
                Ok(_) => out.push(Diagnostic::new("pds.field_a", format!("must be {q}×{q}"))),
                Err(d) => out.push(d),
            }
            if let Err(d) = vector(&pds.field_b, q, "pds.field_b") {
                out.push(d);
            }
            if let Err(d) = vector(&pds.z0, q, "pds.z0") {
                out.push(d);
            }
        }
        return out;
    }

    let Some(plant_cfg) = need(&cfg.plant, "plant", kind, &mut out) else {
        return out;
    };
    let plant = match build_plant(plant_cfg) {
        Ok(p) => p,
        Err(d) => {
            out.push(d);
            return out;
        }
    };

    if kind == RegionScan {
        if plant.sv.is_none() {
            out.push(Diagnostic::new("plant.kind", "region_scan needs the synchronverter plant"));
        }
        if let Some(scan) = need(&cfg.scan, "scan", kind, &mut out) {
            check_grid(scan.lower, scan.upper, scan.nx, scan.ny, "scan", &mut out);
            if !(0.0..1.0).contains(&scan.band) {
                out.push(Diagnostic::new("scan.band", "must lie in [0, 1)"));
            }
            if let Some(pl) = &scan.output_plane {
                check_grid(pl.lower, pl.upper, pl.nx, pl.ny, "scan.output_plane", &mut out);
            }
        }
        if let Some(c) = &cfg.controller {
            if let Err(d) = build_u_set(c, &plant) {
                out.push(d);
            }
        }
        return out;
    }

    let Some(ctrl_cfg) = need(&cfg.controller, "controller", kind, &mut out) else {
        return out;
    };
    let ctrl = match build_controller(ctrl_cfg, &plant) {
        Ok(c) => c,
        Err(d) => {
            out.push(d);
            return out;
        }
    };

    // U ⊂ 𝒰 only matters when the integrator is confined to U
    if ctrl.mode() != IntegratorMode::Classical {
        let field = if ctrl_cfg.u_set.is_some() {
            "controller.u_set"
        } else {
            "controller.sv_polygon"
        };
        for v in ctrl.u_set().vertices().unwrap_or_default() {
            if !ctrl.in_region(plant.plant.as_ref(), &v) {
                out.push(Diagnostic::new(
                    field,
                    format!("vertex {:?} lies outside the region of interest", v.as_slice()),
                ));
            }
        }
        if out.is_empty() {
            if let Some(u) = ctrl
                .region_violations(plant.plant.as_ref(), num.region_samples, num.seed)
                .first()
            {
                out.push(Diagnostic::new(
                    field,
                    format!("point {:?} of U lies outside the region of interest", u.as_slice()),
                ));
            }
        }
    }

    let p = plant.plant.output_dim();
    let reference = |out: &mut Vec<Diagnostic>| -> Option<DVector<f64>> {
        let r = need(&cfg.reference, "reference", kind, out)?;
        vector(r, p, "reference").map_err(|d| out.push(d)).ok()
    };
    match kind {
        ClosedLoopRun => {
            if let Some(r) = reference(&mut out) {
                if let Err(d) = initial_state(cfg, &plant, &ctrl, &r, None) {
                    out.push(d);
                }
            }
        }
        ReferenceSchedule => match schedule(cfg, &plant) {
            Ok(s) => {
                if let Err(d) = initial_state(cfg, &plant, &ctrl, &s[0].r, None) {
                    out.push(d);
                }
            }
            Err(d) => out.push(d),
        },
        MonotonicityScan => {
            if let Some(scan) = need(&cfg.scan, "scan", kind, &mut out) {
                check_grid(scan.lower, scan.upper, scan.nx, scan.ny, "scan", &mut out);
                if ctrl.u_set().dim() != 2 {
                    out.push(Diagnostic::new(
                        "controller",
                        "monotonicity rasters need a 2-dimensional integrator",
                    ));
                }
            }
        }
        SpConsistency | SoftProjectionCheck => {
            if ctrl.mode() != IntegratorMode::Saturating {
                out.push(Diagnostic::new(
                    "controller.mode",
                    format!("{} needs the saturating mode", kind.as_str()),
                ));
            }
            if kind == SoftProjectionCheck && ctrl.tau_p() != 0.0 {
                out.push(Diagnostic::new(
                    "controller.tau_p",
                    "the soft-projection comparison needs tau_p = 0",
                ));
            }
            if let Some(g) = need(&cfg.gains, "gains", kind, &mut out) {
                check_gains(g, false, &mut out);
            }
            if let Some(r) = reference(&mut out) {
                if let Err(d) = initial_state(cfg, &plant, &ctrl, &r, None) {
                    out.push(d);
                }
            }
        }
        GainSearch => {
            if let Some(g) = need(&cfg.gains, "gains", kind, &mut out) {
                check_gains(g, true, &mut out);
            }
            if cfg.probes.is_empty() {
                out.push(Diagnostic::new("probes", "gain_search needs at least one probe"));
            }
            for (i, pr) in cfg.probes.iter().enumerate() {
                match vector(&pr.r, p, &format!("probes[{i}].r")) {
                    Ok(r) => {
                        if let Err(d) = initial_state(cfg, &plant, &ctrl, &r, Some(pr)) {
                            out.push(Diagnostic::new(format!("probes[{i}]"), d.to_string()));
                        }
                    }
                    Err(d) => out.push(d),
                }
            }
        }
        RegionScan | PdsDemo => unreachable!("handled above"),
    }
    out
}
