//! Executing a validated config and writing its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::build::{self, BuiltPlant};
use super::config::*;
use super::ExperimentError;
use crate::analysis::{
    empirical_gain_bound, monotonicity_raster, monotonicity_scan, non_increasing_within, sp_consistency_check,
    write_monotonicity_csv, Probe, SteadyStateMaps,
};
use crate::control::{
    run_reference_schedule, simulate_closed_loop, soft_projection_convergence_check, AwPiController, ClosedLoopRun, SimOptions,
};
use crate::linalg::fmt17;
use crate::pds::{simulate_pds, AffineField, PdsOptions};
use crate::synchronverter::{build_u, output_raster, region_agreement, region_raster, write_output_csv, write_region_csv};

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentLine {
    pub index: usize,
    pub termination: String,
    pub final_error_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// What a run did and what it wrote. Saved as `summary.toml`, after every
/// other artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub name: String,
    /// SHA-256 of the config file bytes.
    pub config_hash: String,
    pub seed: u64,
    /// `ok` or `abnormal_termination`.
    pub status: String,
    pub wall_clock_seconds: f64,
    pub segments: Vec<SegmentLine>,
    pub final_tracking_errors: Vec<f64>,
    /// Experiment-specific scalar results.
    pub metrics: BTreeMap<String, f64>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunSummary {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `name` inside `dir` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestEntry, ExperimentError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| ExperimentError::Io(e.error))?;
    Ok(ManifestEntry {
        file: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    })
}

fn numerical(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

fn invalid(d: Diagnostic) -> ExperimentError {
    ExperimentError::Invalid(vec![d])
}

/// Artifacts collected before anything touches the disk.
struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    segments: Vec<SegmentLine>,
    final_errors: Vec<f64>,
    metrics: BTreeMap<String, f64>,
    abnormal: bool,
}

impl Outcome {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            segments: Vec::new(),
            final_errors: Vec::new(),
            metrics: BTreeMap::new(),
            abnormal: false,
        }
    }

    fn add_run(&mut self, run: &ClosedLoopRun) -> Result<(), ExperimentError> {
        let mut csv = Vec::new();
        run.write_csv(&mut csv).map_err(numerical)?;
        self.files.push(("trajectory.csv".into(), csv));
        self.files
            .push(("run.toml".into(), run.metadata_toml().map_err(numerical)?.into_bytes()));
        for s in &run.segments {
            self.segments.push(SegmentLine {
                index: s.index,
                termination: s.termination.as_str().into(),
                final_error_norm: s.final_error_norm,
            });
            self.final_errors.push(s.final_error_norm);
        }
        self.metrics
            .insert("max_integrator_violation".into(), run.max_integrator_violation());
        let dist = run.min_boundary_distance();
        if dist.is_finite() {
            self.metrics.insert("min_boundary_distance".into(), dist);
        }
        self.abnormal |= run.termination.is_abnormal();
        Ok(())
    }
}

fn sim_options(cfg: &ExperimentConfig) -> SimOptions {
    let n = &cfg.numerics;
    SimOptions {
        blowup_factor: n.blowup_factor,
        boundary_margin: n.boundary_margin,
        boundary_check_stride: n.boundary_check_stride,
        record_stride: cfg.output.record_stride,
        converge_tol: n.converge_tol,
        ..SimOptions::default()
    }
}

struct Ready {
    plant: BuiltPlant,
    ctrl: Option<AwPiController>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Ready, ExperimentError> {
    let diags = build::validate_experiment(cfg);
    if !diags.is_empty() {
        return Err(ExperimentError::Invalid(diags));
    }
    let plant_cfg = cfg.plant.as_ref().expect("validated");
    let plant = build::build_plant(plant_cfg).map_err(invalid)?;
    let ctrl = match &cfg.controller {
        Some(c) if cfg.experiment != ExperimentKind::RegionScan => Some(build::build_controller(c, &plant).map_err(invalid)?),
        _ => None,
    };
    Ok(Ready { plant, ctrl })
}

fn reference(cfg: &ExperimentConfig, plant: &BuiltPlant) -> Result<DVector<f64>, ExperimentError> {
    build::vector(
        cfg.reference.as_deref().unwrap_or_default(),
        plant.plant.output_dim(),
        "reference",
    )
    .map_err(invalid)
}

fn execute(cfg: &ExperimentConfig) -> Result<Outcome, ExperimentError> {
    use ExperimentKind::*;
    let mut out = Outcome::new();
    let num = &cfg.numerics;

    if cfg.experiment == PdsDemo {
        let diags = build::validate_experiment(cfg);
        if !diags.is_empty() {
            return Err(ExperimentError::Invalid(diags));
        }
        let pds = cfg.pds.as_ref().expect("validated");
        let set = pds.set.build().map_err(numerical)?;
        let field = AffineField {
            a: build::matrix(&pds.field_a, "pds.field_a").map_err(invalid)?,
            b: DVector::from_column_slice(&pds.field_b),
        };
        let z0 = DVector::from_column_slice(&pds.z0);
        let traj = simulate_pds(&set, &field, &z0, num.horizon, num.h, &PdsOptions::default()).map_err(numerical)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv).map_err(numerical)?;
        out.files.push(("trajectory.csv".into(), csv));
        out.segments.push(SegmentLine {
            index: 0,
            termination: traj.termination.as_str().into(),
            final_error_norm: 0.0,
        });
        out.metrics.insert("max_violation".into(), traj.max_violation);
        out.metrics.insert("entry_time".into(), traj.entry_time);
        out.metrics.insert("final_time".into(), *traj.times.last().expect("nonempty"));
        for (i, z) in traj.final_state().iter().enumerate() {
            out.metrics.insert(format!("final_z_{}", i + 1), *z);
        }
        return Ok(out);
    }

    let Ready { plant, ctrl } = prepare(cfg)?;
    let opts = sim_options(cfg);
    match cfg.experiment {
        ClosedLoopRun => {
            let ctrl = ctrl.expect("validated");
            let r = reference(cfg, &plant)?;
            let (x0, u0) = build::initial_state(cfg, &plant, &ctrl, &r, None).map_err(invalid)?;
            let run =
                simulate_closed_loop(plant.plant.as_ref(), &ctrl, &r, &x0, &u0, num.horizon, num.h, &opts).map_err(numerical)?;
            out.add_run(&run)?;
        }
        ReferenceSchedule => {
            let ctrl = ctrl.expect("validated");
            let steps = build::schedule(cfg, &plant).map_err(invalid)?;
            let (x0, u0) = build::initial_state(cfg, &plant, &ctrl, &steps[0].r, None).map_err(invalid)?;
            let run = run_reference_schedule(plant.plant.as_ref(), &ctrl, &steps, &x0, &u0, num.h, &opts).map_err(numerical)?;
            out.add_run(&run)?;
        }
        RegionScan => {
            let params = plant.sv.expect("validated");
            let scan = cfg.scan.as_ref().expect("validated");
            let nodes = region_raster(&params, scan.lower, scan.upper, scan.nx, scan.ny).map_err(numerical)?;
            let mut csv = Vec::new();
            write_region_csv(&nodes, &mut csv).map_err(numerical)?;
            out.files.push(("region.csv".into(), csv));
            let (share, feasible) = region_agreement(&nodes, scan.band);
            out.metrics.insert("agreement_share".into(), share);
            out.metrics.insert("feasible_nodes_outside_band".into(), feasible as f64);
            out.metrics
                .insert("stable_nodes".into(), nodes.iter().filter(|n| n.in_v).count() as f64);
            out.metrics.insert("nodes".into(), nodes.len() as f64);
            if let Some(pl) = &scan.output_plane {
                let polygon = cfg.controller.as_ref().and_then(|c| c.sv_polygon).unwrap_or_default();
                let u_set = build_u(&params, &polygon).map_err(numerical)?;
                let onodes = output_raster(&params, &u_set, pl.lower, pl.upper, pl.nx, pl.ny);
                let mut csv = Vec::new();
                write_output_csv(&onodes, &mut csv).map_err(numerical)?;
                out.files.push(("output_plane.csv".into(), csv));
            }
        }
        MonotonicityScan => {
            let ctrl = ctrl.expect("validated");
            let scan = cfg.scan.as_ref().expect("validated");
            let maps = SteadyStateMaps::new(plant.plant.clone(), ctrl.nmap().clone()).map_err(numerical)?;
            let composed = |u: &DVector<f64>| maps.composed(u).ok();
            let nodes = monotonicity_raster(&composed, scan.lower, scan.upper, scan.nx, scan.ny);
            let mut csv = Vec::new();
            write_monotonicity_csv(&nodes, &mut csv).map_err(numerical)?;
            out.files.push(("monotonicity.csv".into(), csv));
            let defined: Vec<f64> = nodes.iter().map(|n| n.min_eig_sym_jac).filter(|e| e.is_finite()).collect();
            out.metrics.insert("raster_defined_nodes".into(), defined.len() as f64);
            out.metrics.insert(
                "raster_nonpositive_nodes".into(),
                defined.iter().filter(|e| **e <= 0.0).count() as f64,
            );
            if num.region_samples > 0 {
                let report = monotonicity_scan(&composed, ctrl.u_set(), num.region_samples, num.seed);
                out.metrics.insert("u_set_mu_estimate".into(), report.mu_estimate);
                out.metrics
                    .insert("u_set_min_jacobian_eigenvalue".into(), report.min_jacobian_eigenvalue);
                out.metrics.insert("u_set_violations".into(), report.violations.len() as f64);
                out.metrics.insert("u_set_undefined".into(), report.undefined.len() as f64);
            }
        }
        SpConsistency => {
            let ctrl = ctrl.expect("validated");
            let r = reference(cfg, &plant)?;
            let (x0, u0) = build::initial_state(cfg, &plant, &ctrl, &r, None).map_err(invalid)?;
            let gains = cfg.gains.as_deref().expect("validated");
            let points =
                sp_consistency_check(plant.plant.clone(), &ctrl, &r, &x0, &u0, num.horizon, num.h, gains).map_err(numerical)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "slow_error", "termination"]).map_err(numerical)?;
            for (i, p) in points.iter().enumerate() {
                w.write_record([fmt17(p.k), fmt17(p.slow_error), p.termination.as_str().into()])
                    .map_err(numerical)?;
                out.segments.push(SegmentLine {
                    index: i,
                    termination: p.termination.as_str().into(),
                    final_error_norm: p.slow_error,
                });
                out.abnormal |= p.termination.is_abnormal();
            }
            out.files
                .push(("sp_consistency.csv".into(), w.into_inner().map_err(numerical)?));
            let errs: Vec<f64> = points.iter().map(|p| p.slow_error).collect();
            out.metrics.insert(
                "non_increasing".into(),
                f64::from(u8::from(non_increasing_within(&errs, 0.1))),
            );
        }
        GainSearch => {
            let ctrl = ctrl.expect("validated");
            let p = plant.plant.output_dim();
            let probes = cfg
                .probes
                .iter()
                .enumerate()
                .map(|(i, pr)| {
                    let r = build::vector(&pr.r, p, &format!("probes[{i}].r")).map_err(invalid)?;
                    let (x0, u0) = build::initial_state(cfg, &plant, &ctrl, &r, Some(pr)).map_err(invalid)?;
                    Ok(Probe { r, x0, u0 })
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            let gains = cfg.gains.as_deref().expect("validated");
            let factory = |k: f64| ctrl.with_gain(k);
            let res = empirical_gain_bound(
                plant.plant.as_ref(),
                &factory,
                &probes,
                gains,
                num.horizon,
                num.h,
                num.tol_track,
                &opts,
            )
            .map_err(numerical)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "converged", "worst_relative_error", "terminations"])
                .map_err(numerical)?;
            for g in &res.tested_gains {
                let terms: Vec<&str> = g.terminations.iter().map(|t| t.as_str()).collect();
                w.write_record([
                    fmt17(g.k),
                    u8::from(g.converged).to_string(),
                    fmt17(g.worst_relative_error),
                    terms.join(";"),
                ])
                .map_err(numerical)?;
            }
            out.files.push(("gain_search.csv".into(), w.into_inner().map_err(numerical)?));
            out.metrics
                .insert("kappa_empirical".into(), res.kappa_empirical.unwrap_or(f64::NAN));
            out.metrics.insert("non_monotone_gains".into(), res.non_monotone.len() as f64);
            out.metrics.insert("probes".into(), res.probe_count as f64);
        }
        SoftProjectionCheck => {
            let ctrl = ctrl.expect("validated");
            let r = reference(cfg, &plant)?;
            let (x0, u0) = build::initial_state(cfg, &plant, &ctrl, &r, None).map_err(invalid)?;
            let gains = cfg.gains.as_deref().expect("validated");
            let points = soft_projection_convergence_check(plant.plant.as_ref(), &ctrl, &r, &x0, &u0, num.horizon, num.h, gains)
                .map_err(numerical)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k_soft", "sup_error"]).map_err(numerical)?;
            for p in &points {
                w.write_record([fmt17(p.k_soft), fmt17(p.sup_error)]).map_err(numerical)?;
            }
            out.files
                .push(("soft_projection.csv".into(), w.into_inner().map_err(numerical)?));
            let errs: Vec<f64> = points.iter().map(|p| p.sup_error).collect();
            out.metrics.insert(
                "non_increasing".into(),
                f64::from(u8::from(non_increasing_within(&errs, 0.1))),
            );
        }
        PdsDemo => unreachable!("handled above"),
    }
    Ok(out)
}

/// Runs an already parsed config. `config_bytes` are hashed into the
/// summary. Artifacts land in `overrides.out`, else `output.dir`, else
/// `out/<name>`.
pub fn run_config(cfg: &ExperimentConfig, config_bytes: &[u8], overrides: &RunOverrides) -> Result<RunSummary, ExperimentError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(seed) = overrides.seed {
        cfg.numerics.seed = seed;
    }
    let dir = overrides
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(cfg.display_name()));

    let outcome = execute(&cfg)?;

    fs::create_dir_all(&dir)?;
    let mut manifest = Vec::with_capacity(outcome.files.len());
    for (name, bytes) in &outcome.files {
        manifest.push(write_atomic(&dir, name, bytes)?);
    }
    let abnormal = outcome.abnormal && cfg.output.fail_on_abnormal_termination;
    let summary = RunSummary {
        experiment: cfg.experiment.as_str().into(),
        name: cfg.display_name().into(),
        config_hash: sha256_hex(config_bytes),
        seed: cfg.numerics.seed,
        status: if abnormal { "abnormal_termination" } else { "ok" }.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        segments: outcome.segments,
        final_tracking_errors: outcome.final_errors,
        // TOML cannot carry NaN portably
        metrics: outcome
            .metrics
            .into_iter()
            .map(|(k, v)| (k, if v.is_finite() { v } else { -1.0 }))
            .collect(),
        manifest,
    };
    let text = toml::to_string(&summary).map_err(numerical)?;
    write_atomic(&dir, "summary.toml", text.as_bytes())?;
    Ok(summary)
}

/// Reads, validates and runs the config at `path`.
pub fn run_experiment(path: &Path, overrides: &RunOverrides) -> Result<RunSummary, ExperimentError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    run_config(&cfg, &bytes, overrides)
}

/// Reads and checks the config at `path` without running it.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>, ExperimentError> {
    let text = fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    Ok(build::validate_experiment(&cfg))
}

/// Default initial condition the runner would use for `r`; exposed so tests
/// and examples can reproduce a run by hand.
pub fn resolve_initial_state(cfg: &ExperimentConfig, r: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), ExperimentError> {
    let Ready { plant, ctrl } = prepare(cfg)?;
    let ctrl = ctrl.ok_or_else(|| invalid(Diagnostic::new("controller", "required")))?;
    build::initial_state(cfg, &plant, &ctrl, r, None).map_err(invalid)
}
