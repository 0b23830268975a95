//! TOML experiment descriptions.
//!
//! ```toml
//! experiment = "closed_loop_run"
//! name = "lti_tracking"
//! reference = [1.0]
//!
//! [plant]
//! kind = "lti"
//! a = [[-1.0]]
//! b = [[1.0]]
//! c = [[1.0]]
//!
//! [controller]
//! mode = "saturating"
//! k = 0.1
//! input_map = "identity"
//! u_set = { kind = "box", dimension = 1, lower = [-2.0], upper = [2.0] }
//!
//! [numerics]
//! h = 1e-2
//! horizon = 200.0
//! ```
//!
//! All quantities are in SI base units (W, VAR, N·m, A, s).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::CubicPlant;
use crate::sets::SetSpec;
use crate::synchronverter::{SvParams, UOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ClosedLoopRun,
    ReferenceSchedule,
    RegionScan,
    MonotonicityScan,
    SpConsistency,
    GainSearch,
    SoftProjectionCheck,
    PdsDemo,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ClosedLoopRun => "closed_loop_run",
            ExperimentKind::ReferenceSchedule => "reference_schedule",
            ExperimentKind::RegionScan => "region_scan",
            ExperimentKind::MonotonicityScan => "monotonicity_scan",
            ExperimentKind::SpConsistency => "sp_consistency",
            ExperimentKind::GainSearch => "gain_search",
            ExperimentKind::SoftProjectionCheck => "soft_projection_check",
            ExperimentKind::PdsDemo => "pds_demo",
        }
    }
}

/// Row-major matrix.
pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagChainConfig {
    pub lags: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantConfig {
    /// Either explicit `a`, `b`, `c` or a `lag_chain` preset.
    Lti {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<MatrixRows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<MatrixRows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<MatrixRows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lag_chain: Option<LagChainConfig>,
    },
    /// `ẋ = a1 x − a3 x³ + v`, `y = x`.
    ScalarTestbed {
        #[serde(default = "default_a1")]
        a1: f64,
        #[serde(default = "default_a3")]
        a3: f64,
    },
    Synchronverter {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<SvParams>,
    },
}

fn default_a1() -> f64 {
    CubicPlant::default().a1
}
fn default_a3() -> f64 {
    CubicPlant::default().a3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Saturating,
    Classical,
    SoftProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapConfig {
    Identity,
    /// `matrix`, or `K = diag(1/50, 1/5000)` for the synchronverter.
    StaticMatrix,
    SvRightInverse,
    LinearRightInverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ModeConfig,
    pub k: f64,
    #[serde(default)]
    pub tau_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_soft: Option<f64>,
    pub input_map: MapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixRows>,
    /// Explicit `U`; exclusive with `sv_polygon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_set: Option<SetSpec>,
    /// The synchronverter polygon `U`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sv_polygon: Option<UOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub h: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Relative tracking tolerance `‖e‖ / max(1, ‖r‖)` for gain searches.
    pub tol_track: f64,
    pub blowup_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_margin: Option<f64>,
    pub boundary_check_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converge_tol: Option<f64>,
    /// Samples used by the `U ⊂ 𝒰` check and by random monotonicity scans.
    pub region_samples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            h: 1e-3,
            horizon: 10.0,
            seed: 0,
            tol_track: 1e-2,
            blowup_factor: 1e6,
            boundary_margin: None,
            boundary_check_stride: 100,
            converge_tol: None,
            region_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialPolicy {
    /// `u0 = P_U(r)`, `x0 = Ξ(𝒩(u0))`, with `r` the tracked reference or
    /// `start_reference`.
    #[default]
    ProjectedReference,
    /// `x0` and `u0` given explicitly.
    Explicit,
    /// Synchronverter with a static matrix map: the plant starts from the
    /// input `G⁻¹_right(P_U(r))` and `u0 = N⁻¹` of that input.
    MatchedRightInverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub policy: InitialPolicy,
    /// Start from the equilibrium belonging to this reference instead of the
    /// tracked one (policies other than `explicit`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_reference: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Used when the command line gives no `--out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Keep every n-th integration step in trajectory CSVs.
    pub record_stride: usize,
    /// Exit nonzero when a closed-loop run terminates abnormally.
    pub fail_on_abnormal_termination: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            record_stride: 1,
            fail_on_abnormal_termination: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub r: Vec<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePreset {
    /// The ten synchronverter references, 10 s each.
    PowerSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<SchedulePreset>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Region scans: width of the `|Λ|` band below 1 excluded from the
    /// agreement statistic.
    #[serde(default = "default_band")]
    pub band: f64,
    /// Region scans: also rasterize `𝒰` and `U` over this output-plane box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_plane: Option<PlaneConfig>,
}

fn default_band() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdsConfig {
    /// `F(z) = A z + b`; the flow is `ż = Π_X(z, −F(z))`.
    pub field_a: MatrixRows,
    pub field_b: Vec<f64>,
    pub z0: Vec<f64>,
    pub set: SetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Constant reference (closed-loop, SP and soft-projection runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    /// Gain sweep: `k` for SP checks and gain searches, `K_soft` for
    /// soft-projection checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pds: Option<PdsConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.as_str())
    }
}

/// One validation finding, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}
