//! Slow/fast decomposition of the loop around a reference.
//!
//! With `x̃ = x − x_r`, `ũ_I = u_I − u_r` and slow time `s = k t`, the reduced
//! model is `dũ_I/ds = Π_Ũ(ũ_I, r − G(𝒩(ũ_I + u_r)))` and the boundary layer is
//! `ẋ̃_f = f0(x̃_f + Ξ(𝒩(ũ_I + u_r)), 𝒩(ũ_I + u_r))` at frozen `ũ_I`.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{AnalysisError, SteadyStateMaps};
use crate::control::{simulate_closed_loop, AwPiController, Plant, SimOptions, Termination};
use crate::sets::ConvexSet;

/// Newton budget for `G(𝒩(u)) = r`.
const REFERENCE_BUDGET: usize = 100;

#[derive(Clone)]
pub struct TwoTimeScale {
    pub r: DVector<f64>,
    pub u_r: DVector<f64>,
    pub x_r: DVector<f64>,
    /// `U − u_r`.
    pub u_set_shifted: ConvexSet,
    /// `G(𝒩(u_r))`: equals `r` up to the Newton residual. The reduced model
    /// uses it in place of `r` so that the origin is an exact equilibrium.
    pub r_attained: DVector<f64>,
    maps: SteadyStateMaps,
}

impl TwoTimeScale {
    pub fn maps(&self) -> &SteadyStateMaps {
        &self.maps
    }

    /// `Ξ̃(ũ) = Ξ(𝒩(ũ + u_r)) − x_r`.
    pub fn xi_shifted(&self, u_t: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        let mut d = self.maps.xi(&self.maps.nmap().apply(&(u_t + &self.u_r)))? - &self.x_r;
        self.maps.plant().canonicalize(&mut d);
        Ok(d)
    }

    /// `Π_Ũ(ũ, r − G̃(ũ))`.
    pub fn reduced_rhs(&self, u_t: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        let drive = &self.r_attained - self.maps.composed(&(u_t + &self.u_r))?;
        Ok(self.u_set_shifted.tangent_project(u_t, &drive)?.projected)
    }

    /// `f0(x̃_f + Ξ(𝒩(ũ + u_r)), 𝒩(ũ + u_r))`.
    pub fn boundary_rhs(&self, u_t: &DVector<f64>, x_f: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        let v = self.maps.nmap().apply(&(u_t + &self.u_r));
        let x = x_f + self.maps.xi(&v)?;
        Ok(self.maps.plant().rhs(&x, &v)?)
    }

    /// Projected-Euler integration of the reduced model in slow time:
    /// `ũ_{n+1} = P_Ũ(ũ_n + h_s (r − G̃(ũ_n)))`, `n = 0..steps`.
    pub fn simulate_reduced(&self, u_t0: &DVector<f64>, h_s: f64, steps: usize) -> Result<Vec<DVector<f64>>, AnalysisError> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut u = self.u_set_shifted.project(u_t0)?;
        out.push(u.clone());
        for _ in 0..steps {
            let drive = &self.r_attained - self.maps.composed(&(&u + &self.u_r))?;
            u = self.u_set_shifted.project(&(&u + drive * h_s))?;
            out.push(u.clone());
        }
        Ok(out)
    }
}

/// Solves `G(𝒩(u_r)) = r` by damped Newton from `P_U(r)` and builds the
/// shifted model. Fails with `InfeasibleReference` when no solution is found
/// in `U`.
pub fn build_two_time_scale(
    plant: Arc<dyn Plant>,
    ctrl: &AwPiController,
    r: &DVector<f64>,
) -> Result<TwoTimeScale, AnalysisError> {
    crate::control::check_len("reference", plant.output_dim(), r)?;
    let maps = SteadyStateMaps::new(plant, ctrl.nmap().clone())?;
    let u_set = ctrl.u_set();
    let infeasible = |why: String| AnalysisError::InfeasibleReference(format!("{:?}: {why}", r.as_slice()));

    let residual = |u: &DVector<f64>| maps.composed(u).map(|g| g - r);
    let mut u = u_set.project(r)?;
    let mut f = match residual(&u) {
        Ok(f) => f,
        Err(_) => {
            u = u_set.interior_point().clone();
            residual(&u).map_err(|e| infeasible(e.to_string()))?
        }
    };
    let tol = 1e-10 * (1.0 + r.norm());
    let mut converged = f.norm() <= tol;
    for _ in 0..REFERENCE_BUDGET {
        if converged {
            break;
        }
        let j = maps.composed_jacobian(&u).map_err(|e| infeasible(e.to_string()))?;
        let step = j
            .lu()
            .solve(&-&f)
            .ok_or_else(|| infeasible("singular steady-state Jacobian".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &u + &step * alpha;
            if let Ok(fc) = residual(&cand) {
                if fc.norm() < f.norm() {
                    u = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = f.norm() <= tol;
    }
    if !converged {
        return Err(infeasible(format!("Newton stalled at residual {:.3e}", f.norm())));
    }
    if !u_set.contains(&u, 1e-9 * (1.0 + u.norm())) {
        return Err(infeasible(format!("solution {:?} lies outside U", u.as_slice())));
    }
    let x_r = maps.xi(&maps.nmap().apply(&u))?;
    let r_attained = maps.composed(&u)?;
    let shift = -&u;
    Ok(TwoTimeScale {
        r: r.clone(),
        u_set_shifted: u_set.translated(&shift)?,
        u_r: u,
        x_r,
        r_attained,
        maps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpPoint {
    pub k: f64,
    /// `sup_t ‖u_I,full(t) − u_I,reduced(t)‖`.
    pub slow_error: f64,
    pub termination: Termination,
}

/// For each gain, runs the full loop and the reduced model (in `s = k t`
/// with `h_s = k h`, so both live on the same time grid) and reports the
/// sup-distance of the integrator states.
#[allow(clippy::too_many_arguments)]
pub fn sp_consistency_check(
    plant: Arc<dyn Plant>,
    ctrl: &AwPiController,
    r: &DVector<f64>,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    horizon: f64,
    h: f64,
    k_list: &[f64],
) -> Result<Vec<SpPoint>, AnalysisError> {
    let tts = build_two_time_scale(plant.clone(), ctrl, r)?;
    let opts = SimOptions {
        boundary_check_stride: 0,
        ..SimOptions::default()
    };
    k_list
        .par_iter()
        .map(|&k| {
            let c = ctrl.with_gain(k)?;
            let run = simulate_closed_loop(plant.as_ref(), &c, r, x0, u0, horizon, h, &opts)?;
            let steps = run.samples.len() - 1;
            let h_eff = horizon / ((horizon / h).round().max(1.0));
            let reduced = tts.simulate_reduced(&(u0 - &tts.u_r), k * h_eff, steps)?;
            let slow_error = run
                .samples
                .iter()
                .zip(&reduced)
                .map(|(s, u_t)| (&s.u_i - (u_t + &tts.u_r)).norm())
                .fold(0.0, f64::max);
            Ok(SpPoint {
                k,
                slow_error,
                termination: run.termination,
            })
        })
        .collect()
}
