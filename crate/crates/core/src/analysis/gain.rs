//! Empirical search for the largest integral gain that still converges.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::AnalysisError;
use crate::control::{simulate_closed_loop, AwPiController, ControlError, Plant, SimOptions, Termination};

/// One initial-condition / reference pair used to judge convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub r: DVector<f64>,
    pub x0: DVector<f64>,
    pub u0: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTrial {
    pub k: f64,
    pub converged: bool,
    /// Largest final `‖e‖ / max(1, ‖r‖)` over the probes.
    pub worst_relative_error: f64,
    pub terminations: Vec<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSearchResult {
    /// Largest tested gain such that it and every smaller tested gain
    /// converged on every probe; `None` if the smallest gain already fails.
    pub kappa_empirical: Option<f64>,
    pub tested_gains: Vec<GainTrial>,
    /// Gains that converged although a smaller gain did not.
    pub non_monotone: Vec<f64>,
    pub probe_count: usize,
}

/// Runs every probe at every gain of the increasing grid `k_grid`; a gain
/// counts as converged when all probes end at the horizon with
/// `‖e‖ < tol_track · max(1, ‖r‖)`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_gain_bound(
    plant: &dyn Plant,
    ctrl_factory: &(dyn Fn(f64) -> Result<AwPiController, ControlError> + Sync),
    probes: &[Probe],
    k_grid: &[f64],
    horizon: f64,
    h: f64,
    tol_track: f64,
    options: &SimOptions,
) -> Result<GainSearchResult, AnalysisError> {
    if probes.is_empty() || k_grid.is_empty() {
        return Err(AnalysisError::InvalidArgument("need at least one probe and one gain".into()));
    }
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidArgument("gain grid must be strictly increasing".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..k_grid.len())
        .flat_map(|i| (0..probes.len()).map(move |j| (i, j)))
        .collect();
    let outcomes: Vec<(Termination, f64)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let ctrl = ctrl_factory(k_grid[i])?;
            let p = &probes[j];
            let run = simulate_closed_loop(plant, &ctrl, &p.r, &p.x0, &p.u0, horizon, h, options)?;
            Ok((run.termination, run.final_error_norm() / p.r.norm().max(1.0)))
        })
        .collect::<Result<_, ControlError>>()?;

    let mut tested_gains = Vec::with_capacity(k_grid.len());
    for (i, &k) in k_grid.iter().enumerate() {
        let slice = &outcomes[i * probes.len()..(i + 1) * probes.len()];
        let converged = slice.iter().all(|(t, e)| !t.is_abnormal() && e.is_finite() && *e < tol_track);
        tested_gains.push(GainTrial {
            k,
            converged,
            worst_relative_error: slice.iter().map(|(_, e)| *e).fold(0.0, f64::max),
            terminations: slice.iter().map(|(t, _)| *t).collect(),
        });
    }
    let prefix = tested_gains.iter().take_while(|g| g.converged).count();
    let kappa_empirical = prefix.checked_sub(1).map(|i| tested_gains[i].k);
    let non_monotone = tested_gains[prefix..].iter().filter(|g| g.converged).map(|g| g.k).collect();
    Ok(GainSearchResult {
        kappa_empirical,
        tested_gains,
        non_monotone,
        probe_count: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::control::{IdentityMap, IntegratorMode, LtiPlant};
    use crate::sets::ConvexSet;

    fn factory(k: f64) -> Result<AwPiController, ControlError> {
        AwPiController::new(
            ConvexSet::axis_box(DVector::from_element(1, -5.0), DVector::from_element(1, 5.0)).unwrap(),
            Arc::new(IdentityMap { dim: 1 }),
            k,
            0.0,
            IntegratorMode::Saturating,
        )
    }

    fn probe(n: usize) -> Probe {
        Probe {
            r: DVector::from_element(1, 1.0),
            x0: DVector::zeros(n),
            u0: DVector::zeros(1),
        }
    }

    #[test]
    fn first_order_converges_for_every_gain() {
        let p = LtiPlant::first_order();
        let grid = [0.1, 0.5, 1.0, 2.0];
        let res = empirical_gain_bound(&p, &factory, &[probe(1)], &grid, 150.0, 1e-2, 1e-3, &SimOptions::default()).unwrap();
        assert_eq!(res.kappa_empirical, Some(2.0));
        assert!(res.non_monotone.is_empty());
    }

    #[test]
    fn lag_chain_has_a_finite_bound() {
        // loop polynomial s(s+1)^4 + k is Hurwitz only for k < 0.57
        let p = LtiPlant::lag_chain(3, 1.0).unwrap();
        let grid = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
        let res = empirical_gain_bound(&p, &factory, &[probe(4)], &grid, 200.0, 1e-2, 1e-3, &SimOptions::default()).unwrap();
        assert_eq!(res.kappa_empirical, Some(0.4));
        assert!(!res.tested_gains.last().unwrap().converged);
    }
}
