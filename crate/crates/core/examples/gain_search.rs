//! Empirical bound on the integral gain for a first-order plant followed by
//! three unit lags (`1/(s+1)⁴`). The linear loop `k/(s (s+1)⁴)` is stable for
//! k < tan(π/8)·sec⁴(π/8) ≈ 0.569; the search reports the largest grid gain
//! up to which every probe converges.

use std::sync::Arc;

use awpds::analysis::{empirical_gain_bound, Probe};
use awpds::control::{AwPiController, IdentityMap, IntegratorMode, LtiPlant, SimOptions};
use awpds::sets::ConvexSet;
use nalgebra::{dvector, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LtiPlant::lag_chain(3, 1.0)?;
    let u_set = ConvexSet::axis_box(dvector![-5.0], dvector![5.0])?;
    let factory = |k: f64| {
        AwPiController::new(
            u_set.clone(),
            Arc::new(IdentityMap { dim: 1 }),
            k,
            0.0,
            IntegratorMode::Saturating,
        )
    };
    let probes = [
        Probe {
            r: dvector![1.0],
            x0: DVector::zeros(4),
            u0: dvector![0.0],
        },
        Probe {
            r: dvector![-2.0],
            x0: DVector::from_element(4, 1.0),
            u0: dvector![1.0],
        },
    ];
    let grid = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8];
    let res = empirical_gain_bound(&plant, &factory, &probes, &grid, 300.0, 1e-2, 1e-3, &SimOptions::default())?;
    for t in &res.tested_gains {
        println!(
            "k = {:<5} converged {:<5} worst |e|/max(1,|r|) = {:.3e}",
            t.k, t.converged, t.worst_relative_error
        );
    }
    match res.kappa_empirical {
        Some(k) => println!("empirical gain bound: {k}"),
        None => println!("even the smallest gain fails"),
    }
    Ok(())
}
