//! The penalty integrator `u̇_I = k e − (u_I − P_U(u_I)) / K` approaches the
//! saturating one as K → 0. Prints the sup-distance between the two loops.

use std::sync::Arc;

use awpds::control::{soft_projection_convergence_check, AwPiController, IdentityMap, IntegratorMode, LtiPlant};
use awpds::sets::ConvexSet;
use nalgebra::dvector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LtiPlant::first_order();
    let u_set = ConvexSet::axis_box(dvector![-2.0], dvector![2.0])?;
    let ctrl = AwPiController::new(u_set, Arc::new(IdentityMap { dim: 1 }), 1.0, 0.0, IntegratorMode::Saturating)?;
    let ks = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let points =
        soft_projection_convergence_check(&plant, &ctrl, &dvector![3.0], &dvector![0.0], &dvector![0.0], 20.0, 1e-4, &ks)?;
    println!("{:>8}  {:>12}", "K", "sup error");
    for p in &points {
        println!("{:>8.0e}  {:>12.4e}", p.k_soft, p.sup_error);
    }
    Ok(())
}
