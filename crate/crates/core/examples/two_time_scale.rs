//! Singular-perturbation view of the loop: for small k the integrator follows
//! the reduced model `du/ds = Π_U(u, r − G(𝒩(u)))` in slow time s = k t.
//! The distance between the full and reduced integrator states shrinks
//! with k.

use std::sync::Arc;

use awpds::analysis::{build_two_time_scale, sp_consistency_check};
use awpds::control::{AwPiController, IdentityMap, IntegratorMode, LtiPlant, Plant};
use awpds::sets::ConvexSet;
use nalgebra::dvector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant: Arc<dyn Plant> = Arc::new(LtiPlant::lag_chain(2, 0.5)?);
    let u_set = ConvexSet::axis_box(dvector![-2.0], dvector![2.0])?;
    let ctrl = AwPiController::new(u_set, Arc::new(IdentityMap { dim: 1 }), 0.5, 0.0, IntegratorMode::Saturating)?;

    let r = dvector![1.0];
    let tts = build_two_time_scale(plant.clone(), &ctrl, &r)?;
    println!(
        "reference {} is met at u_r = {:.6}, x_r = {:?}",
        r[0],
        tts.u_r[0],
        tts.x_r.as_slice()
    );
    let path = tts.simulate_reduced(&(dvector![-1.0] - &tts.u_r), 0.01, 500)?;
    println!(
        "reduced model from u = -1 reaches u - u_r = {:.3e} at s = 5",
        path.last().map_or(f64::NAN, |u| u[0])
    );

    let x0 = dvector![-1.0, -1.0, -1.0];
    let gains = [0.5, 0.2, 0.1, 0.05, 0.02];
    let points = sp_consistency_check(plant, &ctrl, &r, &x0, &dvector![-1.0], 30.0, 1e-3, &gains)?;
    println!("{:>6}  {:>12}  termination", "k", "sup |Δu_I|");
    for p in &points {
        println!("{:>6}  {:>12.4e}  {}", p.k, p.slow_error, p.termination.as_str());
    }
    Ok(())
}
