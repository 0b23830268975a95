//! Projected dynamical system `ż = Π_X(z, −F(z))` with an affine field.
//! Starts outside X, reaches it at unit speed and then slides along the
//! boundary to the solution of the variational inequality.

use awpds::pds::{estimate_existence_constants, simulate_pds, AffineField, PdsOptions};
use awpds::sets::ConvexSet;
use nalgebra::{dmatrix, dvector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // F(z) = A z + b with a rotational part; the unconstrained zero is (2, 1)
    let a = dmatrix![1.0, -0.5; 0.5, 1.0];
    let target = dvector![2.0, 1.0];
    let field = AffineField { b: -(&a * &target), a };

    let sets = [
        ("unit disk", ConvexSet::ball(dvector![0.0, 0.0], 1.0)?),
        ("box [-1, 1]²", ConvexSet::axis_box(dvector![-1.0, -1.0], dvector![1.0, 1.0])?),
    ];
    let z0 = dvector![-3.0, -2.0];
    for (name, set) in &sets {
        let traj = simulate_pds(set, &field, &z0, 20.0, 1e-3, &PdsOptions::default())?;
        let z = traj.final_state();
        let t = traj.times.last().copied().unwrap_or(0.0);
        println!("{name}:");
        println!(
            "  entered X at t = {:.3} (initial distance {:.3})",
            traj.entry_time,
            set.distance(&z0)?
        );
        println!(
            "  {} at t = {:.3}, z = ({:.6}, {:.6})",
            traj.termination.as_str(),
            t,
            z[0],
            z[1]
        );
        println!("  largest distance from X after entry: {:.2e}", traj.max_violation);
        let est = estimate_existence_constants(set, &field, 200, 1)?;
        println!(
            "  sampled growth bound {:.3}, one-sided bound {:.3}",
            est.growth_b, est.one_sided_b
        );
    }
    Ok(())
}
