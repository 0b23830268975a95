//! Where the synchronverter can settle. Over the input rectangle ℛ, compares
//! the algebraic condition |Λ(v)| < 1 with stability of the linearization,
//! and counts how much of the (P, Q) plane lies in 𝒰 and in U.
//!
//! `cargo run --release --example synchronverter_regions [out_dir]` also
//! writes `region.csv` and `output_plane.csv`.

use std::fs::File;

use awpds::synchronverter::{
    build_u, input_rectangle, output_raster, region_agreement, region_raster, write_output_csv, write_region_csv, SvParams,
    UOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SvParams::default();
    let (lo, hi) = input_rectangle();
    let nodes = region_raster(&params, [lo[0], lo[1]], [hi[0], hi[1]], 140, 120)?;
    let stable = nodes.iter().filter(|n| n.in_v).count();
    let feasible = nodes.iter().filter(|n| n.lambda_abs_lt_1()).count();
    println!("{} nodes over [{}, {}] × [{}, {}]", nodes.len(), lo[0], hi[0], lo[1], hi[1]);
    println!("  |Λ| < 1: {feasible}   stable equilibrium: {stable}");
    for band in [0.0, 0.02, 0.05] {
        let (share, n) = region_agreement(&nodes, band);
        println!("  among {n} nodes with |Λ| < 1 − {band}: {:.2}% stable", 100.0 * share);
    }

    let u_set = build_u(&params, &UOptions::default())?;
    let plane = output_raster(&params, &u_set, [-20e3, -20e3], [20e3, 20e3], 161, 161);
    let in_cal_u = plane.iter().filter(|n| n.in_feasible).count();
    let in_u = plane.iter().filter(|n| n.in_u).count();
    let outside = plane.iter().filter(|n| n.in_u && !n.in_feasible).count();
    println!(
        "(P, Q) plane, {} nodes: {in_cal_u} in 𝒰, {in_u} in U, {outside} in U but not in 𝒰",
        plane.len()
    );

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        write_region_csv(&nodes, File::create(format!("{dir}/region.csv"))?)?;
        write_output_csv(&plane, File::create(format!("{dir}/output_plane.csv"))?)?;
        println!("wrote {dir}/region.csv and {dir}/output_plane.csv");
    }
    Ok(())
}
