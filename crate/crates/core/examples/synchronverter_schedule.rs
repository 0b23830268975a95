//! The 100 s reference schedule on the synchronverter, run twice: with the
//! saturating integrator and `𝒩 = G⁻¹_right` (k = 2), and with a classical
//! integrator and `𝒩 = K` (k = 1). Prints one line per reference.
//!
//! `cargo run --release --example synchronverter_schedule [out_dir]` also writes
//! both trajectories as CSV (every 100th step).

use std::fs::File;

use awpds::control::{run_reference_schedule, ClosedLoopRun, SimOptions};
use awpds::synchronverter::{
    build_u, classical_controller, classical_initial_integrator, initial_condition, power_schedule, saturating_controller,
    SvParams, Synchronverter, UOptions,
};

fn report(label: &str, run: &ClosedLoopRun) {
    println!("{label}: termination {}", run.termination.as_str());
    for s in &run.segments {
        let r = nalgebra::DVector::from_column_slice(&s.reference);
        println!(
            "  r{:<2} = ({:>6.0}, {:>6.0})  y = ({:>9.1}, {:>9.1})  |e|/max(|r|,1e3) = {:.2e}  {}",
            s.index + 1,
            s.reference[0],
            s.reference[1],
            s.final_output[0],
            s.final_output[1],
            s.final_error_norm / r.norm().max(1e3),
            s.termination.as_str()
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SvParams::default();
    let plant = Synchronverter::new(params)?;
    let u_set = build_u(&params, &UOptions::default())?;
    let schedule = power_schedule();
    let (x0, u0) = initial_condition(&params, &u_set, &schedule[0].r)?;
    let opts = SimOptions {
        record_stride: 100,
        ..SimOptions::default()
    };
    let h = 1e-4;

    let sat = run_reference_schedule(
        &plant,
        &saturating_controller(&params, u_set.clone(), 2.0)?,
        &schedule,
        &x0,
        &u0,
        h,
        &opts,
    )?;
    report("saturating, N = G^-1_right, k = 2", &sat);
    println!("  max distance of u_I from U: {:.3e}", sat.max_integrator_violation());

    let u0_classical = classical_initial_integrator(&params, &u0);
    let cls = run_reference_schedule(
        &plant,
        &classical_controller(u_set, 1.0)?,
        &schedule,
        &x0,
        &u0_classical,
        h,
        &opts,
    )?;
    report("classical, N = K, k = 1", &cls);

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        sat.write_csv(File::create(format!("{dir}/schedule_saturating.csv"))?)?;
        cls.write_csv(File::create(format!("{dir}/schedule_classical.csv"))?)?;
        println!("wrote {dir}/schedule_saturating.csv and {dir}/schedule_classical.csv");
    }
    Ok(())
}
