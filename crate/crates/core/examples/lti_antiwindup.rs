//! Integrator windup on `ẋ = −x + sat(v)` with an actuator limited to
//! `|v| ≤ 2`. The reference first asks for 3 (unreachable) for 30 s and then
//! drops to 0.5. The classical integrator keeps growing while the actuator is
//! saturated and needs a long time to unwind; the saturating one, confined
//! to U = [−2, 2], recovers at the plant's own speed.

use std::sync::Arc;

use awpds::control::{
    run_reference_schedule, AwPiController, IdentityMap, IntegratorMode, Plant, PlantError, ReferenceStep, SimOptions,
};
use awpds::sets::ConvexSet;
use nalgebra::{dvector, DVector};

const LIMIT: f64 = 2.0;

struct SaturatedLag;

impl Plant for SaturatedLag {
    fn name(&self) -> &str {
        "saturated-lag"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn rhs(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        Ok(dvector![-x[0] + v[0].clamp(-LIMIT, LIMIT)])
    }
    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = SaturatedLag;
    let u_set = ConvexSet::axis_box(dvector![-LIMIT], dvector![LIMIT])?;
    let schedule = [
        ReferenceStep {
            r: dvector![3.0],
            duration: 30.0,
        },
        ReferenceStep {
            r: dvector![0.5],
            duration: 60.0,
        },
    ];
    let (x0, u0) = (dvector![0.0], dvector![0.0]);
    let opts = SimOptions {
        record_stride: 10,
        boundary_check_stride: 0,
        ..SimOptions::default()
    };

    for mode in [IntegratorMode::Saturating, IntegratorMode::Classical] {
        let ctrl = AwPiController::new(u_set.clone(), Arc::new(IdentityMap { dim: 1 }), 0.5, 0.0, mode)?;
        let run = run_reference_schedule(&plant, &ctrl, &schedule, &x0, &u0, 1e-2, &opts)?;
        let first = &run.segments[0];
        // time after the switch until |e| stays below 1e-2
        let settle = run
            .samples
            .iter()
            .rev()
            .find(|s| s.t > 30.0 && s.e[0].abs() > 1e-2)
            .map_or(0.0, |s| s.t - 30.0);
        println!("{}:", mode.as_str());
        println!(
            "  at t = 30: u_I = {:.3}, y = {:.3}",
            first.final_integrator[0], first.final_output[0]
        );
        println!(
            "  settling time after the switch: {settle:.2} s, final error {:.2e}",
            run.final_error_norm()
        );
    }
    Ok(())
}
