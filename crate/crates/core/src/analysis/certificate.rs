//! Linearization stability certificates with fitted exponential envelopes
//! `‖x(t) − Ξ(v)‖ ≤ ρ e^{−λ t} ‖x(0) − Ξ(v)‖` for perturbations up to `ε0`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use super::{equilibrium, AnalysisError};
use crate::control::Plant;
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    /// Fit `(ρ, λ, ε0)` from simulated perturbation decay.
    pub fit_decay: bool,
    /// `stable` requires `spectral_abscissa ≤ −margin`.
    pub margin: f64,
    /// Bisection steps for `ε0`.
    pub bisection_steps: usize,
    /// A perturbation "decays" when its norm ends below this fraction of
    /// its initial size.
    pub decay_fraction: f64,
    /// Cap on integration steps per perturbation run.
    pub max_steps: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            fit_decay: false,
            margin: 1e-9,
            bisection_steps: 8,
            decay_fraction: 1e-2,
            max_steps: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub input: Vec<f64>,
    pub equilibrium: Vec<f64>,
    pub spectral_abscissa: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<Complex<f64>>,
    pub stable: bool,
    pub estimated_rho: Option<f64>,
    pub estimated_lambda: Option<f64>,
    /// Largest tested perturbation (absolute, in state units) that decayed.
    pub estimated_eps0: Option<f64>,
}

/// Integration grid used for perturbation runs around `a`'s equilibrium.
fn decay_grid(a: &DMatrix<f64>, abscissa: f64, max_steps: usize) -> (f64, usize) {
    let fastest = linalg::eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-12);
    let horizon = 8.0 / abscissa.abs().max(1e-6);
    let mut h = 0.05 / fastest;
    let mut steps = (horizon / h).ceil() as usize;
    if steps > max_steps {
        // coarser steps while RK4 stays well inside its stability region
        h = (horizon / max_steps as f64).min(1.0 / fastest);
        steps = (horizon / h).ceil() as usize;
    }
    (h, steps.max(1))
}

/// `‖x(t) − x_eq‖ / ‖x(0) − x_eq‖` along the constant-input trajectory from
/// `x_eq + eps·dir`, sampled at every step. `None` if the run fails.
fn decay_ratios(
    plant: &dyn Plant,
    v: &DVector<f64>,
    x_eq: &DVector<f64>,
    dir: &DVector<f64>,
    eps: f64,
    h: f64,
    steps: usize,
) -> Option<Vec<f64>> {
    let mut x = x_eq + dir * eps;
    plant.canonicalize(&mut x);
    let dev0 = {
        let mut d = &x - x_eq;
        plant.canonicalize(&mut d);
        d.norm()
    };
    if dev0 == 0.0 {
        return None;
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(1.0);
    for _ in 0..steps {
        x = linalg::rk4_step(|z| plant.rhs(z, v), &x, h).ok()?;
        plant.canonicalize(&mut x);
        let mut d = &x - x_eq;
        plant.canonicalize(&mut d);
        let r = d.norm() / dev0;
        if !r.is_finite() || r > 1e6 {
            return None;
        }
        out.push(r);
    }
    Some(out)
}

fn all_decay(runs: &[Option<Vec<f64>>], fraction: f64) -> bool {
    runs.iter()
        .all(|r| r.as_ref().is_some_and(|r| *r.last().expect("nonempty") <= fraction))
}

/// Linearization `A(v) = ∂f0/∂x` at `Ξ(v)` and its spectral abscissa;
/// optionally the fitted decay envelope.
///
/// The envelope fit perturbs the equilibrium along every real eigen-direction
/// and coordinate axis (both signs). `ε0` is the largest size, found by bisection, for which all
/// perturbations decay; `λ` is minus the slope of a least-squares line through
/// the upper log-envelope; `ρ` is the smallest prefactor that makes
/// `ρ e^{−λ t}` an upper bound on every recorded ratio.
pub fn linearization_certificate(
    plant: &dyn Plant,
    v: &DVector<f64>,
    options: &CertificateOptions,
) -> Result<StabilityCertificate, AnalysisError> {
    let x_eq = equilibrium(plant, v)?;
    let a = match plant.state_jacobian(&x_eq, v) {
        Some(j) => j,
        None => linalg::central_jacobian(|z| plant.rhs(z, v), &x_eq)?,
    };
    let eigenvalues = linalg::eigenvalues(&a);
    let abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let stable = abscissa <= -options.margin;
    let mut cert = StabilityCertificate {
        input: v.iter().copied().collect(),
        equilibrium: x_eq.iter().copied().collect(),
        spectral_abscissa: abscissa,
        eigenvalues,
        stable,
        estimated_rho: None,
        estimated_lambda: None,
        estimated_eps0: None,
    };
    if !(stable && options.fit_decay) {
        return Ok(cert);
    }

    let (h, steps) = decay_grid(&a, abscissa, options.max_steps);
    // eigen-directions miss the transient growth of non-normal linearizations,
    // so the coordinate axes are probed as well
    let mut basis = linalg::eigen_directions(&a);
    for i in 0..a.nrows() {
        let mut e = DVector::zeros(a.nrows());
        e[i] = 1.0;
        if !basis.iter().any(|d| (d.dot(&e).abs() - 1.0).abs() < 1e-9) {
            basis.push(e);
        }
    }
    let mut dirs = Vec::new();
    for d in basis {
        dirs.push(-&d);
        dirs.push(d);
    }
    let scale = 1.0 + x_eq.norm();
    let runs_at =
        |eps: f64| -> Vec<Option<Vec<f64>>> { dirs.iter().map(|d| decay_ratios(plant, v, &x_eq, d, eps, h, steps)).collect() };

    let mut lo = 1e-6 * scale;
    let mut hi = scale;
    let mut runs = runs_at(lo);
    if !all_decay(&runs, options.decay_fraction) {
        return Ok(cert);
    }
    let top = runs_at(hi);
    if all_decay(&top, options.decay_fraction) {
        lo = hi;
        runs = top;
    } else {
        for _ in 0..options.bisection_steps {
            let mid = (lo * hi).sqrt();
            let trial = runs_at(mid);
            if all_decay(&trial, options.decay_fraction) {
                lo = mid;
                runs = trial;
            } else {
                hi = mid;
            }
        }
    }

    let runs: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let envelope: Vec<f64> = (0..=steps)
        .map(|i| runs.iter().map(|r| r[i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE).ln())
        .collect();
    let lambda = match linalg::linear_fit(&times, &envelope) {
        Some((slope, _)) if slope < 0.0 => -slope,
        _ => -abscissa,
    };
    let rho = times
        .iter()
        .zip(&envelope)
        .map(|(t, l)| (l + lambda * t).exp())
        .fold(1.0, f64::max);
    cert.estimated_eps0 = Some(lo);
    cert.estimated_lambda = Some(lambda);
    cert.estimated_rho = Some(rho);
    Ok(cert)
}

/// Largest value of `ratio(t) / (ρ e^{−λ t})` along a perturbation of size
/// `eps` in direction `dir` (not necessarily one used for the fit). Values
/// `≤ 1` mean the envelope holds.
pub fn envelope_excess(
    plant: &dyn Plant,
    cert: &StabilityCertificate,
    dir: &DVector<f64>,
    eps: f64,
    max_steps: usize,
) -> Result<f64, AnalysisError> {
    let (Some(rho), Some(lambda)) = (cert.estimated_rho, cert.estimated_lambda) else {
        return Err(AnalysisError::InvalidArgument("certificate has no decay envelope".into()));
    };
    let v = DVector::from_column_slice(&cert.input);
    let x_eq = DVector::from_column_slice(&cert.equilibrium);
    let a = match plant.state_jacobian(&x_eq, &v) {
        Some(j) => j,
        None => linalg::central_jacobian(|z| plant.rhs(z, &v), &x_eq)?,
    };
    let (h, steps) = decay_grid(&a, cert.spectral_abscissa, max_steps);
    let unit = dir / dir.norm();
    let ratios = decay_ratios(plant, &v, &x_eq, &unit, eps, h, steps)
        .ok_or_else(|| AnalysisError::InvalidArgument("perturbation run failed".into()))?;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(i, r)| r / (rho * (-lambda * i as f64 * h).exp()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{CubicPlant, LtiPlant};

    #[test]
    fn minus_identity_is_stable_with_unit_rate() {
        let eye = DMatrix::identity(2, 2);
        let p = LtiPlant::new(-eye.clone(), eye.clone(), eye).unwrap();
        let opts = CertificateOptions {
            fit_decay: true,
            ..CertificateOptions::default()
        };
        let c = linearization_certificate(&p, &DVector::from_vec(vec![0.5, 0.5]), &opts).unwrap();
        assert!((c.spectral_abscissa + 1.0).abs() < 1e-12);
        assert!(c.stable);
        assert!((c.estimated_lambda.unwrap() - 1.0).abs() < 1e-6);
        assert!((c.estimated_rho.unwrap() - 1.0).abs() < 1e-6);
        assert!(c.estimated_eps0.unwrap() > 0.0);
    }

    #[test]
    fn cubic_with_positive_linear_term_is_unstable_at_origin() {
        let p = CubicPlant { a1: 1.0, a3: 1.0 };
        // no closed form: Newton from the default guess (the origin)
        let c = linearization_certificate(&p, &DVector::from_element(1, 0.0), &CertificateOptions::default()).unwrap();
        assert!((c.spectral_abscissa - 1.0).abs() < 1e-12);
        assert!(!c.stable);
        assert!(c.estimated_rho.is_none());
    }

    #[test]
    fn held_out_perturbation_respects_the_envelope() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -2.0]);
        let p = LtiPlant::new(a, DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let opts = CertificateOptions {
            fit_decay: true,
            ..CertificateOptions::default()
        };
        let c = linearization_certificate(&p, &DVector::from_vec(vec![1.0, 0.0]), &opts).unwrap();
        assert!(c.estimated_rho.unwrap() >= 1.0);
        let excess = envelope_excess(&p, &c, &DVector::from_vec(vec![0.3, -0.8]), 1e-3, opts.max_steps).unwrap();
        assert!(excess <= 2.0, "{excess}");
    }
}
