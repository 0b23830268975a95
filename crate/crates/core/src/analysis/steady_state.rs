//! Equilibria `Ξ(v)` of constant-input plants and the DC maps built on them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::control::{InputMap, Plant, PlantError};
use crate::linalg;

/// Newton iteration budget for `f0(x, v) = 0`.
pub const NEWTON_BUDGET: usize = 100;

/// Damped Newton on `x ↦ f0(x, v)`: full steps are halved until the residual
/// decreases. Stops once `‖f0(x, v)‖ ≤ 1e-10 (1 + ‖f0(x_guess, v)‖)`.
///
/// Uses the plant's Jacobian when it has one, central differences otherwise.
pub fn solve_steady_state(plant: &dyn Plant, v: &DVector<f64>, x_guess: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
    crate::control::check_len("state guess", plant.state_dim(), x_guess)?;
    crate::control::check_len("input", plant.input_dim(), v)?;
    if x_guess.iter().any(|c| !c.is_finite()) {
        return Err(AnalysisError::InvalidArgument("state guess must be finite".into()));
    }
    let mut x = x_guess.clone();
    plant.canonicalize(&mut x);
    let mut fx = plant.rhs(&x, v)?;
    let tol = 1e-10 * (1.0 + fx.norm());
    let mut res = fx.norm();

    for _ in 0..NEWTON_BUDGET {
        if res <= tol {
            return Ok(x);
        }
        let jac = match plant.state_jacobian(&x, v) {
            Some(j) => j,
            None => linalg::central_jacobian(|z| plant.rhs(z, v), &x)?,
        };
        let step = jac
            .clone()
            .lu()
            .solve(&-&fx)
            .filter(|s| s.iter().all(|c| c.is_finite()))
            .or_else(|| linalg::least_squares(&jac, &-&fx))
            .ok_or(AnalysisError::NoConvergence {
                iterations: 0,
                residual: res,
            })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = &x + &step * alpha;
            plant.canonicalize(&mut cand);
            if let Ok(fc) = plant.rhs(&cand, v) {
                let rc = fc.norm();
                if rc.is_finite() && rc < res {
                    x = cand;
                    fx = fc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= tol {
        return Ok(x);
    }
    Err(AnalysisError::NoConvergence {
        iterations: NEWTON_BUDGET,
        residual: res,
    })
}

/// `Ξ(v)`: the plant's closed form when it has one, Newton from the plant's
/// default guess otherwise. Inputs outside `𝒱` are rejected.
pub fn equilibrium(plant: &dyn Plant, v: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
    if !plant.input_admissible(v) {
        return Err(PlantError::InfeasibleInput(format!("{:?}", v.as_slice())).into());
    }
    match plant.analytic_steady_state(v) {
        Some(x) => Ok(x?),
        None => solve_steady_state(plant, v, &plant.default_state_guess(v)),
    }
}

/// `Ξ`, `G = g ∘ Ξ` and `G ∘ 𝒩` for a plant and an input map.
#[derive(Clone)]
pub struct SteadyStateMaps {
    plant: Arc<dyn Plant>,
    nmap: Arc<dyn InputMap>,
    /// Smallest monotonicity quotient seen by the last scan.
    pub mu_estimate: Option<f64>,
}

impl SteadyStateMaps {
    pub fn new(plant: Arc<dyn Plant>, nmap: Arc<dyn InputMap>) -> Result<Self, AnalysisError> {
        if nmap.output_dim() != plant.input_dim() {
            return Err(AnalysisError::InvalidArgument(format!(
                "input map produces {} inputs, plant takes {}",
                nmap.output_dim(),
                plant.input_dim()
            )));
        }
        Ok(Self {
            plant,
            nmap,
            mu_estimate: None,
        })
    }

    pub fn plant(&self) -> &Arc<dyn Plant> {
        &self.plant
    }

    pub fn nmap(&self) -> &Arc<dyn InputMap> {
        &self.nmap
    }

    pub fn xi(&self, v: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        equilibrium(self.plant.as_ref(), v)
    }

    pub fn gmap(&self, v: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        Ok(self.plant.output(&self.xi(v)?))
    }

    /// `G(𝒩(u))`.
    pub fn composed(&self, u: &DVector<f64>) -> Result<DVector<f64>, AnalysisError> {
        if !self.nmap.in_domain(u) {
            return Err(PlantError::InfeasibleInput(format!("{:?} outside the map domain", u.as_slice())).into());
        }
        self.gmap(&self.nmap.apply(u))
    }

    /// Central-difference Jacobian of `G ∘ 𝒩`.
    pub fn composed_jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>, AnalysisError> {
        linalg::central_jacobian(|w| self.composed(w), u)
    }

    pub fn stability(
        &self,
        v: &DVector<f64>,
        options: &super::CertificateOptions,
    ) -> Result<super::StabilityCertificate, AnalysisError> {
        super::linearization_certificate(self.plant.as_ref(), v, options)
    }

    /// Runs [`monotonicity_scan`](super::monotonicity_scan) on `G ∘ 𝒩` over
    /// `region` and records the estimate.
    pub fn scan_monotonicity(&mut self, region: &crate::sets::ConvexSet, samples: usize, seed: u64) -> super::MonotonicityReport {
        let report = {
            let me = &*self;
            super::monotonicity_scan(&|u: &DVector<f64>| me.composed(u).ok(), region, samples, seed)
        };
        self.mu_estimate = Some(report.mu_estimate);
        report
    }
}

/// Right inverse `N = Pᵀ (P Pᵀ)⁻¹` of a full-row-rank DC gain, so `P N = I`.
pub fn linear_right_inverse(p0: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let (p, m) = p0.shape();
    if p == 0 || m < p {
        return Err(AnalysisError::RankDeficient { smin: 0.0, smax: 0.0 });
    }
    let sv = p0.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin < 1e-10 * smax {
        return Err(AnalysisError::RankDeficient { smin, smax });
    }
    let gram = p0 * p0.transpose();
    let inv = gram.try_inverse().ok_or(AnalysisError::RankDeficient { smin, smax })?;
    Ok(p0.transpose() * inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{CubicPlant, IdentityMap, LtiPlant};

    #[test]
    fn newton_matches_lti_closed_form() {
        let eye = DMatrix::identity(2, 2);
        let p = LtiPlant::new(-eye.clone(), eye.clone(), eye).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_steady_state(&p, &v, &DVector::from_vec(vec![10.0, -3.0])).unwrap();
        assert!((x - v).norm() < 1e-10);
    }

    #[test]
    fn cubic_equilibrium_at_zero_input() {
        let p = CubicPlant::default();
        let x = solve_steady_state(&p, &DVector::from_element(1, 0.0), &DVector::from_element(1, 0.8)).unwrap();
        assert!(x[0].abs() < 1e-10);
        let v = DVector::from_element(1, 2.0);
        let x = solve_steady_state(&p, &v, &DVector::from_element(1, 0.0)).unwrap();
        // x³ + x = 2 has the root x = 1
        assert!((x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn right_inverse_examples() {
        let n = linear_right_inverse(&DMatrix::identity(2, 2)).unwrap();
        assert!((n - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        let n = linear_right_inverse(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert!((n - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5])).norm() < 1e-15);
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let n = linear_right_inverse(&p).unwrap();
        assert!((n[(0, 0)] - 0.5).abs() < 1e-15 && (n[(1, 0)] - 0.5).abs() < 1e-15);
        assert!(((&p * &n)[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_dc_gain_is_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(linear_right_inverse(&p), Err(AnalysisError::RankDeficient { .. })));
    }

    #[test]
    fn composed_map_of_lti_with_right_inverse_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let p = LtiPlant::new(a, b, c).unwrap();
        let n = linear_right_inverse(&p.dc_gain().unwrap()).unwrap();
        let maps = SteadyStateMaps::new(Arc::new(p), Arc::new(crate::control::MatrixMap::new(n))).unwrap();
        let u = DVector::from_vec(vec![0.3, -1.7]);
        assert!((maps.composed(&u).unwrap() - &u).norm() <= 1e-12 * (1.0 + u.norm()));
    }

    #[test]
    fn map_dimensions_are_checked() {
        let p = LtiPlant::first_order();
        assert!(SteadyStateMaps::new(Arc::new(p), Arc::new(IdentityMap { dim: 2 })).is_err());
    }
}
