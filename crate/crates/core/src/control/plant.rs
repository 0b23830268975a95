//! Controlled plants `ẋ = f0(x, v)`, `y = g(x)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("dimension mismatch in {what}: expected {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("input outside the plant's admissible set: {0}")]
    InfeasibleInput(String),
    #[error("field current must be positive, got {0}")]
    NonPositiveFieldCurrent(f64),
    #[error("invalid plant data: {0}")]
    Invalid(String),
}

/// `ẋ = f0(x, v)`, `y = g(x)` with `x ∈ R^n`, `v ∈ R^m`, `y ∈ R^p`.
///
/// `input_admissible` is the membership predicate of the input region `𝒱`
/// on which constant inputs have an exponentially stable equilibrium.
pub trait Plant: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn rhs(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, PlantError>;
    fn output(&self, x: &DVector<f64>) -> DVector<f64>;

    fn input_admissible(&self, _v: &DVector<f64>) -> bool {
        true
    }

    /// Bounding box of `𝒱` used for sampling, when the plant declares one.
    fn input_bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// Closed-form equilibrium `Ξ(v)`, when known.
    fn analytic_steady_state(&self, _v: &DVector<f64>) -> Option<Result<DVector<f64>, PlantError>> {
        None
    }

    /// `∂f0/∂x`, when known.
    fn state_jacobian(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Maps a state onto its canonical representative (angles wrapped).
    /// Also applied to state differences.
    fn canonicalize(&self, _x: &mut DVector<f64>) {}

    /// Starting point for Newton solves of `f0(x, v) = 0`.
    fn default_state_guess(&self, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, v: &DVector<f64>) -> Result<(), PlantError> {
    if v.len() != expected {
        return Err(PlantError::DimensionMismatch {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// `ẋ = A x + B v`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(PlantError::Invalid("A must be square and nonempty".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(PlantError::Invalid(format!("B must have {n} rows")));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(PlantError::Invalid(format!("C must have {n} columns")));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(PlantError::Invalid("matrices must be finite".into()));
        }
        Ok(Self { a, b, c })
    }

    /// `ẋ = −x + v`, `y = x`.
    pub fn first_order() -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(-one.clone(), one.clone(), one).expect("valid")
    }

    /// `ẋ = −x + v` followed by `lags` first-order lags with time constant
    /// `tau`; the output is the last lag. Adds phase lag, so the integral
    /// gain that keeps the loop stable becomes finite.
    pub fn lag_chain(lags: usize, tau: f64) -> Result<Self, PlantError> {
        if !(tau > 0.0) {
            return Err(PlantError::Invalid("lag time constant must be positive".into()));
        }
        let n = lags + 1;
        let mut a = DMatrix::zeros(n, n);
        a[(0, 0)] = -1.0;
        for i in 1..n {
            a[(i, i - 1)] = 1.0 / tau;
            a[(i, i)] = -1.0 / tau;
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(0, 0)] = 1.0;
        let mut c = DMatrix::zeros(1, n);
        c[(0, n - 1)] = 1.0;
        Self::new(a, b, c)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// DC gain `P(0) = −C A⁻¹ B`, `None` if `A` is singular.
    pub fn dc_gain(&self) -> Option<DMatrix<f64>> {
        let inv = self.a.clone().try_inverse()?;
        Some(-&self.c * inv * &self.b)
    }
}

impl Plant for LtiPlant {
    fn name(&self) -> &str {
        "lti"
    }
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn rhs(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_len("state", self.state_dim(), x)?;
        check_len("input", self.input_dim(), v)?;
        Ok(&self.a * x + &self.b * v)
    }
    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
    fn analytic_steady_state(&self, v: &DVector<f64>) -> Option<Result<DVector<f64>, PlantError>> {
        let lu = self.a.clone().lu();
        let rhs = -(&self.b * v);
        Some(
            lu.solve(&rhs)
                .ok_or_else(|| PlantError::Invalid("A is singular; no unique equilibrium".into())),
        )
    }
    fn state_jacobian(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
}

/// Scalar testbed `ẋ = a1·x − a3·x³ + v`, `y = x`.
///
/// `a1 = −1, a3 = 1` is globally stable; `a1 = 1, a3 = 1` has an unstable
/// equilibrium at the origin for `v = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicPlant {
    pub a1: f64,
    pub a3: f64,
}

impl Default for CubicPlant {
    fn default() -> Self {
        Self { a1: -1.0, a3: 1.0 }
    }
}

impl Plant for CubicPlant {
    fn name(&self) -> &str {
        "scalar-testbed"
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
        check_len("state", 1, x)?;
        check_len("input", 1, v)?;
        let s = x[0];
        Ok(DVector::from_element(1, self.a1 * s - self.a3 * s * s * s + v[0]))
    }
    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn state_jacobian(&self, x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.a1 - 3.0 * self.a3 * x[0] * x[0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lti_steady_state_is_minus_a_inverse_b_v() {
        let eye = DMatrix::identity(2, 2);
        let p = LtiPlant::new(-eye.clone(), eye.clone(), eye).unwrap();
        let x = p.analytic_steady_state(&DVector::from_vec(vec![1.0, 2.0])).unwrap().unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, 2.0]));
    }

    #[test]
    fn lag_chain_has_unit_dc_gain() {
        let p = LtiPlant::lag_chain(3, 0.2).unwrap();
        let g = p.dc_gain().unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(p.state_dim(), 4);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = DMatrix::zeros(2, 3);
        let b = DMatrix::zeros(2, 1);
        let c = DMatrix::zeros(1, 2);
        assert!(LtiPlant::new(a, b, c).is_err());
    }

    #[test]
    fn cubic_jacobian_matches_difference() {
        let p = CubicPlant::default();
        let x = DVector::from_element(1, 0.7);
        let v = DVector::from_element(1, 0.3);
        let h = 1e-6;
        let fd = (p.rhs(&x.add_scalar(h), &v).unwrap()[0] - p.rhs(&x.add_scalar(-h), &v).unwrap()[0]) / (2.0 * h);
        let j = p.state_jacobian(&x, &v).unwrap()[(0, 0)];
        assert!((fd - j).abs() < 1e-8);
    }
}
