//! Static input maps `𝒩: 𝒰 → 𝒱` placed between the integrator and the plant.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

/// `𝒩: R^p ⊃ 𝒰 → R^m`.
pub trait InputMap: Send + Sync {
    fn name(&self) -> &str;
    /// Dimension `p` of the integrator space.
    fn input_dim(&self) -> usize;
    /// Dimension `m` of the plant input.
    fn output_dim(&self) -> usize;
    fn apply(&self, u: &DVector<f64>) -> DVector<f64>;

    /// Membership predicate of the map's own domain. The region of interest
    /// also requires the image to be admissible for the plant.
    fn in_domain(&self, _u: &DVector<f64>) -> bool {
        true
    }

    fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        linalg::central_jacobian(|w| Ok::<_, ()>(self.apply(w)), u).expect("infallible")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityMap {
    pub dim: usize,
}

impl InputMap for IdentityMap {
    fn name(&self) -> &str {
        "identity"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }
    fn jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// `𝒩(u) = N u` for a constant `m × p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMap {
    matrix: DMatrix<f64>,
    label: String,
}

impl MatrixMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self::labelled(matrix, "static-matrix")
    }

    pub fn labelled(matrix: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self {
            matrix,
            label: label.into(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl InputMap for MatrixMap {
    fn name(&self) -> &str {
        &self.label
    }
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u
    }
    fn jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_map_jacobian_is_the_matrix() {
        let m = MatrixMap::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let u = DVector::from_vec(vec![0.5, -1.0]);
        assert_eq!(m.apply(&u), DVector::from_vec(vec![-1.5, -2.5]));
        assert_eq!(m.jacobian(&u), *m.matrix());
    }

    #[test]
    fn default_jacobian_uses_central_differences() {
        struct Square;
        impl InputMap for Square {
            fn name(&self) -> &str {
                "square"
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn output_dim(&self) -> usize {
                1
            }
            fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
                u.map(|x| x * x)
            }
        }
        let j = Square.jacobian(&DVector::from_element(1, 3.0));
        assert!((j[(0, 0)] - 6.0).abs() < 1e-8);
    }
}
