//! Small dense numerical kernels shared by the rest of the crate.
//!
//! Every problem in this crate lives in a handful of dimensions (plant
//! states ≤ 10, constraint sets ≤ 4), so these routines favour robustness
//! and simplicity over asymptotic speed.

use nalgebra::{Complex, DMatrix, DVector};

/// Relative step used by every central difference in the crate.
pub const FD_REL_STEP: f64 = 1e-6;

/// Central-difference step for coordinate `xi`.
#[inline]
pub fn fd_step(xi: f64) -> f64 {
    FD_REL_STEP * (1.0 + xi.abs())
}

/// Central-difference Jacobian of `f` at `x`.
///
/// Column `j` is `(f(x + h_j e_j) - f(x - h_j e_j)) / (2 h_j)` with
/// `h_j = 1e-6 (1 + |x_j|)`.
pub fn central_jacobian<E>(
    mut f: impl FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, E> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        cols.push((plus - minus) / (2.0 * h));
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// One classical fourth-order Runge–Kutta step of `x' = f(x)`.
pub fn rk4_step<E>(
    mut f: impl FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
    x: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, E> {
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * h)))?;
    let k3 = f(&(x + &k2 * (0.5 * h)))?;
    let k4 = f(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Minimum-norm least-squares solution of `a s ≈ b` (SVD based, tolerates
/// rank deficiency).
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-12 * smax.max(f64::MIN_POSITIVE);
    svd.solve(b, eps).ok()
}

/// Nonnegative least squares (Lawson–Hanson): `argmin_{λ ≥ 0} ‖E λ − v‖`.
///
/// Returns `None` when the iteration budget is exhausted.
pub fn nnls(e: &DMatrix<f64>, v: &DVector<f64>, max_iter: usize) -> Option<DVector<f64>> {
    let n = e.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Some(x);
    }
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let tol = 1e-14 * (1.0 + e.norm() * v.norm());

    for _ in 0..max_iter {
        let w = e.transpose() * (v - e * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(entering) = candidate else {
            return Some(x);
        };
        passive[entering] = true;

        let before = x.clone();
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > max_iter {
                return None;
            }
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                break;
            }
            let sub = e.select_columns(&idx);
            let s = least_squares(&sub, v)?;
            if s.iter().all(|&si| si > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = s[k];
                }
                break;
            }
            let mut alpha = 1.0_f64;
            let mut leaving = None;
            for (k, &j) in idx.iter().enumerate() {
                if s[k] <= 0.0 {
                    let denom = x[j] - s[k];
                    let a = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if leaving.is_none() || a < alpha {
                        alpha = a;
                        leaving = Some(j);
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s[k] - x[j]);
                if x[j] <= 0.0 || Some(j) == leaving {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        if (&x - &before).norm() == 0.0 {
            // the entering column could not be made positive; skip it until x moves
            blocked[entering] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    None
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// Maximum real part of the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the symmetric part `(J + Jᵀ)/2`.
pub fn min_symmetric_eigenvalue(j: &DMatrix<f64>) -> f64 {
    let sym = (j + j.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Real eigen-directions of `a`: for every eigenvalue, the real and
/// imaginary parts of an eigenvector obtained by shifted inverse iteration,
/// normalized. Directions that collapse numerically are dropped.
pub fn eigen_directions(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let scale = 1.0 + a.norm();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for lambda in eigenvalues(a) {
        let shift = lambda + Complex::new(1e-10 * scale, 1e-10 * scale);
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * shift;
        let lu = shifted.lu();
        let mut vec = DVector::<Complex<f64>>::from_fn(n, |i, _| Complex::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&vec) {
                Some(next) => {
                    let norm = next.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        ok = false;
                        break;
                    }
                    vec = next / Complex::new(norm, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        for part in [vec.map(|c| c.re), vec.map(|c| c.im)] {
            let norm = part.norm();
            if norm < 1e-8 {
                continue;
            }
            let unit = part / norm;
            let duplicate = dirs.iter().any(|d| (d.dot(&unit).abs() - 1.0).abs() < 1e-9);
            if !duplicate {
                dirs.push(unit);
            }
        }
    }
    if dirs.is_empty() {
        dirs = (0..n)
            .map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                e
            })
            .collect();
    }
    dirs
}

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Linear interpolation of a sampled signal at `t` (clamped at the ends).
pub fn interpolate(times: &[f64], values: &[DVector<f64>], t: f64) -> DVector<f64> {
    debug_assert_eq!(times.len(), values.len());
    if t <= times[0] {
        return values[0].clone();
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last].clone();
    }
    let hi = times.partition_point(|&s| s <= t);
    let lo = hi - 1;
    let span = times[hi] - times[lo];
    if span <= 0.0 {
        return values[lo].clone();
    }
    let w = (t - times[lo]) / span;
    &values[lo] * (1.0 - w) + &values[hi] * w
}

/// Formats a float with 17 significant digits, the CSV convention of the crate.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nnls_matches_hand_solution() {
        // columns e1, e2; v = (1, -1) → λ = (1, 0)
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let lam = nnls(&e, &v, 50).unwrap();
        assert_relative_eq!(lam[0], 1.0, epsilon = 1e-14);
        assert_eq!(lam[1], 0.0);
    }

    #[test]
    fn nnls_handles_duplicate_columns() {
        let e = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let v = DVector::from_vec(vec![2.0, 3.0]);
        let lam = nnls(&e, &v, 50).unwrap();
        let fit = &e * &lam;
        assert_relative_eq!(fit[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit[1], 3.0, epsilon = 1e-12);
        assert!(lam.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn jacobian_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let j = central_jacobian::<()>(|z| Ok(DVector::from_vec(vec![z[0] * z[0], z[0] * z[1]])), &x).unwrap();
        assert_relative_eq!(j[(0, 0)], 2.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 0)], 2.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 1)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn rk4_exponential_decay() {
        let mut x = DVector::from_vec(vec![1.0]);
        for _ in 0..100 {
            x = rk4_step::<()>(|z| Ok(-z), &x, 0.01).unwrap();
        }
        assert_relative_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn eigen_directions_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0]));
        let dirs = eigen_directions(&a);
        assert_eq!(dirs.len(), 2);
        for d in &dirs {
            let ad = &a * d;
            let lambda = ad.dot(d);
            assert!((ad - d * lambda).norm() < 1e-8);
        }
    }

    #[test]
    fn interpolation_hits_nodes_and_midpoints() {
        let t = [0.0, 1.0, 2.0];
        let v: Vec<_> = [0.0, 10.0, 30.0].iter().map(|&x| DVector::from_vec(vec![x])).collect();
        assert_eq!(interpolate(&t, &v, 1.0)[0], 10.0);
        assert_eq!(interpolate(&t, &v, 1.5)[0], 20.0);
        assert_eq!(interpolate(&t, &v, 5.0)[0], 30.0);
    }
}
