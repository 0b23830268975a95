//! Strong-monotonicity checks of `u ↦ G(𝒩(u))`.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{self, fmt17};
use crate::sets::ConvexSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityTest {
    /// `⟨F(u1) − F(u2), u1 − u2⟩ / ‖u1 − u2‖² ≤ 0`.
    Pair,
    /// Smallest eigenvalue of `(J + Jᵀ)/2` is `≤ 0`.
    Jacobian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub test: MonotonicityTest,
    pub point: DVector<f64>,
    pub partner: Option<DVector<f64>>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Smallest pair quotient over the sampled pairs.
    pub mu_estimate: f64,
    /// Smallest symmetric-part eigenvalue over the sampled points.
    pub min_jacobian_eigenvalue: f64,
    pub pairs_tested: usize,
    pub points_tested: usize,
    pub violations: Vec<MonotonicityViolation>,
    /// Samples where the map could not be evaluated.
    pub undefined: Vec<DVector<f64>>,
}

/// Smallest eigenvalue of the symmetric part of the central-difference
/// Jacobian of `composed` at `u`; `None` where a probe is undefined.
pub fn min_sym_jacobian_eigenvalue(
    composed: &(dyn Fn(&DVector<f64>) -> Option<DVector<f64>> + Sync),
    u: &DVector<f64>,
) -> Option<f64> {
    let j = linalg::central_jacobian(|w| composed(w).ok_or(()), u).ok()?;
    Some(linalg::min_symmetric_eigenvalue(&j))
}

/// Pair test over `samples` seeded pairs and Jacobian test over `samples`
/// seeded points of `region`. A scan result, not a certified modulus.
pub fn monotonicity_scan(
    composed: &(dyn Fn(&DVector<f64>) -> Option<DVector<f64>> + Sync),
    region: &ConvexSet,
    samples: usize,
    seed: u64,
) -> MonotonicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..samples)
        .map(|_| (region.sample(&mut rng), region.sample(&mut rng)))
        .collect();
    let points: Vec<DVector<f64>> = (0..samples).map(|_| region.sample(&mut rng)).collect();

    let mut report = MonotonicityReport {
        mu_estimate: f64::INFINITY,
        min_jacobian_eigenvalue: f64::INFINITY,
        pairs_tested: 0,
        points_tested: 0,
        violations: Vec::new(),
        undefined: Vec::new(),
    };

    let pair_results: Vec<_> = pairs
        .par_iter()
        .map(|(a, b)| {
            let d = a - b;
            let d2 = d.norm_squared();
            if d2.sqrt() <= 1e-12 * (1.0 + a.norm()) {
                return Ok(None);
            }
            match (composed(a), composed(b)) {
                (Some(fa), Some(fb)) => Ok(Some((fa - fb).dot(&d) / d2)),
                (None, _) => Err(a.clone()),
                (_, None) => Err(b.clone()),
            }
        })
        .collect();
    for ((a, b), res) in pairs.iter().zip(pair_results) {
        match res {
            Ok(Some(q)) => {
                report.pairs_tested += 1;
                report.mu_estimate = report.mu_estimate.min(q);
                if q <= 0.0 {
                    report.violations.push(MonotonicityViolation {
                        test: MonotonicityTest::Pair,
                        point: a.clone(),
                        partner: Some(b.clone()),
                        value: q,
                    });
                }
            }
            Ok(None) => {}
            Err(p) => report.undefined.push(p),
        }
    }

    let jac_results: Vec<Option<f64>> = points.par_iter().map(|u| min_sym_jacobian_eigenvalue(composed, u)).collect();
    for (u, res) in points.iter().zip(jac_results) {
        match res {
            Some(lam) => {
                report.points_tested += 1;
                report.min_jacobian_eigenvalue = report.min_jacobian_eigenvalue.min(lam);
                if lam <= 0.0 {
                    report.violations.push(MonotonicityViolation {
                        test: MonotonicityTest::Jacobian,
                        point: u.clone(),
                        partner: None,
                        value: lam,
                    });
                }
            }
            None => report.undefined.push(u.clone()),
        }
    }
    report
}

/// One node of a monotonicity raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityNode {
    pub u1: f64,
    pub u2: f64,
    /// `NaN` where the map is undefined.
    pub min_eig_sym_jac: f64,
}

/// Jacobian test on a `nx × ny` grid over `[lower, upper]` in the plane
/// (both ends included).
pub fn monotonicity_raster(
    composed: &(dyn Fn(&DVector<f64>) -> Option<DVector<f64>> + Sync),
    lower: [f64; 2],
    upper: [f64; 2],
    nx: usize,
    ny: usize,
) -> Vec<MonotonicityNode> {
    let nodes = grid_nodes(lower, upper, nx, ny);
    nodes
        .par_iter()
        .map(|&(u1, u2)| MonotonicityNode {
            u1,
            u2,
            min_eig_sym_jac: min_sym_jacobian_eigenvalue(composed, &DVector::from_vec(vec![u1, u2])).unwrap_or(f64::NAN),
        })
        .collect()
}

/// Grid nodes in row-major order (second coordinate outer).
pub fn grid_nodes(lower: [f64; 2], upper: [f64; 2], nx: usize, ny: usize) -> Vec<(f64, f64)> {
    let coord = |lo: f64, hi: f64, n: usize, i: usize| {
        if n <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push((coord(lower[0], upper[0], nx, i), coord(lower[1], upper[1], ny, j)));
        }
    }
    out
}

/// CSV `u_1,u_2,min_eig_sym_jac`.
pub fn write_monotonicity_csv<W: Write>(nodes: &[MonotonicityNode], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["u_1", "u_2", "min_eig_sym_jac"])?;
    for n in nodes {
        out.write_record([fmt17(n.u1), fmt17(n.u2), fmt17(n.min_eig_sym_jac)])?;
    }
    out.flush()?;
    Ok(())
}
