use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Stopping rule for the Riccati fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    /// Stop once `||P_{i+1} - P_i||_F <= tol * (1 + ||P_i||_F)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of the DARE residual at the returned `p`.
    pub residual: f64,
}

/// One application of the filter Riccati map
/// `P -> A P A' + Q - A P C' (C P C' + R)^-1 C P A'`.
fn riccati_map(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let apc = a * p * c.transpose();
    let s = c * p * c.transpose() + r;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("C P C' + R is not positive definite".into()))?;
    let gain_t = chol.solve(&apc.transpose());
    let mut next = a * p * a.transpose() + q - &apc * gain_t;
    symmetrize(&mut next);
    Ok(next)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Stabilizing solution of the filter-form DARE, iterating the Riccati
/// recursion from `P_0 = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    solve_dare_with(a, c, q, r, q, DareOptions::default())
}

/// Same as [`solve_dare`] with an explicit initial iterate and stopping rule.
pub fn solve_dare_with(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<DareSolution> {
    let n = a.nrows();
    if a.ncols() != n || c.ncols() != n || q.shape() != (n, n) || p0.shape() != (n, n) {
        return Err(Error::Domain("DARE dimension mismatch".into()));
    }
    if r.shape() != (c.nrows(), c.nrows()) {
        return Err(Error::Domain("DARE measurement covariance has wrong shape".into()));
    }
    let mut p = p0.clone();
    let mut last_step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = riccati_map(a, c, q, r, &p)?;
        last_step = (&next - &p).norm();
        let scale = 1.0 + p.norm();
        p = next;
        if !last_step.is_finite() {
            break;
        }
        if last_step <= opts.tol * scale {
            let residual = (riccati_map(a, c, q, r, &p)? - &p).norm();
            return Ok(DareSolution {
                p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn residual_ok(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> bool {
        let res = (riccati_map(a, c, q, r, p).unwrap() - p).norm();
        res <= 1e-10 * (1.0 + p.norm())
    }

    #[test]
    fn zero_dynamics_gives_q() {
        let (a, c, q, r) = (dmatrix![0.0], dmatrix![1.0], dmatrix![0.3], dmatrix![2.0]);
        let sol = solve_dare(&a, &c, &q, &r).unwrap();
        assert!((sol.p[(0, 0)] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn scalar_random_walk_closed_form() {
        let (q, r) = (0.2, 0.5);
        let sol = solve_dare(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![q], &dmatrix![r]).unwrap();
        let exact = (q + (q * q + 4.0 * q * r).sqrt()) / 2.0;
        assert!((sol.p[(0, 0)] - exact).abs() < 1e-11);
    }

    #[test]
    fn double_integrator_independent_of_initializer() {
        let ts: f64 = 0.01;
        let a = dmatrix![1.0, ts; 0.0, 1.0];
        let c = dmatrix![1.0, 0.0];
        let q: DMatrix<f64> = 1e-2 * dmatrix![ts.powi(3) / 3.0, ts * ts / 2.0; ts * ts / 2.0, ts];
        let r = dmatrix![1e-6];
        let from_q = solve_dare(&a, &c, &q, &r).unwrap();
        let from_big = solve_dare_with(&a, &c, &q, &r, &(10.0 * DMatrix::identity(2, 2)), DareOptions::default()).unwrap();
        assert!((&from_q.p - &from_big.p).norm() < 1e-9 * (1.0 + from_q.p.norm()));
        assert!(residual_ok(&a, &c, &q, &r, &from_q.p));
        let eig = from_q.p.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn unstable_undetectable_pair_does_not_converge() {
        // unstable mode invisible to the sensor
        let a = dmatrix![1.5, 0.0; 0.0, 0.5];
        let c = dmatrix![0.0, 1.0];
        let q = DMatrix::identity(2, 2);
        let r = dmatrix![1.0];
        let opts = DareOptions { tol: 1e-12, max_iter: 2_000 };
        let err = solve_dare_with(&a, &c, &q, &r, &q, opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}
