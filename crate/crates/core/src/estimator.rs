//! Steady-state Kalman filter in one-step innovation form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::numkernel::solve_dare;
use crate::robot::PlantModel;

/// Steady-state prediction covariance `P`, innovation covariance
/// `Sigma = C P C' + R` and gain `L = A P C' Sigma^-1`.
#[derive(Debug, Clone)]
pub struct KalmanGainSet {
    pub p: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub l: DMatrix<f64>,
    sigma_chol: Cholesky<f64, Dyn>,
}

impl KalmanGainSet {
    pub fn from_parts(model: &PlantModel, p: DMatrix<f64>) -> Result<Self> {
        let sigma = &model.c * &p * model.c.transpose() + &model.r;
        let sigma_chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
        // L = A P C' Sigma^-1  <=>  Sigma L' = C P A'
        let l = sigma_chol.solve(&(&model.c * &p * model.a.transpose())).transpose();
        Ok(Self {
            p,
            sigma,
            l,
            sigma_chol,
        })
    }

    /// Cached factor of `Sigma`.
    pub fn sigma_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.sigma_chol
    }

    pub fn sigma_inverse(&self) -> DMatrix<f64> {
        self.sigma_chol.inverse()
    }
}

pub fn kf_design(model: &PlantModel) -> Result<KalmanGainSet> {
    let sol = solve_dare(&model.a, &model.c, &model.q, &model.r)?;
    KalmanGainSet::from_parts(model, sol.p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub xhat: DVector<f64>,
}

/// Innovation `r = y~ - C xhat`, then the time update
/// `xhat' = A xhat + B u + L r`. Returns the new state and `r`.
pub fn kf_step(
    state: &EstimatorState,
    gains: &KalmanGainSet,
    model: &PlantModel,
    u: &DVector<f64>,
    y_tilde: &DVector<f64>,
) -> (EstimatorState, DVector<f64>) {
    let r = y_tilde - &model.c * &state.xhat;
    let xhat = &model.a * &state.xhat + &model.b * u + &gains.l * &r;
    (EstimatorState { xhat }, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_model(a: f64, q: f64, r: f64) -> PlantModel {
        PlantModel {
            a: dmatrix![a],
            b: dmatrix![1.0],
            c: dmatrix![1.0],
            q: dmatrix![q],
            r: dmatrix![r],
            ts: 1.0,
        }
    }

    #[test]
    fn zero_dynamics_design() {
        let m = scalar_model(0.0, 0.4, 0.1);
        let g = kf_design(&m).unwrap();
        assert!((g.p[(0, 0)] - 0.4).abs() < 1e-14);
        assert!((g.sigma[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(g.l[(0, 0)], 0.0);
        // L = 0: measurements are ignored
        let s = EstimatorState { xhat: dvector![2.0] };
        let (next, r) = kf_step(&s, &g, &m, &dvector![1.0], &dvector![100.0]);
        assert_eq!(r[0], 98.0);
        assert_eq!(next.xhat[0], 1.0);
    }

    #[test]
    fn random_walk_design() {
        let (q, r) = (0.3, 0.7);
        let g = kf_design(&scalar_model(1.0, q, r)).unwrap();
        assert!((g.p[(0, 0)] - (q + (q * q + 4.0 * q * r).sqrt()) / 2.0).abs() < 1e-11);
    }

    #[test]
    fn manipulator_filter_is_stable() {
        let m = PlantModel::double_integrator(6, 0.01, 1e-2, 1e-6).unwrap();
        let g = kf_design(&m).unwrap();
        let closed = &m.a - &g.l * &m.c;
        let rho = closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(rho < 1.0, "spectral radius {rho}");
        let sigma = &m.c * &g.p * m.c.transpose() + &m.r;
        assert!((sigma - &g.sigma).norm() < 1e-18);
    }

    #[test]
    fn consistent_measurement_gives_zero_innovation() {
        let m = PlantModel::double_integrator(2, 0.01, 1e-2, 1e-6).unwrap();
        let g = kf_design(&m).unwrap();
        let s = EstimatorState {
            xhat: dvector![0.1, -0.2, 0.3, 0.05],
        };
        let u = dvector![1.0, -2.0];
        let (next, r) = kf_step(&s, &g, &m, &u, &(&m.c * &s.xhat));
        assert_eq!(r.norm(), 0.0);
        assert_eq!(next.xhat, &m.a * &s.xhat + &m.b * &u);
    }
}
