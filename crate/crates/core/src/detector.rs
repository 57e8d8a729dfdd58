//! Windowed chi-squared detector on Kalman innovations.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkernel::chi2_quantile;

/// Quadratic form `r' S^-1 r` with the factorization of `S` computed once.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    // inverse of the lower Cholesky factor, so that z = |L^-1 r|^2
    l_inv: DMatrix<f64>,
}

impl Mahalanobis {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Domain("covariance must be square".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let n = sigma.nrows();
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        Ok(Self { l_inv })
    }

    pub fn dim(&self) -> usize {
        self.l_inv.nrows()
    }

    pub fn eval(&self, r: &DVector<f64>) -> f64 {
        (&self.l_inv * r).norm_squared()
    }

    /// `S^-1 = L^-T L^-1`.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.l_inv.transpose() * &self.l_inv
    }
}

/// One-shot `r' S^-1 r`.
pub fn mahalanobis(r: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if r.len() != sigma.nrows() {
        return Err(Error::Domain("residual and covariance dimensions differ".into()));
    }
    Ok(Mahalanobis::new(sigma)?.eval(r))
}

/// Threshold with per-step false-alarm probability `alpha` on a `p*W` dof statistic.
pub fn calibrate_threshold(alpha: f64, p: usize, window: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if p == 0 || window == 0 {
        return Err(Error::Domain("p and W must be at least 1".into()));
    }
    let dof = u32::try_from(p * window).map_err(|_| Error::Domain("p*W overflows".into()))?;
    chi2_quantile(1.0 - alpha, dof)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    window: VecDeque<f64>,
    capacity: usize,
    w_sum: f64,
    tau: f64,
    alarm_latched: bool,
    pushes: u64,
}

impl DetectorState {
    pub fn new(window: usize, tau: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Domain("detector window must be >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("threshold must be > 0, got {tau}")));
        }
        Ok(Self {
            window: VecDeque::with_capacity(window),
            capacity: window,
            w_sum: 0.0,
            tau,
            alarm_latched: false,
            pushes: 0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn w_sum(&self) -> f64 {
        self.w_sum
    }

    pub fn window_len(&self) -> usize {
        self.capacity
    }

    pub fn warm(&self) -> bool {
        self.window.len() == self.capacity
    }

    pub fn alarm_latched(&self) -> bool {
        self.alarm_latched
    }

    pub fn contents(&self) -> impl Iterator<Item = &f64> {
        self.window.iter()
    }
}

/// Push `z`, return the windowed sum and whether it raised an alarm.
pub fn detector_step(state: &mut DetectorState, z: f64) -> (f64, bool) {
    if state.window.len() == state.capacity {
        let old = state.window.pop_front().unwrap_or(0.0);
        state.w_sum -= old;
    }
    state.window.push_back(z);
    state.w_sum += z;
    state.pushes += 1;
    // exact re-sum once per full window rotation bounds the running-sum drift
    if state.pushes % state.capacity as u64 == 0 {
        state.w_sum = state.window.iter().sum();
    }
    let alarm = state.warm() && state.w_sum > state.tau;
    state.alarm_latched |= alarm;
    (state.w_sum, alarm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::reg_lower_gamma;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn mahalanobis_examples() {
        assert_eq!(mahalanobis(&dvector![0.0, 0.0], &DMatrix::identity(2, 2)).unwrap(), 0.0);
        assert!((mahalanobis(&dvector![1.0, 1.0], &DMatrix::identity(2, 2)).unwrap() - 2.0).abs() < 1e-15);
        assert!((mahalanobis(&dvector![2.0], &dmatrix![4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(mahalanobis(&dvector![1.0, 0.0], &dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    }

    #[test]
    fn cached_inverse_matches_direct() {
        let s = dmatrix![2.0, 0.4, 0.1; 0.4, 1.5, -0.2; 0.1, -0.2, 0.9];
        let m = Mahalanobis::new(&s).unwrap();
        let inv = s.clone().try_inverse().unwrap();
        assert!((m.inverse() - &inv).norm() < 1e-13);
        let r = dvector![0.3, -1.1, 0.7];
        assert!((m.eval(&r) - r.dot(&(&inv * &r))).abs() < 1e-13);
    }

    #[test]
    fn threshold_closed_forms() {
        assert!((calibrate_threshold(0.05, 2, 1).unwrap() - (-2.0 * 0.05f64.ln())).abs() < 1e-10);
        assert!((calibrate_threshold(0.5, 2, 1).unwrap() - (-2.0 * 0.5f64.ln())).abs() < 1e-10);
        assert!(calibrate_threshold(0.0, 2, 1).is_err());
        assert!(calibrate_threshold(0.1, 0, 1).is_err());
    }

    #[test]
    fn default_threshold_matches_bisection_oracle() {
        // bisection on P(60, x/2) = 1 - 1/5000
        let target = 1.0 - 1.0 / 5000.0;
        let (mut lo, mut hi) = (0.0, 1000.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if reg_lower_gamma(60.0, mid / 2.0).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = calibrate_threshold(1.0 / 5000.0, 6, 20).unwrap();
        assert!((tau - 0.5 * (lo + hi)).abs() < 1e-8, "{tau}");
        assert!((tau - 182.650_562_166_104).abs() < 1e-7);
    }

    #[test]
    fn sliding_sum_examples() {
        let mut d = DetectorState::new(1, 10.0).unwrap();
        for z in [0.5, 3.0, 11.0, 2.0] {
            let (w, _) = detector_step(&mut d, z);
            assert_eq!(w, z);
        }
        assert!(d.alarm_latched());

        let mut d = DetectorState::new(3, 100.0).unwrap();
        let ws: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|&z| detector_step(&mut d, z).0).collect();
        assert_eq!(ws, vec![1.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn no_alarm_during_warmup_and_latching() {
        let mut d = DetectorState::new(3, 5.0).unwrap();
        assert!(!detector_step(&mut d, 100.0).1);
        assert!(!detector_step(&mut d, 0.0).1);
        assert!(detector_step(&mut d, 0.0).1);
        for _ in 0..5 {
            assert!(!detector_step(&mut d, 0.0).1);
        }
        assert!(d.alarm_latched());
    }

    proptest! {
        #[test]
        fn window_sum_tracks_contents(zs in prop::collection::vec(0.0f64..1e3, 1..10_000), w in 1usize..40) {
            let mut d = DetectorState::new(w, 1.0).unwrap();
            for &z in &zs {
                detector_step(&mut d, z);
            }
            let exact: f64 = d.contents().sum();
            prop_assert!((d.w_sum() - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
            prop_assert_eq!(d.contents().count(), w.min(zs.len()));
        }
    }
}
