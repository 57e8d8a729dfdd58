//! Active defence: an open-loop predictor driven by the applied commands,
//! the exact covariance of the estimator/predictor discrepancy, its
//! Mahalanobis score and the resulting command scaling.

use nalgebra::{DMatrix, DVector};

use crate::detector::Mahalanobis;
use crate::error::{Error, Result};
use crate::estimator::KalmanGainSet;
use crate::numkernel::chi2_quantile;
use crate::robot::PlantModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub xtilde: DVector<f64>,
    pub steps_since_sync: usize,
    pub sync_period: usize,
}

impl PredictorState {
    /// Predictor freshly synchronized to the estimate `xhat`.
    pub fn synced(xhat: &DVector<f64>, sync_period: usize) -> Result<Self> {
        if sync_period == 0 {
            return Err(Error::Config("sync_period must be >= 1".into()));
        }
        Ok(Self {
            xtilde: xhat.clone(),
            steps_since_sync: 0,
            sync_period,
        })
    }

    /// Reset to `xhat` if a full period has elapsed. Returns whether it did.
    pub fn maybe_resync(&mut self, xhat: &DVector<f64>) -> bool {
        if self.steps_since_sync >= self.sync_period {
            self.xtilde.copy_from(xhat);
            self.steps_since_sync = 0;
            true
        } else {
            false
        }
    }
}

/// `xtilde' = A xtilde + B u`.
pub fn predictor_step(state: &mut PredictorState, model: &PlantModel, u: &DVector<f64>) {
    state.xtilde = &model.a * &state.xtilde + &model.b * u;
    state.steps_since_sync += 1;
}

/// Joint covariance of `(x - xhat, xhat - xtilde)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCov {
    pub pz: DMatrix<f64>,
}

/// Fixed matrices of the augmented error recursion.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    f: DMatrix<f64>,
    pi: DMatrix<f64>,
    n: usize,
}

impl AugmentedSystem {
    pub fn new(model: &PlantModel, gains: &KalmanGainSet) -> Self {
        let n = model.states();
        let p = model.outputs();
        let lc = &gains.l * &model.c;
        let mut f = DMatrix::zeros(2 * n, 2 * n);
        f.view_mut((0, 0), (n, n)).copy_from(&(&model.a - &lc));
        f.view_mut((n, 0), (n, n)).copy_from(&lc);
        f.view_mut((n, n), (n, n)).copy_from(&model.a);
        let mut g = DMatrix::zeros(2 * n, n + p);
        g.view_mut((0, 0), (n, n)).fill_with_identity();
        g.view_mut((0, n), (n, p)).copy_from(&(-&gains.l));
        g.view_mut((n, n), (n, p)).copy_from(&gains.l);
        let mut qr = DMatrix::zeros(n + p, n + p);
        qr.view_mut((0, 0), (n, n)).copy_from(&model.q);
        qr.view_mut((n, n), (p, p)).copy_from(&model.r);
        let pi = &g * qr * g.transpose();
        Self { f, pi, n }
    }

    /// Covariance at a sync instant: `diag(P, 0)`.
    pub fn at_sync(&self, gains: &KalmanGainSet) -> AugmentedCov {
        let mut pz = DMatrix::zeros(2 * self.n, 2 * self.n);
        pz.view_mut((0, 0), (self.n, self.n)).copy_from(&gains.p);
        AugmentedCov { pz }
    }
}

fn sigma_rt_block(pz: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    pz.view((n, n), (n, n)).into_owned()
}

/// `Pz' = F Pz F' + Pi`, symmetrized. Returns the new covariance and its
/// lower-right block.
pub fn cov_step(cov: &AugmentedCov, sys: &AugmentedSystem) -> (AugmentedCov, DMatrix<f64>) {
    let mut pz = &sys.f * &cov.pz * sys.f.transpose() + &sys.pi;
    pz = 0.5 * (&pz + pz.transpose());
    let block = sigma_rt_block(&pz, sys.n);
    (AugmentedCov { pz }, block)
}

/// `r' (S + ridge I)^-1 r`.
pub fn anomaly_score(r_tilde: &DVector<f64>, sigma_rt: &DMatrix<f64>, ridge: f64) -> Result<f64> {
    let n = sigma_rt.nrows();
    let reg = sigma_rt + DMatrix::identity(n, n) * ridge.max(0.0);
    Mahalanobis::new(&reg)
        .map(|m| m.eval(r_tilde))
        .map_err(|_| Error::Numerical("defence covariance not positive definite after ridging".into()))
}

/// The discrepancy covariance does not depend on the attack, so one period
/// of it is tabulated up front together with the factorized scorers.
#[derive(Debug, Clone)]
pub struct CovSchedule {
    sigma_rt: Vec<DMatrix<f64>>,
    scorers: Vec<Option<Mahalanobis>>,
    k_min: usize,
    ridge_rel: f64,
}

impl CovSchedule {
    pub fn build(
        model: &PlantModel,
        gains: &KalmanGainSet,
        sync_period: usize,
        k_min: usize,
        ridge_rel: f64,
    ) -> Result<Self> {
        if sync_period == 0 {
            return Err(Error::Config("sync_period must be >= 1".into()));
        }
        let sys = AugmentedSystem::new(model, gains);
        let n = model.states();
        let mut cov = sys.at_sync(gains);
        let mut sigma_rt = Vec::with_capacity(sync_period);
        let mut scorers = Vec::with_capacity(sync_period);
        sigma_rt.push(sigma_rt_block(&cov.pz, n));
        for k in 0..sync_period {
            if k > 0 {
                let (next, block) = cov_step(&cov, &sys);
                cov = next;
                sigma_rt.push(block);
            }
            let s = &sigma_rt[k];
            let scorer = if k < k_min {
                None
            } else {
                let ridge = ridge_rel * s.trace() / n as f64;
                let reg = s + DMatrix::identity(n, n) * ridge;
                Some(Mahalanobis::new(&reg).map_err(|_| {
                    Error::Numerical(format!("defence covariance at offset {k} not positive definite"))
                })?)
            };
            scorers.push(scorer);
        }
        Ok(Self {
            sigma_rt,
            scorers,
            k_min,
            ridge_rel,
        })
    }

    pub fn sync_period(&self) -> usize {
        self.sigma_rt.len()
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn ridge_rel(&self) -> f64 {
        self.ridge_rel
    }

    /// `Sigma_rt` at `k` steps after the last sync.
    pub fn sigma_rt(&self, k: usize) -> &DMatrix<f64> {
        &self.sigma_rt[k]
    }

    /// Score at offset `k`; zero during the first `k_min` steps after sync.
    pub fn score(&self, k: usize, r_tilde: &DVector<f64>) -> f64 {
        match &self.scorers[k] {
            Some(m) => m.eval(r_tilde),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainLaw {
    z_x: f64,
    beta: f64,
    gamma: f64,
    z_scale: f64,
}

impl GainLaw {
    pub fn new(z_x: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(z_x > 0.0 && z_x.is_finite()) {
            return Err(Error::Domain(format!("z_x must be finite and > 0, got {z_x}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0,1), got {beta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be finite and > 0, got {gamma}")));
        }
        let z_scale = z_x / (-beta.ln()).powf(1.0 / gamma);
        let law = Self {
            z_x,
            beta,
            gamma,
            z_scale,
        };
        let at_zx = gain_scale(&law, z_x);
        if gain_scale(&law, 0.0) != 1.0 || (at_zx - beta).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "gain law calibration off: f(z_x) = {at_zx}, beta = {beta}"
            )));
        }
        Ok(law)
    }

    pub fn z_x(&self) -> f64 {
        self.z_x
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn z_scale(&self) -> f64 {
        self.z_scale
    }
}

/// `f(z) = exp(-(z / z_scale)^gamma)`.
pub fn gain_scale(law: &GainLaw, z_tilde: f64) -> f64 {
    (-(z_tilde.max(0.0) / law.z_scale).powf(law.gamma)).exp()
}

pub fn scale_command(u_nom: &DVector<f64>, f: f64) -> DVector<f64> {
    debug_assert!((0.0..=1.0).contains(&f));
    u_nom * f
}

/// Score level exceeded with probability `1 - psi` under nominal operation.
pub fn design_zx(psi: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("state dimension must be >= 1".into()));
    }
    let dof = u32::try_from(n).map_err(|_| Error::Domain("dimension overflows".into()))?;
    chi2_quantile(psi, dof)
}
