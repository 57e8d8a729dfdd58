//! Seeded Gaussian noise.
//!
//! ChaCha12 stream seeded from a `u64`, standard normals from the ziggurat
//! sampler in `rand_distr`. Both are platform independent, so identical seeds
//! reproduce identical episodes bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussianSampler {
    rng: ChaCha12Rng,
}

/// Lower-triangular factor `F` with `F F' = Cov`; positive semidefinite
/// covariances (zero blocks) are handled through an eigen split.
#[derive(Debug, Clone)]
pub struct CovFactor(DMatrix<f64>);

impl CovFactor {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self(ch.l()));
        }
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|l| *l < -1e-12 * (1.0 + cov.norm())) {
            return Err(Error::Numerical("covariance is not positive semidefinite".into()));
        }
        let mut scaled = eig.eigenvectors.clone();
        for (j, l) in eig.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l.max(0.0).sqrt());
        }
        Ok(Self(scaled))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn standard(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng))
    }

    pub fn correlated(&mut self, f: &CovFactor) -> DVector<f64> {
        let z = self.standard(f.0.ncols());
        &f.0 * z
    }

    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = GaussianSampler::new(42);
        let mut b = GaussianSampler::new(42);
        assert_eq!(a.standard(100), b.standard(100));
        let mut c = GaussianSampler::new(43);
        assert_ne!(a.standard(10), c.standard(10));
    }

    #[test]
    fn semidefinite_factor() {
        let mut cov = DMatrix::zeros(3, 3);
        cov[(0, 0)] = 2.0;
        let f = CovFactor::new(&cov).unwrap();
        let m = &f.0 * f.0.transpose();
        assert!((m - cov).norm() < 1e-14);
    }
}
