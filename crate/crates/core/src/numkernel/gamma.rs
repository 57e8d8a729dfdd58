use statrs::function::{erf, gamma};

use crate::error::{Error, Result};

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma shape must be > 0, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma argument must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    gamma::checked_gamma_lr(a, x).map_err(|e| Error::Numerical(format!("incomplete gamma: {e}")))
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain("chi-squared dof must be >= 1".into()));
    }
    reg_lower_gamma(0.5 * dof as f64, 0.5 * x.max(0.0))
}

fn chi2_ln_pdf(x: f64, k: f64) -> f64 {
    (0.5 * k - 1.0) * x.ln() - 0.5 * x - 0.5 * k * std::f64::consts::LN_2 - gamma::ln_gamma(0.5 * k)
}

/// Inverse CDF of the chi-squared distribution.
///
/// Wilson-Hilferty starting point, then Newton steps kept inside a bisection
/// bracket so the iteration cannot leave `(0, inf)`.
pub fn chi2_quantile(prob: f64, dof: u32) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("quantile probability must lie in (0,1), got {prob}")));
    }
    if dof == 0 {
        return Err(Error::Domain("chi-squared dof must be >= 1".into()));
    }
    let k = dof as f64;
    let z = std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * prob - 1.0);
    let h = 2.0 / (9.0 * k);
    let wh = k * (1.0 - h + z * h.sqrt()).powi(3);
    let mut x = if wh > 0.0 { wh } else { k * 1e-3 };

    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for _ in 0..200 {
        let err = chi2_cdf(x, dof)? - prob;
        if err.abs() <= 1e-15 {
            return Ok(x);
        }
        if err > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dens = chi2_ln_pdf(x, k).exp();
        let mut next = if dens > 0.0 && dens.is_finite() { x - err / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numerical(format!(
        "chi-squared quantile did not converge for p={prob}, dof={dof}"
    )))
}
