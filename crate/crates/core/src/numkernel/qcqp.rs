//! Convex QCQP with a single ellipsoidal constraint:
//!
//! ```text
//!   min  1/2 d'Hd + g'd     s.t.  d'Od + b'd + c <= 0
//! ```
//!
//! With `H, O` positive definite the KKT system has the closed-form
//! parametrization `d(l) = -(H + 2 l O)^-1 (g + l b)`, and the constraint
//! value along that curve is strictly decreasing in `l`. The active
//! multiplier is therefore the unique root of a one-dimensional secular
//! equation, found here by Newton steps inside a bisection bracket.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub o: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub delta: DVector<f64>,
    pub multiplier: f64,
    pub active: bool,
    pub kkt_residual: f64,
}

impl QcqpProblem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&(&self.h * d)) + self.g.dot(d)
    }

    pub fn constraint(&self, d: &DVector<f64>) -> f64 {
        d.dot(&(&self.o * d)) + self.b.dot(d) + self.c
    }

    /// Worst of stationarity, primal infeasibility, dual infeasibility and
    /// complementarity for a candidate primal/dual pair.
    pub fn kkt_residual(&self, d: &DVector<f64>, multiplier: f64) -> f64 {
        let grad = &self.h * d + &self.g + multiplier * (2.0 * (&self.o * d) + &self.b);
        let cons = self.constraint(d);
        grad.amax()
            .max(cons.max(0.0))
            .max((-multiplier).max(0.0))
            .max((multiplier * cons).abs())
    }

    fn validate(&self) -> Result<()> {
        let m = self.dim();
        if self.h.shape() != (m, m) || self.o.shape() != (m, m) || self.b.len() != m {
            return Err(Error::Domain("QCQP dimension mismatch".into()));
        }
        Ok(())
    }
}

fn solve_shifted(p: &QcqpProblem, lambda: f64) -> Result<DVector<f64>> {
    let m = &p.h + 2.0 * lambda * &p.o;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("H + 2*{lambda:e}*O is not positive definite")))?;
    Ok(-chol.solve(&(&p.g + lambda * &p.b)))
}

/// Global minimizer of the single-ellipsoid QCQP.
pub fn solve_qcqp(prob: &QcqpProblem, tol: f64) -> Result<QcqpSolution> {
    prob.validate()?;
    let unconstrained = solve_shifted(prob, 0.0)?;
    if prob.constraint(&unconstrained) <= 0.0 {
        let kkt = prob.kkt_residual(&unconstrained, 0.0);
        return finish(unconstrained, 0.0, false, kkt, tol);
    }

    // Lower end of the bracket is l=0 (infeasible); grow the upper end until feasible.
    let scale = prob.h.norm() / prob.o.norm().max(f64::MIN_POSITIVE);
    let mut lo = 0.0_f64;
    let mut hi = scale.max(1e-300);
    let mut found = false;
    for _ in 0..2000 {
        if prob.constraint(&solve_shifted(prob, hi)?) <= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 4.0;
        if !hi.is_finite() {
            break;
        }
    }
    if !found {
        return Err(Error::Numerical(
            "stealth QCQP has an empty feasible set (secular root not bracketable)".into(),
        ));
    }

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..300 {
        let d = solve_shifted(prob, lambda)?;
        let phi = prob.constraint(&d);
        if phi > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if phi.abs() <= 1e-15 * (1.0 + prob.c.abs()) || (hi - lo) <= 1e-15 * hi {
            break;
        }
        // phi'(l) = -(2Od + b)' (H + 2lO)^-1 (2Od + b)
        let v = 2.0 * (&prob.o * &d) + &prob.b;
        let m = &prob.h + 2.0 * lambda * &prob.o;
        let dphi = match m.cholesky() {
            Some(ch) => -v.dot(&ch.solve(&v)),
            None => f64::NAN,
        };
        let newton = lambda - phi / dphi;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }

    // nudge onto the feasible side; phi is decreasing so this terminates at hi
    let mut delta = solve_shifted(prob, lambda)?;
    let mut nudge = 4.0 * f64::EPSILON * lambda.max(f64::MIN_POSITIVE);
    while prob.constraint(&delta) > 0.0 {
        lambda = (lambda + nudge).min(hi);
        delta = solve_shifted(prob, lambda)?;
        if lambda >= hi {
            break;
        }
        nudge *= 2.0;
    }
    let kkt = prob.kkt_residual(&delta, lambda);
    finish(delta, lambda, true, kkt, tol)
}

fn finish(
    delta: DVector<f64>,
    multiplier: f64,
    active: bool,
    kkt_residual: f64,
    tol: f64,
) -> Result<QcqpSolution> {
    if !delta.iter().all(|v| v.is_finite()) || !(kkt_residual <= tol) {
        return Err(Error::Numerical(format!(
            "QCQP solution failed KKT check (residual {kkt_residual:e} > {tol:e})"
        )));
    }
    Ok(QcqpSolution {
        delta,
        multiplier,
        active,
        kkt_residual,
    })
}
