use nalgebra::DMatrix;

/// Relative singular-value cutoff used by the joint mapping.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Moore-Penrose pseudoinverse through a thin SVD. Singular values below
/// `rank_tol * sigma_max` are dropped.
pub fn pinv(m: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    pinv_with_condition(m, rank_tol).0
}

/// Pseudoinverse together with the condition number `sigma_max / sigma_min`
/// of `m` (infinite when rank deficient).
pub fn pinv_with_condition(m: &DMatrix<f64>, rank_tol: f64) -> (DMatrix<f64>, f64) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), 1.0);
    }
    // the iterative SVD does not terminate on non-finite input
    if !m.iter().all(|v| v.is_finite()) {
        return (DMatrix::from_element(c, r, f64::NAN), f64::NAN);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cutoff = rank_tol.max(0.0) * smax;
    let k = sv.len();
    let mut out = DMatrix::zeros(c, r);
    for i in 0..k {
        let s = sv[i];
        if s > cutoff && s > 0.0 {
            // out += v_i u_i' / s
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out += (vi * ui.transpose()) / s;
        }
    }
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (out, cond)
}
