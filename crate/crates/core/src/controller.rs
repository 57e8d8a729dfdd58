//! Task-space PD + feedforward control mapped to joint accelerations, LQR
//! gain synthesis for the sampled double integrator, and the second-order
//! Jury test used for the frozen-gain stability certificate.

use nalgebra::{dmatrix, DVector, Matrix2, Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::numkernel::{pinv_with_condition, solve_dare};
use crate::robot::{jacobian, jacobian_dot, orientation_error, PlanarChain, Pose};

/// Task-space reference: position, orientation and their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRef {
    pub p_ref: Vector3<f64>,
    pub v_ref: Vector3<f64>,
    pub a_ref: Vector3<f64>,
    pub r_ref: Matrix3<f64>,
    pub w_ref: Vector3<f64>,
    pub dw_ref: Vector3<f64>,
}

impl TaskRef {
    /// Hold a fixed pose with zero velocity and acceleration.
    pub fn hold(pose: &Pose) -> Self {
        Self {
            p_ref: pose.position,
            v_ref: Vector3::zeros(),
            a_ref: Vector3::zeros(),
            r_ref: pose.rotation,
            w_ref: Vector3::zeros(),
            dw_ref: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGains {
    pub kpp: Matrix3<f64>,
    pub kdp: Matrix3<f64>,
    pub kpo: Matrix3<f64>,
    pub kdo: Matrix3<f64>,
}

impl TaskGains {
    /// Same scalar PD pair on every task axis.
    pub fn uniform(kp: f64, kd: f64) -> Self {
        let i = Matrix3::identity();
        Self {
            kpp: i * kp,
            kdp: i * kd,
            kpo: i * kp,
            kdo: i * kd,
        }
    }
}

/// Discrete LQR on the single-axis double integrator sampled at `ts`,
/// state weight `diag(w_pos, w_vel)` and input weight `w_u`.
pub fn lqr_gains(ts: f64, w_pos: f64, w_vel: f64, w_u: f64) -> Result<(f64, f64)> {
    if !(ts > 0.0) || !(w_pos > 0.0) || !(w_vel >= 0.0) || !(w_u > 0.0) {
        return Err(Error::Domain(format!(
            "LQR needs ts>0, w_pos>0, w_vel>=0, w_u>0 (got {ts}, {w_pos}, {w_vel}, {w_u})"
        )));
    }
    let a = dmatrix![1.0, ts; 0.0, 1.0];
    let b = dmatrix![0.5 * ts * ts; ts];
    let q = dmatrix![w_pos, 0.0; 0.0, w_vel];
    let r = dmatrix![w_u];
    // control Riccati equation is the filter one for the dual pair (A', B')
    let p = solve_dare(&a.transpose(), &b.transpose(), &q, &r)?.p;
    let s = (&r + b.transpose() * &p * &b)[(0, 0)];
    let k = (b.transpose() * &p * &a) / s;
    Ok((k[(0, 0)], k[(0, 1)]))
}

/// Closed-loop matrix `A_j - fbar B_j [kp kd]` of one joint.
pub fn frozen_gain_matrix(kp: f64, kd: f64, ts: f64, fbar: f64) -> Matrix2<f64> {
    let h = 0.5 * fbar * ts * ts;
    Matrix2::new(1.0 - h * kp, ts - h * kd, -fbar * ts * kp, 1.0 - fbar * ts * kd)
}

pub fn frozen_gain_spectral_radius(kp: f64, kd: f64, ts: f64, fbar: f64) -> f64 {
    frozen_gain_matrix(kp, kd, ts, fbar)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// The three Jury margins `(fbar ts^2 kp, 2 - fbar ts kd, kd - ts kp / 2)`.
pub fn jury_margins(kp: f64, kd: f64, ts: f64, fbar: f64) -> [f64; 3] {
    [fbar * ts * ts * kp, 2.0 - fbar * ts * kd, kd - 0.5 * ts * kp]
}

/// Schur stability of the frozen-gain loop via the second-order Jury test.
pub fn jury_stable(kp: f64, kd: f64, ts: f64, fbar: f64) -> Result<bool> {
    if !(fbar > 0.0 && fbar <= 1.0) {
        return Err(Error::Domain(format!("frozen gain factor must lie in (0,1], got {fbar}")));
    }
    if !(ts > 0.0) {
        return Err(Error::Domain(format!("sampling time must be > 0, got {ts}")));
    }
    Ok(jury_margins(kp, kd, ts, fbar).iter().all(|m| *m > 0.0))
}

/// Six-row task acceleration command `[lin; ang]`.
pub fn task_pd(
    reference: &TaskRef,
    est_pose: &Pose,
    est_twist: (&Vector3<f64>, &Vector3<f64>),
    gains: &TaskGains,
) -> Vector6<f64> {
    let (v, w) = est_twist;
    let lin = reference.a_ref + gains.kpp * (reference.p_ref - est_pose.position) + gains.kdp * (reference.v_ref - v);
    let e_o = orientation_error(&reference.r_ref, &est_pose.rotation);
    let ang = reference.dw_ref + gains.kpo * e_o + gains.kdo * (reference.w_ref - w);
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Joint acceleration command together with the Jacobian condition number.
#[derive(Debug, Clone)]
pub struct JointCommand {
    pub u_nom: DVector<f64>,
    pub condition: f64,
}

/// `J^+(q) (u_c - Jdot(q, qdot) qdot)` on the planar rows `(ax, ay, alpha_z)`.
pub fn map_to_joints(
    u_c: &Vector6<f64>,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    chain: &PlanarChain,
    rank_tol: f64,
) -> JointCommand {
    let j = jacobian(chain, q);
    let jd = jacobian_dot(chain, q, qdot);
    let planar = DVector::from_column_slice(&[u_c[0], u_c[1], u_c[5]]);
    let (jp, condition) = pinv_with_condition(&j, rank_tol);
    JointCommand {
        u_nom: jp * (planar - jd * qdot),
        condition,
    }
}

/// Estimated task twist `(v, w)` from `J(q) qdot`.
pub fn task_twist(chain: &PlanarChain, q: &DVector<f64>, qdot: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let t = jacobian(chain, q) * qdot;
    (Vector3::new(t[0], t[1], 0.0), Vector3::new(0.0, 0.0, t[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::fk;
    use crate::numkernel::pinv;
    use nalgebra::dvector;

    #[test]
    fn lqr_gains_are_stable_and_homogeneous() {
        let (kp, kd) = lqr_gains(0.01, 1.0, 0.0, 1.0).unwrap();
        assert!(jury_stable(kp, kd, 0.01, 1.0).unwrap());
        assert!(frozen_gain_spectral_radius(kp, kd, 0.01, 1.0) < 1.0);
        // oracle: iterate the control Riccati recursion directly
        let (a, b) = (Matrix2::new(1.0, 0.01, 0.0, 1.0), nalgebra::Vector2::new(0.5e-4, 0.01));
        let q = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let mut p = q;
        for _ in 0..200_000 {
            let s = 1.0 + (b.transpose() * p * b)[0];
            let k = (b.transpose() * p * a) / s;
            p = a.transpose() * p * a - (a.transpose() * p * b) * k + q;
        }
        let s = 1.0 + (b.transpose() * p * b)[0];
        let k = (b.transpose() * p * a) / s;
        assert!((k[0] - kp).abs() < 1e-7 * kp && (k[1] - kd).abs() < 1e-7 * kd, "{k} vs {kp} {kd}");

        let base = lqr_gains(0.01, 1.0, 0.1, 0.01).unwrap();
        let scaled = lqr_gains(0.01, 7.0, 0.7, 0.07).unwrap();
        assert!((base.0 - scaled.0).abs() < 1e-8 * base.0 && (base.1 - scaled.1).abs() < 1e-8 * base.1);
    }

    #[test]
    fn jury_examples() {
        assert!(jury_stable(100.0, 20.0, 0.01, 1.0).unwrap());
        assert!(frozen_gain_spectral_radius(100.0, 20.0, 0.01, 1.0) < 1.0);
        assert!(!jury_stable(10.0, 0.4, 0.1, 1.0).unwrap());
        assert!(frozen_gain_spectral_radius(10.0, 0.4, 0.1, 1.0) >= 1.0);
        for fbar in [0.01, 0.1, 0.5] {
            assert!(jury_stable(100.0, 20.0, 0.01, fbar).unwrap());
        }
        assert!(jury_stable(1.0, 1.0, 0.01, 0.0).is_err());
        assert!(jury_stable(1.0, 1.0, 0.01, 1.5).is_err());
    }

    #[test]
    fn pd_zero_error_and_linearity() {
        let chain = PlanarChain::default_six_link();
        let pose = fk(&chain, &DVector::from_element(6, 0.3));
        let gains = TaskGains::uniform(9.0, 4.0);
        let zero = Vector3::zeros();
        let u = task_pd(&TaskRef::hold(&pose), &pose, (&zero, &zero), &gains);
        assert_eq!(u, Vector6::zeros());

        let mut reference = TaskRef::hold(&pose);
        let d = Vector3::new(0.1, -0.05, 0.0);
        reference.p_ref += d;
        let g = TaskGains {
            kdp: Matrix3::zeros(),
            ..gains.clone()
        };
        let u = task_pd(&reference, &pose, (&zero, &zero), &g);
        assert!((u.fixed_rows::<3>(0) - d * 9.0).norm() < 1e-12);

        // linear in the error vector
        let mut r2 = TaskRef::hold(&pose);
        r2.p_ref += 2.0 * d;
        r2.v_ref = Vector3::new(0.2, 0.1, 0.0);
        let u2 = task_pd(&r2, &pose, (&zero, &zero), &gains);
        let mut r1 = TaskRef::hold(&pose);
        r1.p_ref += d;
        r1.v_ref = Vector3::new(0.1, 0.05, 0.0);
        let u1 = task_pd(&r1, &pose, (&zero, &zero), &gains);
        assert!((u2 - 2.0 * u1).norm() < 1e-12);
    }

    #[test]
    fn joint_mapping_cancels_bias_and_is_consistent() {
        let chain = PlanarChain::default_six_link();
        let q = dvector![0.2, 0.4, -0.3, 0.5, 0.1, -0.2];
        let qdot = dvector![0.3, -0.1, 0.2, 0.4, -0.3, 0.1];
        let bias = jacobian_dot(&chain, &q, &qdot) * &qdot;
        let u_c = Vector6::new(bias[0], bias[1], 0.0, 0.0, 0.0, bias[2]);
        let cmd = map_to_joints(&u_c, &q, &qdot, &chain, 1e-10);
        assert!(cmd.u_nom.norm() < 1e-12);

        let a = Vector6::new(0.5, -0.2, 0.0, 0.0, 0.0, 0.3);
        let cmd = map_to_joints(&a, &q, &DVector::zeros(6), &chain, 1e-10);
        let back = jacobian(&chain, &q) * &cmd.u_nom;
        assert!((back - dvector![0.5, -0.2, 0.3]).norm() < 1e-12);

        let cmd = map_to_joints(&a, &q, &qdot, &chain, 1e-10);
        let back = jacobian(&chain, &q) * &cmd.u_nom + jacobian_dot(&chain, &q, &qdot) * &qdot;
        assert!((back - dvector![0.5, -0.2, 0.3]).norm() < 1e-9);
    }

    #[test]
    fn straight_arm_mapping_is_finite() {
        let chain = PlanarChain::default_six_link();
        let q = DVector::zeros(6);
        let a = Vector6::new(0.3, 0.2, 0.0, 0.0, 0.0, 0.1);
        let cmd = map_to_joints(&a, &q, &DVector::zeros(6), &chain, 1e-10);
        assert!(cmd.u_nom.iter().all(|v| v.is_finite()));
        assert!(cmd.condition.is_infinite() || cmd.condition > 1e6);
        // the x row of J vanishes, so the least-squares image drops that component
        let j = jacobian(&chain, &q);
        assert!((&j * &cmd.u_nom - dvector![0.0, 0.2, 0.1]).norm() < 1e-10);
        // and the minimum-norm solution lies in the row space of J
        let proj = pinv(&j, 1e-10) * &j;
        assert!((&proj * &cmd.u_nom - &cmd.u_nom).norm() < 1e-10);
    }
}
