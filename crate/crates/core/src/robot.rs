//! Planar serial chain kinematics and the discretized feedback-linearized
//! joint plant.
//!
//! The state is ordered `x = [q; qdot]`. Per joint the plant is the exact
//! zero-order-hold discretization of a double integrator, so `A`, `B` and
//! `Q` are permutations of block-diagonal matrices with 2x2 joint blocks.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Planar revolute chain; all joints rotate about the plane normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarChain {
    link_lengths: Vec<f64>,
}

impl PlanarChain {
    pub fn new(link_lengths: Vec<f64>) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::Config("chain needs at least one link".into()));
        }
        if let Some(l) = link_lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("link lengths must be positive, got {l}")));
        }
        Ok(Self { link_lengths })
    }

    /// Six-link arm used throughout the experiments.
    pub fn default_six_link() -> Self {
        Self {
            link_lengths: vec![0.65, 0.55, 0.45, 0.45, 0.45, 0.45],
        }
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    fn cumulative_angles(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, qi| {
                *acc += qi;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn from_state(x: &DVector<f64>) -> Self {
        let p = x.len() / 2;
        Self {
            q: x.rows(0, p).into_owned(),
            qdot: x.rows(p, p).into_owned(),
        }
    }

    pub fn to_state(&self) -> DVector<f64> {
        let p = self.q.len();
        let mut x = DVector::zeros(2 * p);
        x.rows_mut(0, p).copy_from(&self.q);
        x.rows_mut(p, p).copy_from(&self.qdot);
        x
    }
}

/// End-effector pose; planar positions carry `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn fk(chain: &PlanarChain, q: &DVector<f64>) -> Pose {
    debug_assert_eq!(q.len(), chain.joints());
    let mut x = 0.0;
    let mut y = 0.0;
    let mut theta = 0.0;
    for (l, qi) in chain.link_lengths.iter().zip(q.iter()) {
        theta += qi;
        let (s, c) = theta.sin_cos();
        x += l * c;
        y += l * s;
    }
    Pose {
        position: Vector3::new(x, y, 0.0),
        rotation: rot_z(theta),
    }
}

/// Planar geometric Jacobian, rows `(xdot, ydot, omega_z)`.
pub fn jacobian(chain: &PlanarChain, q: &DVector<f64>) -> DMatrix<f64> {
    let p = chain.joints();
    let theta = chain.cumulative_angles(q);
    let mut j = DMatrix::zeros(3, p);
    // distal sums, accumulated from the tip inwards
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in (0..p).rev() {
        let (s, c) = theta[i].sin_cos();
        sx += chain.link_lengths[i] * c;
        sy += chain.link_lengths[i] * s;
        j[(0, i)] = -sy;
        j[(1, i)] = sx;
        j[(2, i)] = 1.0;
    }
    j
}

/// Time derivative of [`jacobian`] along `(q, qdot)`.
pub fn jacobian_dot(chain: &PlanarChain, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
    let p = chain.joints();
    let theta = chain.cumulative_angles(q);
    let theta_dot = chain.cumulative_angles(qdot);
    let mut jd = DMatrix::zeros(3, p);
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in (0..p).rev() {
        let (s, c) = theta[i].sin_cos();
        let l = chain.link_lengths[i];
        cx += l * c * theta_dot[i];
        cy += l * s * theta_dot[i];
        jd[(0, i)] = -cx;
        jd[(1, i)] = -cy;
    }
    jd
}

/// `sin(theta/2) * axis` of the rotation error `r_ref * r_est'`, with the
/// angle taken in `[0, pi]`.
pub fn orientation_error(r_ref: &Matrix3<f64>, r_est: &Matrix3<f64>) -> Vector3<f64> {
    let re = r_ref * r_est.transpose();
    let cos_t = ((re.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_t.acos();
    if theta < 1e-12 {
        return Vector3::zeros();
    }
    let vee = Vector3::new(re[(2, 1)] - re[(1, 2)], re[(0, 2)] - re[(2, 0)], re[(1, 0)] - re[(0, 1)]);
    let axis = if std::f64::consts::PI - theta > 1e-6 {
        vee / (2.0 * theta.sin())
    } else {
        // near pi the skew part vanishes; read the axis off the symmetric part
        let d = Vector3::new(
            ((re[(0, 0)] + 1.0) * 0.5).max(0.0).sqrt(),
            ((re[(1, 1)] + 1.0) * 0.5).max(0.0).sqrt(),
            ((re[(2, 2)] + 1.0) * 0.5).max(0.0).sqrt(),
        );
        let k = d.imax();
        let mut axis = Vector3::zeros();
        axis[k] = d[k];
        for i in 0..3 {
            if i != k {
                axis[i] = (re[(i, k)] + re[(k, i)]) / (4.0 * d[k]);
            }
        }
        let axis = axis.normalize();
        if axis.dot(&vee) < 0.0 {
            -axis
        } else {
            axis
        }
    };
    axis * (0.5 * theta).sin()
}

/// Discrete LTI design model of the feedback-linearized arm.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub ts: f64,
}

impl PlantModel {
    /// `joints` decoupled double integrators sampled at `ts`, process noise
    /// `q_c * [ts^3/3, ts^2/2; ts^2/2, ts]` per joint, measurement noise
    /// `r_block * I`.
    pub fn double_integrator(joints: usize, ts: f64, q_c: f64, r_block: f64) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Config("plant needs at least one joint".into()));
        }
        if !(ts > 0.0) || !(q_c >= 0.0) || !(r_block > 0.0) {
            return Err(Error::Config(format!(
                "invalid plant parameters: ts={ts}, q_c={q_c}, r_block={r_block}"
            )));
        }
        let p = joints;
        let n = 2 * p;
        let eye = DMatrix::<f64>::identity(p, p);
        let mut a = DMatrix::identity(n, n);
        a.view_mut((0, p), (p, p)).copy_from(&(&eye * ts));
        let mut b = DMatrix::zeros(n, p);
        b.view_mut((0, 0), (p, p)).copy_from(&(&eye * (0.5 * ts * ts)));
        b.view_mut((p, 0), (p, p)).copy_from(&(&eye * ts));
        let mut c = DMatrix::zeros(p, n);
        c.view_mut((0, 0), (p, p)).copy_from(&eye);
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (p, p)).copy_from(&(&eye * (q_c * ts.powi(3) / 3.0)));
        q.view_mut((0, p), (p, p)).copy_from(&(&eye * (q_c * ts * ts / 2.0)));
        q.view_mut((p, 0), (p, p)).copy_from(&(&eye * (q_c * ts * ts / 2.0)));
        q.view_mut((p, p), (p, p)).copy_from(&(&eye * (q_c * ts)));
        let r = &eye * r_block;
        Ok(Self { a, b, c, q, r, ts })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
}

/// `x' = A x + B u + w`
pub fn step_plant(model: &PlantModel, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    &model.a * x + &model.b * u + w
}

/// Attacked measurement `C x + v + a`.
pub fn measure(model: &PlantModel, x: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
    &model.c * x + v + a
}
