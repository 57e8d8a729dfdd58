//! Omniscient stealthy sensor attacker.
//!
//! Each attack step copies the world, replays the closed loop noise-free a
//! few steps ahead, linearizes the end-effector acceleration two steps out
//! with respect to the injection, and picks the increment that best tracks
//! a PD reference on its own plan while keeping the innovation inside the
//! per-step budget.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::numkernel::{solve_qcqp, QcqpProblem, TrajectoryPoint};
use crate::world::{ee_position, ee_velocity, ClosedLoop, WorldSnapshot};

#[derive(Debug, Clone)]
pub struct AttackerConfig {
    pub kpa: Matrix2<f64>,
    pub kda: Matrix2<f64>,
    pub zeta: f64,
    pub tau_prime: f64,
    /// Planned end-effector trajectory, one sample per attack step.
    pub plan: Vec<TrajectoryPoint>,
    pub attack_start: usize,
    pub fd_step: f64,
    /// Step-halving check on the sensitivity every this many attack steps (0 disables).
    pub richardson_every: usize,
    /// When false the stealth constraint is dropped.
    pub constrained: bool,
    pub qcqp_tol: f64,
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("KpA", &self.kpa), ("KdA", &self.kda)] {
            if m[(0, 1)] != 0.0 || m[(1, 0)] != 0.0 || m[(0, 0)] < 0.0 || m[(1, 1)] < 0.0 {
                return Err(Error::Config(format!("{name} must be diagonal with nonnegative entries")));
            }
        }
        if !(self.zeta > 0.0) || !(self.tau_prime > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::Config("zeta, tau_prime and fd_step must be > 0".into()));
        }
        if self.plan.len() < 2 {
            return Err(Error::Config("attack plan needs at least two samples".into()));
        }
        Ok(())
    }

    fn plan_at(&self, i: usize) -> &TrajectoryPoint {
        &self.plan[i.min(self.plan.len() - 1)]
    }

    pub fn plan_len(&self) -> usize {
        self.plan.len()
    }

    /// Planned position at absolute step `k` (held at the ends).
    pub fn planned_position(&self, k: usize) -> Vector2<f64> {
        let pt = self.plan_at(k.saturating_sub(self.attack_start));
        Vector2::new(pt.pos[0], pt.pos[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub a: DVector<f64>,
}

impl AttackState {
    pub fn zero(p: usize) -> Self {
        Self { a: DVector::zeros(p) }
    }
}

/// One sample of a noise-free rollout.
#[derive(Debug, Clone)]
pub struct RolloutPoint {
    pub p: Vector2<f64>,
    pub pdot: Vector2<f64>,
    /// Second difference of positions ending at this sample.
    pub pddot: Vector2<f64>,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub xtilde: DVector<f64>,
    pub u: DVector<f64>,
}

/// Replay the loop from `snap` with zero noise, injecting `attack_seq[i]` at
/// offset `i`. Sample `i` holds the state at step `k + i` and the command
/// issued there.
pub fn rollout(lp: &ClosedLoop, snap: &WorldSnapshot, attack_seq: &[DVector<f64>], defence_on: bool) -> Vec<RolloutPoint> {
    let n = lp.model.states();
    let p = lp.model.outputs();
    let zero_w = DVector::zeros(n);
    let zero_v = DVector::zeros(p);
    let ts2 = lp.model.ts * lp.model.ts;
    let mut s = snap.clone();
    let (mut prev1, mut prev2) = (snap.p_hist[0], snap.p_hist[1]);
    let mut out = Vec::with_capacity(attack_seq.len());
    for a in attack_seq {
        let pos = ee_position(&lp.chain, &s.true_state);
        let point = RolloutPoint {
            p: pos,
            pdot: ee_velocity(&lp.chain, &s.true_state),
            pddot: (pos - 2.0 * prev1 + prev2) / ts2,
            x: s.true_state.clone(),
            xhat: s.estimator.xhat.clone(),
            xtilde: s.predictor.xtilde.clone(),
            u: DVector::zeros(p),
        };
        let sig = lp.step(&mut s, a, &zero_w, &zero_v, defence_on, false);
        out.push(RolloutPoint { u: sig.u, ..point });
        prev2 = prev1;
        prev1 = pos;
    }
    out
}

/// Acceleration two steps ahead under the sequence `[a, 0, 0]`.
fn acc_two_ahead(lp: &ClosedLoop, snap: &WorldSnapshot, a: DVector<f64>, defence_on: bool) -> Vector2<f64> {
    let p = a.len();
    let seq = [a, DVector::zeros(p), DVector::zeros(p)];
    rollout(lp, snap, &seq, defence_on)[2].pddot
}

/// Central-difference Jacobian of the two-step-ahead acceleration with
/// respect to the injection, evaluated at `a_center`.
pub fn sensitivity(
    lp: &ClosedLoop,
    snap: &WorldSnapshot,
    a_center: &DVector<f64>,
    h: f64,
    defence_on: bool,
) -> Result<DMatrix<f64>> {
    let p = a_center.len();
    let column = |j: usize| -> Vector2<f64> {
        let mut plus = a_center.clone();
        let mut minus = a_center.clone();
        plus[j] += h;
        minus[j] -= h;
        (acc_two_ahead(lp, snap, plus, defence_on) - acc_two_ahead(lp, snap, minus, defence_on)) / (2.0 * h)
    };
    #[cfg(feature = "parallel")]
    let cols: Vec<Vector2<f64>> = {
        use rayon::prelude::*;
        (0..p).into_par_iter().map(column).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Vector2<f64>> = (0..p).map(column).collect();

    let mut z = DMatrix::zeros(2, p);
    for (j, c) in cols.iter().enumerate() {
        if !(c[0].is_finite() && c[1].is_finite()) {
            return Err(Error::Numerical(format!("sensitivity column {j} is not finite")));
        }
        z[(0, j)] = c[0];
        z[(1, j)] = c[1];
    }
    Ok(z)
}

/// One-step-ahead PD law on the plan plus feedforward. `k` is the absolute
/// step, `sim` the rollout sample at offset one.
pub fn target_accel(cfg: &AttackerConfig, k: usize, sim_p: &Vector2<f64>, sim_pdot: &Vector2<f64>) -> Vector2<f64> {
    let i = k.saturating_sub(cfg.attack_start);
    let next = cfg.plan_at(i + 1);
    let now = cfg.plan_at(i);
    let p_ref = Vector2::new(next.pos[0], next.pos[1]);
    let v_ref = Vector2::new(next.vel[0], next.vel[1]);
    let a_ff = Vector2::new(now.acc[0], now.acc[1]);
    cfg.kpa * (p_ref - sim_p) + cfg.kda * (v_ref - sim_pdot) + a_ff
}

/// Stealth-constrained tracking problem in the increment.
pub fn assemble_qcqp(
    z: &DMatrix<f64>,
    target: &Vector2<f64>,
    baseline_acc: &Vector2<f64>,
    c_k: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
    zeta: f64,
    tau_prime: f64,
) -> QcqpProblem {
    let m = z.ncols();
    let err = DVector::from_column_slice((target - baseline_acc).as_slice());
    let o = 0.5 * (sigma_inv + sigma_inv.transpose());
    let oc = &o * c_k;
    QcqpProblem {
        h: z.transpose() * z + DMatrix::identity(m, m) * zeta,
        g: -(z.transpose() * err),
        b: 2.0 * &oc,
        c: c_k.dot(&oc) - tau_prime,
        o,
    }
}

#[derive(Debug, Clone, Default)]
pub struct AttackDiagnostics {
    pub delta_norm: f64,
    pub active: bool,
    pub multiplier: f64,
    pub kkt_residual: f64,
    /// Innovation quadratic form realized by the chosen increment.
    pub budget_used: f64,
    pub target_acc: Vector2<f64>,
    pub predicted_acc: Vector2<f64>,
    /// Relative change of the sensitivity when the difference step is halved.
    pub richardson: Option<f64>,
    pub fallback: bool,
}

/// Compute the next injection from the current snapshot and the true
/// measurement `y` of this step.
pub fn attack_step(
    state: &mut AttackState,
    lp: &ClosedLoop,
    snap: &WorldSnapshot,
    y: &DVector<f64>,
    cfg: &AttackerConfig,
    defence_on: bool,
) -> Result<(DVector<f64>, DVector<f64>, AttackDiagnostics)> {
    let p = state.a.len();
    let a_prev = state.a.clone();
    let baseline = rollout(lp, snap, &[a_prev.clone(), DVector::zeros(p), DVector::zeros(p)], defence_on);
    let base_acc = baseline[2].pddot;
    let z = sensitivity(lp, snap, &a_prev, cfg.fd_step, defence_on)?;
    let k = snap.step_index;
    let target = target_accel(cfg, k, &baseline[1].p, &baseline[1].pdot);
    let c_k = y + &a_prev - &lp.model.c * &snap.estimator.xhat;
    let sigma_inv = lp.gains.sigma_inverse();
    let prob = assemble_qcqp(&z, &target, &base_acc, &c_k, &sigma_inv, cfg.zeta, cfg.tau_prime);

    let mut diag = AttackDiagnostics::default();
    let i = k.saturating_sub(cfg.attack_start);
    if cfg.richardson_every > 0 && i % cfg.richardson_every == 0 {
        let half = sensitivity(lp, snap, &a_prev, 0.5 * cfg.fd_step, defence_on)?;
        diag.richardson = Some((&z - &half).norm() / half.norm().max(f64::MIN_POSITIVE));
    }

    let delta = if cfg.constrained {
        match solve_qcqp(&prob, cfg.qcqp_tol) {
            Ok(sol) => {
                diag.active = sol.active;
                diag.multiplier = sol.multiplier;
                diag.kkt_residual = sol.kkt_residual;
                sol.delta
            }
            Err(_) => {
                diag.fallback = true;
                DVector::zeros(p)
            }
        }
    } else {
        match prob.h.clone().cholesky() {
            Some(ch) => -ch.solve(&prob.g),
            None => {
                diag.fallback = true;
                DVector::zeros(p)
            }
        }
    };

    let innov = &delta + &c_k;
    diag.budget_used = innov.dot(&(&sigma_inv * &innov));
    diag.delta_norm = delta.norm();
    diag.target_acc = target;
    let zd = &z * &delta;
    diag.predicted_acc = base_acc + Vector2::new(zd[0], zd[1]);
    state.a += &delta;
    Ok((state.a.clone(), delta, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn still_plan(p: [f64; 2], len: usize) -> Vec<TrajectoryPoint> {
        let pt = TrajectoryPoint {
            pos: DVector::from_column_slice(&p),
            vel: DVector::zeros(2),
            acc: DVector::zeros(2),
        };
        vec![pt; len]
    }

    fn config(plan: Vec<TrajectoryPoint>) -> AttackerConfig {
        AttackerConfig {
            kpa: Matrix2::identity() * 25.0,
            kda: Matrix2::identity() * 10.0,
            zeta: 1.0,
            tau_prime: 0.15,
            plan,
            attack_start: 100,
            fd_step: 1e-6,
            richardson_every: 0,
            constrained: true,
            qcqp_tol: 1e-10,
        }
    }

    #[test]
    fn target_on_still_plan_is_pd_toward_it() {
        let cfg = config(still_plan([1.0, 2.0], 10));
        let t = target_accel(&cfg, 103, &Vector2::new(1.5, 2.0), &Vector2::new(0.0, -0.2));
        assert!((t - Vector2::new(-12.5, 2.0)).norm() < 1e-12);
        let on = target_accel(&cfg, 100, &Vector2::new(1.0, 2.0), &Vector2::zeros());
        assert_eq!(on, Vector2::zeros());
    }

    #[test]
    fn target_uses_next_reference_and_current_feedforward() {
        let mut plan = still_plan([0.0, 0.0], 3);
        plan[1].pos = DVector::from_column_slice(&[0.1, 0.0]);
        plan[1].vel = DVector::from_column_slice(&[0.0, 0.3]);
        plan[0].acc = DVector::from_column_slice(&[2.0, -1.0]);
        let cfg = config(plan);
        let t = target_accel(&cfg, 100, &Vector2::zeros(), &Vector2::zeros());
        assert!((t - Vector2::new(2.5 + 2.0, 3.0 - 1.0)).norm() < 1e-12);
    }

    #[test]
    fn plan_is_held_past_its_end() {
        let cfg = config(still_plan([1.0, 2.0], 5));
        assert_eq!(cfg.planned_position(10_000), Vector2::new(1.0, 2.0));
        assert_eq!(cfg.planned_position(0), Vector2::new(1.0, 2.0));
    }

    #[test]
    fn qcqp_terms_match_expansion() {
        let z = dmatrix![1.0, 0.0, 2.0; 0.0, 3.0, 0.0];
        let sigma_inv = dmatrix![2.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 4.0];
        let c = DVector::from_column_slice(&[0.1, -0.2, 0.05]);
        let prob = assemble_qcqp(&z, &Vector2::new(1.0, 1.0), &Vector2::new(0.5, -1.0), &c, &sigma_inv, 0.5, 0.3);
        let d = DVector::from_column_slice(&[0.3, -0.1, 0.2]);
        let resid = Vector2::new(1.0, 1.0) - Vector2::new(0.5, -1.0);
        let zd = &z * &d;
        let direct = 0.5 * ((Vector2::new(zd[0], zd[1]) - resid).norm_squared() + 0.5 * d.norm_squared());
        let constant = 0.5 * resid.norm_squared();
        assert!((prob.objective(&d) + constant - direct).abs() < 1e-12);
        let innov = &d + &c;
        let budget = innov.dot(&(&sigma_inv * &innov)) - 0.3;
        assert!((prob.constraint(&d) - budget).abs() < 1e-12);
        let cancel = -&c;
        assert!((prob.constraint(&cancel) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_bad_gains() {
        let mut cfg = config(still_plan([0.0, 0.0], 5));
        cfg.kpa[(0, 1)] = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(still_plan([0.0, 0.0], 5));
        cfg.zeta = 0.0;
        assert!(cfg.validate().is_err());
        assert!(config(still_plan([0.0, 0.0], 1)).validate().is_err());
        assert!(config(still_plan([0.0, 0.0], 2)).validate().is_ok());
    }
}
