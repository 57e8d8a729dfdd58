//! The closed loop as one deterministic step function, shared by the
//! episode runner and by the attacker's internal rollouts.

use nalgebra::{DVector, Vector2};

use crate::controller::{map_to_joints, task_pd, task_twist, TaskGains, TaskRef};
use crate::defence::{gain_scale, predictor_step, scale_command, CovSchedule, GainLaw, PredictorState};
use crate::detector::{detector_step, DetectorState, Mahalanobis};
use crate::error::Result;
use crate::estimator::{kf_step, EstimatorState, KalmanGainSet};
use crate::robot::{fk, jacobian, measure, step_plant, JointState, PlanarChain, PlantModel};

/// Everything that stays fixed over an episode.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub chain: PlanarChain,
    pub model: PlantModel,
    pub gains: KalmanGainSet,
    pub innovation_metric: Mahalanobis,
    pub task_gains: TaskGains,
    pub reference: TaskRef,
    pub schedule: CovSchedule,
    pub law: GainLaw,
    pub rank_tol: f64,
}

/// Deep copy of every stateful component at the start of a step.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub true_state: DVector<f64>,
    pub estimator: EstimatorState,
    pub detector: DetectorState,
    pub predictor: PredictorState,
    pub a_prev: DVector<f64>,
    pub step_index: usize,
    /// True end-effector positions at the two previous steps, newest first.
    pub p_hist: [Vector2<f64>; 2],
}

/// Signals produced by one pass through the loop.
#[derive(Debug, Clone)]
pub struct StepSignals {
    pub y: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub r: DVector<f64>,
    pub z: f64,
    pub w: f64,
    pub alarm: bool,
    pub r_tilde: DVector<f64>,
    pub z_tilde: f64,
    pub f: f64,
    pub u_nom: DVector<f64>,
    pub u: DVector<f64>,
    pub condition: f64,
}

/// Planar end-effector position of a stacked state.
pub fn ee_position(chain: &PlanarChain, x: &DVector<f64>) -> Vector2<f64> {
    let q = x.rows(0, chain.joints()).into_owned();
    fk(chain, &q).position.xy()
}

/// Planar end-effector velocity `J(q) qdot` of a stacked state.
pub fn ee_velocity(chain: &PlanarChain, x: &DVector<f64>) -> Vector2<f64> {
    let p = chain.joints();
    let js = JointState::from_state(x);
    let t = jacobian(chain, &js.q) * x.rows(p, p);
    Vector2::new(t[0], t[1])
}

impl ClosedLoop {
    pub fn snapshot_at_rest(&self, x0: &DVector<f64>, xhat0: &DVector<f64>, detector: DetectorState) -> Result<WorldSnapshot> {
        let p0 = ee_position(&self.chain, x0);
        Ok(WorldSnapshot {
            true_state: x0.clone(),
            estimator: EstimatorState { xhat: xhat0.clone() },
            detector,
            predictor: PredictorState::synced(xhat0, self.schedule.sync_period())?,
            a_prev: DVector::zeros(self.model.outputs()),
            step_index: 0,
            p_hist: [p0, p0],
        })
    }

    /// Nominal command from the current estimate, before any scaling.
    pub fn nominal_command(&self, xhat: &DVector<f64>) -> (DVector<f64>, f64) {
        let js = JointState::from_state(xhat);
        let pose = fk(&self.chain, &js.q);
        let (v, w) = task_twist(&self.chain, &js.q, &js.qdot);
        let u_c = task_pd(&self.reference, &pose, (&v, &w), &self.task_gains);
        let cmd = map_to_joints(&u_c, &js.q, &js.qdot, &self.chain, self.rank_tol);
        (cmd.u_nom, cmd.condition)
    }

    /// Advance one step with injection `a`, process noise `w` and sensor noise `v`.
    /// Order: measure, detect, score, control, actuate, estimate, predict, resync.
    pub fn step(
        &self,
        s: &mut WorldSnapshot,
        a: &DVector<f64>,
        w: &DVector<f64>,
        v: &DVector<f64>,
        defence_on: bool,
        run_detector: bool,
    ) -> StepSignals {
        let y = &self.model.c * &s.true_state + v;
        let y_tilde = measure(&self.model, &s.true_state, v, a);
        let r = &y_tilde - &self.model.c * &s.estimator.xhat;
        let (z, w_sum, alarm) = if run_detector {
            let z = self.innovation_metric.eval(&r);
            let (w_sum, alarm) = detector_step(&mut s.detector, z);
            (z, w_sum, alarm)
        } else {
            (f64::NAN, f64::NAN, false)
        };

        let r_tilde = &s.estimator.xhat - &s.predictor.xtilde;
        let z_tilde = self.schedule.score(s.predictor.steps_since_sync, &r_tilde);
        let f = if defence_on { gain_scale(&self.law, z_tilde) } else { 1.0 };

        let (u_nom, condition) = self.nominal_command(&s.estimator.xhat);
        let u = scale_command(&u_nom, f);

        let p_now = ee_position(&self.chain, &s.true_state);
        s.true_state = step_plant(&self.model, &s.true_state, &u, w);
        let (est, _) = kf_step(&s.estimator, &self.gains, &self.model, &u, &y_tilde);
        s.estimator = est;
        predictor_step(&mut s.predictor, &self.model, &u);
        s.predictor.maybe_resync(&s.estimator.xhat);
        s.a_prev.copy_from(a);
        s.step_index += 1;
        s.p_hist = [p_now, s.p_hist[0]];

        StepSignals {
            y,
            y_tilde,
            r,
            z,
            w: w_sum,
            alarm,
            r_tilde,
            z_tilde,
            f,
            u_nom,
            u,
            condition,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ScenarioConfig, Simulation};

    fn setup() -> (ClosedLoop, WorldSnapshot) {
        let sim = Simulation::new(&ScenarioConfig::default()).unwrap();
        (sim.closed_loop().clone(), sim.world().clone())
    }

    #[test]
    fn rest_at_reference_is_an_equilibrium() {
        let (lp, mut s) = setup();
        let x0 = s.true_state.clone();
        let zn = DVector::zeros(12);
        let zp = DVector::zeros(6);
        for _ in 0..50 {
            let sig = lp.step(&mut s, &zp, &zn, &zp, true, true);
            assert!(sig.u.norm() < 1e-12);
            assert_eq!(sig.f, 1.0);
        }
        assert!((&s.true_state - &x0).norm() < 1e-12);
        assert_eq!(s.step_index, 50);
    }

    #[test]
    fn injection_appears_in_the_innovation() {
        let (lp, mut s) = setup();
        let a = DVector::from_column_slice(&[1e-3, 0.0, -2e-3, 0.0, 0.0, 5e-4]);
        let sig = lp.step(&mut s, &a, &DVector::zeros(12), &DVector::zeros(6), false, true);
        assert!((&sig.r - &a).norm() < 1e-15);
        assert!((&sig.y_tilde - &sig.y - &a).norm() < 1e-15);
        assert_eq!(s.a_prev, a);
        let expected = lp.innovation_metric.eval(&a);
        assert!((sig.z - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn detector_can_be_skipped() {
        let (lp, mut s) = setup();
        let sig = lp.step(&mut s, &DVector::zeros(6), &DVector::zeros(12), &DVector::zeros(6), false, false);
        assert!(sig.z.is_nan() && sig.w.is_nan());
        assert!(!sig.alarm);
        assert_eq!(s.detector.contents().count(), 0);
    }

    #[test]
    fn position_history_shifts() {
        let (lp, mut s) = setup();
        let p0 = ee_position(&lp.chain, &s.true_state);
        let mut w = DVector::zeros(12);
        w[6] = 0.5;
        lp.step(&mut s, &DVector::zeros(6), &w, &DVector::zeros(6), false, false);
        let p1 = ee_position(&lp.chain, &s.true_state);
        lp.step(&mut s, &DVector::zeros(6), &DVector::zeros(12), &DVector::zeros(6), false, false);
        assert_eq!(s.p_hist, [p1, p0]);
    }

    #[test]
    fn ee_velocity_matches_position_difference() {
        let (lp, s) = setup();
        let mut x = s.true_state.clone();
        for j in 0..6 {
            x[6 + j] = 0.1 * (j as f64 + 1.0);
        }
        let h = 1e-6;
        let mut xp = x.clone();
        let mut xm = x.clone();
        for j in 0..6 {
            xp[j] += h * x[6 + j];
            xm[j] -= h * x[6 + j];
        }
        let fd = (ee_position(&lp.chain, &xp) - ee_position(&lp.chain, &xm)) / (2.0 * h);
        assert!((fd - ee_velocity(&lp.chain, &x)).norm() < 1e-8);
    }
}
