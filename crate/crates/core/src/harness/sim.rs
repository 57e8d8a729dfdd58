//! Episode execution.

use std::ops::Range;

use nalgebra::{DVector, Matrix2, Vector2};

use crate::attacker::{attack_step, AttackState, AttackerConfig};
use crate::controller::{lqr_gains, TaskGains, TaskRef};
use crate::defence::{design_zx, CovSchedule, GainLaw};
use crate::detector::{calibrate_threshold, DetectorState, Mahalanobis};
use crate::error::{Error, Result};
use crate::estimator::kf_design;
use crate::harness::config::{EstimatorInit, Mode, ScenarioConfig};
use crate::noise::{CovFactor, GaussianSampler};
use crate::numkernel::quintic_plan;
use crate::robot::{fk, PlanarChain, PlantModel};
use crate::world::{ee_position, ClosedLoop, StepSignals, WorldSnapshot};

// keeps the estimator-initialization draw off the per-step noise stream
const INIT_STREAM: u64 = 0x5EED_1A17_0000_0001;

/// Derived thresholds and gains of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub z_x: f64,
    pub z_scale: f64,
    pub kp: f64,
    pub kd: f64,
}

/// One row of an episode trace. State columns are taken at the start of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub xhat: DVector<f64>,
    pub xtilde: DVector<f64>,
    pub y: DVector<f64>,
    pub y_tilde: DVector<f64>,
    pub a: DVector<f64>,
    pub delta: DVector<f64>,
    pub r: DVector<f64>,
    pub z: f64,
    pub w: f64,
    pub z_tilde: f64,
    pub f: f64,
    pub u_nom: DVector<f64>,
    pub u: DVector<f64>,
    pub p: Vector2<f64>,
    pub p_bar: Vector2<f64>,
    pub p_bar_a: Vector2<f64>,
    pub alarm: bool,
    pub jacobian_cond: f64,
    /// Attacker's innovation quadratic form, NaN outside the attack window.
    pub attack_budget_used: f64,
    /// Step-halving change of the attacker sensitivity, NaN when not evaluated.
    pub richardson: f64,
    pub attack_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub mode: Mode,
    pub seed: u64,
    pub tau: f64,
    pub attack_window: Range<usize>,
    pub rows: Vec<StepRecord>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    lp: ClosedLoop,
    world: WorldSnapshot,
    attacker: Option<(AttackerConfig, AttackState)>,
    calibration: Calibration,
    sampler: GaussianSampler,
    w_factor: CovFactor,
    v_factor: CovFactor,
    nominal_p: Vector2<f64>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let chain = PlanarChain::new(cfg.link_lengths_m.clone())?;
        let joints = chain.joints();
        let model = PlantModel::double_integrator(joints, cfg.ts_s, cfg.q_c_rad2_per_s3, cfg.r_rad2)?;
        let gains = kf_design(&model)?;
        let (kp, kd) = lqr_gains(cfg.ts_s, cfg.lqr_w_pos, cfg.lqr_w_vel, cfg.lqr_w_u)?;
        let q0 = DVector::from_column_slice(&cfg.q0_rad);
        let pose = fk(&chain, &q0);
        let nominal_p = pose.position.xy();

        let alpha = cfg.alpha();
        let tau = calibrate_threshold(alpha, joints, cfg.detector_window_steps)?;
        let tau_prime = tau / cfg.attack_len_steps.max(1) as f64;
        let z_x = design_zx(cfg.defence_psi, model.states())?;
        let law = GainLaw::new(z_x, cfg.defence_beta, cfg.defence_gamma)?;
        let schedule = CovSchedule::build(
            &model,
            &gains,
            cfg.defence_sync_period_steps,
            cfg.defence_k_min_steps,
            cfg.defence_ridge_rel,
        )?;
        let innovation_metric = Mahalanobis::new(&gains.sigma)?;
        let calibration = Calibration {
            alpha,
            tau,
            tau_prime,
            z_x,
            z_scale: law.z_scale(),
            kp,
            kd,
        };

        let lp = ClosedLoop {
            chain,
            model,
            gains,
            innovation_metric,
            task_gains: TaskGains::uniform(kp, kd),
            reference: TaskRef::hold(&pose),
            schedule,
            law,
            rank_tol: cfg.rank_tol,
        };

        let mut x0 = DVector::zeros(2 * joints);
        x0.rows_mut(0, joints).copy_from(&q0);
        let xhat0 = match cfg.estimator_init {
            EstimatorInit::Exact => x0.clone(),
            EstimatorInit::SteadyStateDraw => {
                let mut init = GaussianSampler::new(cfg.seed ^ INIT_STREAM);
                let e = init.correlated(&CovFactor::new(&lp.gains.p)?);
                &x0 - e
            }
        };
        let detector = DetectorState::new(cfg.detector_window_steps, tau)?;
        let world = lp.snapshot_at_rest(&x0, &xhat0, detector)?;

        let attacker = if cfg.attack_enabled {
            let target = DVector::from_column_slice(&[cfg.attack_target_x_m, cfg.attack_target_y_m]);
            let start = DVector::from_column_slice(nominal_p.as_slice());
            let plan = quintic_plan(&start, &target, cfg.attack_len_steps, cfg.ts_s)?;
            let acfg = AttackerConfig {
                kpa: Matrix2::identity() * cfg.attack_kp_per_s2,
                kda: Matrix2::identity() * cfg.attack_kd_per_s,
                zeta: cfg.attack_zeta,
                tau_prime,
                plan,
                attack_start: cfg.attack_start_step,
                fd_step: cfg.attack_fd_step_rad,
                richardson_every: cfg.attack_richardson_every_steps,
                constrained: cfg.mode.attacker_constrained(),
                qcqp_tol: cfg.attack_qcqp_tol,
            };
            acfg.validate()?;
            Some((acfg, AttackState::zero(joints)))
        } else {
            None
        };

        Ok(Self {
            cfg: cfg.clone(),
            w_factor: CovFactor::new(&lp.model.q)?,
            v_factor: CovFactor::new(&lp.model.r)?,
            sampler: GaussianSampler::new(cfg.seed),
            lp,
            world,
            attacker,
            calibration,
            nominal_p,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        &self.lp
    }

    pub fn world(&self) -> &WorldSnapshot {
        &self.world
    }

    pub fn nominal_position(&self) -> Vector2<f64> {
        self.nominal_p
    }

    pub fn attacker_config(&self) -> Option<&AttackerConfig> {
        self.attacker.as_ref().map(|(c, _)| c)
    }

    pub fn step_index(&self) -> usize {
        self.world.step_index
    }

    pub fn finished(&self) -> bool {
        self.world.step_index >= self.cfg.episode_steps
    }

    /// Advance one step and return its record.
    pub fn step(&mut self) -> Result<StepRecord> {
        let k = self.world.step_index;
        let joints = self.lp.chain.joints();
        let w = self.sampler.correlated(&self.w_factor);
        let v = self.sampler.correlated(&self.v_factor);
        let y = &self.lp.model.c * &self.world.true_state + &v;
        let window = self.cfg.attack_window();
        let defence_on = self.cfg.mode.defence_on();
        let attacker_sees_defence = defence_on && self.cfg.attack_knows_defence;

        let mut budget_used = f64::NAN;
        let mut richardson = f64::NAN;
        let mut fallback = false;
        let (a, delta, p_bar_a) = match &mut self.attacker {
            Some((acfg, astate)) if window.contains(&k) => {
                let (a, delta, diag) = attack_step(astate, &self.lp, &self.world, &y, acfg, attacker_sees_defence)
                    .map_err(|e| e.at_step(k))?;
                budget_used = diag.budget_used;
                richardson = diag.richardson.unwrap_or(f64::NAN);
                fallback = diag.fallback;
                (a, delta, acfg.planned_position(k))
            }
            // after the window the last injection is held
            Some((acfg, astate)) if k >= window.end => (astate.a.clone(), DVector::zeros(joints), acfg.planned_position(k)),
            _ => (DVector::zeros(joints), DVector::zeros(joints), self.nominal_p),
        };

        let x = self.world.true_state.clone();
        let xhat = self.world.estimator.xhat.clone();
        let xtilde = self.world.predictor.xtilde.clone();
        let p = ee_position(&self.lp.chain, &x);
        let sig: StepSignals = self.lp.step(&mut self.world, &a, &w, &v, defence_on, true);
        if !sig.u.iter().all(|u| u.is_finite()) || !self.world.true_state.iter().all(|s| s.is_finite()) {
            return Err(Error::Numerical("non-finite command or state".into()).at_step(k));
        }
        debug_assert_eq!(sig.y, y);

        Ok(StepRecord {
            k,
            q: x.rows(0, joints).into_owned(),
            qdot: x.rows(joints, joints).into_owned(),
            xhat,
            xtilde,
            y: sig.y,
            y_tilde: sig.y_tilde,
            a,
            delta,
            r: sig.r,
            z: sig.z,
            w: sig.w,
            z_tilde: sig.z_tilde,
            f: sig.f,
            u_nom: sig.u_nom,
            u: sig.u,
            p,
            p_bar: self.nominal_p,
            p_bar_a,
            alarm: sig.alarm,
            jacobian_cond: sig.condition,
            attack_budget_used: budget_used,
            richardson,
            attack_fallback: fallback,
        })
    }
}

/// Run a full episode and keep every record.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeTrace> {
    let mut sim = Simulation::new(cfg)?;
    let mut rows = Vec::with_capacity(cfg.episode_steps);
    while !sim.finished() {
        rows.push(sim.step()?);
    }
    Ok(EpisodeTrace {
        mode: cfg.mode,
        seed: cfg.seed,
        tau: sim.calibration().tau,
        attack_window: cfg.attack_window(),
        rows,
    })
}
