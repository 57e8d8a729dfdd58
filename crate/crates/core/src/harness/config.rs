//! Scenario configuration.
//!
//! Flat TOML with unit-suffixed keys. Every key is optional and falls back to
//! [`ScenarioConfig::default`]; unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Attacker ignores the stealth budget; detector passive; no scaling.
    #[serde(rename = "u", alias = "undefended")]
    Undefended,
    /// Stealthy attacker, passive detector only.
    #[serde(rename = "po", alias = "passive_only")]
    PassiveOnly,
    /// Stealthy attacker, detector plus command scaling.
    #[serde(rename = "d", alias = "defended")]
    Defended,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Undefended, Mode::PassiveOnly, Mode::Defended];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Undefended => "U",
            Mode::PassiveOnly => "PO",
            Mode::Defended => "D",
        }
    }

    pub fn defence_on(self) -> bool {
        self == Mode::Defended
    }

    pub fn attacker_constrained(self) -> bool {
        self != Mode::Undefended
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" | "undefended" => Ok(Mode::Undefended),
            "po" | "passive_only" => Ok(Mode::PassiveOnly),
            "d" | "defended" => Ok(Mode::Defended),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected u, po or d)"))),
        }
    }
}

/// How the estimate is initialized relative to the true state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorInit {
    /// `xhat_0 = x_0`.
    Exact,
    /// `xhat_0 = x_0 - e` with `e ~ N(0, P)`: the filter starts in steady state.
    SteadyStateDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub link_lengths_m: Vec<f64>,
    pub q0_rad: Vec<f64>,
    pub ts_s: f64,
    /// Continuous white-noise acceleration intensity per joint, rad^2/s^3.
    pub q_c_rad2_per_s3: f64,
    /// Sensor noise variance per joint, rad^2.
    pub r_rad2: f64,
    pub estimator_init: EstimatorInit,

    pub lqr_w_pos: f64,
    pub lqr_w_vel: f64,
    pub lqr_w_u: f64,
    pub rank_tol: f64,

    pub detector_arl_steps: f64,
    pub detector_window_steps: usize,

    pub defence_psi: f64,
    pub defence_beta: f64,
    pub defence_gamma: f64,
    pub defence_sync_period_steps: usize,
    pub defence_k_min_steps: usize,
    pub defence_ridge_rel: f64,

    pub attack_enabled: bool,
    pub attack_target_x_m: f64,
    pub attack_target_y_m: f64,
    pub attack_start_step: usize,
    pub attack_len_steps: usize,
    pub attack_kp_per_s2: f64,
    pub attack_kd_per_s: f64,
    pub attack_zeta: f64,
    pub attack_fd_step_rad: f64,
    pub attack_richardson_every_steps: usize,
    pub attack_qcqp_tol: f64,
    /// The attacker's internal rollouts include the command scaling.
    pub attack_knows_defence: bool,

    pub episode_steps: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            link_lengths_m: vec![0.65, 0.55, 0.45, 0.45, 0.45, 0.45],
            q0_rad: vec![0.0, PI / 8.0, PI / 8.0, PI / 8.0, PI / 8.0, PI / 8.0],
            ts_s: 0.01,
            q_c_rad2_per_s3: 1e-2,
            r_rad2: 1e-6,
            estimator_init: EstimatorInit::Exact,
            lqr_w_pos: 1.0,
            lqr_w_vel: 0.1,
            lqr_w_u: 0.01,
            rank_tol: 1e-10,
            detector_arl_steps: 5000.0,
            detector_window_steps: 20,
            defence_psi: 0.999,
            defence_beta: 0.999,
            defence_gamma: 4.0,
            defence_sync_period_steps: 500,
            defence_k_min_steps: 5,
            defence_ridge_rel: 1e-12,
            attack_enabled: true,
            attack_target_x_m: -2.0,
            attack_target_y_m: 1.0,
            attack_start_step: 800,
            attack_len_steps: 1200,
            attack_kp_per_s2: 25.0,
            attack_kd_per_s: 10.0,
            attack_zeta: 3e3,
            attack_fd_step_rad: 1e-6,
            attack_richardson_every_steps: 100,
            attack_qcqp_tol: 1e-8,
            attack_knows_defence: true,
            episode_steps: 2000,
            seed: 0,
            mode: Mode::Defended,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn joints(&self) -> usize {
        self.link_lengths_m.len()
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.detector_arl_steps
    }

    pub fn attack_window(&self) -> std::ops::Range<usize> {
        if self.attack_enabled {
            self.attack_start_step..self.attack_start_step + self.attack_len_steps
        } else {
            0..0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.link_lengths_m.is_empty() {
            return bad("link_lengths_m must not be empty".into());
        }
        if self.q0_rad.len() != self.joints() {
            return bad(format!(
                "q0_rad has {} entries but the chain has {} joints",
                self.q0_rad.len(),
                self.joints()
            ));
        }
        let positive = [
            ("ts_s", self.ts_s),
            ("q_c_rad2_per_s3", self.q_c_rad2_per_s3),
            ("r_rad2", self.r_rad2),
            ("lqr_w_pos", self.lqr_w_pos),
            ("lqr_w_u", self.lqr_w_u),
            ("defence_gamma", self.defence_gamma),
            ("attack_zeta", self.attack_zeta),
            ("attack_fd_step_rad", self.attack_fd_step_rad),
            ("attack_qcqp_tol", self.attack_qcqp_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        let nonneg = [
            ("lqr_w_vel", self.lqr_w_vel),
            ("rank_tol", self.rank_tol),
            ("defence_ridge_rel", self.defence_ridge_rel),
            ("attack_kp_per_s2", self.attack_kp_per_s2),
            ("attack_kd_per_s", self.attack_kd_per_s),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.detector_arl_steps > 1.0) {
            return bad(format!("detector_arl_steps must be > 1, got {}", self.detector_arl_steps));
        }
        if self.detector_window_steps == 0 {
            return bad("detector_window_steps must be >= 1".into());
        }
        for (name, v) in [("defence_psi", self.defence_psi), ("defence_beta", self.defence_beta)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        if self.defence_sync_period_steps == 0 {
            return bad("defence_sync_period_steps must be >= 1".into());
        }
        if self.defence_k_min_steps >= self.defence_sync_period_steps {
            return bad("defence_k_min_steps must be smaller than the sync period".into());
        }
        if self.episode_steps == 0 {
            return bad("episode_steps must be >= 1".into());
        }
        if self.attack_enabled {
            if self.attack_len_steps < 2 {
                return bad("attack_len_steps must be >= 2".into());
            }
            if self.attack_start_step + self.attack_len_steps > self.episode_steps {
                return bad(format!(
                    "attack window {}..{} exceeds the episode length {}",
                    self.attack_start_step,
                    self.attack_start_step + self.attack_len_steps,
                    self.episode_steps
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let cfg = ScenarioConfig::from_toml_str("seed = 7\nmode = \"po\"\ndefence_gamma = 2.5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, Mode::PassiveOnly);
        assert_eq!(cfg.defence_gamma, 2.5);
        assert_eq!(cfg.episode_steps, 2000);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("defence_gama = 2.0\n").is_err());
        assert!(ScenarioConfig::from_toml_str("defence_beta = 1.0\n").is_err());
        assert!(ScenarioConfig::from_toml_str("attack_start_step = 1500\n").is_err());
        assert!(ScenarioConfig::from_toml_str("q0_rad = [0.0]\n").is_err());
        assert!(ScenarioConfig::from_toml_str("mode = \"x\"\n").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("PO".parse::<Mode>().unwrap(), Mode::PassiveOnly);
        assert_eq!("d".parse::<Mode>().unwrap(), Mode::Defended);
        assert!("z".parse::<Mode>().is_err());
    }
}
