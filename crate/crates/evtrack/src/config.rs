//! Tracker configuration: flat `key = value` text file, `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

/// All pipeline tunables with their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // EROS
    pub eros_k: usize,
    pub eros_lambda: f64,
    // optical flow
    pub flow_cell_size: u32,
    pub flow_window: f64,
    pub flow_tau: f64,
    pub flow_min_events: usize,
    pub flow_max_events_per_cell: usize,
    pub flow_collinearity_tol: f64,
    // twist Kalman filter
    pub kf_rho: f64,
    pub kf_q_v: f64,
    pub kf_q_w: f64,
    pub kf_r_px: f64,
    pub kf_gating: bool,
    // tracker loop
    pub cycle_dt: f64,
    // template rendering
    pub dog_sigma1: f64,
    pub dog_sigma2: f64,
    pub roi_dilation: f64,
    // corrector
    pub delta_p: f64,
    pub theta_deg: f64,
    pub corrector_iterations: usize,
    /// Fraction of the patch maximum below which decay-surface values are
    /// zeroed before scoring; isolates the most recent event band from the
    /// trail left behind by a moving edge.
    pub patch_trail_cutoff: f64,
    /// Fraction of each cycle's applied correction increment folded back into
    /// the twist state (0 disables the feedback).
    pub correction_feedback: f64,
    // UKF smoothing
    pub ukf_enabled: bool,
    pub ukf_alpha: f64,
    pub ukf_beta: f64,
    pub ukf_kappa: f64,
    pub ukf_q_pos: f64,
    pub ukf_q_rot: f64,
    pub ukf_r_pos: f64,
    pub ukf_r_rot: f64,
    pub ukf_constant_twist: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            eros_k: 7,
            eros_lambda: 0.7,
            flow_cell_size: 20,
            flow_window: 0.030,
            flow_tau: 0.001,
            flow_min_events: 6,
            flow_max_events_per_cell: 64,
            flow_collinearity_tol: 1.0,
            kf_rho: 0.5,
            kf_q_v: 0.05,
            kf_q_w: 0.1,
            kf_r_px: 1.5,
            kf_gating: true,
            cycle_dt: 0.002,
            dog_sigma1: 1.0,
            dog_sigma2: 2.5,
            roi_dilation: 0.2,
            delta_p: 1.0,
            theta_deg: 0.5,
            corrector_iterations: 1,
            patch_trail_cutoff: 0.3,
            correction_feedback: 0.05,
            ukf_enabled: true,
            ukf_alpha: 1e-3,
            ukf_beta: 2.0,
            ukf_kappa: 0.0,
            ukf_q_pos: 2e-4,
            ukf_q_rot: 2e-3,
            ukf_r_pos: 1e-3,
            ukf_r_rot: 1e-2,
            ukf_constant_twist: true,
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_map(&text)
    }

    pub fn from_str_map(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(idx + 1))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = Config::default();
        cfg.apply(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| ConfigError::BadValue { key: key.into(), msg: format!("{e}") })
        }
        fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
            match v {
                "true" | "1" | "on" => Ok(true),
                "false" | "0" | "off" => Ok(false),
                _ => Err(ConfigError::BadValue { key: key.into(), msg: format!("bad bool `{v}`") }),
            }
        }
        for (k, v) in map {
            match k.as_str() {
                "eros.k" => self.eros_k = num(k, v)?,
                "eros.lambda" => self.eros_lambda = num(k, v)?,
                "flow.cell_size" => self.flow_cell_size = num(k, v)?,
                "flow.window" => self.flow_window = num(k, v)?,
                "flow.tau" => self.flow_tau = num(k, v)?,
                "flow.min_events" => self.flow_min_events = num(k, v)?,
                "flow.max_events_per_cell" => self.flow_max_events_per_cell = num(k, v)?,
                "flow.collinearity_tol" => self.flow_collinearity_tol = num(k, v)?,
                "kf.rho" => self.kf_rho = num(k, v)?,
                "kf.q_v" => self.kf_q_v = num(k, v)?,
                "kf.q_w" => self.kf_q_w = num(k, v)?,
                "kf.r_px" => self.kf_r_px = num(k, v)?,
                "kf.gating" => self.kf_gating = boolean(k, v)?,
                "tracker.dt" => self.cycle_dt = num(k, v)?,
                "dog.sigma1" => self.dog_sigma1 = num(k, v)?,
                "dog.sigma2" => self.dog_sigma2 = num(k, v)?,
                "roi.dilation" => self.roi_dilation = num(k, v)?,
                "corrector.delta_p" => self.delta_p = num(k, v)?,
                "corrector.theta_deg" => self.theta_deg = num(k, v)?,
                "corrector.iterations" => self.corrector_iterations = num(k, v)?,
                "corrector.patch_trail_cutoff" => self.patch_trail_cutoff = num(k, v)?,
                "corrector.feedback" => self.correction_feedback = num(k, v)?,
                "ukf.enabled" => self.ukf_enabled = boolean(k, v)?,
                "ukf.alpha" => self.ukf_alpha = num(k, v)?,
                "ukf.beta" => self.ukf_beta = num(k, v)?,
                "ukf.kappa" => self.ukf_kappa = num(k, v)?,
                "ukf.q_pos" => self.ukf_q_pos = num(k, v)?,
                "ukf.q_rot" => self.ukf_q_rot = num(k, v)?,
                "ukf.r_pos" => self.ukf_r_pos = num(k, v)?,
                "ukf.r_rot" => self.ukf_r_rot = num(k, v)?,
                "ukf.constant_twist" => self.ukf_constant_twist = boolean(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::BadValue { key: key.into(), msg: msg.into() })
            }
        };
        check(self.eros_k % 2 == 1 && self.eros_k >= 1, "eros.k", "must be odd and >= 1")?;
        check(self.eros_lambda > 0.0 && self.eros_lambda < 1.0, "eros.lambda", "must be in (0,1)")?;
        check(self.flow_cell_size >= 2, "flow.cell_size", "must be >= 2")?;
        check(self.flow_window > 0.0, "flow.window", "must be > 0")?;
        check(self.flow_tau >= 0.0, "flow.tau", "must be >= 0")?;
        check(self.flow_min_events >= 3, "flow.min_events", "must be >= 3")?;
        check(self.kf_rho > 0.0 && self.kf_rho <= 1.0, "kf.rho", "must be in (0,1]")?;
        check(self.cycle_dt > 0.0, "tracker.dt", "must be > 0")?;
        check(
            self.dog_sigma1 > 0.0 && self.dog_sigma2 > self.dog_sigma1,
            "dog.sigma2",
            "need 0 < sigma1 < sigma2",
        )?;
        check(self.delta_p > 0.0, "corrector.delta_p", "must be > 0")?;
        check(self.theta_deg > 0.0, "corrector.theta_deg", "must be > 0")?;
        check(self.corrector_iterations >= 1, "corrector.iterations", "must be >= 1")?;
        check(
            (0.0..1.0).contains(&self.patch_trail_cutoff),
            "corrector.patch_trail_cutoff",
            "must be in [0,1)",
        )?;
        check(
            (0.0..=1.0).contains(&self.correction_feedback),
            "corrector.feedback",
            "must be in [0,1]",
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = Config::from_str_map(
            "# comment\neros.lambda = 0.5\nflow.cell_size = 24 # trailing\nukf.enabled = false\n",
        )
        .unwrap();
        assert_eq!(cfg.eros_lambda, 0.5);
        assert_eq!(cfg.flow_cell_size, 24);
        assert!(!cfg.ukf_enabled);
    }

    #[test]
    fn rejects_unknown_key_and_bad_range() {
        assert!(Config::from_str_map("nope = 1\n").is_err());
        assert!(Config::from_str_map("eros.lambda = 1.5\n").is_err());
        assert!(Config::from_str_map("eros.k = 4\n").is_err());
    }
}
