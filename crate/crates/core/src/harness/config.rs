use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::measurement::NoiseSpec;
use crate::ppp::PppParams;

/// Pruning ratios. The spectral gap comes from the generated graph unless
/// `lambda2` pins it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PppSettings {
    #[serde(default = "default_ratio")]
    pub r_sv: f64,
    #[serde(default = "default_ratio")]
    pub r_lv: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub permissive: bool,
}

fn default_ratio() -> f64 {
    0.02
}

fn default_tau() -> f64 {
    0.32
}

impl Default for PppSettings {
    fn default() -> Self {
        Self {
            r_sv: default_ratio(),
            r_lv: default_ratio(),
            tau: default_tau(),
            lambda2: None,
            permissive: false,
        }
    }
}

impl PppSettings {
    pub fn params(&self, measured_lambda2: f64) -> PppParams {
        PppParams {
            r_sv: self.r_sv,
            r_lv: self.r_lv,
            tau: self.tau,
            lambda2: self.lambda2.unwrap_or(measured_lambda2),
            permissive: self.permissive,
        }
    }
}

/// How the noise bound `E` handed to the l1 solver is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseBound {
    /// `slack * min_theta ||y_hat - e^{i theta} A x||`, using the true signal.
    Oracle { slack: f64 },
    /// `sqrt(c * (sqrt(M)/SNR + sqrt(|V|/M)) * sqrt(M)/SNR) * ||x||`, with
    /// `||x||^2` estimated from the vertex intensities.
    Theory { c: f64 },
}

impl Default for NoiseBound {
    fn default() -> Self {
        NoiseBound::Oracle { slack: 1.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    M,
    K,
    NVertices,
    D,
    Epsilon,
    Snr,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: SweepField,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_vertices")]
    pub n_vertices: usize,
    /// Graph degree; `None` picks the largest even degree below
    /// `n_vertices`, capped at 100.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub ppp: PppSettings,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
    #[serde(default)]
    pub noise_bound: NoiseBound,
    /// Squared relative error counted as success; defaults depend on noise.
    #[serde(default)]
    pub success_threshold: Option<f64>,
    /// Worker threads for trials; `None` uses all cores.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Largest tolerated fraction of failed trials before the run reports
    /// partial failure.
    #[serde(default = "default_failure_ratio")]
    pub max_failure_ratio: f64,
}

fn default_m() -> usize {
    128
}

fn default_k() -> usize {
    3
}

fn default_n_vertices() -> usize {
    120
}

fn default_epsilon() -> f64 {
    0.2
}

fn default_trials() -> usize {
    10
}

fn default_failure_ratio() -> f64 {
    1.0
}

pub const MAX_AUTO_DEGREE: usize = 100;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: default_m(),
            k: default_k(),
            n_vertices: default_n_vertices(),
            d: None,
            epsilon: default_epsilon(),
            ppp: PppSettings::default(),
            noise: NoiseSpec::None,
            trials: default_trials(),
            master_seed: 0,
            sweep: None,
            noise_bound: NoiseBound::default(),
            success_threshold: None,
            workers: None,
            max_failure_ratio: default_failure_ratio(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn degree(&self) -> usize {
        self.d.unwrap_or_else(|| {
            let top = self.n_vertices.saturating_sub(1).min(MAX_AUTO_DEGREE);
            top - top % 2
        })
    }

    /// Target SNR when the noise is specified that way.
    pub fn snr(&self) -> Option<f64> {
        match self.noise {
            NoiseSpec::Snr { snr } => Some(snr),
            _ => None,
        }
    }

    /// `SNR * sqrt(k ln M) / M`.
    pub fn n_snr(&self) -> Option<f64> {
        self.snr().map(|s| normalized_snr(s, self.k, self.m))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.k > self.m {
            return bad(format!("k = {} exceeds m = {}", self.k, self.m));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let d = self.degree();
        if d <= 2 || !d.is_multiple_of(2) || d >= self.n_vertices {
            return bad(format!(
                "degree {d} must be even with 2 < d < n_vertices = {}",
                self.n_vertices
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon = {} must be finite and >= 0",
                self.epsilon
            ));
        }
        for (name, v) in [
            ("r_sv", self.ppp.r_sv),
            ("r_lv", self.ppp.r_lv),
            ("tau", self.ppp.tau),
        ] {
            if !(v > 0.0 && v < 1.0 / 3.0) {
                return bad(format!("ppp.{name} = {v} outside (0, 1/3)"));
            }
        }
        if let Some(l) = self.ppp.lambda2 {
            if !(l > 0.0 && l <= 2.0) {
                return bad(format!("ppp.lambda2 = {l} outside (0, 2]"));
            }
        }
        if let NoiseSpec::Snr { snr } = self.noise {
            if !(snr > 0.0) {
                return bad(format!("snr = {snr} must be positive"));
            }
        }
        match self.noise_bound {
            NoiseBound::Oracle { slack } if !(slack >= 1.0 && slack.is_finite()) => {
                return bad(format!(
                    "noise_bound.slack = {slack} must be finite and >= 1"
                ));
            }
            NoiseBound::Theory { c } if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("noise_bound.c = {c} must be positive"));
            }
            _ => {}
        }
        if let Some(t) = self.success_threshold {
            if !(t > 0.0) {
                return bad(format!("success_threshold = {t} must be positive"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_ratio) {
            return bad(format!(
                "max_failure_ratio = {} outside [0, 1]",
                self.max_failure_ratio
            ));
        }
        if let Some(axis) = &self.sweep {
            if axis.values.is_empty() {
                return bad("sweep axis has no values".into());
            }
            for &v in &axis.values {
                self.at_axis_value(axis.field, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// Copy of this configuration with `field` set to `value` and the sweep removed.
    pub fn at_axis_value(&self, field: SweepField, value: f64) -> Result<Self, HarnessError> {
        let count = |v: f64| -> Result<usize, HarnessError> {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(HarnessError::Config(format!(
                    "sweep value {v} for {field:?} is not a count"
                )))
            }
        };
        let mut c = self.clone();
        c.sweep = None;
        match field {
            SweepField::M => c.m = count(value)?,
            SweepField::K => c.k = count(value)?,
            SweepField::NVertices => c.n_vertices = count(value)?,
            SweepField::D => c.d = Some(count(value)?),
            SweepField::Epsilon => c.epsilon = value,
            SweepField::Snr => c.noise = NoiseSpec::Snr { snr: value },
            SweepField::Tau => c.ppp.tau = value,
        }
        Ok(c)
    }

    /// Success threshold on the squared relative error.
    pub fn threshold(&self) -> f64 {
        self.success_threshold
            .unwrap_or_else(|| match self.n_snr() {
                Some(n) => 10.0 * (1.0 / n + 1.0) / n,
                None => 1e-8,
            })
    }
}

pub fn normalized_snr(snr: f64, k: usize, m: usize) -> f64 {
    snr * (k as f64 * (m as f64).ln()).sqrt() / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_object() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.degree(), 100);
        assert_eq!(cfg.threshold(), 1e-8);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"mm": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"ppp": {"rsv": 0.1}}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::from_json(r#"{"k": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"k": 200}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"trials": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"d": 7}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"noise": {"kind": "snr", "snr": -1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"sweep": {"field": "k", "values": []}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"sweep": {"field": "k", "values": [2.5]}}"#).is_err()
        );
        assert!(
            ExperimentConfig::from_json(r#"{"sweep": {"field": "k", "values": [1, 2]}}"#).is_ok()
        );
    }

    #[test]
    fn auto_degree_is_even_and_below_n() {
        let cfg = ExperimentConfig {
            n_vertices: 40,
            ..Default::default()
        };
        assert_eq!(cfg.degree(), 38);
        let cfg = ExperimentConfig {
            n_vertices: 41,
            ..Default::default()
        };
        assert_eq!(cfg.degree(), 40);
    }

    #[test]
    fn noisy_threshold() {
        let cfg = ExperimentConfig {
            noise: NoiseSpec::Snr { snr: 1000.0 },
            ..Default::default()
        };
        let n = normalized_snr(1000.0, 3, 128);
        assert!((cfg.threshold() - 10.0 * (1.0 / n + 1.0) / n).abs() < 1e-15);
    }
}
