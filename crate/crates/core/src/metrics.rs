//! Evaluation-based measurements and user-defined priorities/thresholds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Measured (or surrogate-estimated) metrics of one candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    /// Training accuracy in [0, 1].
    pub a1: f64,
    /// Validation accuracy in [0, 1].
    pub a2: f64,
    /// Energy attributed to the training set, kWh-PUE.
    pub e1: f64,
    /// Energy attributed to the validation set, kWh-PUE.
    pub e2: f64,
    /// Inference frames per second.
    #[serde(alias = "fps")]
    pub f: f64,
    /// Parameter count.
    #[serde(alias = "params")]
    pub p: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("metric {field} = {value} is invalid: {reason}")]
    InvalidMetric {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("criterion {field} = {value} is invalid: {reason}")]
    InvalidCriterion {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unknown preset {0} (expected 1-5)")]
    UnknownPreset(u32),
}

impl MetricsRecord {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |field, value, reason| Err(MetricsError::InvalidMetric { field, value, reason });
        for (field, value) in [("a1", self.a1), ("a2", self.a2)] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return bad(field, value, "accuracy must be within [0, 1]");
            }
        }
        for (field, value) in [("e1", self.e1), ("e2", self.e2), ("f", self.f)] {
            if !value.is_finite() || value < 0.0 {
                return bad(field, value, "must be finite and >= 0");
            }
        }
        Ok(())
    }
}

/// User-defined priorities and thresholds steering the expert system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserCriteria {
    pub pa1: f64,
    pub pa2: f64,
    pub pe1: f64,
    pub pe2: f64,
    pub pf: f64,
    pub ta1: f64,
    pub ta2: f64,
    /// kWh-PUE
    pub te1: f64,
    /// kWh-PUE
    pub te2: f64,
    /// frames per second
    pub tf: f64,
    /// Overfitting gap threshold on A1 - A2.
    pub ot: f64,
    /// Underfitting gap threshold on A2 - A1.
    pub ut: f64,
}

/// Preset priority rows (PA1, PA2, PE1, PE2, PF), settings 1 through 5.
pub const PRESET_PRIORITIES: [[f64; 5]; 5] = [
    [0.4, 0.6, 0.0, 0.0, 0.0],
    [0.3, 0.3, 0.2, 0.2, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.5, 0.5, 0.0],
    [0.3, 0.4, 0.0, 0.0, 0.3],
];

pub const DEFAULT_TA1: f64 = 0.95;
pub const DEFAULT_TA2: f64 = 0.92;
pub const DEFAULT_TE1: f64 = 1e-3;
pub const DEFAULT_TE2: f64 = 1e-5;
pub const DEFAULT_TF: f64 = 20_000.0;
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.15;

impl Default for UserCriteria {
    /// Preset 1 priorities with the default thresholds.
    fn default() -> Self {
        load_preset(1).expect("preset 1 exists")
    }
}

impl UserCriteria {
    pub fn priority_sum(&self) -> f64 {
        self.pa1 + self.pa2 + self.pe1 + self.pe2 + self.pf
    }

    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, MetricsError> {
        let bad = |field, value, reason| Err(MetricsError::InvalidCriterion { field, value, reason });
        let unit = [
            ("pa1", self.pa1),
            ("pa2", self.pa2),
            ("pe1", self.pe1),
            ("pe2", self.pe2),
            ("pf", self.pf),
            ("ta1", self.ta1),
            ("ta2", self.ta2),
            ("ot", self.ot),
            ("ut", self.ut),
        ];
        for (field, value) in unit {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return bad(field, value, "must be within [0, 1]");
            }
        }
        for (field, value) in [("te1", self.te1), ("te2", self.te2), ("tf", self.tf)] {
            if !value.is_finite() || value <= 0.0 {
                return bad(field, value, "must be finite and > 0");
            }
        }
        let mut warnings = Vec::new();
        let sum = self.priority_sum();
        if (sum - 1.0).abs() > 1e-9 {
            warnings.push(format!(
                "priorities pa1+pa2+pe1+pe2+pf sum to {sum}, not 1"
            ));
        }
        Ok(warnings)
    }
}

/// Load one of the five bundled experiment settings.
pub fn load_preset(n: u32) -> Result<UserCriteria, MetricsError> {
    let row = n
        .checked_sub(1)
        .and_then(|i| PRESET_PRIORITIES.get(i as usize))
        .ok_or(MetricsError::UnknownPreset(n))?;
    Ok(UserCriteria {
        pa1: row[0],
        pa2: row[1],
        pe1: row[2],
        pe2: row[3],
        pf: row[4],
        ta1: DEFAULT_TA1,
        ta2: DEFAULT_TA2,
        te1: DEFAULT_TE1,
        te2: DEFAULT_TE2,
        tf: DEFAULT_TF,
        ot: DEFAULT_GAP_THRESHOLD,
        ut: DEFAULT_GAP_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_settings_table() {
        let p1 = load_preset(1).unwrap();
        assert_eq!((p1.pa1, p1.pa2, p1.pe1, p1.pe2, p1.pf), (0.4, 0.6, 0.0, 0.0, 0.0));
        let p4 = load_preset(4).unwrap();
        assert_eq!((p4.pa1, p4.pa2, p4.pe1, p4.pe2, p4.pf), (0.0, 0.0, 0.5, 0.5, 0.0));
        assert_eq!(load_preset(0), Err(MetricsError::UnknownPreset(0)));
        assert_eq!(load_preset(6), Err(MetricsError::UnknownPreset(6)));
    }

    #[test]
    fn every_preset_is_valid_and_sums_to_one() {
        for n in 1..=5 {
            let c = load_preset(n).unwrap();
            assert!(c.validate().unwrap().is_empty(), "preset {n}");
            assert!((c.priority_sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn unnormalized_priorities_warn_but_pass() {
        let c = UserCriteria {
            pa1: 0.9,
            pa2: 0.9,
            ..load_preset(1).unwrap()
        };
        assert_eq!(c.validate().unwrap().len(), 1);
    }

    #[test]
    fn rejects_nonpositive_thresholds_and_bad_accuracy() {
        let c = UserCriteria {
            tf: 0.0,
            ..load_preset(1).unwrap()
        };
        assert!(c.validate().is_err());
        let m = MetricsRecord {
            a1: 1.2,
            a2: 0.5,
            e1: 0.0,
            e2: 0.0,
            f: 1.0,
            p: 0,
        };
        assert!(m.validate().is_err());
        assert!(MetricsRecord { a1: 0.3, f: f64::NAN, ..m }.validate().is_err());
    }

    #[test]
    fn metrics_accept_long_field_aliases() {
        let m: MetricsRecord =
            serde_json::from_str(r#"{"a1":0.8,"a2":0.7,"e1":0,"e2":0,"fps":100,"params":5}"#).unwrap();
        assert_eq!(m.f, 100.0);
        assert_eq!(m.p, 5);
    }
}
