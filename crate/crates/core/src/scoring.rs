//! Combined model effectiveness and energy / CO2 accounting.

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricsRecord, UserCriteria};

/// Power usage effectiveness multiplier applied to measured draw.
pub const PUE: f64 = 1.58;
/// Pounds of CO2 emitted per kWh-PUE.
pub const CO2_LBS_PER_KWH: f64 = 0.954;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringWeights {
    pub aw: f64,
    pub fw: f64,
    pub ew: f64,
}

impl ScoringWeights {
    /// Weights inherited from the user's priorities:
    /// `aw = (pa1+pa2)/2`, `fw = pf`, `ew = (pe1+pe2)/2`.
    pub fn from_criteria(c: &UserCriteria) -> Self {
        ScoringWeights {
            aw: (c.pa1 + c.pa2) / 2.0,
            fw: c.pf,
            ew: (c.pe1 + c.pe2) / 2.0,
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        ScoringWeights {
            aw: self.aw * lambda,
            fw: self.fw * lambda,
            ew: self.ew * lambda,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.aw, self.fw, self.ew]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }
}

/// Combined effectiveness with the decomposition it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cm: f64,
    pub ta: f64,
    pub va: f64,
    pub nf: f64,
    pub t_ne: f64,
    pub v_ne: f64,
    pub weights: ScoringWeights,
}

impl ScoreReport {
    /// `aw·(ta+va) + fw·nf − ew·(t_ne+v_ne)` from the stored components.
    pub fn recompute(&self) -> f64 {
        cm_formula(&self.weights, self.ta, self.va, self.nf, self.t_ne, self.v_ne)
    }
}

fn cm_formula(w: &ScoringWeights, ta: f64, va: f64, nf: f64, t_ne: f64, v_ne: f64) -> f64 {
    w.aw * (ta + va) + w.fw * nf - w.ew * (t_ne + v_ne)
}

fn ratio01(value: f64, threshold: f64) -> f64 {
    (value / threshold).clamp(0.0, 1.0)
}

/// FPS and energies are normalized by their thresholds and clamped to [0, 1],
/// so `cm` lies in `[-2·ew, 2·aw + fw]`.
pub fn combined_effectiveness(
    m: &MetricsRecord,
    c: &UserCriteria,
    w: &ScoringWeights,
) -> ScoreReport {
    let nf = ratio01(m.f, c.tf);
    let t_ne = ratio01(m.e1, c.te1);
    let v_ne = ratio01(m.e2, c.te2);
    ScoreReport {
        cm: cm_formula(w, m.a1, m.a2, nf, t_ne, v_ne),
        ta: m.a1,
        va: m.a2,
        nf,
        t_ne,
        v_ne,
        weights: *w,
    }
}

/// Average power draws in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    #[serde(rename = "cpu_watts")]
    pub p_c: f64,
    #[serde(rename = "ram_watts")]
    pub p_r: f64,
    #[serde(rename = "gpu_watts")]
    pub p_g: f64,
    #[serde(rename = "gpu_count")]
    pub g: u32,
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile {
            p_c: 100.0,
            p_r: 50.0,
            p_g: 300.0,
            g: 1,
        }
    }
}

impl PowerProfile {
    pub fn total_watts(&self) -> f64 {
        self.p_c + self.p_r + f64::from(self.g) * self.p_g
    }

    pub fn is_valid(&self) -> bool {
        [self.p_c, self.p_r, self.p_g]
            .iter()
            .all(|p| p.is_finite() && *p >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub p_t: f64,
    pub co2e: f64,
}

impl EnergyReport {
    pub fn from_kwh(p_t: f64) -> Self {
        EnergyReport {
            p_t,
            co2e: co2_lbs(p_t),
        }
    }
}

/// `1.58·t·(p_c + p_r + g·p_g) / 1000` for `t` hours.
pub fn energy_kwh_pue(hours: f64, p: &PowerProfile) -> f64 {
    PUE * hours * p.total_watts() / 1000.0
}

pub fn co2_lbs(p_t: f64) -> f64 {
    CO2_LBS_PER_KWH * p_t
}

/// Energy of inferring one image at `fps` frames per second.
pub fn inference_energy_per_image(fps: f64, p: &PowerProfile) -> f64 {
    if fps <= 0.0 {
        return 0.0;
    }
    energy_kwh_pue(1.0 / fps / 3600.0, p)
}
