use super::{resolve_energy, EvalConfig, EvalError, EvalResult, Evaluator};
use crate::llm::ValidatedArch;
use crate::metrics::MetricsRecord;
use crate::scoring::PowerProfile;

/// Closed-form stand-in for training. Not a performance model: the formulas
/// only give deterministic, monotone-in-size metrics for loop tests.
///
/// - `a1 = min(0.95, 0.20 + 0.15·ln(1 + P/1e4))`
/// - `a2 = max(0, a1 − 0.03 − 0.01·max(0, conv_layers − 8))`
/// - `train_hours = 1e-7·P·epochs`
/// - `fps = 1e9 / max(flops, 1)`
/// - train-set and validation-set evaluation take `images / fps` seconds
pub fn evaluate_surrogate(arch: &ValidatedArch, cfg: &EvalConfig, power: &PowerProfile) -> EvalResult {
    let params = arch.report.total_params;
    let p = params as f64;
    let a1 = (0.20 + 0.15 * (1.0 + p / 1e4).ln()).min(0.95);
    let depth_penalty = arch.graph.conv_layer_count().saturating_sub(8) as f64;
    let a2 = (a1 - 0.03 - 0.01 * depth_penalty).max(0.0);
    let fps = 1e9 / (arch.report.total_flops.max(1) as f64);

    let train_hours = 1e-7 * p * f64::from(cfg.epochs);
    let train_eval_hours = cfg.train_images as f64 / fps / 3600.0;
    let eval_hours = cfg.val_images as f64 / fps / 3600.0;
    let (energy, e1, e2, energy_source) = resolve_energy(
        train_hours,
        train_eval_hours,
        eval_hours,
        None,
        None,
        cfg.e1_phase,
        power,
    );

    EvalResult {
        metrics: MetricsRecord {
            a1,
            a2,
            e1,
            e2,
            f: fps,
            p: params,
        },
        train_hours,
        train_eval_hours,
        eval_hours,
        energy,
        energy_source,
        hardware_tag: None,
        transcript: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    cfg: EvalConfig,
    power: PowerProfile,
}

impl SurrogateEvaluator {
    pub fn new(cfg: EvalConfig, power: PowerProfile) -> Self {
        SurrogateEvaluator { cfg, power }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&mut self, arch: &ValidatedArch) -> Result<EvalResult, EvalError> {
        Ok(evaluate_surrogate(arch, &self.cfg, &self.power))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_ir::parse_arch;

    fn arch(doc: &str) -> ValidatedArch {
        ValidatedArch::from_graph(parse_arch(doc).unwrap()).unwrap()
    }

    const FLAT_ONLY: &str = r#"{"input_shape":[2,5,1],"num_classes":10,"layers":[
        {"id":"in","kind":"Input"},
        {"id":"flat","kind":"Flatten","inputs":["in"]},
        {"id":"out","kind":"Output","inputs":["flat"]}]}"#;

    #[test]
    fn zero_parameters() {
        let r = evaluate_surrogate(&arch(FLAT_ONLY), &EvalConfig::default(), &PowerProfile::default());
        assert!((r.metrics.a1 - 0.20).abs() < 1e-15);
        assert!((r.metrics.a2 - 0.17).abs() < 1e-15);
        assert_eq!(r.metrics.p, 0);
        assert_eq!(r.metrics.f, 1e9);
        assert_eq!(r.train_hours, 0.0);
    }

    #[test]
    fn ten_thousand_parameters() {
        // Dense 999 -> 10 has (999+1)*10 = 10^4 parameters
        let doc = r#"{"input_shape":[1,1,999],"num_classes":10,"layers":[
            {"id":"in","kind":"Input"},
            {"id":"flat","kind":"Flatten","inputs":["in"]},
            {"id":"fc","kind":"Dense","inputs":["flat"],"units":10},
            {"id":"out","kind":"Output","inputs":["fc"]}]}"#;
        let a = arch(doc);
        assert_eq!(a.report.total_params, 10_000);
        let r = evaluate_surrogate(&a, &EvalConfig::default(), &PowerProfile::default());
        assert!((r.metrics.a1 - (0.20 + 0.15 * 2f64.ln())).abs() < 1e-15);
        assert!((r.metrics.a1 - 0.3040).abs() < 1e-4);
    }

    #[test]
    fn deterministic() {
        let a = arch(FLAT_ONLY);
        let cfg = EvalConfig::default();
        let p = PowerProfile::default();
        assert_eq!(evaluate_surrogate(&a, &cfg, &p), evaluate_surrogate(&a, &cfg, &p));
    }
}
