use proptest::prelude::*;

use archdisco::metrics::{load_preset, MetricsRecord, UserCriteria};
use archdisco::scoring::{
    co2_lbs, combined_effectiveness, energy_kwh_pue, inference_energy_per_image, PowerProfile, ScoringWeights,
};

fn criteria() -> UserCriteria {
    load_preset(1).unwrap()
}

fn metrics_strategy() -> impl Strategy<Value = MetricsRecord> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..0.01f64, 0.0..1e-4f64, 0.0..60_000.0f64, 0u64..10_000_000).prop_map(
        |(a1, a2, e1, e2, f, p)| MetricsRecord { a1, a2, e1, e2, f, p },
    )
}

fn weights_strategy() -> impl Strategy<Value = ScoringWeights> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(aw, fw, ew)| ScoringWeights { aw, fw, ew })
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

#[test]
fn accuracy_only_weights() {
    let m = MetricsRecord {
        a1: 0.8,
        a2: 0.7,
        e1: 0.5,
        e2: 0.5,
        f: 10.0,
        p: 1,
    };
    let w = ScoringWeights { aw: 1.0, fw: 0.0, ew: 0.0 };
    assert_eq!(combined_effectiveness(&m, &criteria(), &w).cm, 1.5);
}

#[test]
fn fps_above_threshold_clamps() {
    let c = UserCriteria { tf: 20_000.0, ..criteria() };
    let m = MetricsRecord {
        a1: 0.9,
        a2: 0.9,
        e1: 0.0,
        e2: 0.0,
        f: 30_000.0,
        p: 1,
    };
    let r = combined_effectiveness(&m, &c, &ScoringWeights { aw: 0.0, fw: 0.3, ew: 0.0 });
    assert_eq!(r.nf, 1.0);
    assert_eq!(r.cm, 0.3);
}

#[test]
fn default_profile_energy_and_co2() {
    let p = energy_kwh_pue(1.0, &PowerProfile::default());
    assert!((p - 0.711).abs() <= 1e-12);
    assert_eq!(co2_lbs(0.711) / 0.711, 0.954);
    assert!((co2_lbs(0.711) - 0.678294).abs() <= 1e-12);
    assert!((co2_lbs(0.7041) - 0.6717).abs() <= 5e-4);
}

#[test]
fn half_hour_training_energy() {
    assert!((energy_kwh_pue(0.5, &PowerProfile::default()) - 0.3555).abs() <= 1e-12);
}

#[test]
fn zero_hours_is_zero_energy() {
    assert_eq!(energy_kwh_pue(0.0, &PowerProfile::default()), 0.0);
    assert_eq!(inference_energy_per_image(0.0, &PowerProfile::default()), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn cm_stays_in_range(m in metrics_strategy(), w in weights_strategy()) {
        let r = combined_effectiveness(&m, &criteria(), &w);
        let eps = 1e-12;
        prop_assert!(r.cm >= -2.0 * w.ew - eps);
        prop_assert!(r.cm <= 2.0 * w.aw + w.fw + eps);
        for x in [r.nf, r.t_ne, r.v_ne] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn report_recomputes_its_own_cm(m in metrics_strategy(), w in weights_strategy()) {
        let r = combined_effectiveness(&m, &criteria(), &w);
        prop_assert_eq!(r.recompute(), r.cm);
    }

    #[test]
    fn cm_is_linear_in_the_weights(m in metrics_strategy(), w1 in weights_strategy(), w2 in weights_strategy()) {
        let c = criteria();
        let sum = ScoringWeights { aw: w1.aw + w2.aw, fw: w1.fw + w2.fw, ew: w1.ew + w2.ew };
        let lhs = combined_effectiveness(&m, &c, &sum).cm;
        let rhs = combined_effectiveness(&m, &c, &w1).cm + combined_effectiveness(&m, &c, &w2).cm;
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn scaling_weights_keeps_the_ranking(
        ms in prop::collection::vec(metrics_strategy(), 2..12),
        w in weights_strategy(),
        lambda in 0.01..100.0f64,
    ) {
        let c = criteria();
        let scaled = w.scaled(lambda);
        let a: Vec<f64> = ms.iter().map(|m| combined_effectiveness(m, &c, &w).cm).collect();
        let b: Vec<f64> = ms.iter().map(|m| combined_effectiveness(m, &c, &scaled).cm).collect();
        for i in 0..ms.len() {
            prop_assert!((b[i] - lambda * a[i]).abs() <= 1e-9 * lambda.max(1.0));
            for j in 0..ms.len() {
                // order is preserved wherever the gap exceeds rounding noise
                if a[i] - a[j] > 1e-9 {
                    prop_assert!(b[i] > b[j]);
                }
            }
        }
    }

    #[test]
    fn energy_is_linear_in_hours(t in 0.0..1000.0f64, k in 0.0..10.0f64) {
        let p = PowerProfile::default();
        let lhs = energy_kwh_pue(k * t, &p);
        let rhs = k * energy_kwh_pue(t, &p);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }

    #[test]
    fn co2_over_energy_is_the_emission_factor(p_t in 1e-6..1e6f64) {
        // exact at the reference value; elsewhere within one rounding step
        prop_assert!(ulps_apart(co2_lbs(p_t) / p_t, 0.954) <= 1);
    }
}
