mod common;

use std::fs;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use archdisco::arch_ir::parse_arch;
use archdisco::evaluator::protocol::{encode_line, AdapterMessage, AdapterMetrics, SessionParser, Terminal};
use archdisco::evaluator::{
    evaluate_adapter, evaluate_surrogate, E1Phase, EnergySource, EvalConfig, EvalError, EvalMode,
};
use archdisco::llm::ValidatedArch;
use archdisco::scoring::PowerProfile;
use common::{fixtures, random_document};

const STUB: &str = env!("CARGO_BIN_EXE_archdisco-stub-adapter");

fn arch(name: &str) -> ValidatedArch {
    let text = fs::read_to_string(fixtures().join("arch/valid").join(name)).unwrap();
    ValidatedArch::from_graph(parse_arch(&text).unwrap()).unwrap()
}

fn adapter_cfg(args: &[&str]) -> EvalConfig {
    let mut command = vec![STUB.to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    EvalConfig {
        mode: EvalMode::Adapter,
        command,
        timeout_secs: 30,
        ..EvalConfig::default()
    }
}

fn run(args: &[&str]) -> Result<archdisco::evaluator::EvalResult, EvalError> {
    evaluate_adapter(&arch("02_one_conv.json"), &adapter_cfg(args), &PowerProfile::default())
}

#[test]
fn half_hour_training_gives_expected_e1() {
    let r = run(&["--train-hours", "0.5"]).unwrap();
    assert!((r.metrics.e1 - 0.3555).abs() <= 1e-12, "{}", r.metrics.e1);
    assert_eq!(r.metrics.p, 448);
    assert_eq!(r.energy_source, EnergySource::Profile);
    assert_eq!((r.metrics.a1, r.metrics.a2, r.metrics.f), (0.6, 0.55, 1200.0));
    // two progress lines and the result
    assert_eq!(r.transcript.len(), 3);
}

#[test]
fn reported_energies_take_precedence() {
    let r = run(&["--e1-kwh", "0.25", "--e2-kwh", "0.001"]).unwrap();
    assert_eq!((r.metrics.e1, r.metrics.e2), (0.25, 0.001));
    assert_eq!(r.energy_source, EnergySource::Adapter);
}

#[test]
fn train_eval_phase_uses_the_extension_field() {
    let mut cfg = adapter_cfg(&["--train-eval-hours", "0.1"]);
    cfg.e1_phase = E1Phase::TrainEval;
    let r = evaluate_adapter(&arch("02_one_conv.json"), &cfg, &PowerProfile::default()).unwrap();
    assert!((r.metrics.e1 - 1.58 * 0.1 * 450.0 / 1000.0).abs() <= 1e-12);

    // without it, E1 falls back to the training phase
    let mut cfg = adapter_cfg(&[]);
    cfg.e1_phase = E1Phase::TrainEval;
    let r = evaluate_adapter(&arch("02_one_conv.json"), &cfg, &PowerProfile::default()).unwrap();
    assert!((r.metrics.e1 - 0.3555).abs() <= 1e-12);
}

#[test]
fn garbage_output_is_a_protocol_violation() {
    match run(&["--mode", "garbage"]).unwrap_err() {
        EvalError::ProtocolViolation { line, .. } => assert_eq!(line, 1),
        other => panic!("{other}"),
    }
}

#[test]
fn reported_error_is_forwarded() {
    match run(&["--mode", "error"]).unwrap_err() {
        EvalError::AdapterReportedError(m) => assert!(m.contains("out of memory")),
        other => panic!("{other}"),
    }
}

#[test]
fn crash_without_result_is_a_protocol_violation() {
    let err = run(&["--mode", "crash"]).unwrap_err();
    assert_eq!(err.class(), "ProtocolViolation");
    assert!(err.to_string().contains("simulated crash"), "{err}");
}

#[test]
fn hanging_adapter_times_out() {
    let mut cfg = adapter_cfg(&["--mode", "hang"]);
    cfg.timeout_secs = 1;
    let start = Instant::now();
    let err = evaluate_adapter(&arch("02_one_conv.json"), &cfg, &PowerProfile::default()).unwrap_err();
    assert_eq!(err, EvalError::AdapterTimeout(1));
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn missing_program_fails_to_launch() {
    let cfg = EvalConfig {
        mode: EvalMode::Adapter,
        command: vec!["/nonexistent/trainer-adapter".into()],
        ..EvalConfig::default()
    };
    let err = evaluate_adapter(&arch("02_one_conv.json"), &cfg, &PowerProfile::default()).unwrap_err();
    assert_eq!(err.class(), "AdapterLaunchFailed");
}

#[test]
fn adapter_params_agree_with_ir_on_the_valid_corpus() {
    let dir = fixtures().join("arch/valid");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "expected.json")
        .collect();
    names.sort();
    for name in names {
        let a = arch(&name);
        let r = evaluate_adapter(&a, &adapter_cfg(&[]), &PowerProfile::default()).unwrap();
        assert_eq!(r.metrics.p, a.report.total_params, "{name}");
    }
}

#[test]
fn surrogate_examples() {
    let cfg = EvalConfig::default();
    let p = PowerProfile::default();
    let r = evaluate_surrogate(&arch("21_no_params.json"), &cfg, &p);
    assert_eq!(r.metrics.p, 0);
    assert!((r.metrics.a1 - 0.20).abs() <= 1e-12);
    assert!((r.metrics.a2 - 0.17).abs() <= 1e-12);

    let ten_k = r#"{"input_shape":[1,1,999],"num_classes":10,"layers":[
        {"id":"in","kind":"Input"},{"id":"f","kind":"Flatten","inputs":["in"]},
        {"id":"d","kind":"Dense","inputs":["f"],"units":10},{"id":"out","kind":"Output","inputs":["d"]}]}"#;
    let a = ValidatedArch::from_graph(parse_arch(ten_k).unwrap()).unwrap();
    assert_eq!(a.report.total_params, 10_000);
    let r = evaluate_surrogate(&a, &cfg, &p);
    assert!((r.metrics.a1 - (0.20 + 0.15 * 2f64.ln())).abs() <= 1e-12);
    assert!((r.metrics.a1 - 0.3040).abs() < 5e-5);
}

#[test]
fn surrogate_is_deterministic() {
    let a = arch("04_vgg_small.json");
    let cfg = EvalConfig::default();
    let p = PowerProfile::default();
    assert_eq!(evaluate_surrogate(&a, &cfg, &p), evaluate_surrogate(&a, &cfg, &p));
}

fn adapter_metrics() -> impl Strategy<Value = AdapterMetrics> {
    (
        0.0..=1.0f64,
        0.0..=1.0f64,
        proptest::option::of(0.0..10.0f64),
        proptest::option::of(0.0..1.0f64),
        0.0..100.0f64,
        0.0..1.0f64,
        1e-3..1e6f64,
        0u64..(1 << 40),
        proptest::option::of(0.0..1.0f64),
    )
        .prop_map(
            |(a1, a2, e1_kwh, e2_kwh, train_hours, eval_hours, fps, params, train_eval_hours)| AdapterMetrics {
                a1,
                a2,
                e1_kwh,
                e2_kwh,
                train_hours,
                eval_hours,
                fps,
                params,
                train_eval_hours,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn protocol_result_round_trips(m in adapter_metrics(), progress in 0usize..4) {
        let mut parser = SessionParser::new();
        for k in 0..progress {
            let line = encode_line(&AdapterMessage::Progress { epoch: k as u32 + 1, train_acc: 0.1, val_acc: 0.1 });
            prop_assert_eq!(parser.push(&line).unwrap(), None);
        }
        let line = encode_line(&AdapterMessage::Result { metrics: m.clone() });
        prop_assert_eq!(parser.push(&line).unwrap(), Some(Terminal::Result(m)));
        prop_assert_eq!(parser.progress.len(), progress);
    }

    #[test]
    fn surrogate_accuracy_grows_with_size(seed in any::<u64>()) {
        let doc = random_document(seed);
        let a = ValidatedArch::from_graph(parse_arch(&doc.to_string()).unwrap()).unwrap();
        let r = evaluate_surrogate(&a, &EvalConfig::default(), &PowerProfile::default());
        prop_assert!(r.metrics.validate().is_ok());
        prop_assert!(r.metrics.a2 <= r.metrics.a1);
        let expected = (0.20 + 0.15 * (1.0 + r.metrics.p as f64 / 1e4).ln()).min(0.95);
        prop_assert!((r.metrics.a1 - expected).abs() <= 1e-12);
    }
}
