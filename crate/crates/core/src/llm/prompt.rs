use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PromptRecord, TaskSpec};
use crate::expert::RefinedCommand;
use crate::metrics::MetricsRecord;

/// Bumped whenever the wording below changes.
pub const PROMPT_TEMPLATE_VERSION: &str = "1";

const SYSTEM_TEXT: &str = "You are a neural network architect. You design image classification \
networks and answer with exactly one JSON architecture document that follows the given schema. \
Do not invent layer kinds or attributes.";

const SCHEMA_TEXT: &str = r#"Respond with a single JSON object in a ```json code fence:
{"input_shape": [H, W, C], "num_classes": N, "layers": [{"id": str, "kind": str, "inputs": [str, ...], ...attributes}]}
Layer kinds and attributes:
- Input: no inputs, no attributes (exactly one)
- Conv2D: filters, kernel_h, kernel_w, stride_h (default 1), stride_w (default 1), padding ("same"|"valid", default "valid")
- MaxPool2D: pool_h, pool_w, stride (default pool_h), padding
- Dense: units (input must be flat)
- BatchNorm, Flatten, GlobalAveragePool: no attributes
- Dropout: rate in [0, 1)
- Activation: name ("relu"|"softmax"|"sigmoid"|"tanh")
- Add: two or more inputs of identical shape
- Concat: two or more inputs with equal height and width; channels are summed
- Output: exactly one, fed by a flat vector of num_classes values
Any layer may carry "initializer" and "regularizer" strings.
No other top-level fields are allowed."#;

/// What the loop knows about the previous attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    /// Last architecture document the model produced, valid or not.
    pub previous_document: Option<String>,
    pub previous_metrics: Option<MetricsRecord>,
    /// Why the previous response could not be used.
    pub error: Option<String>,
    pub error_layer: Option<String>,
}

fn priority(w: f64) -> String {
    format!("{:?}", (w * 1e4).round() / 1e4)
}

/// Deterministic prompt text for one iteration.
pub fn build_prompt(
    ts: &TaskSpec,
    rc: &RefinedCommand,
    prev: Option<&PromptContext>,
    temperature: f64,
    iteration: usize,
) -> PromptRecord {
    let [h, w, c] = ts.input_shape;
    let mut u = String::new();
    let _ = writeln!(u, "Task: design a neural network for the {} dataset.", ts.dataset);
    let _ = writeln!(u, "Input shape (height x width x channels): {h}x{w}x{c}");
    let _ = writeln!(u, "Number of classes: {}", ts.num_classes);
    if !ts.constraints.trim().is_empty() {
        let _ = writeln!(u, "Constraints: {}", ts.constraints.trim());
    }

    if let Some(p) = prev {
        if let Some(doc) = &p.previous_document {
            let _ = write!(u, "\nPrevious architecture:\n```json\n{}\n```\n", doc.trim());
        }
        if let Some(m) = &p.previous_metrics {
            let _ = writeln!(u, "\nMeasured metrics of the last working architecture:");
            let _ = writeln!(u, "- training accuracy: {}", m.a1);
            let _ = writeln!(u, "- validation accuracy: {}", m.a2);
            let _ = writeln!(u, "- training energy (kWh-PUE): {}", m.e1);
            let _ = writeln!(u, "- validation energy (kWh-PUE): {}", m.e2);
            let _ = writeln!(u, "- inference FPS: {}", m.f);
            let _ = writeln!(u, "- parameters: {}", m.p);
        }
        if let Some(err) = &p.error {
            let _ = writeln!(u, "\nThe previous response could not be used: {err}");
            if let Some(layer) = &p.error_layer {
                let _ = writeln!(u, "Offending layer: {layer}");
            }
            let _ = writeln!(u, "Correct this error in the new architecture.");
        }
    }

    if rc.is_empty() {
        if prev.is_none() {
            let _ = writeln!(u, "\nPropose an initial architecture for this task.");
        } else {
            let _ = writeln!(u, "\nPropose an improved architecture for this task.");
        }
    } else {
        let _ = writeln!(
            u,
            "\nModify the previous architecture by applying these instructions, most important first:"
        );
        for (n, wi) in rc.iter().enumerate() {
            let _ = writeln!(
                u,
                "{}. {} (priority {})",
                n + 1,
                wi.code.description(),
                priority(wi.weight)
            );
        }
    }

    let _ = write!(u, "\n{SCHEMA_TEXT}\n");

    PromptRecord {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: u,
        temperature,
        iteration,
    }
}
