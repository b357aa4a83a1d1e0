//! Architecture intermediate representation.
//!
//! A candidate network is a DAG of typed layers serialized as a strict JSON
//! document. Parsing checks structure (ids, references, arity, acyclicity);
//! [`infer_shapes`] checks the tensor algebra and produces parameter and
//! FLOP counts.

mod document;
mod shape;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use document::{parse_arch, to_document, to_json_string};
pub use shape::{count_params, infer_shapes, Shape, ShapeReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchError {
    #[error("MalformedDocument at line {line}, column {column}: {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("SchemaViolation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("DanglingReference at layer {layer}: input '{missing}' is not declared")]
    DanglingReference { layer: String, missing: String },
    #[error("CycleDetected at layer {layer}")]
    CycleDetected { layer: String },
    #[error("NegativeDimension at layer {layer}: {detail}")]
    NegativeDimension { layer: String, detail: String },
    #[error("ShapeMismatch at layer {layer}: {detail}")]
    ShapeMismatch { layer: String, detail: String },
    #[error("RankError at layer {layer}: {detail}")]
    RankError { layer: String, detail: String },
}

impl ArchError {
    /// Stable class name, used in prompts, logs and the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            ArchError::MalformedDocument { .. } => "MalformedDocument",
            ArchError::SchemaViolation { .. } => "SchemaViolation",
            ArchError::DanglingReference { .. } => "DanglingReference",
            ArchError::CycleDetected { .. } => "CycleDetected",
            ArchError::NegativeDimension { .. } => "NegativeDimension",
            ArchError::ShapeMismatch { .. } => "ShapeMismatch",
            ArchError::RankError { .. } => "RankError",
        }
    }

    /// The offending layer id, when the error is attributable to one.
    pub fn layer(&self) -> Option<&str> {
        match self {
            ArchError::DanglingReference { layer, .. }
            | ArchError::CycleDetected { layer }
            | ArchError::NegativeDimension { layer, .. }
            | ArchError::ShapeMismatch { layer, .. }
            | ArchError::RankError { layer, .. } => Some(layer),
            _ => None,
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ArchError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "same" => Some(Padding::Same),
            "valid" => Some(Padding::Valid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationFn {
    Relu,
    Softmax,
    Sigmoid,
    Tanh,
}

impl ActivationFn {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationFn::Relu => "relu",
            ActivationFn::Softmax => "softmax",
            ActivationFn::Sigmoid => "sigmoid",
            ActivationFn::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(ActivationFn::Relu),
            "softmax" => Some(ActivationFn::Softmax),
            "sigmoid" => Some(ActivationFn::Sigmoid),
            "tanh" => Some(ActivationFn::Tanh),
            _ => None,
        }
    }
}

/// Layer kind together with its kind-specific attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    Conv2D {
        filters: u64,
        kernel_h: u64,
        kernel_w: u64,
        stride_h: u64,
        stride_w: u64,
        padding: Padding,
    },
    Dense {
        units: u64,
    },
    MaxPool2D {
        pool_h: u64,
        pool_w: u64,
        stride: u64,
        padding: Padding,
    },
    BatchNorm,
    Dropout {
        rate: f64,
    },
    Activation {
        name: ActivationFn,
    },
    Add,
    Concat,
    Flatten,
    GlobalAveragePool,
    Output,
}

impl LayerKind {
    pub const NAMES: [&'static str; 12] = [
        "Input",
        "Conv2D",
        "Dense",
        "MaxPool2D",
        "BatchNorm",
        "Dropout",
        "Activation",
        "Add",
        "Concat",
        "Flatten",
        "GlobalAveragePool",
        "Output",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::Conv2D { .. } => "Conv2D",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::MaxPool2D { .. } => "MaxPool2D",
            LayerKind::BatchNorm => "BatchNorm",
            LayerKind::Dropout { .. } => "Dropout",
            LayerKind::Activation { .. } => "Activation",
            LayerKind::Add => "Add",
            LayerKind::Concat => "Concat",
            LayerKind::Flatten => "Flatten",
            LayerKind::GlobalAveragePool => "GlobalAveragePool",
            LayerKind::Output => "Output",
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2D { .. } | LayerKind::Dense { .. } | LayerKind::BatchNorm
        )
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            LayerKind::Input => n == 0,
            LayerKind::Add | LayerKind::Concat => n >= 2,
            _ => n == 1,
        }
    }

    fn arity_text(&self) -> &'static str {
        match self {
            LayerKind::Input => "no inputs",
            LayerKind::Add | LayerKind::Concat => "at least 2 inputs",
            _ => "exactly 1 input",
        }
    }

    /// Attribute range checks; the message names the offending attribute.
    fn check_attributes(&self) -> Result<(), (&'static str, String)> {
        fn positive(name: &'static str, v: u64) -> Result<(), (&'static str, String)> {
            if v == 0 {
                Err((name, format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        }
        match *self {
            LayerKind::Conv2D {
                filters,
                kernel_h,
                kernel_w,
                stride_h,
                stride_w,
                ..
            } => {
                positive("filters", filters)?;
                positive("kernel_h", kernel_h)?;
                positive("kernel_w", kernel_w)?;
                positive("stride_h", stride_h)?;
                positive("stride_w", stride_w)
            }
            LayerKind::Dense { units } => positive("units", units),
            LayerKind::MaxPool2D {
                pool_h,
                pool_w,
                stride,
                ..
            } => {
                positive("pool_h", pool_h)?;
                positive("pool_w", pool_w)?;
                positive("stride", stride)
            }
            LayerKind::Dropout { rate } => {
                if rate.is_finite() && (0.0..1.0).contains(&rate) {
                    Ok(())
                } else {
                    Err(("rate", format!("rate must be in [0, 1), got {rate}")))
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    /// Free-form weight initializer name (carried for the AWI instruction).
    pub initializer: Option<String>,
    /// Free-form regularizer name (carried for the AR/RR instructions).
    pub regularizer: Option<String>,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        LayerSpec {
            id: id.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            initializer: None,
            regularizer: None,
        }
    }
}

/// A structurally well-formed architecture: unique ids, resolved references,
/// correct arity, a single input and output, and no cycles.
///
/// Construct through [`ArchGraph::new`] or [`parse_arch`]; the invariants hold
/// for every value of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchGraph {
    input_shape: (u64, u64, u64),
    num_classes: u64,
    layers: Vec<LayerSpec>,
}

impl ArchGraph {
    pub fn new(
        input_shape: (u64, u64, u64),
        num_classes: u64,
        layers: Vec<LayerSpec>,
    ) -> Result<Self, ArchError> {
        let (h, w, c) = input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(ArchError::schema(
                "input_shape",
                "every dimension must be >= 1",
            ));
        }
        if num_classes == 0 {
            return Err(ArchError::schema("num_classes", "must be >= 1"));
        }
        if layers.is_empty() {
            return Err(ArchError::schema("layers", "must not be empty"));
        }

        let mut index: HashMap<String, usize> = HashMap::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            if layer.id.is_empty() {
                return Err(ArchError::schema(format!("layers[{i}].id"), "must not be empty"));
            }
            if index.insert(layer.id.clone(), i).is_some() {
                return Err(ArchError::schema(
                    format!("layers[{i}].id"),
                    format!("duplicate layer id '{}'", layer.id),
                ));
            }
            if let Err((attr, msg)) = layer.kind.check_attributes() {
                return Err(ArchError::schema(format!("layers[{i}].{attr}"), msg));
            }
            if !layer.kind.arity_ok(layer.inputs.len()) {
                return Err(ArchError::schema(
                    format!("layers[{i}].inputs"),
                    format!(
                        "{} layer '{}' takes {}, got {}",
                        layer.kind,
                        layer.id,
                        layer.kind.arity_text(),
                        layer.inputs.len()
                    ),
                ));
            }
        }

        let count = |pred: fn(&LayerKind) -> bool| layers.iter().filter(|l| pred(&l.kind)).count();
        let inputs = count(|k| matches!(k, LayerKind::Input));
        let outputs = count(|k| matches!(k, LayerKind::Output));
        if inputs != 1 {
            return Err(ArchError::schema(
                "layers",
                format!("exactly one Input layer required, found {inputs}"),
            ));
        }
        if outputs != 1 {
            return Err(ArchError::schema(
                "layers",
                format!("exactly one Output layer required, found {outputs}"),
            ));
        }

        for layer in &layers {
            for src in &layer.inputs {
                if !index.contains_key(src.as_str()) {
                    return Err(ArchError::DanglingReference {
                        layer: layer.id.clone(),
                        missing: src.clone(),
                    });
                }
            }
        }

        let graph = ArchGraph {
            input_shape,
            num_classes,
            layers,
        };
        graph.topo_indices()?;
        graph.check_output_reachability(&index)?;
        Ok(graph)
    }

    pub fn input_shape(&self) -> (u64, u64, u64) {
        self.input_shape
    }

    pub fn num_classes(&self) -> u64 {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv2D { .. }))
            .count()
    }

    /// Layers in a topological order. Ties are broken by position in the
    /// layer list, so the order is deterministic.
    pub fn topological_order(&self) -> Vec<&LayerSpec> {
        self.topo_indices()
            .expect("ArchGraph invariant: acyclic")
            .into_iter()
            .map(|i| &self.layers[i])
            .collect()
    }

    fn positions(&self) -> HashMap<&str, usize> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect()
    }

    fn topo_indices(&self) -> Result<Vec<usize>, ArchError> {
        let pos = self.positions();
        let n = self.layers.len();
        let mut indegree = vec![0usize; n];
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, layer) in self.layers.iter().enumerate() {
            for src in &layer.inputs {
                let j = pos[src.as_str()];
                indegree[i] += 1;
                consumers[j].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &k in &consumers[i] {
                indegree[k] -= 1;
                if indegree[k] == 0 {
                    ready.insert(k);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(ArchError::CycleDetected {
                layer: self.layers[stuck].id.clone(),
            });
        }
        Ok(order)
    }

    /// Output must be a sink, and every layer must contribute to it.
    fn check_output_reachability(&self, index: &HashMap<String, usize>) -> Result<(), ArchError> {
        let out = self
            .layers
            .iter()
            .position(|l| matches!(l.kind, LayerKind::Output))
            .expect("one Output layer");
        if let Some(consumer) = self
            .layers
            .iter()
            .find(|l| l.inputs.iter().any(|s| *s == self.layers[out].id))
        {
            return Err(ArchError::schema(
                format!("layers[{}].inputs", index[&consumer.id]),
                format!("Output layer '{}' cannot feed other layers", self.layers[out].id),
            ));
        }
        let mut seen = vec![false; self.layers.len()];
        let mut stack = vec![out];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            for src in &self.layers[i].inputs {
                stack.push(index[src]);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ArchError::schema(
                format!("layers[{i}]"),
                format!("layer '{}' does not feed the Output layer", self.layers[i].id),
            ));
        }
        Ok(())
    }
}
