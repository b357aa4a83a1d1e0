use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ArchError, ArchGraph, LayerKind, Padding};

/// Output shape of a layer: a spatial feature map or a flat feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<u64>", try_from = "Vec<u64>")]
pub enum Shape {
    Spatial { height: u64, width: u64, channels: u64 },
    Flat(u64),
}

impl Shape {
    /// Size of the last axis.
    pub fn channels(&self) -> u64 {
        match *self {
            Shape::Spatial { channels, .. } => channels,
            Shape::Flat(n) => n,
        }
    }

    pub fn elements(&self) -> u64 {
        match *self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => height.saturating_mul(width).saturating_mul(channels),
            Shape::Flat(n) => n,
        }
    }
}

impl From<Shape> for Vec<u64> {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Spatial {
                height,
                width,
                channels,
            } => vec![height, width, channels],
            Shape::Flat(n) => vec![n],
        }
    }
}

impl TryFrom<Vec<u64>> for Shape {
    type Error = String;

    fn try_from(v: Vec<u64>) -> Result<Self, Self::Error> {
        match v.as_slice() {
            [h, w, c] => Ok(Shape::Spatial {
                height: *h,
                width: *w,
                channels: *c,
            }),
            [n] => Ok(Shape::Flat(*n)),
            _ => Err(format!("shape must have rank 1 or 3, got {}", v.len())),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// Result of shape inference. Per-layer maps are keyed by layer id so the
/// report does not depend on the order layers were listed in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub shapes: BTreeMap<String, Shape>,
    pub layer_params: BTreeMap<String, u64>,
    pub total_params: u64,
    /// Forward-pass FLOPs of Conv2D and Dense layers, one multiply-accumulate
    /// counted as 2 ops. Bias additions and elementwise layers are not counted.
    pub total_flops: u64,
}

/// Windowed output extent along one axis.
fn window_dim(input: u64, window: u64, stride: u64, padding: Padding) -> Option<u64> {
    match padding {
        Padding::Same => Some(input.div_ceil(stride)),
        Padding::Valid => (input >= window).then(|| (input - window) / stride + 1),
    }
}

pub fn infer_shapes(g: &ArchGraph) -> Result<ShapeReport, ArchError> {
    let mut shapes: HashMap<&str, Shape> = HashMap::with_capacity(g.layers().len());
    let mut layer_params = BTreeMap::new();
    let mut total_params = 0u64;
    let mut total_flops = 0u64;

    for layer in g.topological_order() {
        let id = layer.id.as_str();
        let operands: Vec<Shape> = layer.inputs.iter().map(|s| shapes[s.as_str()]).collect();
        let rank_err = |detail: String| ArchError::RankError {
            layer: id.to_string(),
            detail,
        };
        let spatial_input = || match operands[0] {
            Shape::Spatial {
                height,
                width,
                channels,
            } => Ok((height, width, channels)),
            flat => Err(rank_err(format!(
                "{} expects a spatial HxWxC input, got rank-1 shape {flat}",
                layer.kind
            ))),
        };

        let (out, params, flops) = match layer.kind {
            LayerKind::Input => {
                let (height, width, channels) = g.input_shape();
                (
                    Shape::Spatial {
                        height,
                        width,
                        channels,
                    },
                    0,
                    0,
                )
            }
            LayerKind::Conv2D {
                filters,
                kernel_h,
                kernel_w,
                stride_h,
                stride_w,
                padding,
            } => {
                let (h, w, c) = spatial_input()?;
                let oh = window_dim(h, kernel_h, stride_h, padding);
                let ow = window_dim(w, kernel_w, stride_w, padding);
                let (Some(oh), Some(ow)) = (oh, ow) else {
                    return Err(ArchError::NegativeDimension {
                        layer: id.to_string(),
                        detail: format!(
                            "{kernel_h}x{kernel_w} kernel with valid padding on a {h}x{w} feature map"
                        ),
                    });
                };
                let fan_in = kernel_h.saturating_mul(kernel_w).saturating_mul(c);
                let params = fan_in.saturating_add(1).saturating_mul(filters);
                let flops = [2, fan_in, filters, oh, ow]
                    .into_iter()
                    .fold(1u64, u64::saturating_mul);
                (
                    Shape::Spatial {
                        height: oh,
                        width: ow,
                        channels: filters,
                    },
                    params,
                    flops,
                )
            }
            LayerKind::MaxPool2D {
                pool_h,
                pool_w,
                stride,
                padding,
            } => {
                let (h, w, c) = spatial_input()?;
                let oh = window_dim(h, pool_h, stride, padding);
                let ow = window_dim(w, pool_w, stride, padding);
                let (Some(oh), Some(ow)) = (oh, ow) else {
                    return Err(ArchError::NegativeDimension {
                        layer: id.to_string(),
                        detail: format!(
                            "{pool_h}x{pool_w} pool with valid padding on a {h}x{w} feature map"
                        ),
                    });
                };
                (
                    Shape::Spatial {
                        height: oh,
                        width: ow,
                        channels: c,
                    },
                    0,
                    0,
                )
            }
            LayerKind::Dense { units } => {
                let Shape::Flat(features) = operands[0] else {
                    return Err(rank_err(format!(
                        "Dense expects a flat input (add Flatten or GlobalAveragePool), got {}",
                        operands[0]
                    )));
                };
                (
                    Shape::Flat(units),
                    features.saturating_add(1).saturating_mul(units),
                    features.saturating_mul(units).saturating_mul(2),
                )
            }
            // gamma, beta, moving mean, moving variance
            LayerKind::BatchNorm => (operands[0], operands[0].channels().saturating_mul(4), 0),
            LayerKind::Dropout { .. } | LayerKind::Activation { .. } => (operands[0], 0, 0),
            LayerKind::Flatten => (Shape::Flat(operands[0].elements()), 0, 0),
            LayerKind::GlobalAveragePool => {
                let (_, _, c) = spatial_input()?;
                (Shape::Flat(c), 0, 0)
            }
            LayerKind::Add => {
                let first = operands[0];
                if let Some((k, other)) = operands.iter().enumerate().skip(1).find(|(_, s)| **s != first) {
                    return Err(ArchError::ShapeMismatch {
                        layer: id.to_string(),
                        detail: format!(
                            "Add operands must have identical shapes: '{}' is {first}, '{}' is {other}",
                            layer.inputs[0], layer.inputs[k]
                        ),
                    });
                }
                (first, 0, 0)
            }
            LayerKind::Concat => (concat_shape(id, &layer.inputs, &operands)?, 0, 0),
            LayerKind::Output => match operands[0] {
                Shape::Flat(n) if n == g.num_classes() => (operands[0], 0, 0),
                Shape::Flat(n) => {
                    return Err(ArchError::ShapeMismatch {
                        layer: id.to_string(),
                        detail: format!("Output expects {} class scores, got {n}", g.num_classes()),
                    })
                }
                spatial => {
                    return Err(rank_err(format!(
                        "Output expects a flat vector of {} class scores, got {spatial}",
                        g.num_classes()
                    )))
                }
            },
        };

        shapes.insert(id, out);
        layer_params.insert(id.to_string(), params);
        total_params = total_params.saturating_add(params);
        total_flops = total_flops.saturating_add(flops);
    }

    Ok(ShapeReport {
        shapes: shapes.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        layer_params,
        total_params,
        total_flops,
    })
}

fn concat_shape(id: &str, names: &[String], operands: &[Shape]) -> Result<Shape, ArchError> {
    let mismatch = |detail: String| ArchError::ShapeMismatch {
        layer: id.to_string(),
        detail,
    };
    match operands[0] {
        Shape::Spatial { height, width, .. } => {
            let mut channels = 0;
            for (name, s) in names.iter().zip(operands) {
                match *s {
                    Shape::Spatial {
                        height: h,
                        width: w,
                        channels: c,
                    } if h == height && w == width => channels = u64::saturating_add(channels, c),
                    other => {
                        return Err(mismatch(format!(
                            "Concat operands must share spatial dims {height}x{width}: '{name}' is {other}"
                        )))
                    }
                }
            }
            Ok(Shape::Spatial {
                height,
                width,
                channels,
            })
        }
        Shape::Flat(_) => {
            let mut features = 0;
            for (name, s) in names.iter().zip(operands) {
                match *s {
                    Shape::Flat(n) => features = u64::saturating_add(features, n),
                    other => {
                        return Err(mismatch(format!(
                            "Concat cannot mix flat and spatial operands: '{name}' is {other}"
                        )))
                    }
                }
            }
            Ok(Shape::Flat(features))
        }
    }
}

pub fn count_params(g: &ArchGraph) -> Result<u64, ArchError> {
    infer_shapes(g).map(|r| r.total_params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_ir::{ActivationFn, LayerSpec};

    fn conv(filters: u64, k: u64, padding: Padding) -> LayerKind {
        LayerKind::Conv2D {
            filters,
            kernel_h: k,
            kernel_w: k,
            stride_h: 1,
            stride_w: 1,
            padding,
        }
    }

    fn graph(shape: (u64, u64, u64), classes: u64, body: &[(&str, LayerKind, &[&str])]) -> Result<ArchGraph, ArchError> {
        let mut layers = vec![LayerSpec::new("in", LayerKind::Input, &[])];
        for (id, kind, inputs) in body {
            layers.push(LayerSpec::new(*id, kind.clone(), inputs));
        }
        ArchGraph::new(shape, classes, layers)
    }

    #[test]
    fn maxpool_valid_halves_input() {
        let g = graph(
            (32, 32, 3),
            768,
            &[
                (
                    "pool",
                    LayerKind::MaxPool2D {
                        pool_h: 2,
                        pool_w: 2,
                        stride: 2,
                        padding: Padding::Valid,
                    },
                    &["in"],
                ),
                ("flat", LayerKind::Flatten, &["pool"]),
                ("out", LayerKind::Output, &["flat"]),
            ],
        )
        .unwrap();
        let r = infer_shapes(&g).unwrap();
        assert_eq!(
            r.shapes["pool"],
            Shape::Spatial {
                height: 16,
                width: 16,
                channels: 3
            }
        );
        assert_eq!(r.total_params, 0);
    }

    #[test]
    fn large_kernel_on_small_map_is_negative_dimension() {
        let g = graph(
            (3, 3, 8),
            10,
            &[
                ("c5", conv(4, 5, Padding::Valid), &["in"]),
                ("flat", LayerKind::Flatten, &["c5"]),
                ("fc", LayerKind::Dense { units: 10 }, &["flat"]),
                ("out", LayerKind::Output, &["fc"]),
            ],
        )
        .unwrap();
        let err = infer_shapes(&g).unwrap_err();
        assert_eq!(err.class(), "NegativeDimension");
        assert_eq!(err.layer(), Some("c5"));
    }

    #[test]
    fn same_padding_uses_ceiling() {
        let g = graph(
            (7, 5, 1),
            48,
            &[
                (
                    "c",
                    LayerKind::Conv2D {
                        filters: 4,
                        kernel_h: 3,
                        kernel_w: 3,
                        stride_h: 2,
                        stride_w: 2,
                        padding: Padding::Same,
                    },
                    &["in"],
                ),
                ("flat", LayerKind::Flatten, &["c"]),
                ("out", LayerKind::Output, &["flat"]),
            ],
        )
        .unwrap();
        // ceil(7/2) = 4, ceil(5/2) = 3
        let r = infer_shapes(&g).unwrap();
        assert_eq!(r.shapes["flat"], Shape::Flat(4 * 3 * 4));
    }

    #[test]
    fn add_of_different_channel_counts_mismatches() {
        let g = graph(
            (16, 16, 3),
            10,
            &[
                ("a", conv(32, 3, Padding::Same), &["in"]),
                ("b", conv(64, 3, Padding::Same), &["in"]),
                ("sum", LayerKind::Add, &["a", "b"]),
                ("gap", LayerKind::GlobalAveragePool, &["sum"]),
                ("fc", LayerKind::Dense { units: 10 }, &["gap"]),
                ("out", LayerKind::Output, &["fc"]),
            ],
        )
        .unwrap();
        assert_eq!(infer_shapes(&g).unwrap_err().class(), "ShapeMismatch");
    }

    #[test]
    fn concat_sums_channels_and_checks_spatial_dims() {
        let body: Vec<(&str, LayerKind, &[&str])> = vec![
            ("a", conv(32, 3, Padding::Same), &["in"]),
            ("b", conv(64, 1, Padding::Same), &["in"]),
            ("cat", LayerKind::Concat, &["a", "b"]),
            ("gap", LayerKind::GlobalAveragePool, &["cat"]),
            ("fc", LayerKind::Dense { units: 10 }, &["gap"]),
            ("out", LayerKind::Output, &["fc"]),
        ];
        let r = infer_shapes(&graph((16, 16, 3), 10, &body).unwrap()).unwrap();
        assert_eq!(r.shapes["gap"], Shape::Flat(96));

        let mut body = body;
        body[0].1 = conv(32, 3, Padding::Valid);
        let err = infer_shapes(&graph((16, 16, 3), 10, &body).unwrap()).unwrap_err();
        assert_eq!(err.class(), "ShapeMismatch");
    }

    #[test]
    fn dense_on_spatial_tensor_is_rank_error() {
        let g = graph(
            (8, 8, 3),
            10,
            &[
                ("fc", LayerKind::Dense { units: 10 }, &["in"]),
                ("out", LayerKind::Output, &["fc"]),
            ],
        )
        .unwrap();
        assert_eq!(infer_shapes(&g).unwrap_err().class(), "RankError");
    }

    #[test]
    fn parameter_counts_follow_closed_forms() {
        let g = graph(
            (32, 32, 3),
            10,
            &[
                ("c1", conv(16, 3, Padding::Same), &["in"]),
                ("bn", LayerKind::BatchNorm, &["c1"]),
                ("act", LayerKind::Activation { name: ActivationFn::Relu }, &["bn"]),
                ("gap", LayerKind::GlobalAveragePool, &["act"]),
                ("fc1", LayerKind::Dense { units: 10 }, &["gap"]),
                ("fc2", LayerKind::Dense { units: 10 }, &["fc1"]),
                ("drop", LayerKind::Dropout { rate: 0.5 }, &["fc2"]),
                ("out", LayerKind::Output, &["drop"]),
            ],
        )
        .unwrap();
        let r = infer_shapes(&g).unwrap();
        assert_eq!(r.layer_params["c1"], 448);
        assert_eq!(r.layer_params["bn"], 64);
        assert_eq!(r.layer_params["fc1"], 170);
        assert_eq!(r.layer_params["fc2"], 110);
        assert_eq!(r.total_params, 448 + 64 + 170 + 110);
        assert_eq!(
            r.total_flops,
            2 * 3 * 3 * 3 * 16 * 32 * 32 + 2 * 16 * 10 + 2 * 10 * 10
        );
    }

    #[test]
    fn unparameterized_graph_counts_zero() {
        let g = graph(
            (2, 5, 1),
            10,
            &[
                ("flat", LayerKind::Flatten, &["in"]),
                ("out", LayerKind::Output, &["flat"]),
            ],
        )
        .unwrap();
        assert_eq!(count_params(&g).unwrap(), 0);
    }

    #[test]
    fn output_width_must_match_class_count() {
        let g = graph(
            (4, 4, 1),
            10,
            &[
                ("flat", LayerKind::Flatten, &["in"]),
                ("out", LayerKind::Output, &["flat"]),
            ],
        )
        .unwrap();
        assert_eq!(infer_shapes(&g).unwrap_err().class(), "ShapeMismatch");
    }
}
