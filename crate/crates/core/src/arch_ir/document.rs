use serde_json::{Map, Value};

use super::{ActivationFn, ArchError, ArchGraph, LayerKind, LayerSpec, Padding};

const TOP_LEVEL_FIELDS: [&str; 3] = ["input_shape", "num_classes", "layers"];
const COMMON_FIELDS: [&str; 5] = ["id", "kind", "inputs", "initializer", "regularizer"];

/// Parse a JSON architecture document into a structurally valid graph.
///
/// Field names are exact. Unknown top-level fields, unknown layer kinds and
/// attributes that do not belong to a layer's kind are all schema violations.
/// `stride_h`/`stride_w` default to 1, `padding` to `valid`, and a pooling
/// `stride` to `pool_h`.
pub fn parse_arch(text: &str) -> Result<ArchGraph, ArchError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ArchError::MalformedDocument {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_value(&doc)
}

pub(crate) fn from_value(doc: &Value) -> Result<ArchGraph, ArchError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| ArchError::schema("$", "document must be a JSON object"))?;
    for key in obj.keys() {
        if !TOP_LEVEL_FIELDS.contains(&key.as_str()) {
            return Err(ArchError::schema(key.clone(), "unknown top-level field"));
        }
    }

    let shape = obj
        .get("input_shape")
        .ok_or_else(|| ArchError::schema("input_shape", "missing field"))?
        .as_array()
        .ok_or_else(|| ArchError::schema("input_shape", "must be an array [H, W, C]"))?;
    if shape.len() != 3 {
        return Err(ArchError::schema(
            "input_shape",
            format!("must have exactly 3 entries, got {}", shape.len()),
        ));
    }
    let mut dims = [0u64; 3];
    for (i, v) in shape.iter().enumerate() {
        dims[i] = v
            .as_u64()
            .ok_or_else(|| ArchError::schema(format!("input_shape[{i}]"), "must be a positive integer"))?;
    }
    let num_classes = required_u64(obj, "num_classes", "num_classes")?;

    let layer_values = obj
        .get("layers")
        .ok_or_else(|| ArchError::schema("layers", "missing field"))?
        .as_array()
        .ok_or_else(|| ArchError::schema("layers", "must be an array"))?;
    let layers = layer_values
        .iter()
        .enumerate()
        .map(|(i, v)| parse_layer(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    ArchGraph::new((dims[0], dims[1], dims[2]), num_classes, layers)
}

fn required_u64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<u64, ArchError> {
    obj.get(key)
        .ok_or_else(|| ArchError::schema(path, "missing attribute"))?
        .as_u64()
        .ok_or_else(|| ArchError::schema(path, "must be a non-negative integer"))
}

fn optional_u64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<u64>, ArchError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| ArchError::schema(path, "must be a non-negative integer")),
    }
}

fn optional_str<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Option<&'a str>, ArchError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_str()
            .map(Some)
            .ok_or_else(|| ArchError::schema(path, "must be a string")),
    }
}

fn padding_attr(obj: &Map<String, Value>, base: &str) -> Result<Padding, ArchError> {
    let path = format!("{base}.padding");
    match optional_str(obj, "padding", &path)? {
        None => Ok(Padding::Valid),
        Some(s) => Padding::parse(s)
            .ok_or_else(|| ArchError::schema(path, format!("unknown padding '{s}' (same|valid)"))),
    }
}

fn parse_layer(i: usize, v: &Value) -> Result<LayerSpec, ArchError> {
    let base = format!("layers[{i}]");
    let obj = v
        .as_object()
        .ok_or_else(|| ArchError::schema(base.clone(), "layer must be an object"))?;
    let at = |field: &str| format!("{base}.{field}");

    let id = obj
        .get("id")
        .ok_or_else(|| ArchError::schema(at("id"), "missing field"))?
        .as_str()
        .ok_or_else(|| ArchError::schema(at("id"), "must be a string"))?
        .to_string();
    let kind_name = obj
        .get("kind")
        .ok_or_else(|| ArchError::schema(at("kind"), "missing field"))?
        .as_str()
        .ok_or_else(|| ArchError::schema(at("kind"), "must be a string"))?;
    let inputs = match obj.get("inputs") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ArchError::schema(format!("{base}.inputs[{j}]"), "must be a string"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(ArchError::schema(at("inputs"), "must be an array of layer ids")),
    };

    let (kind, attrs): (LayerKind, &[&str]) = match kind_name {
        "Input" => (LayerKind::Input, &[]),
        "Conv2D" => (
            LayerKind::Conv2D {
                filters: required_u64(obj, "filters", &at("filters"))?,
                kernel_h: required_u64(obj, "kernel_h", &at("kernel_h"))?,
                kernel_w: required_u64(obj, "kernel_w", &at("kernel_w"))?,
                stride_h: optional_u64(obj, "stride_h", &at("stride_h"))?.unwrap_or(1),
                stride_w: optional_u64(obj, "stride_w", &at("stride_w"))?.unwrap_or(1),
                padding: padding_attr(obj, &base)?,
            },
            &["filters", "kernel_h", "kernel_w", "stride_h", "stride_w", "padding"],
        ),
        "Dense" => (
            LayerKind::Dense {
                units: required_u64(obj, "units", &at("units"))?,
            },
            &["units"],
        ),
        "MaxPool2D" => {
            let pool_h = required_u64(obj, "pool_h", &at("pool_h"))?;
            (
                LayerKind::MaxPool2D {
                    pool_h,
                    pool_w: required_u64(obj, "pool_w", &at("pool_w"))?,
                    stride: optional_u64(obj, "stride", &at("stride"))?.unwrap_or(pool_h),
                    padding: padding_attr(obj, &base)?,
                },
                &["pool_h", "pool_w", "stride", "padding"],
            )
        }
        "BatchNorm" => (LayerKind::BatchNorm, &[]),
        "Dropout" => {
            let rate = obj
                .get("rate")
                .ok_or_else(|| ArchError::schema(at("rate"), "missing attribute"))?
                .as_f64()
                .ok_or_else(|| ArchError::schema(at("rate"), "must be a number"))?;
            (LayerKind::Dropout { rate }, &["rate"])
        }
        "Activation" => {
            let name = optional_str(obj, "name", &at("name"))?
                .ok_or_else(|| ArchError::schema(at("name"), "missing attribute"))?;
            let name = ActivationFn::parse(name).ok_or_else(|| {
                ArchError::schema(
                    at("name"),
                    format!("unknown activation '{name}' (relu|softmax|sigmoid|tanh)"),
                )
            })?;
            (LayerKind::Activation { name }, &["name"])
        }
        "Add" => (LayerKind::Add, &[]),
        "Concat" => (LayerKind::Concat, &[]),
        "Flatten" => (LayerKind::Flatten, &[]),
        "GlobalAveragePool" => (LayerKind::GlobalAveragePool, &[]),
        "Output" => (LayerKind::Output, &[]),
        other => {
            return Err(ArchError::schema(
                at("kind"),
                format!(
                    "unknown layer kind '{other}' (expected one of {})",
                    LayerKind::NAMES.join(", ")
                ),
            ))
        }
    };

    for key in obj.keys() {
        if !COMMON_FIELDS.contains(&key.as_str()) && !attrs.contains(&key.as_str()) {
            return Err(ArchError::schema(
                at(key),
                format!("attribute not allowed on {kind_name} layer"),
            ));
        }
    }

    Ok(LayerSpec {
        id,
        kind,
        inputs,
        initializer: optional_str(obj, "initializer", &at("initializer"))?.map(str::to_string),
        regularizer: optional_str(obj, "regularizer", &at("regularizer"))?.map(str::to_string),
    })
}

/// Serialize a graph back to the document format, attributes spelled out in
/// full (defaults included).
pub fn to_document(g: &ArchGraph) -> Value {
    let (h, w, c) = g.input_shape();
    let layers: Vec<Value> = g.layers().iter().map(layer_to_value).collect();
    let mut doc = Map::new();
    doc.insert("input_shape".into(), Value::from(vec![h, w, c]));
    doc.insert("num_classes".into(), Value::from(g.num_classes()));
    doc.insert("layers".into(), Value::Array(layers));
    Value::Object(doc)
}

pub fn to_json_string(g: &ArchGraph) -> String {
    serde_json::to_string_pretty(&to_document(g)).expect("document serializes")
}

fn layer_to_value(l: &LayerSpec) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::from(l.id.clone()));
    m.insert("kind".into(), Value::from(l.kind.name()));
    m.insert("inputs".into(), Value::from(l.inputs.clone()));
    match l.kind {
        LayerKind::Conv2D {
            filters,
            kernel_h,
            kernel_w,
            stride_h,
            stride_w,
            padding,
        } => {
            m.insert("filters".into(), filters.into());
            m.insert("kernel_h".into(), kernel_h.into());
            m.insert("kernel_w".into(), kernel_w.into());
            m.insert("stride_h".into(), stride_h.into());
            m.insert("stride_w".into(), stride_w.into());
            m.insert("padding".into(), padding.as_str().into());
        }
        LayerKind::Dense { units } => {
            m.insert("units".into(), units.into());
        }
        LayerKind::MaxPool2D {
            pool_h,
            pool_w,
            stride,
            padding,
        } => {
            m.insert("pool_h".into(), pool_h.into());
            m.insert("pool_w".into(), pool_w.into());
            m.insert("stride".into(), stride.into());
            m.insert("padding".into(), padding.as_str().into());
        }
        LayerKind::Dropout { rate } => {
            m.insert("rate".into(), rate.into());
        }
        LayerKind::Activation { name } => {
            m.insert("name".into(), name.as_str().into());
        }
        _ => {}
    }
    if let Some(init) = &l.initializer {
        m.insert("initializer".into(), init.clone().into());
    }
    if let Some(reg) = &l.regularizer {
        m.insert("regularizer".into(), reg.clone().into());
    }
    Value::Object(m)
}
