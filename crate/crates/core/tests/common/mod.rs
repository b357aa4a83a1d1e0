#![allow(dead_code)]

//! Independent oracles and generators shared by the integration tests.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use archdisco::expert::{Instruction, InstructionVector};
use archdisco::metrics::{MetricsRecord, UserCriteria};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

// ---------------------------------------------------------------- graphs

/// Random valid architecture documents, valid by construction.
pub struct GraphGen {
    rng: ChaCha8Rng,
    layers: Vec<Value>,
    next: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum GShape {
    Spatial(u64, u64, u64),
    Flat(u64),
}

impl GraphGen {
    pub fn new(seed: u64) -> Self {
        GraphGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            layers: Vec::new(),
            next: 0,
        }
    }

    fn id(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn push(&mut self, mut layer: Value, inputs: &[&str]) -> String {
        let id = layer["id"].as_str().unwrap().to_string();
        if !inputs.is_empty() {
            layer["inputs"] = json!(inputs);
        }
        self.layers.push(layer);
        id
    }

    fn conv(&mut self, src: &str, s: GShape, same_only: bool, filters: Option<u64>) -> (String, GShape) {
        let GShape::Spatial(h, w, _) = s else { unreachable!() };
        let kh = self.rng.random_range(1..=5u64);
        let kw = if self.rng.random_bool(0.7) { kh } else { self.rng.random_range(1..=5u64) };
        let sh = if same_only { 1 } else { self.rng.random_range(1..=2u64) };
        let sw = if same_only { 1 } else { self.rng.random_range(1..=2u64) };
        let fits = h >= kh && w >= kw;
        let same = same_only || !fits || self.rng.random_bool(0.5);
        let f = filters.unwrap_or_else(|| self.rng.random_range(1..=24u64));
        let id = self.id("conv");
        let (oh, ow) = if same {
            (h.div_ceil(sh), w.div_ceil(sw))
        } else {
            ((h - kh) / sh + 1, (w - kw) / sw + 1)
        };
        let mut layer = json!({"id": id, "kind": "Conv2D", "filters": f, "kernel_h": kh, "kernel_w": kw,
                               "padding": if same { "same" } else { "valid" }});
        // exercise the defaults sometimes
        if sh != 1 || self.rng.random_bool(0.5) {
            layer["stride_h"] = json!(sh);
        }
        if sw != 1 || self.rng.random_bool(0.5) {
            layer["stride_w"] = json!(sw);
        }
        if self.rng.random_bool(0.1) {
            layer["initializer"] = json!("he_normal");
        }
        let id = self.push(layer, &[src]);
        (id, GShape::Spatial(oh, ow, f))
    }

    fn spatial_block(&mut self, src: String, s: GShape) -> (String, GShape) {
        let GShape::Spatial(h, w, c) = s else { unreachable!() };
        match self.rng.random_range(0..8) {
            0 | 1 => self.conv(&src, s, false, None),
            2 if h >= 2 && w >= 2 => {
                let p = self.rng.random_range(2..=3u64).min(h).min(w);
                let stride = self.rng.random_range(1..=p);
                let id = self.id("pool");
                let same = self.rng.random_bool(0.3);
                let (oh, ow) = if same {
                    (h.div_ceil(stride), w.div_ceil(stride))
                } else {
                    ((h - p) / stride + 1, (w - p) / stride + 1)
                };
                let id = self.push(
                    json!({"id": id, "kind": "MaxPool2D", "pool_h": p, "pool_w": p, "stride": stride,
                           "padding": if same { "same" } else { "valid" }}),
                    &[&src],
                );
                (id, GShape::Spatial(oh, ow, c))
            }
            3 => {
                let id = self.id("bn");
                (self.push(json!({"id": id, "kind": "BatchNorm"}), &[&src]), s)
            }
            4 => {
                let id = self.id("act");
                let name = ["relu", "tanh", "sigmoid"][self.rng.random_range(0..3)];
                (self.push(json!({"id": id, "kind": "Activation", "name": name}), &[&src]), s)
            }
            5 => {
                // residual: same-padded unit-stride conv keeping channels, then Add
                let (branch, bs) = self.conv(&src, s, true, Some(c));
                let id = self.id("add");
                let id = self.push(json!({"id": id, "kind": "Add"}), &[&src, &branch]);
                (id, bs)
            }
            6 => {
                let (a, GShape::Spatial(_, _, ca)) = self.conv(&src, s, true, None) else { unreachable!() };
                let (b, GShape::Spatial(_, _, cb)) = self.conv(&src, s, true, None) else { unreachable!() };
                let id = self.id("cat");
                let id = self.push(json!({"id": id, "kind": "Concat"}), &[&a, &b, &src]);
                (id, GShape::Spatial(h, w, ca + cb + c))
            }
            _ => {
                let id = self.id("drop");
                let rate = self.rng.random_range(0..10) as f64 / 10.0;
                (self.push(json!({"id": id, "kind": "Dropout", "rate": rate}), &[&src]), s)
            }
        }
    }

    pub fn document(mut self) -> Value {
        let h = self.rng.random_range(1..=24u64);
        let w = self.rng.random_range(1..=24u64);
        let c = self.rng.random_range(1..=4u64);
        let classes = self.rng.random_range(1..=12u64);
        let mut cur = self.push(json!({"id": "input", "kind": "Input"}), &[]);
        let mut shape = GShape::Spatial(h, w, c);
        for _ in 0..self.rng.random_range(0..=7) {
            (cur, shape) = self.spatial_block(cur, shape);
        }
        let GShape::Spatial(fh, fw, fc) = shape else { unreachable!() };
        let id = self.id("flat");
        let flat = if self.rng.random_bool(0.5) {
            shape = GShape::Flat(fh * fw * fc);
            self.push(json!({"id": id, "kind": "Flatten"}), &[&cur])
        } else {
            shape = GShape::Flat(fc);
            self.push(json!({"id": id, "kind": "GlobalAveragePool"}), &[&cur])
        };
        cur = flat;
        for _ in 0..self.rng.random_range(0..=2) {
            let units = self.rng.random_range(1..=32u64);
            let id = self.id("dense");
            cur = self.push(json!({"id": id, "kind": "Dense", "units": units}), &[&cur]);
            shape = GShape::Flat(units);
        }
        if shape != GShape::Flat(classes) {
            let id = self.id("logits");
            cur = self.push(json!({"id": id, "kind": "Dense", "units": classes}), &[&cur]);
        }
        if self.rng.random_bool(0.3) {
            let id = self.id("softmax");
            cur = self.push(json!({"id": id, "kind": "Activation", "name": "softmax"}), &[&cur]);
        }
        self.push(json!({"id": "output", "kind": "Output"}), &[&cur]);
        if self.rng.random_bool(0.5) {
            let mut layers = std::mem::take(&mut self.layers);
            layers.shuffle(&mut self.rng);
            self.layers = layers;
        }
        json!({"input_shape": [h, w, c], "num_classes": classes, "layers": self.layers})
    }
}

pub fn random_document(seed: u64) -> Value {
    GraphGen::new(seed).document()
}

/// Same layers, shuffled.
pub fn permuted(doc: &Value, seed: u64) -> Value {
    let mut out = doc.clone();
    let layers = out["layers"].as_array_mut().unwrap();
    layers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

// ---------------------------------------------------------------- params oracle

/// Parameter count by materializing every weight tensor's shape and
/// multiplying out its dimensions. Shapes are resolved by repeated sweeps
/// over the layer list rather than a topological sort.
pub fn brute_force_params(doc: &Value) -> u64 {
    let layers = doc["layers"].as_array().unwrap();
    let input: Vec<u64> = doc["input_shape"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let mut shapes: HashMap<String, Vec<u64>> = HashMap::new();
    let mut tensors: Vec<Vec<u64>> = Vec::new();
    let u = |l: &Value, k: &str| l[k].as_u64();
    let out_dim = |n: u64, k: u64, s: u64, same: bool| if same { n.div_ceil(s) } else { (n - k) / s + 1 };

    while shapes.len() < layers.len() {
        let before = shapes.len();
        for l in layers {
            let id = l["id"].as_str().unwrap().to_string();
            if shapes.contains_key(&id) {
                continue;
            }
            let ins: Option<Vec<Vec<u64>>> = l
                .get("inputs")
                .and_then(Value::as_array)
                .map(|a| a.iter().map(|s| shapes.get(s.as_str().unwrap()).cloned()).collect())
                .unwrap_or(Some(Vec::new()));
            let Some(ins) = ins else { continue };
            let same = l.get("padding").and_then(Value::as_str) == Some("same");
            let shape = match l["kind"].as_str().unwrap() {
                "Input" => input.clone(),
                "Conv2D" => {
                    let (kh, kw, f) = (u(l, "kernel_h").unwrap(), u(l, "kernel_w").unwrap(), u(l, "filters").unwrap());
                    let (sh, sw) = (u(l, "stride_h").unwrap_or(1), u(l, "stride_w").unwrap_or(1));
                    let x = &ins[0];
                    tensors.push(vec![kh, kw, x[2], f]);
                    tensors.push(vec![f]);
                    vec![out_dim(x[0], kh, sh, same), out_dim(x[1], kw, sw, same), f]
                }
                "MaxPool2D" => {
                    let (ph, pw) = (u(l, "pool_h").unwrap(), u(l, "pool_w").unwrap());
                    let s = u(l, "stride").unwrap_or(ph);
                    let x = &ins[0];
                    vec![out_dim(x[0], ph, s, same), out_dim(x[1], pw, s, same), x[2]]
                }
                "Dense" => {
                    let units = u(l, "units").unwrap();
                    tensors.push(vec![ins[0][0], units]);
                    tensors.push(vec![units]);
                    vec![units]
                }
                "BatchNorm" => {
                    let c = *ins[0].last().unwrap();
                    // gamma, beta, moving mean, moving variance
                    for _ in 0..4 {
                        tensors.push(vec![c]);
                    }
                    ins[0].clone()
                }
                "Flatten" => vec![ins[0].iter().product()],
                "GlobalAveragePool" => vec![*ins[0].last().unwrap()],
                "Concat" => {
                    let mut s = ins[0].clone();
                    *s.last_mut().unwrap() = ins.iter().map(|x| *x.last().unwrap()).sum();
                    s
                }
                _ => ins[0].clone(),
            };
            shapes.insert(id, shape);
        }
        assert!(shapes.len() > before, "oracle could not resolve shapes");
    }
    tensors.iter().map(|t| t.iter().product::<u64>()).sum()
}

// ---------------------------------------------------------------- rule oracle

type Cond = fn(&MetricsRecord, &UserCriteria) -> bool;
type Amount = fn(&UserCriteria) -> f64;

/// The rule book written out as data: condition, amount, target codes.
pub const RULE_TABLE: [(Cond, Amount, &[&str]); 7] = [
    (|m, c| m.a1 < c.ta1, |c| c.pa1, &["ACL", "ADL", "AMK", "ASC"]),
    (|m, c| m.a2 < c.ta2, |c| c.pa2, &["ACL", "ADL", "AMK", "ASC"]),
    (|m, c| m.e1 > c.te1, |c| c.pe1, &["AD", "AWI", "RCL", "RK", "RSC"]),
    (|m, c| m.e2 > c.te2, |c| c.pe2, &["AD", "RCL", "RK", "RDL"]),
    (|m, c| m.f < c.tf, |c| c.pf, &["AD", "RK", "RSC"]),
    (|m, c| m.a1 - m.a2 > c.ot, |c| c.pa1, &["ADL", "RCL", "RK", "RN", "AR"]),
    (|m, c| m.a2 - m.a1 > c.ut, |c| c.pa2, &["RD", "ACL", "AMK", "ADL", "AMN", "ASC", "RR"]),
];

pub const CODES: [&str; 15] = [
    "ACL", "ASC", "ADL", "RCL", "RSC", "RDL", "AD", "AMK", "AWI", "AR", "RK", "RD", "AMN", "RN", "RR",
];

pub fn oracle_instructions(m: &MetricsRecord, c: &UserCriteria) -> BTreeMap<&'static str, f64> {
    let mut out: BTreeMap<&'static str, f64> = CODES.iter().map(|k| (*k, 0.0)).collect();
    for (cond, amount, targets) in RULE_TABLE {
        if cond(m, c) {
            for t in targets {
                *out.get_mut(t).unwrap() += amount(c);
            }
        }
    }
    out
}

pub fn vector_as_map(v: &InstructionVector) -> BTreeMap<&'static str, f64> {
    Instruction::ALL.iter().map(|i| (i.code(), v.get(*i))).collect()
}

/// Conflict pairs, by code.
pub const PAIRS: [(&str, &str); 7] = [
    ("ACL", "RCL"),
    ("ASC", "RSC"),
    ("ADL", "RDL"),
    ("AD", "RD"),
    ("AMK", "RK"),
    ("AR", "RR"),
    ("AMN", "RN"),
];

pub fn conflicting(a: &str, b: &str) -> bool {
    PAIRS.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
}

/// Enumerate every subset of the positive entries, drop subsets containing a
/// conflict pair, and keep the one that is lexicographically greatest when
/// entries are ranked by weight (ties by canonical position).
pub fn oracle_resolve(weights: &[f64; 15]) -> Vec<(&'static str, f64)> {
    let mut ranked: Vec<usize> = (0..15).filter(|&i| weights[i] > 0.0).collect();
    ranked.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
    let n = ranked.len();
    assert!(n <= 16, "subset oracle is exponential");
    let mut best: Option<Vec<bool>> = None;
    for mask in 0u32..(1 << n) {
        let pick: Vec<bool> = (0..n).map(|k| mask & (1 << k) != 0).collect();
        let chosen: Vec<&str> = (0..n).filter(|&k| pick[k]).map(|k| CODES[ranked[k]]).collect();
        let ok = chosen
            .iter()
            .enumerate()
            .all(|(i, a)| chosen[i + 1..].iter().all(|b| !conflicting(a, b)));
        if ok && best.as_ref().is_none_or(|b| pick > *b) {
            best = Some(pick);
        }
    }
    let best = best.unwrap_or_default();
    (0..n)
        .filter(|&k| best[k])
        .map(|k| (CODES[ranked[k]], weights[ranked[k]]))
        .collect()
}

// ---------------------------------------------------------------- random inputs

/// Values drawn so that ties with thresholds and between priorities are common.
pub fn random_pair(rng: &mut impl Rng) -> (MetricsRecord, UserCriteria) {
    let grid = |rng: &mut dyn rand::RngCore, hi: f64| -> f64 {
        if rng.random_bool(0.5) {
            (rng.random_range(0..=10) as f64) * hi / 10.0
        } else {
            rng.random_range(0.0..=hi)
        }
    };
    let c = UserCriteria {
        pa1: grid(rng, 1.0),
        pa2: grid(rng, 1.0),
        pe1: grid(rng, 1.0),
        pe2: grid(rng, 1.0),
        pf: grid(rng, 1.0),
        ta1: grid(rng, 1.0),
        ta2: grid(rng, 1.0),
        te1: grid(rng, 0.01).max(1e-6),
        te2: grid(rng, 1e-4).max(1e-9),
        tf: grid(rng, 40_000.0).max(1.0),
        ot: grid(rng, 0.5),
        ut: grid(rng, 0.5),
    };
    let m = MetricsRecord {
        a1: grid(rng, 1.0),
        a2: grid(rng, 1.0),
        e1: grid(rng, 0.02),
        e2: grid(rng, 2e-4),
        f: grid(rng, 40_000.0),
        p: rng.random_range(0..10_000_000),
    };
    (m, c)
}

/// Random instruction weights with `positives` nonzero entries, drawn from a
/// small grid so equal weights appear often.
pub fn random_weights(rng: &mut impl Rng, positives: usize) -> [f64; 15] {
    let mut idx: Vec<usize> = (0..15).collect();
    idx.shuffle(rng);
    let mut w = [0.0; 15];
    for &i in idx.iter().take(positives) {
        w[i] = if rng.random_bool(0.5) {
            rng.random_range(1..=5) as f64 / 5.0
        } else {
            rng.random_range(1e-6..2.0)
        };
    }
    w
}
