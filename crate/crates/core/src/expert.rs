//! Rule-based instruction generation and conflict resolution.
//!
//! Seven additive rules compare a [`MetricsRecord`] against the user's
//! thresholds and add the matching priority to a fixed set of instructions.
//! [`resolve_conflicts`] then keeps the heaviest instructions and drops the
//! reduce/add partner of every instruction it keeps.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::metrics::{MetricsRecord, UserCriteria};

/// The closed instruction vocabulary, in canonical rule-book order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instruction {
    Acl,
    Asc,
    Adl,
    Rcl,
    Rsc,
    Rdl,
    Ad,
    Amk,
    Awi,
    Ar,
    Rk,
    Rd,
    Amn,
    Rn,
    Rr,
}

use Instruction::*;

impl Instruction {
    pub const ALL: [Instruction; 15] = [
        Acl, Asc, Adl, Rcl, Rsc, Rdl, Ad, Amk, Awi, Ar, Rk, Rd, Amn, Rn, Rr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Acl => "ACL",
            Asc => "ASC",
            Adl => "ADL",
            Rcl => "RCL",
            Rsc => "RSC",
            Rdl => "RDL",
            Ad => "AD",
            Amk => "AMK",
            Awi => "AWI",
            Ar => "AR",
            Rk => "RK",
            Rd => "RD",
            Amn => "AMN",
            Rn => "RN",
            Rr => "RR",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Acl => "Add Convolutional Layer",
            Asc => "Add Skip Connection",
            Adl => "Add Dense Layer",
            Rcl => "Reduce Convolutional Layer",
            Rsc => "Reduce Skip Connection",
            Rdl => "Reduce Dense Layer",
            Ad => "Add Dropout Layer",
            Amk => "Add More Kernel",
            Awi => "Add Weight Initializer",
            Ar => "Add Regularization",
            Rk => "Reduce Number of Kernel",
            Rd => "Reduce Dropout Layer",
            Amn => "Add More Neurons",
            Rn => "Reduce Neurons",
            Rr => "Reduce Regularization",
        }
    }

    pub fn conflicts_with(self) -> Option<Instruction> {
        match self {
            Acl => Some(Rcl),
            Rcl => Some(Acl),
            Asc => Some(Rsc),
            Rsc => Some(Asc),
            Adl => Some(Rdl),
            Rdl => Some(Adl),
            Ad => Some(Rd),
            Rd => Some(Ad),
            Amk => Some(Rk),
            Rk => Some(Amk),
            Ar => Some(Rr),
            Rr => Some(Ar),
            Amn => Some(Rn),
            Rn => Some(Amn),
            Awi => None,
        }
    }

    pub fn from_code(code: &str) -> Option<Instruction> {
        Self::ALL
            .into_iter()
            .find(|i| i.code().eq_ignore_ascii_case(code))
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Instruction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Instruction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        Instruction::from_code(&code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown instruction code '{code}'")))
    }
}

/// Non-negative weight per instruction, indexed in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InstructionVector([f64; 15]);

impl InstructionVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Negative and non-finite weights are clamped to zero.
    pub fn from_weights(weights: [f64; 15]) -> Self {
        let mut v = Self(weights);
        for w in &mut v.0 {
            if !w.is_finite() || *w < 0.0 {
                *w = 0.0;
            }
        }
        v
    }

    pub fn from_pairs(pairs: &[(Instruction, f64)]) -> Self {
        let mut v = Self::zero();
        for &(i, w) in pairs {
            v.0[i.index()] = w;
        }
        Self::from_weights(v.0)
    }

    pub fn get(&self, i: Instruction) -> f64 {
        self.0[i.index()]
    }

    pub fn weights(&self) -> &[f64; 15] {
        &self.0
    }

    fn add(&mut self, targets: &[Instruction], amount: f64) {
        for &t in targets {
            self.0[t.index()] += amount;
        }
    }
}

impl std::ops::Index<Instruction> for InstructionVector {
    type Output = f64;

    fn index(&self, i: Instruction) -> &f64 {
        &self.0[i.index()]
    }
}

const LOW_ACCURACY: [Instruction; 4] = [Acl, Adl, Amk, Asc];
const HIGH_TRAIN_ENERGY: [Instruction; 5] = [Ad, Awi, Rcl, Rk, Rsc];
const HIGH_VAL_ENERGY: [Instruction; 4] = [Ad, Rcl, Rk, Rdl];
const LOW_FPS: [Instruction; 3] = [Ad, Rk, Rsc];
const OVERFIT: [Instruction; 5] = [Adl, Rcl, Rk, Rn, Ar];
const UNDERFIT: [Instruction; 7] = [Rd, Acl, Amk, Adl, Amn, Asc, Rr];

/// Apply the seven rules additively. Every comparison is strict, so a metric
/// sitting exactly on its threshold fires nothing.
pub fn generate_instructions(m: &MetricsRecord, c: &UserCriteria) -> InstructionVector {
    let mut cmd = InstructionVector::zero();
    if m.a1 < c.ta1 {
        cmd.add(&LOW_ACCURACY, c.pa1);
    }
    if m.a2 < c.ta2 {
        cmd.add(&LOW_ACCURACY, c.pa2);
    }
    if m.e1 > c.te1 {
        cmd.add(&HIGH_TRAIN_ENERGY, c.pe1);
    }
    if m.e2 > c.te2 {
        cmd.add(&HIGH_VAL_ENERGY, c.pe2);
    }
    if m.f < c.tf {
        cmd.add(&LOW_FPS, c.pf);
    }
    // The gap rules reuse the accuracy priorities rather than dedicated ones.
    if (m.a1 - m.a2) > c.ot {
        cmd.add(&OVERFIT, c.pa1);
    }
    if (m.a2 - m.a1) > c.ut {
        cmd.add(&UNDERFIT, c.pa2);
    }
    cmd
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedInstruction {
    pub code: Instruction,
    pub weight: f64,
}

/// Conflict-free instructions with positive weight, heaviest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefinedCommand(Vec<WeightedInstruction>);

impl RefinedCommand {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeightedInstruction> {
        self.0.iter()
    }

    pub fn codes(&self) -> Vec<Instruction> {
        self.0.iter().map(|w| w.code).collect()
    }

    pub fn as_pairs(&self) -> Vec<(Instruction, f64)> {
        self.0.iter().map(|w| (w.code, w.weight)).collect()
    }
}

/// Sort descending by weight (ties keep canonical order), then scan: every
/// positive entry is kept and zeroes its conflict partner further down.
pub fn resolve_conflicts(v: &InstructionVector) -> RefinedCommand {
    let mut weights = *v.weights();
    let mut order: Vec<Instruction> = Instruction::ALL.to_vec();
    // stable: equal weights stay in canonical order
    order.sort_by(|a, b| weights[b.index()].total_cmp(&weights[a.index()]));

    let mut refined = Vec::new();
    for (m, &current) in order.iter().enumerate() {
        let w = weights[current.index()];
        if w > 0.0 {
            refined.push(WeightedInstruction {
                code: current,
                weight: w,
            });
            for &later in &order[m + 1..] {
                if current.conflicts_with() == Some(later) {
                    weights[later.index()] = 0.0;
                }
            }
        }
    }
    RefinedCommand(refined)
}
