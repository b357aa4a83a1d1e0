//! Neural architecture discovery driven by a language model and steered by
//! a rule-based expert system.
//!
//! The loop: prompt a model for an architecture, validate it with
//! [`arch_ir`], train or estimate it with an [`evaluator`], score it with
//! [`scoring`], and turn the metrics into the next round of [`expert`]
//! instructions. [`discovery`] ties these together and records every step.

pub mod arch_ir;
pub mod cli;
pub mod discovery;
pub mod evaluator;
pub mod expert;
pub mod llm;
pub mod metrics;
pub mod scoring;
