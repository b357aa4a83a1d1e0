use serde_json::Value;
use thiserror::Error;

use crate::arch_ir::{self, infer_shapes, ArchError, ArchGraph, ShapeReport};

/// An architecture that passed parsing and shape inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedArch {
    pub graph: ArchGraph,
    pub report: ShapeReport,
}

impl ValidatedArch {
    pub fn from_graph(graph: ArchGraph) -> Result<Self, ArchError> {
        let report = infer_shapes(&graph)?;
        Ok(ValidatedArch { graph, report })
    }

    pub fn document(&self) -> Value {
        arch_ir::to_document(&self.graph)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("NoDocumentFound: the response contains no JSON object")]
    NoDocumentFound,
    #[error("{error}")]
    Invalid { error: ArchError, fragment: String },
}

impl ExtractError {
    pub fn class(&self) -> &'static str {
        match self {
            ExtractError::NoDocumentFound => "NoDocumentFound",
            ExtractError::Invalid { error, .. } => error.class(),
        }
    }

    pub fn layer(&self) -> Option<&str> {
        match self {
            ExtractError::NoDocumentFound => None,
            ExtractError::Invalid { error, .. } => error.layer(),
        }
    }

    pub fn fragment(&self) -> Option<&str> {
        match self {
            ExtractError::NoDocumentFound => None,
            ExtractError::Invalid { fragment, .. } => Some(fragment),
        }
    }
}

/// Body of every ``` fence, in order.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the language tag line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// First JSON object that parses, starting from each `{` in turn.
fn first_bare_object(text: &str) -> Option<&str> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(_))) = stream.next() {
            return Some(&text[start..start + stream.byte_offset()]);
        }
    }
    None
}

/// Locate the architecture document in a free-form response: the first
/// fenced block that looks like an object, else the first bare object, else
/// (for repair prompting) everything from the first `{`.
pub fn find_document(response: &str) -> Option<&str> {
    if let Some(block) = fenced_blocks(response)
        .into_iter()
        .find(|b| b.trim_start().starts_with('{'))
    {
        return Some(block.trim());
    }
    first_bare_object(response).or_else(|| response.find('{').map(|i| response[i..].trim_end()))
}

pub fn extract_arch(response: &str) -> Result<ValidatedArch, ExtractError> {
    let fragment = find_document(response).ok_or(ExtractError::NoDocumentFound)?;
    let invalid = |error| ExtractError::Invalid {
        error,
        fragment: fragment.to_string(),
    };
    let graph = arch_ir::parse_arch(fragment).map_err(invalid)?;
    ValidatedArch::from_graph(graph).map_err(invalid)
}
