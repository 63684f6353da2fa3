//! Versioned JSON model documents.
//!
//! Weights are written as row-major arrays of numbers using shortest
//! round-trip float formatting, so save/load is lossless. Training time is
//! not stored: two trainings of the same data and config produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HsomError, Result};
use crate::hierarchy::{GrowthConfig, HsomModel, HsomNode, Leaf};
use crate::matrix::Matrix;
use crate::som::{GridDim, SomMap};

pub const FORMAT_NAME: &str = "hsom-model";
pub const FORMAT_VERSION: u32 = 1;

/// Input transformation that must be replayed before prediction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub l2_normalize: bool,
    /// Feature columns, in model order, when trained from a headed file.
    pub feature_names: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    format_version: u32,
    config: GrowthConfig,
    feature_dim: usize,
    depth: usize,
    node_count: usize,
    preprocessing: Preprocessing,
    root: NodeDocument,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeDocument {
    Map {
        grid: GridDim,
        sample_count: usize,
        weights: Vec<Vec<f64>>,
        children: Vec<NodeDocument>,
    },
    Leaf {
        label: u8,
        sample_count: usize,
        majority_fraction: f64,
    },
}

impl From<&HsomNode> for NodeDocument {
    fn from(node: &HsomNode) -> Self {
        match node {
            HsomNode::Internal {
                som,
                sample_count,
                children,
            } => NodeDocument::Map {
                grid: som.dim(),
                sample_count: *sample_count,
                weights: som.weights().to_rows(),
                children: children.iter().map(NodeDocument::from).collect(),
            },
            HsomNode::Leaf(l) => NodeDocument::Leaf {
                label: l.label,
                sample_count: l.sample_count,
                majority_fraction: l.majority_fraction,
            },
        }
    }
}

impl NodeDocument {
    fn into_node(self) -> Result<HsomNode> {
        Ok(match self {
            NodeDocument::Map {
                grid,
                sample_count,
                weights,
                children,
            } => HsomNode::Internal {
                som: SomMap::from_weights(GridDim::new(grid.width, grid.height)?, Matrix::from_rows(&weights)?)?,
                sample_count,
                children: children
                    .into_iter()
                    .map(NodeDocument::into_node)
                    .collect::<Result<_>>()?,
            },
            NodeDocument::Leaf {
                label,
                sample_count,
                majority_fraction,
            } => HsomNode::Leaf(Leaf {
                label,
                sample_count,
                majority_fraction,
            }),
        })
    }
}

pub fn model_to_json(model: &HsomModel, prep: &Preprocessing) -> Result<String> {
    let doc = document(model, prep);
    serde_json::to_string(&doc).map_err(|e| HsomError::invalid(format!("cannot encode model: {e}")))
}

pub fn model_from_json(text: &str) -> Result<(HsomModel, Preprocessing)> {
    let doc: ModelDocument = serde_json::from_str(text)
        .map_err(|e| HsomError::invalid(format!("malformed model document: {e}")))?;
    from_document(doc)
}

pub fn save_model(path: impl AsRef<Path>, model: &HsomModel, prep: &Preprocessing) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HsomError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &document(model, prep)).map_err(|e| HsomError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(|e| HsomError::io(path, e))?;
    w.flush().map_err(|e| HsomError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(HsomModel, Preprocessing)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HsomError::io(path, e))?;
    let doc: ModelDocument =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| HsomError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    from_document(doc).map_err(|e| HsomError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn document(model: &HsomModel, prep: &Preprocessing) -> ModelDocument {
    ModelDocument {
        format: FORMAT_NAME.to_string(),
        format_version: FORMAT_VERSION,
        config: model.config,
        feature_dim: model.feature_dim(),
        depth: model.depth,
        node_count: model.node_count,
        preprocessing: prep.clone(),
        root: NodeDocument::from(&model.root),
    }
}

fn from_document(doc: ModelDocument) -> Result<(HsomModel, Preprocessing)> {
    if doc.format != FORMAT_NAME {
        return Err(HsomError::invalid(format!("not a model document: format '{}'", doc.format)));
    }
    if doc.format_version != FORMAT_VERSION {
        return Err(HsomError::invalid(format!(
            "unsupported model format version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let model = HsomModel::from_root(doc.root.into_node()?, doc.config, 0.0)?;
    if model.feature_dim() != doc.feature_dim || model.depth != doc.depth || model.node_count != doc.node_count {
        return Err(HsomError::invalid("model header disagrees with the stored tree"));
    }
    Ok((model, doc.preprocessing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::hierarchy::train_sequential;

    fn model() -> HsomModel {
        let data = SyntheticSpec::new(4, 1500, 4, 4.0).unwrap().generate(3).unwrap();
        train_sequential(&data, &GrowthConfig::new(GridDim::square(2).unwrap(), 5)).unwrap()
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let m = model();
        let prep = Preprocessing {
            l2_normalize: true,
            feature_names: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
        };
        let text = model_to_json(&m, &prep).unwrap();
        let (back, prep_back) = model_from_json(&text).unwrap();
        assert_eq!(back.root, m.root);
        assert_eq!(back.config, m.config);
        assert_eq!(prep_back, prep);
        assert_eq!(model_to_json(&back, &prep).unwrap(), text);
    }

    #[test]
    fn rejects_wrong_version_and_garbage() {
        let text = model_to_json(&model(), &Preprocessing::default()).unwrap();
        let bumped = text.replace("\"format_version\":1", "\"format_version\":99");
        assert!(model_from_json(&bumped).unwrap_err().to_string().contains("99"));
        assert!(model_from_json("{}").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_model("/definitely/not/here.json").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
