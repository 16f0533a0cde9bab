use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MgpiConfig, MgpiNetwork};
use crate::error::{Error, Result};
use crate::nn::Params;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format_version: u32,
    config: MgpiConfig,
    params: BTreeMap<String, Tensor>,
}

impl MgpiNetwork {
    pub fn to_checkpoint_json(&self) -> String {
        let mut params = BTreeMap::new();
        self.visit("", &mut |name, shape, data| {
            params.insert(
                name.to_string(),
                Tensor {
                    shape: shape.to_vec(),
                    data: data.to_vec(),
                },
            );
        });
        let doc = Document {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config,
            params,
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format_version {}",
                doc.format_version
            )));
        }
        let mut net = MgpiNetwork::zeros(doc.config)?;
        let mut params = doc.params;
        let mut problem = None;
        let mut shapes = BTreeMap::new();
        net.visit("", &mut |name, shape, _| {
            shapes.insert(name.to_string(), shape.to_vec());
        });
        net.visit_mut("", &mut |name, data| {
            if problem.is_some() {
                return;
            }
            match params.remove(name) {
                None => problem = Some(format!("missing parameter {name}")),
                Some(t) if t.shape != shapes[name] || t.data.len() != data.len() => {
                    problem = Some(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        t.shape, shapes[name]
                    ))
                }
                Some(t) if t.data.iter().any(|v| !v.is_finite()) => {
                    problem = Some(format!("parameter {name} has non-finite values"))
                }
                Some(t) => data.copy_from_slice(&t.data),
            }
        });
        if let Some(p) = problem {
            return Err(Error::Checkpoint(p));
        }
        if let Some(extra) = params.keys().next() {
            return Err(Error::Checkpoint(format!(
                "parameter {extra} does not belong to a {} network",
                net.config.variant
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        MgpiNetwork::from_checkpoint_json(&fs::read_to_string(path)?)
    }
}
