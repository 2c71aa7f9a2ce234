//! JSON model files with a content hash.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::em::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{validate_params, Cardinalities, Hyperparams, ModelParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything a model file records apart from its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBody {
    pub format_version: u32,
    pub cardinalities: Cardinalities,
    pub params: ModelParams,
    pub hyper: Hyperparams,
    pub train_config: TrainConfig,
    pub final_objective: f64,
    /// Team names in id order, when the model was trained on named data.
    #[serde(default)]
    pub teams: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub body: ModelBody,
    pub content_hash: String,
}

/// SHA-256 of `blob <len>\0` followed by the compact JSON of the body.
pub fn content_hash(body: &ModelBody) -> Result<String> {
    let json = serde_json::to_vec(body)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", json.len()).as_bytes());
    h.update(&json);
    Ok(hex::encode(h.finalize()))
}

impl ModelFile {
    pub fn new(body: ModelBody) -> Result<Self> {
        let content_hash = content_hash(&body)?;
        Ok(Self { body, content_hash })
    }

    pub fn save(&self, out: impl Write) -> Result<()> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Parses, checks the hash and validates the parameters.
    pub fn load(input: impl Read) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(input)?;
        let expect = content_hash(&file.body)?;
        if expect != file.content_hash {
            return Err(Error::InvalidInput(format!(
                "model content hash mismatch: file says {}, contents hash to {expect}",
                file.content_hash
            )));
        }
        if file.body.params.card != file.body.cardinalities {
            return Err(Error::InvalidInput(
                "model cardinalities disagree with parameter shapes".into(),
            ));
        }
        if let Some(v) = validate_params(&file.body.params).first() {
            return Err(Error::InvalidInput(format!(
                "model parameters are invalid: {}",
                v.message
            )));
        }
        Ok(file)
    }
}
