//! The full network: configuration, parameters, forward/backward pipeline
//! and checkpoint I/O.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod params;

use std::path::Path;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use forward::{
    model_backward, model_backward_paths, model_forward, model_infer, ForwardCache, ForwardOptions,
    Mode, ModelGrads, Topology, W1Paths,
};
pub use gradcheck::model_gradcheck;
pub use params::{ModelParams, PRETRAIN_GROUPS};

use crate::error::Result;

/// A configuration together with single-precision parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (config, params) = load_checkpoint(path)?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.config, &self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint_bytes(&self.config, &self.params)
    }

    /// Inference on whole frames of `config.frame_size` samples.
    pub fn infer_frames(&self, frames: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        model_infer(frames, &self.params, &self.config)
    }
}
