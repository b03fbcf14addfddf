//! Framing, loss and the two-step training procedure.

pub mod framing;
pub mod loss;
pub mod trainer;

pub use framing::{overlap_add, slice_frames, FrameSet};
pub use loss::{loss_eval, mae};
pub use trainer::{
    learning_rate_at, no_progress, pretrain_from, pretrain_run, train_run, Precision, Progress,
    TrainConfig, TrainOutcome,
};

use crate::error::Result;
use crate::model::{model_infer, ModelConfig, ModelParams};

/// Runs a whole clip through the model: zero-pad to cover every sample,
/// infer frame batches, overlap-add, trim to the input length.
pub fn process_clip(
    samples: &[f32],
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    hop: usize,
    batch: usize,
) -> Result<Vec<f32>> {
    if hop == 0 || hop > cfg.frame_size {
        return Err(crate::error::Error::InvalidArgument(format!(
            "hop {hop} must lie in 1..={}",
            cfg.frame_size
        )));
    }
    let padded = framing::pad_to_cover(samples, cfg.frame_size, hop);
    let frames = slice_frames(&padded, cfg.frame_size, hop)?;
    let mut outs = Vec::with_capacity(frames.len());
    for chunk in frames.frames.chunks(batch.max(1)) {
        outs.extend(model_infer(chunk, params, cfg)?);
    }
    let mut y = overlap_add(&frames.with_frames(outs)?);
    y.truncate(samples.len());
    Ok(y)
}
