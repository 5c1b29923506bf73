use rand::Rng;

use super::augment::{augment_skeletal, augment_temporal, AugmentationParams};
use super::{Frames, SkeletonSequence};
use crate::error::Result;

/// Frame `i` of the output is raw frame `floor((i + 0.5) * raw_len / target)`,
/// clamped to the last raw frame.
pub fn uniform_sample_indices(raw_len: usize, target: usize) -> Vec<usize> {
    (0..target).map(|i| (((2 * i + 1) * raw_len) / (2 * target)).min(raw_len - 1)).collect()
}

/// Resamples a sequence to exactly `target` frames.
pub fn uniform_sample(seq: &SkeletonSequence, target: usize) -> Frames {
    seq.frames.select(&uniform_sample_indices(seq.raw_len(), target))
}

/// Sampling followed by skeletal then temporal augmentation (each only if
/// enabled in `params`). Pass `rng = None` for evaluation clips.
pub fn prepare_clip<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    target: usize,
    params: &AugmentationParams,
    rng: Option<&mut R>,
) -> Result<Frames> {
    let clip = uniform_sample(seq, target);
    let Some(rng) = rng else { return Ok(clip) };
    let clip = if params.skeletal_enabled { augment_skeletal(&clip, params, rng)? } else { clip };
    Ok(if params.temporal_enabled { augment_temporal(&clip, params, rng) } else { clip })
}
