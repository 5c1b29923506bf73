//! Skeleton sequences, label taxonomies and the dataset pipeline.

pub mod augment;
pub mod io;
pub mod sampling;
pub mod synth;

pub use augment::{augment_skeletal, augment_temporal, AffineDraw, AugmentationParams};
pub use io::{load_dataset, save_dataset};
pub use sampling::{prepare_clip, uniform_sample, uniform_sample_indices};
pub use synth::{synth_generate, SynthSpec};

use crate::error::{MmnError, Result};

/// Dense `len x joints x channels` block of coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    pub len: usize,
    pub joints: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Frames {
    pub fn new(len: usize, joints: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if len == 0 || joints == 0 || channels == 0 {
            return Err(MmnError::Schema(format!("empty frame block {len}x{joints}x{channels}")));
        }
        if data.len() != len * joints * channels {
            return Err(MmnError::Schema(format!(
                "frame block {len}x{joints}x{channels} holds {} values",
                data.len()
            )));
        }
        Ok(Self { len, joints, channels, data })
    }

    pub fn frame_size(&self) -> usize {
        self.joints * self.channels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_size();
        &self.data[t * n..(t + 1) * n]
    }

    /// Builds a new block from the listed frame indices.
    pub fn select(&self, indices: &[usize]) -> Frames {
        let mut data = Vec::with_capacity(indices.len() * self.frame_size());
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        Frames { len: indices.len(), joints: self.joints, channels: self.channels, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One recorded sequence with its action label.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    pub id: String,
    pub label: usize,
    pub frames: Frames,
}

impl SkeletonSequence {
    pub fn new(id: impl Into<String>, label: usize, frames: Frames) -> Result<Self> {
        let id = id.into();
        if !frames.is_finite() {
            return Err(MmnError::Data(format!("sample {id}: non-finite coordinate")));
        }
        Ok(Self { id, label, frames })
    }

    pub fn raw_len(&self) -> usize {
        self.frames.len
    }
}

/// Action classes and their body-part grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTaxonomy {
    pub action_names: Vec<String>,
    pub body_of_action: Vec<usize>,
    pub body_names: Vec<String>,
}

impl LabelTaxonomy {
    pub fn new(action_names: Vec<String>, body_of_action: Vec<usize>, body_names: Vec<String>) -> Result<Self> {
        if body_of_action.len() != action_names.len() {
            return Err(MmnError::Schema(format!(
                "body_of_action has {} entries for {} actions",
                body_of_action.len(),
                action_names.len()
            )));
        }
        if let Some((a, &b)) = body_of_action.iter().enumerate().find(|(_, &b)| b >= body_names.len()) {
            return Err(MmnError::Schema(format!("action {a} maps to body {b}, only {} bodies", body_names.len())));
        }
        if body_names.len() > action_names.len() {
            return Err(MmnError::Schema("more body classes than action classes".into()));
        }
        Ok(Self { action_names, body_of_action, body_names })
    }

    /// Flat taxonomy where every action is its own body class.
    pub fn flat(k: usize) -> Self {
        let names: Vec<String> = (0..k).map(|i| format!("action_{i}")).collect();
        Self { action_names: names.clone(), body_of_action: (0..k).collect(), body_names: names }
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_bodies(&self) -> usize {
        self.body_names.len()
    }

    pub fn body_of(&self, action: usize) -> usize {
        self.body_of_action[action]
    }
}

/// A set of sequences sharing one joint layout and taxonomy.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub joints: usize,
    pub channels: usize,
    pub taxonomy: LabelTaxonomy,
    pub samples: Vec<SkeletonSequence>,
    /// Free-form note carried in the file header.
    pub comment: Option<String>,
}

impl Dataset {
    pub fn new(joints: usize, channels: usize, taxonomy: LabelTaxonomy, samples: Vec<SkeletonSequence>) -> Result<Self> {
        let ds = Self { joints, channels, taxonomy, samples, comment: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.frames.joints != self.joints || s.frames.channels != self.channels {
                return Err(MmnError::Schema(format!(
                    "sample {} has {} joints x {} channels, dataset declares {} x {}",
                    s.id, s.frames.joints, s.frames.channels, self.joints, self.channels
                )));
            }
            if s.label >= self.taxonomy.num_actions() {
                return Err(MmnError::Data(format!(
                    "sample {} has label {} outside [0, {})",
                    s.id,
                    s.label,
                    self.taxonomy.num_actions()
                )));
            }
            if !s.frames.is_finite() {
                return Err(MmnError::Data(format!("sample {}: non-finite coordinate", s.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            joints: self.joints,
            channels: self.channels,
            taxonomy: self.taxonomy.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            comment: self.comment.clone(),
        }
    }
}

/// Stratified split into train/val/test. Within every class the samples
/// are shuffled under `seed` and cut by `ratios` (normalized to sum 1),
/// so every class keeps its proportions.
pub fn split_dataset(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<[Dataset; 3]> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || total <= 0.0 {
        return Err(MmnError::Config(format!("invalid split ratios {ratios:?}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for k in 0..ds.taxonomy.num_actions() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == k).collect();
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let a = (n * ratios[0] / total).round() as usize;
        let b = ((n * (ratios[0] + ratios[1]) / total).round() as usize).max(a);
        parts[0].extend_from_slice(&idx[..a]);
        parts[1].extend_from_slice(&idx[a..b]);
        parts[2].extend_from_slice(&idx[b..]);
    }
    Ok(parts.map(|mut p| {
        p.sort_unstable();
        ds.subset(&p)
    }))
}
