//! Synthetic micro-action generator.
//!
//! Every class oscillates one contiguous group of joints (its body group)
//! around a shared rest pose. Classes in the same group differ in
//! frequency, direction of motion and the phase lag between joints; the
//! `similarity` knob in `[0, 1)` shrinks those gaps toward zero.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Frames, LabelTaxonomy, SkeletonSequence};
use crate::error::{MmnError, Result};

pub const INSEPARABLE_COMMENT: &str = "inseparable: amplitude 0, classes differ only by noise";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub joints: usize,
    pub raw_len: usize,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub similarity: f64,
    /// Number of body groups; `None` picks `ceil(classes / 2)`.
    pub body_groups: Option<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 100,
            joints: 10,
            raw_len: 80,
            amplitude: 0.3,
            noise_sigma: 0.01,
            similarity: 0.0,
            body_groups: None,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn groups(&self) -> usize {
        self.body_groups.unwrap_or(self.classes.div_ceil(2)).clamp(1, self.joints)
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(MmnError::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(MmnError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.similarity) {
            return Err(MmnError::Config(format!("similarity must lie in [0, 1), got {}", self.similarity)));
        }
        if self.per_class == 0 || self.raw_len == 0 || self.joints == 0 {
            return Err(MmnError::Config("per_class, raw_len and joints must be positive".into()));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(MmnError::Config(format!("amplitude must be >= 0, got {}", self.amplitude)));
        }
        Ok(())
    }

    /// Contiguous joint range of body group `g`.
    pub fn group_joints(&self, g: usize) -> std::ops::Range<usize> {
        let groups = self.groups();
        let start = g * self.joints / groups;
        let end = (g + 1) * self.joints / groups;
        start..end
    }
}

struct ClassMotion {
    group: usize,
    cycles: f64,
    direction: f64,
    joint_lag: f64,
}

fn class_motion(spec: &SynthSpec, k: usize) -> ClassMotion {
    let groups = spec.groups();
    let rank = (k / groups) as f64;
    let spread = 1.0 - spec.similarity;
    ClassMotion {
        group: k % groups,
        cycles: 2.0 + 1.5 * spread * rank,
        direction: 0.25 * PI + spread * rank * PI / 3.0,
        joint_lag: 0.4 + spread * rank * 0.8,
    }
}

/// Generates `classes * per_class` sequences, ordered class by class.
/// Deterministic in `spec.seed`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let rest: Vec<[f64; 2]> =
        (0..spec.joints).map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]).collect();

    let groups = spec.groups();
    let taxonomy = LabelTaxonomy::new(
        (0..spec.classes).map(|k| format!("action_{k}")).collect(),
        (0..spec.classes).map(|k| class_motion(spec, k).group).collect(),
        (0..groups).map(|g| format!("body_{g}")).collect(),
    )?;

    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    for k in 0..spec.classes {
        let motion = class_motion(spec, k);
        let joints = spec.group_joints(motion.group);
        let (dy, dx) = motion.direction.sin_cos();
        for i in 0..spec.per_class {
            let phase = rng.gen_range(0.0..TAU);
            let gain = spec.amplitude * rng.gen_range(0.8..1.2);
            let offset = [rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02)];
            let mut data = Vec::with_capacity(spec.raw_len * spec.joints * 2);
            for t in 0..spec.raw_len {
                let u = TAU * motion.cycles * t as f64 / spec.raw_len as f64 + phase;
                for (j, r) in rest.iter().enumerate() {
                    let mut p = [r[0] + offset[0], r[1] + offset[1]];
                    if joints.contains(&j) {
                        let lag = motion.joint_lag * (j - joints.start) as f64;
                        let a = gain * (u - lag).sin();
                        p[0] += a * dx;
                        p[1] += a * dy;
                    }
                    if spec.noise_sigma > 0.0 {
                        p[0] += noise.sample(&mut rng);
                        p[1] += noise.sample(&mut rng);
                    }
                    data.extend_from_slice(&p);
                }
            }
            let frames = Frames::new(spec.raw_len, spec.joints, 2, data)?;
            samples.push(SkeletonSequence::new(format!("c{k:02}_{i:05}"), k, frames)?);
        }
    }
    let mut ds = Dataset::new(spec.joints, 2, taxonomy, samples)?;
    if spec.amplitude == 0.0 {
        ds.comment = Some(INSEPARABLE_COMMENT.into());
    }
    Ok(ds)
}
