//! Skeleton-temporal context-aware augmentation: a random 2-D affine map
//! broadcast over joints, followed by per-frame integer index jitter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Frames;
use crate::error::{MmnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationParams {
    /// Rotation angle drawn from `U(-r, r)` degrees.
    pub rotation_range_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Per-coordinate translation drawn from `U(-r, r)`.
    pub translation_range: f64,
    /// Frame offsets drawn uniformly from `{-j, ..., j}`.
    pub temporal_jitter: usize,
    pub skeletal_enabled: bool,
    pub temporal_enabled: bool,
    /// Draw a fresh affine map for every frame instead of once per sequence.
    pub affine_per_frame: bool,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            rotation_range_deg: 15.0,
            scale_min: 0.9,
            scale_max: 1.1,
            translation_range: 0.1,
            temporal_jitter: 3,
            skeletal_enabled: true,
            temporal_enabled: true,
            affine_per_frame: false,
        }
    }
}

impl AugmentationParams {
    pub fn disabled() -> Self {
        Self { skeletal_enabled: false, temporal_enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rotation_range_deg >= 0.0
            && self.translation_range >= 0.0
            && self.scale_min > 0.0
            && self.scale_min <= self.scale_max
            && self.rotation_range_deg.is_finite()
            && self.scale_max.is_finite()
            && self.translation_range.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MmnError::Config(format!("invalid augmentation ranges: {self:?}")))
        }
    }

    pub fn draw_affine<R: Rng + ?Sized>(&self, rng: &mut R) -> AffineDraw {
        let r = self.rotation_range_deg;
        let tr = self.translation_range;
        AffineDraw {
            theta_deg: rng.gen_range(-r..=r),
            scale: rng.gen_range(self.scale_min..=self.scale_max),
            shift: [rng.gen_range(-tr..=tr), rng.gen_range(-tr..=tr)],
        }
    }

    pub fn draw_offsets<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<i64> {
        let j = self.temporal_jitter as i64;
        (0..len).map(|_| rng.gen_range(-j..=j)).collect()
    }
}

/// One rotation/scale/translation triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineDraw {
    pub theta_deg: f64,
    pub scale: f64,
    pub shift: [f64; 2],
}

impl AffineDraw {
    pub const IDENTITY: AffineDraw = AffineDraw { theta_deg: 0.0, scale: 1.0, shift: [0.0, 0.0] };

    /// `scale * (p R^T) + shift` for a row vector `p = (x, y)`.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        [
            self.scale * (p[0] * c - p[1] * s) + self.shift[0],
            self.scale * (p[0] * s + p[1] * c) + self.shift[1],
        ]
    }

    pub fn apply_frames(&self, frames: &mut [f64]) {
        for p in frames.chunks_mut(2) {
            let q = self.apply([p[0], p[1]]);
            p.copy_from_slice(&q);
        }
    }
}

fn require_planar(frames: &Frames) -> Result<()> {
    if frames.channels != 2 {
        return Err(MmnError::UnsupportedGeometry(format!(
            "affine augmentation needs 2-D coordinates, got {} channels",
            frames.channels
        )));
    }
    Ok(())
}

/// Applies fixed affine draws: one for the whole clip, or one per frame.
pub fn apply_affine(frames: &Frames, draws: &[AffineDraw]) -> Result<Frames> {
    require_planar(frames)?;
    if draws.len() != 1 && draws.len() != frames.len {
        return Err(MmnError::Config(format!("{} affine draws for {} frames", draws.len(), frames.len)));
    }
    let mut out = frames.clone();
    let n = out.frame_size();
    for (t, chunk) in out.data.chunks_mut(n).enumerate() {
        draws[if draws.len() == 1 { 0 } else { t }].apply_frames(chunk);
    }
    Ok(out)
}

pub fn augment_skeletal<R: Rng + ?Sized>(frames: &Frames, params: &AugmentationParams, rng: &mut R) -> Result<Frames> {
    require_planar(frames)?;
    let count = if params.affine_per_frame { frames.len } else { 1 };
    let draws: Vec<AffineDraw> = (0..count).map(|_| params.draw_affine(rng)).collect();
    apply_affine(frames, &draws)
}

/// Output frame `t` is input frame `clamp(t + offsets[t], 0, len - 1)`.
pub fn apply_jitter(frames: &Frames, offsets: &[i64]) -> Frames {
    let last = frames.len as i64 - 1;
    let indices: Vec<usize> =
        offsets.iter().enumerate().map(|(t, &d)| (t as i64 + d).clamp(0, last) as usize).collect();
    frames.select(&indices)
}

pub fn augment_temporal<R: Rng + ?Sized>(frames: &Frames, params: &AugmentationParams, rng: &mut R) -> Frames {
    let offsets = params.draw_offsets(frames.len, rng);
    apply_jitter(frames, &offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clip(len: usize, joints: usize) -> Frames {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Frames::new(len, joints, 2, (0..len * joints * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_draw_is_identity() {
        let c = clip(4, 3);
        assert_eq!(apply_affine(&c, &[AffineDraw::IDENTITY]).unwrap(), c);
    }

    #[test]
    fn quarter_turn_maps_x_axis_to_y_axis() {
        let d = AffineDraw { theta_deg: 90.0, scale: 1.0, shift: [0.0, 0.0] };
        let q = d.apply([1.0, 0.0]);
        assert!(q[0].abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_channels_rejected() {
        let c = Frames::new(2, 1, 3, vec![0.0; 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = augment_skeletal(&c, &AugmentationParams::default(), &mut rng).unwrap_err();
        assert!(matches!(err, MmnError::UnsupportedGeometry(_)));
    }

    #[test]
    fn jitter_clamps_at_edges() {
        let c = clip(5, 1);
        let out = apply_jitter(&c, &[-3, 0, 0, 0, 3]);
        assert_eq!(out.frame(0), c.frame(0));
        assert_eq!(out.frame(4), c.frame(4));
        assert_eq!(apply_jitter(&c, &[0; 5]), c);
    }

    #[test]
    fn draws_stay_in_range() {
        let p = AugmentationParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let d = p.draw_affine(&mut rng);
            assert!(d.theta_deg.abs() <= 15.0);
            assert!((0.9..=1.1).contains(&d.scale));
            assert!(d.shift.iter().all(|s| s.abs() <= 0.1));
        }
        let offsets = p.draw_offsets(5000, &mut rng);
        assert!(offsets.iter().all(|o| o.abs() <= 3));
        for v in -3..=3 {
            assert!(offsets.contains(&v));
        }
    }

    #[test]
    fn per_frame_draws_differ() {
        let p = AugmentationParams { affine_per_frame: true, ..Default::default() };
        let c = Frames::new(3, 1, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment_skeletal(&c, &p, &mut rng).unwrap();
        assert_ne!(out.frame(0), out.frame(1));
    }
}
