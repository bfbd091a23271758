//! Corruption model standing in for errors of an image-based AGR estimator.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::{project_joints, splat_max, write_box_map};
use super::AgrSample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of heatmap peak displacement, px.
    pub jitter_px: f64,
    /// Peak amplitudes are scaled by a factor drawn from `[1 - amplitude_jitter, 1]`.
    pub amplitude_jitter: f64,
    /// Probability per joint channel of one spurious blob.
    pub false_positive_rate: f64,
    /// Standard deviation of box edge distances, px.
    pub box_sigma_px: f64,
    /// Standard deviation of root depth targets, mm.
    pub depth_sigma_mm: f64,
    /// Probability that a person's joint is missing from the heatmaps.
    pub dropout: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("jitter_px", self.jitter_px),
            ("amplitude_jitter", self.amplitude_jitter),
            ("false_positive_rate", self.false_positive_rate),
            ("box_sigma_px", self.box_sigma_px),
            ("depth_sigma_mm", self.depth_sigma_mm),
            ("dropout", self.dropout),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise.{name} = {v} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("amplitude_jitter", self.amplitude_jitter),
            ("false_positive_rate", self.false_positive_rate),
            ("dropout", self.dropout),
        ] {
            if v > 1.0 {
                return Err(Error::InvalidArgument(format!("noise.{name} = {v} must be <= 1")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == NoiseConfig::default()
    }

    fn touches_heatmaps(&self) -> bool {
        self.jitter_px > 0.0 || self.amplitude_jitter > 0.0 || self.false_positive_rate > 0.0 || self.dropout > 0.0
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

/// Perturbs the AGR maps and depth targets of `sample`. Annotations (poses, root pixels,
/// clean boxes, camera) are left unchanged, and parts whose noise is zero are copied.
pub fn corrupt_agr<T: Scalar, R: Rng + ?Sized>(sample: &AgrSample<T>, noise: &NoiseConfig, rng: &mut R) -> AgrSample<T> {
    let mut out = sample.clone();
    if noise.is_zero() {
        return out;
    }
    let (w, h) = sample.image_size();
    let cam = &sample.camera;
    if noise.touches_heatmaps() {
        let jitter = normal(noise.jitter_px);
        let mut maps: Tensor<T> = Tensor::zeros(sample.heatmaps.dims());
        for pose in &sample.gt_poses {
            for (k, proj) in project_joints(pose, cam).into_iter().enumerate() {
                let dropped = rng.random::<f64>() < noise.dropout;
                let du = jitter.sample(rng);
                let dv = jitter.sample(rng);
                let amp = 1.0 - noise.amplitude_jitter * rng.random::<f64>();
                let Some((u, v)) = proj else { continue };
                let (u, v) = (u + du, v + dv);
                if dropped || !cam.in_image(u, v) {
                    continue;
                }
                splat_max(maps.channel_mut(k), w, h, u, v, sample.render.sigma_2d, amp);
            }
        }
        for k in 0..sample.joints() {
            if rng.random::<f64>() < noise.false_positive_rate {
                let u = rng.random::<f64>() * (w - 1) as f64;
                let v = rng.random::<f64>() * (h - 1) as f64;
                let amp = 0.5 + 0.5 * rng.random::<f64>();
                splat_max(maps.channel_mut(k), w, h, u, v, sample.render.sigma_2d, amp);
            }
        }
        out.heatmaps = maps;
    }
    if noise.box_sigma_px > 0.0 {
        let d = normal(noise.box_sigma_px);
        let boxes: Vec<[f64; 4]> = sample
            .gt_boxes
            .iter()
            .map(|b| b.map(|x| (x + d.sample(rng)).max(0.0)))
            .collect();
        out.box_map = write_box_map(w, h, &sample.root_pixels, &boxes, &sample.depth_targets, sample.render.box_fill_radius);
    }
    if noise.depth_sigma_mm > 0.0 {
        let d = normal(noise.depth_sigma_mm);
        for z in &mut out.depth_targets {
            *z = (*z + d.sample(rng)).max(1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sample, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> AgrSample<f32> {
        let cfg = SynthConfig::default();
        generate_sample(&cfg, &cfg.skeleton(), 0).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt_agr(&s, &NoiseConfig::default(), &mut rng), s);
    }

    #[test]
    fn depth_noise_half_normal_mean() {
        let s = sample();
        let noise = NoiseConfig {
            depth_sigma_mm: 100.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut total, mut n) = (0.0, 0usize);
        while n < 10_000 {
            let c = corrupt_agr(&s, &noise, &mut rng);
            for (a, b) in c.depth_targets.iter().zip(&s.depth_targets) {
                total += (a - b).abs();
                n += 1;
            }
            assert_eq!(c.gt_poses, s.gt_poses);
            assert_eq!(c.heatmaps, s.heatmaps);
        }
        let expected = 100.0 * (2.0 / std::f64::consts::PI).sqrt();
        let mean = total / n as f64;
        assert!((mean - expected).abs() < 0.05 * expected, "mean {mean} vs {expected}");
    }

    #[test]
    fn full_dropout_empties_heatmaps() {
        let s = sample();
        let noise = NoiseConfig {
            dropout: 1.0,
            ..Default::default()
        };
        let c = corrupt_agr(&s, &noise, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(c.heatmaps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrupted_maps_stay_in_unit_range() {
        let s = sample();
        let noise = NoiseConfig {
            jitter_px: 1.0,
            amplitude_jitter: 0.3,
            false_positive_rate: 0.5,
            box_sigma_px: 1.0,
            depth_sigma_mm: 50.0,
            dropout: 0.1,
        };
        let c = corrupt_agr(&s, &noise, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(c.heatmaps.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(c.box_map.data().iter().all(|&v| v >= 0.0));
        assert_ne!(c.heatmaps, s.heatmaps);
        assert!(NoiseConfig { dropout: 1.5, ..noise }.validate().is_err());
    }
}
