//! Deterministic synthetic two-class images for smoke training.
//!
//! Every pair index `i` draws one grayscale background: a random base level,
//! a linear gradient, a low-frequency wave and pixel noise. The normal image
//! is that background; the opacity image adds one to three blurred bright
//! ellipses, centered anywhere in the frame, on top of the same background.
//! Because blob positions are uniform, the class mean difference is nearly
//! flat, and the base level varies far more between pairs than the blob
//! mass adds; no fixed pixel template separates the classes well.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ImageSource, Label};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Generator knobs; ranges are half-open `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub base: (f64, f64),
    pub max_slope: f64,
    pub max_wave: f64,
    pub noise_std: f64,
    /// Ellipse semi-axes as a fraction of the image side.
    pub radius: (f64, f64),
    pub amplitude: (f64, f64),
    pub max_blobs: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            base: (0.0, 0.3),
            max_slope: 0.2,
            max_wave: 0.08,
            noise_std: 0.04,
            radius: (0.07, 0.16),
            amplitude: (0.25, 0.45),
            max_blobs: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSet {
    pub size: usize,
    pub normal: Vec<Tensor<f32>>,
    pub opacity: Vec<Tensor<f32>>,
    /// Number of ellipses drawn into each opacity image.
    pub blobs: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    amplitude: f64,
}

impl Ellipse {
    fn sample(rng: &mut ChaCha8Rng, size: f64, p: &SynthParams) -> Self {
        Self {
            cy: rng.random_range(0.0..1.0) * size,
            cx: rng.random_range(0.0..1.0) * size,
            ry: rng.random_range(p.radius.0..p.radius.1) * size,
            rx: rng.random_range(p.radius.0..p.radius.1) * size,
            angle: rng.random_range(0.0..PI),
            amplitude: rng.random_range(p.amplitude.0..p.amplitude.1),
        }
    }

    /// Gaussian falloff in the ellipse's normalized radius.
    fn value(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.rx;
        let v = (-s * dx + c * dy) / self.ry;
        self.amplitude * (-(u * u + v * v) / 2.0).exp()
    }
}

/// Base level, a linear gradient and one low-frequency wave, plus pixel
/// noise.
fn background(rng: &mut ChaCha8Rng, size: usize, p: &SynthParams) -> Vec<f64> {
    let s = size as f64;
    let base = rng.random_range(p.base.0..p.base.1);
    let theta = rng.random_range(0.0..2.0 * PI);
    let slope = rng.random_range(0.0..=p.max_slope);
    let (wave_amp, wave_freq, wave_dir, wave_phase) = (
        rng.random_range(0.0..=p.max_wave),
        rng.random_range(0.5..1.5),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    );
    let noise = Normal::new(0.0, p.noise_std).expect("valid std");
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 / s - 0.5, j as f64 / s - 0.5);
            let gradient = slope * (x * theta.cos() + y * theta.sin());
            let along = x * wave_dir.cos() + y * wave_dir.sin();
            let wave = wave_amp * (2.0 * PI * wave_freq * along + wave_phase).sin();
            out.push(base + gradient + wave + noise.sample(rng));
        }
    }
    out
}

fn to_tensor(gray: &[f64], size: usize) -> Tensor<f32> {
    Tensor::from_fn(Shape::new(1, size, size, 3), |_, i, j, _| {
        gray[i * size + j].clamp(0.0, 1.0) as f32
    })
}

/// `n` images per class at `size × size`, fully determined by `seed`.
pub fn synth_generate(n: usize, size: usize, seed: u64) -> Result<SyntheticSet> {
    synth_generate_with(n, size, seed, &SynthParams::default())
}

pub fn synth_generate_with(n: usize, size: usize, seed: u64, params: &SynthParams) -> Result<SyntheticSet> {
    if n == 0 || size < 4 {
        return Err(Error::InvalidSynth(format!("need n > 0 and size >= 4, got n={n} size={size}")));
    }
    let valid = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
    if !(valid(params.base) && valid(params.radius) && valid(params.amplitude))
        || params.radius.0 <= 0.0
        || params.amplitude.0 <= 0.0
        || params.max_blobs == 0
        || !(params.noise_std >= 0.0 && params.max_slope >= 0.0 && params.max_wave >= 0.0)
    {
        return Err(Error::InvalidSynth(format!("invalid generator parameters {params:?}")));
    }
    let mut set = SyntheticSet {
        size,
        normal: Vec::with_capacity(n),
        opacity: Vec::with_capacity(n),
        blobs: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let bg = background(&mut rng, size, params);
        let count = rng.random_range(1..=params.max_blobs);
        let ellipses: Vec<Ellipse> = (0..count)
            .map(|_| Ellipse::sample(&mut rng, size as f64, params))
            .collect();
        let mut lit = bg.clone();
        for (k, v) in lit.iter_mut().enumerate() {
            let (y, x) = ((k / size) as f64 + 0.5, (k % size) as f64 + 0.5);
            *v += ellipses.iter().map(|e| e.value(y, x)).sum::<f64>();
        }
        set.normal.push(to_tensor(&bg, size));
        set.opacity.push(to_tensor(&lit, size));
        set.blobs.push(count);
    }
    Ok(set)
}

impl SyntheticSet {
    pub fn images(&self, label: Label) -> &[Tensor<f32>] {
        match label {
            Label::Normal => &self.normal,
            Label::Opacity => &self.opacity,
        }
    }

    /// Write 8-bit grayscale PNGs to `<dir>/{NORMAL,OPACITY}/NNNNN.png`.
    pub fn write_png(&self, dir: &Path) -> Result<()> {
        for label in Label::BOTH {
            let class_dir = dir.join(label.dir_name());
            fs::create_dir_all(&class_dir)?;
            for (i, t) in self.images(label).iter().enumerate() {
                let s = self.size as u32;
                let img = GrayImage::from_fn(s, s, |x, y| {
                    let v = t.get(0, y as usize, x as usize, 0);
                    Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
                });
                img.save(class_dir.join(format!("{i:05}.png")))?;
            }
        }
        Ok(())
    }
}

impl ImageSource for SyntheticSet {
    fn image_size(&self) -> usize {
        self.size
    }

    fn count(&self, label: Label) -> usize {
        self.images(label).len()
    }

    fn load(&self, label: Label, index: usize) -> Result<Tensor<f32>> {
        Ok(self.images(label)[index].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(t: &Tensor<f32>) -> f64 {
        t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_generate(3, 16, 7).unwrap();
        let b = synth_generate(3, 16, 7).unwrap();
        let c = synth_generate(3, 16, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.normal, c.normal);
    }

    #[test]
    fn prefix_stable_in_n() {
        let a = synth_generate(2, 16, 1).unwrap();
        let b = synth_generate(5, 16, 1).unwrap();
        assert_eq!(a.normal[..], b.normal[..2]);
        assert_eq!(a.opacity[..], b.opacity[..2]);
    }

    #[test]
    fn opacity_is_brighter_than_its_pair() {
        let set = synth_generate(20, 32, 3).unwrap();
        for (n, o) in set.normal.iter().zip(&set.opacity) {
            assert!(mean(o) > mean(n));
        }
        assert!(set.blobs.iter().all(|&b| (1..=3).contains(&b)));
    }

    #[test]
    fn values_in_unit_range_and_gray() {
        let set = synth_generate(4, 16, 0).unwrap();
        for t in set.normal.iter().chain(&set.opacity) {
            assert_eq!(t.shape(), Shape::new(1, 16, 16, 3));
            for i in 0..16 {
                for j in 0..16 {
                    let v = t.get(0, i, j, 0);
                    assert!((0.0..=1.0).contains(&v));
                    assert_eq!(v, t.get(0, i, j, 1));
                    assert_eq!(v, t.get(0, i, j, 2));
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(synth_generate(0, 16, 0).is_err());
        assert!(synth_generate(2, 2, 0).is_err());
    }
}
