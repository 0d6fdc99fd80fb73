//! Directory-backed chest X-ray datasets.
//!
//! Expected layout: `<root>/{train,val}/{NORMAL,OPACITY}/*`. Files in each
//! class directory are ordered by the bytes of their file names, and fold
//! indices refer to that order.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ImageSource, Label};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const INPUT_SIZE: usize = 256;

/// 8-bit RGB pixels in row-major `(y, x, channel)` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::LengthMismatch {
                expected: width * height * 3,
                found: rgb.len(),
            });
        }
        Ok(Self { width, height, rgb })
    }

    /// Grayscale inputs are replicated into all three channels.
    pub fn from_dynamic(img: &image::DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        Self {
            width: rgb.width() as usize,
            height: rgb.height() as usize,
            rgb: rgb.into_raw(),
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::from_dynamic(&image::open(path)?))
    }
}

/// Source coordinate of destination pixel `i` under half-pixel centers,
/// clamped to the valid range; returns the two taps and the weight of the
/// upper one.
fn taps(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let scale = src as f64 / dst as f64;
    let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = x.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, x - lo as f64)
}

/// Bilinear resize to `target × target` (aspect ratio is not preserved) and
/// scale to `[0, 1]` by dividing by 255.
pub fn resize_normalize(raw: &RawImage, target: usize) -> Result<Tensor<f32>> {
    if raw.width == 0 || raw.height == 0 || target == 0 {
        return Err(Error::EmptyImage);
    }
    let xs: Vec<_> = (0..target).map(|j| taps(j, raw.width, target)).collect();
    let ys: Vec<_> = (0..target).map(|i| taps(i, raw.height, target)).collect();
    let px = |x: usize, y: usize, c: usize| raw.rgb[(y * raw.width + x) * 3 + c] as f64;
    let mut data = Vec::with_capacity(target * target * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
                let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(((v / 255.0).clamp(0.0, 1.0)) as f32);
            }
        }
    }
    Tensor::from_vec(Shape::new(1, target, target, 3), data)
}

/// Class counts and raw image dimension statistics (population standard
/// deviation), measured before any resizing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub normal: usize,
    pub opacity: usize,
    pub width_mean: f64,
    pub width_std: f64,
    pub height_mean: f64,
    pub height_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl DatasetStats {
    /// `dims` holds `(width, height)` of every counted image.
    pub fn from_dims(normal: usize, opacity: usize, dims: &[(usize, usize)]) -> Self {
        let (width_mean, width_std) = mean_std(dims.iter().map(|d| d.0 as f64));
        let (height_mean, height_std) = mean_std(dims.iter().map(|d| d.1 as f64));
        Self {
            normal,
            opacity,
            width_mean,
            width_std,
            height_mean,
            height_std,
        }
    }
}

/// One split (train or val) of a dataset on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DirSplit {
    pub size: usize,
    pub normal: Vec<PathBuf>,
    pub opacity: Vec<PathBuf>,
    pub stats: DatasetStats,
}

fn class_dir(split: &Path, label: Label) -> PathBuf {
    split.join(label.dir_name())
}

/// Readable image files of one class directory, in byte order of file name,
/// plus their raw dimensions.
fn scan_class(dir: &Path) -> Result<(Vec<PathBuf>, Vec<(usize, usize)>)> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort_by(|a, b| {
        let key = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec()).unwrap_or_default();
        key(a).cmp(&key(b))
    });
    let mut kept = Vec::with_capacity(files.len());
    let mut dims = Vec::with_capacity(files.len());
    for f in files {
        match image::image_dimensions(&f) {
            Ok((w, h)) if w > 0 && h > 0 => {
                kept.push(f);
                dims.push((w as usize, h as usize));
            }
            Ok(_) => warn!("skipping empty image {}", f.display()),
            Err(e) => warn!("skipping unreadable image {}: {e}", f.display()),
        }
    }
    Ok((kept, dims))
}

impl DirSplit {
    pub fn scan(split_dir: &Path, size: usize) -> Result<Self> {
        let (normal, mut dims) = scan_class(&class_dir(split_dir, Label::Normal))?;
        let (opacity, more) = scan_class(&class_dir(split_dir, Label::Opacity))?;
        dims.extend(more);
        let stats = DatasetStats::from_dims(normal.len(), opacity.len(), &dims);
        Ok(Self {
            size,
            normal,
            opacity,
            stats,
        })
    }

    pub fn path(&self, label: Label, index: usize) -> &Path {
        match label {
            Label::Normal => &self.normal[index],
            Label::Opacity => &self.opacity[index],
        }
    }
}

impl ImageSource for DirSplit {
    fn image_size(&self) -> usize {
        self.size
    }

    fn count(&self, label: Label) -> usize {
        match label {
            Label::Normal => self.normal.len(),
            Label::Opacity => self.opacity.len(),
        }
    }

    fn load(&self, label: Label, index: usize) -> Result<Tensor<f32>> {
        resize_normalize(&RawImage::open(self.path(label, index))?, self.size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: DirSplit,
    pub val: DirSplit,
}

/// Index `<root>/train` and `<root>/val` at the default 256 input size.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    load_dataset_sized(root, INPUT_SIZE)
}

pub fn load_dataset_sized(root: &Path, size: usize) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    Ok(Dataset {
        train: DirSplit::scan(&root.join("train"), size)?,
        val: DirSplit::scan(&root.join("val"), size)?,
    })
}
