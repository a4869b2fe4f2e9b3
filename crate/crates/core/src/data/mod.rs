//! Images, masks and samples, plus preprocessing, augmentation and the
//! synthetic figure generator.

pub mod augment;
pub mod preprocess;
pub mod synth;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, invalid, Result};
use crate::tensor::Tensor;

pub use augment::{augment, augment_seeded, AugmentParams};
pub use preprocess::{downsample_mask, preprocess, resize_bilinear, Processed};
pub use synth::{synth_generate, synthetic_policy, SynthSpec};

/// RGB image, row-major `H x W x 3`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(invalid!("empty {}x{} image", h, w));
        }
        if data.len() != h * w * 3 {
            return Err(dim_err!("{}x{}x3 image needs {} values, got {}", h, w, h * w * 3, data.len()));
        }
        Ok(Self { h, w, data })
    }

    pub fn filled(h: usize, w: usize, rgb: [f32; 3]) -> Self {
        let data = (0..h * w).flat_map(|_| rgb).collect();
        Self { h, w, data }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Binary foreground mask, row-major `H x W`, values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(dim_err!("{}x{} mask needs {} values, got {}", h, w, h * w, data.len()));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(invalid!("mask value {} is not binary", v));
        }
        Ok(Self { h, w, data })
    }

    pub fn filled(h: usize, w: usize, v: u8) -> Self {
        Self { h, w, data: vec![v.min(1); h * w] }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.w + x]
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn fraction(&self) -> f64 {
        self.foreground() as f64 / self.data.len().max(1) as f64
    }
}

/// One annotated example before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: Mask,
    /// Multi-hot labels in policy order.
    pub labels: Vec<u8>,
}

impl Sample {
    pub fn new(id: &str, image: Image, mask: Mask, labels: Vec<u8>) -> Result<Self> {
        if (image.h, image.w) != (mask.h, mask.w) {
            return Err(dim_err!("sample '{}': image is {}x{}, mask is {}x{}", id, image.h, image.w, mask.h, mask.w));
        }
        if let Some(v) = labels.iter().find(|&&v| v > 1) {
            return Err(invalid!("sample '{}': label value {} is not binary", id, v));
        }
        Ok(Self { id: id.into(), image, mask, labels })
    }

    /// Checks the label width and that the mask has foreground.
    pub fn validate(&self, attributes: usize) -> Result<()> {
        if self.labels.len() != attributes {
            return Err(dim_err!("sample '{}' has {} labels, expected {}", self.id, self.labels.len(), attributes));
        }
        if self.mask.foreground() == 0 {
            return Err(invalid!("sample '{}' has an empty mask", self.id));
        }
        Ok(())
    }
}

/// Stacks processed samples into `[N, S, S, 3]` images, `[N, g, g, 1]` masks
/// and `N * A` targets.
pub fn collate(items: &[&Processed]) -> Result<(Tensor<f32>, Tensor<f32>, Vec<f32>)> {
    let first = items.first().ok_or_else(|| invalid!("empty batch"))?;
    let (s, g) = (first.image.h, first.grid.h);
    let mut img = Vec::with_capacity(items.len() * s * s * 3);
    let mut msk = Vec::with_capacity(items.len() * g * g);
    let mut tgt = Vec::with_capacity(items.len() * first.labels.len());
    for p in items {
        if p.image.h != s || p.image.w != s || p.grid.h != g || p.grid.w != g || p.labels.len() != first.labels.len() {
            return Err(dim_err!("sample '{}' does not match the batch layout", p.id));
        }
        img.extend_from_slice(&p.image.data);
        msk.extend(p.grid.data.iter().map(|&v| v as f32));
        tgt.extend(p.labels.iter().map(|&v| v as f32));
    }
    let n = items.len();
    Ok((Tensor::new(vec![n, s, s, 3], img)?, Tensor::new(vec![n, g, g, 1], msk)?, tgt))
}
