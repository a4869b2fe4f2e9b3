//! Square padding, resizing and mask-grid downsampling.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Image, Mask, Sample};
use crate::error::{config_err, invalid, Result};

/// A sample ready for the network: `S x S` image and mask, plus the mask
/// reduced to the `g x g` feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub id: String,
    pub image: Image,
    pub mask: Mask,
    pub grid: Mask,
    pub labels: Vec<u8>,
}

/// Zero-pads to a square, centred; an odd remainder goes to the bottom/right.
pub fn pad_square(image: &Image, mask: &Mask) -> (Image, Mask) {
    let side = image.h.max(image.w);
    if image.h == image.w {
        return (image.clone(), mask.clone());
    }
    let top = (side - image.h) / 2;
    let left = (side - image.w) / 2;
    let mut img = Image::filled(side, side, [0.0; 3]);
    let mut msk = Mask::filled(side, side, 0);
    for y in 0..image.h {
        let src = y * image.w;
        let dst = (y + top) * side + left;
        img.data[dst * 3..(dst + image.w) * 3].copy_from_slice(&image.data[src * 3..(src + image.w) * 3]);
        msk.data[dst..dst + image.w].copy_from_slice(&mask.data[src..src + image.w]);
    }
    (img, msk)
}

/// Source coordinate and weight of the second tap for output index `d`
/// (half-pixel centres, clamped at the border).
fn taps(d: usize, n_in: usize, n_out: usize) -> (usize, usize, f32) {
    let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
    let i0 = libm::floor(s) as usize;
    let i1 = (i0 + 1).min(n_in - 1);
    (i0, i1, (s - i0 as f64) as f32)
}

/// Bilinear resize. Resizing to the same size is the identity.
pub fn resize_bilinear(image: &Image, oh: usize, ow: usize) -> Image {
    let xt: Vec<_> = (0..ow).map(|x| taps(x, image.w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow * 3);
    for y in 0..oh {
        let (y0, y1, fy) = taps(y, image.h, oh);
        for &(x0, x1, fx) in &xt {
            let (a, b, c, d) = (image.pixel(y0, x0), image.pixel(y0, x1), image.pixel(y1, x0), image.pixel(y1, x1));
            for k in 0..3 {
                let top = a[k] * (1.0 - fx) + b[k] * fx;
                let bot = c[k] * (1.0 - fx) + d[k] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Image { h: oh, w: ow, data: out }
}

/// Nearest-neighbour resize, which keeps the mask binary.
pub fn resize_nearest(mask: &Mask, oh: usize, ow: usize) -> Mask {
    let pick = |d: usize, n_in: usize, n_out: usize| ((d * 2 + 1) * n_in / (2 * n_out)).min(n_in - 1);
    let mut data = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = pick(y, mask.h, oh);
        for x in 0..ow {
            data.push(mask.get(sy, pick(x, mask.w, ow)));
        }
    }
    Mask { h: oh, w: ow, data }
}

/// Area average over `(S/g)^2` blocks, then `>= 0.5` -> 1.
pub fn downsample_mask(mask: &Mask, grid: usize) -> Result<Mask> {
    if grid == 0 || !mask.h.is_multiple_of(grid) || !mask.w.is_multiple_of(grid) {
        return Err(config_err!("{}x{} mask does not split into a {}x{} grid", mask.h, mask.w, grid, grid));
    }
    let (bh, bw) = (mask.h / grid, mask.w / grid);
    let mut data = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            let mut on = 0;
            for y in gy * bh..(gy + 1) * bh {
                on += mask.data[y * mask.w + gx * bw..y * mask.w + (gx + 1) * bw]
                    .iter()
                    .map(|&v| v as usize)
                    .sum::<usize>();
            }
            data.push((2 * on >= bh * bw) as u8);
        }
    }
    Ok(Mask { h: grid, w: grid, data })
}

/// Pads to a square, resizes to `target_size` and reduces the mask to the
/// `mask_grid` feature grid.
pub fn preprocess(sample: &Sample, target_size: usize, mask_grid: usize) -> Result<Processed> {
    if sample.image.h == 0 || sample.image.w == 0 || sample.image.data.is_empty() {
        return Err(invalid!("sample '{}' has an empty image", sample.id));
    }
    if mask_grid == 0 || !target_size.is_multiple_of(mask_grid) {
        return Err(config_err!("target size {} is not divisible by mask grid {}", target_size, mask_grid));
    }
    let (img, msk) = pad_square(&sample.image, &sample.mask);
    let image = if img.h == target_size { img } else { resize_bilinear(&img, target_size, target_size) };
    let mask = if msk.h == target_size { msk } else { resize_nearest(&msk, target_size, target_size) };
    let grid = downsample_mask(&mask, mask_grid)?;
    Ok(Processed { id: sample.id.clone(), image, mask, grid, labels: sample.labels.clone() })
}

impl Processed {
    /// Back to a [`Sample`] carrying the processed image and mask.
    pub fn to_sample(&self) -> Sample {
        Sample { id: self.id.clone(), image: self.image.clone(), mask: self.mask.clone(), labels: self.labels.clone() }
    }
}
