//! Random affine augmentation applied jointly to image and mask.
//!
//! The forward map, about the image centre `c`, is
//! `p' = R(angle) * Shear(shear) * zoom * Flip * (p - c) + c + shift`.
//! Output pixels are filled by inverse mapping: bilinear for the image,
//! nearest neighbour for the mask, zeros outside the source frame.

use super::preprocess::{downsample_mask, Processed};
use super::{Image, Mask};
use crate::error::Result;
use crate::rng;

pub const MAX_ROTATION_DEG: f64 = 5.0;
pub const FLIP_PROBABILITY: f64 = 0.5;
pub const MAX_SHIFT: f64 = 0.02;
pub const MAX_SHEAR: f64 = 0.05;
pub const ZOOM_RANGE: (f64, f64) = (0.92, 1.08);
pub const BRIGHTNESS_RANGE: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Radians.
    pub angle: f64,
    pub flip: bool,
    /// Fractions of the width and height.
    pub shift_x: f64,
    pub shift_y: f64,
    /// Radians.
    pub shear: f64,
    pub zoom: f64,
    pub brightness: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { angle: 0.0, flip: false, shift_x: 0.0, shift_y: 0.0, shear: 0.0, zoom: 1.0, brightness: 1.0 }
    }

    pub fn sample<R: rand::Rng + ?Sized>(r: &mut R) -> Self {
        Self {
            angle: r.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG).to_radians(),
            flip: r.random_bool(FLIP_PROBABILITY),
            shift_x: r.random_range(-MAX_SHIFT..=MAX_SHIFT),
            shift_y: r.random_range(-MAX_SHIFT..=MAX_SHIFT),
            shear: r.random_range(-MAX_SHEAR..=MAX_SHEAR),
            zoom: r.random_range(ZOOM_RANGE.0..=ZOOM_RANGE.1),
            brightness: r.random_range(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1),
        }
    }

    /// Output pixel-centre position -> source position, both in pixel units
    /// with pixel `i` covering `[i, i + 1)`.
    fn inverse(&self, h: usize, w: usize) -> impl Fn(f64, f64) -> (f64, f64) {
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (tx, ty) = (self.shift_x * w as f64, self.shift_y * h as f64);
        let (sin, cos) = libm::sincos(self.angle);
        let tan = libm::tan(self.shear);
        let (zoom, flip) = (self.zoom, self.flip);
        move |x, y| {
            let (qx, qy) = (x - cx - tx, y - cy - ty);
            // R^-1
            let (qx, qy) = (cos * qx + sin * qy, -sin * qx + cos * qy);
            // Shear^-1 with Shear = [[1, tan], [0, 1]]
            let qx = qx - tan * qy;
            let (mut qx, qy) = (qx / zoom, qy / zoom);
            if flip {
                qx = -qx;
            }
            (qx + cx, qy + cy)
        }
    }
}

fn sample_bilinear(img: &Image, sx: f64, sy: f64) -> [f32; 3] {
    // index space: pixel centres at integers
    let (fx, fy) = (sx - 0.5, sy - 0.5);
    let (x0, y0) = (libm::floor(fx), libm::floor(fy));
    let (ax, ay) = ((fx - x0) as f32, (fy - y0) as f32);
    let mut out = [0.0f32; 3];
    for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
        for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
            let (x, y) = (x0 as i64 + dx, y0 as i64 + dy);
            if wx * wy == 0.0 || x < 0 || y < 0 || x >= img.w as i64 || y >= img.h as i64 {
                continue;
            }
            let p = img.pixel(y as usize, x as usize);
            for k in 0..3 {
                out[k] += wx * wy * p[k];
            }
        }
    }
    out
}

/// Applies `params` to image and mask and recomputes the mask grid. Labels
/// are untouched.
pub fn augment(p: &Processed, params: &AugmentParams) -> Result<Processed> {
    let (h, w) = (p.image.h, p.image.w);
    let inv = params.inverse(h, w);
    let mut image = Image::filled(h, w, [0.0; 3]);
    let mut mask = Mask::filled(h, w, 0);
    let b = params.brightness as f32;
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv(x as f64 + 0.5, y as f64 + 0.5);
            let rgb = sample_bilinear(&p.image, sx, sy);
            image.set(y, x, rgb.map(|v| (v * b).clamp(0.0, 1.0)));
            let (mx, my) = (libm::floor(sx), libm::floor(sy));
            if mx >= 0.0 && my >= 0.0 && (mx as usize) < p.mask.w && (my as usize) < p.mask.h {
                mask.data[y * w + x] = p.mask.get(my as usize, mx as usize);
            }
        }
    }
    let grid = downsample_mask(&mask, p.grid.h)?;
    Ok(Processed { id: p.id.clone(), image, mask, grid, labels: p.labels.clone() })
}

/// Augments with parameters drawn from the `(seed, sample id, epoch)` stream.
pub fn augment_seeded(p: &Processed, seed: u64, epoch: u64) -> Result<Processed> {
    let mut r = rng::sample_rng(seed, &p.id, epoch);
    augment(p, &AugmentParams::sample(&mut r))
}
