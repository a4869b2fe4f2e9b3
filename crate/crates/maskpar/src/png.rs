//! 8-bit PNG images and masks.

use std::path::Path;

use image::{GrayImage, RgbImage};
use maskpar_core::data::{Image, Mask};

use crate::error::{Error, Result};

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image { path: path.to_path_buf(), source },
    })
}

/// Any PNG as RGB in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let rgb = open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Image::new(h as usize, w as usize, data)?)
}

/// A grayscale PNG; values of 128 and above are foreground.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let gray = open(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| (v >= 128) as u8).collect();
    Ok(Mask::new(h as usize, w as usize, data)?)
}

fn save(img: impl FnOnce(&Path) -> image::ImageResult<()>, path: &Path) -> Result<()> {
    img(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let raw = image.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = RgbImage::from_raw(image.w as u32, image.h as u32, raw).expect("buffer matches dimensions");
    save(|p| buf.save(p), path)
}

/// Foreground 255, background 0.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let raw = mask.data.iter().map(|&v| v * 255).collect();
    let buf = GrayImage::from_raw(mask.w as u32, mask.h as u32, raw).expect("buffer matches dimensions");
    save(|p| buf.save(p), path)
}

pub(crate) fn write_rgb8(path: &Path, h: usize, w: usize, raw: Vec<u8>) -> Result<()> {
    let buf = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions");
    save(|p| buf.save(p), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_8_bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..5 * 3 * 3).map(|i| (i * 17 % 256) as f32 / 255.0).collect();
        let img = Image::new(5, 3, data).unwrap();
        let mask = Mask::new(5, 3, (0..15).map(|i| (i % 2) as u8).collect()).unwrap();
        write_image(&dir.path().join("i.png"), &img).unwrap();
        write_mask(&dir.path().join("m.png"), &mask).unwrap();
        assert_eq!(read_image(&dir.path().join("i.png")).unwrap(), img);
        assert_eq!(read_mask(&dir.path().join("m.png")).unwrap(), mask);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(read_image(Path::new("/nonexistent/x.png")), Err(Error::Io { .. })));
    }
}
