//! Activation heat maps before and after the multiplication layer.
//!
//! Each task's map is the mean of the backbone channels, weighted by how
//! strongly the task head's first layer reads each channel (mean absolute
//! weight). Maps are upsampled to the input resolution by pixel
//! replication, so masked cells stay exactly zero, and colour-mapped with a
//! scale shared by the before and after panels.

use std::path::{Path, PathBuf};

use maskpar_core::autodiff::Mode;
use maskpar_core::data::{collate, Processed};
use maskpar_core::model::HeadLayout;
use maskpar_core::{Graph, Model};

use crate::error::Result;
use crate::png;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMaps {
    pub task: String,
    /// `g x g`, row-major.
    pub before: Vec<f32>,
    pub after: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmaps {
    pub grid: usize,
    pub maps: Vec<TaskMaps>,
    pub files: Vec<PathBuf>,
}

/// `(name, parameter prefix)` of each head.
fn heads(model: &Model<f32>) -> Vec<(String, String)> {
    match model.config().head_layout {
        HeadLayout::PerTask => {
            model.policy().tasks().iter().map(|t| (t.name.clone(), format!("head.{}", t.name))).collect()
        }
        HeadLayout::Shared => vec![("shared".into(), "head.shared".into())],
    }
}

fn channel_weights(model: &Model<f32>, prefix: &str) -> Vec<f32> {
    let w = &model.params().get(&format!("{prefix}.dense0.weight")).expect("head exists").tensor;
    let cols = w.shape()[1];
    w.values().chunks_exact(cols).map(|row| row.iter().map(|v| v.abs()).sum::<f32>() / cols as f32).collect()
}

fn weighted_mean(values: &[f32], weights: &[f32]) -> Vec<f32> {
    let total: f32 = weights.iter().sum();
    values
        .chunks_exact(weights.len())
        .map(|cell| cell.iter().zip(weights).map(|(v, w)| v * w).sum::<f32>() / total)
        .collect()
}

/// Black through red and yellow to white; zero is exactly black.
fn colour(t: f32) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (3.0 * t).min(1.0);
    let g = (3.0 * t - 1.0).clamp(0.0, 1.0);
    let b = (3.0 * t - 2.0).clamp(0.0, 1.0);
    [r, g, b].map(|v| (v * 255.0).round() as u8)
}

fn upsample(map: &[f32], grid: usize, size: usize, scale: f32) -> Vec<u8> {
    let f = size / grid;
    let mut out = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            out.extend(colour(map[(y / f) * grid + x / f] / scale));
        }
    }
    out
}

/// Computes the maps for one preprocessed sample; with `out` the panels are
/// written as `<id>.input.png`, `<id>.mask.png` and
/// `<id>.<task>.{before,after}.png`.
pub fn emit_heatmaps(model: &Model<f32>, sample: &Processed, out: Option<&Path>) -> Result<Heatmaps> {
    let (images, masks, _) = collate(&[sample])?;
    let mut g = Graph::new();
    let pass = model.forward(&mut g, &images, &masks, Mode::Eval, 0)?;
    let grid = sample.grid.h;
    let (fv, gv) = (g.value(pass.features).values(), g.value(pass.glimpses).values());
    let maps: Vec<TaskMaps> = heads(model)
        .into_iter()
        .map(|(task, prefix)| {
            let w = channel_weights(model, &prefix);
            TaskMaps { task, before: weighted_mean(fv, &w), after: weighted_mean(gv, &w) }
        })
        .collect();
    let mut files = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let size = sample.image.h;
        let id = &sample.id;
        let input = dir.join(format!("{id}.input.png"));
        png::write_image(&input, &sample.image)?;
        let mask: Vec<f32> = sample.grid.data.iter().map(|&v| v as f32).collect();
        let mask_path = dir.join(format!("{id}.mask.png"));
        png::write_rgb8(&mask_path, size, size, upsample(&mask, grid, size, 1.0))?;
        files.extend([input, mask_path]);
        for m in &maps {
            let scale = m.before.iter().chain(&m.after).fold(0.0f32, |a, &v| a.max(v));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            for (tag, map) in [("before", &m.before), ("after", &m.after)] {
                let p = dir.join(format!("{id}.{}.{tag}.png", m.task));
                png::write_rgb8(&p, size, size, upsample(map, grid, size, scale))?;
                files.push(p);
            }
        }
    }
    Ok(Heatmaps { grid, maps, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use maskpar_core::data::{preprocess, synth_generate, synthetic_policy, Mask, SynthSpec};
    use maskpar_core::ModelConfig;

    fn sample() -> (Model<f32>, Processed) {
        let cfg = ModelConfig::desk_light();
        let s = &synth_generate(&SynthSpec::new(1, 0.5, 0.0, 2)).unwrap()[0];
        (
            Model::new(cfg.clone(), synthetic_policy(), 1).unwrap(),
            preprocess(s, cfg.input_size, cfg.mask_grid()).unwrap(),
        )
    }

    #[test]
    fn background_is_exactly_zero_after_masking() {
        let (model, p) = sample();
        let h = emit_heatmaps(&model, &p, None).unwrap();
        assert_eq!(h.maps.len(), 5);
        for m in &h.maps {
            for (i, &on) in p.grid.data.iter().enumerate() {
                if on == 0 {
                    assert_eq!(m.after[i], 0.0);
                } else {
                    assert_eq!(m.after[i], m.before[i]);
                }
            }
        }
    }

    #[test]
    fn full_mask_leaves_maps_alone() {
        let (model, mut p) = sample();
        p.grid = Mask::filled(p.grid.h, p.grid.w, 1);
        for m in emit_heatmaps(&model, &p, None).unwrap().maps {
            assert_eq!(m.before, m.after);
        }
    }

    #[test]
    fn panels_are_pngs_at_input_size() {
        let (model, p) = sample();
        let dir = tempfile::tempdir().unwrap();
        let h = emit_heatmaps(&model, &p, Some(dir.path())).unwrap();
        assert_eq!(h.files.len(), 2 + 2 * 5);
        for f in &h.files {
            let img = image::open(f).unwrap();
            assert_eq!((img.width() as usize, img.height() as usize), (p.image.w, p.image.h));
        }
        // background cells of an after panel are black
        let after = image::open(dir.path().join(format!("{}.Head.after.png", p.id))).unwrap().to_rgb8();
        let f = p.image.h / p.grid.h;
        for (i, &on) in p.grid.data.iter().enumerate() {
            if on == 0 {
                let (y, x) = ((i / p.grid.w) * f, (i % p.grid.w) * f);
                assert_eq!(after.get_pixel(x as u32, y as u32).0, [0, 0, 0]);
            }
        }
    }
}
