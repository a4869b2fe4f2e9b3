use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// How attribute outputs are produced on top of the pooled features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// One branch head per task.
    PerTask,
    /// A single head whose last layer emits every attribute.
    Shared,
}

/// Network architecture.
///
/// The backbone is a stem convolution followed by `stages` residual stages;
/// each stage opens with a stride-2 block, so the feature grid (and the mask
/// grid) is `input_size / 2^stages`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub stem_channels: usize,
    #[serde(default = "default_stem_kernel")]
    pub stem_kernel: usize,
    pub stages: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_stage: usize,
    /// Output channels per stage; the last entry is the feature depth `D`.
    pub stage_channels: Vec<usize>,
    /// Hidden widths of the three ReLU layers of each branch head.
    pub branch_widths: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default = "default_layout")]
    pub head_layout: HeadLayout,
    #[serde(default = "default_true")]
    pub multiplication_layer: bool,
}

fn default_stem_kernel() -> usize {
    7
}
fn default_blocks() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.7
}
fn default_layout() -> HeadLayout {
    HeadLayout::PerTask
}
fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// 256x256 input, four stages, `D = 1024`.
    pub fn full_scale() -> Self {
        Self {
            input_size: 256,
            stem_channels: 64,
            stem_kernel: 7,
            stages: 4,
            blocks_per_stage: 2,
            stage_channels: vec![128, 256, 512, 1024],
            branch_widths: vec![512, 256, 128],
            dropout_p: 0.7,
            head_layout: HeadLayout::PerTask,
            multiplication_layer: true,
        }
    }

    /// The ablation network: three residual blocks on 128x128 inputs.
    pub fn light() -> Self {
        Self {
            input_size: 128,
            stages: 3,
            blocks_per_stage: 1,
            stage_channels: vec![128, 256, 512],
            ..Self::full_scale()
        }
    }

    /// Laptop-sized network with the full-scale shape relationships.
    pub fn desk() -> Self {
        Self {
            input_size: 64,
            stem_channels: 8,
            stem_kernel: 7,
            stages: 4,
            blocks_per_stage: 2,
            stage_channels: vec![8, 16, 32, 32],
            branch_widths: vec![64, 32, 16],
            dropout_p: 0.7,
            head_layout: HeadLayout::PerTask,
            multiplication_layer: true,
        }
    }

    /// The light (three single-block stages) network at desk scale.
    pub fn desk_light() -> Self {
        Self {
            input_size: 32,
            stem_channels: 8,
            stem_kernel: 3,
            stages: 3,
            blocks_per_stage: 1,
            stage_channels: vec![8, 16, 16],
            branch_widths: vec![32, 32, 16],
            ..Self::desk()
        }
    }

    /// Side of the square feature grid the mask is resampled to.
    pub fn mask_grid(&self) -> usize {
        self.input_size >> self.stages
    }

    /// Depth `D` of the backbone output.
    pub fn feature_depth(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&self.stem_channels)
    }

    /// `[grid, grid, D]` shape of the backbone output.
    pub fn feature_shape(&self) -> [usize; 3] {
        let g = self.mask_grid();
        [g, g, self.feature_depth()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.stages >= usize::BITS as usize {
            return Err(config_err!("stages must be positive, got {}", self.stages));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(1 << self.stages) {
            return Err(config_err!("input size {} is not divisible by 2^{}", self.input_size, self.stages));
        }
        if self.stage_channels.len() != self.stages {
            return Err(config_err!("{} stage channel counts for {} stages", self.stage_channels.len(), self.stages));
        }
        if self.stem_channels == 0 || self.stage_channels.contains(&0) {
            return Err(config_err!("channel counts must be positive"));
        }
        if self.stem_kernel == 0 || self.stem_kernel.is_multiple_of(2) {
            return Err(config_err!("stem kernel must be odd, got {}", self.stem_kernel));
        }
        if self.blocks_per_stage == 0 {
            return Err(config_err!("blocks_per_stage must be positive"));
        }
        if self.branch_widths.len() != 3 || self.branch_widths.contains(&0) {
            return Err(config_err!("branch_widths must hold three positive widths"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(config_err!("dropout probability {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }
}
