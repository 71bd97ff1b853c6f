use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::tensor::conv_output_extent;
use crate::viola::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GROUPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    ViolaS,
    ViolaL,
    NnunetBase,
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viola_s" => Ok(Preset::ViolaS),
            "viola_l" => Ok(Preset::ViolaL),
            "nnunet_base" => Ok(Preset::NnunetBase),
            "custom" => Ok(Preset::Custom),
            other => Err(config_err!("unknown preset `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub preset: Preset,
    pub in_channels: usize,
    pub num_classes: usize,
    /// Widths from full resolution down to the bottleneck.
    pub encoder_channels: Vec<usize>,
    /// Widths of decoder levels `0..n-1`; level `i` runs at encoder level `i`'s resolution.
    pub decoder_channels: Vec<usize>,
    /// Downsampling stride into encoder level `i+1`, per (H, W, D).
    pub stage_strides: Vec<[usize; 3]>,
    /// Decoder levels followed by an attention module.
    pub attention_levels: Vec<usize>,
    /// Auxiliary heads on decoder levels `1..=deep_supervision_heads`.
    pub deep_supervision_heads: usize,
    pub patch_size: [usize; 3],
    pub viola_alpha: f64,
    pub viola_beta: f64,
    pub viola_groups: usize,
    /// HU window `[low, high]` feeding each input channel.
    pub input_windows: Vec<[f64; 2]>,
}

/// The three-window CT stack: broad tissue, brain, blood.
pub const DEFAULT_INPUT_WINDOWS: [[f64; 2]; 3] = [[-200.0, 1300.0], [0.0, 100.0], [-20.0, 200.0]];

/// Per-stage strides for a patch: in-plane axes halve while they can; the
/// depth axis is kept for the first two downsamplings, then halves while it can.
pub fn default_strides(patch: [usize; 3], downsamplings: usize) -> Vec<[usize; 3]> {
    let mut extent = patch;
    (0..downsamplings)
        .map(|i| {
            let mut s = [1usize; 3];
            for axis in 0..3 {
                let allowed = axis < 2 || i >= 2;
                if allowed && extent[axis] >= 2 {
                    s[axis] = 2;
                }
                extent[axis] = conv_output_extent(extent[axis], 3, s[axis], 1, 1).unwrap_or(1);
            }
            s
        })
        .collect()
}

/// Largest divisor of `channels` not above 8.
pub fn norm_groups(channels: usize) -> usize {
    (1..=channels.min(8)).rev().find(|g| channels % g == 0).unwrap_or(1)
}

impl NetworkConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::ViolaS | Preset::ViolaL | Preset::Custom => {
                let encoder = vec![32, 64, 96, 128, 192, 256, 320];
                let decoder = if preset == Preset::ViolaL {
                    vec![64, 128, 192, 256, 256, 256]
                } else {
                    vec![32, 64, 96, 128, 128, 128]
                };
                let patch = [160, 160, 16];
                NetworkConfig {
                    preset,
                    in_channels: 3,
                    num_classes: 2,
                    stage_strides: default_strides(patch, encoder.len() - 1),
                    attention_levels: (1..decoder.len()).collect(),
                    encoder_channels: encoder,
                    decoder_channels: decoder,
                    deep_supervision_heads: 2,
                    patch_size: patch,
                    viola_alpha: DEFAULT_ALPHA,
                    viola_beta: DEFAULT_BETA,
                    viola_groups: DEFAULT_GROUPS,
                    input_windows: DEFAULT_INPUT_WINDOWS.to_vec(),
                }
            }
            Preset::NnunetBase => {
                let encoder = vec![32, 64, 128, 256, 320, 320];
                let patch = [320, 320, 16];
                NetworkConfig {
                    preset,
                    in_channels: 1,
                    num_classes: 2,
                    stage_strides: default_strides(patch, encoder.len() - 1),
                    decoder_channels: encoder[..encoder.len() - 1].to_vec(),
                    encoder_channels: encoder,
                    attention_levels: vec![],
                    deep_supervision_heads: 4,
                    patch_size: patch,
                    viola_alpha: DEFAULT_ALPHA,
                    viola_beta: DEFAULT_BETA,
                    viola_groups: DEFAULT_GROUPS,
                    input_windows: vec![[crate::volume::HU_MIN, crate::volume::HU_MAX]],
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial extents at each encoder level for `input` extents.
    pub fn level_extents(&self, input: [usize; 3]) -> Vec<[usize; 3]> {
        let mut out = vec![input];
        let mut cur = input;
        for s in &self.stage_strides {
            for a in 0..3 {
                cur[a] = conv_output_extent(cur[a], 3, s[a], 1, 1).unwrap_or(0);
            }
            out.push(cur);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.depth();
        if n < 2 {
            return Err(config_err!("encoder needs at least 2 levels, got {n}"));
        }
        if self.decoder_channels.len() != n - 1 {
            return Err(config_err!(
                "len(decoder_channels) = {} but must be len(encoder_channels) - 1 = {}",
                self.decoder_channels.len(),
                n - 1
            ));
        }
        if self.stage_strides.len() != n - 1 {
            return Err(config_err!(
                "len(stage_strides) = {} but must be {}",
                self.stage_strides.len(),
                n - 1
            ));
        }
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(config_err!("in_channels and num_classes must be positive"));
        }
        if let Some(c) = self
            .encoder_channels
            .iter()
            .chain(&self.decoder_channels)
            .find(|&&c| c == 0)
        {
            return Err(config_err!("channel width {c} must be positive"));
        }
        if self.stage_strides.iter().flatten().any(|&s| s == 0) {
            return Err(config_err!("strides must be positive"));
        }
        for &l in &self.attention_levels {
            if l >= n - 1 {
                return Err(config_err!(
                    "attention level {l} is not a decoder level (0..{})",
                    n - 1
                ));
            }
            let c = self.decoder_channels[l];
            if self.viola_groups == 0 || c % self.viola_groups != 0 {
                return Err(config_err!(
                    "attention level {l}: {c} channels not divisible into {} groups",
                    self.viola_groups
                ));
            }
        }
        let mut seen = self.attention_levels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.attention_levels.len() {
            return Err(config_err!("attention_levels contains duplicates"));
        }
        if self.deep_supervision_heads > n.saturating_sub(2) {
            return Err(config_err!(
                "{} deep supervision heads requested but only decoder levels 1..={} are available",
                self.deep_supervision_heads,
                n - 2
            ));
        }
        if !(self.viola_alpha > 0.0) || !(self.viola_beta >= 0.0) {
            return Err(config_err!("viola_alpha must be > 0 and viola_beta >= 0"));
        }
        if self.input_windows.len() != self.in_channels {
            return Err(config_err!(
                "{} input windows for in_channels = {}",
                self.input_windows.len(),
                self.in_channels
            ));
        }
        if let Some(w) = self.input_windows.iter().find(|w| !(w[0] < w[1])) {
            return Err(config_err!("input window {w:?} needs low < high"));
        }
        if self.patch_size.contains(&0) {
            return Err(config_err!("patch size must be positive"));
        }
        for (i, e) in self.level_extents(self.patch_size).iter().enumerate() {
            if e.contains(&0) {
                return Err(config_err!("patch {:?} collapses at encoder level {i}", self.patch_size));
            }
        }
        Ok(())
    }
}
