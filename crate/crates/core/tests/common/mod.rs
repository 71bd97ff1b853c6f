#![allow(dead_code)]

pub mod gradcases;
pub mod oracle;

use std::path::Path;

use viola_core::train::{synthetic, RunConfig};

/// Phantom extents and spacing shared by the end-to-end tests.
pub const TOY_DIMS: [usize; 3] = [24, 24, 12];
pub const TOY_SPACING: [f64; 3] = [1.0, 1.0, 2.0];
pub const TOY_DATA_SEED: u64 = 11;

/// Writes the four-case sphere dataset into `dir`.
pub fn toy_dataset(dir: &Path) {
    synthetic::write_sphere_dataset(dir, 4, TOY_DIMS, TOY_SPACING, TOY_DATA_SEED).unwrap();
}

/// Two-stage network with attention on the full-resolution decoder level.
/// `extra` lines override or add keys.
pub fn toy_config(data: &Path, out: &Path, extra: &str) -> RunConfig {
    let text = format!(
        r#"
        preset = "custom"
        data_root = "{}"
        output_dir = "{}"
        encoder_channels = [8, 16]
        decoder_channels = [8]
        attention_levels = [0]
        deep_supervision_heads = 0
        patch_size = [16, 16, 8]
        batch_size = 2
        base_lr = 0.1
        warmup_steps = 10
        momentum = 0.9
        num_folds = 4
        seed = 3
        {extra}
        "#,
        data.display(),
        out.display()
    );
    RunConfig::from_toml(&text, Path::new(".")).unwrap()
}
