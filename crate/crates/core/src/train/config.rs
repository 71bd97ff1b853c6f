use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{config_err, Error, Result};
use crate::optim::{default_ds_weights, normalize_weights, TrainConfig};
use crate::unet::{default_strides, NetworkConfig, Preset};
use crate::volume::FOREGROUND_BIAS;

/// Overlapping tile aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Uniform,
}

/// Flat configuration file. Every key is optional except `data_root`;
/// network keys override the chosen preset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    preset: Option<Preset>,
    in_channels: Option<usize>,
    num_classes: Option<usize>,
    encoder_channels: Option<Vec<usize>>,
    decoder_channels: Option<Vec<usize>>,
    stage_strides: Option<Vec<[usize; 3]>>,
    attention_levels: Option<Vec<usize>>,
    deep_supervision_heads: Option<usize>,
    patch_size: Option<[usize; 3]>,
    viola_alpha: Option<f64>,
    viola_beta: Option<f64>,
    viola_groups: Option<usize>,
    windows: Option<Vec<[f64; 2]>>,

    base_lr: Option<f64>,
    warmup_steps: Option<usize>,
    total_steps: Option<usize>,
    momentum: Option<f64>,
    batch_size: Option<usize>,
    ds_weights: Option<Vec<f64>>,
    focal_gamma: Option<f64>,
    focal_alpha: Option<f64>,
    dice_smooth: Option<f64>,

    data_root: Option<PathBuf>,
    manifest: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    fold: Option<usize>,
    num_folds: Option<usize>,
    seed: Option<u64>,
    val_every: Option<usize>,
    overlap: Option<f64>,
    aggregation: Option<Aggregation>,
    foreground_bias: Option<f64>,
    pseudo_weight: Option<f64>,
    resume: Option<bool>,
}

/// Everything a training run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data_root: PathBuf,
    /// Case manifest; relative paths inside it resolve against its directory.
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub fold: usize,
    pub num_folds: usize,
    pub seed: u64,
    pub val_every: usize,
    pub overlap: f64,
    pub aggregation: Aggregation,
    pub foreground_bias: f64,
    /// Sampling weight of a pseudo-labelled case relative to a labelled one.
    pub pseudo_weight: f64,
    pub resume: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| config_err!("{e}"))?;
        Self::from_raw(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn from_raw(r: RawRunConfig, base: &Path) -> Result<Self> {
        let mut net = NetworkConfig::preset(r.preset.unwrap_or(Preset::ViolaS));
        if let Some(p) = r.patch_size {
            net.patch_size = p;
        }
        if let Some(e) = r.encoder_channels {
            net.encoder_channels = e;
        }
        net.stage_strides = match r.stage_strides {
            Some(s) => s,
            None => default_strides(net.patch_size, net.encoder_channels.len().saturating_sub(1)),
        };
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = r.$f { net.$g = v; })* };
        }
        set!(in_channels => in_channels, num_classes => num_classes, decoder_channels => decoder_channels,
             attention_levels => attention_levels, deep_supervision_heads => deep_supervision_heads,
             viola_alpha => viola_alpha, viola_beta => viola_beta, viola_groups => viola_groups,
             windows => input_windows);
        net.validate()?;

        let mut train = TrainConfig::default();
        macro_rules! tset {
            ($($f:ident),*) => { $(if let Some(v) = r.$f { train.$f = v; })* };
        }
        tset!(base_lr, warmup_steps, total_steps, momentum, batch_size, focal_gamma, focal_alpha, dice_smooth);
        let outputs = 1 + net.deep_supervision_heads;
        train.ds_weights = match r.ds_weights {
            Some(w) => normalize_weights(&w)?,
            None => default_ds_weights(outputs),
        };
        if train.ds_weights.len() != outputs {
            return Err(config_err!(
                "ds_weights has {} entries but the network has {outputs} outputs",
                train.ds_weights.len()
            ));
        }
        train.validate()?;

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let data_root = resolve(r.data_root.ok_or_else(|| config_err!("data_root is required"))?);
        let manifest = match r.manifest {
            Some(m) if m.is_absolute() => m,
            Some(m) => data_root.join(m),
            None => data_root.join("manifest.csv"),
        };
        let cfg = RunConfig {
            network: net,
            train,
            manifest,
            output_dir: resolve(r.output_dir.unwrap_or_else(|| PathBuf::from("runs"))),
            data_root,
            fold: r.fold.unwrap_or(0),
            num_folds: r.num_folds.unwrap_or(5),
            seed: r.seed.unwrap_or(0),
            val_every: r.val_every.unwrap_or(200),
            overlap: r.overlap.unwrap_or(0.5),
            aggregation: r.aggregation.unwrap_or(Aggregation::Uniform),
            foreground_bias: r.foreground_bias.unwrap_or(FOREGROUND_BIAS),
            pseudo_weight: r.pseudo_weight.unwrap_or(1.0),
            resume: r.resume.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        if self.train.ds_weights.len() != 1 + self.network.deep_supervision_heads {
            return Err(config_err!("ds_weights length does not match the number of network outputs"));
        }
        if self.val_every == 0 {
            return Err(config_err!("val_every must be positive"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(config_err!("overlap {} must lie in [0, 1)", self.overlap));
        }
        if self.num_folds < 2 {
            return Err(config_err!("num_folds must be at least 2"));
        }
        if self.fold >= self.num_folds {
            return Err(config_err!("fold {} outside 0..{}", self.fold, self.num_folds));
        }
        if !(0.0..=1.0).contains(&self.foreground_bias) {
            return Err(config_err!("foreground_bias must lie in [0, 1]"));
        }
        if !(self.pseudo_weight >= 0.0) {
            return Err(config_err!("pseudo_weight must be non-negative"));
        }
        Ok(())
    }

    /// Directory for this fold's checkpoints and log.
    pub fn fold_dir(&self) -> PathBuf {
        self.output_dir.join(format!("fold{}", self.fold))
    }
}
