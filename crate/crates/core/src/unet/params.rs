use indexmap::IndexMap;
use rand::Rng;

use super::config::NetworkConfig;
use crate::error::{config_err, Result};
use crate::tensor::Tensor;
use crate::viola;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    /// He-uniform for convolutions feeding a ReLU.
    ConvRelu,
    /// `1/sqrt(fan_in)` uniform for output heads.
    Head,
    Zeros,
    Ones,
    /// Delegated to the attention module's own rule.
    Viola,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn conv_block(specs: &mut Vec<ParamSpec>, prefix: &str, cin: usize, cout: usize) {
    for (i, c_in) in [cin, cout].into_iter().enumerate() {
        specs.push(ParamSpec {
            path: format!("{prefix}.conv{i}.weight"),
            shape: vec![cout, c_in, 3, 3, 3],
            init: Init::ConvRelu,
        });
        specs.push(ParamSpec {
            path: format!("{prefix}.norm{i}.scale"),
            shape: vec![cout],
            init: Init::Ones,
        });
        specs.push(ParamSpec {
            path: format!("{prefix}.norm{i}.shift"),
            shape: vec![cout],
            init: Init::Zeros,
        });
    }
}

fn head(specs: &mut Vec<ParamSpec>, name: &str, cin: usize, classes: usize) {
    specs.push(ParamSpec {
        path: format!("head.{name}.weight"),
        shape: vec![classes, cin, 1, 1, 1],
        init: Init::Head,
    });
    specs.push(ParamSpec {
        path: format!("head.{name}.bias"),
        shape: vec![classes],
        init: Init::Zeros,
    });
}

/// Width of the tensor entering decoder level `i` after skip concatenation.
pub(crate) fn decoder_input_channels(cfg: &NetworkConfig, level: usize) -> usize {
    let n = cfg.depth();
    let below = if level + 1 == n - 1 {
        cfg.encoder_channels[n - 1]
    } else {
        cfg.decoder_channels[level + 1]
    };
    below + cfg.encoder_channels[level]
}

pub(crate) fn param_specs(cfg: &NetworkConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut cin = cfg.in_channels;
    for (i, &c) in cfg.encoder_channels.iter().enumerate() {
        conv_block(&mut specs, &format!("enc.{i}"), cin, c);
        cin = c;
    }
    for level in (0..cfg.decoder_channels.len()).rev() {
        let c = cfg.decoder_channels[level];
        let prefix = format!("dec.{level}");
        conv_block(&mut specs, &prefix, decoder_input_channels(cfg, level), c);
        if cfg.attention_levels.contains(&level) {
            for (name, shape) in viola::param_shapes(c) {
                specs.push(ParamSpec {
                    path: format!("{prefix}.viola.{name}"),
                    shape,
                    init: Init::Viola,
                });
            }
        }
    }
    head(&mut specs, "main", cfg.decoder_channels[0], cfg.num_classes);
    for level in 1..=cfg.deep_supervision_heads {
        head(&mut specs, &format!("aux{level}"), cfg.decoder_channels[level], cfg.num_classes);
    }
    specs
}

/// Ordered `(path, shape)` list of every learnable tensor the config implies.
pub fn parameter_manifest(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    param_specs(cfg).into_iter().map(|s| (s.path, s.shape)).collect()
}

fn init_values<R: Rng>(spec: &ParamSpec, rng: &mut R) -> Vec<f64> {
    let n: usize = spec.shape.iter().product();
    let fan_in: usize = spec.shape[1..].iter().product::<usize>().max(1);
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::ConvRelu => {
            let b = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-b..b)).collect()
        }
        Init::Head => {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-b..b)).collect()
        }
        Init::Viola => viola::init_param(&spec.path, &spec.shape, rng),
    }
}

/// Named learnable tensors in manifest order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub(crate) fn initialise<R: Rng>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut tensors = IndexMap::new();
        for spec in param_specs(cfg) {
            let data = init_values(&spec, rng);
            tensors.insert(spec.path.clone(), Tensor::param(&spec.shape, data)?);
        }
        Ok(ParamStore { tensors })
    }

    /// Builds a store from loaded tensors, checking them against the manifest.
    pub fn from_manifest(cfg: &NetworkConfig, mut loaded: IndexMap<String, Tensor>) -> Result<Self> {
        let mut tensors = IndexMap::new();
        for (path, shape) in parameter_manifest(cfg) {
            let t = loaded
                .shift_remove(&path)
                .ok_or_else(|| config_err!("parameter `{path}` missing"))?;
            if t.shape() != shape.as_slice() {
                return Err(config_err!(
                    "parameter `{path}` has shape {:?}, manifest expects {shape:?}",
                    t.shape()
                ));
            }
            tensors.insert(path, t.detach_tracked());
        }
        if let Some(extra) = loaded.keys().next() {
            return Err(config_err!("unexpected parameter `{extra}`"));
        }
        Ok(ParamStore { tensors })
    }

    pub fn get(&self, path: &str) -> Result<&Tensor> {
        self.tensors
            .get(path)
            .ok_or_else(|| config_err!("parameter `{path}` not found"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Replaces a tensor's values with a fresh tracked leaf of the same shape.
    pub fn set(&mut self, path: &str, data: Vec<f64>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(path)
            .ok_or_else(|| config_err!("parameter `{path}` not found"))?;
        let shape = slot.shape().to_vec();
        *slot = Tensor::param(&shape, data)?;
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }

    /// Copy whose tensors are untracked, for inference.
    pub fn frozen(&self) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.detach()))
                .collect(),
        }
    }

    /// All tensors under `prefix.` in manifest order.
    pub(crate) fn with_prefix(&self, prefix: &str) -> Vec<Tensor> {
        let p = format!("{prefix}.");
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(&p))
            .map(|(_, v)| v.clone())
            .collect()
    }
}
