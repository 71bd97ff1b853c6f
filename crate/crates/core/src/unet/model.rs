use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{norm_groups, NetworkConfig};
use super::params::{decoder_input_channels, ParamStore};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{ConvSpec, InterpMode, Tensor, GROUP_NORM_EPS};
use crate::viola::{viola_forward, ViolaParams};

/// Encoder-decoder network: weights plus the config they were built for.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    params: ParamStore,
}

impl Network {
    /// Validates the config and initialises weights from `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::initialise(&config, &mut rng)?;
        Ok(Network { config, params })
    }

    pub fn from_params(config: NetworkConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = super::parameter_manifest(&config);
        if expected.len() != params.len()
            || expected
                .iter()
                .zip(params.iter())
                .any(|((p, s), (q, t))| p != q || s.as_slice() != t.shape())
        {
            return Err(crate::error::config_err!("parameters do not match the config manifest"));
        }
        Ok(Network { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Inference copy: same weights, no gradient tracking.
    pub fn frozen(&self) -> Network {
        Network {
            config: self.config.clone(),
            params: self.params.frozen(),
        }
    }

    fn conv_block(&self, x: &Tensor, prefix: &str, stride: [usize; 3]) -> Result<Tensor> {
        let mut h = x.clone();
        for i in 0..2 {
            let w = self.params.get(&format!("{prefix}.conv{i}.weight"))?;
            let s = if i == 0 { stride } else { [1, 1, 1] };
            let spec = ConvSpec::same(&[3, 3, 3], &s, &[1, 1, 1]);
            h = h.conv(w, None, &spec)?;
            let c = h.shape()[1];
            let scale = self.params.get(&format!("{prefix}.norm{i}.scale"))?.reshape(&[1, c, 1, 1, 1])?;
            let shift = self.params.get(&format!("{prefix}.norm{i}.shift"))?.reshape(&[1, c, 1, 1, 1])?;
            h = h
                .group_norm(norm_groups(c), GROUP_NORM_EPS)?
                .mul(&scale)?
                .add(&shift)?
                .relu()?;
        }
        Ok(h)
    }

    fn head(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let w = self.params.get(&format!("head.{name}.weight"))?;
        let b = self.params.get(&format!("head.{name}.bias"))?;
        x.conv(w, Some(b), &ConvSpec::plain(&[1, 1, 1]))
    }

    fn viola_params(&self, level: usize) -> Result<ViolaParams> {
        let c = self.config.decoder_channels[level];
        ViolaParams::from_tensors(
            c,
            self.config.viola_alpha,
            self.config.viola_beta,
            self.config.viola_groups,
            self.params.with_prefix(&format!("dec.{level}.viola")),
        )
    }

    /// Logits for `[B, C_in, H, W, D]` input: the main head at input
    /// resolution first, then auxiliary heads from decoder level 1 downward.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let cfg = &self.config;
        if x.rank() != 5 {
            return Err(Error::Rank {
                expected: "5 (B×C×H×W×D)".into(),
                got: x.rank(),
            });
        }
        if x.shape()[1] != cfg.in_channels {
            return Err(shape_err!(
                "encoder stage 0 expects {} input channels, got {}",
                cfg.in_channels,
                x.shape()[1]
            ));
        }
        let spatial: [usize; 3] = x.shape()[2..].try_into().expect("rank 5");
        for (i, e) in cfg.level_extents(spatial).iter().enumerate() {
            if e.contains(&0) {
                return Err(shape_err!("input extents {spatial:?} collapse at encoder stage {i}"));
            }
        }

        let mut skips = Vec::with_capacity(cfg.depth());
        let mut h = x.clone();
        for i in 0..cfg.depth() {
            let stride = if i == 0 { [1, 1, 1] } else { cfg.stage_strides[i - 1] };
            h = self.conv_block(&h, &format!("enc.{i}"), stride)?;
            skips.push(h.clone());
        }

        let mut aux = vec![None; cfg.deep_supervision_heads + 1];
        let mut d = skips.pop().expect("depth >= 2");
        for level in (0..cfg.decoder_channels.len()).rev() {
            let skip = &skips[level];
            let mut up = d;
            for axis in 0..3 {
                up = up.interpolate_axis(2 + axis, skip.shape()[2 + axis], InterpMode::Linear)?;
            }
            let cat = Tensor::concat(&[up, skip.clone()], 1)?;
            debug_assert_eq!(cat.shape()[1], decoder_input_channels(cfg, level));
            d = self.conv_block(&cat, &format!("dec.{level}"), [1, 1, 1])?;
            if cfg.attention_levels.contains(&level) {
                d = viola_forward(&d, &self.viola_params(level)?)?;
            }
            if level >= 1 && level <= cfg.deep_supervision_heads {
                aux[level] = Some(self.head(&d, &format!("aux{level}"))?);
            }
        }
        let mut outputs = vec![self.head(&d, "main")?];
        outputs.extend(aux.into_iter().skip(1).map(|a| a.expect("every aux level visited")));
        Ok(outputs)
    }
}
