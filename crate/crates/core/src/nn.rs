//! Patch embedding and the channel-shared transformer encoder.
//!
//! Every function here treats the leading axis as a stack of independent
//! sequences: attention mixes patches within one sequence only, and each
//! sequence's output depends on nothing but its own input rows.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{constant, impl_parameters, join, normal, Linear, Parameters};
use crate::preprocessing::PatchConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub e_layers: usize,
    pub dropout: f64,
    pub patch: PatchConfig,
    /// Rows of the learnable positional table.
    pub max_patches: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            d_ff: 128,
            n_heads: 1,
            e_layers: 1,
            dropout: 0.0,
            patch: PatchConfig::default(),
            max_patches: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.d_model,
            self.d_ff,
            self.n_heads,
            self.e_layers,
            self.max_patches,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "encoder dimensions must be positive: {self:?}"
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidArgument(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.dropout != 0.0 {
            return Err(Error::InvalidArgument("dropout is not supported".into()));
        }
        PatchConfig::new(self.patch.patch_len, self.patch.stride)?;
        Ok(())
    }
}

/// One pre-norm block: `x + Attn(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer<T: Scalar> {
    pub norm1_gain: Tensor<T>,
    pub norm1_bias: Tensor<T>,
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub norm2_gain: Tensor<T>,
    pub norm2_bias: Tensor<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
}

impl_parameters!(EncoderLayer {
    norm1_gain,
    norm1_bias,
    wq,
    wk,
    wv,
    wo,
    norm2_gain,
    norm2_bias,
    ff1,
    ff2,
});

#[derive(Debug, Clone)]
pub struct EncoderParams<T: Scalar> {
    pub config: EncoderConfig,
    pub patch_embed: Linear<T>,
    pub pos_embed: Tensor<T>,
    pub layers: Vec<EncoderLayer<T>>,
}

impl<T: Scalar> Parameters<T> for EncoderParams<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.patch_embed.collect(&join(prefix, "patch_embed"), out);
        self.pos_embed.collect(&join(prefix, "pos_embed"), out);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect(&join(prefix, &format!("layer{i}")), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.patch_embed
            .collect_mut(&join(prefix, "patch_embed"), out);
        self.pos_embed.collect_mut(&join(prefix, "pos_embed"), out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_mut(&join(prefix, &format!("layer{i}")), out);
        }
    }
}

impl<T: Scalar> EncoderLayer<T> {
    fn init(rng: &mut ChaCha8Rng, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            norm1_gain: constant(&[d], 1.0)?,
            norm1_bias: constant(&[d], 0.0)?,
            wq: Linear::glorot(rng, d, d)?,
            wk: Linear::glorot(rng, d, d)?,
            wv: Linear::glorot(rng, d, d)?,
            wo: Linear::glorot(rng, d, d)?,
            norm2_gain: constant(&[d], 1.0)?,
            norm2_bias: constant(&[d], 0.0)?,
            ff1: Linear::glorot(rng, d, cfg.d_ff)?,
            ff2: Linear::glorot(rng, cfg.d_ff, d)?,
        })
    }
}

impl<T: Scalar> EncoderParams<T> {
    pub fn init(rng: &mut ChaCha8Rng, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let patch_embed = Linear::glorot(rng, config.patch.patch_len, config.d_model)?;
        let pos_embed = normal(rng, &[config.max_patches, config.d_model], 0.02)?;
        let layers = (0..config.e_layers)
            .map(|_| EncoderLayer::init(rng, &config))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            patch_embed,
            pos_embed,
            layers,
        })
    }

    /// `[S, N_p, P]` patches → `[S, N_p, d_model]` tokens: `x·W + b + pos[0..N_p)`.
    pub fn embed_patches(&self, patches: &Tensor<T>) -> Result<Tensor<T>> {
        let n_p = match patches.shape() {
            [_, n, p] if *p == self.config.patch.patch_len => *n,
            s => {
                return Err(Error::InvalidArgument(format!(
                    "patches must be [S, N_p, {}], got {s:?}",
                    self.config.patch.patch_len
                )))
            }
        };
        if n_p > self.config.max_patches || n_p == 0 {
            return Err(Error::InvalidArgument(format!(
                "{n_p} patches exceed the positional table of {}",
                self.config.max_patches
            )));
        }
        let pos = self.pos_embed.slice(0, 0, n_p)?;
        self.patch_embed.forward(patches)?.broadcast_add(&pos)
    }

    pub fn encode(&self, tokens: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = tokens.clone();
        for layer in &self.layers {
            x = layer.forward(&x, self.config.n_heads)?;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(x)
    }
}

impl<T: Scalar> EncoderLayer<T> {
    pub fn forward(&self, x: &Tensor<T>, n_heads: usize) -> Result<Tensor<T>> {
        let h = x.layer_norm_affine(&self.norm1_gain, &self.norm1_bias)?;
        let x = x.add(&self.self_attention(&h, n_heads)?.0)?;
        let h = x.layer_norm_affine(&self.norm2_gain, &self.norm2_bias)?;
        let ff = self.ff2.forward(&self.ff1.forward(&h)?.gelu())?;
        x.add(&ff)
    }

    /// Scaled dot-product attention within each sequence of `[S, N_p, d]`.
    /// Also returns the attention weights of every head, `[S, N_p, N_p]` each.
    pub fn self_attention(
        &self,
        x: &Tensor<T>,
        n_heads: usize,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let d = *x.shape().last().unwrap_or(&0);
        if x.rank() != 3 || !d.is_multiple_of(n_heads) {
            return Err(Error::InvalidArgument(format!(
                "attention input {:?} with {n_heads} heads",
                x.shape()
            )));
        }
        let d_head = d / n_heads;
        let q = self.wq.forward(x)?;
        let k = self.wk.forward(x)?;
        let v = self.wv.forward(x)?;
        let scale = T::one() / T::of(d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(n_heads);
        let mut weights = Vec::with_capacity(n_heads);
        for head in 0..n_heads {
            let pick = |t: &Tensor<T>| -> Result<Tensor<T>> {
                if n_heads == 1 {
                    Ok(t.clone())
                } else {
                    t.slice(2, head * d_head, (head + 1) * d_head)
                }
            };
            let (qh, kh, vh) = (pick(&q)?, pick(&k)?, pick(&v)?);
            let attn = qh
                .matmul(&kh.transpose_last_two()?)?
                .scale(scale)
                .softmax_last_dim()?;
            heads.push(attn.matmul(&vh)?);
            weights.push(attn);
        }
        let merged = if n_heads == 1 {
            heads.pop().expect("one head")
        } else {
            Tensor::concat_last_dim(&heads.iter().collect::<Vec<_>>())?
        };
        Ok((self.wo.forward(&merged)?, weights))
    }
}

/// Mean over the patch axis: `[S, N_p, d]` → `[S, d]`.
pub fn pool_latent<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 3 {
        return Err(Error::InvalidArgument(format!(
            "pool expects [S, N_p, d], got {:?}",
            z.shape()
        )));
    }
    z.mean_axis(1)
}
