//! CGPT: a shared patch encoder, pairwise influences from causal parents, and
//! additive aggregation in latent space.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::{denormalize, gather_inputs, Forecaster, Inputs};
use crate::nn::{pool_latent, EncoderConfig, EncoderParams};
use crate::params::{join, normal, Linear, Parameters};
use crate::preprocessing::{make_patches, WindowBatch};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Influences see the target latent.
    Leaky,
    /// Influences see a learned placeholder; the target latent enters only through the sum.
    Strict,
    /// Placeholder influences and no target term at all.
    Pure,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Leaky, Variant::Strict, Variant::Pure];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Leaky => "leaky",
            Variant::Strict => "strict",
            Variant::Pure => "pure",
        }
    }

    pub fn uses_placeholder(self) -> bool {
        self != Variant::Leaky
    }

    pub fn keeps_target_latent(self) -> bool {
        self != Variant::Pure
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leaky" | "leaky_pairwise" => Ok(Variant::Leaky),
            "strict" | "strict_pairwise" => Ok(Variant::Strict),
            "pure" | "pure_influence" => Ok(Variant::Pure),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgptConfig {
    pub encoder: EncoderConfig,
    pub variant: Variant,
    pub horizon: usize,
    pub revin: bool,
}

#[derive(Debug, Clone)]
pub struct InfluenceMlp<T: Scalar> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

crate::params::impl_parameters!(InfluenceMlp { fc1, fc2 });

impl<T: Scalar> InfluenceMlp<T> {
    pub fn forward(&self, pair: &Tensor<T>) -> Result<Tensor<T>> {
        self.fc2.forward(&self.fc1.forward(pair)?.gelu())
    }
}

#[derive(Debug, Clone)]
pub struct CgptModel<T: Scalar> {
    pub config: CgptConfig,
    pub encoder: EncoderParams<T>,
    pub influence_mlp: InfluenceMlp<T>,
    pub target_placeholder: Tensor<T>,
    pub head: Linear<T>,
}

impl<T: Scalar> Parameters<T> for CgptModel<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.encoder.collect(&join(prefix, "encoder"), out);
        self.influence_mlp
            .collect(&join(prefix, "influence_mlp"), out);
        self.target_placeholder
            .collect(&join(prefix, "target_placeholder"), out);
        self.head.collect(&join(prefix, "head"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.encoder.collect_mut(&join(prefix, "encoder"), out);
        self.influence_mlp
            .collect_mut(&join(prefix, "influence_mlp"), out);
        self.target_placeholder
            .collect_mut(&join(prefix, "target_placeholder"), out);
        self.head.collect_mut(&join(prefix, "head"), out);
    }
}

/// Pooled latents of one batch.
#[derive(Debug, Clone)]
pub struct Latents<T: Scalar> {
    /// `[B, d]`; absent for PURE, which never encodes the target.
    pub target: Option<Tensor<T>>,
    /// `[B, K, d]` in context order.
    pub contexts: Tensor<T>,
}

impl<T: Scalar> CgptModel<T> {
    pub fn init(rng: &mut ChaCha8Rng, config: CgptConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let encoder = EncoderParams::init(rng, config.encoder)?;
        let (d, d_ff) = (config.encoder.d_model, config.encoder.d_ff);
        let influence_mlp = InfluenceMlp {
            fc1: Linear::glorot(rng, 2 * d, d_ff)?,
            fc2: Linear::glorot(rng, d_ff, d)?,
        };
        let target_placeholder = normal(rng, &[d], 0.02)?;
        let head = Linear::glorot(rng, d, config.horizon)?;
        Ok(Self {
            config,
            encoder,
            influence_mlp,
            target_placeholder,
            head,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn d_model(&self) -> usize {
        self.config.encoder.d_model
    }

    /// Patches, embeds, encodes and pools a set of series with the shared encoder: `[S, d]`.
    pub fn encode_series(&self, series: &[&[T]]) -> Result<Tensor<T>> {
        let patch = self.config.encoder.patch;
        let len = series.first().map_or(0, |s| s.len());
        let n_p = patch.num_patches(len)?;
        let mut data = Vec::with_capacity(series.len() * n_p * patch.patch_len);
        for s in series {
            if s.len() != len {
                return Err(Error::InvalidArgument("series lengths differ".into()));
            }
            data.extend(make_patches(s, &patch)?);
        }
        let patches = Tensor::new(data, &[series.len(), n_p, patch.patch_len])?;
        let z = self
            .encoder
            .encode(&self.encoder.embed_patches(&patches)?)?;
        pool_latent(&z)
    }

    pub fn latents(&self, batch: &WindowBatch) -> Result<Latents<T>> {
        Ok(self.encode_batch(batch)?.0)
    }

    fn encode_batch(&self, batch: &WindowBatch) -> Result<(Latents<T>, Inputs<T>)> {
        let with_target = self.variant().keeps_target_latent();
        let mut channels = Vec::with_capacity(batch.context_channels.len() + 1);
        if with_target {
            channels.push(batch.target_channel);
        }
        channels.extend_from_slice(&batch.context_channels);
        let inputs = gather_inputs::<T>(batch, &channels, self.config.revin)?;
        let (b, c, k, d) = (
            batch.batch,
            channels.len(),
            batch.context_channels.len(),
            self.d_model(),
        );
        let target;
        let contexts;
        if c == 0 {
            target = None;
            contexts = Tensor::zeros(&[b, 0, d]);
        } else {
            let refs: Vec<&[T]> = inputs
                .series
                .iter()
                .flat_map(|per| per.iter().map(Vec::as_slice))
                .collect();
            let z = self.encode_series(&refs)?.reshape(&[b, c, d])?;
            let offset = usize::from(with_target);
            target = if with_target {
                Some(z.slice(1, 0, 1)?.reshape(&[b, d])?)
            } else {
                None
            };
            contexts = if k == 0 {
                Tensor::zeros(&[b, 0, d])
            } else {
                z.slice(1, offset, c)?
            };
        }
        Ok((Latents { target, contexts }, inputs))
    }

    /// Pairwise influences `[B, K, d]` from target latents `[B, d]` and
    /// context latents `[B, K, d]`.
    pub fn influence(
        &self,
        z_target: Option<&Tensor<T>>,
        z_contexts: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (b, k, d) = match z_contexts.shape() {
            [b, k, d] if *d == self.d_model() => (*b, *k, *d),
            s => return Err(Error::InvalidArgument(format!("context latents {s:?}"))),
        };
        if k == 0 {
            return Ok(Tensor::zeros(&[b, 0, d]));
        }
        let left = if self.variant().uses_placeholder() {
            Tensor::zeros(&[b * k, d]).broadcast_add(&self.target_placeholder)?
        } else {
            let z = z_target.ok_or_else(|| {
                Error::InvalidArgument("leaky influence needs the target latent".into())
            })?;
            let copies = vec![z; k];
            Tensor::concat_last_dim(&copies)?.reshape(&[b * k, d])?
        };
        let pair = Tensor::concat_last_dim(&[&left, &z_contexts.reshape(&[b * k, d])?])?;
        self.influence_mlp.forward(&pair)?.reshape(&[b, k, d])
    }

    /// `z' = z_target + Σ_k influence_k`, or just the sum for PURE.
    pub fn aggregate(
        &self,
        z_target: Option<&Tensor<T>>,
        influences: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (b, k, d) = match influences.shape() {
            [b, k, d] => (*b, *k, *d),
            s => return Err(Error::InvalidArgument(format!("influences {s:?}"))),
        };
        let sum = (k > 0).then(|| influences.sum_axis(1)).transpose()?;
        if !self.variant().keeps_target_latent() {
            return sum.ok_or_else(|| {
                Error::InvalidArgument("the pure variant needs at least one context".into())
            });
        }
        let z = z_target.ok_or_else(|| Error::InvalidArgument("missing target latent".into()))?;
        if z.shape() != [b, d] {
            return Err(Error::InvalidArgument(format!(
                "target latent {:?}",
                z.shape()
            )));
        }
        match sum {
            Some(s) => z.add(&s),
            None => Ok(z.clone()),
        }
    }
}

impl<T: Scalar> Forecaster<T> for CgptModel<T> {
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>> {
        if self.variant() == Variant::Pure && batch.context_channels.is_empty() {
            return Err(Error::InvalidArgument(
                "the pure variant needs at least one context".into(),
            ));
        }
        let (latents, inputs) = self.encode_batch(batch)?;
        let influences = self.influence(latents.target.as_ref(), &latents.contexts)?;
        let z = self.aggregate(latents.target.as_ref(), &influences)?;
        let y = self.head.forward(&z)?;
        denormalize(&y, inputs.target_stats.as_deref())
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }
}
