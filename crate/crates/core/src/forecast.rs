//! The interface shared by CGPT and the baselines.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::baselines::{DLinear, MlpBaseline};
use crate::error::{Error, Result};
use crate::model::{CgptConfig, CgptModel, Variant};
use crate::nn::EncoderConfig;
use crate::params::Parameters;
use crate::preprocessing::{revin_normalize, PatchConfig, RevinStats, WindowBatch};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub trait Forecaster<T: Scalar>: Parameters<T> {
    /// Forecasts `[batch, horizon]` on the standardized scale.
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>>;

    fn horizon(&self) -> usize;
}

/// Channel histories of one batch, optionally instance-normalized.
pub(crate) struct Inputs<T> {
    /// `series[b][i]` is the history of `channels[i]` for sample `b`.
    pub series: Vec<Vec<Vec<T>>>,
    /// Target statistics per sample when RevIN is on.
    pub target_stats: Option<Vec<RevinStats<T>>>,
}

pub(crate) fn gather_inputs<T: Scalar>(
    batch: &WindowBatch,
    channels: &[usize],
    revin: bool,
) -> Result<Inputs<T>> {
    if let Some(&c) = channels
        .iter()
        .chain([&batch.target_channel])
        .find(|&&c| c >= batch.n_vars)
    {
        return Err(Error::InvalidArgument(format!(
            "channel {c} outside {} channels",
            batch.n_vars
        )));
    }
    let mut series = Vec::with_capacity(batch.batch);
    let mut target_stats = revin.then(|| Vec::with_capacity(batch.batch));
    for b in 0..batch.batch {
        let mut per = Vec::with_capacity(channels.len());
        for &c in channels {
            let raw: Vec<T> = batch.series(b, c).into_iter().map(T::of).collect();
            per.push(if revin { revin_normalize(&raw)?.0 } else { raw });
        }
        if let Some(stats) = target_stats.as_mut() {
            let raw: Vec<T> = batch
                .series(b, batch.target_channel)
                .into_iter()
                .map(T::of)
                .collect();
            stats.push(revin_normalize(&raw)?.1);
        }
        series.push(per);
    }
    Ok(Inputs {
        series,
        target_stats,
    })
}

/// `y · σ + μ` per sample, with the statistics held constant.
pub(crate) fn denormalize<T: Scalar>(
    y: &Tensor<T>,
    stats: Option<&[RevinStats<T>]>,
) -> Result<Tensor<T>> {
    let Some(stats) = stats else {
        return Ok(y.clone());
    };
    let (b, h) = (y.shape()[0], y.shape()[1]);
    let scale: Vec<T> = stats
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.stdev, h))
        .collect();
    let shift: Vec<T> = stats
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.mean, h))
        .collect();
    y.mul(&Tensor::new(scale, &[b, h])?)?
        .add(&Tensor::new(shift, &[b, h])?)
}

/// Future targets of a batch as a `[batch, horizon]` constant.
pub fn target_tensor<T: Scalar>(batch: &WindowBatch) -> Result<Tensor<T>> {
    Tensor::from_f64(&batch.target_future, &[batch.batch, batch.horizon])
}

pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    pred.sub(target)?.square().mean_all()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Cgpt(Variant),
    DLinear,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Cgpt(Variant::Leaky),
        ModelKind::Cgpt(Variant::Strict),
        ModelKind::Cgpt(Variant::Pure),
        ModelKind::DLinear,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cgpt(v) => v.name(),
            ModelKind::DLinear => "dlinear",
            ModelKind::Mlp => "mlp",
        }
    }

    /// Column label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cgpt(Variant::Leaky) => "CGPT-Leaky",
            ModelKind::Cgpt(Variant::Strict) => "CGPT-Strict",
            ModelKind::Cgpt(Variant::Pure) => "CGPT-Pure",
            ModelKind::DLinear => "DLinear",
            ModelKind::Mlp => "MLP",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dlinear" => Ok(ModelKind::DLinear),
            "mlp" => Ok(ModelKind::Mlp),
            other => other.parse().map(ModelKind::Cgpt).map_err(|_| {
                let valid: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown model {s:?}; valid ids: {}",
                    valid.join(", ")
                ))
            }),
        }
    }
}

/// Everything needed to build any of the forecasters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub kind: ModelKind,
    pub encoder: EncoderConfig,
    pub context_len: usize,
    pub horizon: usize,
    /// Only the MLP depends on this.
    pub n_vars: usize,
    pub revin: bool,
}

impl Architecture {
    /// Flat key/value form, as stored in checkpoint headers.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let e = &self.encoder;
        [
            ("model", self.kind.name().to_string()),
            ("context_len", self.context_len.to_string()),
            ("horizon", self.horizon.to_string()),
            ("n_vars", self.n_vars.to_string()),
            ("revin", self.revin.to_string()),
            ("d_model", e.d_model.to_string()),
            ("d_ff", e.d_ff.to_string()),
            ("n_heads", e.n_heads.to_string()),
            ("e_layers", e.e_layers.to_string()),
            ("dropout", e.dropout.to_string()),
            ("patch_len", e.patch.patch_len.to_string()),
            ("stride", e.patch.stride.to_string()),
            ("max_patches", e.max_patches.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("missing architecture field {key:?}"))
                })
        };
        fn parse<V: FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key:?}")))
        }
        let num = |key: &str| -> Result<usize> { parse(key, get(key)?) };
        Ok(Self {
            kind: get("model")?.parse()?,
            context_len: num("context_len")?,
            horizon: num("horizon")?,
            n_vars: num("n_vars")?,
            revin: parse("revin", get("revin")?)?,
            encoder: EncoderConfig {
                d_model: num("d_model")?,
                d_ff: num("d_ff")?,
                n_heads: num("n_heads")?,
                e_layers: num("e_layers")?,
                dropout: parse("dropout", get("dropout")?)?,
                patch: PatchConfig::new(num("patch_len")?, num("stride")?)?,
                max_patches: num("max_patches")?,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub enum AnyModel<T: Scalar> {
    Cgpt(CgptModel<T>),
    DLinear(DLinear<T>),
    Mlp(MlpBaseline<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn init(rng: &mut ChaCha8Rng, arch: &Architecture) -> Result<Self> {
        Ok(match arch.kind {
            ModelKind::Cgpt(variant) => {
                let n_p = arch.encoder.patch.num_patches(arch.context_len)?;
                if n_p > arch.encoder.max_patches {
                    return Err(Error::InvalidArgument(format!(
                        "context length {} yields {n_p} patches, more than {}",
                        arch.context_len, arch.encoder.max_patches
                    )));
                }
                AnyModel::Cgpt(CgptModel::init(
                    rng,
                    CgptConfig {
                        encoder: arch.encoder,
                        variant,
                        horizon: arch.horizon,
                        revin: arch.revin,
                    },
                )?)
            }
            ModelKind::DLinear => AnyModel::DLinear(DLinear::init(
                rng,
                arch.context_len,
                arch.horizon,
                arch.revin,
            )?),
            ModelKind::Mlp => AnyModel::Mlp(MlpBaseline::init(
                rng,
                arch.context_len,
                arch.n_vars,
                arch.horizon,
                arch.revin,
            )?),
        })
    }

    fn inner(&self) -> &dyn Forecaster<T> {
        match self {
            AnyModel::Cgpt(m) => m,
            AnyModel::DLinear(m) => m,
            AnyModel::Mlp(m) => m,
        }
    }
}

impl<T: Scalar> Parameters<T> for AnyModel<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        match self {
            AnyModel::Cgpt(m) => m.collect(prefix, out),
            AnyModel::DLinear(m) => m.collect(prefix, out),
            AnyModel::Mlp(m) => m.collect(prefix, out),
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        match self {
            AnyModel::Cgpt(m) => m.collect_mut(prefix, out),
            AnyModel::DLinear(m) => m.collect_mut(prefix, out),
            AnyModel::Mlp(m) => m.collect_mut(prefix, out),
        }
    }
}

impl<T: Scalar> Forecaster<T> for AnyModel<T> {
    fn forward(&self, batch: &WindowBatch) -> Result<Tensor<T>> {
        self.inner().forward(batch)
    }

    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
}
