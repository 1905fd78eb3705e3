//! Reversible instance normalization, patching, global standardization and
//! sliding windows.

use std::ops::Range;

use crate::data::{Split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor on per-window standard deviations.
pub const REVIN_EPS: f64 = 1e-5;
/// Floor on per-channel standard deviations of the global standardizer.
pub const STANDARDIZER_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevinStats<T> {
    pub mean: T,
    pub stdev: T,
}

fn mean_and_std<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::of(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Normalizes one series to zero mean and unit (population) deviation.
pub fn revin_normalize<T: Scalar>(x: &[T]) -> Result<(Vec<T>, RevinStats<T>)> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            required: 2,
            available: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("revin input".into()));
    }
    let (mean, sd) = mean_and_std(x);
    let stdev = sd.max(T::of(REVIN_EPS));
    let y = x.iter().map(|&v| (v - mean) / stdev).collect();
    Ok((y, RevinStats { mean, stdev }))
}

pub fn revin_denormalize<T: Scalar>(y: &[T], stats: &RevinStats<T>) -> Vec<T> {
    y.iter().map(|&v| v * stats.stdev + stats.mean).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub patch_len: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_len: 32,
            stride: 32,
        }
    }
}

impl PatchConfig {
    pub fn new(patch_len: usize, stride: usize) -> Result<Self> {
        if patch_len == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "patch length {patch_len} and stride {stride} must be positive"
            )));
        }
        Ok(Self { patch_len, stride })
    }

    /// `⌊(L − P) / S⌋ + 1`, or an error when `L < P`.
    pub fn num_patches(&self, len: usize) -> Result<usize> {
        if len < self.patch_len {
            return Err(Error::TooShort {
                required: self.patch_len,
                available: len,
            });
        }
        Ok((len - self.patch_len) / self.stride + 1)
    }
}

/// Unfolds `x` into an `N_p × P` row-major matrix; trailing samples that do
/// not fill a patch are dropped.
pub fn make_patches<T: Scalar>(x: &[T], cfg: &PatchConfig) -> Result<Vec<T>> {
    let n = cfg.num_patches(x.len())?;
    let mut out = Vec::with_capacity(n * cfg.patch_len);
    for k in 0..n {
        out.extend_from_slice(&x[k * cfg.stride..k * cfg.stride + cfg.patch_len]);
    }
    Ok(out)
}

/// Per-channel affine standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl StandardizerStats {
    /// Fits on `rows` of `ds`; values outside the range are never read.
    pub fn fit(ds: &TimeSeriesDataset, rows: Range<usize>) -> Result<Self> {
        if rows.is_empty() || rows.end > ds.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "cannot fit standardizer on rows {rows:?} of {}",
                ds.n_rows()
            )));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; ds.n_vars()];
        let mut stdev = vec![0.0; ds.n_vars()];
        for c in 0..ds.n_vars() {
            let m = rows.clone().map(|t| ds.value(t, c)).sum::<f64>() / n;
            let var = rows
                .clone()
                .map(|t| (ds.value(t, c) - m).powi(2))
                .sum::<f64>()
                / n;
            mean[c] = m;
            stdev[c] = var.sqrt().max(STANDARDIZER_EPS);
        }
        Ok(Self { mean, stdev })
    }

    pub fn fit_train(ds: &TimeSeriesDataset) -> Result<Self> {
        Self::fit(ds, ds.split_range(Split::Train)?)
    }
}

pub fn standardize(ds: &TimeSeriesDataset, stats: &StandardizerStats) -> Result<TimeSeriesDataset> {
    if stats.mean.len() != ds.n_vars() || stats.stdev.len() != ds.n_vars() {
        return Err(Error::InvalidArgument(format!(
            "standardizer fitted on {} channels, dataset has {}",
            stats.mean.len(),
            ds.n_vars()
        )));
    }
    Ok(ds.map_values(|c, v| (v - stats.mean[c]) / stats.stdev[c]))
}

/// Which channels a window exposes and how far it looks back and ahead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    pub context_len: usize,
    pub horizon: usize,
    pub target: usize,
    pub context_channels: Vec<usize>,
}

/// A batch of windows on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub batch: usize,
    pub context_len: usize,
    pub horizon: usize,
    pub n_vars: usize,
    /// `batch × context_len × n_vars`, row-major.
    pub context: Vec<f64>,
    /// `batch × horizon` future values of the target channel.
    pub target_future: Vec<f64>,
    pub target_channel: usize,
    pub context_channels: Vec<usize>,
}

impl WindowBatch {
    /// History of channel `c` for sample `b`.
    pub fn series(&self, b: usize, c: usize) -> Vec<f64> {
        let base = b * self.context_len * self.n_vars;
        (0..self.context_len)
            .map(|t| self.context[base + t * self.n_vars + c])
            .collect()
    }

    pub fn future(&self, b: usize) -> &[f64] {
        &self.target_future[b * self.horizon..(b + 1) * self.horizon]
    }

    /// Copy with one channel's history rewritten by `f(sample, time, value)`.
    pub fn map_channel(&self, c: usize, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for b in 0..self.batch {
            for t in 0..self.context_len {
                let i = (b * self.context_len + t) * self.n_vars + c;
                out.context[i] = f(b, t, out.context[i]);
            }
        }
        out
    }
}

/// Every valid window over a row range, stride 1.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    ds: &'a TimeSeriesDataset,
    spec: WindowSpec,
    starts: Vec<usize>,
}

/// Windows whose targets lie in `rows`. With `lookback`, contexts may reach up
/// to `context_len` rows before `rows.start`.
pub fn make_windows_in<'a>(
    ds: &'a TimeSeriesDataset,
    rows: Range<usize>,
    lookback: bool,
    spec: &WindowSpec,
) -> Result<WindowSet<'a>> {
    if spec.horizon == 0 || spec.context_len == 0 {
        return Err(Error::InvalidArgument(
            "context length and horizon must be positive".into(),
        ));
    }
    if rows.end > ds.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "rows {rows:?} beyond {} rows",
            ds.n_rows()
        )));
    }
    if let Some(&c) = spec
        .context_channels
        .iter()
        .chain([&spec.target])
        .find(|&&c| c >= ds.n_vars())
    {
        return Err(Error::InvalidArgument(format!(
            "channel {c} outside {} channels",
            ds.n_vars()
        )));
    }
    let first = if lookback {
        rows.start.saturating_sub(spec.context_len)
    } else {
        rows.start
    };
    let available = rows.end - first;
    let required = spec.context_len + spec.horizon;
    if available < required {
        return Err(Error::TooShort {
            required,
            available,
        });
    }
    let count = available - required + 1;
    Ok(WindowSet {
        ds,
        spec: spec.clone(),
        starts: (first..first + count).collect(),
    })
}

/// Windows for one split of `ds`; validation and test may look back into the
/// preceding split for context.
pub fn make_windows<'a>(
    ds: &'a TimeSeriesDataset,
    split: Split,
    spec: &WindowSpec,
) -> Result<WindowSet<'a>> {
    let rows = ds.split_range(split)?;
    make_windows_in(ds, rows, split != Split::Train, spec)
}

impl<'a> WindowSet<'a> {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    /// First row of each window's context.
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Keeps only the first `n` windows.
    pub fn truncate(&mut self, n: usize) {
        self.starts.truncate(n);
    }

    /// Assembles the windows at positions `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> WindowBatch {
        let (l, h, n) = (self.spec.context_len, self.spec.horizon, self.ds.n_vars());
        let values = self.ds.values();
        let mut context = Vec::with_capacity(indices.len() * l * n);
        let mut future = Vec::with_capacity(indices.len() * h);
        for &i in indices {
            let s = self.starts[i];
            context.extend_from_slice(&values[s * n..(s + l) * n]);
            future.extend((s + l..s + l + h).map(|t| values[t * n + self.spec.target]));
        }
        WindowBatch {
            batch: indices.len(),
            context_len: l,
            horizon: h,
            n_vars: n,
            context,
            target_future: future,
            target_channel: self.spec.target,
            context_channels: self.spec.context_channels.clone(),
        }
    }

    /// Consecutive batches in window order.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = WindowBatch> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let size = batch_size.max(1);
        (0..self.len().div_ceil(size))
            .map(move |k| self.batch(&idx[k * size..((k + 1) * size).min(idx.len())]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::CausalGraph;
    use crate::data::{split_borders, ChannelRole, SplitPolicy};
    use proptest::prelude::*;

    fn ramp(n: usize, vars: usize) -> TimeSeriesDataset {
        let values = (0..n * vars).map(|i| i as f64).collect();
        let names = (0..vars).map(|c| format!("c{c}")).collect();
        let mut roles = vec![ChannelRole::InternalState; vars];
        roles[vars - 1] = ChannelRole::Target;
        TimeSeriesDataset::new(
            "ramp",
            values,
            names,
            roles,
            vars - 1,
            CausalGraph::absent(),
        )
        .unwrap()
    }

    fn spec(l: usize, h: usize) -> WindowSpec {
        WindowSpec {
            context_len: l,
            horizon: h,
            target: 1,
            context_channels: vec![0],
        }
    }

    #[test]
    fn revin_two_points() {
        let (y, s) = revin_normalize(&[1.0, 3.0]).unwrap();
        assert_eq!(y, vec![-1.0, 1.0]);
        assert_eq!(
            s,
            RevinStats {
                mean: 2.0,
                stdev: 1.0
            }
        );
    }

    #[test]
    fn revin_constant_series_floors_stdev() {
        let (y, s) = revin_normalize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
        assert_eq!(s.stdev, REVIN_EPS);
        assert!(y.iter().all(|v: &f64| v.is_finite()));
    }

    #[test]
    fn revin_errors() {
        assert!(revin_normalize(&[1.0]).is_err());
        assert!(revin_normalize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn revin_denormalize_examples() {
        let s = RevinStats {
            mean: 2.0,
            stdev: 1.0,
        };
        assert_eq!(revin_denormalize(&[0.0, 0.0], &s), vec![2.0, 2.0]);
        let s = RevinStats {
            mean: 0.0,
            stdev: 3.0,
        };
        assert_eq!(revin_denormalize(&[1.0], &s), vec![3.0]);
    }

    proptest! {
        #[test]
        fn revin_round_trip(x in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let (y, s) = revin_normalize(&x).unwrap();
            let back = revin_denormalize(&y, &s);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn patches_cover_prefix(len in 1usize..200, p in 1usize..40) {
            prop_assume!(len >= p);
            let x: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let cfg = PatchConfig::new(p, p).unwrap();
            let n = cfg.num_patches(len).unwrap();
            prop_assert_eq!(make_patches(&x, &cfg).unwrap(), x[..n * p].to_vec());
        }
    }

    #[test]
    fn patch_counts() {
        assert_eq!(
            PatchConfig::new(32, 32).unwrap().num_patches(96).unwrap(),
            3
        );
        assert_eq!(
            PatchConfig::new(16, 8).unwrap().num_patches(96).unwrap(),
            11
        );
        assert!(PatchConfig::new(32, 32).unwrap().num_patches(31).is_err());
        assert!(PatchConfig::new(0, 1).is_err());
    }

    #[test]
    fn patches_of_eight() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let p = make_patches(&x, &PatchConfig::new(4, 4).unwrap()).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let p = make_patches(&x[..7], &PatchConfig::new(4, 4).unwrap()).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn window_counts() {
        let ds = ramp(100, 2);
        assert_eq!(
            make_windows_in(&ds, 0..100, false, &spec(96, 1))
                .unwrap()
                .len(),
            4
        );
        let err = make_windows_in(&ds, 0..96, false, &spec(96, 1)).unwrap_err();
        assert!(err.to_string().contains("97"), "{err}");
    }

    #[test]
    fn lookback_counts_targets_in_range() {
        let ds = ramp(300, 2);
        let w = make_windows_in(&ds, 200..300, true, &spec(96, 5)).unwrap();
        assert_eq!(w.len(), 100 - 5 + 1);
        assert_eq!(w.starts()[0], 104);
        // first forecast target is the first row of the range
        assert_eq!(w.batch(&[0]).target_future[0], ds.value(200, 1));
    }

    #[test]
    fn windows_are_translation_consistent() {
        let ds = ramp(60, 3);
        let s = WindowSpec {
            context_len: 10,
            horizon: 3,
            target: 2,
            context_channels: vec![0, 1],
        };
        let w = make_windows_in(&ds, 0..60, false, &s).unwrap();
        for i in 0..w.len() - 1 {
            let a = w.batch(&[i]);
            let b = w.batch(&[i + 1]);
            assert_eq!(&a.context[3..], &b.context[..b.context.len() - 3]);
            assert_eq!(&a.target_future[1..], &b.target_future[..2]);
        }
    }

    #[test]
    fn batches_cover_all_windows() {
        let ds = ramp(50, 2);
        let w = make_windows_in(&ds, 0..50, false, &spec(8, 2)).unwrap();
        let sizes: Vec<usize> = w.batches(16).map(|b| b.batch).collect();
        assert_eq!(sizes.iter().sum::<usize>(), w.len());
        assert_eq!(sizes, vec![16, 16, 9]);
    }

    #[test]
    fn standardizer_never_reads_held_out_rows() {
        let ds = ramp(100, 2);
        let poisoned = ds.map_values(|_, v| if v >= 140.0 { f64::NAN } else { v });
        let stats = StandardizerStats::fit(&poisoned, 0..70).unwrap();
        assert!(stats.mean.iter().chain(&stats.stdev).all(|v| v.is_finite()));
    }

    #[test]
    fn standardized_train_split_is_unit() {
        let ds =
            crate::data::generate_additive(&crate::data::SyntheticConfig::additive(0)).unwrap();
        let b = split_borders(ds.n_rows(), SplitPolicy::Ratio70_20_10, 96, 1).unwrap();
        let ds = ds.with_splits(b.clone()).unwrap();
        let stats = StandardizerStats::fit_train(&ds).unwrap();
        let z = standardize(&ds, &stats).unwrap();
        for c in 0..z.n_vars() {
            let x: Vec<f64> = b.train.clone().map(|t| z.value(t, c)).collect();
            let (m, s) = mean_and_std(&x);
            assert!(
                m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9,
                "channel {c}: {m} {s}"
            );
        }
        // held-out splits use train statistics, so their target mean drifts
        let test: Vec<f64> = b.test.clone().map(|t| z.value(t, 3)).collect();
        assert!(mean_and_std(&test).0.abs() > 1e-3);
    }

    #[test]
    fn constant_channel_standardizes_to_zero() {
        let values = vec![4.0, 1.0, 4.0, 2.0, 4.0, 3.0];
        let ds = TimeSeriesDataset::new(
            "c",
            values,
            vec!["k".into(), "y".into()],
            vec![ChannelRole::InternalState, ChannelRole::Target],
            1,
            CausalGraph::absent(),
        )
        .unwrap();
        let stats = StandardizerStats::fit(&ds, 0..3).unwrap();
        let z = standardize(&ds, &stats).unwrap();
        assert_eq!(z.channel(0), vec![0.0; 3]);
        let wrong = StandardizerStats {
            mean: vec![0.0],
            stdev: vec![1.0],
        };
        assert!(standardize(&ds, &wrong).is_err());
    }
}
