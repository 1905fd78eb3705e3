//! Flat text records of finished runs and their aggregation across seeds.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Outcome of one training run. Wall time is kept elsewhere so that records
/// of repeated runs compare equal byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub dataset: String,
    pub model: String,
    pub context_len: usize,
    pub horizon: usize,
    pub revin: bool,
    pub seed: u64,
    pub parameter_count: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mae: f64,
    pub test_mse: f64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunResult {
    pub fn epochs_run(&self) -> usize {
        self.val_losses.len()
    }

    /// `key=value` lines. Floats use the shortest representation that reads
    /// back to the same value.
    pub fn to_record(&self) -> String {
        let lines = [
            ("dataset", self.dataset.clone()),
            ("model", self.model.clone()),
            ("context_len", self.context_len.to_string()),
            ("horizon", self.horizon.to_string()),
            ("revin", if self.revin { "yes" } else { "no" }.to_string()),
            ("seed", self.seed.to_string()),
            ("parameter_count", self.parameter_count.to_string()),
            ("epochs_run", self.epochs_run().to_string()),
            ("best_epoch", self.best_epoch.to_string()),
            ("best_val_mse", format!("{:?}", self.best_val_mse)),
            ("test_mae", format!("{:?}", self.test_mae)),
            ("test_mse", format!("{:?}", self.test_mse)),
            ("train_losses", join_floats(&self.train_losses)),
            ("val_losses", join_floats(&self.val_losses)),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("record lacks {key:?}")))
        };
        fn parse<V: FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key:?}")))
        }
        let floats = |key: &str| -> Result<Vec<f64>> {
            let v = get(key)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| parse(key, x)).collect()
        };
        let revin = match get("revin")? {
            "yes" => true,
            "no" => false,
            other => return Err(Error::InvalidArgument(format!("bad revin flag {other:?}"))),
        };
        Ok(Self {
            dataset: get("dataset")?.to_string(),
            model: get("model")?.to_string(),
            context_len: parse("context_len", get("context_len")?)?,
            horizon: parse("horizon", get("horizon")?)?,
            revin,
            seed: parse("seed", get("seed")?)?,
            parameter_count: parse("parameter_count", get("parameter_count")?)?,
            best_epoch: parse("best_epoch", get("best_epoch")?)?,
            best_val_mse: parse("best_val_mse", get("best_val_mse")?)?,
            test_mae: parse("test_mae", get("test_mae")?)?,
            test_mse: parse("test_mse", get("test_mse")?)?,
            train_losses: floats("train_losses")?,
            val_losses: floats("val_losses")?,
        })
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("line {}: expected key=value, got {line:?}", i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Sample mean and standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset("no values to summarize".into()));
        }
        let n = values.len();
        let first = values[0];
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Ok(Self { mean, std, n })
    }

    /// True when the deviation comes from a single seed and means nothing.
    pub fn single_seed(&self) -> bool {
        self.n == 1
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)?;
        if self.single_seed() {
            f.write_str(" (n=1)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunResult {
        RunResult {
            dataset: "additive".into(),
            model: "leaky".into(),
            context_len: 96,
            horizon: 1,
            revin: false,
            seed: 3,
            parameter_count: 1234,
            best_epoch: 2,
            best_val_mse: 0.1 + 0.2,
            test_mae: 1.0 / 3.0,
            test_mse: 1e-17,
            train_losses: vec![0.5, 0.25, 0.125],
            val_losses: vec![0.6, 0.3, 0.31],
        }
    }

    #[test]
    fn record_reads_back_exactly() {
        let r = sample();
        let text = r.to_record();
        assert!(text.contains("revin=no\n"));
        assert!(text.contains("epochs_run=3\n"));
        assert_eq!(RunResult::from_record(&text).unwrap(), r);
    }

    #[test]
    fn record_errors() {
        assert!(RunResult::from_record("dataset=x\n").is_err());
        let broken = sample()
            .to_record()
            .replace("test_mse=1e-17", "test_mse=abc");
        assert!(RunResult::from_record(&broken).is_err());
        assert!(parse_key_values("no equals sign").is_err());
    }

    #[test]
    fn summaries() {
        let s = Summary::of(&[0.2, 0.2, 0.2]).unwrap();
        assert_eq!((s.mean, s.std), (0.2, 0.0));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let one = Summary::of(&[0.5]).unwrap();
        assert!(one.single_seed() && one.std == 0.0);
        assert_eq!(one.to_string(), "0.5000 ± 0.0000 (n=1)");
        assert!(Summary::of(&[]).is_err());
    }
}
