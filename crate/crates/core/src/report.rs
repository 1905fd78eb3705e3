//! Result tables built from stored run records.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::forecast::ModelKind;
use crate::model::Variant;
use crate::train::{RunResult, Summary};

pub const MISSING: &str = "-";

/// Which table to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Long-horizon comparison of every model with and without RevIN.
    LongHorizon,
    /// One-step comparison of every model with and without RevIN.
    OneStep,
    /// How much the pairwise variants lose against the leaky one.
    Ablation,
}

impl Experiment {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::LongHorizon),
            2 => Ok(Self::OneStep),
            3 => Ok(Self::Ablation),
            _ => Err(Error::InvalidArgument(format!(
                "experiment must be 1, 2 or 3, got {n}"
            ))),
        }
    }

    /// `(context, horizon)` the table covers unless told otherwise.
    pub fn default_task(self) -> Option<(usize, usize)> {
        match self {
            Self::LongHorizon => Some((96, 96)),
            Self::OneStep => Some((96, 1)),
            Self::Ablation => None,
        }
    }
}

const ROW_ORDER: [ModelKind; 5] = [
    ModelKind::DLinear,
    ModelKind::Mlp,
    ModelKind::Cgpt(Variant::Leaky),
    ModelKind::Cgpt(Variant::Strict),
    ModelKind::Cgpt(Variant::Pure),
];

#[derive(Default)]
struct Cell {
    mae: Vec<f64>,
    mse: Vec<f64>,
}

impl Cell {
    fn summaries(&self) -> Option<(Summary, Summary)> {
        Some((Summary::of(&self.mae).ok()?, Summary::of(&self.mse).ok()?))
    }
}

type Key = (String, usize, usize, String, bool);

fn group(records: &[RunResult]) -> BTreeMap<Key, Cell> {
    let mut cells: BTreeMap<Key, Cell> = BTreeMap::new();
    for r in records {
        let key = (
            r.dataset.clone(),
            r.context_len,
            r.horizon,
            r.model.clone(),
            r.revin,
        );
        let cell = cells.entry(key).or_default();
        cell.mae.push(r.test_mae);
        cell.mse.push(r.test_mse);
    }
    cells
}

/// Mean MSE of `model` relative to `reference`.
pub fn mse_ratio(model: f64, reference: f64) -> f64 {
    model / reference
}

/// Builds the CSV table for `experiment`. `task` overrides the default
/// `(context, horizon)` selection.
pub fn build_table(
    records: &[RunResult],
    experiment: Experiment,
    task: Option<(usize, usize)>,
) -> Result<String> {
    let task = task.or(experiment.default_task());
    let selected: Vec<RunResult> = records
        .iter()
        .filter(|r| task.is_none_or(|(l, h)| r.context_len == l && r.horizon == h))
        .cloned()
        .collect();
    if selected.is_empty() {
        let what = task.map_or(String::new(), |(l, h)| format!(" for {l}->{h}"));
        return Err(Error::EmptyDataset(format!("no run records{what}")));
    }
    let cells = group(&selected);
    let mut out = String::new();
    match experiment {
        Experiment::LongHorizon | Experiment::OneStep => {
            out.push_str(
                "dataset,model,MAE (RevIN=Yes),MSE (RevIN=Yes),MAE (RevIN=No),MSE (RevIN=No)\n",
            );
            let tasks: Vec<(String, usize, usize)> =
                dedup(cells.keys().map(|k| (k.0.clone(), k.1, k.2)));
            for (dataset, l, h) in tasks {
                for kind in ROW_ORDER {
                    let mut row = vec![dataset.clone(), kind.label().to_string()];
                    let mut any = false;
                    for revin in [true, false] {
                        match cells
                            .get(&(dataset.clone(), l, h, kind.name().to_string(), revin))
                            .and_then(Cell::summaries)
                        {
                            Some((mae, mse)) => {
                                any = true;
                                row.push(mae.to_string());
                                row.push(mse.to_string());
                            }
                            None => row.extend([MISSING.to_string(), MISSING.to_string()]),
                        }
                    }
                    if any {
                        writeln!(out, "{}", row.join(",")).expect("write to string");
                    }
                }
            }
        }
        Experiment::Ablation => {
            out.push_str(
                "dataset,task,revin,Leaky MSE,Strict MSE,Pure MSE,Strict/Leaky,Pure/Leaky\n",
            );
            let groups: Vec<(String, usize, usize, bool)> = dedup(
                cells
                    .keys()
                    .filter(|k| k.3.parse::<Variant>().is_ok())
                    .map(|k| (k.0.clone(), k.1, k.2, k.4)),
            );
            if groups.is_empty() {
                return Err(Error::EmptyDataset("no CGPT variant records".into()));
            }
            for (dataset, l, h, revin) in groups {
                let mse = |v: Variant| {
                    cells
                        .get(&(dataset.clone(), l, h, v.name().to_string(), revin))
                        .and_then(Cell::summaries)
                        .map(|s| s.1)
                };
                let (leaky, strict, pure) = (
                    mse(Variant::Leaky),
                    mse(Variant::Strict),
                    mse(Variant::Pure),
                );
                let show = |s: Option<Summary>| s.map_or(MISSING.to_string(), |s| s.to_string());
                let ratio = |s: Option<Summary>| match (s, leaky) {
                    (Some(a), Some(b)) => format!("{:.2}", mse_ratio(a.mean, b.mean)),
                    _ => MISSING.to_string(),
                };
                writeln!(
                    out,
                    "{dataset},{l}->{h},{},{},{},{},{},{}",
                    if revin { "yes" } else { "no" },
                    show(leaky),
                    show(strict),
                    show(pure),
                    ratio(strict),
                    ratio(pure)
                )
                .expect("write to string");
            }
        }
    }
    Ok(out)
}

fn dedup<K: Ord + Clone>(keys: impl Iterator<Item = K>) -> Vec<K> {
    let mut v: Vec<K> = keys.collect();
    v.sort();
    v.dedup();
    v
}
