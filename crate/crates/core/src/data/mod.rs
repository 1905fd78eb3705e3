//! Datasets: in-memory representation, split borders, synthetic generators
//! and CSV ingestion.

mod csv;
mod split;
mod synthetic;

use std::ops::Range;

use crate::causal::CausalGraph;
use crate::error::{Error, Result};

pub use self::csv::{
    load_csv, read_graph_sidecar, write_csv, write_graph_sidecar, CsvSchema, DatasetPreset,
};
pub use split::{split_borders, SplitBorders, SplitPolicy};
pub use synthetic::{
    generate, generate_additive, generate_interactive, SyntheticConfig, SyntheticKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelRole {
    /// Sensed process state (X).
    InternalState,
    /// Controls, setpoints, product and environment variables (U).
    Operational,
    /// The forecast KPI (Y).
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A multichannel series stored time-major (`values[t * n_vars + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    values: Vec<f64>,
    n_rows: usize,
    channel_names: Vec<String>,
    roles: Vec<ChannelRole>,
    target: usize,
    graph: CausalGraph,
    splits: Option<SplitBorders>,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        channel_names: Vec<String>,
        roles: Vec<ChannelRole>,
        target: usize,
        graph: CausalGraph,
    ) -> Result<Self> {
        let n_vars = channel_names.len();
        if n_vars == 0 {
            return Err(Error::InvalidArgument("dataset without channels".into()));
        }
        if !values.len().is_multiple_of(n_vars) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill rows of {n_vars} channels",
                values.len()
            )));
        }
        if roles.len() != n_vars {
            return Err(Error::InvalidArgument(format!(
                "{} roles for {n_vars} channels",
                roles.len()
            )));
        }
        if target >= n_vars {
            return Err(Error::InvalidArgument(format!(
                "target {target} outside {n_vars} channels"
            )));
        }
        if roles.iter().filter(|r| **r == ChannelRole::Target).count() != 1
            || roles[target] != ChannelRole::Target
        {
            return Err(Error::InvalidArgument(
                "exactly one target channel is required".into(),
            ));
        }
        graph.validate(n_vars)?;
        Ok(Self {
            name: name.into(),
            n_rows: values.len() / n_vars,
            values,
            channel_names,
            roles,
            target,
            graph,
            splits: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.channel_names.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.n_vars() + c]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|t| self.value(t, c)).collect()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    /// Number of internal-state (X) channels.
    pub fn d_x(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == ChannelRole::InternalState)
            .count()
    }

    /// Number of operational (U) channels.
    pub fn d_u(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == ChannelRole::Operational)
            .count()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn splits(&self) -> Option<&SplitBorders> {
        self.splits.as_ref()
    }

    pub fn with_splits(mut self, splits: SplitBorders) -> Result<Self> {
        if splits.test.end > self.n_rows {
            return Err(Error::InvalidArgument(format!(
                "split borders end at {} beyond {} rows",
                splits.test.end, self.n_rows
            )));
        }
        self.splits = Some(splits);
        Ok(self)
    }

    pub fn split_range(&self, split: Split) -> Result<Range<usize>> {
        let s = self.splits.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("dataset {} has no split borders", self.name))
        })?;
        Ok(match split {
            Split::Train => s.train.clone(),
            Split::Val => s.val.clone(),
            Split::Test => s.test.clone(),
        })
    }

    /// Same dataset with every value replaced by `f(channel, value)`.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let n = self.n_vars();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % n, v))
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }

    /// Appends a channel outside the causal graph (an operational covariate).
    pub fn with_extra_channel(&self, name: impl Into<String>, series: &[f64]) -> Result<Self> {
        if series.len() != self.n_rows {
            return Err(Error::InvalidArgument(format!(
                "extra channel has {} rows, dataset {}",
                series.len(),
                self.n_rows
            )));
        }
        let n = self.n_vars();
        let mut values = Vec::with_capacity(self.values.len() + self.n_rows);
        for (row, &extra) in self.values.chunks(n).zip(series) {
            values.extend_from_slice(row);
            values.push(extra);
        }
        let mut names = self.channel_names.clone();
        names.push(name.into());
        let mut roles = self.roles.clone();
        roles.push(ChannelRole::Operational);
        let mut out = Self::new(
            self.name.clone(),
            values,
            names,
            roles,
            self.target,
            self.graph.clone(),
        )?;
        out.splits = self.splits.clone();
        Ok(out)
    }
}
