//! Comma-separated ingestion and export.
//!
//! Format: header row, decimal-point floats, optional leading timestamp column
//! named `date` that is dropped on load.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ChannelRole, SplitPolicy, TimeSeriesDataset};
use crate::causal::CausalGraph;
use crate::error::{Error, Result};

/// How the columns of a CSV file map onto dataset channels.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Columns removed before parsing (timestamps, identifiers).
    pub drop: Vec<String>,
    /// Explicit roles; columns not listed default to internal state.
    pub roles: HashMap<String, ChannelRole>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            drop: vec!["date".to_string()],
            roles: HashMap::new(),
        }
    }
}

fn csv_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<::csv::Reader<fs::File>> {
    ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 1, e.to_string()))
}

fn read_header(path: &Path, r: &mut ::csv::Reader<fs::File>) -> Result<Vec<String>> {
    let header = r.headers().map_err(|e| csv_error(path, 1, e.to_string()))?;
    Ok(header.iter().map(str::to_string).collect())
}

/// Loads a dataset with the named target column. Real datasets carry no causal
/// graph, so every non-target column becomes a context.
pub fn load_csv(path: &Path, schema: &CsvSchema, target: &str) -> Result<TimeSeriesDataset> {
    let mut r = reader(path)?;
    let header = read_header(path, &mut r)?;
    if header.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !schema.drop.iter().any(|d| *d == header[i]))
        .collect();
    let names: Vec<String> = keep.iter().map(|&i| header[i].clone()).collect();
    let target_idx = names
        .iter()
        .position(|n| n == target)
        .ok_or_else(|| csv_error(path, 1, format!("missing target column {target:?}")))?;

    let mut values = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(path, line, e.to_string())
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(csv_error(
                path,
                line_no,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for &i in &keep {
            let v: f64 = record[i].parse().map_err(|_| {
                csv_error(
                    path,
                    line_no,
                    format!(
                        "non-numeric value {:?} in column {:?}",
                        &record[i], header[i]
                    ),
                )
            })?;
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }

    let roles = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if i == target_idx {
                ChannelRole::Target
            } else {
                schema
                    .roles
                    .get(n)
                    .copied()
                    .unwrap_or(ChannelRole::InternalState)
            }
        })
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeriesDataset::new(
        name,
        values,
        names,
        roles,
        target_idx,
        CausalGraph::absent(),
    )
}

pub fn write_csv(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path).map_err(|e| csv_error(path, 1, e.to_string()))?;
    let fail = |e: ::csv::Error| csv_error(path, 0, e.to_string());
    w.write_record(ds.channel_names()).map_err(fail)?;
    for row in ds.values().chunks(ds.n_vars()) {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(fail)?;
    }
    w.flush()?;
    Ok(())
}

/// One `cause->effect` line per edge, using channel names.
pub fn write_graph_sidecar(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let names = ds.channel_names();
    let mut text = String::new();
    for (c, e) in ds.graph().edges() {
        text.push_str(&format!("{}->{}\n", names[c], names[e]));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Parses a sidecar written by [`write_graph_sidecar`] against `ds`'s channels.
pub fn read_graph_sidecar(ds: &TimeSeriesDataset, path: &Path) -> Result<CausalGraph> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (c, e) = line.split_once("->").ok_or_else(|| {
            csv_error(path, i + 1, format!("expected cause->effect, got {line:?}"))
        })?;
        let find = |n: &str| {
            ds.channel_index(n.trim())
                .ok_or_else(|| csv_error(path, i + 1, format!("unknown channel {n:?}")))
        };
        edges.push((find(c)?, find(e)?));
    }
    CausalGraph::new(edges)
}

/// Public datasets with a fixed file name, target rule and row count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetPreset {
    Etth1,
    MultiStageFactory,
    AminoEmissions,
}

impl DatasetPreset {
    pub fn parse(id: &str) -> Option<Self> {
        match id.to_ascii_lowercase().as_str() {
            "etth1" => Some(Self::Etth1),
            "factory" | "kaggle" | "multistage" => Some(Self::MultiStageFactory),
            "amino" | "carbon" => Some(Self::AminoEmissions),
            _ => None,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Etth1 => "etth1",
            Self::MultiStageFactory => "factory",
            Self::AminoEmissions => "amino",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Etth1 => "ETTh1.csv",
            Self::MultiStageFactory => "multistage_factory.csv",
            Self::AminoEmissions => "amino_emissions.csv",
        }
    }

    pub fn expected_rows(self) -> usize {
        match self {
            Self::Etth1 => 17420,
            Self::MultiStageFactory => 14088,
            Self::AminoEmissions => 5409,
        }
    }

    pub fn expected_channels(self) -> usize {
        match self {
            Self::Etth1 => 7,
            Self::MultiStageFactory => 56,
            Self::AminoEmissions => 67,
        }
    }

    pub fn split_policy(self) -> SplitPolicy {
        match self {
            Self::Etth1 => SplitPolicy::Etth1Standard,
            _ => SplitPolicy::Ratio70_20_10,
        }
    }

    /// Target column for a header, or `None` when no column qualifies.
    pub fn target_column(self, header: &[String]) -> Option<String> {
        let pick = |f: &dyn Fn(&str) -> bool| header.iter().find(|h| f(h)).cloned();
        match self {
            Self::Etth1 => pick(&|h| h == "OT"),
            Self::AminoEmissions => pick(&|h| h.starts_with("2-Amino")),
            Self::MultiStageFactory => {
                pick(&|h| h.starts_with("Stage1.Output.Measurement0.U.") && h.ends_with("Err"))
            }
        }
    }

    pub fn path_in(self, root: &Path) -> PathBuf {
        root.join(self.file_name())
    }

    /// Loads the preset from `root`, resolving the target from the header and
    /// checking the row count.
    pub fn load(self, root: &Path, target_override: Option<&str>) -> Result<TimeSeriesDataset> {
        let path = self.path_in(root);
        let header = read_header(&path, &mut reader(&path)?)?;
        let target = match target_override {
            Some(t) => t.to_string(),
            None => self
                .target_column(&header)
                .ok_or_else(|| csv_error(&path, 1, "no column matches the preset target rule"))?,
        };
        let mut ds = load_csv(&path, &CsvSchema::default(), &target)?;
        if ds.n_rows() != self.expected_rows() {
            return Err(csv_error(
                &path,
                ds.n_rows() + 1,
                format!(
                    "expected {} rows, found {}",
                    self.expected_rows(),
                    ds.n_rows()
                ),
            ));
        }
        ds.name = self.id().to_string();
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn drops_date_and_finds_target() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "x.csv",
            "date,a,OT\n2016-07-01 00:00:00,1.0,2.5\n2016-07-01 01:00:00,3,4\n",
        );
        let ds = load_csv(&p, &CsvSchema::default(), "OT").unwrap();
        assert_eq!((ds.n_rows(), ds.n_vars(), ds.target()), (2, 2, 1));
        assert_eq!(ds.values(), &[1.0, 2.5, 3.0, 4.0]);
        assert!(!ds.graph().is_present());
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x.csv", "a,OT\n");
        let err = load_csv(&p, &CsvSchema::default(), "OT").unwrap_err();
        assert!(err.to_string().contains("empty dataset"), "{err}");
    }

    #[test]
    fn errors_carry_locations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x.csv", "a,OT\n1,2\n3,oops\n");
        let err = load_csv(&p, &CsvSchema::default(), "OT")
            .unwrap_err()
            .to_string();
        assert!(err.contains(":3:") && err.contains("oops"), "{err}");

        let p = write(&dir, "y.csv", "a,OT\n1,2\n3\n");
        let err = load_csv(&p, &CsvSchema::default(), "OT")
            .unwrap_err()
            .to_string();
        assert!(err.contains(":3:"), "{err}");

        let err = load_csv(&p, &CsvSchema::default(), "missing")
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing target"), "{err}");
    }

    #[test]
    fn roles_from_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x.csv", "u,x,y\n1,2,3\n");
        let mut schema = CsvSchema::default();
        schema.roles.insert("u".into(), ChannelRole::Operational);
        let ds = load_csv(&p, &schema, "y").unwrap();
        assert_eq!(
            ds.roles(),
            &[
                ChannelRole::Operational,
                ChannelRole::InternalState,
                ChannelRole::Target
            ]
        );
        assert_eq!((ds.d_x(), ds.d_u()), (1, 1));
    }

    #[test]
    fn preset_target_rules() {
        let h = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            DatasetPreset::Etth1
                .target_column(&h(&["HUFL", "OT"]))
                .as_deref(),
            Some("OT")
        );
        assert_eq!(
            DatasetPreset::AminoEmissions
                .target_column(&h(&[
                    "TI-19",
                    "2-Amino-2-methylpropanol C4H11NO",
                    "2-Amino-x"
                ]))
                .as_deref(),
            Some("2-Amino-2-methylpropanol C4H11NO")
        );
        assert_eq!(
            DatasetPreset::parse("Carbon"),
            Some(DatasetPreset::AminoEmissions)
        );
        assert_eq!(
            DatasetPreset::parse("kaggle"),
            Some(DatasetPreset::MultiStageFactory)
        );
    }

    #[test]
    fn sidecar_round_trip() {
        let ds =
            crate::data::generate_additive(&crate::data::SyntheticConfig::additive(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        write_graph_sidecar(&ds, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "C0->C3\nC1->C3\n");
        assert_eq!(&read_graph_sidecar(&ds, &p).unwrap(), ds.graph());
    }
}
