//! Experiment specifications, dataset resolution, seeded runs and the
//! on-disk results layout `out/<dataset>/<model>/<revin-yes|revin-no>/<seed>/`.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use crate::causal::select_contexts;
use crate::checkpoint::Checkpoint;
use crate::data::{
    split_borders, DatasetPreset, Split, SplitPolicy, SyntheticConfig, SyntheticKind,
    TimeSeriesDataset,
};
use crate::error::{Error, Result};
use crate::forecast::{AnyModel, Architecture, ModelKind};
use crate::nn::EncoderConfig;
use crate::params::Parameters;
use crate::preprocessing::{make_windows, standardize, PatchConfig, StandardizerStats, WindowSpec};
use crate::train::{
    evaluate, parse_key_values, train, Metrics, RunResult, TaskWindows, TrainConfig,
};

pub const DATA_DIR_ENV: &str = "CGPT_DATA_DIR";
pub const RESULT_FILE: &str = "result.txt";
pub const TIMING_FILE: &str = "timing.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Where a dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic(SyntheticKind),
    Preset(DatasetPreset),
}

impl DatasetSource {
    pub fn parse(id: &str) -> Result<Self> {
        match id.to_ascii_lowercase().as_str() {
            "additive" => Ok(Self::Synthetic(SyntheticKind::Additive)),
            "interactive" => Ok(Self::Synthetic(SyntheticKind::Interactive)),
            other => DatasetPreset::parse(other).map(Self::Preset).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown dataset {id:?}; expected additive, interactive, etth1, factory or amino"
                ))
            }),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Synthetic(k) => k.name(),
            Self::Preset(p) => p.id(),
        }
    }

    fn split_policy(self) -> SplitPolicy {
        match self {
            Self::Synthetic(_) => SplitPolicy::Ratio70_20_10,
            Self::Preset(p) => p.split_policy(),
        }
    }
}

/// Dataset root: the explicit directory, else `$CGPT_DATA_DIR`, else `./data`.
pub fn data_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// One experiment: a dataset, a model family, a task and a list of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub model: ModelKind,
    pub context_len: usize,
    pub horizon: usize,
    pub revin: bool,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Seed of the synthetic generators; independent of the run seeds.
    pub data_seed: u64,
    pub data_dir: Option<PathBuf>,
    /// Overrides the preset's target column.
    pub target: Option<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticKind::Additive),
            model: ModelKind::Cgpt(crate::model::Variant::Leaky),
            context_len: 96,
            horizon: 96,
            revin: true,
            seeds: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("out"),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            data_seed: 0,
            data_dir: None,
            target: None,
        }
    }
}

/// `yes`/`no` and the usual boolean spellings.
pub fn parse_flag(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "yes" | "true" | "1" | "on" => Ok(true),
        "no" | "false" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!(
            "expected yes or no, got {v:?}"
        ))),
    }
}

/// Seed lists such as `0,1,2`, `0-4` or `3`.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("bad seed list {v:?}"));
    let mut seeds = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
}

impl ExperimentSpec {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = DatasetSource::parse(v)?,
            "model" => self.model = v.parse()?,
            "context" | "context_len" => self.context_len = parse_num(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "revin" => self.revin = parse_flag(v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "out" => self.out = PathBuf::from(v),
            "data_seed" => self.data_seed = parse_num(key, v)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            "target" => self.target = Some(v.to_string()),
            "d_model" => self.encoder.d_model = parse_num(key, v)?,
            "d_ff" => self.encoder.d_ff = parse_num(key, v)?,
            "n_heads" => self.encoder.n_heads = parse_num(key, v)?,
            "e_layers" => self.encoder.e_layers = parse_num(key, v)?,
            "dropout" => self.encoder.dropout = parse_num(key, v)?,
            "max_patches" => self.encoder.max_patches = parse_num(key, v)?,
            "patch_len" => {
                self.encoder.patch =
                    PatchConfig::new(parse_num(key, v)?, self.encoder.patch.stride)?
            }
            "stride" => {
                self.encoder.patch =
                    PatchConfig::new(self.encoder.patch.patch_len, parse_num(key, v)?)?
            }
            "lr" => self.train.lr = parse_num(key, v)?,
            "batch" | "batch_size" => self.train.batch_size = parse_num(key, v)?,
            "max_epochs" => self.train.max_epochs = parse_num(key, v)?,
            "patience" => self.train.patience = parse_num(key, v)?,
            "weight_decay" => self.train.weight_decay = parse_num(key, v)?,
            "beta1" => self.train.beta1 = parse_num(key, v)?,
            "beta2" => self.train.beta2 = parse_num(key, v)?,
            "adam_eps" => self.train.adam_eps = parse_num(key, v)?,
            "max_train_windows" => self.train.max_train_windows = Some(parse_num(key, v)?),
            "max_eval_windows" => self.train.max_eval_windows = Some(parse_num(key, v)?),
            other => return Err(Error::InvalidArgument(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies every line of a `key=value` file on top of `self`.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one seed is required".into(),
            ));
        }
        if self.context_len == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument(
                "context length and horizon must be positive".into(),
            ));
        }
        self.encoder.validate()?;
        self.train.validate()
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out
            .join(self.dataset.id())
            .join(self.model.name())
            .join(if self.revin { "revin-yes" } else { "revin-no" })
            .join(seed.to_string())
    }

    pub fn architecture(&self, n_vars: usize) -> Architecture {
        Architecture {
            kind: self.model,
            encoder: self.encoder,
            context_len: self.context_len,
            horizon: self.horizon,
            n_vars,
            revin: self.revin,
        }
    }

    fn header(&self, arch: &Architecture, seed: u64) -> Vec<(String, String)> {
        let mut h = arch.to_entries();
        h.push(("dataset".into(), self.dataset.id().into()));
        h.push(("data_seed".into(), self.data_seed.to_string()));
        h.push(("seed".into(), seed.to_string()));
        if let Some(t) = &self.target {
            h.push(("target".into(), t.clone()));
        }
        h
    }
}

/// A dataset standardized with training statistics, with its window layout.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: TimeSeriesDataset,
    pub stats: StandardizerStats,
    pub windows: WindowSpec,
}

impl PreparedData {
    pub fn task(&self) -> Result<TaskWindows<'_>> {
        Ok(TaskWindows {
            train: make_windows(&self.dataset, Split::Train, &self.windows)?,
            val: make_windows(&self.dataset, Split::Val, &self.windows)?,
            test: make_windows(&self.dataset, Split::Test, &self.windows)?,
        })
    }
}

pub fn load_dataset(
    source: DatasetSource,
    data_seed: u64,
    data_dir: Option<&Path>,
    target: Option<&str>,
) -> Result<TimeSeriesDataset> {
    match source {
        DatasetSource::Synthetic(kind) => {
            crate::data::generate(kind, &SyntheticConfig::for_kind(kind, data_seed))
        }
        DatasetSource::Preset(preset) => {
            let root = data_root(data_dir);
            let path = preset.path_in(&root);
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "dataset file {} not found; place {} there or set {DATA_DIR_ENV}",
                    path.display(),
                    preset.file_name()
                )));
            }
            preset.load(&root, target)
        }
    }
}

/// Splits and standardizes `raw` and lays out its windows.
pub fn prepare(
    raw: TimeSeriesDataset,
    policy: SplitPolicy,
    context_len: usize,
    horizon: usize,
) -> Result<PreparedData> {
    let borders = split_borders(raw.n_rows(), policy, context_len, horizon)?;
    let split = raw.with_splits(borders)?;
    let stats = StandardizerStats::fit_train(&split)?;
    let dataset = standardize(&split, &stats)?;
    let target = dataset.target();
    let windows = WindowSpec {
        context_len,
        horizon,
        target,
        context_channels: select_contexts(dataset.graph(), target, dataset.n_vars()),
    };
    Ok(PreparedData {
        dataset,
        stats,
        windows,
    })
}

pub fn prepare_spec(spec: &ExperimentSpec) -> Result<PreparedData> {
    let raw = load_dataset(
        spec.dataset,
        spec.data_seed,
        spec.data_dir.as_deref(),
        spec.target.as_deref(),
    )?;
    prepare(
        raw,
        spec.dataset.split_policy(),
        spec.context_len,
        spec.horizon,
    )
}

/// A finished run: its record, trained parameters and wall time.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub result: RunResult,
    pub model: AnyModel<f64>,
    pub checkpoint: Checkpoint,
    pub seconds: f64,
}

/// Initializes with `seed`, trains, and evaluates the restored best model.
pub fn run_seed(spec: &ExperimentSpec, data: &PreparedData, seed: u64) -> Result<SeedRun> {
    let start = Instant::now();
    let arch = spec.architecture(data.dataset.n_vars());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = AnyModel::<f64>::init(&mut rng, &arch)?;
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let outcome = train(&mut model, &data.task()?, &cfg)?;
    let result = RunResult {
        dataset: spec.dataset.id().to_string(),
        model: spec.model.name().to_string(),
        context_len: spec.context_len,
        horizon: spec.horizon,
        revin: spec.revin,
        seed,
        parameter_count: model.parameter_count(),
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_val_mse,
        test_mae: outcome.test.mae,
        test_mse: outcome.test.mse,
        train_losses: outcome.train_losses,
        val_losses: outcome.val_losses,
    };
    let checkpoint = Checkpoint::capture(spec.header(&arch, seed), &model);
    Ok(SeedRun {
        result,
        model,
        checkpoint,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Fails if any seed already has a result and `overwrite` is off.
pub fn check_outputs(spec: &ExperimentSpec, overwrite: bool) -> Result<()> {
    if overwrite {
        return Ok(());
    }
    for &seed in &spec.seeds {
        let dir = spec.run_dir(seed);
        if dir.join(RESULT_FILE).exists() || dir.join(CHECKPOINT_FILE).exists() {
            return Err(Error::InvalidArgument(format!(
                "{} already holds results; pass --overwrite to replace them",
                dir.display()
            )));
        }
    }
    Ok(())
}

pub fn store(dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESULT_FILE), run.result.to_record())?;
    fs::write(
        dir.join(TIMING_FILE),
        format!("wall_seconds={:.3}\n", run.seconds),
    )?;
    run.checkpoint.save(&dir.join(CHECKPOINT_FILE))
}

/// Runs every seed of `spec`, storing each result as soon as it exists.
/// `progress` sees each finished run.
pub fn run_experiment(
    spec: &ExperimentSpec,
    overwrite: bool,
    mut progress: impl FnMut(&SeedRun),
) -> Result<Vec<RunResult>> {
    spec.validate()?;
    check_outputs(spec, overwrite)?;
    let data = prepare_spec(spec)?;
    let mut results = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let run = run_seed(spec, &data, seed)?;
        store(&spec.run_dir(seed), &run)?;
        progress(&run);
        results.push(run.result);
    }
    Ok(results)
}

/// Rebuilds a stored model and its data, then scores it on `split`.
pub fn evaluate_checkpoint(
    path: &Path,
    split: Split,
    data_dir: Option<&Path>,
) -> Result<(Metrics, Architecture)> {
    let ck = Checkpoint::load(path)?;
    let arch = Architecture::from_entries(&ck.header)?;
    let field = |k: &str| {
        ck.header_value(k)
            .ok_or_else(|| Error::Checkpoint(format!("header lacks {k:?}")))
    };
    let source = DatasetSource::parse(field("dataset")?)?;
    let data_seed = parse_num("data_seed", field("data_seed")?)?;
    let raw = load_dataset(source, data_seed, data_dir, ck.header_value("target"))?;
    let data = prepare(raw, source.split_policy(), arch.context_len, arch.horizon)?;
    let mut model = AnyModel::<f64>::init(&mut ChaCha8Rng::seed_from_u64(0), &arch)?;
    ck.restore(&mut model)?;
    let windows = make_windows(&data.dataset, split, &data.windows)?;
    Ok((evaluate(&model, &windows, 256)?, arch))
}

/// Every `result.txt` below `root`, in path order.
pub fn collect_results(root: &Path) -> Result<Vec<RunResult>> {
    if !root.is_dir() {
        return Err(Error::EmptyDataset(format!(
            "results directory {} does not exist",
            root.display()
        )));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == RESULT_FILE {
            files.push(entry.into_path());
        }
    }
    files
        .iter()
        .map(|p| {
            RunResult::from_record(&fs::read_to_string(p)?)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))
        })
        .collect()
}
