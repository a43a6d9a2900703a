//! Experiment driver: TOML run configurations, presets, seeded runs,
//! per-round CSV telemetry, JSON summaries and side-by-side comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    read_libsvm_file, sample_round, schedule_preset, DataSource, DriftEvent, DriftSchedule, RoundDataset, SizeLaw,
};
use crate::error::{Error, Result};
use crate::fed::{DpuConfig, FedRunner, Optimizer, TrackerParams};
use crate::loss::{estimate_mu, BregmanDivergence, LossKind, LossModel, Regularizer, DEFAULT_LOSS_SCALE};
use crate::master::{run_master, BlockRecord, EpochRecord, MasterConfig, MasterRun, RateSchedule, RunMode};
use crate::multiscale::{InitPolicy, RoundContext};
use crate::regret::{regret_trace, RegretTrace, SolverOptions, TraceOptions};

pub const ACCURACY_PROTOCOL: &str =
    "prequential: argmax-correct fraction on each round's sampled data, using the model before that round's update; \
     uniform mean over all rounds";

pub const DPU_SAMPLING_NOTE: &str =
    "each DPU samples independently from the active pool, so DPUs may share points within a round";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    #[default]
    Fedavg,
    Fedomd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    BinaryLogistic,
    Softmax,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Inferred from the data source when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<LossName>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Estimated from the first round's data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

fn default_scale() -> f64 {
    DEFAULT_LOSS_SCALE
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: None,
            lambda: 0.0,
            regularizer: Regularizer::default(),
            scale: DEFAULT_LOSS_SCALE,
            mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    pub test_scale: f64,
    pub c_tilde: f64,
    pub reset_order_on_restart: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            delta: 0.1,
            test_scale: 1.0,
            c_tilde: 1.0,
            reset_order_on_restart: false,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        size: SizeLaw,
    },
    SyntheticQuadratic {
        optimum: Vec<f64>,
        noise: f64,
        #[serde(default)]
        size: SizeLaw,
    },
    /// Either explicit `centers`, or `classes` centres of dimension
    /// `features` drawn on a sphere of radius `separation`.
    SyntheticLogistic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centers: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<usize>,
        #[serde(default = "default_separation")]
        separation: f64,
        noise: f64,
        #[serde(default)]
        size: SizeLaw,
    },
}

fn default_separation() -> f64 {
    2.0
}

impl DataConfig {
    pub fn size_law(&self) -> SizeLaw {
        match self {
            DataConfig::Libsvm { size, .. }
            | DataConfig::SyntheticQuadratic { size, .. }
            | DataConfig::SyntheticLogistic { size, .. } => *size,
        }
    }

    pub fn build(&self, seed: u64) -> Result<DataSource> {
        match self {
            DataConfig::Libsvm { path, .. } => DataSource::from_libsvm(read_libsvm_file(path)?, seed),
            DataConfig::SyntheticQuadratic { optimum, noise, .. } => {
                DataSource::synthetic_quadratic(optimum.clone(), *noise, seed)
            }
            DataConfig::SyntheticLogistic {
                centers,
                classes,
                features,
                separation,
                noise,
                ..
            } => match (centers, classes, features) {
                (Some(c), None, None) => DataSource::synthetic_logistic(c.clone(), *noise, seed),
                (None, Some(k), Some(p)) => DataSource::random_logistic(*k, *p, *separation, *noise, seed),
                _ => Err(Error::Config(
                    "synthetic-logistic data needs either `centers` or both `classes` and `features`".into(),
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<DriftEvent>,
}

impl DriftConfig {
    pub fn build(&self) -> Result<DriftSchedule> {
        match &self.preset {
            Some(name) if !self.events.is_empty() => Err(Error::Config(format!(
                "drift preset `{name}` cannot be combined with explicit events"
            ))),
            Some(name) => schedule_preset(name).ok_or_else(|| Error::Config(format!("unknown drift preset `{name}`"))),
            None => DriftSchedule::new(self.events.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpuSettings {
    /// Mini-batch fraction for every DPU; 1 means full batch.
    pub gamma: f64,
}

impl Default for DpuSettings {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorMode {
    /// Solve every round's comparator after the main loop.
    #[default]
    Offline,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub comparator: ComparatorMode,
    pub static_comparator: bool,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            comparator: ComparatorMode::Offline,
            static_comparator: false,
            solver_tolerance: s.tolerance,
            solver_max_iterations: s.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub algo: Algo,
    #[serde(default)]
    pub mode: RunMode,
    pub horizon: usize,
    pub n_dpus: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub bregman: BregmanDivergence,
    pub data: DataConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub dpus: DpuSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.n_dpus < 1 {
            return Err(Error::Config("n_dpus must be >= 1".into()));
        }
        if let DataConfig::Libsvm { path, .. } = &self.data {
            if !path.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", path.display())));
            }
        }
        if !(self.dpus.gamma > 0.0 && self.dpus.gamma <= 1.0) {
            return Err(Error::Config(format!("dpus.gamma must lie in (0, 1], got {}", self.dpus.gamma)));
        }
        if !(self.rates.test_scale > 0.0) || !(self.rates.c_tilde >= 0.0) {
            return Err(Error::Config("rates.test_scale must be > 0 and rates.c_tilde >= 0".into()));
        }
        if self.rates.window == Some(0) {
            return Err(Error::Config("rates.window must be >= 1".into()));
        }
        self.rate_schedule()?;
        self.data.size_law().validate()?;
        Ok(())
    }

    pub fn rate_schedule(&self) -> Result<RateSchedule> {
        RateSchedule::new(self.rates.c1, self.rates.c2, self.horizon, self.rates.delta)
    }

    /// Loss model for `source`, with μ still unset.
    pub fn loss_model(&self, source: &DataSource) -> Result<LossModel> {
        let kind = match self.loss.kind {
            Some(LossName::Quadratic) => LossKind::Quadratic,
            Some(LossName::BinaryLogistic) => LossKind::BinaryLogistic,
            Some(LossName::Softmax) => LossKind::Softmax {
                classes: source.classes.labels().to_vec(),
            },
            None => match &self.data {
                DataConfig::SyntheticQuadratic { .. } => LossKind::Quadratic,
                _ if source.classes.is_binary() => LossKind::BinaryLogistic,
                _ => LossKind::Softmax {
                    classes: source.classes.labels().to_vec(),
                },
            },
        };
        if kind == LossKind::Quadratic && !matches!(self.data, DataConfig::SyntheticQuadratic { .. }) {
            return Err(Error::Config("the quadratic loss needs synthetic-quadratic data".into()));
        }
        let lm = LossModel::new(kind, source.features)
            .with_lambda(self.loss.lambda)
            .with_regularizer(self.loss.regularizer)
            .with_scale(self.loss.scale);
        lm.validate()?;
        Ok(lm)
    }

    pub fn label(&self) -> String {
        let mode = match self.mode {
            RunMode::Master => "master",
            RunMode::SingleInstanceBaseline => "baseline",
        };
        let algo = match self.algo {
            Algo::Fedavg => "fedavg",
            Algo::Fedomd => "fedomd",
        };
        format!("{mode}-{algo}")
    }
}

const PRESETS: [(&str, &str); 5] = [
    ("paper-vi", include_str!("../presets/paper-vi.toml")),
    ("paper-vi-ci", include_str!("../presets/paper-vi-ci.toml")),
    ("stationary-quadratic", include_str!("../presets/stationary-quadratic.toml")),
    ("shift-quadratic", include_str!("../presets/shift-quadratic.toml")),
    ("piecewise-quadratic", include_str!("../presets/piecewise-quadratic.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Values applied on top of a preset and config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    /// LIBSVM file; selects the `libsvm` data source.
    pub data_path: Option<PathBuf>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Builds a run configuration from an optional preset, an optional file
/// layered over it, and command-line overrides.
pub fn load_config(preset: Option<&str>, text: Option<&str>, overrides: &ConfigOverrides) -> Result<RunConfig> {
    let mut value = toml::Value::Table(toml::Table::new());
    if let Some(name) = preset {
        let body = preset_text(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        merge(&mut value, toml::from_str::<toml::Table>(body)?.into());
    }
    if let Some(text) = text {
        merge(&mut value, toml::from_str::<toml::Table>(text)?.into());
    }
    let table = value.as_table_mut().expect("root is a table");
    if let Some(seed) = overrides.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Config("seed must fit in a signed 64-bit integer".into()))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if let Some(path) = &overrides.data_path {
        let mut data = toml::Table::new();
        data.insert("source".into(), "libsvm".into());
        data.insert("path".into(), path.to_string_lossy().into_owned().into());
        if let Some(size) = table.get("data").and_then(|d| d.get("size")) {
            data.insert("size".into(), size.clone());
        }
        table.insert("data".into(), toml::Value::Table(data));
    }
    let config: RunConfig = value.try_into()?;
    config.validate()?;
    Ok(config)
}

pub fn load_config_file(preset: Option<&str>, path: Option<&Path>, overrides: &ConfigOverrides) -> Result<RunConfig> {
    let text = path.map(fs::read_to_string).transpose()?;
    load_config(preset, text.as_deref(), overrides)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub seed: u64,
    pub horizon: usize,
    pub loss_kind: String,
    pub data_source: String,
    pub final_regret: Option<f64>,
    pub static_regret: Option<f64>,
    pub mean_loss: f64,
    pub mean_accuracy: Option<f64>,
    pub accuracy_protocol: String,
    pub restarts: usize,
    pub restart_rounds: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
    pub blocks: Vec<BlockRecord>,
    /// L from the drift schedule.
    pub drift_count: usize,
    pub drift_rounds: Vec<usize>,
    pub mu: f64,
    pub mu_estimated: bool,
    pub clip_events: usize,
    pub lipschitz_violations: usize,
    pub degraded_estimate_rounds: usize,
    pub oversampled_rounds: usize,
    pub comparator_nonconverged: usize,
    pub negative_regret_rounds: usize,
    pub notes: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub run: MasterRun,
    pub trace: Option<RegretTrace>,
    pub datasets: Vec<Arc<RoundDataset>>,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn mean_loss_over(&self, first: usize, last: usize) -> f64 {
        let rows = &self.run.rounds[first - 1..last];
        rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64
    }
}

/// Runs `config` in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let horizon = config.horizon;
    let source = config.data.build(config.seed)?;
    let schedule = config.drift.build()?;
    schedule.validate(horizon, source.classes.len(), source.features)?;
    let law = config.data.size_law();
    let mut lm = config.loss_model(&source)?;

    let mut notes = vec![DPU_SAMPLING_NOTE.to_string()];
    let mu_estimated = config.loss.mu.is_none();
    lm.mu = match config.loss.mu {
        Some(mu) => mu,
        None => {
            let first = sample_round(&source, &schedule, 1, config.n_dpus, &law)?;
            let radius = first.points().map(|p| p.features.norm_sq().sqrt()).fold(0.0, f64::max);
            notes.push(format!(
                "mu estimated from round 1 for models of norm <= {radius:.6} (largest feature norm)"
            ));
            estimate_mu(first.points(), &lm.kind, lm.lambda, lm.scale, radius)
        }
    };
    lm.validate()?;

    let optimizer = match config.algo {
        Algo::Fedavg => Optimizer::FedAvg,
        Algo::Fedomd => {
            config.bregman.validate(lm.dimension())?;
            Optimizer::FedOmd(config.bregman.clone())
        }
    };
    let dpus = (0..config.n_dpus)
        .map(|n| {
            if config.dpus.gamma < 1.0 {
                DpuConfig::minibatch(n, config.dpus.gamma)
            } else {
                Ok(DpuConfig::full_batch(n))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let runner = FedRunner::new(lm.clone(), optimizer, config.n_dpus, config.seed).with_dpus(dpus);
    let tracker = TrackerParams::new(config.rates.c_tilde, horizon, config.rates.delta);
    let mut ctx = RoundContext::new(runner, tracker, config.init);

    let mut master = MasterConfig::new(config.rate_schedule()?, config.seed);
    master.test_scale = config.rates.test_scale;
    master.reset_order_on_restart = config.rates.reset_order_on_restart;
    master.mode = config.mode;
    master.window = config.rates.window;

    let mut datasets: Vec<Arc<RoundDataset>> = Vec::with_capacity(horizon);
    let run = {
        let mut provider = |t: usize| -> Result<Arc<RoundDataset>> {
            let d = Arc::new(sample_round(&source, &schedule, t, config.n_dpus, &law)?);
            datasets.push(Arc::clone(&d));
            Ok(d)
        };
        run_master(&master, &mut ctx, &mut provider)?
    };

    let trace = match config.output.comparator {
        ComparatorMode::Off => None,
        ComparatorMode::Offline => {
            let models: Vec<Vec<f64>> = run.rounds.iter().map(|r| r.model.clone()).collect();
            let opts = TraceOptions {
                solver: SolverOptions {
                    tolerance: config.output.solver_tolerance,
                    max_iterations: config.output.solver_max_iterations,
                },
                probe_seed: config.seed,
                static_comparator: config.output.static_comparator,
            };
            Some(regret_trace(&models, &datasets, &lm, &schedule, opts)?)
        }
    };

    let accuracies: Vec<f64> = run.rounds.iter().filter_map(|r| r.accuracy).collect();
    let clip_events: usize = run.rounds.iter().map(|r| r.clip_events).sum();
    if clip_events > 0 {
        notes.push(format!("{clip_events} per-point losses were clipped to [0, 1]"));
    }
    if let Some(tr) = &trace {
        if tr.nonconverged > 0 {
            notes.push(format!("{} comparator solves did not converge", tr.nonconverged));
        }
        if tr.negative_rounds > 0 {
            notes.push(format!("{} rounds have negative regret beyond tolerance", tr.negative_rounds));
        }
    }
    let summary = Summary {
        label: config.label(),
        seed: config.seed,
        horizon,
        loss_kind: lm.kind.name().into(),
        data_source: source.kind_name().into(),
        final_regret: trace.as_ref().map(RegretTrace::total),
        static_regret: trace.as_ref().and_then(RegretTrace::static_regret),
        mean_loss: run.rounds.iter().map(|r| r.loss).sum::<f64>() / horizon as f64,
        mean_accuracy: (!accuracies.is_empty()).then(|| accuracies.iter().sum::<f64>() / accuracies.len() as f64),
        accuracy_protocol: ACCURACY_PROTOCOL.into(),
        restarts: run.restarts(),
        restart_rounds: run.restart_rounds(),
        epochs: run.epochs.clone(),
        blocks: run.blocks.clone(),
        drift_count: schedule.drift_count(horizon),
        drift_rounds: schedule.drift_rounds(horizon),
        mu: lm.mu,
        mu_estimated,
        clip_events,
        lipschitz_violations: run.rounds.iter().map(|r| r.lipschitz_violations).sum(),
        degraded_estimate_rounds: run.rounds.iter().filter(|r| r.degraded_estimate).count(),
        oversampled_rounds: datasets.iter().filter(|d| d.oversampled).count(),
        comparator_nonconverged: trace.as_ref().map_or(0, |t| t.nonconverged),
        negative_regret_rounds: trace.as_ref().map_or(0, |t| t.negative_rounds),
        notes,
        config: config.clone(),
    };
    Ok(RunOutcome {
        config: config.clone(),
        run,
        trace,
        datasets,
        summary,
    })
}

pub const CSV_HEADER: [&str; 14] = [
    "t",
    "block_order",
    "epoch_id",
    "active_s",
    "active_e",
    "active_k",
    "F",
    "F_tilde",
    "U",
    "test1_fired",
    "test2_fired",
    "regret_inst",
    "regret_cum",
    "delta_hat",
];

pub fn write_rounds_csv<W: std::io::Write>(outcome: &RunOutcome, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (i, r) in outcome.run.rounds.iter().enumerate() {
        let row = outcome.trace.as_ref().map(|t| &t.rows[i]);
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        w.write_record([
            r.t.to_string(),
            r.block_order.to_string(),
            r.epoch_id.to_string(),
            r.active.start.to_string(),
            r.active.end.to_string(),
            r.active.order.to_string(),
            r.loss.to_string(),
            r.optimistic.to_string(),
            r.upper.to_string(),
            u8::from(r.test1_fired).to_string(),
            u8::from(r.test2_fired).to_string(),
            opt(row.map(|x| x.instantaneous)),
            opt(row.map(|x| x.cumulative)),
            opt(row.and_then(|x| x.delta_hat)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs `config` and writes `rounds.csv`, `summary.json` and the resolved
/// `config.toml` into `out_dir`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    fs::create_dir_all(out_dir)?;
    write_rounds_csv(&outcome, fs::File::create(out_dir.join("rounds.csv"))?)?;
    write_json(&out_dir.join("summary.json"), &outcome.summary)?;
    fs::write(out_dir.join("config.toml"), config.to_toml()?)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodColumn {
    pub label: String,
    pub mean_accuracy: Option<f64>,
    pub mean_loss: f64,
    pub final_regret: Option<f64>,
    pub restarts: usize,
    pub restart_rounds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub horizon: usize,
    pub data_source: String,
    pub accuracy_protocol: String,
    pub methods: Vec<MethodColumn>,
}

fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::Argument("nothing to compare".into()));
    };
    for c in &configs[1..] {
        if c.seed != first.seed {
            return Err(Error::Config(format!(
                "refusing to compare runs with different seeds ({} vs {})",
                first.seed, c.seed
            )));
        }
        if c.data != first.data || c.drift != first.drift || c.horizon != first.horizon || c.n_dpus != first.n_dpus {
            return Err(Error::Config(
                "refusing to compare runs with different data sources, drift schedules, horizons or DPU counts".into(),
            ));
        }
    }
    Ok(())
}

pub fn compare(configs: &[RunConfig]) -> Result<(Comparison, Vec<RunOutcome>)> {
    check_comparable(configs)?;
    let outcomes = configs.iter().map(execute).collect::<Result<Vec<_>>>()?;
    Ok(compare_outcomes(outcomes))
}

/// Runs every config into `out_dir/<index>-<label>/` and writes
/// `out_dir/comparison.json`.
pub fn compare_to_dir(configs: &[RunConfig], out_dir: &Path) -> Result<Comparison> {
    check_comparable(configs)?;
    let mut outcomes = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        outcomes.push(run_experiment(c, &out_dir.join(format!("{}-{}", i + 1, c.label())))?);
    }
    let (comparison, _) = compare_outcomes(outcomes);
    write_json(&out_dir.join("comparison.json"), &comparison)?;
    Ok(comparison)
}

fn compare_outcomes(outcomes: Vec<RunOutcome>) -> (Comparison, Vec<RunOutcome>) {
    let methods = outcomes
        .iter()
        .map(|o| MethodColumn {
            label: o.summary.label.clone(),
            mean_accuracy: o.summary.mean_accuracy,
            mean_loss: o.summary.mean_loss,
            final_regret: o.summary.final_regret,
            restarts: o.summary.restarts,
            restart_rounds: o.summary.restart_rounds.clone(),
        })
        .collect();
    let first = &outcomes[0].summary;
    (
        Comparison {
            seed: first.seed,
            horizon: first.horizon,
            data_source: first.data_source.clone(),
            accuracy_protocol: ACCURACY_PROTOCOL.into(),
            methods,
        },
        outcomes,
    )
}
