//! Acceptance suite: each criterion runs a self-contained experiment and
//! reports pass/fail together with the measured quantities.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{sample_round, DataSource, DriftSchedule, RoundDataset, SizeLaw};
use crate::error::{Error, Result};
use crate::experiment::{execute, load_config, ComparatorMode, ConfigOverrides, RunConfig};
use crate::fed::{minibatch_gradient, FedRunner, OptimisticTracker, Optimizer, TrackerParams};
use crate::loss::{self, BregmanDivergence, Datapoint, LossKind, LossModel, Regularizer, SparseVec};
use crate::master::{RateSchedule, RunMode};
use crate::multiscale::{pick_active, schedule_block};
use crate::regret::sublinearity_fit;
use crate::rng::{stream_rng, Stream};

/// Environment variable naming a LIBSVM file for the dataset-dependent
/// criterion.
pub const LIBSVM_ENV: &str = "MASTERFL_LIBSVM";

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub skipped: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.skipped, self.passed) {
            (true, _) => "SKIP",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(
            f,
            "criterion {:>2} [{status}] {} ({:.1} s, limit {} s): {}",
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs(),
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptOptions {
    /// LIBSVM file for criterion 11; falls back to [`LIBSVM_ENV`].
    pub libsvm: Option<PathBuf>,
}

type Check = fn(&AcceptOptions) -> Result<(bool, String)>;

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub limit: Duration,
    check: Check,
}

impl Criterion {
    pub fn run(&self, opts: &AcceptOptions) -> CriterionReport {
        let start = Instant::now();
        let outcome = (self.check)(opts);
        let elapsed = start.elapsed();
        let (passed, skipped, detail) = match outcome {
            Ok((_, detail)) if detail.starts_with(SKIPPED) => (true, true, detail),
            Ok((ok, detail)) if elapsed <= self.limit => (ok, false, detail),
            Ok((_, detail)) => (false, false, format!("{detail}; exceeded the time limit")),
            Err(e) => (false, false, format!("error: {e}")),
        };
        CriterionReport {
            id: self.id,
            name: self.name,
            passed,
            skipped,
            detail,
            elapsed,
            limit: self.limit,
        }
    }
}

const SKIPPED: &str = "skipped";

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, name: "gradient correctness", limit: secs(5), check: gradient_check },
    Criterion { id: 2, name: "FedOMD equals FedAvg under Euclidean geometry", limit: secs(5), check: omd_equivalence },
    Criterion { id: 3, name: "scheduler distribution", limit: secs(10), check: scheduler_distribution },
    Criterion { id: 4, name: "minibatch unbiasedness", limit: secs(10), check: minibatch_unbiased },
    Criterion { id: 5, name: "optimistic lower bound", limit: secs(30), check: optimistic_lower_bound },
    Criterion { id: 6, name: "no false restarts", limit: secs(60), check: no_false_restarts },
    Criterion { id: 7, name: "detection and adaptation", limit: secs(120), check: detection_and_adaptation },
    Criterion { id: 8, name: "epoch bound", limit: secs(120), check: epoch_bound },
    Criterion { id: 9, name: "sublinear dynamic regret", limit: secs(600), check: sublinear_regret },
    Criterion { id: 10, name: "instance-count bound", limit: secs(10), check: instance_count_bound },
    Criterion { id: 11, name: "LIBSVM protocol replay", limit: secs(900), check: protocol_replay },
];

pub fn criterion(id: u32) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

pub fn run_all(opts: &AcceptOptions) -> Vec<CriterionReport> {
    CRITERIA.iter().map(|c| c.run(opts)).collect()
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn preset_config(name: &str, seed: u64) -> Result<RunConfig> {
    load_config(
        Some(name),
        None,
        &ConfigOverrides {
            seed: Some(seed),
            data_path: None,
        },
    )
}

fn gradient_check(_: &AcceptOptions) -> Result<(bool, String)> {
    const PAIRS: usize = 200;
    const STEP: f64 = 1e-6;
    let models = [
        LossModel::new(LossKind::BinaryLogistic, 6).with_lambda(0.01),
        LossModel::new(LossKind::Softmax { classes: vec![0, 1, 2, 3] }, 5).with_lambda(0.01),
        LossModel::new(LossKind::Quadratic, 4).with_lambda(0.05),
        LossModel::new(LossKind::BinaryLogistic, 6)
            .with_lambda(0.02)
            .with_regularizer(Regularizer::L1),
    ];
    let mut rng = stream_rng(1, Stream::Generator, &[101]);
    let mut worst: f64 = 0.0;
    for i in 0..PAIRS {
        let lm = &models[i % models.len()];
        let mut features = gaussian_vec(&mut rng, lm.features);
        for v in features.iter_mut() {
            if rng.random::<f64>() < 0.3 {
                *v = 0.0;
            }
        }
        let label = match &lm.kind {
            LossKind::BinaryLogistic => {
                if rng.random::<bool>() {
                    1
                } else {
                    -1
                }
            }
            LossKind::Softmax { classes } => classes[rng.random_range(0..classes.len())],
            LossKind::Quadratic => 0,
        };
        let point = [Datapoint::new(SparseVec::from_dense(&features), label)];
        // keep L1 coordinates away from the kink
        let model: Vec<f64> = gaussian_vec(&mut rng, lm.dimension())
            .into_iter()
            .map(|v| if v.abs() < 0.05 { 0.05f64.copysign(v) } else { v })
            .collect();
        let analytic = loss::gradient(&model, &point[0], lm)?;
        let mut numeric = vec![0.0; model.len()];
        for j in 0..model.len() {
            let mut up = model.clone();
            let mut down = model.clone();
            up[j] += STEP;
            down[j] -= STEP;
            numeric[j] =
                (loss::mean_smooth_loss(&up, &point, lm)? - loss::mean_smooth_loss(&down, &point, lm)?) / (2.0 * STEP);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = loss::norm(&diff) / loss::norm(&analytic).max(loss::norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
    }
    Ok((worst < 1e-5, format!("{PAIRS} pairs, worst relative error {worst:.3e} (< 1e-5)")))
}

fn omd_equivalence(_: &AcceptOptions) -> Result<(bool, String)> {
    const ROUNDS: usize = 100;
    let source = DataSource::random_logistic(2, 4, 2.0, 1.0, 11)?;
    let law = SizeLaw::Fixed { size: 40 };
    let schedule = DriftSchedule::default();
    let lm = LossModel::new(LossKind::BinaryLogistic, 4).with_lambda(0.01);
    let avg = FedRunner::new(lm.clone(), Optimizer::FedAvg, 3, 5);
    let omd = FedRunner::new(lm, Optimizer::FedOmd(BregmanDivergence::SquaredEuclidean), 3, 5);
    let params = TrackerParams::new(1.0, ROUNDS, 0.1);
    let (mut ta, mut to) = (OptimisticTracker::new(params, Some(4)), OptimisticTracker::new(params, Some(4)));
    let (mut xa, mut xo) = (vec![0.0; 4], vec![0.0; 4]);
    let eta = 1.0 / (ROUNDS as f64).sqrt();
    let mut worst: f64 = 0.0;
    for t in 1..=ROUNDS {
        let data = Arc::new(sample_round(&source, &schedule, t, 3, &law)?);
        xa = avg.round(&xa, eta, &data, &mut ta)?.model;
        xo = omd.round(&xo, eta, &data, &mut to)?.model;
        worst = xa.iter().zip(&xo).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-10, format!("{ROUNDS} rounds, max coordinate gap {worst:.3e} (<= 1e-10)")))
}

fn scheduler_distribution(_: &AcceptOptions) -> Result<(bool, String)> {
    const ORDER: u32 = 4;
    const SCHEDULES: u64 = 10_000;
    let rho = |t: f64| 1.0 / t.sqrt();
    let mut counts = [0u64; ORDER as usize + 1];
    let mut covered = 0;
    for i in 0..SCHEDULES {
        let mut rng = stream_rng(3, Stream::Schedule, &[i]);
        let pool = schedule_block(1, ORDER, &rho, &mut rng);
        for inst in &pool.instances {
            counts[inst.order as usize] += 1;
        }
        if (1..=pool.block_end()).all(|t| pick_active(&pool, t).is_some()) {
            covered += 1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut freqs = Vec::new();
    for k in 0..=ORDER {
        let slots = SCHEDULES * (1u64 << (ORDER - k));
        let freq = counts[k as usize] as f64 / slots as f64;
        let expected = rho(16.0) / rho((1u64 << k) as f64);
        worst = worst.max((freq - expected).abs() / expected);
        freqs.push(format!("k={k}: {freq:.4} vs {expected:.4}"));
    }
    let ok = worst <= 0.1 && covered == SCHEDULES;
    Ok((
        ok,
        format!(
            "{}; worst relative deviation {worst:.4} (<= 0.1); coverage {covered}/{SCHEDULES}",
            freqs.join(", ")
        ),
    ))
}

fn minibatch_unbiased(_: &AcceptOptions) -> Result<(bool, String)> {
    const DRAWS: u64 = 10_000;
    let source = DataSource::random_logistic(3, 6, 1.5, 1.0, 21)?;
    let data = sample_round(&source, &DriftSchedule::default(), 1, 1, &SizeLaw::Fixed { size: 2000 })?;
    let points = &data.dpus[0];
    let lm = LossModel::new(LossKind::Softmax { classes: vec![0, 1, 2] }, 6).with_lambda(0.01);
    let mut rng = stream_rng(21, Stream::Generator, &[4]);
    let model = gaussian_vec(&mut rng, lm.dimension());
    let full = loss::mean_gradient(&model, points, &lm)?;
    let mut mean = vec![0.0; full.len()];
    for i in 0..DRAWS {
        let mut r = stream_rng(21, Stream::Minibatch, &[i]);
        let g = minibatch_gradient(points, &model, 0.1, &lm, &mut r)?;
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / DRAWS as f64;
        }
    }
    let diff: Vec<f64> = mean.iter().zip(&full).map(|(a, b)| a - b).collect();
    let rel = loss::norm(&diff) / loss::norm(&full);
    let whole = minibatch_gradient(points, &model, 1.0, &lm, &mut rng)?;
    let identical = whole.iter().zip(&full).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((
        rel <= 1e-2 && identical,
        format!("relative error of the mean {rel:.3e} (<= 1e-2); gamma = 1 bit-identical: {identical}"),
    ))
}

/// `min_x (1/t) Σ_{τ≤t} F^(τ)(x)` for the quadratic task, in closed form:
/// the minimizer is the average of per-round point means.
fn quadratic_average_minimum(rounds: &[Arc<RoundDataset>], lm: &LossModel) -> Vec<f64> {
    let d = lm.features;
    let mut out = Vec::with_capacity(rounds.len());
    let mut mean_sum = vec![0.0; d];
    for (i, r) in rounds.iter().enumerate() {
        let pts: Vec<Vec<f64>> = r.points().map(|p| p.features.to_dense(d)).collect();
        for p in &pts {
            for (m, v) in mean_sum.iter_mut().zip(p) {
                *m += v / pts.len() as f64;
            }
        }
        let t = (i + 1) as f64;
        let x: Vec<f64> = mean_sum.iter().map(|m| m / t / (1.0 + lm.lambda)).collect();
        let mut total = 0.0;
        for past in &rounds[..=i] {
            let mut s = 0.0;
            let mut n = 0.0;
            for p in past.points() {
                let dense = p.features.to_dense(d);
                let dist: f64 = x.iter().zip(&dense).map(|(a, b)| (a - b).powi(2)).sum();
                s += 0.5 * dist;
                n += 1.0;
            }
            let reg = 0.5 * lm.lambda * x.iter().map(|v| v * v).sum::<f64>();
            total += (s / n + reg) / lm.scale;
        }
        out.push(total / t);
    }
    out
}

fn optimistic_lower_bound(_: &AcceptOptions) -> Result<(bool, String)> {
    const SEEDS: u64 = 50;
    const DELTA: f64 = 0.1;
    let mut holding = 0;
    let mut clipped = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for seed in 1..=SEEDS {
        let mut config = preset_config("stationary-quadratic", seed)?;
        config.mode = RunMode::SingleInstanceBaseline;
        config.horizon = 100;
        config.rates.delta = DELTA;
        config.output.comparator = ComparatorMode::Off;
        let out = execute(&config)?;
        clipped += out.summary.clip_events;
        let lm = config.loss_model(&config.data.build(seed)?)?;
        let minima = quadratic_average_minimum(&out.datasets, &lm);
        let gap = out
            .run
            .rounds
            .iter()
            .zip(&minima)
            .map(|(r, m)| r.optimistic - m)
            .fold(f64::NEG_INFINITY, f64::max);
        worst_gap = worst_gap.max(gap);
        if gap <= 0.0 {
            holding += 1;
        }
    }
    let needed = ((1.0 - DELTA) * SEEDS as f64).ceil() as u64;
    Ok((
        holding >= needed && clipped == 0,
        format!(
            "bound held at every round in {holding}/{SEEDS} seeds (need {needed}); \
             largest F_tilde - min excess {worst_gap:.4e}; clipped losses {clipped}"
        ),
    ))
}

fn no_false_restarts(_: &AcceptOptions) -> Result<(bool, String)> {
    const SEEDS: u64 = 20;
    let mut clean = 0;
    for seed in 1..=SEEDS {
        let mut config = preset_config("stationary-quadratic", seed)?;
        config.horizon = 256;
        config.rates.test_scale = 1.0;
        config.output.comparator = ComparatorMode::Off;
        if execute(&config)?.run.restarts() == 0 {
            clean += 1;
        }
    }
    Ok((
        clean * 100 >= 95 * SEEDS,
        format!("zero restarts in {clean}/{SEEDS} seeds (need >= 95%)"),
    ))
}

pub const SHIFT_ROUND: usize = 100;

fn detection_and_adaptation(_: &AcceptOptions) -> Result<(bool, String)> {
    const SEEDS: u64 = 20;
    let mut good = 0;
    let mut detected = 0;
    let mut margins = Vec::new();
    let mut scale = 0.0;
    for seed in 1..=SEEDS {
        let mut master = preset_config("shift-quadratic", seed)?;
        master.output.comparator = ComparatorMode::Off;
        scale = master.rates.test_scale;
        let mut baseline = master.clone();
        baseline.mode = RunMode::SingleInstanceBaseline;
        let m = execute(&master)?;
        let b = execute(&baseline)?;
        let horizon = master.horizon;
        let restarted = m.run.restart_rounds().iter().any(|&r| r >= SHIFT_ROUND && r < horizon);
        let margin = b.mean_loss_over(SHIFT_ROUND, horizon) - m.mean_loss_over(SHIFT_ROUND, horizon);
        detected += usize::from(restarted);
        margins.push(margin);
        if restarted && margin >= 0.05 {
            good += 1;
        }
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        good * 10 >= 9 * SEEDS as usize,
        format!(
            "{good}/{SEEDS} seeds detected and adapted (need >= 90%); post-shift restart in {detected}; \
             smallest loss margin {min_margin:.4}; test_scale {scale}"
        ),
    ))
}

/// Piecewise-stationary quadratic task with jumps at `round(T·j/5)`.
pub fn piecewise_config(horizon: usize, seed: u64) -> Result<RunConfig> {
    let mut config = preset_config("piecewise-quadratic", seed)?;
    if config.drift.events.len() != 4 {
        return Err(Error::Config("piecewise preset must list four events".into()));
    }
    config.horizon = horizon;
    for (j, e) in config.drift.events.iter_mut().enumerate() {
        e.round = ((horizon * (j + 1)) as f64 / 5.0).round() as usize;
    }
    Ok(config)
}

fn epoch_bound(_: &AcceptOptions) -> Result<(bool, String)> {
    const SEEDS: u64 = 20;
    const HORIZON: usize = 512;
    let mut within = 0;
    let mut counts = Vec::new();
    let mut tuned_counts = Vec::new();
    let mut tuned_scale = 0.0;
    for seed in 1..=SEEDS {
        let mut config = piecewise_config(HORIZON, seed)?;
        config.output.comparator = ComparatorMode::Off;
        let mut tuned = config.clone();
        tuned_scale = tuned.rates.test_scale;
        config.rates.test_scale = 1.0;
        let epochs = execute(&config)?.run.epochs.len();
        counts.push(epochs);
        if epochs <= 4 {
            within += 1;
        }
        tuned.output.comparator = ComparatorMode::Off;
        tuned_counts.push(execute(&tuned)?.run.epochs.len());
    }
    Ok((
        within * 10 >= 9 * SEEDS,
        format!(
            "default thresholds: M <= L = 4 in {within}/{SEEDS} seeds (need >= 90%), epoch counts {counts:?}; \
             at test_scale {tuned_scale} (not graded): {tuned_counts:?}"
        ),
    ))
}

pub const REGRET_HORIZONS: [usize; 4] = [256, 512, 1024, 2048];

fn sublinear_regret(_: &AcceptOptions) -> Result<(bool, String)> {
    const SEEDS: u64 = 5;
    let mut points = Vec::new();
    for &t in &REGRET_HORIZONS {
        let mut total = 0.0;
        for seed in 1..=SEEDS {
            let out = execute(&piecewise_config(t, seed)?)?;
            total += out.summary.final_regret.ok_or_else(|| Error::Config("regret was not computed".into()))?;
        }
        points.push((t, total / SEEDS as f64));
    }
    let fit = sublinearity_fit(&points)?;
    let band = if (0.5..=0.67).contains(&fit.slope) { "inside" } else { "outside" };
    let listed: Vec<String> = points.iter().map(|(t, r)| format!("T={t}: {r:.3}")).collect();
    Ok((
        fit.slope < 0.9,
        format!(
            "mean cumulative regret {}; slope {:.4} (< 0.9, {band} the 0.5-0.67 band)",
            listed.join(", "),
            fit.slope
        ),
    ))
}

fn instance_count_bound(_: &AcceptOptions) -> Result<(bool, String)> {
    const BLOCKS: u64 = 100;
    const ORDER: u32 = 6;
    let (horizon, delta, c1, c2) = (1024.0f64, 0.1f64, 1.0f64, 1.0f64);
    let rates = RateSchedule::new(c1, c2, horizon as usize, delta)?;
    let cum = |t: f64| (c1 * t.sqrt() + c2).min(t);
    let bound = 6.0 * (horizon.log2() + 1.0) * (horizon / delta).ln() * cum(64.0) / cum(1.0);
    let rho = move |t: f64| rates.rho(t);
    let mut worst = 0;
    let mut within = 0;
    for i in 0..BLOCKS {
        let mut rng = stream_rng(10, Stream::Schedule, &[i]);
        let n = schedule_block(1, ORDER, &rho, &mut rng).len();
        worst = worst.max(n);
        if (n as f64) <= bound {
            within += 1;
        }
    }
    Ok((
        within == BLOCKS,
        format!("{within}/{BLOCKS} blocks within the bound {bound:.1}; largest count {worst}"),
    ))
}

fn protocol_replay(opts: &AcceptOptions) -> Result<(bool, String)> {
    let path = opts
        .libsvm
        .clone()
        .or_else(|| std::env::var_os(LIBSVM_ENV).map(PathBuf::from));
    let Some(path) = path else {
        return Ok((true, format!("{SKIPPED}: no LIBSVM file given (set {LIBSVM_ENV} or pass --data)")));
    };
    let overrides = ConfigOverrides {
        seed: None,
        data_path: Some(path),
    };
    let master = load_config(Some("paper-vi"), None, &overrides)?;
    let mut baseline = master.clone();
    baseline.mode = RunMode::SingleInstanceBaseline;
    let m = execute(&master)?;
    let b = execute(&baseline)?;
    let (Some(am), Some(ab)) = (m.summary.mean_accuracy, b.summary.mean_accuracy) else {
        return Err(Error::Config("classification accuracy unavailable".into()));
    };
    let lead = 100.0 * (am - ab);
    Ok((
        lead >= 5.0,
        format!(
            "mean prequential accuracy master {:.2}% vs baseline {:.2}% (lead {lead:.2} points, need >= 5); restarts {:?}",
            100.0 * am,
            100.0 * ab,
            m.summary.restart_rounds
        ),
    ))
}
