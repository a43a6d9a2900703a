//! One federated round: local FedAvg / FedOMD updates at the DPUs, weighted
//! aggregation at the server, global loss evaluation and the optimistic
//! loss estimate.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RoundDataset;
use crate::error::{check_dim, Error, Result};
use crate::loss::{self, BregmanDivergence, Datapoint, LossModel};
use crate::rng::{stream_rng, Stream};

/// Base optimizer run by every instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Optimizer {
    #[default]
    FedAvg,
    FedOmd(BregmanDivergence),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    FullBatch,
    Minibatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpuConfig {
    pub id: usize,
    /// Mini-batch fraction γ_n; always 1 in full-batch mode.
    pub gamma: f64,
    pub mode: GradientMode,
}

impl DpuConfig {
    pub fn full_batch(id: usize) -> Self {
        Self {
            id,
            gamma: 1.0,
            mode: GradientMode::FullBatch,
        }
    }

    pub fn minibatch(id: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("mini-batch fraction must lie in (0, 1], got {gamma}")));
        }
        Ok(Self {
            id,
            gamma,
            mode: GradientMode::Minibatch,
        })
    }
}

/// `x − η·g`
pub fn local_update_fedavg(x_prev: &[f64], grad: &[f64], eta: f64) -> Vec<f64> {
    x_prev.iter().zip(grad).map(|(x, g)| x - eta * g).collect()
}

/// `argmin_x ⟨g, x⟩ + (1/η) B_φ(x; x_prev)`, in closed form for the
/// supported (separable quadratic) mirror maps.
pub fn local_update_fedomd(
    x_prev: &[f64],
    grad: &[f64],
    eta: f64,
    bd: &BregmanDivergence,
) -> Result<Vec<f64>> {
    check_dim(x_prev.len(), grad.len())?;
    let next = match bd {
        BregmanDivergence::SquaredEuclidean => local_update_fedavg(x_prev, grad, eta),
        BregmanDivergence::DiagonalMahalanobis { weights } => {
            check_dim(x_prev.len(), weights.len())?;
            x_prev
                .iter()
                .zip(grad)
                .zip(weights)
                .map(|((x, g), w)| x - eta * g / w)
                .collect()
        }
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("mirror-descent step produced a non-finite model".into()));
    }
    Ok(next)
}

/// `Σ_n p_n x_n`, accumulated in DPU order.
pub fn aggregate(models: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if models.is_empty() || models.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} models but {} weights",
            models.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config(format!("aggregation weights must be >= 0 and sum to 1, got {sum}")));
    }
    let dim = models[0].len();
    let mut out = vec![0.0; dim];
    for (m, &p) in models.iter().zip(weights) {
        check_dim(dim, m.len())?;
        for (o, v) in out.iter_mut().zip(m) {
            *o += p * v;
        }
    }
    Ok(out)
}

/// Mean gradient over a without-replacement subsample of `⌈γ·D_n⌉` points.
/// `γ = 1` is exactly the full-batch gradient.
pub fn minibatch_gradient<R: Rng>(
    points: &[Datapoint],
    model: &[f64],
    gamma: f64,
    lm: &LossModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Config("DPU has no local data".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("mini-batch fraction must lie in (0, 1], got {gamma}")));
    }
    if gamma == 1.0 {
        return loss::mean_gradient(model, points, lm);
    }
    let batch = ((gamma * points.len() as f64).ceil() as usize).clamp(1, points.len());
    let picked: Vec<Datapoint> = rand::seq::index::sample(rng, points.len(), batch)
        .iter()
        .map(|i| points[i].clone())
        .collect();
    loss::mean_gradient(model, &picked, lm)
}

/// Global loss `F(x) = Σ_n p_n F_n(x)` together with the per-DPU terms.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLoss {
    pub value: f64,
    pub per_dpu: Vec<f64>,
    pub clip_events: usize,
}

pub fn global_loss(model: &[f64], data: &RoundDataset, lm: &LossModel) -> Result<GlobalLoss> {
    let mut value = 0.0;
    let mut per_dpu = Vec::with_capacity(data.dpus.len());
    let mut clip_events = 0;
    for (pts, &p) in data.dpus.iter().zip(&data.weights) {
        let m = loss::mean_loss(model, pts, lm)?;
        value += p * m.value;
        clip_events += m.clip_events;
        per_dpu.push(m.value);
    }
    Ok(GlobalLoss {
        value,
        per_dpu,
        clip_events,
    })
}

/// Fraction of the round's points the model labels correctly; `None` for
/// tasks without labels.
pub fn accuracy(model: &[f64], data: &RoundDataset, lm: &LossModel) -> Option<f64> {
    let mut correct = 0usize;
    for p in data.points() {
        if lm.predict(model, p)? == p.label {
            correct += 1;
        }
    }
    Some(correct as f64 / data.total as f64)
}

/// Constants shared by every optimistic tracker in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Concentration constant c̃.
    pub c_tilde: f64,
    pub horizon: usize,
    pub delta: f64,
}

impl TrackerParams {
    pub fn new(c_tilde: f64, horizon: usize, delta: f64) -> Self {
        Self {
            c_tilde,
            horizon,
            delta,
        }
    }

    /// `ln(T/δ)`
    pub fn log_term(&self) -> f64 {
        (self.horizon as f64 / self.delta).ln()
    }
}

/// Per-instance record of the rounds an instance trained on, used to
/// re-evaluate its current model on everything it has seen.
#[derive(Debug, Clone)]
pub struct OptimisticTracker {
    rounds: VecDeque<Arc<RoundDataset>>,
    window: Option<usize>,
    cumulative_samples: usize,
    c_tilde: f64,
    log_term: f64,
    degraded: bool,
}

/// Breakdown of one optimistic estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub mean_loss: f64,
    pub concentration: f64,
    pub degraded: bool,
}

impl OptimisticTracker {
    pub fn new(params: TrackerParams, window: Option<usize>) -> Self {
        Self {
            rounds: VecDeque::new(),
            window: window.map(|w| w.max(1)),
            cumulative_samples: 0,
            c_tilde: params.c_tilde,
            log_term: params.log_term(),
            degraded: false,
        }
    }

    pub fn record(&mut self, round: Arc<RoundDataset>) {
        self.cumulative_samples += round.total;
        self.rounds.push_back(round);
        if let Some(w) = self.window {
            while self.rounds.len() > w {
                self.rounds.pop_front();
                self.degraded = true;
            }
        }
    }

    /// D̄: datapoints seen over every round this instance trained on.
    pub fn cumulative_samples(&self) -> usize {
        self.cumulative_samples
    }

    pub fn retained(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    pub fn estimate(&self, model: &[f64], lm: &LossModel) -> Result<Estimate> {
        if self.rounds.is_empty() {
            return Err(Error::Argument("optimistic estimate needs at least one completed round".into()));
        }
        let losses: Vec<f64> = self
            .rounds
            .par_iter()
            .map(|r| global_loss(model, r, lm).map(|g| g.value))
            .collect::<Result<_>>()?;
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let concentration = self.c_tilde * (self.log_term / self.cumulative_samples as f64).sqrt();
        Ok(Estimate {
            value: mean_loss - concentration,
            mean_loss,
            concentration,
            degraded: self.degraded,
        })
    }
}

/// `F̃ = (1/t) Σ_τ F^(τ)(x) − c̃ √(ln(T/δ) / D̄)` over the tracker's rounds.
pub fn optimistic_estimate(tracker: &OptimisticTracker, model: &[f64], lm: &LossModel) -> Result<f64> {
    tracker.estimate(model, lm).map(|e| e.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedRoundOutput {
    /// Aggregated model x^(t).
    pub model: Vec<f64>,
    /// F^(t)(x^(t))
    pub global_loss: f64,
    /// F_n^(t)(x^(t))
    pub dpu_losses: Vec<f64>,
    /// F̃^(t)
    pub optimistic: f64,
    pub degraded_estimate: bool,
    /// Prequential accuracy of the pre-update model on this round's data.
    pub accuracy: Option<f64>,
    pub clip_events: usize,
    pub lipschitz_violations: usize,
    pub max_grad_norm: f64,
}

/// Executes rounds for whichever instance is active.
#[derive(Debug, Clone)]
pub struct FedRunner {
    pub loss: LossModel,
    pub optimizer: Optimizer,
    pub dpus: Vec<DpuConfig>,
    pub seed: u64,
}

impl FedRunner {
    pub fn new(loss: LossModel, optimizer: Optimizer, n_dpus: usize, seed: u64) -> Self {
        Self {
            loss,
            optimizer,
            dpus: (0..n_dpus).map(DpuConfig::full_batch).collect(),
            seed,
        }
    }

    pub fn with_dpus(mut self, dpus: Vec<DpuConfig>) -> Self {
        self.dpus = dpus;
        self
    }

    fn local_gradient(&self, dpu: &DpuConfig, points: &[Datapoint], model: &[f64], round: usize) -> Result<Vec<f64>> {
        match dpu.mode {
            GradientMode::FullBatch => loss::mean_gradient(model, points, &self.loss),
            GradientMode::Minibatch => {
                let mut rng = stream_rng(self.seed, Stream::Minibatch, &[round as u64, dpu.id as u64]);
                minibatch_gradient(points, model, dpu.gamma, &self.loss, &mut rng)
            }
        }
    }

    fn local_step(&self, x_prev: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
        match &self.optimizer {
            Optimizer::FedAvg => Ok(local_update_fedavg(x_prev, grad, eta)),
            Optimizer::FedOmd(bd) => local_update_fedomd(x_prev, grad, eta, bd),
        }
    }

    /// Local updates (in parallel), aggregation (in DPU order), loss on the
    /// new model and the tracker's optimistic estimate.
    pub fn round(
        &self,
        x_prev: &[f64],
        eta: f64,
        data: &Arc<RoundDataset>,
        tracker: &mut OptimisticTracker,
    ) -> Result<FedRoundOutput> {
        if !(eta > 0.0) {
            return Err(Error::Argument(format!("learning rate must be > 0, got {eta}")));
        }
        if data.dpus.len() != self.dpus.len() {
            return Err(Error::Config(format!(
                "round has data for {} DPUs but {} are configured",
                data.dpus.len(),
                self.dpus.len()
            )));
        }
        check_dim(self.loss.dimension(), x_prev.len())?;
        let accuracy = accuracy(x_prev, data, &self.loss);

        let locals: Vec<(Vec<f64>, f64)> = self
            .dpus
            .par_iter()
            .zip(data.dpus.par_iter())
            .map(|(dpu, pts)| {
                let g = self.local_gradient(dpu, pts, x_prev, data.round)?;
                let gnorm = loss::norm(&g);
                Ok((self.local_step(x_prev, &g, eta)?, gnorm))
            })
            .collect::<Result<_>>()?;

        let lipschitz_violations = locals.iter().filter(|(_, n)| *n > self.loss.mu).count();
        let max_grad_norm = locals.iter().map(|(_, n)| *n).fold(0.0, f64::max);
        let models: Vec<Vec<f64>> = locals.into_iter().map(|(m, _)| m).collect();
        let model = aggregate(&models, &data.weights)?;
        let g = global_loss(&model, data, &self.loss)?;

        tracker.record(Arc::clone(data));
        let est = tracker.estimate(&model, &self.loss)?;

        Ok(FedRoundOutput {
            model,
            global_loss: g.value,
            dpu_losses: g.per_dpu,
            optimistic: est.value,
            degraded_estimate: est.degraded,
            accuracy,
            clip_events: g.clip_events,
            lipschitz_violations,
            max_grad_norm,
        })
    }
}
