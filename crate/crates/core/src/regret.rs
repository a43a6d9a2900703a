//! Ground-truth instrumentation: per-round comparators, dynamic regret,
//! probe-based drift estimates and power-law fits of regret growth.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DriftSchedule, RoundDataset};
use crate::error::{Error, Result};
use crate::fed::global_loss;
use crate::loss::{self, Datapoint, LossKind, LossModel, Regularizer};
use crate::master::EpochRecord;
use crate::rng::{stream_rng, Stream};

/// Slack allowed on regret identities that involve the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

pub const PROBE_MODELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the (proximal) gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub model: Vec<f64>,
    /// Objective value at `model` with the same clipping as the played loss.
    pub loss: f64,
    /// Unclipped objective the solver minimized.
    pub smooth_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A weighted sum of per-round mean losses: `Σ_g w_g · F_g(x)`.
struct Objective<'a> {
    groups: Vec<(Vec<Datapoint>, f64)>,
    lm: &'a LossModel,
    /// Smooth part: the full model for L2, the data term only for L1.
    smooth: LossModel,
    /// Weight on `‖x‖₁` for L1, else 0.
    l1: f64,
}

impl<'a> Objective<'a> {
    fn new(groups: Vec<(Vec<Datapoint>, f64)>, lm: &'a LossModel) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|(g, _)| g.is_empty()) {
            return Err(Error::Config("comparator needs non-empty rounds".into()));
        }
        let weight: f64 = groups.iter().map(|(_, w)| w).sum();
        let (smooth, l1) = match lm.regularizer {
            Regularizer::L2Squared => (lm.clone(), 0.0),
            Regularizer::L1 => (lm.clone().with_lambda(0.0), weight * lm.lambda / lm.scale),
        };
        Ok(Self { groups, lm, smooth, l1 })
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (g, w) in &self.groups {
            v += w * loss::mean_smooth_loss(x, g, &self.smooth)?;
        }
        Ok(v)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        for (g, w) in &self.groups {
            for (o, gi) in out.iter_mut().zip(loss::mean_gradient(x, g, &self.smooth)?) {
                *o += w * gi;
            }
        }
        Ok(out)
    }

    fn prox(&self, y: &mut [f64], step: f64) {
        let thr = step * self.l1;
        if thr > 0.0 {
            for v in y.iter_mut() {
                *v = v.signum() * (v.abs() - thr).max(0.0);
            }
        }
    }

    fn full_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x)? + self.l1 * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn clipped_value(&self, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (g, w) in &self.groups {
            v += w * loss::mean_loss(x, g, self.lm)?.value;
        }
        Ok(v)
    }

    /// Closed-form minimizer for the quadratic task.
    fn quadratic_minimizer(&self) -> Vec<f64> {
        let d = self.lm.dimension();
        let weight: f64 = self.groups.iter().map(|(_, w)| w).sum();
        let mut mean = vec![0.0; d];
        for (g, w) in &self.groups {
            let c = w / (weight * g.len() as f64);
            for p in g {
                for (i, v) in p.features.iter() {
                    mean[i] += c * v;
                }
            }
        }
        match self.lm.regularizer {
            Regularizer::L2Squared => mean.iter().map(|m| m / (1.0 + self.lm.lambda)).collect(),
            Regularizer::L1 => mean
                .iter()
                .map(|m| m.signum() * (m.abs() - self.lm.lambda).max(0.0))
                .collect(),
        }
    }

    fn solve(&self, start: Option<&[f64]>, opts: SolverOptions) -> Result<Comparator> {
        if self.lm.kind == LossKind::Quadratic {
            let model = self.quadratic_minimizer();
            return self.finish(model, 0, true);
        }
        let mut x = match start {
            Some(s) => {
                crate::error::check_dim(self.lm.dimension(), s.len())?;
                s.to_vec()
            }
            None => vec![0.0; self.lm.dimension()],
        };
        let mut fx = self.value(&x)?;
        let mut step = 1.0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iterations {
            let g = self.gradient(&x)?;
            let mut accepted = None;
            while step > 1e-30 {
                let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                self.prox(&mut y, step);
                let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let mapping = loss::norm(&diff) / step;
                if mapping <= opts.tolerance {
                    converged = true;
                    break;
                }
                let fy = self.value(&y)?;
                let lin: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
                let quad = diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
                if fy <= fx + lin + quad + 1e-15 * fx.abs() {
                    accepted = Some((y, fy));
                    break;
                }
                step *= 0.5;
            }
            if converged {
                break;
            }
            let Some((y, fy)) = accepted else {
                break;
            };
            x = y;
            fx = fy;
            step *= 2.0;
            iterations += 1;
        }
        if !converged {
            log::warn!("comparator did not converge after {iterations} iterations");
        }
        self.finish(x, iterations, converged)
    }

    fn finish(&self, model: Vec<f64>, iterations: usize, converged: bool) -> Result<Comparator> {
        Ok(Comparator {
            loss: self.clipped_value(&model)?,
            smooth_loss: self.full_value(&model)?,
            model,
            iterations,
            converged,
        })
    }
}

/// `x^(t),* = argmin_x F^(t)(x)` on the pooled round data, started from
/// `start` (zero if absent).
pub fn comparator(
    data: &RoundDataset,
    lm: &LossModel,
    start: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<Comparator> {
    let points: Vec<Datapoint> = data.points().cloned().collect();
    Objective::new(vec![(points, 1.0)], lm)?.solve(start, opts)
}

/// Single model minimizing `Σ_t F^(t)(x)`; `loss` is that sum.
pub fn static_comparator(
    rounds: &[Arc<RoundDataset>],
    lm: &LossModel,
    start: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<Comparator> {
    let groups = rounds.iter().map(|r| (r.points().cloned().collect(), 1.0)).collect();
    Objective::new(groups, lm)?.solve(start, opts)
}

/// Fixed random probe models shared by every round of a run.
pub fn random_probes(seed: u64, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::Probe, &[]);
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Lower bound on `sup_x |F^(t)(x) − F^(t−1)(x)|` taken over `probes`.
pub fn estimate_drift(
    current: &RoundDataset,
    previous: &RoundDataset,
    probes: &[&[f64]],
    lm: &LossModel,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for x in probes {
        let diff = global_loss(x, current, lm)?.value - global_loss(x, previous, lm)?.value;
        best = best.max(diff.abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub t: usize,
    /// F^(t)(x^(t))
    pub loss: f64,
    /// F^(t)(x^(t),*)
    pub comparator_loss: f64,
    pub instantaneous: f64,
    pub cumulative: f64,
    /// Probe lower bound on Δ_t; absent for the first round.
    pub delta_hat: Option<f64>,
    pub comparator_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub rows: Vec<RegretRow>,
    /// L counted from the drift schedule.
    pub drift_count: usize,
    pub comparators: Vec<Vec<f64>>,
    pub static_comparator: Option<Comparator>,
    pub nonconverged: usize,
    /// Rounds whose instantaneous regret is below `−ORACLE_TOLERANCE`.
    pub negative_rounds: usize,
}

impl RegretTrace {
    pub fn total(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative)
    }

    /// `Σ_t F^(t)(x^(t)) − Σ_t F^(t)(x*)` for the static comparator.
    pub fn static_regret(&self) -> Option<f64> {
        let played: f64 = self.rows.iter().map(|r| r.loss).sum();
        self.static_comparator.as_ref().map(|c| played - c.loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub solver: SolverOptions,
    pub probe_seed: u64,
    pub static_comparator: bool,
}

/// Dynamic regret of a played model sequence; `models[i]` and `data[i]`
/// belong to round `i + 1`.
pub fn regret_trace(
    models: &[Vec<f64>],
    data: &[Arc<RoundDataset>],
    lm: &LossModel,
    schedule: &DriftSchedule,
    opts: TraceOptions,
) -> Result<RegretTrace> {
    if models.len() != data.len() {
        return Err(Error::Argument(format!(
            "{} models for {} rounds",
            models.len(),
            data.len()
        )));
    }
    let played: Vec<f64> = models
        .par_iter()
        .zip(data)
        .map(|(x, d)| global_loss(x, d, lm).map(|g| g.value))
        .collect::<Result<_>>()?;
    let comps: Vec<Comparator> = models
        .par_iter()
        .zip(data)
        .map(|(x, d)| comparator(d, lm, Some(x), opts.solver))
        .collect::<Result<_>>()?;
    let random = random_probes(opts.probe_seed, lm.dimension(), PROBE_MODELS);
    let deltas: Vec<Option<f64>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return Ok(None);
            }
            let mut probes: Vec<&[f64]> = vec![&models[i], &models[i - 1], &comps[i].model, &comps[i - 1].model];
            probes.extend(random.iter().map(Vec::as_slice));
            estimate_drift(&data[i], &data[i - 1], &probes, lm).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(data.len());
    let mut cumulative = 0.0;
    let mut negative_rounds = 0;
    for (i, c) in comps.iter().enumerate() {
        let inst = played[i] - c.loss;
        if inst < -ORACLE_TOLERANCE {
            negative_rounds += 1;
        }
        cumulative += inst;
        rows.push(RegretRow {
            t: i + 1,
            loss: played[i],
            comparator_loss: c.loss,
            instantaneous: inst,
            cumulative,
            delta_hat: deltas[i],
            comparator_converged: c.converged,
        });
    }
    if negative_rounds > 0 {
        log::warn!("{negative_rounds} rounds have negative regret beyond the oracle tolerance");
    }
    let static_comparator = if opts.static_comparator && !data.is_empty() {
        Some(static_comparator(data, lm, models.last().map(Vec::as_slice), opts.solver)?)
    } else {
        None
    };
    Ok(RegretTrace {
        rows,
        drift_count: schedule.drift_count(data.len()),
        nonconverged: comps.iter().filter(|c| !c.converged).count(),
        comparators: comps.into_iter().map(|c| c.model).collect(),
        static_comparator,
        negative_rounds,
    })
}

/// Sum of instantaneous regret inside each epoch.
pub fn epoch_regrets(trace: &RegretTrace, epochs: &[EpochRecord]) -> Result<Vec<f64>> {
    epochs
        .iter()
        .map(|e| {
            if e.start < 1 || e.end > trace.rows.len() || e.start > e.end {
                return Err(Error::Argument(format!("epoch [{}, {}] outside the trace", e.start, e.end)));
            }
            Ok(trace.rows[e.start - 1..e.end].iter().map(|r| r.instantaneous).sum())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Horizons dropped for nonpositive regret.
    pub excluded: Vec<usize>,
}

/// Least-squares slope of `log(regret)` against `log(T)`.
pub fn sublinearity_fit(points: &[(usize, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 horizons, got {}",
            points.len()
        )));
    }
    let mut excluded = Vec::new();
    let mut xy = Vec::new();
    for &(t, r) in points {
        if r > 0.0 && t > 0 {
            xy.push(((t as f64).ln(), r.ln()));
        } else {
            log::warn!("excluding horizon {t} with nonpositive regret {r}");
            excluded.push(t);
        }
    }
    if xy.len() < 2 {
        return Err(Error::Argument("fewer than 2 horizons with positive regret".into()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("horizons must not all be equal".into()));
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        used: xy.len(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_round, DataSource, DriftEvent, DriftKind, SizeLaw};
    use crate::loss::SparseVec;

    fn dense_points(rows: &[(&[f64], i64)]) -> Vec<Datapoint> {
        rows.iter()
            .map(|(v, y)| Datapoint::new(SparseVec::from_dense(v), *y))
            .collect()
    }

    #[test]
    fn quadratic_comparator_is_the_mean() {
        let lm = LossModel::new(LossKind::Quadratic, 2).with_lambda(0.0);
        let ds = RoundDataset::new(1, vec![dense_points(&[(&[1.0, 2.0], 0), (&[3.0, -2.0], 0)])]).unwrap();
        let c = comparator(&ds, &lm, None, SolverOptions::default()).unwrap();
        assert_eq!(c.model, vec![2.0, 0.0]);
        // ½(1 + 4) / 10 on each point
        assert!((c.loss - 0.25).abs() < 1e-15);

        let single = RoundDataset::new(1, vec![dense_points(&[(&[0.5, -0.5], 0)])]).unwrap();
        let c = comparator(&single, &lm, None, SolverOptions::default()).unwrap();
        assert_eq!(c.model, vec![0.5, -0.5]);
        assert_eq!(c.loss, 0.0);
    }

    #[test]
    fn quadratic_closed_form_matches_gradient_descent_with_regularizers() {
        let pts = dense_points(&[(&[1.0, -0.1], 0), (&[0.5, 0.05], 0), (&[2.0, 0.0], 0)]);
        let ds = RoundDataset::new(1, vec![pts.clone()]).unwrap();
        for reg in [Regularizer::L2Squared, Regularizer::L1] {
            let lm = LossModel::new(LossKind::Quadratic, 2).with_lambda(0.2).with_regularizer(reg);
            let closed = comparator(&ds, &lm, None, SolverOptions::default()).unwrap();
            let obj = Objective::new(vec![(pts.clone(), 1.0)], &lm).unwrap();
            let mut x = vec![0.0; 2];
            for _ in 0..20_000 {
                let g = obj.gradient(&x).unwrap();
                for (a, b) in x.iter_mut().zip(&g) {
                    *a -= 1.0 * b;
                }
                obj.prox(&mut x, 1.0);
            }
            for (a, b) in closed.model.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9, "{reg:?}: {:?} vs {x:?}", closed.model);
            }
        }
    }

    #[test]
    fn logistic_comparator_matches_grid_search() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 2).with_lambda(0.5).with_scale(1.0);
        let pts = dense_points(&[(&[1.0, 0.5], 1), (&[-0.3, 1.2], -1), (&[0.8, -0.4], 1)]);
        let ds = RoundDataset::new(1, vec![pts.clone()]).unwrap();
        let c = comparator(&ds, &lm, None, SolverOptions::default()).unwrap();
        assert!(c.converged);
        // coarse grid then refinement, step 1e-5 at the finest level
        let f = |x: &[f64]| loss::mean_smooth_loss(x, &pts, &lm).unwrap();
        let (mut cx, mut cy, mut h) = (0.0, 0.0, 0.5);
        for _ in 0..5 {
            let mut best = (f64::INFINITY, cx, cy);
            for i in -50..=50 {
                for j in -50..=50 {
                    let p = [cx + i as f64 * h / 10.0, cy + j as f64 * h / 10.0];
                    let v = f(&p);
                    if v < best.0 {
                        best = (v, p[0], p[1]);
                    }
                }
            }
            cx = best.1;
            cy = best.2;
            h /= 10.0;
        }
        assert!((c.model[0] - cx).abs() < 1e-4 && (c.model[1] - cy).abs() < 1e-4, "{:?} vs ({cx}, {cy})", c.model);
        assert!(c.smooth_loss <= f(&[cx, cy]) + 1e-12);
    }

    #[test]
    fn softmax_comparator_converges_with_regularization() {
        let lm = LossModel::new(LossKind::Softmax { classes: vec![0, 1, 2] }, 2).with_lambda(0.1);
        let pts = dense_points(&[(&[1.0, 0.0], 0), (&[0.0, 1.0], 1), (&[-1.0, -1.0], 2), (&[0.9, 0.2], 0)]);
        let ds = RoundDataset::new(1, vec![pts.clone()]).unwrap();
        let c = comparator(&ds, &lm, None, SolverOptions::default()).unwrap();
        assert!(c.converged);
        let g = loss::mean_gradient(&c.model, &pts, &lm).unwrap();
        assert!(loss::norm(&g) <= 1e-8);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 2).with_lambda(1e-3);
        let ds = RoundDataset::new(1, vec![dense_points(&[(&[1.0, 0.5], 1), (&[-0.3, 1.2], -1)])]).unwrap();
        let opts = SolverOptions {
            tolerance: 1e-8,
            max_iterations: 3,
        };
        let c = comparator(&ds, &lm, None, opts).unwrap();
        assert!(!c.converged);
        assert_eq!(c.iterations, 3);
    }

    #[test]
    fn identical_rounds_have_zero_drift_and_same_comparator() {
        let lm = LossModel::new(LossKind::BinaryLogistic, 2).with_lambda(0.1);
        let pts = dense_points(&[(&[1.0, 0.5], 1), (&[-0.3, 1.2], -1)]);
        let a = RoundDataset::new(1, vec![pts.clone()]).unwrap();
        let b = RoundDataset::new(2, vec![pts]).unwrap();
        let probes = random_probes(1, 2, 16);
        let refs: Vec<&[f64]> = probes.iter().map(Vec::as_slice).collect();
        assert_eq!(estimate_drift(&b, &a, &refs, &lm).unwrap(), 0.0);
        let ca = comparator(&a, &lm, None, SolverOptions::default()).unwrap();
        let cb = comparator(&b, &lm, None, SolverOptions::default()).unwrap();
        assert_eq!(ca.model, cb.model);
    }

    #[test]
    fn drift_estimate_dominates_every_probe() {
        let lm = LossModel::new(LossKind::Quadratic, 1);
        let a = RoundDataset::new(1, vec![dense_points(&[(&[0.0], 0)])]).unwrap();
        let b = RoundDataset::new(2, vec![dense_points(&[(&[1.0], 0)])]).unwrap();
        let x = [0.3];
        let single = estimate_drift(&b, &a, &[&x], &lm).unwrap();
        let expected = ((0.7f64.powi(2) - 0.3f64.powi(2)) / 20.0).abs();
        assert!((single - expected).abs() < 1e-15);
        let probes = random_probes(3, 1, 16);
        let mut refs: Vec<&[f64]> = probes.iter().map(Vec::as_slice).collect();
        refs.push(&x);
        assert!(estimate_drift(&b, &a, &refs, &lm).unwrap() >= single);
    }

    #[test]
    fn class_swap_round_has_positive_drift() {
        let source = DataSource::synthetic_logistic(vec![vec![2.0, 0.0], vec![-2.0, 0.0]], 0.5, 4).unwrap();
        let schedule = DriftSchedule::new(vec![DriftEvent {
            round: 5,
            kind: DriftKind::ClassSwap { pairs: vec![(0, 1)] },
        }])
        .unwrap();
        let lm = LossModel::new(LossKind::BinaryLogistic, 2).with_lambda(0.01);
        let law = SizeLaw::Fixed { size: 200 };
        let prev = sample_round(&source, &schedule, 4, 3, &law).unwrap();
        let cur = sample_round(&source, &schedule, 5, 3, &law).unwrap();
        let probes = random_probes(0, 2, 16);
        let refs: Vec<&[f64]> = probes.iter().map(Vec::as_slice).collect();
        assert!(estimate_drift(&cur, &prev, &refs, &lm).unwrap() > 0.05);
    }

    #[test]
    fn noise_free_drift_count_matches_schedule() {
        // a fixed pool served whole every round: only scheduled events move F
        let pts = dense_points(&[
            (&[1.0, 0.2], 0),
            (&[0.8, -0.1], 0),
            (&[-1.0, 0.3], 1),
            (&[-0.7, -0.4], 1),
            (&[0.1, 1.0], 2),
            (&[0.2, -1.0], 3),
        ]);
        let mut text = Vec::new();
        crate::data::write_libsvm(&pts, &mut text).unwrap();
        let parsed = crate::data::parse_libsvm(text.as_slice()).unwrap();
        let source = DataSource::from_libsvm(parsed, 1).unwrap();
        let schedule = DriftSchedule::new(vec![
            DriftEvent {
                round: 3,
                kind: DriftKind::ClassSwap { pairs: vec![(0, 1)] },
            },
            DriftEvent {
                round: 6,
                kind: DriftKind::ClassSwap { pairs: vec![(2, 3)] },
            },
        ])
        .unwrap();
        let lm = LossModel::new(LossKind::Softmax { classes: vec![0, 1, 2, 3] }, 2).with_lambda(0.01);
        let law = SizeLaw::Fixed { size: 6 };
        let horizon = 8;
        let data: Vec<Arc<RoundDataset>> = (1..=horizon)
            .map(|t| Arc::new(sample_round(&source, &schedule, t, 2, &law).unwrap()))
            .collect();
        let models = vec![vec![0.0; lm.dimension()]; horizon];
        let trace = regret_trace(
            &models,
            &data,
            &lm,
            &schedule,
            TraceOptions {
                solver: SolverOptions::default(),
                probe_seed: 5,
                static_comparator: true,
            },
        )
        .unwrap();
        let detected = trace.rows.iter().filter(|r| r.delta_hat.is_some_and(|d| d > 1e-12)).count();
        assert_eq!(trace.drift_count, 2);
        assert_eq!(detected, trace.drift_count);
        assert_eq!(trace.negative_rounds, 0);
        // per-round minimizers can only do better than a single fixed model
        assert!(trace.total() >= trace.static_regret().unwrap() - 1e-9);
        let cum: Vec<f64> = trace.rows.iter().map(|r| r.cumulative).collect();
        assert!(cum.windows(2).all(|w| w[1] >= w[0] - ORACLE_TOLERANCE));
    }

    #[test]
    fn epoch_regrets_add_up() {
        let lm = LossModel::new(LossKind::Quadratic, 1);
        let data: Vec<Arc<RoundDataset>> = (1..=6)
            .map(|t| Arc::new(RoundDataset::new(t, vec![dense_points(&[(&[t as f64 * 0.1], 0)])]).unwrap()))
            .collect();
        let models: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.05]).collect();
        let opts = TraceOptions {
            solver: SolverOptions::default(),
            probe_seed: 0,
            static_comparator: false,
        };
        let trace = regret_trace(&models, &data, &lm, &DriftSchedule::default(), opts).unwrap();
        let epochs = [
            EpochRecord { id: 1, start: 1, end: 2, trigger: None },
            EpochRecord { id: 2, start: 3, end: 6, trigger: None },
        ];
        let parts = epoch_regrets(&trace, &epochs).unwrap();
        assert!((parts.iter().sum::<f64>() - trace.total()).abs() < 1e-15);
        assert!(epoch_regrets(&trace, &[EpochRecord { id: 1, start: 5, end: 9, trigger: None }]).is_err());
    }

    #[test]
    fn power_law_slopes() {
        let sqrt: Vec<(usize, f64)> = [256, 512, 1024, 2048].iter().map(|&t| (t, 3.0 * (t as f64).sqrt())).collect();
        assert!((sublinearity_fit(&sqrt).unwrap().slope - 0.5).abs() < 1e-6);
        let lin: Vec<(usize, f64)> = [10, 20, 40].iter().map(|&t| (t, 0.1 * t as f64)).collect();
        assert!((sublinearity_fit(&lin).unwrap().slope - 1.0).abs() < 1e-12);
        let with_bad = [(10, 1.0), (20, -1.0), (40, 4.0)];
        let fit = sublinearity_fit(&with_bad).unwrap();
        assert_eq!(fit.excluded, vec![20]);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(sublinearity_fit(&lin[..2]).is_err());
    }
}
