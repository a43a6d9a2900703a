//! Randomized multi-scale scheduling of base instances over a block and the
//! shortest-remaining-run-length rule that decides which one trains.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::RoundDataset;
use crate::error::Result;
use crate::fed::{FedRoundOutput, FedRunner, OptimisticTracker, TrackerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceStatus {
    Scheduled,
    Active,
    Paused,
    Finished,
}

/// One scheduled base-FL run over `[start, end]`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub start: usize,
    pub end: usize,
    pub order: u32,
    /// `(end − start + 1)^{-1/2}`
    pub eta: f64,
    /// Set on first activation.
    pub model: Option<Vec<f64>>,
    pub tracker: Option<OptimisticTracker>,
    pub status: InstanceStatus,
}

impl Instance {
    /// Order-`k` instance `[start, start + 2^k − 1]`.
    pub fn of_order(start: usize, order: u32) -> Self {
        let len = 1usize << order;
        Self::spanning(start, start + len - 1, order)
    }

    /// An instance over an arbitrary interval; used by the single-instance
    /// baseline, whose length need not be a power of two.
    pub fn spanning(start: usize, end: usize, order: u32) -> Self {
        assert!(end >= start, "instance must cover at least one round");
        Self {
            start,
            end,
            order,
            eta: 1.0 / ((end - start + 1) as f64).sqrt(),
            model: None,
            tracker: None,
            status: InstanceStatus::Scheduled,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covers(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Instances scheduled for one block.
#[derive(Debug, Clone)]
pub struct InstancePool {
    pub block_start: usize,
    pub order: u32,
    pub instances: Vec<Instance>,
    current: Option<usize>,
}

impl InstancePool {
    pub fn new(block_start: usize, order: u32, instances: Vec<Instance>) -> Self {
        Self {
            block_start,
            order,
            instances,
            current: None,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn block_end(&self) -> usize {
        self.block_start + (1usize << self.order) - 1
    }

    pub fn current(&self) -> Option<&Instance> {
        self.current.map(|i| &self.instances[i])
    }

    pub fn count_by_order(&self) -> Vec<usize> {
        let mut counts = vec![0; self.order as usize + 1];
        for inst in &self.instances {
            counts[inst.order as usize] += 1;
        }
        counts
    }
}

/// Probability that an order-`k` slot of an order-`m` block is filled:
/// `ρ(2^m) / ρ(2^k)`, exactly 1 for `k = m`.
pub fn inclusion_probability(order: u32, k: u32, rho: &dyn Fn(f64) -> f64) -> f64 {
    if k >= order {
        return 1.0;
    }
    let p = rho((1u64 << order) as f64) / rho((1u64 << k) as f64);
    p.clamp(0.0, 1.0)
}

/// Fills `[block_start, block_start + 2^order − 1]` with instances. Every
/// aligned `(τ, k)` slot gets one independent Bernoulli draw; the single
/// order-`m` slot is always filled so the block is covered.
pub fn schedule_block<R: Rng>(
    block_start: usize,
    order: u32,
    rho: &dyn Fn(f64) -> f64,
    rng: &mut R,
) -> InstancePool {
    let probs: Vec<f64> = (0..=order).map(|k| inclusion_probability(order, k, rho)).collect();
    let mut instances = Vec::new();
    for offset in 0..(1usize << order) {
        for k in (0..=order).rev() {
            if offset % (1usize << k) != 0 {
                continue;
            }
            if k == order || rng.random::<f64>() < probs[k as usize] {
                instances.push(Instance::of_order(block_start + offset, k));
            }
        }
    }
    InstancePool::new(block_start, order, instances)
}

/// Index of the covering instance with the shortest remaining run length;
/// ties go to the smaller order, then the later start.
pub fn pick_active(pool: &InstancePool, t: usize) -> Option<usize> {
    pool.instances
        .iter()
        .enumerate()
        .filter(|(_, a)| a.covers(t))
        .min_by(|(_, a), (_, b)| {
            (a.end - t)
                .cmp(&(b.end - t))
                .then(a.order.cmp(&b.order))
                .then(b.start.cmp(&a.start))
        })
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// New instances start from the zero model.
    #[default]
    Fresh,
    /// New instances copy the model of whichever instance trained last.
    Warm,
}

/// State that outlives a single pool: the round executor and the last
/// model trained (for warm starts across blocks).
#[derive(Debug, Clone)]
pub struct RoundContext {
    pub runner: FedRunner,
    pub tracker: TrackerParams,
    /// Retention window for newly activated instances; `None` keeps all.
    pub window: Option<usize>,
    pub init: InitPolicy,
    last_model: Option<Vec<f64>>,
}

impl RoundContext {
    pub fn new(runner: FedRunner, tracker: TrackerParams, init: InitPolicy) -> Self {
        Self {
            runner,
            tracker,
            window: None,
            init,
            last_model: None,
        }
    }

    pub fn last_model(&self) -> Option<&[f64]> {
        self.last_model.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSpan {
    pub start: usize,
    pub end: usize,
    pub order: u32,
}

#[derive(Debug, Clone)]
pub struct ScaleRound {
    pub output: FedRoundOutput,
    pub active: ActiveSpan,
    /// Set when the active instance changed since the previous round.
    pub switched: bool,
}

/// Runs round `t` on the pool's active instance.
///
/// # Panics
/// If no instance covers `t`; a pool produced by [`schedule_block`] covers
/// its whole block.
pub fn run_round(
    pool: &mut InstancePool,
    t: usize,
    ctx: &mut RoundContext,
    data: &Arc<RoundDataset>,
) -> Result<ScaleRound> {
    let idx = pick_active(pool, t).expect("instance pool must cover every round of its block");
    let switched = pool.current != Some(idx);
    if let Some(prev) = pool.current.filter(|&p| p != idx) {
        let prev = &mut pool.instances[prev];
        if prev.status == InstanceStatus::Active {
            prev.status = InstanceStatus::Paused;
        }
    }
    for inst in pool.instances.iter_mut() {
        if inst.end < t && inst.status != InstanceStatus::Finished {
            inst.status = InstanceStatus::Finished;
        }
    }
    pool.current = Some(idx);

    let dim = ctx.runner.loss.dimension();
    let inst = &mut pool.instances[idx];
    if inst.model.is_none() {
        inst.model = Some(match (ctx.init, &ctx.last_model) {
            (InitPolicy::Warm, Some(m)) => m.clone(),
            _ => vec![0.0; dim],
        });
        inst.tracker = Some(OptimisticTracker::new(ctx.tracker, ctx.window));
    }
    let model = inst.model.as_ref().expect("initialized above");
    let tracker = inst.tracker.as_mut().expect("initialized above");
    let output = ctx.runner.round(model, inst.eta, data, tracker)?;

    inst.model = Some(output.model.clone());
    inst.status = if t >= inst.end {
        InstanceStatus::Finished
    } else {
        InstanceStatus::Active
    };
    ctx.last_model = Some(output.model.clone());
    Ok(ScaleRound {
        active: ActiveSpan {
            start: inst.start,
            end: inst.end,
            order: inst.order,
        },
        output,
        switched,
    })
}
