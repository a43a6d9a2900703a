//! Block/epoch orchestration: doubling blocks of randomly scheduled
//! instances, two drift tests, and restarts when either test fires.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::RoundDataset;
use crate::error::{Error, Result};
use crate::multiscale::{run_round, schedule_block, ActiveSpan, Instance, InstancePool, RoundContext};
use crate::rng::{stream_rng, Stream};

/// `ρ(t) = C(t)/t` with `C(t) = min{c1·√t + c2, t}` and the inflated rate
/// `ρ̂(t) = 6(log₂T + 1)·ln(T/δ)·ρ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub c1: f64,
    pub c2: f64,
    pub horizon: usize,
    pub delta: f64,
}

impl RateSchedule {
    pub fn new(c1: f64, c2: f64, horizon: usize, delta: f64) -> Result<Self> {
        let s = Self { c1, c2, horizon, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) || !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::Config(format!(
                "rate constants need c1 > 0 and c2 >= 0, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }

    /// `C(t)`
    pub fn cumulative(&self, t: f64) -> f64 {
        (self.c1 * t.sqrt() + self.c2).min(t)
    }

    /// `ρ(t)`
    pub fn rho(&self, t: f64) -> f64 {
        self.cumulative(t) / t
    }

    /// `6(log₂T + 1)·ln(T/δ)`
    pub fn inflation(&self) -> f64 {
        let t = self.horizon as f64;
        6.0 * (t.log2() + 1.0) * (t / self.delta).ln()
    }

    /// `ρ̂(t)`
    pub fn rho_hat(&self, t: usize) -> Result<f64> {
        if t < 1 {
            return Err(Error::Argument("rho_hat is defined for t >= 1".into()));
        }
        Ok(self.inflation() * self.rho(t as f64))
    }

    /// High-probability bound on the number of instances scheduled in an
    /// order-`m` block: `6(log₂T + 1)·ln(T/δ)·C(2^m)/C(1)`.
    pub fn instance_bound(&self, order: u32) -> f64 {
        self.inflation() * self.cumulative((1u64 << order) as f64) / self.cumulative(1.0)
    }
}

pub fn rho_hat(t: usize, schedule: &RateSchedule) -> Result<f64> {
    schedule.rho_hat(t)
}

/// A test statistic and the threshold it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCheck {
    pub statistic: f64,
    pub threshold: f64,
}

impl TestCheck {
    pub fn fired(&self) -> bool {
        self.statistic >= self.threshold
    }
}

/// Sudden-drift test, evaluated when the active order-`k` instance reaches
/// its last round: fires iff `U ≥ (1/2^k)·Σ_{τ∈[A.s, A.e]} F^(τ) + 9ρ̂(2^k)`.
/// `instance_losses` are the played losses over the instance's span.
pub fn test1(
    upper: f64,
    instance_losses: &[f64],
    order: u32,
    rates: &RateSchedule,
    test_scale: f64,
) -> Result<TestCheck> {
    let len = 1usize << order;
    let avg = instance_losses.iter().sum::<f64>() / len as f64;
    Ok(TestCheck {
        statistic: upper - avg,
        threshold: 9.0 * rates.rho_hat(len)? * test_scale,
    })
}

/// Gradual-drift test over the block so far: fires iff
/// `(1/t')·Σ (F^(τ) − F̃^(τ)) ≥ 3ρ̂(t')` with `t' = t − t_new + 1`.
pub fn test2(losses: &[f64], estimates: &[f64], rates: &RateSchedule, test_scale: f64) -> Result<TestCheck> {
    if losses.is_empty() || losses.len() != estimates.len() {
        return Err(Error::Argument(format!(
            "test 2 needs equal, non-empty histories ({} losses, {} estimates)",
            losses.len(),
            estimates.len()
        )));
    }
    let span = losses.len();
    let gap: f64 = losses.iter().zip(estimates).map(|(f, e)| f - e).sum();
    Ok(TestCheck {
        statistic: gap / span as f64,
        threshold: 3.0 * rates.rho_hat(span)? * test_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    Test1,
    Test2,
    Both,
}

impl TriggerKind {
    fn from_flags(t1: bool, t2: bool) -> Option<Self> {
        match (t1, t2) {
            (true, true) => Some(TriggerKind::Both),
            (true, false) => Some(TriggerKind::Test1),
            (false, true) => Some(TriggerKind::Test2),
            (false, false) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Master,
    /// One instance over `[1, T]` with `η = 1/√T`, no tests.
    SingleInstanceBaseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterConfig {
    pub rates: RateSchedule,
    /// Multiplies both test thresholds.
    pub test_scale: f64,
    pub reset_order_on_restart: bool,
    pub mode: RunMode,
    /// Retention window for the optimistic trackers; defaults to `2·2^m`.
    pub window: Option<usize>,
    pub seed: u64,
}

impl MasterConfig {
    pub fn new(rates: RateSchedule, seed: u64) -> Self {
        Self {
            rates,
            test_scale: 1.0,
            reset_order_on_restart: false,
            mode: RunMode::Master,
            window: None,
            seed,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rates.horizon
    }
}

/// Per-round telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub block_start: usize,
    pub block_order: u32,
    pub epoch_id: usize,
    pub active: ActiveSpan,
    /// F^(t)(x^(t))
    pub loss: f64,
    /// F̃^(t)
    pub optimistic: f64,
    /// U_t
    pub upper: f64,
    pub test1: Option<TestCheck>,
    pub test2: Option<TestCheck>,
    pub test1_fired: bool,
    pub test2_fired: bool,
    pub model: Vec<f64>,
    pub accuracy: Option<f64>,
    pub clip_events: usize,
    pub lipschitz_violations: usize,
    pub degraded_estimate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub id: usize,
    pub start: usize,
    pub end: usize,
    /// What ended the epoch; `None` for the epoch that reaches the horizon.
    pub trigger: Option<TriggerKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub start: usize,
    pub end: usize,
    pub order: u32,
    pub instances: usize,
    pub instances_by_order: Vec<usize>,
    pub trigger: Option<TriggerKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterRun {
    pub rounds: Vec<RoundRecord>,
    pub epochs: Vec<EpochRecord>,
    pub blocks: Vec<BlockRecord>,
}

impl MasterRun {
    /// Rounds on which a restart was triggered.
    pub fn restart_rounds(&self) -> Vec<usize> {
        self.rounds
            .iter()
            .filter(|r| r.test1_fired || r.test2_fired)
            .map(|r| r.t)
            .collect()
    }

    pub fn restarts(&self) -> usize {
        self.epochs.len() - 1
    }
}

pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

struct BlockOutcome {
    trigger: Option<TriggerKind>,
    next_t: usize,
}

/// Runs the full horizon. `data(t)` supplies round `t`'s dataset.
pub fn run_master(
    config: &MasterConfig,
    ctx: &mut RoundContext,
    data: &mut dyn FnMut(usize) -> Result<Arc<RoundDataset>>,
) -> Result<MasterRun> {
    config.rates.validate()?;
    if !(config.test_scale > 0.0) {
        return Err(Error::Config(format!("test_scale must be > 0, got {}", config.test_scale)));
    }
    let horizon = config.horizon();
    let mut run = MasterRun {
        rounds: Vec::with_capacity(horizon),
        epochs: Vec::new(),
        blocks: Vec::new(),
    };
    let mut epoch_start = 1;
    let mut epoch_id = 1;
    let rates = config.rates;
    let rho = move |t: f64| rates.rho(t);

    match config.mode {
        RunMode::SingleInstanceBaseline => {
            let order = ceil_log2(horizon);
            let pool = InstancePool::new(1, order, vec![Instance::spanning(1, horizon, order)]);
            ctx.window = config.window.or(Some(2usize << order));
            let outcome = run_block(config, ctx, pool, 1, horizon, false, epoch_id, data, &mut run)?;
            debug_assert!(outcome.trigger.is_none());
        }
        RunMode::Master => {
            let mut t = 1;
            let mut m: u32 = 0;
            let mut block_index = 0u64;
            while t <= horizon {
                let order = m.min(ceil_log2(horizon - t + 1));
                let mut rng = stream_rng(config.seed, Stream::Schedule, &[block_index]);
                let pool = schedule_block(t, order, &rho, &mut rng);
                ctx.window = config.window.or(Some(2usize << order));
                let last = (t + (1usize << order) - 1).min(horizon);
                let outcome = run_block(config, ctx, pool, t, last, true, epoch_id, data, &mut run)?;
                if let Some(kind) = outcome.trigger {
                    run.epochs.push(EpochRecord {
                        id: epoch_id,
                        start: epoch_start,
                        end: outcome.next_t - 1,
                        trigger: Some(kind),
                    });
                    epoch_id += 1;
                    epoch_start = outcome.next_t;
                    m = if config.reset_order_on_restart { 0 } else { m + 1 };
                } else {
                    m += 1;
                }
                t = outcome.next_t;
                block_index += 1;
            }
        }
    }
    if epoch_start <= horizon {
        run.epochs.push(EpochRecord {
            id: epoch_id,
            start: epoch_start,
            end: horizon,
            trigger: None,
        });
    }
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn run_block(
    config: &MasterConfig,
    ctx: &mut RoundContext,
    mut pool: InstancePool,
    first: usize,
    last: usize,
    tests_enabled: bool,
    epoch_id: usize,
    data: &mut dyn FnMut(usize) -> Result<Arc<RoundDataset>>,
    run: &mut MasterRun,
) -> Result<BlockOutcome> {
    let mut losses = Vec::new();
    let mut estimates = Vec::new();
    let mut upper = f64::NEG_INFINITY;
    let mut trigger = None;
    let mut t = first;
    while t <= last {
        let round = data(t)?;
        if round.round != t {
            return Err(Error::Config(format!("data provider returned round {} for round {t}", round.round)));
        }
        let step = run_round(&mut pool, t, ctx, &round)?;
        let out = step.output;
        losses.push(out.global_loss);
        estimates.push(out.optimistic);
        upper = upper.max(out.optimistic);

        let (mut check1, mut check2) = (None, None);
        if tests_enabled {
            if t == step.active.end {
                let span = &losses[step.active.start - first..];
                check1 = Some(test1(upper, span, step.active.order, &config.rates, config.test_scale)?);
            }
            check2 = Some(test2(&losses, &estimates, &config.rates, config.test_scale)?);
        }
        let fired1 = check1.is_some_and(|c| c.fired());
        let fired2 = check2.is_some_and(|c| c.fired());
        run.rounds.push(RoundRecord {
            t,
            block_start: first,
            block_order: pool.order,
            epoch_id,
            active: step.active,
            loss: out.global_loss,
            optimistic: out.optimistic,
            upper,
            test1: check1,
            test2: check2,
            test1_fired: fired1,
            test2_fired: fired2,
            model: out.model,
            accuracy: out.accuracy,
            clip_events: out.clip_events,
            lipschitz_violations: out.lipschitz_violations,
            degraded_estimate: out.degraded_estimate,
        });
        t += 1;
        trigger = TriggerKind::from_flags(fired1, fired2);
        if trigger.is_some() {
            break;
        }
    }
    run.blocks.push(BlockRecord {
        start: first,
        end: t - 1,
        order: pool.order,
        instances: pool.len(),
        instances_by_order: pool.count_by_order(),
        trigger,
    });
    Ok(BlockOutcome { trigger, next_t: t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_hat_small_horizon() {
        let s = RateSchedule::new(1.0, 0.0, 2, 1.0).unwrap();
        // 6 · 2 · ln 2 · ρ(1), ρ(1) = min(1, 1)/1
        assert!((s.rho_hat(1).unwrap() - 8.317_766_166_719_344).abs() < 1e-12);
        assert!(s.rho_hat(0).is_err());
    }

    #[test]
    fn rho_hat_matches_high_precision_value() {
        // mpmath at 30 digits: 6·11·ln(10240)·(5/16)
        let s = RateSchedule::new(1.0, 1.0, 1024, 0.1).unwrap();
        let v = s.rho_hat(16).unwrap();
        assert!((v - 190.452_423_533_490_9).abs() < 1e-10, "{v}");
    }

    #[test]
    fn rho_is_non_increasing_and_cumulative_increasing() {
        let s = RateSchedule::new(1.0, 1.0, 4096, 0.1).unwrap();
        let mut prev_rho = f64::INFINITY;
        let mut prev_c = 0.0;
        for t in 1..=4096 {
            let r = s.rho_hat(t).unwrap();
            assert!(r <= prev_rho + 1e-12);
            assert!(s.rho(t as f64) >= 1.0 / (t as f64).sqrt() - 1e-15);
            let c = s.cumulative(t as f64);
            assert!(c > prev_c);
            prev_rho = r;
            prev_c = c;
        }
    }

    #[test]
    fn invalid_rates_rejected() {
        assert!(RateSchedule::new(0.0, 1.0, 10, 0.1).is_err());
        assert!(RateSchedule::new(1.0, -1.0, 10, 0.1).is_err());
        assert!(RateSchedule::new(1.0, 1.0, 0, 0.1).is_err());
        assert!(RateSchedule::new(1.0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn test1_examples() {
        let s = RateSchedule::new(1.0, 1.0, 256, 0.1).unwrap();
        let flat = [0.3; 4];
        assert!(!test1(0.3, &flat, 2, &s, 1.0).unwrap().fired());
        // 9ρ̂(4) is above 1 at unit scale, so shrink it below 1
        let scale = 0.5 / (9.0 * s.rho_hat(4).unwrap());
        assert!(test1(1.0, &[0.0; 4], 2, &s, scale).unwrap().fired());
        assert!(!test1(0.4, &[0.0; 4], 2, &s, scale).unwrap().fired());
    }

    #[test]
    fn test1_averages_over_instance_length() {
        let s = RateSchedule::new(1.0, 1.0, 256, 0.1).unwrap();
        let c = test1(1.0, &[0.2, 0.4], 1, &s, 1.0).unwrap();
        assert!((c.statistic - 0.7).abs() < 1e-15);
    }

    #[test]
    fn test2_examples() {
        let s = RateSchedule::new(1.0, 1.0, 256, 0.1).unwrap();
        let f = [0.4, 0.2, 0.7];
        assert!(!test2(&f, &f, &s, 1.0).unwrap().fired());
        let est = [0.0; 3];
        let ones = [1.0; 3];
        let scale = 0.9 / (3.0 * s.rho_hat(3).unwrap());
        assert!(test2(&ones, &est, &s, scale).unwrap().fired());
        assert!(test2(&ones, &est[..2], &s, 1.0).is_err());
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(1024), 10);
    }
}
