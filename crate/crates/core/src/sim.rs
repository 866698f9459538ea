//! Slot-level engine: channel step, arrivals, delay sample, decision, service.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arrivals::{ArrivalProcess, ArrivalState};
use crate::channel::{ChannelMatrix, ChannelSpec};
use crate::error::{Error, Result};
use crate::matching::BipartiteGraph;
use crate::policies::{PolicyInput, PolicySpec, Scheduler};
use crate::stats::{batch_means_vif, wilson_interval, Z95};

/// Target number of batch-means batches per replication.
const BATCHES_PER_REPLICATION: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: u64,
    pub warmup: u64,
    pub sample_gap: u64,
    pub policy: PolicySpec,
    pub channel: ChannelSpec,
    pub arrivals: ArrivalProcess,
    pub seed: u64,
    pub replications: u32,
    pub b_max: u32,
}

impl SimConfig {
    /// Config with default warmup, gap, seed and a horizon giving `samples`
    /// W(t) samples per replication.
    pub fn with_samples(
        n: usize,
        policy: PolicySpec,
        channel: ChannelSpec,
        arrivals: ArrivalProcess,
        samples: u64,
    ) -> Self {
        let b_max = 12;
        let warmup = default_warmup(n, b_max);
        let sample_gap = default_sample_gap(&channel);
        Self {
            n,
            horizon: warmup + samples * sample_gap,
            warmup,
            sample_gap,
            policy,
            channel,
            arrivals,
            seed: 1,
            replications: 1,
            b_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSimConfig("n must be at least 1".into()));
        }
        if self.warmup >= self.horizon {
            return Err(Error::InvalidSimConfig(format!(
                "warmup {} must be below horizon {}",
                self.warmup, self.horizon
            )));
        }
        if self.sample_gap == 0 {
            return Err(Error::InvalidSimConfig("sample_gap must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidSimConfig("replications must be at least 1".into()));
        }
        self.arrivals.check_stable()?;
        Scheduler::new(self.policy, self.n, self.arrivals.max_batch())?;
        Ok(())
    }

    /// W(t) samples taken by one replication.
    pub fn samples_per_replication(&self) -> u64 {
        (self.horizon - self.warmup).div_ceil(self.sample_gap)
    }
}

/// `10 * n * b_max` slots.
pub fn default_warmup(n: usize, b_max: u32) -> u64 {
    10 * n as u64 * u64::from(b_max.max(1))
}

/// Twice the mean ON+OFF cycle, rounded up.
pub fn default_sample_gap(channel: &ChannelSpec) -> u64 {
    (2.0 * channel.mean_cycle()).ceil().max(1.0) as u64
}

/// Independent channel and arrival streams for one replication, so that every
/// policy run on the same `(seed, replication)` sees the same sample path.
pub struct SlotSource {
    channel: ChannelMatrix,
    channel_rng: ChaCha8Rng,
    arrivals: ArrivalProcess,
    arrival_state: ArrivalState,
    arrival_rng: ChaCha8Rng,
    graph: BipartiteGraph,
    counts: Vec<u32>,
}

impl SlotSource {
    pub fn new(n: usize, channel: &ChannelSpec, arrivals: &ArrivalProcess, seed: u64, replication: u32) -> Self {
        let mut channel_rng = ChaCha8Rng::seed_from_u64(seed);
        channel_rng.set_stream(2 * u64::from(replication));
        let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
        arrival_rng.set_stream(2 * u64::from(replication) + 1);
        let (on, off) = channel.dists();
        let matrix = ChannelMatrix::equilibrium_init(n, on, off, &mut channel_rng);
        let arrival_state = arrivals.init_state(n, &mut arrival_rng);
        Self {
            channel: matrix,
            channel_rng,
            arrivals: arrivals.clone(),
            arrival_state,
            arrival_rng,
            graph: BipartiteGraph::empty(n, n),
            counts: vec![0; n],
        }
    }

    /// Connectivity and per-queue arrivals of the next slot.
    pub fn next_slot(&mut self) -> (&BipartiteGraph, &[u32]) {
        self.channel.step_into(&mut self.channel_rng, &mut self.graph);
        self.arrivals
            .sample_slot(&mut self.arrival_state, &mut self.counts, &mut self.arrival_rng);
        (&self.graph, &self.counts)
    }
}

/// Queues plus the policy driving them.
#[derive(Debug, Clone)]
pub struct QueueSystem {
    queues: Vec<VecDeque<u64>>,
    scheduler: Scheduler,
    last_w: Option<u64>,
}

/// What happened in one slot.
#[derive(Debug, Clone)]
pub struct SlotReport {
    /// Largest HOL delay after arrivals, before service.
    pub w: u64,
    pub served: Vec<usize>,
    pub success: Option<bool>,
    /// Packets left after service.
    pub backlog: usize,
}

impl QueueSystem {
    pub fn new(policy: PolicySpec, n: usize, max_batch: u32) -> Result<Self> {
        Ok(Self {
            queues: vec![VecDeque::new(); n],
            scheduler: Scheduler::new(policy, n, max_batch)?,
            last_w: None,
        })
    }

    pub fn queues(&self) -> &[VecDeque<u64>] {
        &self.queues
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn backlog(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Largest HOL delay at `slot`; zero for an empty system.
    pub fn max_hol_delay(&self, slot: u64) -> u64 {
        self.queues
            .iter()
            .filter_map(|q| q.front())
            .map(|&a| slot - a)
            .max()
            .unwrap_or(0)
    }

    /// Runs one slot. Panics if the policy breaks a decision invariant.
    pub fn advance(&mut self, slot: u64, graph: &BipartiteGraph, counts: &[u32]) -> SlotReport {
        let before = self.backlog();
        for (q, &c) in self.queues.iter_mut().zip(counts) {
            q.extend(std::iter::repeat_n(slot, c as usize));
        }
        self.scheduler.on_arrivals(slot, counts);
        let w = self.max_hol_delay(slot);
        if let Some(prev) = self.last_w {
            assert!(w <= prev + 1, "W jumped from {prev} to {w} at slot {slot}");
        }

        let input = PolicyInput {
            current_slot: slot,
            queues: &self.queues,
            connectivity: graph,
        };
        let outcome = self.scheduler.decide(&input);
        if let Err(e) = outcome.decision.validate(&input) {
            panic!("slot {slot}: {} produced an invalid decision: {e}", self.scheduler.spec());
        }
        let served = outcome.decision.served_per_queue(self.queues.len());
        for (q, &c) in self.queues.iter_mut().zip(&served) {
            q.drain(..c);
        }
        if let Some(fb) = self.scheduler.frames() {
            debug_assert!(fb.check_invariants().is_ok());
        }

        let arrived: usize = counts.iter().map(|&c| c as usize).sum();
        let total_served: usize = served.iter().sum();
        let backlog = self.backlog();
        assert_eq!(before + arrived - total_served, backlog, "packet conservation");
        self.last_w = Some(w);
        SlotReport {
            w,
            served,
            success: outcome.success,
            backlog,
        }
    }
}

/// Sampled-W statistics of one or more replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub b_max: u32,
    /// `counts[b]` = samples with `W > b`.
    pub counts: Vec<u64>,
    pub samples: u64,
    pub batch_len: u64,
    /// Complete batches of `batch_len` samples, per-`b` violation counts.
    pub batches: Vec<Vec<u64>>,
    /// Slots with `X_F` / `X_PM` equal to one, and slots where it was defined.
    pub x_success: u64,
    pub x_slots: u64,
    /// Sum of post-service backlog over sampled slots.
    pub backlog_sum: f64,
    /// Set when the backlog grew markedly over the sampling window.
    pub unstable_warning: bool,
}

impl Metrics {
    pub fn new(b_max: u32, batch_len: u64) -> Self {
        Self {
            b_max,
            counts: vec![0; b_max as usize + 1],
            samples: 0,
            batch_len: batch_len.max(1),
            batches: Vec::new(),
            x_success: 0,
            x_slots: 0,
            backlog_sum: 0.0,
            unstable_warning: false,
        }
    }

    pub fn mean_backlog(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.backlog_sum / self.samples as f64
        }
    }

    /// Folds another replication in; replications must share `b_max` and
    /// `batch_len`.
    pub fn merge(&mut self, other: &Metrics) {
        assert_eq!(self.b_max, other.b_max);
        assert_eq!(self.batch_len, other.batch_len);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        self.batches.extend(other.batches.iter().cloned());
        self.x_success += other.x_success;
        self.x_slots += other.x_slots;
        self.backlog_sum += other.backlog_sum;
        self.unstable_warning |= other.unstable_warning;
    }
}

/// Accumulates one replication's samples into batches.
struct Recorder {
    metrics: Metrics,
    current: Vec<u64>,
    current_len: u64,
    batch_backlog: Vec<f64>,
    current_backlog: f64,
}

impl Recorder {
    fn new(b_max: u32, batch_len: u64) -> Self {
        Self {
            metrics: Metrics::new(b_max, batch_len),
            current: vec![0; b_max as usize + 1],
            current_len: 0,
            batch_backlog: Vec::new(),
            current_backlog: 0.0,
        }
    }

    fn record(&mut self, w: u64, backlog: usize) {
        let m = &mut self.metrics;
        let hit = (w as usize).min(m.counts.len());
        for b in 0..hit {
            m.counts[b] += 1;
            self.current[b] += 1;
        }
        m.samples += 1;
        m.backlog_sum += backlog as f64;
        self.current_backlog += backlog as f64;
        self.current_len += 1;
        if self.current_len == m.batch_len {
            m.batches.push(std::mem::replace(&mut self.current, vec![0; m.counts.len()]));
            self.batch_backlog.push(self.current_backlog / m.batch_len as f64);
            self.current_len = 0;
            self.current_backlog = 0.0;
        }
    }

    fn finish(mut self, n: usize) -> Metrics {
        let k = self.batch_backlog.len();
        if k >= 8 {
            let quarter = k / 4;
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let early = mean(&self.batch_backlog[..quarter]);
            let late = mean(&self.batch_backlog[k - quarter..]);
            self.metrics.unstable_warning = late > 2.0 * early + n as f64;
        }
        self.metrics
    }
}

/// One replication of `cfg`.
pub fn run_replication(cfg: &SimConfig, replication: u32) -> Result<Metrics> {
    cfg.validate()?;
    let batch_len = (cfg.samples_per_replication() / BATCHES_PER_REPLICATION).max(1);
    let mut source = SlotSource::new(cfg.n, &cfg.channel, &cfg.arrivals, cfg.seed, replication);
    let mut system = QueueSystem::new(cfg.policy, cfg.n, cfg.arrivals.max_batch())?;
    let mut rec = Recorder::new(cfg.b_max, batch_len);
    for slot in 0..cfg.horizon {
        let (graph, counts) = source.next_slot();
        let report = system.advance(slot, graph, counts);
        if slot >= cfg.warmup && (slot - cfg.warmup).is_multiple_of(cfg.sample_gap) {
            rec.record(report.w, report.backlog);
            if let Some(x) = report.success {
                rec.metrics.x_slots += 1;
                rec.metrics.x_success += u64::from(x);
            }
        }
    }
    Ok(rec.finish(cfg.n))
}

/// All replications, run in parallel and merged in replication order.
pub fn run(cfg: &SimConfig) -> Result<Metrics> {
    cfg.validate()?;
    let parts: Vec<Metrics> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("at least one replication");
    for m in iter {
        total.merge(&m);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationEstimate {
    pub b: u32,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: u64,
    pub samples: u64,
    /// Variance inflation factor from batch means (at least 1).
    pub vif: f64,
}

impl ViolationEstimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

/// `P(W > b)` with a 95% Wilson interval on the batch-means effective sample size.
pub fn estimate_violation(metrics: &Metrics, b: u32) -> Result<ViolationEstimate> {
    if metrics.samples == 0 {
        return Err(Error::NoSamples);
    }
    if b > metrics.b_max {
        return Err(Error::InvalidSimConfig(format!(
            "b = {b} exceeds recorded b_max = {}",
            metrics.b_max
        )));
    }
    let count = metrics.counts[b as usize];
    let column: Vec<u64> = metrics.batches.iter().map(|v| v[b as usize]).collect();
    let vif = batch_means_vif(&column, metrics.batch_len);
    let estimate = count as f64 / metrics.samples as f64;
    let (ci_lo, ci_hi) = wilson_interval(estimate, metrics.samples as f64 / vif, Z95);
    Ok(ViolationEstimate {
        b,
        estimate,
        ci_lo,
        ci_hi,
        count,
        samples: metrics.samples,
        vif,
    })
}

/// Dominance tallies of one reference policy against one other policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DominancePair {
    pub reference: PolicySpec,
    pub other: PolicySpec,
    /// `(slot, queue)` cells where `other` had served more packets of the
    /// queue than `reference` by the end of the slot.
    pub packet_violations: u64,
    pub first_packet_violation: Option<(u64, usize)>,
    /// Slots with `W_reference(t) > W_other(t)`.
    pub w_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub slots: u64,
    pub pairs: Vec<DominancePair>,
}

impl DominanceReport {
    pub fn packet_violations(&self) -> u64 {
        self.pairs.iter().map(|p| p.packet_violations).sum()
    }

    pub fn w_violations(&self) -> u64 {
        self.pairs.iter().map(|p| p.w_violations).sum()
    }
}

/// Runs every policy on one shared sample path for `cfg.horizon` slots and
/// compares cumulative per-queue departures and W(t). Queues are FIFO, so a
/// departure-count deficit in a queue is exactly a packet served by `other`
/// and not yet by `reference`.
pub fn dominance_trace(
    cfg: &SimConfig,
    replication: u32,
    references: &[PolicySpec],
    others: &[PolicySpec],
) -> Result<DominanceReport> {
    let policies: Vec<PolicySpec> = references.iter().chain(others).copied().collect();
    let l = cfg.arrivals.max_batch();
    let mut systems = policies
        .iter()
        .map(|&p| QueueSystem::new(p, cfg.n, l))
        .collect::<Result<Vec<_>>>()?;
    let mut departed = vec![vec![0u64; cfg.n]; policies.len()];
    let mut w = vec![0u64; policies.len()];
    let mut pairs: Vec<DominancePair> = references
        .iter()
        .flat_map(|&r| {
            others.iter().map(move |&o| DominancePair {
                reference: r,
                other: o,
                packet_violations: 0,
                first_packet_violation: None,
                w_violations: 0,
            })
        })
        .collect();
    let mut source = SlotSource::new(cfg.n, &cfg.channel, &cfg.arrivals, cfg.seed, replication);
    for slot in 0..cfg.horizon {
        let (graph, counts) = source.next_slot();
        for (k, sys) in systems.iter_mut().enumerate() {
            let rep = sys.advance(slot, graph, counts);
            w[k] = rep.w;
            for (d, s) in departed[k].iter_mut().zip(&rep.served) {
                *d += *s as u64;
            }
        }
        for (idx, pair) in pairs.iter_mut().enumerate() {
            let (ri, oi) = (idx / others.len(), references.len() + idx % others.len());
            for (q, (o, r)) in departed[oi].iter().zip(&departed[ri]).enumerate() {
                if o > r {
                    pair.packet_violations += 1;
                    pair.first_packet_violation.get_or_insert((slot, q));
                }
            }
            if w[ri] > w[oi] {
                pair.w_violations += 1;
            }
        }
    }
    Ok(DominanceReport {
        slots: cfg.horizon,
        pairs,
    })
}
