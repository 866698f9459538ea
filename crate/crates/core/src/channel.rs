//! Alternating-renewal ON/OFF channels between every (queue, server) pair.

use std::fmt;

use rand::Rng;

use crate::dist::{DiscretePositiveDist, DistKind};
use crate::error::{Error, Result};
use crate::matching::BipartiteGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    On,
    Off,
}

/// One cell: the current phase and the number of slots left in it,
/// counting the current slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenewalChannelState {
    pub phase: Phase,
    pub residual: u64,
}

impl RenewalChannelState {
    pub fn new(phase: Phase, residual: u64) -> Self {
        assert!(residual >= 1, "residual must be at least 1");
        Self { phase, residual }
    }

    /// Emits the connectivity of the current slot, then advances one slot.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        on_dist: &DiscretePositiveDist,
        off_dist: &DiscretePositiveDist,
        rng: &mut R,
    ) -> bool {
        let bit = self.phase == Phase::On;
        self.residual -= 1;
        if self.residual == 0 {
            let (phase, dist) = match self.phase {
                Phase::On => (Phase::Off, off_dist),
                Phase::Off => (Phase::On, on_dist),
            };
            self.phase = phase;
            self.residual = dist.sample(rng);
        }
        bit
    }
}

/// Two-state Markov channel; `p01` is OFF→ON, `p10` is ON→OFF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovChannelParams {
    pub p01: f64,
    pub p10: f64,
}

impl MarkovChannelParams {
    pub fn new(p01: f64, p10: f64) -> Result<Self> {
        for (name, p) in [("p01", p01), ("p10", p10)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidChannel(format!(
                    "{name} must lie in (0, 1), got {p}"
                )));
            }
        }
        Ok(Self { p01, p10 })
    }

    pub fn is_negatively_correlated(&self) -> bool {
        self.p01 + self.p10 > 1.0
    }

    /// Smallest one-slot ON probability over every possible history,
    /// `min(P(ON | OFF), P(ON | ON)) = min(p01, 1 - p10)`.
    pub fn min_conditional_on_prob(&self) -> f64 {
        self.p01.min(1.0 - self.p10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// ON with probability `q` in every slot, independently.
    Iid { q: f64 },
    Markov(MarkovChannelParams),
    Renewal {
        on: DiscretePositiveDist,
        off: DiscretePositiveDist,
    },
}

/// The seven homogeneous channel settings of the simulation study.
/// Markov entries are `(p01, p10)`.
pub const PRESETS: [(u8, PresetKind); 7] = [
    (1, PresetKind::Iid(0.6)),
    (2, PresetKind::Iid(0.5)),
    (3, PresetKind::Markov(0.06, 0.04)),
    (4, PresetKind::Markov(0.15, 0.1)),
    (5, PresetKind::Markov(0.99, 0.99)),
    (6, PresetKind::Markov(0.9, 0.9)),
    (7, PresetKind::Markov(0.75, 0.75)),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetKind {
    Iid(f64),
    Markov(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub model: ChannelModel,
    pub preset: Option<u8>,
}

impl ChannelSpec {
    pub fn iid(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidChannel(format!(
                "i.i.d. ON probability must lie in (0, 1), got {q}"
            )));
        }
        Ok(Self {
            model: ChannelModel::Iid { q },
            preset: None,
        })
    }

    pub fn markov(p01: f64, p10: f64) -> Result<Self> {
        Ok(Self {
            model: ChannelModel::Markov(MarkovChannelParams::new(p01, p10)?),
            preset: None,
        })
    }

    pub fn renewal(on: DiscretePositiveDist, off: DiscretePositiveDist) -> Self {
        Self {
            model: ChannelModel::Renewal { on, off },
            preset: None,
        }
    }

    pub fn preset(id: u8) -> Result<Self> {
        let (_, kind) = PRESETS
            .iter()
            .find(|(k, _)| *k == id)
            .ok_or_else(|| Error::InvalidChannel(format!("unknown preset {id}, expected 1..7")))?;
        let mut spec = match *kind {
            PresetKind::Iid(q) => Self::iid(q)?,
            PresetKind::Markov(p01, p10) => Self::markov(p01, p10)?,
        };
        spec.preset = Some(id);
        Ok(spec)
    }

    /// ON-period and OFF-period laws.
    pub fn dists(&self) -> (DiscretePositiveDist, DiscretePositiveDist) {
        match &self.model {
            ChannelModel::Iid { q } => (
                DiscretePositiveDist::geometric(1.0 - q).expect("valid q"),
                DiscretePositiveDist::geometric(*q).expect("valid q"),
            ),
            ChannelModel::Markov(m) => (
                DiscretePositiveDist::geometric(m.p10).expect("valid p10"),
                DiscretePositiveDist::geometric(m.p01).expect("valid p01"),
            ),
            ChannelModel::Renewal { on, off } => (on.clone(), off.clone()),
        }
    }

    /// Markov parameters when the channel is a two-state chain; an i.i.d.
    /// channel is the chain with `p01 = q`, `p10 = 1 - q`.
    pub fn markov_params(&self) -> Option<MarkovChannelParams> {
        match &self.model {
            ChannelModel::Iid { q } => Some(MarkovChannelParams {
                p01: *q,
                p10: 1.0 - q,
            }),
            ChannelModel::Markov(m) => Some(*m),
            ChannelModel::Renewal { on, off } => match (on.kind(), off.kind()) {
                (DistKind::Geometric { s: p10 }, DistKind::Geometric { s: p01 })
                    if *p10 < 1.0 && *p01 < 1.0 =>
                {
                    Some(MarkovChannelParams {
                        p01: *p01,
                        p10: *p10,
                    })
                }
                _ => None,
            },
        }
    }

    pub fn pi0(&self) -> f64 {
        let (on, off) = self.dists();
        pi0(&on, &off)
    }

    pub fn condition_a(&self) -> ConditionA {
        condition_a_check(self)
    }

    pub fn condition_b(&self) -> bool {
        condition_b_check(&self.dists().1)
    }

    /// Sum of mean ON and mean OFF lengths.
    pub fn mean_cycle(&self) -> f64 {
        let (on, off) = self.dists();
        on.mean() + off.mean()
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = self.preset {
            return write!(f, "preset({id})");
        }
        match &self.model {
            ChannelModel::Iid { q } => write!(f, "iid({q})"),
            ChannelModel::Markov(m) => write!(f, "markov({}, {})", m.p01, m.p10),
            ChannelModel::Renewal { on, off } => write!(f, "renewal(on={on}, off={off})"),
        }
    }
}

/// Stationary OFF probability `E[D] / (E[U] + E[D])`.
pub fn pi0(on_dist: &DiscretePositiveDist, off_dist: &DiscretePositiveDist) -> f64 {
    let (eu, ed) = (on_dist.mean(), off_dist.mean());
    ed / (eu + ed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionA {
    Holds,
    Fails,
    Unknown,
}

impl fmt::Display for ConditionA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionA::Holds => "holds",
            ConditionA::Fails => "fails",
            ConditionA::Unknown => "unknown",
        })
    }
}

/// Non-negative correlation. Decidable for two-state chains
/// (`p01 + p10 <= 1`); general renewal channels report `Unknown`.
pub fn condition_a_check(spec: &ChannelSpec) -> ConditionA {
    match &spec.model {
        ChannelModel::Iid { .. } => ConditionA::Holds,
        _ => match spec.markov_params() {
            Some(m) if m.p01 + m.p10 <= 1.0 => ConditionA::Holds,
            Some(_) => ConditionA::Fails,
            None => ConditionA::Unknown,
        },
    }
}

/// Memoryless OFF periods.
pub fn condition_b_check(off_dist: &DiscretePositiveDist) -> bool {
    off_dist.is_memoryless()
}

/// `n x n` matrix of independent, identically distributed renewal channels.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    n: usize,
    cells: Vec<RenewalChannelState>,
    on_dist: DiscretePositiveDist,
    off_dist: DiscretePositiveDist,
}

impl ChannelMatrix {
    /// Draws every cell from the time-stationary law: phase ON with
    /// probability `E[U] / (E[U] + E[D])`, residual from the integrated tail
    /// of the phase's period law.
    pub fn equilibrium_init<R: Rng + ?Sized>(
        n: usize,
        on_dist: DiscretePositiveDist,
        off_dist: DiscretePositiveDist,
        rng: &mut R,
    ) -> Self {
        let p_on = 1.0 - pi0(&on_dist, &off_dist);
        let cells = (0..n * n)
            .map(|_| {
                if rng.random::<f64>() < p_on {
                    RenewalChannelState::new(Phase::On, on_dist.sample_equilibrium_residual(rng))
                } else {
                    RenewalChannelState::new(Phase::Off, off_dist.sample_equilibrium_residual(rng))
                }
            })
            .collect();
        Self {
            n,
            cells,
            on_dist,
            off_dist,
        }
    }

    pub fn from_cells(
        n: usize,
        cells: Vec<RenewalChannelState>,
        on_dist: DiscretePositiveDist,
        off_dist: DiscretePositiveDist,
    ) -> Self {
        assert_eq!(cells.len(), n * n, "expected n*n cells");
        Self {
            n,
            cells,
            on_dist,
            off_dist,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Cell for queue `i`, server `j`.
    pub fn cell(&self, i: usize, j: usize) -> RenewalChannelState {
        self.cells[i * self.n + j]
    }

    /// Advances every cell one slot, writing this slot's connectivity into
    /// `out` (row = queue, column = server).
    pub fn step_into<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut BipartiteGraph) {
        debug_assert_eq!(out.left_count(), self.n);
        debug_assert_eq!(out.right_count(), self.n);
        let (on, off) = (&self.on_dist, &self.off_dist);
        for (idx, cell) in self.cells.iter_mut().enumerate() {
            let bit = cell.step(on, off, rng);
            out.set(idx / self.n, idx % self.n, bit);
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> BipartiteGraph {
        let mut out = BipartiteGraph::empty(self.n, self.n);
        self.step_into(rng, &mut out);
        out
    }
}
