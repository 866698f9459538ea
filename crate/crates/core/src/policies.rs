//! Per-slot scheduling policies and the oldest-packets-first verifier.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::matching::{
    has_perfect_matching, max_cardinality_matching, max_weight_matching, serve_assignment,
    BipartiteGraph, ServeSet, WeightedAssignmentProblem,
};

/// Snapshot seen by a policy after the slot's arrivals are enqueued.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub current_slot: u64,
    /// Arrival slots per queue, oldest first.
    pub queues: &'a [VecDeque<u64>],
    /// Queue-by-server ON bits for this slot.
    pub connectivity: &'a BipartiteGraph,
}

impl PolicyInput<'_> {
    pub fn n(&self) -> usize {
        self.queues.len()
    }

    pub fn delay(&self, queue: usize, rank: usize) -> u64 {
        self.current_slot - self.queues[queue][rank]
    }

    pub fn total_packets(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// The `limit` globally oldest packets as `(queue, rank)`, ordered by
    /// arrival slot, then queue index, then position in the queue.
    pub fn oldest(&self, limit: usize) -> Vec<(usize, usize)> {
        let mut next = vec![0usize; self.n()];
        let mut out = Vec::with_capacity(limit.min(self.total_packets()));
        while out.len() < limit {
            let mut best: Option<(u64, usize)> = None;
            for (q, queue) in self.queues.iter().enumerate() {
                if let Some(&a) = queue.get(next[q]) {
                    if best.is_none_or(|(ba, _)| a < ba) {
                        best = Some((a, q));
                    }
                }
            }
            let Some((_, q)) = best else { break };
            out.push((q, next[q]));
            next[q] += 1;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.connectivity.left_count() != n || self.connectivity.right_count() != n {
            return Err(Error::DimensionMismatch {
                left: self.connectivity.left_count(),
                right: self.connectivity.right_count(),
            });
        }
        for (q, queue) in self.queues.iter().enumerate() {
            if queue.iter().any(|&a| a > self.current_slot) {
                return Err(Error::InvalidPolicy(format!("queue {q} holds a future packet")));
            }
            if queue.iter().zip(queue.iter().skip(1)).any(|(a, b)| a > b) {
                return Err(Error::InvalidPolicy(format!("queue {q} is not in arrival order")));
            }
        }
        Ok(())
    }
}

/// Per-server action: `None` is idle, `Some((queue, rank))` serves that packet.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScheduleDecision {
    pub servers: Vec<Option<(usize, usize)>>,
}

impl ScheduleDecision {
    pub fn idle(n: usize) -> Self {
        Self {
            servers: vec![None; n],
        }
    }

    /// Builds a decision from a server-to-queue assignment, handing out ranks
    /// within each queue in ascending server order.
    pub fn from_owners(owners: &[Option<usize>], n_queues: usize) -> Self {
        let mut next = vec![0usize; n_queues];
        let servers = owners
            .iter()
            .map(|o| {
                o.map(|q| {
                    next[q] += 1;
                    (q, next[q] - 1)
                })
            })
            .collect();
        Self { servers }
    }

    pub fn served_count(&self) -> usize {
        self.servers.iter().flatten().count()
    }

    /// Packets removed from each queue.
    pub fn served_per_queue(&self, n_queues: usize) -> Vec<usize> {
        let mut c = vec![0; n_queues];
        for &(q, _) in self.servers.iter().flatten() {
            c[q] += 1;
        }
        c
    }

    pub fn served_delays(&self, input: &PolicyInput<'_>) -> Vec<u64> {
        self.servers
            .iter()
            .flatten()
            .map(|&(q, r)| input.delay(q, r))
            .collect()
    }

    /// Checks the one-packet-per-server, ON-edge, distinctness and prefix rules.
    pub fn validate(&self, input: &PolicyInput<'_>) -> Result<()> {
        let n = input.n();
        if self.servers.len() != n {
            return Err(Error::InvalidPolicy(format!(
                "decision covers {} servers, expected {n}",
                self.servers.len()
            )));
        }
        let mut ranks: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, slot) in self.servers.iter().enumerate() {
            let Some((q, r)) = *slot else { continue };
            if q >= n || r >= input.queues[q].len() {
                return Err(Error::InvalidPolicy(format!(
                    "server {s} serves missing packet ({q}, {r})"
                )));
            }
            if !input.connectivity.get(q, s) {
                return Err(Error::InvalidPolicy(format!(
                    "server {s} serves queue {q} over an OFF channel"
                )));
            }
            ranks[q].push(r);
        }
        for (q, rs) in ranks.iter_mut().enumerate() {
            rs.sort_unstable();
            if rs.iter().enumerate().any(|(i, &r)| i != r) {
                return Err(Error::InvalidPolicy(format!(
                    "queue {q} served ranks {rs:?}, not a distinct prefix"
                )));
            }
        }
        Ok(())
    }
}

/// Largest `k` such that the `k` globally oldest packets can be served at once.
pub fn opf_k_star(input: &PolicyInput<'_>) -> usize {
    let mut set = ServeSet::new(input.connectivity);
    let mut k = 0;
    for (q, _) in input.oldest(input.n()) {
        if !set.try_add(q) {
            break;
        }
        k += 1;
    }
    k
}

pub fn decide_opf_exact(input: &PolicyInput<'_>) -> ScheduleDecision {
    let n = input.n();
    let mut set = ServeSet::new(input.connectivity);
    for (q, _) in input.oldest(n) {
        if !set.try_add(q) {
            break;
        }
    }
    ScheduleDecision::from_owners(set.owners(), n)
}

/// Candidate packets for weighted policies: the `min(n, len)` oldest of each
/// queue, listed in global age order.
fn weighted_candidates(input: &PolicyInput<'_>) -> Vec<(usize, usize)> {
    let n = input.n();
    let mut c: Vec<(usize, usize)> = (0..n)
        .flat_map(|q| (0..input.queues[q].len().min(n)).map(move |r| (q, r)))
        .collect();
    c.sort_by_key(|&(q, r)| (input.queues[q][r], q, r));
    c
}

/// Solves the packet-by-server problem with `primary` as the objective and
/// global age order as an exact tie-break, then canonicalizes the result
/// into per-queue prefixes.
fn decide_weighted(input: &PolicyInput<'_>, primary: impl Fn(usize, usize) -> u64) -> ScheduleDecision {
    let n = input.n();
    let cand = weighted_candidates(input);
    let m = cand.len();
    if m == 0 {
        return ScheduleDecision::idle(n);
    }
    // Tie-break terms sum to less than one unit of the scaled primary weight.
    let scale = (n * m + 1) as f64;
    let mut weights = Vec::with_capacity(m * n);
    for (pos, &(q, r)) in cand.iter().enumerate() {
        let w = primary(q, r) as f64 * scale + (m - 1 - pos) as f64;
        for s in 0..n {
            weights.push(input.connectivity.get(q, s).then_some(w));
        }
    }
    let problem = WeightedAssignmentProblem::new(m, n, weights).expect("weights are valid");
    let assignment = max_weight_matching(&problem);
    let mut demands = vec![0usize; n];
    for &(row, _) in &assignment.pairs {
        demands[cand[row].0] += 1;
    }
    let owners = serve_assignment(&demands, input.connectivity)
        .expect("an optimal assignment is itself a witness");
    ScheduleDecision::from_owners(&owners, n)
}

/// Delay-weighted matching: maximizes the sum of `delay + 1` over served packets.
pub fn decide_dwm(input: &PolicyInput<'_>) -> ScheduleDecision {
    decide_weighted(input, |q, r| input.delay(q, r) + 1)
}

/// Queue-length-weighted matching baseline.
pub fn decide_maxweight(input: &PolicyInput<'_>) -> ScheduleDecision {
    decide_weighted(input, |q, _| input.queues[q].len() as u64)
}

/// Serves every nonempty queue's HOL packet if the connectivity graph has a
/// perfect matching; returns the decision and `X_PM`.
pub fn decide_perfect_matching(input: &PolicyInput<'_>) -> (ScheduleDecision, bool) {
    let n = input.n();
    if !has_perfect_matching(input.connectivity).unwrap_or(false) {
        return (ScheduleDecision::idle(n), false);
    }
    let mut d = ScheduleDecision::idle(n);
    for &(q, s) in &max_cardinality_matching(input.connectivity).pairs {
        if !input.queues[q].is_empty() {
            d.servers[s] = Some((q, 0));
        }
    }
    (d, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub first_arrival: u64,
    /// `(queue, arrival slot)` in global age order.
    pub packets: Vec<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    h: u64,
    n0: usize,
    frames: VecDeque<Frame>,
}

impl FrameBuffer {
    pub fn new(n: usize, l: u32, h: u64) -> Result<Self> {
        let reserved = u64::from(l) * h;
        if reserved >= n as u64 {
            return Err(Error::InvalidPolicy(format!(
                "n0 = n \u{2212} Lh = {} not positive (n = {n}, L = {l}, h = {h})",
                n as i64 - reserved as i64
            )));
        }
        Ok(Self {
            h,
            n0: n - reserved as usize,
            frames: VecDeque::new(),
        })
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn frames(&self) -> &VecDeque<Frame> {
        &self.frames
    }

    /// Frames this slot's arrivals, queue by queue.
    pub fn push_arrivals(&mut self, slot: u64, counts: &[u32]) {
        for (q, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                let fits = self.frames.back().is_some_and(|f| {
                    slot - f.first_arrival <= self.h && f.packets.len() < self.n0
                });
                if !fits {
                    self.frames.push_back(Frame {
                        first_arrival: slot,
                        packets: Vec::new(),
                    });
                }
                self.frames.back_mut().expect("just ensured").packets.push((q, slot));
            }
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            let span_ok = f.packets.iter().all(|&(_, a)| a >= f.first_arrival && a - f.first_arrival <= self.h);
            if f.packets.is_empty() || f.packets.len() > self.n0 || !span_ok {
                return Err(Error::InvalidPolicy(format!("frame {i} breaks the span or size rule")));
            }
        }
        Ok(())
    }

    /// Serves the HOL frame whole if its packets can all be matched this slot;
    /// returns the decision and `X_F`.
    pub fn decide(&mut self, input: &PolicyInput<'_>) -> (ScheduleDecision, bool) {
        let n = input.n();
        let Some(front) = self.frames.front() else {
            return (ScheduleDecision::idle(n), true);
        };
        let mut demands = vec![0usize; n];
        for &(q, _) in &front.packets {
            demands[q] += 1;
        }
        match serve_assignment(&demands, input.connectivity) {
            Some(owners) => {
                self.frames.pop_front();
                (ScheduleDecision::from_owners(&owners, n), true)
            }
            None => (ScheduleDecision::idle(n), false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySpec {
    Opf,
    Dwm,
    /// `None` picks the largest usable `h` of at most one.
    Fbs { h: Option<u64> },
    Pm,
    MaxWeight,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Opf => "opf",
            PolicySpec::Dwm => "dwm",
            PolicySpec::Fbs { .. } => "fbs",
            PolicySpec::Pm => "pm",
            PolicySpec::MaxWeight => "maxweight",
        }
    }

    /// Frame span for FBS given `n` and `L`.
    pub fn resolve_h(&self, n: usize, l: u32) -> Option<u64> {
        match self {
            PolicySpec::Fbs { h: Some(h) } => Some(*h),
            PolicySpec::Fbs { h: None } => Some(u64::from(n > l as usize)),
            _ => None,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Fbs { h: Some(h) } => write!(f, "fbs({h})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A policy with whatever state it carries between slots.
#[derive(Debug, Clone)]
pub struct Scheduler {
    spec: PolicySpec,
    frames: Option<FrameBuffer>,
}

/// Result of one slot's decision.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub decision: ScheduleDecision,
    /// `X_F` for FBS, `X_PM` for perfect matching.
    pub success: Option<bool>,
}

impl Scheduler {
    pub fn new(spec: PolicySpec, n: usize, l: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPolicy("need at least one queue".into()));
        }
        let frames = match spec.resolve_h(n, l) {
            Some(h) => Some(FrameBuffer::new(n, l, h)?),
            None => None,
        };
        Ok(Self { spec, frames })
    }

    pub fn spec(&self) -> PolicySpec {
        self.spec
    }

    pub fn frames(&self) -> Option<&FrameBuffer> {
        self.frames.as_ref()
    }

    /// Registers this slot's arrivals; call before [`decide`](Self::decide).
    pub fn on_arrivals(&mut self, slot: u64, counts: &[u32]) {
        if let Some(fb) = self.frames.as_mut() {
            fb.push_arrivals(slot, counts);
        }
    }

    pub fn decide(&mut self, input: &PolicyInput<'_>) -> SlotOutcome {
        let (decision, success) = match self.spec {
            PolicySpec::Opf => (decide_opf_exact(input), None),
            PolicySpec::Dwm => (decide_dwm(input), None),
            PolicySpec::MaxWeight => (decide_maxweight(input), None),
            PolicySpec::Pm => {
                let (d, x) = decide_perfect_matching(input);
                (d, Some(x))
            }
            PolicySpec::Fbs { .. } => {
                let (d, x) = self.frames.as_mut().expect("fbs has a buffer").decide(input);
                (d, Some(x))
            }
        };
        SlotOutcome { decision, success }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpfVerdict {
    pub k_star: usize,
    pub is_opf: bool,
}

/// A decision is OPF when it serves at least `k*` packets and its `k*`
/// largest served delays coincide with the delays of the `k*` oldest packets.
pub fn verify_opf(input: &PolicyInput<'_>, decision: &ScheduleDecision) -> OpfVerdict {
    let k_star = opf_k_star(input);
    let mut served = decision.served_delays(input);
    served.sort_unstable_by(|a, b| b.cmp(a));
    let oldest: Vec<u64> = input
        .oldest(k_star)
        .into_iter()
        .map(|(q, r)| input.delay(q, r))
        .collect();
    let is_opf = served.len() >= k_star && served[..k_star] == oldest[..];
    OpfVerdict { k_star, is_opf }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn queues(v: &[&[u64]]) -> Vec<VecDeque<u64>> {
        v.iter().map(|q| q.iter().copied().collect()).collect()
    }

    fn graph(rows: &[&[u8]]) -> BipartiteGraph {
        BipartiteGraph::from_rows(
            &rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn opf_single_packet() {
        let qs = queues(&[&[3], &[]]);
        let g = graph(&[&[0, 1], &[0, 0]]);
        let input = PolicyInput { current_slot: 5, queues: &qs, connectivity: &g };
        let d = decide_opf_exact(&input);
        assert_eq!(d.servers, vec![None, Some((0, 0))]);
        assert_eq!(opf_k_star(&input), 1);
    }

    #[test]
    fn opf_stops_at_first_infeasible_prefix() {
        let qs = queues(&[&[1, 2], &[3]]);
        let g = graph(&[&[1, 0], &[0, 1]]);
        let input = PolicyInput { current_slot: 5, queues: &qs, connectivity: &g };
        assert_eq!(opf_k_star(&input), 1);
        let d = decide_opf_exact(&input);
        assert_eq!(d.served_count(), 1);
        assert_eq!(d.servers[0], Some((0, 0)));
        assert!(verify_opf(&input, &d).is_opf);
    }

    #[test]
    fn all_off_is_idle() {
        let qs = queues(&[&[0, 1], &[1]]);
        let g = BipartiteGraph::empty(2, 2);
        let input = PolicyInput { current_slot: 3, queues: &qs, connectivity: &g };
        assert_eq!(decide_opf_exact(&input), ScheduleDecision::idle(2));
        assert_eq!(decide_dwm(&input), ScheduleDecision::idle(2));
        assert_eq!(decide_perfect_matching(&input), (ScheduleDecision::idle(2), false));
    }

    #[test]
    fn dwm_single_queue() {
        let qs = queues(&[&[1, 3, 5], &[], &[]]);
        let g = graph(&[&[1, 1, 0], &[0, 0, 0], &[0, 0, 0]]);
        let input = PolicyInput { current_slot: 5, queues: &qs, connectivity: &g };
        let d = decide_dwm(&input);
        d.validate(&input).unwrap();
        assert_eq!(d.served_count(), 2);
        assert_eq!(d.served_delays(&input).iter().sum::<u64>(), 6);
    }

    #[test]
    fn dwm_symmetric_tie_break() {
        let qs = queues(&[&[2], &[2]]);
        let g = BipartiteGraph::complete(2, 2);
        let input = PolicyInput { current_slot: 4, queues: &qs, connectivity: &g };
        assert_eq!(decide_dwm(&input).servers, vec![Some((0, 0)), Some((1, 0))]);
    }

    #[test]
    fn pm_examples() {
        let qs = queues(&[&[0], &[1], &[2]]);
        let id = graph(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]);
        let input = PolicyInput { current_slot: 3, queues: &qs, connectivity: &id };
        let (d, x) = decide_perfect_matching(&input);
        assert!(x);
        assert_eq!(d.served_count(), 3);

        let off_row = graph(&[&[1, 1, 1], &[0, 0, 0], &[1, 1, 1]]);
        let input = PolicyInput { current_slot: 3, queues: &qs, connectivity: &off_row };
        assert_eq!(decide_perfect_matching(&input), (ScheduleDecision::idle(3), false));

        let partial = queues(&[&[0], &[], &[2]]);
        let input = PolicyInput { current_slot: 3, queues: &partial, connectivity: &id };
        let (d, x) = decide_perfect_matching(&input);
        assert!(x);
        assert_eq!(d.served_count(), 2);
        d.validate(&input).unwrap();
    }

    #[test]
    fn pm_behind_older_packet_is_not_opf() {
        let qs = queues(&[&[0, 1], &[5]]);
        let g = graph(&[&[1, 1], &[0, 1]]);
        let input = PolicyInput { current_slot: 5, queues: &qs, connectivity: &g };
        let (d, x) = decide_perfect_matching(&input);
        assert!(x);
        let v = verify_opf(&input, &d);
        assert_eq!(v.k_star, 2);
        assert!(!v.is_opf);
        assert!(verify_opf(&input, &decide_dwm(&input)).is_opf);
    }

    #[test]
    fn fbs_frames_and_service() {
        let mut fb = FrameBuffer::new(10, 5, 1).unwrap();
        assert_eq!(fb.n0(), 5);
        let mut counts = vec![0u32; 10];
        counts[0] = 5;
        counts[3] = 1;
        fb.push_arrivals(0, &counts);
        let sizes: Vec<usize> = fb.frames().iter().map(|f| f.packets.len()).collect();
        assert_eq!(sizes, vec![5, 1]);
        fb.check_invariants().unwrap();

        // HOL frame sits in queue 0; five ON servers for it.
        let mut qs = vec![VecDeque::new(); 10];
        qs[0].extend([0u64; 5]);
        qs[3].push_back(0);
        let mut g = BipartiteGraph::empty(10, 10);
        for s in 0..5 {
            g.set(0, s, true);
        }
        let input = PolicyInput { current_slot: 0, queues: &qs, connectivity: &g };
        let (d, x) = fb.decide(&input);
        assert!(x);
        assert_eq!(d.served_per_queue(10)[0], 5);
        d.validate(&input).unwrap();
        assert_eq!(fb.frames().len(), 1);

        // Frame (queue 3) cannot be served: nothing is served at all.
        qs[0].clear();
        qs[3].push_back(0);
        let input = PolicyInput { current_slot: 1, queues: &qs, connectivity: &g };
        let (d, x) = fb.decide(&input);
        assert!(!x);
        assert_eq!(d.served_count(), 0);
    }

    #[test]
    fn fbs_rejects_nonpositive_n0() {
        let err = FrameBuffer::new(10, 5, 2).unwrap_err();
        assert!(err.to_string().contains("not positive"));
        assert!(Scheduler::new(PolicySpec::Fbs { h: None }, 4, 5).is_ok());
    }

    fn random_input(rng: &mut ChaCha8Rng, n: usize) -> (Vec<VecDeque<u64>>, BipartiteGraph, u64) {
        let now = 8;
        let qs: Vec<VecDeque<u64>> = (0..n)
            .map(|_| {
                let len = rng.random_range(0..=3);
                let mut v: Vec<u64> = (0..len).map(|_| rng.random_range(0..=now)).collect();
                v.sort_unstable();
                v.into()
            })
            .collect();
        let p = rng.random_range(0.2..0.9);
        let mut g = BipartiteGraph::empty(n, n);
        for i in 0..n {
            for j in 0..n {
                g.set(i, j, rng.random_bool(p));
            }
        }
        (qs, g, now)
    }

    /// Exhaustive max of `sum (delay + 1)` over packet-to-server assignments.
    fn brute_dwm(input: &PolicyInput<'_>) -> u64 {
        let n = input.n();
        let cand: Vec<(usize, usize)> = (0..n)
            .flat_map(|q| (0..input.queues[q].len().min(n)).map(move |r| (q, r)))
            .collect();
        fn go(s: usize, input: &PolicyInput<'_>, cand: &[(usize, usize)], used: &mut Vec<bool>) -> u64 {
            if s == input.n() {
                return 0;
            }
            let mut best = go(s + 1, input, cand, used);
            for (i, &(q, r)) in cand.iter().enumerate() {
                if !used[i] && input.connectivity.get(q, s) {
                    used[i] = true;
                    best = best.max(input.delay(q, r) + 1 + go(s + 1, input, cand, used));
                    used[i] = false;
                }
            }
            best
        }
        go(0, input, &cand, &mut vec![false; cand.len()])
    }

    #[test]
    fn dwm_matches_brute_force_and_is_opf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let (qs, g, now) = random_input(&mut rng, n);
            let input = PolicyInput { current_slot: now, queues: &qs, connectivity: &g };
            for d in [decide_dwm(&input), decide_opf_exact(&input), decide_maxweight(&input)] {
                d.validate(&input).unwrap();
            }
            let d = decide_dwm(&input);
            let weight: u64 = d.served_delays(&input).iter().map(|x| x + 1).sum();
            assert_eq!(weight, brute_dwm(&input));
            assert!(verify_opf(&input, &d).is_opf);
            assert!(verify_opf(&input, &decide_opf_exact(&input)).is_opf);
        }
    }
}
