//! Per-queue arrival processes and their cumulant generating functions.

use std::fmt;

use rand::Rng;

use crate::dist::sample_table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalKind {
    /// `L` packets with probability `mu`, none otherwise.
    BatchBernoulli { l: u32, mu: f64 },
    /// i.i.d. per-slot counts, `pmf[a] = P(A = a)` for `a = 0..=L`.
    GeneralIid { pmf: Vec<f64> },
    /// Two-state modulated counts. The modulating chain moves 0→1 with
    /// probability `a01` and 1→0 with probability `a10`; in each slot the
    /// count is drawn from the current state's pmf, then the state moves.
    TwoStateMm {
        a01: f64,
        a10: f64,
        pmf: [Vec<f64>; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    kind: ArrivalKind,
    max_batch: u32,
}

/// Modulating state of every queue; empty for i.i.d. kinds.
#[derive(Debug, Clone, Default)]
pub struct ArrivalState {
    states: Vec<u8>,
}

impl ArrivalProcess {
    pub fn batch(l: u32, mu: f64) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArrivals("batch size L must be at least 1".into()));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidArrivals(format!(
                "batch probability must lie in (0, 1], got {mu}"
            )));
        }
        Self::validated(ArrivalKind::BatchBernoulli { l, mu }, l)
    }

    pub fn iid(pmf: Vec<f64>) -> Result<Self> {
        let pmf = check_pmf(pmf)?;
        let l = (pmf.len() - 1) as u32;
        Self::validated(ArrivalKind::GeneralIid { pmf }, l)
    }

    pub fn two_state(a01: f64, a10: f64, pmf0: Vec<f64>, pmf1: Vec<f64>) -> Result<Self> {
        for (name, p) in [("a01", a01), ("a10", a10)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArrivals(format!(
                    "{name} must lie in (0, 1], got {p}"
                )));
            }
        }
        let (mut pmf0, mut pmf1) = (check_pmf(pmf0)?, check_pmf(pmf1)?);
        let len = pmf0.len().max(pmf1.len());
        pmf0.resize(len, 0.0);
        pmf1.resize(len, 0.0);
        let l = (len - 1) as u32;
        // A run of all-L slots needs a state that emits L and can stay put.
        let stay = [1.0 - a01, 1.0 - a10];
        let pmf = [pmf0, pmf1];
        if !(0..2).any(|s| pmf[s][len - 1] > 0.0 && stay[s] > 0.0) {
            return Err(Error::InvalidArrivals(
                "no state can emit L arrivals in consecutive slots".into(),
            ));
        }
        Self::validated(ArrivalKind::TwoStateMm { a01, a10, pmf }, l)
    }

    fn validated(kind: ArrivalKind, max_batch: u32) -> Result<Self> {
        Ok(Self { kind, max_batch })
    }

    /// Errors unless the mean rate is below one packet per slot. Simulation
    /// configs require this; the rate-function calculator does not.
    pub fn check_stable(&self) -> Result<()> {
        let rate = self.mean_rate();
        if rate >= 1.0 {
            return Err(Error::InvalidArrivals(format!(
                "mean arrival rate {rate} per queue must be below 1"
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> &ArrivalKind {
        &self.kind
    }

    /// Largest per-slot count `L`.
    pub fn max_batch(&self) -> u32 {
        self.max_batch
    }

    /// Stationary mean arrivals per slot per queue.
    pub fn mean_rate(&self) -> f64 {
        match &self.kind {
            ArrivalKind::BatchBernoulli { l, mu } => *l as f64 * mu,
            ArrivalKind::GeneralIid { pmf } => pmf_mean(pmf),
            ArrivalKind::TwoStateMm { a01, a10, pmf } => {
                let pi1 = a01 / (a01 + a10);
                (1.0 - pi1) * pmf_mean(&pmf[0]) + pi1 * pmf_mean(&pmf[1])
            }
        }
    }

    /// Batch probability for batch processes, mean rate otherwise.
    pub fn label_mu(&self) -> f64 {
        match &self.kind {
            ArrivalKind::BatchBernoulli { mu, .. } => *mu,
            _ => self.mean_rate(),
        }
    }

    /// Single-slot pmf for i.i.d. kinds.
    pub fn slot_pmf(&self) -> Option<Vec<f64>> {
        match &self.kind {
            ArrivalKind::BatchBernoulli { l, mu } => {
                let mut pmf = vec![0.0; *l as usize + 1];
                pmf[0] = 1.0 - mu;
                pmf[*l as usize] += mu;
                Some(pmf)
            }
            ArrivalKind::GeneralIid { pmf } => Some(pmf.clone()),
            ArrivalKind::TwoStateMm { .. } => None,
        }
    }

    pub fn is_iid(&self) -> bool {
        !matches!(self.kind, ArrivalKind::TwoStateMm { .. })
    }

    /// Draws the modulating states of `n` queues from the stationary law.
    pub fn init_state<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ArrivalState {
        match &self.kind {
            ArrivalKind::TwoStateMm { a01, a10, .. } => {
                let pi1 = a01 / (a01 + a10);
                ArrivalState {
                    states: (0..n).map(|_| u8::from(rng.random::<f64>() < pi1)).collect(),
                }
            }
            _ => ArrivalState::default(),
        }
    }

    /// Fills `out[i]` with the arrivals of queue `i` in one slot.
    pub fn sample_slot<R: Rng + ?Sized>(
        &self,
        state: &mut ArrivalState,
        out: &mut [u32],
        rng: &mut R,
    ) {
        match &self.kind {
            ArrivalKind::BatchBernoulli { l, mu } => {
                for a in out.iter_mut() {
                    *a = if rng.random::<f64>() < *mu { *l } else { 0 };
                }
            }
            ArrivalKind::GeneralIid { pmf } => {
                for a in out.iter_mut() {
                    *a = sample_table(pmf, rng) as u32;
                }
            }
            ArrivalKind::TwoStateMm { a01, a10, pmf } => {
                debug_assert_eq!(state.states.len(), out.len());
                for (a, s) in out.iter_mut().zip(state.states.iter_mut()) {
                    *a = sample_table(&pmf[*s as usize], rng) as u32;
                    let flip = if *s == 0 { *a01 } else { *a10 };
                    if rng.random::<f64>() < flip {
                        *s ^= 1;
                    }
                }
            }
        }
    }

    /// `log E[exp(theta * A(-t+1, 0))]` for one queue.
    pub fn cumulant(&self, t: u32, theta: f64) -> f64 {
        self.cumulant_with_slope(t, theta).0
    }

    /// Cumulant and its derivative in `theta`.
    pub fn cumulant_with_slope(&self, t: u32, theta: f64) -> (f64, f64) {
        let (rest, slope) = self.scaled_cumulant(t, theta);
        (t as f64 * theta * self.max_batch as f64 + rest, slope)
    }

    /// `(lambda(theta) - theta L t, lambda'(theta))`. The first entry is
    /// evaluated without ever forming `e^{theta L}`, so it stays finite for
    /// large `theta`.
    pub fn scaled_cumulant(&self, t: u32, theta: f64) -> (f64, f64) {
        assert!(t >= 1, "window must span at least one slot");
        let l = self.max_batch as f64;
        match &self.kind {
            ArrivalKind::TwoStateMm { a01, a10, pmf } => {
                let trans = [[1.0 - a01, *a01], [*a10, 1.0 - a10]];
                let pi1 = a01 / (a01 + a10);
                let (m, dm) = scaled_mgf_pair(pmf, theta, l);
                // v carries E[e^{theta(A - L t)}; state], dv its derivative.
                let mut v = [(1.0 - pi1) * m[0], pi1 * m[1]];
                let mut dv = [(1.0 - pi1) * dm[0], pi1 * dm[1]];
                let mut log_scale = 0.0;
                for _ in 1..t {
                    let c = v[0] + v[1];
                    log_scale += c.ln();
                    let (w, dw) = ([v[0] / c, v[1] / c], [dv[0] / c, dv[1] / c]);
                    for s in 0..2 {
                        let inflow = w[0] * trans[0][s] + w[1] * trans[1][s];
                        let dinflow = dw[0] * trans[0][s] + dw[1] * trans[1][s];
                        v[s] = inflow * m[s];
                        dv[s] = dinflow * m[s] + inflow * dm[s];
                    }
                }
                let total = v[0] + v[1];
                (log_scale + total.ln(), t as f64 * l + (dv[0] + dv[1]) / total)
            }
            _ => {
                let pmf = self.slot_pmf().expect("i.i.d. kind");
                let (m, dm) = scaled_mgf(&pmf, theta, l);
                let t = t as f64;
                (t * m.ln(), t * (l + dm / m))
            }
        }
    }

    /// `log P(A(-t+1, 0) = L t)`.
    pub fn log_prob_all_max(&self, t: u32) -> f64 {
        let l = self.max_batch as usize;
        match &self.kind {
            ArrivalKind::TwoStateMm { a01, a10, pmf } => {
                let trans = [[1.0 - a01, *a01], [*a10, 1.0 - a10]];
                let pi1 = a01 / (a01 + a10);
                let emit = [pmf[0][l], pmf[1][l]];
                let mut v = [(1.0 - pi1) * emit[0], pi1 * emit[1]];
                let mut log_scale = 0.0;
                for _ in 1..t {
                    let c = v[0] + v[1];
                    if c == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    log_scale += c.ln();
                    let w = [v[0] / c, v[1] / c];
                    for s in 0..2 {
                        v[s] = (w[0] * trans[0][s] + w[1] * trans[1][s]) * emit[s];
                    }
                }
                log_scale + (v[0] + v[1]).ln()
            }
            _ => {
                let pmf = self.slot_pmf().expect("i.i.d. kind");
                t as f64 * pmf[l].ln()
            }
        }
    }
}

impl fmt::Display for ArrivalProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
        match &self.kind {
            ArrivalKind::BatchBernoulli { l, mu } => write!(f, "batch({l}, {mu})"),
            ArrivalKind::GeneralIid { pmf } => write!(f, "pmf({})", list(pmf)),
            ArrivalKind::TwoStateMm { a01, a10, pmf } => write!(
                f,
                "mm2({a01}, {a10}, [{}], [{}])",
                list(&pmf[0]),
                list(&pmf[1])
            ),
        }
    }
}

fn check_pmf(mut pmf: Vec<f64>) -> Result<Vec<f64>> {
    if pmf.is_empty() || pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArrivals(
            "pmf entries must be finite, nonnegative, and nonempty".into(),
        ));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArrivals(format!("pmf sums to {total}, expected 1")));
    }
    pmf.iter_mut().for_each(|p| *p /= total);
    while pmf.len() > 1 && pmf.last() == Some(&0.0) {
        pmf.pop();
    }
    Ok(pmf)
}

fn pmf_mean(pmf: &[f64]) -> f64 {
    pmf.iter().enumerate().map(|(a, p)| a as f64 * p).sum()
}

/// `sum_a pmf(a) e^{theta (a - L)}` and its theta-derivative.
fn scaled_mgf(pmf: &[f64], theta: f64, l: f64) -> (f64, f64) {
    let (mut m, mut dm) = (0.0, 0.0);
    for (a, p) in pmf.iter().enumerate() {
        if *p > 0.0 {
            let shift = a as f64 - l;
            let w = p * (theta * shift).exp();
            m += w;
            dm += shift * w;
        }
    }
    (m, dm)
}

fn scaled_mgf_pair(pmf: &[Vec<f64>; 2], theta: f64, l: f64) -> ([f64; 2], [f64; 2]) {
    let (m0, d0) = scaled_mgf(&pmf[0], theta, l);
    let (m1, d1) = scaled_mgf(&pmf[1], theta, l);
    ([m0, m1], [d0, d1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_sampling_frequencies() {
        let p = ArrivalProcess::batch(5, 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = p.init_state(10, &mut rng);
        let mut out = [0u32; 10];
        let slots = 100_000;
        let (mut fives, mut total) = (0u64, 0u64);
        for _ in 0..slots {
            p.sample_slot(&mut state, &mut out, &mut rng);
            for a in out {
                assert!(a == 0 || a == 5);
                fives += u64::from(a == 5);
                total += u64::from(a);
            }
        }
        let draws = (slots * 10) as f64;
        let se = (0.15 * 0.85 / draws).sqrt();
        assert!((fives as f64 / draws - 0.15).abs() < 3.0 * se);
        let mean_se = 5.0 * se;
        assert!((total as f64 / draws - 0.75).abs() < 3.0 * mean_se);
    }

    #[test]
    fn degenerate_zero_pmf() {
        let p = ArrivalProcess::iid(vec![1.0]).unwrap();
        assert_eq!(p.max_batch(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = p.init_state(4, &mut rng);
        let mut out = [9u32; 4];
        for _ in 0..1000 {
            p.sample_slot(&mut state, &mut out, &mut rng);
            assert_eq!(out, [0; 4]);
        }
    }

    #[test]
    fn cumulant_examples() {
        let p = ArrivalProcess::batch(5, 0.15).unwrap();
        assert!(p.cumulant(1, 0.0).abs() < 1e-15);
        let direct = 2.0 * (0.85 + 0.15 * (0.5f64).exp()).ln();
        // Two-slot joint pmf enumeration.
        let mut mgf = 0.0;
        for a1 in [0.0, 5.0] {
            for a2 in [0.0, 5.0] {
                let pr = |a: f64| if a == 0.0 { 0.85 } else { 0.15 };
                mgf += pr(a1) * pr(a2) * (0.1 * (a1 + a2)).exp();
            }
        }
        assert!((p.cumulant(2, 0.1) - direct).abs() < 1e-12);
        assert!((p.cumulant(2, 0.1) - mgf.ln()).abs() < 1e-12);

        let g = ArrivalProcess::iid(vec![0.5, 0.5]).unwrap();
        assert!((g.cumulant(1, 3f64.ln()) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cumulant_is_convex_and_linear_in_t() {
        let procs = [
            ArrivalProcess::batch(5, 0.15).unwrap(),
            ArrivalProcess::iid(vec![0.6, 0.2, 0.1, 0.1]).unwrap(),
        ];
        for p in &procs {
            let h = 0.05;
            for k in 1..200 {
                let th = k as f64 * h;
                let second = p.cumulant(3, th + h) - 2.0 * p.cumulant(3, th) + p.cumulant(3, th - h);
                assert!(second >= -1e-9);
                for t in 1..6 {
                    let per_slot = p.cumulant(t, th) / t as f64;
                    assert!((per_slot - p.cumulant(1, th)).abs() < 1e-12);
                }
            }
        }
        let mm = ArrivalProcess::two_state(0.2, 0.3, vec![0.9, 0.1], vec![0.2, 0.3, 0.5]).unwrap();
        for k in 1..100 {
            let th = k as f64 * 0.05;
            let second = mm.cumulant(4, th + 0.05) - 2.0 * mm.cumulant(4, th) + mm.cumulant(4, th - 0.05);
            assert!(second >= -1e-9);
        }
    }

    #[test]
    fn two_state_cumulant_matches_path_enumeration() {
        let (a01, a10) = (0.2, 0.3);
        let pmf = [vec![0.9, 0.1, 0.0], vec![0.2, 0.3, 0.5]];
        let mm = ArrivalProcess::two_state(a01, a10, pmf[0].clone(), pmf[1].clone()).unwrap();
        let pi1 = a01 / (a01 + a10);
        let trans = [[1.0 - a01, a01], [a10, 1.0 - a10]];
        let t = 3;
        let theta = 0.7;
        // Sum over every state path of the product of per-slot mgfs.
        let mgf = |s: usize| -> f64 {
            pmf[s].iter().enumerate().map(|(a, p)| p * (theta * a as f64).exp()).sum()
        };
        let mut total = 0.0;
        for path in 0..(1 << t) {
            let states: Vec<usize> = (0..t).map(|i| (path >> i) & 1).collect();
            let mut pr = if states[0] == 1 { pi1 } else { 1.0 - pi1 };
            let mut m = mgf(states[0]);
            for i in 1..t {
                pr *= trans[states[i - 1]][states[i]];
                m *= mgf(states[i]);
            }
            total += pr * m;
        }
        assert!((mm.cumulant(t as u32, theta) - total.ln()).abs() < 1e-12);
        // slope via central difference
        let h = 1e-5;
        let fd = (mm.cumulant(3, theta + h) - mm.cumulant(3, theta - h)) / (2.0 * h);
        assert!((mm.cumulant_with_slope(3, theta).1 - fd).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        assert!(ArrivalProcess::batch(1, 1.0).unwrap().check_stable().is_err());
        assert!(ArrivalProcess::batch(5, 0.2).unwrap().check_stable().is_err());
        assert!(ArrivalProcess::batch(5, 0.15).unwrap().check_stable().is_ok());
        assert!(ArrivalProcess::batch(0, 0.5).is_err());
        assert!(ArrivalProcess::iid(vec![0.5, 0.6]).is_err());
        assert!(ArrivalProcess::iid(vec![0.2, 0.3, 0.5]).unwrap().check_stable().is_err());
        assert!(ArrivalProcess::two_state(0.5, 0.5, vec![1.0], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn samples_never_exceed_max_batch() {
        let p = ArrivalProcess::two_state(0.1, 0.2, vec![0.8, 0.2], vec![0.5, 0.3, 0.1, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = p.init_state(8, &mut rng);
        let mut out = [0u32; 8];
        for _ in 0..100_000 {
            p.sample_slot(&mut state, &mut out, &mut rng);
            assert!(out.iter().all(|a| *a <= p.max_batch()));
        }
    }
}
