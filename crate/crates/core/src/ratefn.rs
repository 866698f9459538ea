//! Analytic rate-function bounds: `I_A`, `q_hat`, `q_tilde`, the upper bound
//! `I_U(b)`, the achievable bound `I_0(b)` and the finite-n service bounds.

use std::fmt;

use num_rational::Ratio;

use crate::arrivals::ArrivalProcess;
use crate::channel::{condition_a_check, ChannelSpec, ConditionA};
use crate::dist::DiscretePositiveDist;
use crate::error::{Error, Result};

/// Default largest `t` scanned by the infimum over `t > t_x`.
pub const DEFAULT_T_MAX: u32 = 200;
/// Number of trailing evaluations that must increase for a certified infimum.
const TAIL_CHECK: usize = 20;
/// Tolerance of the optimality identity check.
pub const IDENTITY_TOL: f64 = 1e-9;

/// `sup_{theta > 0} [theta (t + x) - lambda_t(theta)]` for one queue's arrivals.
pub fn i_a(proc: &ArrivalProcess, t: u32, x: f64) -> f64 {
    assert!(t >= 1, "t must be a positive integer");
    assert!(x >= 0.0, "x must be nonnegative");
    let target = t as f64 + x;
    let cap = proc.max_batch() as f64 * t as f64;
    let excess = target - cap;
    if excess.abs() <= 1e-12 * cap.max(1.0) {
        return -proc.log_prob_all_max(t);
    }
    if excess > 0.0 {
        return f64::INFINITY;
    }
    let slope = |theta: f64| proc.scaled_cumulant(t, theta).1;
    if target <= slope(0.0) {
        return 0.0;
    }
    let mut hi = 1.0f64;
    while slope(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let rest = proc.scaled_cumulant(t, theta).0;
    (theta * excess - rest).max(0.0)
}

/// `t_x = x / (L - 1)` as an exact fraction.
pub fn t_x(l: u32, x: u64) -> Result<Ratio<u64>> {
    if l <= 1 {
        return Err(Error::UnitBatch);
    }
    Ok(Ratio::new(x, u64::from(l - 1)))
}

/// `{c in 1..=b : (b - c) / (L - 1) is a positive integer}`.
pub fn psi_b(l: u32, b: u64) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for c in 1..=b {
        let t = t_x(l, b - c)?;
        if t.is_integer() && *t.numer() > 0 {
            out.push(c);
        }
    }
    Ok(out)
}

/// `min(min_k P(D = k+1) / P(D > k), min_k P(U > k+1) / P(U > k))`.
pub fn q_hat(on_dist: &DiscretePositiveDist, off_dist: &DiscretePositiveDist) -> f64 {
    off_dist.min_off_hazard().min(on_dist.min_on_survival_ratio())
}

/// The OFF-hazard floor alone.
pub fn q_tilde(off_dist: &DiscretePositiveDist) -> f64 {
    off_dist.min_off_hazard()
}

/// `-ln(1 - q)`; `+inf` for `q = 1`.
fn log_inv_complement(q: f64) -> f64 {
    -(-q).ln_1p()
}

/// `k * ln(1 / (1 - q))`, with `0 * inf` taken as 0.
fn scaled_log_factor(k: u64, q: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * log_inv_complement(q)
    }
}

/// Infimum of `I_A(t, x)` over integers `t` in `(x / (L - 1), t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfOverT {
    pub value: f64,
    pub argmin: u32,
    /// Whether the last evaluated values were strictly increasing.
    pub certified: bool,
}

pub fn inf_i_a(proc: &ArrivalProcess, x: u64, t_max: u32) -> InfOverT {
    let l = proc.max_batch();
    assert!(l > 1, "the infimum over t > t_x needs L > 1");
    let start = u32::try_from(x / u64::from(l - 1) + 1).expect("t fits in u32");
    let end = t_max.max(start + TAIL_CHECK as u32);
    let values: Vec<f64> = (start..=end).map(|t| i_a(proc, t, x as f64)).collect();
    let (pos, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty range");
    let tail = &values[values.len() - TAIL_CHECK..];
    let certified = tail.windows(2).all(|w| w[1] > w[0]);
    InfOverT {
        value,
        argmin: start + pos as u32,
        certified,
    }
}

/// Which candidate attained a bound's minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    /// A packet blocked by OFF channels for `b + 1` slots.
    Chi1,
    /// A burst over `t > t_{b-c}` slots followed by `c` blocked slots.
    Chi2 { c: u64, t: u32 },
    /// A saturating burst over exactly `t_{b-c}` slots and `c` blocked slots.
    Chi3 { c: u64, t: u32 },
    /// The `L = 1` closed form.
    UnitBatch,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Chi1 => write!(f, "chi1"),
            Term::Chi2 { c, t } => write!(f, "chi2(c={c},t={t})"),
            Term::Chi3 { c, t } => write!(f, "chi3(c={c},t={t})"),
            Term::UnitBatch => write!(f, "unit-batch"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub term: Term,
    /// False if any infimum over `t` could not be certified.
    pub certified: bool,
}

/// Shared skeleton of `I_U` and `I_0`; `log_block(k)` is the channel cost of
/// keeping one queue disconnected for `k` further slots.
fn evaluate_bound(
    b: u64,
    proc: &ArrivalProcess,
    pi0: f64,
    t_max: u32,
    log_block: impl Fn(u64) -> f64,
) -> BoundValue {
    let neg_log_pi0 = -pi0.ln();
    let chi1 = neg_log_pi0 + log_block(b);
    let l = proc.max_batch();
    if l <= 1 {
        return BoundValue {
            value: chi1,
            term: Term::UnitBatch,
            certified: true,
        };
    }
    let mut best = BoundValue {
        value: chi1,
        term: Term::Chi1,
        certified: true,
    };
    let consider = |value: f64, term: Term, certified: bool, best: &mut BoundValue| {
        best.certified &= certified;
        if value < best.value {
            best.value = value;
            best.term = term;
        }
    };
    for c in 0..=b {
        let inf = inf_i_a(proc, b - c, t_max);
        let value = if c == 0 {
            inf.value
        } else {
            inf.value + neg_log_pi0 + log_block(c - 1)
        };
        consider(value, Term::Chi2 { c, t: inf.argmin }, inf.certified, &mut best);
    }
    for c in psi_b(l, b).expect("L > 1") {
        let t = t_x(l, b - c).expect("L > 1").to_integer() as u32;
        let value = i_a(proc, t, (b - c) as f64) + neg_log_pi0 + log_block(c);
        consider(value, Term::Chi3 { c, t }, true, &mut best);
    }
    best
}

/// Upper bound `I_U(b)` on the rate-function of any policy.
pub fn i_upper(
    b: u64,
    proc: &ArrivalProcess,
    on_dist: &DiscretePositiveDist,
    off_dist: &DiscretePositiveDist,
) -> BoundValue {
    let pi0 = crate::channel::pi0(on_dist, off_dist);
    evaluate_bound(b, proc, pi0, DEFAULT_T_MAX, |k| off_dist.log_max_survival_ratio(k))
}

/// Achievable bound `I_0(b)` for OPF policies, with `q_tilde` in place of
/// `q_hat` when `use_q_tilde` is set.
pub fn i_lower(
    b: u64,
    proc: &ArrivalProcess,
    on_dist: &DiscretePositiveDist,
    off_dist: &DiscretePositiveDist,
    use_q_tilde: bool,
) -> BoundValue {
    let pi0 = crate::channel::pi0(on_dist, off_dist);
    let q = if use_q_tilde {
        q_tilde(off_dist)
    } else {
        q_hat(on_dist, off_dist)
    };
    evaluate_bound(b, proc, pi0, DEFAULT_T_MAX, |k| scaled_log_factor(k, q))
}

/// `ln(p10) / ln(1 - p01)` for a negatively correlated Markov channel.
pub fn markov_fraction_bound(p01: f64, p10: f64) -> Result<f64> {
    let sum = p01 + p10;
    if sum <= 1.0 {
        return Err(Error::NotNegativelyCorrelated { sum });
    }
    Ok(p10.ln() / (-p01).ln_1p())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFnReport {
    pub b: u64,
    pub i_upper: BoundValue,
    /// `I_0(b)`, using `q_tilde` exactly when condition A holds.
    pub i_lower: BoundValue,
    pub uses_q_tilde: bool,
    pub q_hat: f64,
    pub q_tilde: f64,
    pub pi0: f64,
    pub condition_a: ConditionA,
    pub condition_b: bool,
    pub optimal: bool,
    pub fraction_bound: Option<f64>,
}

/// Both bounds plus the optimality verdict for one threshold.
pub fn optimality_check(b: u64, proc: &ArrivalProcess, channel: &ChannelSpec) -> RateFnReport {
    let (on, off) = channel.dists();
    let condition_a = condition_a_check(channel);
    let condition_b = channel.condition_b();
    let uses_q_tilde = condition_a == ConditionA::Holds;
    let upper = i_upper(b, proc, &on, &off);
    let lower = i_lower(b, proc, &on, &off, uses_q_tilde);
    let optimal = uses_q_tilde && condition_b;
    if optimal {
        assert!(
            bounds_agree(upper.value, lower.value),
            "I_U({b}) = {} and I_0({b}) = {} differ under conditions A and B",
            upper.value,
            lower.value
        );
    }
    let fraction_bound = channel
        .markov_params()
        .and_then(|m| markov_fraction_bound(m.p01, m.p10).ok());
    RateFnReport {
        b,
        i_upper: upper,
        i_lower: lower,
        uses_q_tilde,
        q_hat: q_hat(&on, &off),
        q_tilde: q_tilde(&off),
        pi0: channel.pi0(),
        condition_a,
        condition_b,
        optimal,
        fraction_bound,
    }
}

/// Equal within [`IDENTITY_TOL`], or both infinite.
pub fn bounds_agree(a: f64, b: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= IDENTITY_TOL
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteNBounds {
    /// Lower bound on `P(X_F = 1 | past)`.
    pub frame_ready: f64,
    /// Upper bound on `P(sum X_F = t + a)` over `t + b` slots.
    pub frame_count: f64,
    /// Upper bound on `P(X_PM = 0 | past)`.
    pub pm_blocked: f64,
    /// Upper bound on `P(sum X_PM = t + a)` over `t + b` slots.
    pub pm_count: f64,
    /// `frame_ready <= 0`: the bound says nothing at this `n`.
    pub frame_ready_vacuous: bool,
}

/// Literal right-hand sides of the frame and perfect-matching bounds,
/// evaluated in log space. Values may exceed one at small `n`.
pub fn finite_n_bounds(
    n: u64,
    big_h: f64,
    b: u64,
    t: u64,
    a: i64,
    pi0: f64,
    q_hat: f64,
) -> Result<FiniteNBounds> {
    if n == 0 || big_h < 0.0 {
        return Err(Error::InvalidSimConfig("finite-n bounds need n >= 1 and H >= 0".into()));
    }
    if !(pi0 > 0.0 && pi0 <= 1.0) || !(0.0..1.0).contains(&q_hat) {
        return Err(Error::InvalidChannel(format!(
            "finite-n bounds need pi0 in (0, 1] and q_hat in [0, 1), got {pi0} and {q_hat}"
        )));
    }
    if a > b as i64 - 1 {
        return Err(Error::InvalidSimConfig(format!("need a <= b - 1, got a = {a}, b = {b}")));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let lq = log_inv_complement(q_hat);
    let ln2 = std::f64::consts::LN_2;
    let (bf, tf) = (b as f64, t as f64);
    let rate = -pi0.ln() + (bf - a as f64 - 1.0) * lq;

    let l1_exp = 7.0 * big_h * (ln_n + lq) - nf * lq;
    let frame_ready = -l1_exp.exp_m1();
    let l2 = (tf + bf) * ln2 + 7.0 * big_h * (ln_n - pi0.ln()) + 7.0 * bf * big_h * (ln_n + lq) - nf * rate;
    let l3 = 3f64.ln() + ln_n - nf * lq;
    let pm = (tf + 3.0 * bf) * ln2 + bf * ln_n - nf * rate;
    Ok(FiniteNBounds {
        frame_ready,
        frame_count: l2.exp(),
        pm_blocked: l3.exp(),
        pm_count: pm.exp(),
        frame_ready_vacuous: frame_ready <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kl_batch(l: u32, mu: f64, t: u32, x: f64) -> f64 {
        let a = (t as f64 + x) / (l as f64 * t as f64);
        if a <= mu {
            return 0.0;
        }
        let t = t as f64;
        if a >= 1.0 {
            return -t * mu.ln();
        }
        t * (a * (a / mu).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - mu)).ln())
    }

    #[test]
    fn i_a_examples() {
        let p = ArrivalProcess::batch(5, 0.2).unwrap();
        assert!(i_a(&p, 1, 0.0).abs() < 1e-9);
        let p = ArrivalProcess::batch(5, 0.15).unwrap();
        let expect = 0.2 * (0.2f64 / 0.15).ln() + 0.8 * (0.8f64 / 0.85).ln();
        assert!((i_a(&p, 1, 0.0) - expect).abs() < 1e-9);
        assert!((expect - 0.00904).abs() < 5e-5);
        assert!((i_a(&p, 1, 4.0) + 0.15f64.ln()).abs() < 1e-12);
        assert_eq!(i_a(&p, 1, 4.5), f64::INFINITY);
        // Approaching the boundary from inside.
        assert!((i_a(&p, 1, 4.0 - 1e-7) + 0.15f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn i_a_matches_kl_sweep() {
        for (l, mu) in [(5, 0.15), (5, 0.13), (2, 0.3), (3, 0.01)] {
            let p = ArrivalProcess::batch(l, mu).unwrap();
            for t in 1..=20u32 {
                let steps = 2 * (l - 1) * t;
                for k in 0..=steps {
                    let x = k as f64 * 0.5;
                    let d = (i_a(&p, t, x) - kl_batch(l, mu, t, x)).abs();
                    assert!(d <= 1e-6, "L={l} mu={mu} t={t} x={x}: {d}");
                }
            }
        }
    }

    #[test]
    fn i_a_nondecreasing_in_x() {
        let p = ArrivalProcess::iid(vec![0.5, 0.2, 0.2, 0.1]).unwrap();
        for t in 1..8 {
            let mut prev = 0.0;
            for k in 0..=(4 * t) {
                let v = i_a(&p, t, k as f64 * 0.5);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn t_x_and_psi() {
        assert_eq!(t_x(5, 8).unwrap(), Ratio::from_integer(2));
        assert_eq!(t_x(2, 3).unwrap(), Ratio::from_integer(3));
        assert_eq!(t_x(5, 3).unwrap(), Ratio::new(3, 4));
        assert!(matches!(t_x(1, 3), Err(Error::UnitBatch)));
        assert_eq!(psi_b(2, 5).unwrap(), vec![1, 2, 3, 4]);
        assert!(psi_b(5, 4).unwrap().is_empty());
        assert_eq!(psi_b(5, 9).unwrap(), vec![1, 5]);
    }

    #[test]
    fn q_examples() {
        let iid = ChannelSpec::iid(0.6).unwrap();
        let (on, off) = iid.dists();
        assert_eq!(q_hat(&on, &off), 0.6);
        let (on, off) = ChannelSpec::preset(3).unwrap().dists();
        assert_eq!(q_hat(&on, &off), 0.06);
        let on = DiscretePositiveDist::deterministic(2).unwrap();
        let off = DiscretePositiveDist::geometric(0.5).unwrap();
        assert_eq!(q_hat(&on, &off), 0.0);
        assert_eq!(q_tilde(&DiscretePositiveDist::geometric(0.06).unwrap()), 0.06);
        assert_eq!(q_tilde(&DiscretePositiveDist::deterministic(3).unwrap()), 0.0);
    }

    #[test]
    fn unit_batch_closed_form() {
        let p = ArrivalProcess::batch(1, 0.3).unwrap();
        let ch = ChannelSpec::preset(4).unwrap();
        let (on, off) = ch.dists();
        let v = i_upper(0, &p, &on, &off);
        assert_eq!(v.term, Term::UnitBatch);
        assert!((v.value + ch.pi0().ln()).abs() < 1e-15);
        let lo = i_lower(3, &p, &on, &off, false);
        let expect = -ch.pi0().ln() + 3.0 * (1.0 / (1.0 - q_hat(&on, &off))).ln();
        assert!((lo.value - expect).abs() < 1e-12);
    }

    #[test]
    fn iid_chi1_term() {
        let q = 0.6;
        let ch = ChannelSpec::iid(q).unwrap();
        let (_, off) = ch.dists();
        assert!((ch.pi0() - (1.0 - q)).abs() < 1e-15);
        for b in 0..6u64 {
            let expect = -(1.0 - q).ln() + b as f64 * (1.0 / (1.0 - q)).ln();
            assert!((-ch.pi0().ln() + off.log_max_survival_ratio(b) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_are_ordered_and_monotone() {
        let p = ArrivalProcess::batch(5, 0.15).unwrap();
        for id in 1..=7 {
            let ch = ChannelSpec::preset(id).unwrap();
            let (on, off) = ch.dists();
            let mut prev = (0.0, 0.0);
            for b in 0..=8 {
                let up = i_upper(b, &p, &on, &off);
                let lo = i_lower(b, &p, &on, &off, false);
                assert!(up.certified && lo.certified);
                assert!(lo.value <= up.value + 1e-9, "preset {id} b {b}");
                assert!(lo.value >= 0.0 && up.value >= 0.0);
                assert!(up.value >= prev.0 - 1e-12 && lo.value >= prev.1 - 1e-12);
                prev = (up.value, lo.value);
            }
        }
    }

    #[test]
    fn optimality_verdicts() {
        let p = ArrivalProcess::batch(5, 0.15).unwrap();
        for id in 1..=4 {
            let r = optimality_check(2, &p, &ChannelSpec::preset(id).unwrap());
            assert!(r.optimal && r.fraction_bound.is_none());
        }
        let r = optimality_check(2, &p, &ChannelSpec::preset(5).unwrap());
        assert!(!r.optimal);
        assert!((r.q_hat - 0.01).abs() < 1e-15);
        assert!(r.i_lower.value.is_finite());
        assert!(r.fraction_bound.is_some());
        let r = optimality_check(2, &p, &ChannelSpec::preset(3).unwrap());
        assert!(r.i_upper.value.is_finite());
    }

    #[test]
    fn fraction_bound_examples() {
        let v = markov_fraction_bound(0.99, 0.99).unwrap();
        assert!((v - 0.99f64.ln() / 0.01f64.ln()).abs() < 1e-12);
        assert!((v - 0.00218).abs() < 1e-5);
        assert!((markov_fraction_bound(0.9, 0.9).unwrap() - 0.0458).abs() < 1e-4);
        assert!(matches!(
            markov_fraction_bound(0.06, 0.04),
            Err(Error::NotNegativelyCorrelated { .. })
        ));
    }

    #[test]
    fn finite_n_examples() {
        let l = finite_n_bounds(100, 1.0, 2, 3, 0, 0.4, 0.6).unwrap();
        let expect = (3f64.ln() + 100f64.ln() - 100.0 * 2.5f64.ln()).exp();
        assert!(((l.pm_blocked - expect) / expect).abs() < 1e-12);
        let small = finite_n_bounds(10, 5.0, 2, 3, 0, 0.4, 0.6).unwrap();
        assert!(small.frame_ready_vacuous);
        let mut prev = 0.0;
        for a in -3..=1 {
            let v = finite_n_bounds(50, 5.0, 2, 3, a, 0.4, 0.6).unwrap().frame_count;
            assert!(v >= prev);
            prev = v;
        }
        assert!(finite_n_bounds(50, 5.0, 2, 3, 2, 0.4, 0.6).is_err());
    }
}
