//! Positive integer-valued period-length distributions.
//!
//! ON periods `U` and OFF periods `D` of a channel are drawn from a
//! [`DiscretePositiveDist`]. Besides the usual pmf / survival / sampling
//! surface, the type exposes the hazard-style extrema the rate-function
//! calculator consumes:
//!
//! ```text
//! min_off_hazard         = min_k P(X = k+1) / P(X > k)
//! min_on_survival_ratio  = min_k P(X > k+1) / P(X > k)
//! max_survival_ratio(b)  = sup_k P(X > k) / P(X > k+b)
//! ```
//!
//! All extrema range over `k` with `P(X > k) > 0`. Geometric laws are handled
//! in closed form; every other kind has finite support, so enumeration is exact.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a user supplied table.
const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DistKind {
    /// `P(X = k) = (1 - s)^(k-1) s` for `k >= 1`.
    Geometric { s: f64 },
    Deterministic { d: u64 },
    /// `pmf[k - 1] = P(X = k)` for `k = 1..=pmf.len()`.
    Table { pmf: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct DiscretePositiveDist {
    kind: DistKind,
    geometric: Option<Geometric>,
}

impl PartialEq for DiscretePositiveDist {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl DiscretePositiveDist {
    pub fn geometric(s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "geometric success probability must lie in (0, 1], got {s}"
            )));
        }
        let sampler = Geometric::new(s)
            .map_err(|e| Error::InvalidDistribution(format!("geometric({s}): {e}")))?;
        Ok(Self {
            kind: DistKind::Geometric { s },
            geometric: Some(sampler),
        })
    }

    pub fn deterministic(d: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDistribution(
                "deterministic period must be at least 1".into(),
            ));
        }
        Ok(Self {
            kind: DistKind::Deterministic { d },
            geometric: None,
        })
    }

    /// Table over `{1, .., pmf.len()}`. Trailing zeros are trimmed and the
    /// mass is renormalized after the tolerance check.
    pub fn table(pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "table entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "table mass sums to {total}, expected 1"
            )));
        }
        let mut pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        while pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        if pmf.is_empty() {
            return Err(Error::InvalidDistribution("table is empty".into()));
        }
        Ok(Self {
            kind: DistKind::Table { pmf },
            geometric: None,
        })
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    /// Largest point of the support, `None` for geometric laws with `s < 1`.
    pub fn support_max(&self) -> Option<u64> {
        match &self.kind {
            DistKind::Geometric { s } => (*s == 1.0).then_some(1),
            DistKind::Deterministic { d } => Some(*d),
            DistKind::Table { pmf } => Some(pmf.len() as u64),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.kind {
            DistKind::Geometric { s } => (1.0 - s).powf((k - 1) as f64) * s,
            DistKind::Deterministic { d } => {
                if k == *d {
                    1.0
                } else {
                    0.0
                }
            }
            DistKind::Table { pmf } => pmf.get(k as usize - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn cdf(&self, k: u64) -> f64 {
        1.0 - self.survival(k)
    }

    /// `P(X > k) = 1 - F(k)`.
    pub fn survival(&self, k: u64) -> f64 {
        match &self.kind {
            DistKind::Geometric { s } => (1.0 - s).powf(k as f64),
            DistKind::Deterministic { d } => {
                if k < *d {
                    1.0
                } else {
                    0.0
                }
            }
            DistKind::Table { pmf } => {
                let k = k as usize;
                if k >= pmf.len() {
                    0.0
                } else {
                    pmf[k..].iter().sum::<f64>().min(1.0)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistKind::Geometric { s } => 1.0 / s,
            DistKind::Deterministic { d } => *d as f64,
            DistKind::Table { pmf } => pmf
                .iter()
                .enumerate()
                .map(|(i, p)| (i + 1) as f64 * p)
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            DistKind::Geometric { .. } => {
                // rand_distr counts failures before the first success.
                1 + self.geometric.as_ref().expect("geometric sampler").sample(rng)
            }
            DistKind::Deterministic { d } => *d,
            DistKind::Table { pmf } => sample_table(pmf, rng) + 1,
        }
    }

    /// Residual life of a period observed at a uniformly random slot:
    /// `P(R = r) = P(X > r - 1) / E[X]` for `r >= 1`.
    pub fn sample_equilibrium_residual<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            // Memoryless: the integrated tail of a geometric law is itself.
            DistKind::Geometric { .. } => self.sample(rng),
            DistKind::Deterministic { d } => rng.random_range(1..=*d),
            DistKind::Table { pmf } => {
                let mean = self.mean();
                let weights: Vec<f64> = (0..pmf.len() as u64)
                    .map(|r| self.survival(r) / mean)
                    .collect();
                sample_table(&weights, rng) + 1
            }
        }
    }

    /// `min_k P(X = k+1) / P(X > k)`: the smallest one-slot hazard.
    pub fn min_off_hazard(&self) -> f64 {
        match &self.kind {
            DistKind::Geometric { s } => *s,
            _ => self
                .alive_range()
                .map(|k| self.pmf(k + 1) / self.survival(k))
                .fold(f64::INFINITY, f64::min)
                .min(1.0),
        }
    }

    /// `min_k P(X > k+1) / P(X > k)`: the smallest one-slot continuation
    /// probability. Zero for every finite-support law.
    pub fn min_on_survival_ratio(&self) -> f64 {
        match &self.kind {
            DistKind::Geometric { s } => 1.0 - s,
            _ => self
                .alive_range()
                .map(|k| self.survival(k + 1) / self.survival(k))
                .fold(f64::INFINITY, f64::min)
                .min(1.0),
        }
    }

    /// `sup_k P(X > k) / P(X > k+b)`; `+inf` when some alive `k` has
    /// `P(X > k+b) = 0`.
    pub fn max_survival_ratio(&self, b: u64) -> f64 {
        self.log_max_survival_ratio(b).exp()
    }

    /// Natural log of [`max_survival_ratio`](Self::max_survival_ratio),
    /// evaluated without forming the ratio for geometric laws.
    pub fn log_max_survival_ratio(&self, b: u64) -> f64 {
        if b == 0 {
            return 0.0;
        }
        match &self.kind {
            DistKind::Geometric { s } => {
                if *s == 1.0 {
                    f64::INFINITY
                } else {
                    b as f64 * -(-s).ln_1p()
                }
            }
            // Finite support: the last alive k leaves nothing beyond k + b.
            _ => f64::INFINITY,
        }
    }

    /// Ratio `P(X > k) / P(X > k+b)` at a single `k`, used by the enumeration
    /// oracles in tests and by callers that want the attaining argument.
    pub fn survival_ratio_at(&self, k: u64, b: u64) -> f64 {
        let den = self.survival(k + b);
        if den == 0.0 {
            f64::INFINITY
        } else {
            self.survival(k) / den
        }
    }

    /// Whether the pmf coincides with some geometric law (memoryless).
    pub fn is_memoryless(&self) -> bool {
        match &self.kind {
            DistKind::Geometric { .. } => true,
            // A finite-support law is geometric only as Geometric(1).
            DistKind::Deterministic { d } => *d == 1,
            DistKind::Table { pmf } => pmf.len() == 1,
        }
    }

    fn alive_range(&self) -> impl Iterator<Item = u64> {
        let end = self.support_max().expect("finite support");
        0..end
    }
}

impl fmt::Display for DiscretePositiveDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistKind::Geometric { s } => write!(f, "geometric({s})"),
            DistKind::Deterministic { d } => write!(f, "deterministic({d})"),
            DistKind::Table { pmf } => {
                write!(f, "table(")?;
                for (i, p) in pmf.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Index drawn from a weight vector that sums to one (up to rounding).
pub(crate) fn sample_table<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u64;
        }
    }
    // Rounding slack lands on the last positive entry.
    weights
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(weights.len() - 1) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enum_min_hazard(d: &DiscretePositiveDist, upto: u64) -> f64 {
        (0..upto)
            .filter(|k| d.survival(*k) > 0.0)
            .map(|k| d.pmf(k + 1) / d.survival(k))
            .fold(f64::INFINITY, f64::min)
    }

    fn enum_min_on_ratio(d: &DiscretePositiveDist, upto: u64) -> f64 {
        (0..upto)
            .filter(|k| d.survival(*k) > 0.0)
            .map(|k| d.survival(k + 1) / d.survival(k))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(DiscretePositiveDist::geometric(0.4).unwrap().pmf(1), 0.4);
        let det = DiscretePositiveDist::deterministic(3).unwrap();
        assert_eq!(det.pmf(3), 1.0);
        assert_eq!(det.pmf(2), 0.0);
        let t = DiscretePositiveDist::table(vec![0.2, 0.8]).unwrap();
        assert_eq!(t.pmf(2), 0.8);
        assert_eq!(t.pmf(0), 0.0);
        assert_eq!(t.pmf(3), 0.0);
    }

    #[test]
    fn survival_examples() {
        let g = DiscretePositiveDist::geometric(0.4).unwrap();
        assert!((g.survival(2) - 0.36).abs() < 1e-15);
        assert_eq!(g.survival(0), 1.0);
        let det = DiscretePositiveDist::deterministic(3).unwrap();
        assert_eq!(det.survival(2), 1.0);
        assert_eq!(det.survival(3), 0.0);
        let t = DiscretePositiveDist::table(vec![0.2, 0.8]).unwrap();
        assert!((t.survival(1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn min_off_hazard_examples() {
        let g = DiscretePositiveDist::geometric(0.5).unwrap();
        assert_eq!(g.min_off_hazard(), 0.5);
        assert!((enum_min_hazard(&g, 21) - 0.5).abs() < 1e-12);

        let det = DiscretePositiveDist::deterministic(3).unwrap();
        // ratios over k = 0, 1, 2 are 0, 0, 1
        assert_eq!(enum_min_hazard(&det, 3), 0.0);
        assert_eq!(det.min_off_hazard(), 0.0);

        let t = DiscretePositiveDist::table(vec![0.5, 0.5]).unwrap();
        assert_eq!(enum_min_hazard(&t, 2), 0.5);
        assert_eq!(t.min_off_hazard(), 0.5);
    }

    #[test]
    fn min_on_survival_ratio_examples() {
        let g = DiscretePositiveDist::geometric(0.4).unwrap();
        assert!((g.min_on_survival_ratio() - 0.6).abs() < 1e-15);
        assert!((enum_min_on_ratio(&g, 21) - 0.6).abs() < 1e-12);

        let det = DiscretePositiveDist::deterministic(2).unwrap();
        assert_eq!(enum_min_on_ratio(&det, 2), 0.0);
        assert_eq!(det.min_on_survival_ratio(), 0.0);

        let g = DiscretePositiveDist::geometric(0.04).unwrap();
        assert!((g.min_on_survival_ratio() - 0.96).abs() < 1e-15);
    }

    #[test]
    fn max_survival_ratio_examples() {
        for d in [
            DiscretePositiveDist::geometric(0.3).unwrap(),
            DiscretePositiveDist::deterministic(4).unwrap(),
            DiscretePositiveDist::table(vec![0.1, 0.9]).unwrap(),
        ] {
            assert_eq!(d.max_survival_ratio(0), 1.0);
        }
        let g = DiscretePositiveDist::geometric(0.5).unwrap();
        assert!((g.max_survival_ratio(3) - 8.0).abs() < 1e-12);
        // constant in k
        for k in 0..20 {
            assert!((g.survival_ratio_at(k, 3) - 8.0).abs() < 1e-9);
        }
        let det = DiscretePositiveDist::deterministic(2).unwrap();
        assert_eq!(det.max_survival_ratio(2), f64::INFINITY);
        assert_eq!(det.survival_ratio_at(0, 2), f64::INFINITY);
    }

    #[test]
    fn geometric_closed_forms_match_enumeration() {
        for s in [0.01, 0.06, 0.3, 0.5, 0.9, 0.99] {
            let g = DiscretePositiveDist::geometric(s).unwrap();
            assert!((g.min_off_hazard() - enum_min_hazard(&g, 61)).abs() < 1e-12);
            assert!((g.min_on_survival_ratio() - enum_min_on_ratio(&g, 61)).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_and_mean_and_survival_consistency() {
        let dists = [
            DiscretePositiveDist::geometric(0.3).unwrap(),
            DiscretePositiveDist::deterministic(5).unwrap(),
            DiscretePositiveDist::table(vec![0.1, 0.0, 0.6, 0.3]).unwrap(),
        ];
        for d in &dists {
            let upto = d.support_max().unwrap_or(400);
            let mass: f64 = (1..=upto).map(|k| d.pmf(k)).sum();
            let mean: f64 = (1..=upto).map(|k| k as f64 * d.pmf(k)).sum();
            assert!((mass - 1.0).abs() < 1e-12, "{d}: mass {mass}");
            assert!((mean - d.mean()).abs() < 1e-12, "{d}: mean {mean}");
            for k in 0..=upto.min(60) + 5 {
                let tail: f64 = (k + 1..=upto.max(k + 1)).map(|j| d.pmf(j)).sum();
                assert!((d.survival(k) - tail).abs() < 1e-12, "{d}: k={k}");
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DiscretePositiveDist::geometric(0.0).is_err());
        assert!(DiscretePositiveDist::geometric(1.2).is_err());
        assert!(DiscretePositiveDist::deterministic(0).is_err());
        assert!(DiscretePositiveDist::table(vec![0.5, 0.6]).is_err());
        assert!(DiscretePositiveDist::table(vec![-0.1, 1.1]).is_err());
        assert!(DiscretePositiveDist::table(vec![]).is_err());
    }

    #[test]
    fn geometric_sample_mean() {
        let g = DiscretePositiveDist::geometric(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| g.sample(&mut rng)).sum();
        let mean = sum as f64 / n as f64;
        let sd = (0.7f64).sqrt() / 0.3;
        let se = sd / (n as f64).sqrt();
        assert!((mean - 1.0 / 0.3).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn equilibrium_residual_law() {
        let t = DiscretePositiveDist::table(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            counts[t.sample_equilibrium_residual(&mut rng) as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        for r in 1..=3u64 {
            let p = t.survival(r - 1) / t.mean();
            let phat = counts[r as usize] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((phat - p).abs() < 4.0 * se, "r={r}: {phat} vs {p}");
        }
    }

    #[test]
    fn memoryless_detection() {
        assert!(DiscretePositiveDist::geometric(0.3).unwrap().is_memoryless());
        assert!(!DiscretePositiveDist::deterministic(2).unwrap().is_memoryless());
        assert!(DiscretePositiveDist::deterministic(1).unwrap().is_memoryless());
    }
}
