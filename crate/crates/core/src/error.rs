use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid arrival process: {0}")]
    InvalidArrivals(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("dimension mismatch: {left} left vertices vs {right} right vertices")]
    DimensionMismatch { left: usize, right: usize },

    #[error("channel is not negatively correlated (p01 + p10 = {sum} <= 1)")]
    NotNegativelyCorrelated { sum: f64 },

    #[error("t_x is undefined for L = 1")]
    UnitBatch,

    #[error("no samples")]
    NoSamples,

    #[error("nothing to plot: {0}")]
    EmptyPlot(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
