//! Statistical instruments: rank correlation, random-experiment efficiency
//! curves, robust line fits.

mod efficiency;
mod huber;
mod spearman;

pub use efficiency::{efficiency_curve, CurvePoint, EfficiencyCurve};
pub use huber::{huber_fit, ols_fit, HuberFit, IterationStat, DEFAULT_DELTA};
pub use spearman::{average_ranks, spearman_rho, CorrelationReport};

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    MismatchedLengths { xs: usize, ys: usize },
    TooFewPoints { n: usize },
    DegenerateRanks { which: &'static str },
    RankDeficient,
    SizeExceedsPool { m: usize, n: usize },
    MissingKey { arch_id: String, key: String },
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::MismatchedLengths { xs, ys } => {
                write!(f, "length mismatch: {xs} xs vs {ys} ys")
            }
            Error::TooFewPoints { n } => write!(f, "need at least 2 points, got {n}"),
            Error::DegenerateRanks { which } => {
                write!(f, "{which} is constant; rank correlation is undefined")
            }
            Error::RankDeficient => write!(f, "design is rank-deficient (all xs equal)"),
            Error::SizeExceedsPool { m, n } => {
                write!(f, "experiment size {m} exceeds the pool of {n} records")
            }
            Error::MissingKey { arch_id, key } => {
                write!(f, "record {arch_id} lacks accuracy key {key:?}")
            }
        }
    }
}

impl std::error::Error for Error {}
