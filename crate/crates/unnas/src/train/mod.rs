//! From-scratch training of fixed architectures and the sample-based study.

mod study;
mod trainer;

pub use study::{repeat_and_average, run_sample_study, sample_pool, CostReference, PoolSpec, RepeatSummary, StudyJobOutcome, StudyOptions};
pub use trainer::{train_and_score, Model, Recipe, TrainReport};

#[derive(Debug)]
pub enum Error {
    Diverged { epoch: usize, batch: usize, loss: f64 },
    BadRecipe { reason: String },
    EmptySplit { which: &'static str },
    Nn(crate::nn::Error),
    Autograd(crate::autograd::Error),
    Task(crate::task::Error),
    Space(crate::space::Error),
    Data(crate::data::Error),
    Store(std::io::Error),
}

impl From<crate::nn::Error> for Error {
    fn from(e: crate::nn::Error) -> Self {
        Error::Nn(e)
    }
}

impl From<crate::autograd::Error> for Error {
    fn from(e: crate::autograd::Error) -> Self {
        Error::Autograd(e)
    }
}

impl From<crate::task::Error> for Error {
    fn from(e: crate::task::Error) -> Self {
        Error::Task(e)
    }
}

impl From<crate::space::Error> for Error {
    fn from(e: crate::space::Error) -> Self {
        Error::Space(e)
    }
}

impl From<crate::data::Error> for Error {
    fn from(e: crate::data::Error) -> Self {
        Error::Data(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Store(e)
    }
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Diverged { epoch, batch, loss } => {
                write!(f, "training diverged at epoch {epoch}, batch {batch} (loss {loss})")
            }
            Error::BadRecipe { reason } => write!(f, "invalid recipe: {reason}"),
            Error::EmptySplit { which } => write!(f, "{which} split is empty"),
            Error::Nn(e) => write!(f, "{e}"),
            Error::Autograd(e) => write!(f, "{e}"),
            Error::Task(e) => write!(f, "{e}"),
            Error::Space(e) => write!(f, "{e}"),
            Error::Data(e) => write!(f, "{e}"),
            Error::Store(e) => write!(f, "store io: {e}"),
        }
    }
}

impl std::error::Error for Error {}
