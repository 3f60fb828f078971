//! Learning-rate schedules: cosine annealing with linear warmup.

use serde::{Deserialize, Serialize};

use super::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub init_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

impl Schedule {
    pub fn cosine(init_lr: f64, warmup_epochs: usize, total_epochs: usize) -> Result<Self, Error> {
        if total_epochs <= warmup_epochs {
            return Err(Error::BadSchedule {
                reason: format!(
                    "total_epochs ({total_epochs}) must exceed warmup_epochs ({warmup_epochs})"
                ),
            });
        }
        if init_lr < 0.0 {
            return Err(Error::BadSchedule {
                reason: format!("init_lr ({init_lr}) must be non-negative"),
            });
        }
        Ok(Schedule {
            kind: ScheduleKind::Cosine,
            init_lr,
            warmup_epochs,
            total_epochs,
        })
    }

    pub fn lr(&self, epoch: usize) -> Result<f64, Error> {
        cosine_lr(self, epoch)
    }
}

/// Cosine-annealed learning rate with a linear per-epoch warmup ramp
/// `(epoch+1)/warmup_epochs * init_lr`, then
/// `0.5 * init_lr * (1 + cos(pi * (epoch - warmup) / (total - warmup)))`.
pub fn cosine_lr(schedule: &Schedule, epoch: usize) -> Result<f64, Error> {
    if epoch > schedule.total_epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            total: schedule.total_epochs,
        });
    }
    let lr = if epoch < schedule.warmup_epochs {
        schedule.init_lr * (epoch + 1) as f64 / schedule.warmup_epochs as f64
    } else {
        let span = (schedule.total_epochs - schedule.warmup_epochs) as f64;
        let t = (epoch - schedule.warmup_epochs) as f64 / span;
        0.5 * schedule.init_lr * (1.0 + (std::f64::consts::PI * t).cos())
    };
    Ok(lr)
}
