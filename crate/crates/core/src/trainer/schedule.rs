use serde::{Deserialize, Serialize};

/// Plateau halving: when the best training loss has not improved for
/// `patience` epochs in a row, multiply the rate by `factor` and restart the
/// count. Training stops once the rate falls below `lr_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub patience: usize,
    pub factor: f64,
    pub lr_min: f64,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule {
            patience: 5,
            factor: 0.5,
            lr_min: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleDecision {
    Continue { lr: f64, reduced: bool },
    Stop,
}

/// Epochs since the best loss in `history`, restarted after every plateau.
fn stale_epochs(history: &[f64], patience: usize) -> (usize, bool) {
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut fired = false;
    for &loss in history {
        fired = false;
        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                stale = 0;
                fired = true;
            }
        }
    }
    (stale, fired)
}

/// Decision after the last epoch of `history`, given the rate it ran at.
pub fn lr_schedule_step(history: &[f64], lr: f64, schedule: &PlateauSchedule) -> ScheduleDecision {
    if lr < schedule.lr_min {
        return ScheduleDecision::Stop;
    }
    let (_, fired) = stale_epochs(history, schedule.patience.max(1));
    let lr = if fired { lr * schedule.factor } else { lr };
    if lr < schedule.lr_min {
        ScheduleDecision::Stop
    } else {
        ScheduleDecision::Continue { lr, reduced: fired }
    }
}
