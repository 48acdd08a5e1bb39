//! Per-epoch training logs shared by every solver.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub price: f64,
    pub server_utility: f64,
    pub reward: f64,
    /// Critic or value loss of the epoch's update; 0 for solvers without one.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            records: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_utility(&self) -> Option<f64> {
        self.records.last().map(|r| r.server_utility)
    }

    pub fn best_utility(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.server_utility)
            .reduce(f64::max)
    }

    /// Utilities of epochs `first..=last`.
    pub fn window(&self, first: usize, last: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| (first..=last).contains(&r.epoch))
            .map(|r| r.server_utility)
            .collect()
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_and_stats() {
        let mut log = TrainLog::default();
        for e in 1..=10 {
            log.push(EpochRecord {
                epoch: e,
                price: 1.0,
                server_utility: e as f64,
                reward: 0.0,
                loss: 0.0,
            });
        }
        assert_eq!(log.window(3, 5), vec![3.0, 4.0, 5.0]);
        assert_eq!(mean(&log.window(1, 10)), Some(5.5));
        assert_eq!(std_dev(&[2.0, 4.0]), Some(1.0));
        assert_eq!(log.final_utility(), Some(10.0));
        assert_eq!(log.best_utility(), Some(10.0));
        assert_eq!(mean(&[]), None);
    }
}
