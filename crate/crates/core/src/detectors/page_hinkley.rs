use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Page-Hinkley test for an upward shift in the mean of a stream.
///
/// `m_t = Σ (x_i - mean_i - delta)` with `mean_i` the running mean through
/// `x_i`; `M_t = min(0, m_1..m_t)`. The alarm is raised when
/// `m_t - M_t > lambda` and stays raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageHinkley {
    pub delta: f64,
    pub lambda: f64,
    count: usize,
    mean: f64,
    cumulative: f64,
    minimum: f64,
    alarm: bool,
    alarm_at: Option<usize>,
}

impl PageHinkley {
    pub fn new(delta: f64, lambda: f64) -> Result<Self> {
        if !(delta >= 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "page-hinkley needs delta >= 0 and lambda > 0 (got {delta}, {lambda})"
            )));
        }
        Ok(Self {
            delta,
            lambda,
            count: 0,
            mean: 0.0,
            cumulative: 0.0,
            minimum: 0.0,
            alarm: false,
            alarm_at: None,
        })
    }

    /// Feeds one value; returns the (latched) alarm state.
    pub fn update(&mut self, value: f64) -> bool {
        self.count += 1;
        self.mean += (value - self.mean) / self.count as f64;
        self.cumulative += value - self.mean - self.delta;
        self.minimum = self.minimum.min(self.cumulative);
        if !self.alarm && self.statistic() > self.lambda {
            self.alarm = true;
            self.alarm_at = Some(self.count);
        }
        self.alarm
    }

    /// `m_t - M_t`, never negative.
    pub fn statistic(&self) -> f64 {
        self.cumulative - self.minimum
    }

    pub fn alarm(&self) -> bool {
        self.alarm
    }

    /// 1-based index of the update that raised the alarm.
    pub fn alarm_at(&self) -> Option<usize> {
        self.alarm_at
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_zero_never_alarms() {
        let mut ph = PageHinkley::new(0.0, 1e-9).unwrap();
        for _ in 0..1000 {
            assert!(!ph.update(0.0));
            assert!(ph.statistic() >= 0.0);
        }
    }

    #[test]
    fn detects_mean_shift_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let before = Normal::new(0.0, 0.1).unwrap();
        let after = Normal::new(5.0, 0.1).unwrap();
        let mut ph = PageHinkley::new(0.05, 10.0).unwrap();
        for _ in 0..100 {
            ph.update(before.sample(&mut rng));
        }
        assert!(!ph.alarm());
        for _ in 0..20 {
            ph.update(after.sample(&mut rng));
        }
        let at = ph.alarm_at().expect("alarm within 20 shifted values");
        assert!(at > 100 && at <= 120);
    }

    #[test]
    fn alarm_latches() {
        let mut ph = PageHinkley::new(0.0, 1.0).unwrap();
        ph.update(0.0);
        ph.update(10.0);
        assert!(ph.alarm());
        for _ in 0..50 {
            assert!(ph.update(-100.0));
        }
        assert_eq!(ph.alarm_at(), Some(2));
    }

    #[test]
    fn invariant_matches_alarm_before_latch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut ph = PageHinkley::new(0.05, 5.0).unwrap();
        for _ in 0..300 {
            let was = ph.alarm();
            ph.update(noise.sample(&mut rng));
            assert!(ph.statistic() >= 0.0);
            if !was {
                assert_eq!(ph.alarm(), ph.statistic() > ph.lambda);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PageHinkley::new(-1.0, 1.0).is_err());
        assert!(PageHinkley::new(0.1, 0.0).is_err());
    }
}
