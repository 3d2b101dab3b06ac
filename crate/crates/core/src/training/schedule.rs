/// Validation-driven learning-rate decay and early stopping.
///
/// The first observation is the baseline. Later observations count as an
/// improvement only if strictly greater than the best so far. After
/// `decay_patience` epochs without improvement the rate is divided by ten and
/// the decay counter restarts; after `stop_patience` such epochs training stops.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub decay_patience: usize,
    pub stop_patience: usize,
    best: Option<f64>,
    since_decay: usize,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub decayed: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(lr: f64, decay_patience: usize, stop_patience: usize) -> Self {
        Self { lr, decay_patience, stop_patience, best: None, since_decay: 0, since_best: 0 }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, metric: f64) -> Verdict {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.since_decay = 0;
            self.since_best = 0;
            return Verdict { improved: true, decayed: false, stop: false };
        }
        self.since_decay += 1;
        self.since_best += 1;
        let decayed = self.since_decay >= self.decay_patience;
        if decayed {
            self.lr /= 10.0;
            self.since_decay = 0;
        }
        Verdict { improved: false, decayed, stop: self.since_best >= self.stop_patience }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Learning rate in effect during each of `epochs` epochs of a flat metric,
    /// stopping where the schedule says so.
    fn flat_run(decay: usize, stop: usize, epochs: usize) -> Vec<f64> {
        let mut s = PlateauSchedule::new(1.0, decay, stop);
        s.observe(0.3);
        let mut lrs = Vec::new();
        for _ in 0..epochs {
            lrs.push(s.lr);
            if s.observe(0.3).stop {
                break;
            }
        }
        lrs
    }

    #[test]
    fn flat_metric_decays_at_epoch_eleven() {
        let lrs = flat_run(10, 15, 30);
        assert_eq!(lrs.len(), 15);
        assert!(lrs[..10].iter().all(|&l| l == 1.0));
        assert_eq!(lrs[10], 0.1);
    }

    #[test]
    fn stated_patiences_stop_before_any_decay() {
        let lrs = flat_run(10, 5, 30);
        assert_eq!(lrs, vec![1.0; 5]);
    }

    #[test]
    fn increasing_metric_never_stops() {
        let mut s = PlateauSchedule::new(1.0, 2, 5);
        for e in 0..=20 {
            let v = s.observe(e as f64);
            assert!(v.improved && !v.stop);
        }
        assert_eq!(s.lr, 1.0);
    }

    #[test]
    fn decay_counter_restarts() {
        let lrs = flat_run(3, 100, 9);
        assert_eq!(lrs[..3], [1.0; 3]);
        assert_eq!(lrs[3..6], [1.0 / 10.0; 3]);
        assert_eq!(lrs[6..9], [1.0 / 10.0 / 10.0; 3]);
    }
}
