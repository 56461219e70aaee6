//! Cosine annealing with warm restarts.
//!
//! Cycle `i` lasts `T_i = T_0 * T_mult^i` epochs. Within a cycle
//! `lr = lr_min + (lr_max - lr_min) * (1 + cos(pi * t_cur / T_i)) / 2`,
//! and every restart jumps back to `lr_max`.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgdr {
    pub lr_max: f64,
    pub lr_min: f64,
    pub t0: u32,
    pub t_mult: u32,
}

impl Sgdr {
    /// Learning rate `t_cur` epochs into a cycle of length `t_i`.
    pub fn cosine(&self, t_cur: f64, t_i: f64) -> f64 {
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * t_cur / t_i).cos())
    }

    /// Cycle index, position inside it and its length for a (fractional)
    /// global epoch.
    pub fn locate(&self, epoch: f64) -> (u32, f64, f64) {
        let mut start = 0.0;
        let mut len = f64::from(self.t0);
        let mut cycle = 0;
        // T_mult = 1 gives fixed-length cycles; jump straight there.
        if self.t_mult == 1 {
            let c = (epoch / len).floor();
            return (c as u32, epoch - c * len, len);
        }
        while epoch >= start + len {
            start += len;
            len *= f64::from(self.t_mult);
            cycle += 1;
        }
        (cycle, epoch - start, len)
    }

    pub fn lr(&self, epoch: f64) -> f64 {
        let (_, t_cur, t_i) = self.locate(epoch.max(0.0));
        self.cosine(t_cur, t_i)
    }

    /// Epochs in the first `cycles` cycles.
    pub fn total_epochs(&self, cycles: u32) -> u32 {
        (0..cycles).map(|i| self.t0 * self.t_mult.pow(i)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: Sgdr = Sgdr {
        lr_max: 0.05,
        lr_min: 0.0005,
        t0: 1,
        t_mult: 2,
    };

    #[test]
    fn cycle_endpoints() {
        assert_eq!(S.cosine(0.0, 4.0), 0.05);
        assert!((S.cosine(4.0, 4.0) - 0.0005).abs() < 1e-15);
        assert!((S.cosine(2.0, 4.0) - 0.02525).abs() < 1e-15);
    }

    #[test]
    fn restarts_reset_to_max() {
        // Cycles start at epochs 0, 1, 3, 7, 15.
        for start in [0.0, 1.0, 3.0, 7.0, 15.0] {
            assert_eq!(S.lr(start), 0.05, "epoch {start}");
        }
        assert_eq!(S.locate(5.0), (2, 2.0, 4.0));
        assert!((S.lr(5.0) - 0.02525).abs() < 1e-15);
        assert!(S.lr(6.999) < 0.001);
    }

    #[test]
    fn total_epochs_sums_cycles() {
        assert_eq!(S.total_epochs(5), 31);
        let flat = Sgdr {
            t_mult: 1,
            t0: 3,
            ..S
        };
        assert_eq!(flat.total_epochs(4), 12);
        assert_eq!(flat.locate(7.5), (2, 1.5, 3.0));
    }

    #[test]
    fn decreasing_within_cycle() {
        let mut prev = f64::INFINITY;
        for i in 0..80 {
            let lr = S.lr(7.0 + i as f64 * 0.1);
            assert!(lr < prev);
            prev = lr;
        }
    }
}
