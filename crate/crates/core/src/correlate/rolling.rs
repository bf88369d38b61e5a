use std::collections::VecDeque;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sliding-window minimum and maximum over a FIFO stream.
#[derive(Debug, Clone, Default)]
struct MinMax {
    min: VecDeque<(u64, f64)>,
    max: VecDeque<(u64, f64)>,
}

impl MinMax {
    fn push(&mut self, seq: u64, v: f64) {
        while self.min.back().is_some_and(|&(_, m)| m > v) {
            self.min.pop_back();
        }
        self.min.push_back((seq, v));
        while self.max.back().is_some_and(|&(_, m)| m < v) {
            self.max.pop_back();
        }
        self.max.push_back((seq, v));
    }

    fn expire(&mut self, seq: u64) {
        if self.min.front().is_some_and(|&(s, _)| s == seq) {
            self.min.pop_front();
        }
        if self.max.front().is_some_and(|&(s, _)| s == seq) {
            self.max.pop_front();
        }
    }

    fn is_constant(&self) -> bool {
        match (self.min.front(), self.max.front()) {
            (Some(&(_, lo)), Some(&(_, hi))) => lo == hi,
            _ => true,
        }
    }
}

/// Incremental Pearson coefficient over a first-in first-out window.
///
/// Keeps Welford-style running means and centered co-moments, updated on
/// every push and pop. A window in which either series is constant reports
/// `None`, detected exactly through running min/max rather than from a
/// co-moment that may carry rounding residue.
#[derive(Debug, Clone, Default)]
pub struct RollingPearson {
    window: VecDeque<(f64, f64)>,
    head_seq: u64,
    mean_x: f64,
    mean_y: f64,
    sxx: CompensatedSum,
    syy: CompensatedSum,
    sxy: CompensatedSum,
    range_x: MinMax,
    range_y: MinMax,
}

impl RollingPearson {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        let seq = self.head_seq + self.window.len() as u64;
        self.window.push_back((x, y));
        self.range_x.push(seq, x);
        self.range_y.push(seq, y);

        let n = self.window.len() as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.sxx.add(dx * (x - self.mean_x));
        self.syy.add(dy * (y - self.mean_y));
        self.sxy.add(dx * (y - self.mean_y));
    }

    /// Remove the oldest pair. Returns it, or `None` when already empty.
    pub fn pop(&mut self) -> Option<(f64, f64)> {
        let (x, y) = self.window.pop_front()?;
        self.range_x.expire(self.head_seq);
        self.range_y.expire(self.head_seq);
        self.head_seq += 1;

        if self.window.is_empty() {
            self.mean_x = 0.0;
            self.mean_y = 0.0;
            self.sxx = CompensatedSum::default();
            self.syy = CompensatedSum::default();
            self.sxy = CompensatedSum::default();
            return Some((x, y));
        }
        let n = self.window.len() as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x -= dx / n;
        self.mean_y -= dy / n;
        self.sxx.add(-dx * (x - self.mean_x));
        self.syy.add(-dy * (y - self.mean_y));
        self.sxy.add(-dx * (y - self.mean_y));
        Some((x, y))
    }

    pub fn coefficient(&self) -> Option<f64> {
        if self.window.len() < 2 || self.range_x.is_constant() || self.range_y.is_constant() {
            return None;
        }
        let sxx = self.sxx.value().max(0.0);
        let syy = self.syy.value().max(0.0);
        let denom = (sxx * syy).sqrt();
        if denom == 0.0 {
            return None;
        }
        Some((self.sxy.value() / denom).clamp(-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_pop_tracks_window() {
        let mut r = RollingPearson::new();
        for (x, y) in [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)] {
            r.push(x, y);
        }
        assert!((r.coefficient().unwrap() - 1.0).abs() < 1e-15);
        r.push(4.0, 0.0);
        r.pop();
        r.pop();
        // Window now holds (3,3), (4,0).
        assert!((r.coefficient().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_after_expiry_is_undefined() {
        let mut r = RollingPearson::new();
        r.push(0.1, 1.0);
        r.push(0.7, 2.0);
        r.push(0.3, 3.0);
        r.push(0.3, 4.0);
        r.pop();
        r.pop();
        assert_eq!(r.coefficient(), None);
        r.pop();
        r.pop();
        assert!(r.is_empty());
        assert_eq!(r.pop(), None);
    }
}
