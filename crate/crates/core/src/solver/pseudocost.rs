//! Pseudocost branching: the bound gain per unit change of a binary,
//! learned from the children the search has already solved.

/// Per-variable gain statistics for the down (0) and up (1) branch.
#[derive(Clone, Debug)]
pub(super) struct Pseudocosts {
    sum: Vec<[f64; 2]>,
    count: Vec<[u32; 2]>,
    total: [f64; 2],
    seen: [u32; 2],
}

/// Gains below this count as zero when scoring a candidate.
const MIN_GAIN: f64 = 1e-6;
/// Observations per direction before the estimate replaces strong branching.
const RELIABLE: u32 = 2;

impl Pseudocosts {
    pub(super) fn new(n: usize) -> Self {
        Self { sum: vec![[0.0; 2]; n], count: vec![[0; 2]; n], total: [0.0; 2], seen: [0; 2] }
    }

    /// Records that moving `var` by `step` towards `up` raised the bound by `gain`.
    pub(super) fn record(&mut self, var: usize, up: bool, step: f64, gain: f64) {
        if !(step > 1e-6) || !gain.is_finite() {
            return;
        }
        let per = gain.max(0.0) / step;
        let d = usize::from(up);
        self.sum[var][d] += per;
        self.count[var][d] += 1;
        self.total[d] += per;
        self.seen[d] += 1;
    }

    /// Average gain per unit of one direction; falls back to the mean over
    /// all variables while `var` has no history.
    fn estimate(&self, var: usize, d: usize) -> f64 {
        if self.count[var][d] > 0 {
            self.sum[var][d] / f64::from(self.count[var][d])
        } else if self.seen[d] > 0 {
            self.total[d] / f64::from(self.seen[d])
        } else {
            1.0
        }
    }

    /// True once both directions of `var` have been observed often enough.
    pub(super) fn reliable(&self, var: usize) -> bool {
        self.count[var][0].min(self.count[var][1]) >= RELIABLE
    }

    /// Product score of two bound gains.
    pub(super) fn product(down: f64, up: f64) -> f64 {
        down.max(MIN_GAIN) * up.max(MIN_GAIN)
    }

    /// Product score of branching on `var` at fractional value `x`.
    pub(super) fn score(&self, var: usize, x: f64) -> f64 {
        Self::product(self.estimate(var, 0) * x, self.estimate(var, 1) * (1.0 - x))
    }
}
