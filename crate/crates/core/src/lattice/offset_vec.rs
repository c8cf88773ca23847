use std::collections::VecDeque;

/// Dense storage over a contiguous window of integer positions.
///
/// Backs heights and odometers on line domains. The window can grow one
/// position at a time at either end; `VecDeque` keeps both growth
/// directions amortized O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OffsetVec<T> {
    lo: i64,
    data: VecDeque<T>,
}

impl<T: Clone> OffsetVec<T> {
    pub fn new(lo: i64, len: usize, fill: T) -> Self {
        assert!(len > 0, "window must be nonempty");
        let mut data = VecDeque::with_capacity(len);
        data.resize(len, fill);
        OffsetVec { lo, data }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.data.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn contains(&self, pos: i64) -> bool {
        pos >= self.lo && pos <= self.hi()
    }

    pub fn get(&self, pos: i64) -> &T {
        &self.data[(pos - self.lo) as usize]
    }

    pub fn get_mut(&mut self, pos: i64) -> &mut T {
        &mut self.data[(pos - self.lo) as usize]
    }

    /// Grow the window one position at a time until `pos` is inside.
    pub fn ensure(&mut self, pos: i64, fill: T) {
        while pos < self.lo {
            self.data.push_front(fill.clone());
            self.lo -= 1;
        }
        while pos > self.hi() {
            self.data.push_back(fill.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> + '_ {
        let lo = self.lo;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, t)| (lo + i as i64, t))
    }
}
