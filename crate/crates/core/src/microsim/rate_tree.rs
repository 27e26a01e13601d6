/// Complete binary sum tree over event channels. Internal nodes are always
/// recomputed as the sum of their children, never incremented, so the tree
/// carries no accumulated rounding drift.
#[derive(Debug, Clone)]
pub struct RateTree {
    capacity: usize,
    len: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    pub fn new(rates: &[f64]) -> Self {
        let capacity = rates.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * capacity];
        nodes[capacity..capacity + rates.len()].copy_from_slice(rates);
        let mut tree = Self {
            capacity,
            len: rates.len(),
            nodes,
        };
        tree.rebuild();
        tree
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn rate(&self, channel: usize) -> f64 {
        self.nodes[self.capacity + channel]
    }

    pub fn rates(&self) -> &[f64] {
        &self.nodes[self.capacity..self.capacity + self.len]
    }

    pub fn rebuild(&mut self) {
        for node in (1..self.capacity).rev() {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    pub fn set(&mut self, channel: usize, rate: f64) {
        self.set_range(channel, std::iter::once(rate));
    }

    /// Overwrites consecutive leaves starting at `first` and refreshes
    /// their common ancestors once per level.
    #[inline]
    pub fn set_range(&mut self, first: usize, rates: impl IntoIterator<Item = f64>) {
        let mut lo = self.capacity + first;
        let mut hi = lo;
        for (k, r) in rates.into_iter().enumerate() {
            debug_assert!(first + k < self.len);
            self.nodes[lo + k] = r;
            hi = lo + k;
        }
        while lo > 1 {
            lo >>= 1;
            hi >>= 1;
            for node in lo..=hi {
                self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            }
        }
    }

    /// Channel whose cumulative-rate interval contains `target`, for
    /// `target ∈ [0, total)`. Never lands on a zero-rate leaf while the
    /// total is positive.
    #[inline]
    pub fn select(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.capacity {
            let left = self.nodes[2 * node];
            if (target < left && left > 0.0) || self.nodes[2 * node + 1] <= 0.0 {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
        }
        node - self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_selection() {
        let mut t = RateTree::new(&[1.0, 0.0, 2.0, 3.0, 0.0]);
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.select(0.5), 0);
        assert_eq!(t.select(1.0), 2);
        assert_eq!(t.select(2.99), 2);
        assert_eq!(t.select(3.0), 3);
        assert_eq!(t.select(5.999), 3);
        // rounding past the end still lands on an enabled channel
        assert_eq!(t.select(6.0), 3);
        t.set_range(1, [4.0, 0.0]);
        assert_eq!(t.total(), 8.0);
        assert_eq!(t.select(4.9), 1);
        assert_eq!(t.rates(), &[1.0, 4.0, 0.0, 3.0, 0.0]);
    }

    proptest::proptest! {
        #[test]
        fn incremental_matches_rebuild(
            init in proptest::collection::vec(0.0f64..10.0, 1..300),
            edits in proptest::collection::vec((0usize..300, 0.0f64..10.0), 0..200),
        ) {
            let mut t = RateTree::new(&init);
            let mut flat = init.clone();
            for (i, r) in edits {
                let i = i % flat.len();
                t.set(i, r);
                flat[i] = r;
            }
            let fresh = RateTree::new(&flat);
            proptest::prop_assert_eq!(t.total(), fresh.total());
            proptest::prop_assert_eq!(t.rates(), fresh.rates());
        }
    }
}
