//! Binary-indexed tree over nonnegative weights with prefix-sum search.

#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
    values: Vec<f64>,
    // highest power of two <= len
    top: usize,
}

impl Fenwick {
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut tree = vec![0.0; n + 1];
        for i in 1..=n {
            tree[i] += values[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Fenwick {
            tree,
            values: values.to_vec(),
            top,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.values[i];
        self.values[i] = value;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    /// Sum of the first `i` weights.
    pub fn prefix(&self, i: usize) -> f64 {
        let mut j = i;
        let mut s = 0.0;
        while j > 0 {
            s += self.tree[j];
            j &= j - 1;
        }
        s
    }

    /// Smallest `i` with `prefix(i + 1) > u`, clamped to the last positive
    /// weight so rounding at the top end never selects an empty slot.
    pub fn find(&self, u: f64) -> usize {
        let mut pos = 0;
        let mut rem = u;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        let mut i = pos.min(self.values.len() - 1);
        while self.values[i] <= 0.0 && i > 0 {
            i -= 1;
        }
        while self.values[i] <= 0.0 && i + 1 < self.values.len() {
            i += 1;
        }
        i
    }
}
