//! Correctly rounded floating-point summation.
//!
//! Every computation unit accumulates its weighted inputs through [`ExactSum`],
//! so a unit's value depends only on the multiset of products it receives and
//! never on the order of its incoming edges. Identities such as
//! `×̃(x, 0) = 0` and `×̃(x, y) = ×̃(y, x)` then hold bit-for-bit.

/// Shewchuk-style accumulator of non-overlapping partials.
#[derive(Debug, Default, Clone)]
pub struct ExactSum {
    partials: Vec<f64>,
    naive: f64,
    non_finite: bool,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.partials.clear();
        self.naive = 0.0;
        self.non_finite = false;
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.non_finite = true;
        }
        self.naive += x;
        if self.non_finite {
            return;
        }
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// The sum of everything added so far, rounded once.
    pub fn value(&self) -> f64 {
        if self.non_finite {
            return self.naive;
        }
        let p = &self.partials;
        let Some(&last) = p.last() else {
            return 0.0;
        };
        let mut hi = last;
        let mut lo = 0.0;
        let mut n = p.len() - 1;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: the remaining partials decide the rounding direction
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Correctly rounded sum of `terms`.
pub fn exact_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = ExactSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_exactly() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1, 0.2, -0.1, -0.2]), 0.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn matches_known_values() {
        let tenth = [0.1; 10];
        assert_eq!(exact_sum(tenth), 1.0);
        assert_eq!(exact_sum([1.0, 1e-16, 1e-16]), 1.0000000000000002);
    }

    proptest! {
        #[test]
        fn order_independent(mut v in proptest::collection::vec(-1e6f64..1e6, 0..40), seed in 0usize..1000) {
            let a = exact_sum(v.iter().copied());
            let n = v.len().max(1);
            v.rotate_left(seed % n);
            v.reverse();
            prop_assert_eq!(a, exact_sum(v.iter().copied()));
        }
    }
}
