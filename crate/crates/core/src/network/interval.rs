use serde::{Deserialize, Serialize};

use super::{Activation, Network};
use crate::error::{precondition, Error, Result};

/// Closed interval used for bound propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(precondition(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn scale(self, w: f64) -> Self {
        let (a, b) = (self.lo * w, self.hi * w);
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    /// Widens both ends by a relative margin to absorb rounding.
    fn widen(self) -> Self {
        let pad = 4.0 * f64::EPSILON * self.magnitude() + f64::MIN_POSITIVE;
        Self {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }

    fn through(self, act: &Activation) -> Self {
        match act {
            Activation::Relu => Self {
                lo: self.lo.max(0.0),
                hi: self.hi.max(0.0),
            },
            Activation::Linear => self,
            Activation::Rho => Self {
                lo: 0.0,
                hi: self.hi.clamp(0.0, 1.0),
            },
            Activation::Pwl(p) => {
                let mut lo = p.eval_extended(self.lo).min(p.eval_extended(self.hi));
                let mut hi = p.eval_extended(self.lo).max(p.eval_extended(self.hi));
                for (&x, &y) in p.breakpoints().iter().zip(p.values()) {
                    if self.contains(x) {
                        lo = lo.min(y);
                        hi = hi.max(y);
                    }
                }
                Self { lo, hi }
            }
        }
    }
}

impl Network {
    /// Enclosures of every computation unit's pre-activation value over the
    /// input box, by interval arithmetic.
    pub fn preactivation_bounds(&self, input_box: &[Interval]) -> Result<Vec<Vec<Interval>>> {
        if input_box.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: input_box.len(),
            });
        }
        let mut post: Vec<Vec<Interval>> = vec![input_box.to_vec()];
        let mut pre_all = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre_row = Vec::with_capacity(layer.len());
            let mut post_row = Vec::with_capacity(layer.len());
            for unit in layer {
                let mut acc = Interval::point(unit.bias);
                for e in &unit.edges {
                    let s = post[e.layer][e.unit].scale(e.weight);
                    acc.lo += s.lo;
                    acc.hi += s.hi;
                }
                let acc = acc.widen();
                pre_row.push(acc);
                post_row.push(acc.through(&unit.activation));
            }
            pre_all.push(pre_row);
            post.push(post_row);
        }
        Ok(pre_all)
    }
}
