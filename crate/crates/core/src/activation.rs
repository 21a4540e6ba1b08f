//! Conversions between ReLU networks and networks over an arbitrary
//! continuous piecewise-linear activation.

use crate::error::{precondition, Error, Result};
use crate::network::{Activation, Affine, Interval, Network, NetworkBuilder};
use crate::pwl::Pwl;

/// Breakpoint structure of a piecewise-linear activation viewed as a
/// function on ℝ (its carrier continued affinely beyond the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointData {
    pub breakpoints: Vec<f64>,
    /// `slopes[k]` is the slope left of `breakpoints[k]`; the last entry is
    /// the slope right of the last breakpoint.
    pub slopes: Vec<f64>,
    /// `ρ'(aₖ+) − ρ'(aₖ−)`.
    pub jumps: Vec<f64>,
    /// Distance from each breakpoint to its nearest neighbour, or 1 when the
    /// activation has a single breakpoint.
    pub separation: Vec<f64>,
}

impl BreakpointData {
    pub fn of(act: &Pwl) -> Result<Self> {
        let s = act.simplify();
        let xs = s.breakpoints();
        if xs.len() < 3 {
            return Err(precondition("activation is affine; fold it into the weights instead"));
        }
        let breakpoints = xs[1..xs.len() - 1].to_vec();
        let slopes = s.slopes();
        let jumps = slopes.windows(2).map(|w| w[1] - w[0]).collect();
        let m = breakpoints.len();
        let separation = (0..m)
            .map(|k| {
                if m == 1 {
                    return 1.0;
                }
                let left = if k > 0 {
                    breakpoints[k] - breakpoints[k - 1]
                } else {
                    f64::INFINITY
                };
                let right = if k + 1 < m {
                    breakpoints[k + 1] - breakpoints[k]
                } else {
                    f64::INFINITY
                };
                left.min(right)
            })
            .collect();
        Ok(Self {
            breakpoints,
            slopes,
            jumps,
            separation,
        })
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn left_derivative(&self, k: usize) -> f64 {
        self.slopes[k]
    }

    pub fn right_derivative(&self, k: usize) -> f64 {
        self.slopes[k + 1]
    }

    /// Index of the breakpoint with the largest `|jump|`, smallest on ties.
    pub fn best_conditioned(&self) -> usize {
        let mut best = 0;
        for k in 1..self.len() {
            if self.jumps[k].abs() > self.jumps[best].abs() {
                best = k;
            }
        }
        best
    }
}

/// `ρ(x) = c₀σ(a₁ − x) + Σₘ cₘσ(x − aₘ) + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluDecomposition {
    pub c0: f64,
    pub a1: f64,
    /// `(aₘ, cₘ)` for every breakpoint.
    pub terms: Vec<(f64, f64)>,
    pub h: f64,
}

impl ReluDecomposition {
    /// Derives the coefficients from the slopes and checks the result at the
    /// breakpoints and one point beyond each end.
    pub fn of(act: &Pwl) -> Result<Self> {
        let bd = BreakpointData::of(act)?;
        let a1 = bd.breakpoints[0];
        let mut terms = Vec::with_capacity(bd.len());
        for (k, &a) in bd.breakpoints.iter().enumerate() {
            let c = if k == 0 { bd.right_derivative(0) } else { bd.jumps[k] };
            terms.push((a, c));
        }
        let dec = Self {
            c0: -bd.left_derivative(0),
            a1,
            terms,
            h: act.eval_extended(a1),
        };
        let last = bd.breakpoints[bd.len() - 1];
        let probes = std::iter::once(a1 - 1.0)
            .chain(bd.breakpoints.iter().copied())
            .chain(std::iter::once(last + 1.0));
        for x in probes {
            let (want, got) = (act.eval_extended(x), dec.eval(x));
            if (want - got).abs() > 1e-9 * (1.0 + want.abs()) {
                return Err(Error::InvalidNetwork(format!(
                    "ReLU decomposition mismatch at {x}: {got} vs {want}"
                )));
            }
        }
        Ok(dec)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.c0 * (self.a1 - x).max(0.0) + self.h;
        for &(a, c) in &self.terms {
            v += c * (x - a).max(0.0);
        }
        v
    }

    /// ReLU units needed, not counting zero coefficients.
    pub fn unit_count(&self) -> usize {
        usize::from(self.c0 != 0.0) + self.terms.iter().filter(|t| t.1 != 0.0).count()
    }

    /// Emits the ReLU units for `ρ(pre)` into `layer` and returns the
    /// expression of the activation's value.
    pub fn expand(&self, b: &mut NetworkBuilder, pre: &Affine, layer: usize) -> Result<Affine> {
        let mut out = Affine::constant(self.h);
        if self.c0 != 0.0 {
            let u = b.unit_at(&(pre.scale(-1.0) + self.a1), Activation::Relu, layer)?;
            out = out.add_scaled(&Affine::node(u), self.c0);
        }
        for &(a, c) in &self.terms {
            if c != 0.0 {
                let u = b.unit_at(&(pre.clone() - a), Activation::Relu, layer)?;
                out = out.add_scaled(&Affine::node(u), c);
            }
        }
        Ok(out)
    }
}

/// Rewrites every piecewise-linear unit as a group of ReLU units in the same
/// layer; ReLU units are copied unchanged.
pub fn pwl_to_relu(net: &Network) -> Result<Network> {
    let mut b = NetworkBuilder::new(net.input_dim);
    let mut map: Vec<Vec<Affine>> = vec![b.inputs()];
    let n = net.layers.len();
    for (k, layer) in net.layers.iter().enumerate() {
        let mut row = Vec::with_capacity(layer.len());
        for unit in layer {
            let mut pre = Affine::constant(unit.bias);
            for e in &unit.edges {
                pre = pre.add_scaled(&map[e.layer][e.unit], e.weight);
            }
            if k + 1 == n {
                return Ok(b.finish(&pre));
            }
            let v = match &unit.activation {
                Activation::Relu => Affine::node(b.unit_at(&pre, Activation::Relu, k + 1)?),
                Activation::Pwl(p) => ReluDecomposition::of(p)?.expand(&mut b, &pre, k + 1)?,
                Activation::Rho => {
                    return Err(Error::Unsupported(
                        "rho is discontinuous and has no exact ReLU rewrite".into(),
                    ))
                }
                Activation::Linear => return Err(Error::InvalidNetwork("linear hidden unit".into())),
            };
            row.push(v);
        }
        map.push(row);
    }
    Err(Error::InvalidNetwork("network has no output layer".into()))
}

/// Rewrites a ReLU network over the activation `act`, exact on the box.
/// Each ReLU unit becomes two `act` units probing a neighbourhood of one
/// breakpoint small enough to contain no other.
pub fn relu_to_pwl(net: &Network, act: &Pwl, input_box: &[Interval]) -> Result<Network> {
    if net.activations().any(|a| *a != Activation::Relu) {
        return Err(precondition("relu_to_pwl needs a network of ReLU units"));
    }
    let bd = BreakpointData::of(act)?;
    let idx = bd.best_conditioned();
    let a = bd.breakpoints[idx];
    let r0 = bd.separation[idx];
    let jump = bd.jumps[idx];
    let act_a = act.eval_extended(a);
    let act_shift = act.eval_extended(a - r0 / 2.0);
    let bounds = net.preactivation_bounds(input_box)?;

    let mut b = NetworkBuilder::new(net.input_dim);
    let mut map: Vec<Vec<Affine>> = vec![b.inputs()];
    let n = net.layers.len();
    for (k, layer) in net.layers.iter().enumerate() {
        let mut row = Vec::with_capacity(layer.len());
        for (i, unit) in layer.iter().enumerate() {
            let mut pre = Affine::constant(unit.bias);
            for e in &unit.edges {
                pre = pre.add_scaled(&map[e.layer][e.unit], e.weight);
            }
            if k + 1 == n {
                return Ok(b.finish(&pre));
            }
            let mag = bounds[k][i].magnitude();
            let r = if mag > 0.0 { 1.25 * mag } else { 1.0 };
            let scale = r0 / (2.0 * r);
            let p1 = pre.scale(scale) + a;
            let p2 = pre.scale(scale) + (a - r0 / 2.0);
            let u1 = b.unit_at(&p1, Activation::Pwl(act.clone()), k + 1)?;
            let u2 = b.unit_at(&p2, Activation::Pwl(act.clone()), k + 1)?;
            let denom = jump * scale;
            let v = Affine::term(u1, 1.0 / denom)
                .add_scaled(&Affine::node(u2), -1.0 / denom)
                .shift((act_shift - act_a) / denom);
            row.push(v);
        }
        map.push(row);
    }
    Err(Error::InvalidNetwork("network has no output layer".into()))
}
