use std::ops::{Add, Mul, Neg, Sub};

use super::{Activation, Edge, Network, Unit};
use crate::error::{precondition, Error, Result};

/// A unit of a network under construction; layer 0 addresses the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub layer: usize,
    pub unit: usize,
}

/// An affine expression `Σ wᵢ·nodeᵢ + bias` over existing units.
///
/// Terms stay sorted by node and are never dropped when their weight is
/// zero, so the wiring of a construction does not depend on its weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    terms: Vec<(NodeRef, f64)>,
    bias: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![], bias: c }
    }

    pub fn node(n: NodeRef) -> Self {
        Self::term(n, 1.0)
    }

    pub fn term(n: NodeRef, w: f64) -> Self {
        Self {
            terms: vec![(n, w)],
            bias: 0.0,
        }
    }

    pub fn input(i: usize) -> Self {
        Self::node(NodeRef { layer: 0, unit: i })
    }

    pub fn terms(&self) -> &[(NodeRef, f64)] {
        &self.terms
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Layer of the deepest referenced unit; 0 for constants and inputs.
    pub fn level(&self) -> usize {
        self.terms.iter().map(|(n, _)| n.layer).max().unwrap_or(0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(n, w)| (n, w * c)).collect(),
            bias: self.bias * c,
        }
    }

    pub fn shift(&self, c: f64) -> Self {
        Self {
            terms: self.terms.clone(),
            bias: self.bias + c,
        }
    }

    /// `self + c·other`, merging terms on shared nodes.
    pub fn add_scaled(&self, other: &Affine, c: f64) -> Self {
        let (a, b) = (&self.terms, &other.terms);
        let mut terms = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                terms.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                terms.push((b[j].0, b[j].1 * c));
                j += 1;
            } else {
                terms.push((a[i].0, a[i].1 + b[j].1 * c));
                i += 1;
                j += 1;
            }
        }
        Self {
            terms,
            bias: self.bias + other.bias * c,
        }
    }

    pub fn sum<'a, I: IntoIterator<Item = (f64, &'a Affine)>>(parts: I) -> Self {
        parts
            .into_iter()
            .fold(Affine::default(), |acc, (c, a)| acc.add_scaled(a, c))
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(self, rhs: Affine) -> Affine {
        self.add_scaled(&rhs, 1.0)
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(self, rhs: Affine) -> Affine {
        self.add_scaled(&rhs, -1.0)
    }
}

impl Add<f64> for Affine {
    type Output = Affine;
    fn add(self, rhs: f64) -> Affine {
        self.shift(rhs)
    }
}

impl Sub<f64> for Affine {
    type Output = Affine;
    fn sub(self, rhs: f64) -> Affine {
        self.shift(-rhs)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(self, rhs: f64) -> Affine {
        self.scale(rhs)
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scale(-1.0)
    }
}

/// Incremental network construction. Units are placed as early as their
/// inputs allow unless a layer is requested explicitly; linear combinations
/// never become units of their own but are folded into their consumers.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_dim: usize,
    layers: Vec<Vec<Unit>>,
}

impl NetworkBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> Affine {
        assert!(i < self.input_dim, "input {i} out of range");
        Affine::input(i)
    }

    pub fn inputs(&self) -> Vec<Affine> {
        (0..self.input_dim).map(Affine::input).collect()
    }

    /// Number of hidden layers created so far.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_units(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn unit(&mut self, pre: &Affine, activation: Activation) -> NodeRef {
        let layer = pre.level() + 1;
        self.place(pre, activation, layer)
    }

    /// Places a unit in a specific hidden layer, which must lie after every
    /// unit `pre` refers to.
    pub fn unit_at(&mut self, pre: &Affine, activation: Activation, layer: usize) -> Result<NodeRef> {
        if layer <= pre.level() {
            return Err(precondition(format!(
                "cannot place a unit in layer {layer}: its inputs reach layer {}",
                pre.level()
            )));
        }
        Ok(self.place(pre, activation, layer))
    }

    fn place(&mut self, pre: &Affine, activation: Activation, layer: usize) -> NodeRef {
        debug_assert!(pre
            .terms
            .iter()
            .all(|(n, _)| n.layer == 0 && n.unit < self.input_dim
                || n.layer >= 1 && n.unit < self.layers[n.layer - 1].len()));
        while self.layers.len() < layer {
            self.layers.push(Vec::new());
        }
        let edges = pre
            .terms
            .iter()
            .map(|&(n, w)| Edge {
                layer: n.layer,
                unit: n.unit,
                weight: w,
            })
            .collect();
        let slot = &mut self.layers[layer - 1];
        slot.push(Unit::new(edges, pre.bias, activation));
        NodeRef {
            layer,
            unit: slot.len() - 1,
        }
    }

    pub fn relu(&mut self, pre: &Affine) -> Affine {
        Affine::node(self.unit(pre, Activation::Relu))
    }

    /// Copies the hidden units of `net` with its inputs replaced by the given
    /// expressions and returns the expression of its output. A unit in layer
    /// `k` of `net` lands in layer `k + max level of inputs`, so the layer
    /// structure of `net` is preserved up to a shift.
    pub fn embed(&mut self, net: &Network, inputs: &[Affine]) -> Result<Affine> {
        if inputs.len() != net.input_dim {
            return Err(Error::Dimension {
                expected: net.input_dim,
                got: inputs.len(),
            });
        }
        let base = inputs.iter().map(Affine::level).max().unwrap_or(0);
        let mut map: Vec<Vec<Affine>> = vec![inputs.to_vec()];
        let n = net.layers.len();
        for (k, layer) in net.layers.iter().enumerate() {
            let mut row = Vec::with_capacity(layer.len());
            for unit in layer {
                let mut pre = Affine::constant(unit.bias);
                for e in &unit.edges {
                    pre = pre.add_scaled(&map[e.layer][e.unit], e.weight);
                }
                if k + 1 == n {
                    return Ok(pre);
                }
                let at = (k + 1 + base).max(pre.level() + 1);
                row.push(Affine::node(self.place(&pre, unit.activation.clone(), at)));
            }
            map.push(row);
        }
        Err(Error::InvalidNetwork("network has no output layer".into()))
    }

    /// Adds the output unit after the last hidden layer.
    pub fn finish(self, out: &Affine) -> Network {
        let mut layers = self.layers;
        debug_assert!(out.level() <= layers.len());
        let edges = out
            .terms
            .iter()
            .map(|&(n, w)| Edge {
                layer: n.layer,
                unit: n.unit,
                weight: w,
            })
            .collect();
        layers.push(vec![Unit::new(edges, out.bias, Activation::Linear)]);
        Network {
            input_dim: self.input_dim,
            layers,
        }
    }
}
