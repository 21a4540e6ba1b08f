//! Layered feedforward networks with cross-layer edges.
//!
//! Layer indices follow the usual convention: layer 0 holds the inputs,
//! `layers[k - 1]` is layer `k`, and the last layer contains exactly one
//! linear output unit. Every unit sums its weighted inputs with correctly
//! rounded summation (see [`crate::sum`]).

mod builder;
mod envelope;
mod eval;
mod interval;
mod ops;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwl::Pwl;

pub use builder::{Affine, NetworkBuilder, NodeRef};
pub use envelope::envelope_connections;
pub use eval::Evaluator;
pub use interval::Interval;

/// Activation applied by a computation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `σ(x) = max(0, x)`.
    Relu,
    /// `ρ(x) = x` on `[0, 1)`, `0` elsewhere.
    Rho,
    /// No nonlinearity; only the output unit uses it.
    Linear,
    /// A continuous piecewise-linear function, continued affinely outside
    /// its stored domain.
    Pwl(Pwl),
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Rho => {
                if (0.0..1.0).contains(&z) {
                    z
                } else {
                    0.0
                }
            }
            Activation::Linear => z,
            Activation::Pwl(p) => p.eval_extended(z),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Rho => "rho",
            Activation::Linear => "linear",
            Activation::Pwl(_) => "pwl",
        }
    }
}

/// Incoming connection: source layer (0 = input), source unit, weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub layer: usize,
    pub unit: usize,
    pub weight: f64,
}

impl From<(usize, usize, f64)> for Edge {
    fn from((layer, unit, weight): (usize, usize, f64)) -> Self {
        Self { layer, unit, weight }
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.layer, e.unit, e.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub edges: Vec<Edge>,
    pub bias: f64,
    pub activation: Activation,
}

impl Unit {
    pub fn new(edges: Vec<Edge>, bias: f64, activation: Activation) -> Self {
        Self {
            edges,
            bias,
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    /// Computation layers; the input layer is implicit.
    pub layers: Vec<Vec<Unit>>,
}

/// Size of a network under the counting conventions used throughout the
/// crate: depth counts the input and output layers, and the number of
/// weights is connections plus computation units (one bias per unit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComplexityMetrics {
    pub depth: usize,
    pub hidden_units: usize,
    pub computation_units: usize,
    pub connections: usize,
    pub weights: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub layer: usize,
    pub unit: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            Some(u) => write!(f, "layer {} unit {}: {}", self.layer, u, self.message),
            None => write!(f, "layer {}: {}", self.layer, self.message),
        }
    }
}

impl Network {
    /// Output unit with no incoming edges and the given bias.
    pub fn constant(input_dim: usize, c: f64) -> Self {
        Self {
            input_dim,
            layers: vec![vec![Unit::new(vec![], c, Activation::Linear)]],
        }
    }

    pub fn zero(input_dim: usize) -> Self {
        Self::constant(input_dim, 0.0)
    }

    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    /// Units of network layer `k` (`k ≥ 1`).
    pub fn layer(&self, k: usize) -> &[Unit] {
        &self.layers[k - 1]
    }

    pub fn layer_width(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim
        } else {
            self.layers.get(k - 1).map_or(0, Vec::len)
        }
    }

    pub fn output(&self) -> &Unit {
        &self.layers[self.layers.len() - 1][0]
    }

    /// Hidden units in topological order, with their network layer index.
    pub fn hidden_units(&self) -> impl Iterator<Item = (usize, usize, &Unit)> {
        let n = self.layers.len().saturating_sub(1);
        self.layers[..n]
            .iter()
            .enumerate()
            .flat_map(|(k, l)| l.iter().enumerate().map(move |(i, u)| (k + 1, i, u)))
    }

    pub fn activations(&self) -> impl Iterator<Item = &Activation> {
        self.hidden_units().map(|(_, _, u)| &u.activation)
    }

    pub fn metrics(&self) -> ComplexityMetrics {
        let computation_units: usize = self.layers.iter().map(Vec::len).sum();
        let connections = self.layers.iter().flatten().map(|u| u.edges.len()).sum::<usize>();
        ComplexityMetrics {
            depth: self.depth(),
            hidden_units: computation_units.saturating_sub(1),
            computation_units,
            connections,
            weights: connections + computation_units,
        }
    }

    /// Lists every structural problem. An empty list means the network is
    /// well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let v = |layer, unit, message: String| Violation { layer, unit, message };
        if self.input_dim == 0 {
            out.push(v(0, None, "input dimension is zero".into()));
        }
        let Some(last) = self.layers.last() else {
            out.push(v(1, None, "no computation layers".into()));
            return out;
        };
        let out_layer = self.layers.len();
        if last.len() != 1 {
            out.push(v(
                out_layer,
                None,
                format!("output layer has {} units, expected exactly one", last.len()),
            ));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let lk = k + 1;
            let is_out = lk == out_layer;
            if layer.is_empty() && !is_out {
                out.push(v(lk, None, "empty hidden layer".into()));
            }
            for (i, unit) in layer.iter().enumerate() {
                match (&unit.activation, is_out) {
                    (Activation::Linear, false) => out.push(v(lk, Some(i), "hidden unit has linear activation".into())),
                    (a, true) if *a != Activation::Linear => out.push(v(
                        lk,
                        Some(i),
                        format!("output unit has {} activation, expected linear", a.name()),
                    )),
                    _ => {}
                }
                if !unit.bias.is_finite() {
                    out.push(v(lk, Some(i), format!("non-finite bias {}", unit.bias)));
                }
                for e in &unit.edges {
                    if e.layer >= lk {
                        out.push(v(
                            lk,
                            Some(i),
                            format!("backward edge from layer {} unit {}", e.layer, e.unit),
                        ));
                    } else if e.unit >= self.layer_width(e.layer) {
                        out.push(v(
                            lk,
                            Some(i),
                            format!("edge to missing unit {} of layer {}", e.unit, e.layer),
                        ));
                    }
                    if !e.weight.is_finite() {
                        out.push(v(lk, Some(i), format!("non-finite weight {}", e.weight)));
                    }
                }
            }
        }
        if out.is_empty() {
            for (layer, unit) in self.dead_units() {
                out.push(v(
                    layer,
                    Some(unit),
                    "dead unit: not on any path from the inputs to the output".into(),
                ));
            }
        }
        out
    }

    /// Hidden units not lying on a structural path from an input to the
    /// output. Assumes edges are in range.
    fn dead_units(&self) -> Vec<(usize, usize)> {
        let n = self.layers.len();
        let mut from_input: Vec<Vec<bool>> = Vec::with_capacity(n + 1);
        from_input.push(vec![true; self.input_dim]);
        for layer in &self.layers {
            let row = layer
                .iter()
                .map(|u| u.edges.iter().any(|e| from_input[e.layer][e.unit]))
                .collect();
            from_input.push(row);
        }
        let mut to_output: Vec<Vec<bool>> = (0..=n).map(|k| vec![false; self.layer_width(k)]).collect();
        to_output[n][0] = true;
        for k in (1..=n).rev() {
            for (i, u) in self.layers[k - 1].iter().enumerate() {
                if to_output[k][i] {
                    for e in &u.edges {
                        to_output[e.layer][e.unit] = true;
                    }
                }
            }
        }
        let mut dead = Vec::new();
        for k in 1..n {
            for i in 0..self.layers[k - 1].len() {
                if !(from_input[k][i] && to_output[k][i]) {
                    dead.push((k, i));
                }
            }
        }
        dead
    }

    /// Fails with [`Error::InvalidNetwork`] listing all violations.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(Error::InvalidNetwork(msgs.join("; ")))
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Evaluator::new(self).eval(x)
    }

    /// Values of every unit, layer by layer, starting with the inputs.
    pub fn eval_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Evaluator::new(self).trace(x)
    }

    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut ev = Evaluator::new(self);
        points.iter().map(|p| ev.eval(p)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and validates a network.
    pub fn from_json(s: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(s)?;
        net.check()?;
        Ok(net)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn e(layer: usize, unit: usize, weight: f64) -> Edge {
        Edge { layer, unit, weight }
    }

    pub(crate) fn relu(edges: Vec<Edge>, bias: f64) -> Unit {
        Unit::new(edges, bias, Activation::Relu)
    }

    /// Three inputs, hidden layers of 4 and 3 units, 16 connections.
    pub(crate) fn fig1() -> Network {
        let l1 = vec![
            relu(vec![e(0, 0, 1.0), e(0, 1, -0.5)], 0.1),
            relu(vec![e(0, 1, 0.7), e(0, 2, 0.2)], 0.0),
            relu(vec![e(0, 0, -0.3)], 0.2),
            relu(vec![e(0, 2, 1.1), e(0, 0, 0.4)], -0.1),
        ];
        let l2 = vec![
            relu(vec![e(1, 0, 0.5), e(1, 1, -1.0)], 0.0),
            relu(vec![e(1, 2, 0.8), e(0, 1, 0.6)], 0.3),
            relu(vec![e(1, 3, 1.2), e(1, 1, 0.9)], -0.2),
        ];
        let out = vec![Unit::new(
            vec![e(2, 0, 1.0), e(2, 1, -2.0), e(2, 2, 0.5)],
            0.0,
            Activation::Linear,
        )];
        Network {
            input_dim: 3,
            layers: vec![l1, l2, out],
        }
    }

    pub(crate) fn tooth_net() -> Network {
        Network {
            input_dim: 1,
            layers: vec![
                vec![
                    relu(vec![e(0, 0, 1.0)], 0.0),
                    relu(vec![e(0, 0, 1.0)], -0.5),
                    relu(vec![e(0, 0, 1.0)], -1.0),
                ],
                vec![Unit::new(
                    vec![e(1, 0, 2.0), e(1, 1, -4.0), e(1, 2, 2.0)],
                    0.0,
                    Activation::Linear,
                )],
            ],
        }
    }

    #[test]
    fn fig1_metrics() {
        let net = fig1();
        assert!(net.validate().is_empty(), "{:?}", net.validate());
        let m = net.metrics();
        assert_eq!(m.depth, 4);
        assert_eq!(m.computation_units, 8);
        assert_eq!(m.hidden_units, 7);
        assert_eq!(m.connections, 16);
        assert_eq!(m.weights, 24);
    }

    #[test]
    fn single_output_metrics() {
        let net = Network {
            input_dim: 1,
            layers: vec![vec![Unit::new(vec![e(0, 0, 1.0)], 0.0, Activation::Linear)]],
        };
        assert!(net.validate().is_empty());
        let m = net.metrics();
        assert_eq!((m.depth, m.connections, m.computation_units, m.weights), (2, 1, 1, 2));
    }

    #[test]
    fn tooth_eval_and_metrics() {
        let net = tooth_net();
        assert_eq!(net.eval(&[0.5]).unwrap(), 1.0);
        assert_eq!(net.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(net.eval(&[1.0]).unwrap(), 0.0);
        let m = net.metrics();
        assert_eq!((m.depth, m.hidden_units), (3, 3));
        assert!(matches!(
            net.eval(&[0.1, 0.2]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn zero_weights_evaluate_to_zero() {
        let mut net = fig1();
        for u in net.layers.iter_mut().flatten() {
            u.bias = 0.0;
            for ed in &mut u.edges {
                ed.weight = 0.0;
            }
        }
        for x in [[0.3, -2.0, 5.0], [1.0, 1.0, 1.0]] {
            assert_eq!(net.eval(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn validate_catches_backward_edges() {
        let mut net = fig1();
        net.layers[1][0].edges.push(e(3, 0, 1.0));
        let v = net.validate();
        assert!(v.iter().any(|v| v.message.contains("backward edge")), "{v:?}");
        assert_eq!(v[0].layer, 2);
        assert_eq!(v[0].unit, Some(0));

        let mut net = fig1();
        net.layers[1][0].edges.push(e(2, 1, 1.0));
        assert!(net.validate().iter().any(|v| v.message.contains("backward edge")));
    }

    #[test]
    fn validate_catches_output_problems() {
        let mut net = fig1();
        let extra = net.layers[2][0].clone();
        net.layers[2].push(extra);
        assert!(net
            .validate()
            .iter()
            .any(|v| v.message.contains("expected exactly one")));

        let mut net = fig1();
        net.layers[2][0].activation = Activation::Relu;
        assert!(!net.validate().is_empty());
    }

    #[test]
    fn validate_catches_dead_units() {
        let mut net = tooth_net();
        net.layers[0].push(relu(vec![e(0, 0, 1.0)], 0.0));
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].layer, v[0].unit), (1, Some(3)));
        assert!(v[0].message.contains("dead"));
    }

    #[test]
    fn rho_is_half_open() {
        let a = Activation::Rho;
        assert_eq!(a.apply(1.0), 0.0);
        assert_eq!(a.apply(0.0), 0.0);
        assert_eq!(a.apply(0.999), 0.999);
        assert_eq!(a.apply(-0.1), 0.0);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut net = fig1();
        net.layers[0][0].edges[0].weight = 0.1 + 0.2;
        net.layers[0][1].bias = std::f64::consts::PI / 7.0;
        net.layers[0][2].activation = Activation::Pwl(Pwl::tooth());
        net.layers[1][2].activation = Activation::Rho;
        let s = net.to_json().unwrap();
        let back = Network::from_json(&s).unwrap();
        assert_eq!(back, net);
        assert!(s.contains(r#""activation":"linear""#));
        assert!(s.contains(r#""activation":{"pwl":{"domain""#));
        assert!(s.contains("[0,0,0.30000000000000004]"));
    }

    #[test]
    fn from_json_rejects_invalid() {
        let s = r#"{"input_dim":1,"layers":[[{"edges":[[1,0,1.0]],"bias":0,"activation":"linear"}]]}"#;
        assert!(matches!(Network::from_json(s), Err(Error::InvalidNetwork(_))));
    }
}
