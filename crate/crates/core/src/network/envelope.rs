use super::{Activation, Edge, Network, Unit};
use crate::error::{precondition, Result};

/// Connections of the enveloping network with `m` hidden layers of `m` units
/// over `d` inputs, where every unit is wired to all inputs and to every
/// unit of every earlier layer.
pub fn envelope_connections(m: usize, d: usize) -> usize {
    m * m * d + m * m * m * (m - 1) / 2 + d + m * m
}

impl Network {
    /// Embeds a ReLU network with at most `m` hidden units into the fully
    /// cross-connected `m × m` architecture. Original unit `i` (in
    /// topological order) occupies slot 0 of hidden layer `i + 1`; every
    /// other connection carries weight zero.
    pub fn envelope_embed(&self, m: usize) -> Result<Network> {
        let units: Vec<(usize, usize, &Unit)> = self.hidden_units().collect();
        if m == 0 {
            return Err(precondition("envelope needs m >= 1"));
        }
        if units.len() > m {
            return Err(precondition(format!(
                "network has {} hidden units, more than the envelope size {m}",
                units.len()
            )));
        }
        if units.iter().any(|(_, _, u)| u.activation != Activation::Relu) {
            return Err(precondition("envelope embedding needs ReLU hidden units"));
        }
        // original (layer, unit) -> envelope hidden layer
        let mut place = vec![Vec::new(); self.layers.len()];
        for (i, (k, j, _)) in units.iter().enumerate() {
            let row: &mut Vec<usize> = &mut place[*k - 1];
            debug_assert_eq!(row.len(), *j);
            row.push(i + 1);
        }
        let d = self.input_dim;
        let full_edges = |layer: usize| -> Vec<Edge> {
            let mut v = Vec::with_capacity(d + m * (layer - 1));
            for u in 0..d {
                v.push(Edge {
                    layer: 0,
                    unit: u,
                    weight: 0.0,
                });
            }
            for l in 1..layer {
                for u in 0..m {
                    v.push(Edge {
                        layer: l,
                        unit: u,
                        weight: 0.0,
                    });
                }
            }
            v
        };
        let fill = |edges: &mut [Edge], src: &Unit| {
            for e in &src.edges {
                let idx = if e.layer == 0 {
                    e.unit
                } else {
                    d + (place[e.layer - 1][e.unit] - 1) * m
                };
                edges[idx].weight += e.weight;
            }
        };
        let mut layers = Vec::with_capacity(m + 1);
        for l in 1..=m {
            let mut row = Vec::with_capacity(m);
            for slot in 0..m {
                let mut edges = full_edges(l);
                let mut bias = 0.0;
                if slot == 0 {
                    if let Some((_, _, u)) = units.get(l - 1) {
                        fill(&mut edges, u);
                        bias = u.bias;
                    }
                }
                row.push(Unit::new(edges, bias, Activation::Relu));
            }
            layers.push(row);
        }
        let out = self.output();
        let mut edges = full_edges(m + 1);
        fill(&mut edges, out);
        layers.push(vec![Unit::new(edges, out.bias, Activation::Linear)]);
        Ok(Network { input_dim: d, layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{fig1, tooth_net};

    #[test]
    fn tooth_in_four_by_four() {
        let net = tooth_net();
        let env = net.envelope_embed(4).unwrap();
        assert!(env.validate().is_empty(), "{:?}", env.validate());
        let m = env.metrics();
        assert_eq!(m.depth, 6);
        assert_eq!(m.hidden_units, 16);
        assert_eq!(m.connections, envelope_connections(4, 1));
        assert_eq!(m.weights, 146);
        assert!(m.weights <= 4usize.pow(4));
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert_eq!(env.eval(&[x]).unwrap(), net.eval(&[x]).unwrap());
        }
    }

    #[test]
    fn exact_fit_and_overflow() {
        let net = tooth_net();
        let env = net.envelope_embed(3).unwrap();
        assert_eq!(env.metrics().hidden_units, 9);
        assert_eq!(env.eval(&[0.3]).unwrap(), net.eval(&[0.3]).unwrap());
        assert!(net.envelope_embed(2).is_err());
    }

    #[test]
    fn multilayer_embedding() {
        let net = fig1();
        let env = net.envelope_embed(7).unwrap();
        assert_eq!(env.metrics().connections, envelope_connections(7, 3));
        for x in [[0.1, 0.5, -0.3], [1.0, -1.0, 2.0], [0.0, 0.0, 0.0]] {
            assert_eq!(env.eval(&x).unwrap(), net.eval(&x).unwrap());
        }
    }
}
