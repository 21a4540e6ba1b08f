use super::Network;
use crate::error::{Error, Result};
use crate::sum::ExactSum;

/// Reusable forward evaluator holding scratch buffers for one network.
pub struct Evaluator<'a> {
    net: &'a Network,
    offsets: Vec<usize>,
    values: Vec<f64>,
    acc: ExactSum,
}

impl<'a> Evaluator<'a> {
    pub fn new(net: &'a Network) -> Self {
        let mut offsets = Vec::with_capacity(net.layers.len() + 1);
        let mut total = net.input_dim;
        offsets.push(0);
        for l in &net.layers {
            offsets.push(total);
            total += l.len();
        }
        Self {
            net,
            offsets,
            values: vec![0.0; total],
            acc: ExactSum::new(),
        }
    }

    fn forward(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.net.input_dim {
            return Err(Error::Dimension {
                expected: self.net.input_dim,
                got: x.len(),
            });
        }
        self.values[..x.len()].copy_from_slice(x);
        for (k, layer) in self.net.layers.iter().enumerate() {
            let base = self.offsets[k + 1];
            for (i, unit) in layer.iter().enumerate() {
                self.acc.clear();
                for e in &unit.edges {
                    self.acc.add(e.weight * self.values[self.offsets[e.layer] + e.unit]);
                }
                self.acc.add(unit.bias);
                self.values[base + i] = unit.activation.apply(self.acc.value());
            }
        }
        Ok(())
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.forward(x)?;
        Ok(self.values[self.values.len() - 1])
    }

    /// Adds the products feeding the output unit, each weight scaled by
    /// `scale`, to `acc`. Summing these over several networks reproduces the
    /// output of their weighted parallel sum exactly.
    pub fn accumulate_output(&mut self, x: &[f64], scale: f64, acc: &mut ExactSum) -> Result<()> {
        self.forward(x)?;
        let out = self.net.output();
        for e in &out.edges {
            acc.add((e.weight * scale) * self.values[self.offsets[e.layer] + e.unit]);
        }
        acc.add(out.bias * scale);
        Ok(())
    }

    pub fn trace(&mut self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.forward(x)?;
        let mut out = Vec::with_capacity(self.offsets.len());
        for k in 0..self.offsets.len() {
            let start = self.offsets[k];
            let end = self.offsets.get(k + 1).copied().unwrap_or(self.values.len());
            out.push(self.values[start..end].to_vec());
        }
        Ok(out)
    }
}
