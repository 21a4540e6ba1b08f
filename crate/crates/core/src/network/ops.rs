use super::{Activation, Affine, Network, NetworkBuilder};
use crate::error::{precondition, Error, Result};
use crate::pwl::Pwl;

impl Network {
    /// `Σ cᵢ·netᵢ(x)` as one network: the summands run in parallel and share
    /// a single output unit.
    pub fn linear_combination(parts: &[(f64, &Network)]) -> Result<Network> {
        let Some((_, first)) = parts.first() else {
            return Err(precondition("linear combination of no networks"));
        };
        let d = first.input_dim;
        let mut b = NetworkBuilder::new(d);
        let xs = b.inputs();
        let mut out = Affine::default();
        for (c, net) in parts {
            if net.input_dim != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: net.input_dim,
                });
            }
            let y = b.embed(net, &xs)?;
            out = out.add_scaled(&y, *c);
        }
        Ok(b.finish(&out))
    }

    pub fn parallel_sum(a: &Network, b: &Network, ca: f64, cb: f64) -> Result<Network> {
        Self::linear_combination(&[(ca, a), (cb, b)])
    }

    /// `c·net(x)`: only the output unit changes.
    pub fn scaled(&self, c: f64) -> Network {
        let mut net = self.clone();
        let last = net.layers.len() - 1;
        let out = &mut net.layers[last][0];
        out.bias *= c;
        for e in &mut out.edges {
            e.weight *= c;
        }
        net
    }

    /// `x ↦ net(A x + b)` where `A` has one row per input of `net`.
    pub fn affine_precompose(&self, a: &[Vec<f64>], shift: &[f64]) -> Result<Network> {
        if a.len() != self.input_dim || shift.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: a.len().min(shift.len()),
            });
        }
        let new_dim = a.first().map_or(0, Vec::len);
        if new_dim == 0 || a.iter().any(|r| r.len() != new_dim) {
            return Err(precondition("substitution matrix must be rectangular and nonempty"));
        }
        let mut b = NetworkBuilder::new(new_dim);
        let inputs: Vec<Affine> = a
            .iter()
            .zip(shift)
            .map(|(row, &s)| {
                let mut e = Affine::constant(s);
                for (j, &w) in row.iter().enumerate() {
                    if w != 0.0 {
                        e = e.add_scaled(&Affine::input(j), w);
                    }
                }
                e
            })
            .collect();
        let out = b.embed(self, &inputs)?;
        let net = b.finish(&out);
        debug_assert_eq!(net.depth(), self.depth());
        Ok(net)
    }

    /// The exact piecewise-linear function computed by a one-input network
    /// on `[lo, hi]`, obtained by propagating [`Pwl`] values unit by unit.
    pub fn extract_pwl(&self, lo: f64, hi: f64) -> Result<Pwl> {
        if self.input_dim != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: self.input_dim,
            });
        }
        if self.activations().any(|a| *a == Activation::Rho) {
            return Err(Error::Unsupported(
                "exact extraction of networks with discontinuous rho units".into(),
            ));
        }
        let id = Pwl::identity(lo, hi)?;
        let zero = Pwl::zero(lo, hi)?;
        let mut vals: Vec<Vec<Pwl>> = vec![vec![id]];
        for layer in &self.layers {
            let mut row = Vec::with_capacity(layer.len());
            for unit in layer {
                let mut terms: Vec<(f64, &Pwl)> =
                    unit.edges.iter().map(|e| (e.weight, &vals[e.layer][e.unit])).collect();
                if terms.is_empty() {
                    terms.push((0.0, &zero));
                }
                let pre = Pwl::linear_combine(&terms, unit.bias)?;
                let v = match &unit.activation {
                    Activation::Relu => pre.relu(),
                    Activation::Linear => pre,
                    Activation::Pwl(act) => act.compose_extended(&pre),
                    Activation::Rho => unreachable!(),
                };
                row.push(v);
            }
            vals.push(row);
        }
        Ok(vals.pop().and_then(|mut r| r.pop()).expect("output unit"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{fig1, tooth_net};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn extract_tooth() {
        let f = tooth_net().extract_pwl(0.0, 1.0).unwrap();
        assert_eq!(f.sup_distance(&Pwl::tooth()).unwrap(), 0.0);
        assert_eq!(f.piece_count(), 2);
        let z = Network::zero(1).extract_pwl(0.0, 1.0).unwrap();
        assert_eq!(z.range(), (0.0, 0.0));
        assert_eq!(z.piece_count(), 1);
    }

    #[test]
    fn extract_refuses_rho() {
        let mut net = tooth_net();
        net.layers[0][1].activation = Activation::Rho;
        assert!(matches!(net.extract_pwl(0.0, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn parallel_sum_cancels() {
        let a = fig1();
        let net = Network::parallel_sum(&a, &a, 1.0, -1.0).unwrap();
        assert!(net.validate().is_empty());
        assert_eq!(net.depth(), a.depth());
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert_eq!(net.eval(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn parallel_sum_dimension_mismatch() {
        assert!(Network::parallel_sum(&fig1(), &tooth_net(), 1.0, 1.0).is_err());
    }

    #[test]
    fn precompose_identity_and_scaling() {
        let net = fig1();
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let same = net.affine_precompose(&id, &[0.0; 3]).unwrap();
        assert_eq!(same.metrics(), net.metrics());
        for x in [[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]] {
            assert_eq!(same.eval(&x).unwrap(), net.eval(&x).unwrap());
        }

        let g2 = tooth_net().affine_precompose(&[vec![2.0]], &[0.0]).unwrap();
        let g = Pwl::tooth();
        for i in 0..=100 {
            let x = i as f64 / 200.0;
            assert!((g2.eval(&[x]).unwrap() - g.eval(2.0 * x).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn precompose_line_through_two_inputs() {
        let net = fig1();
        let x0 = [0.2, -0.1, 0.4];
        let v = [0.5, 0.3, -0.2];
        let a: Vec<Vec<f64>> = v.iter().map(|&vi| vec![vi]).collect();
        let line = net.affine_precompose(&a, &x0).unwrap();
        assert_eq!(line.input_dim, 1);
        assert_eq!(line.metrics().computation_units, net.metrics().computation_units);
        assert_eq!(line.depth(), net.depth());
        for i in 0..=20 {
            let t = i as f64 / 10.0 - 1.0;
            let p: Vec<f64> = (0..3).map(|k| x0[k] + t * v[k]).collect();
            assert!((line.eval(&[t]).unwrap() - net.eval(&p).unwrap()).abs() < 1e-12);
        }
    }

    fn random_net(seed: u64, d: usize) -> Network {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut b = NetworkBuilder::new(d);
        let mut pool: Vec<Affine> = b.inputs();
        let n = rng.gen_range(1..8);
        for _ in 0..n {
            let mut pre = Affine::constant(rng.gen_range(-1.0..1.0));
            for src in &pool {
                if rng.gen_bool(0.6) {
                    pre = pre.add_scaled(src, rng.gen_range(-2.0..2.0));
                }
            }
            if pre.terms().is_empty() {
                pre = pre.add_scaled(&pool[0], 1.0);
            }
            pool.push(b.relu(&pre));
        }
        let out = Affine::sum(pool.iter().map(|a| (1.0, a)));
        b.finish(&out)
    }

    proptest! {
        #[test]
        fn parallel_sum_is_exact_and_additive(s1 in 0u64..1000, s2 in 0u64..1000,
                ca in -3.0f64..3.0, cb in -3.0f64..3.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let a = random_net(s1, 2);
            let b = random_net(s2, 2);
            let net = Network::parallel_sum(&a, &b, ca, cb).unwrap();
            let (ma, mb, m) = (a.metrics(), b.metrics(), net.metrics());
            prop_assert_eq!(m.hidden_units, ma.hidden_units + mb.hidden_units);
            prop_assert_eq!(m.depth, ma.depth.max(mb.depth));
            prop_assert_eq!(m.weights, m.connections + m.computation_units);
            let want = ca * a.eval(&[x, y]).unwrap() + cb * b.eval(&[x, y]).unwrap();
            let got = net.eval(&[x, y]).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }

        #[test]
        fn extract_matches_eval(seed in 0u64..5000) {
            let net = random_net(seed, 1);
            let f = net.extract_pwl(-2.0, 2.0).unwrap();
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            for _ in 0..100 {
                let x = rng.gen_range(-2.0..=2.0);
                prop_assert!((f.eval(x).unwrap() - net.eval(&[x]).unwrap()).abs() <= 1e-9);
            }
            let m = net.metrics();
            let bound = (2.0 * m.hidden_units as f64).powi(m.depth as i32 - 2);
            prop_assert!(f.piece_count() as f64 <= bound);
        }
    }
}
