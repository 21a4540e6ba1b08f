//! Tooth, sawtooth, squaring and multiplication networks.
//!
//! The `*_expr` functions emit units into a [`NetworkBuilder`] and return the
//! affine expression of the result, so larger constructions can reuse them
//! without an intermediate output unit.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};
use crate::network::{Affine, Network, NetworkBuilder};

/// `g(z) = 2σ(z) − 4σ(z − ½) + 2σ(z − 1)`, one hidden layer of three units.
pub fn tooth_expr(b: &mut NetworkBuilder, z: &Affine) -> Affine {
    let u0 = b.relu(z);
    let u1 = b.relu(&z.shift(-0.5));
    let u2 = b.relu(&z.shift(-1.0));
    Affine::sum([(2.0, &u0), (-4.0, &u1), (2.0, &u2)])
}

/// `|z| = σ(z) + σ(−z)`.
pub fn abs_expr(b: &mut NetworkBuilder, z: &Affine) -> Affine {
    let p = b.relu(z);
    let n = b.relu(&z.scale(-1.0));
    p + n
}

/// `f_m(u) = u − Σₛ gₛ(u)/4ˢ` for `u ∈ [0, 1]`: one layer per tooth, every
/// tooth also feeding the result directly.
pub fn square_expr(b: &mut NetworkBuilder, u: &Affine, m: u32) -> Affine {
    let mut acc = u.clone();
    let mut cur = u.clone();
    let mut w = 1.0;
    for _ in 0..m {
        cur = tooth_expr(b, &cur);
        w *= 0.25;
        acc = acc.add_scaled(&cur, -w);
    }
    acc
}

/// Guaranteed sup error `2^{−2m−2}` of the squaring network `f_m`.
pub fn square_error(m: u32) -> f64 {
    2f64.powi(-2 * m as i32 - 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareApproxParams {
    pub m: u32,
    pub error: f64,
}

impl SquareApproxParams {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(precondition("squaring network needs m >= 1"));
        }
        Ok(Self {
            m,
            error: square_error(m),
        })
    }

    pub fn for_error(delta: f64) -> Result<Self> {
        Self::new(square_depth_for_error(delta)?)
    }
}

/// Smallest `m ≥ 1` with `2^{−2m−2} ≤ δ`.
pub fn square_depth_for_error(delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(precondition(format!("target error {delta} must lie in (0, 1)")));
    }
    let mut m = 1;
    while square_error(m) > delta {
        m += 1;
    }
    Ok(m)
}

pub fn build_tooth() -> Network {
    build_sawtooth(1).expect("s = 1 is valid")
}

/// `g_s`, the `s`-fold composition of the tooth; depth `s + 2`.
pub fn build_sawtooth(s: u32) -> Result<Network> {
    if s == 0 {
        return Err(precondition("sawtooth needs s >= 1"));
    }
    let mut b = NetworkBuilder::new(1);
    let mut cur = b.input(0);
    for _ in 0..s {
        cur = tooth_expr(&mut b, &cur);
    }
    Ok(b.finish(&cur))
}

/// The squaring approximant `f_m` on `[0, 1]`: depth `m + 2`, `3m` hidden
/// units, sup error `2^{−2m−2}`.
pub fn build_square(m: u32) -> Result<Network> {
    SquareApproxParams::new(m)?;
    let mut b = NetworkBuilder::new(1);
    let x = b.input(0);
    let y = square_expr(&mut b, &x, m);
    Ok(b.finish(&y))
}

pub fn build_abs() -> Network {
    let mut b = NetworkBuilder::new(1);
    let x = b.input(0);
    let y = abs_expr(&mut b, &x);
    b.finish(&y)
}

/// Parameters of the approximate multiplier on `[−M, M]²`.
///
/// `×̃(x, y) = 2M²(f(|x+y|/2M) − f(|x|/2M) − f(|y|/2M))` with `f` a squaring
/// network of error `δ`; the three errors add up to at most `6M²δ`, so
/// `δ = ε/(6M²)` gives the target `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierParams {
    pub bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub m: u32,
}

impl MultiplierParams {
    pub fn new(bound: f64, epsilon: f64) -> Result<Self> {
        if !(bound >= 1.0 && bound.is_finite()) {
            return Err(precondition(format!("multiplier bound {bound} must be >= 1")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(precondition(format!("multiplier error {epsilon} must lie in (0, 1)")));
        }
        let delta = epsilon / (6.0 * bound * bound);
        Ok(Self {
            bound,
            epsilon,
            delta,
            m: square_depth_for_error(delta)?,
        })
    }

    /// Depth of the standalone multiplier network.
    pub fn depth(&self) -> usize {
        self.m as usize + 3
    }
}

/// Approximate product of two expressions bounded by `p.bound` in modulus.
/// Returns zero exactly when either argument evaluates to zero, provided
/// that argument's expression has zero bias.
pub fn multiply_expr(b: &mut NetworkBuilder, x: &Affine, y: &Affine, p: &MultiplierParams) -> Affine {
    let inv = 1.0 / (2.0 * p.bound);
    let mut chain = |z: &Affine| {
        let u = abs_expr(b, z).scale(inv);
        square_expr(b, &u, p.m)
    };
    let sxy = chain(&x.add_scaled(y, 1.0));
    let sx = chain(x);
    let sy = chain(y);
    let c = 2.0 * p.bound * p.bound;
    Affine::sum([(c, &sxy), (-c, &sx), (-c, &sy)])
}

pub fn build_multiplier(bound: f64, epsilon: f64) -> Result<Network> {
    let p = MultiplierParams::new(bound, epsilon)?;
    let mut b = NetworkBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let z = multiply_expr(&mut b, &x, &y, &p);
    Ok(b.finish(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::Pwl;

    #[test]
    fn tooth_network() {
        let net = build_tooth();
        assert_eq!(net.eval(&[0.5]).unwrap(), 1.0);
        assert_eq!(net.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(net.eval(&[1.0]).unwrap(), 0.0);
        let m = net.metrics();
        assert_eq!((m.depth, m.hidden_units), (3, 3));
        let f = net.extract_pwl(0.0, 1.0).unwrap();
        assert_eq!(f.piece_count(), 2);
        assert_eq!(f.sup_distance(&Pwl::tooth()).unwrap(), 0.0);
    }

    #[test]
    fn sawtooth_networks() {
        let g2 = build_sawtooth(2).unwrap();
        assert_eq!(g2.eval(&[0.25]).unwrap(), 1.0);
        assert_eq!(g2.eval(&[0.5]).unwrap(), 0.0);
        assert_eq!(build_sawtooth(1).unwrap(), build_tooth());
        for s in 1..=10 {
            let net = build_sawtooth(s).unwrap();
            assert_eq!(net.depth(), s as usize + 2);
            let f = net.extract_pwl(0.0, 1.0).unwrap();
            let oracle = Pwl::sawtooth(s).unwrap();
            assert!(f.sup_distance(&oracle).unwrap() <= 1e-12);
            assert_eq!(f.piece_count(), 1 << s);
        }
        assert!(build_sawtooth(0).is_err());
    }

    #[test]
    fn square_examples() {
        let f1 = build_square(1).unwrap();
        assert_eq!(f1.eval(&[0.25]).unwrap(), 0.125);
        assert_eq!((f1.eval(&[0.25]).unwrap() - 0.0625f64).abs(), 0.0625);
        for m in 1..=12 {
            let net = build_square(m).unwrap();
            assert_eq!(net.eval(&[0.0]).unwrap(), 0.0);
            assert_eq!(net.eval(&[1.0]).unwrap(), 1.0);
            assert_eq!(net.depth(), m as usize + 2);
            assert_eq!(net.metrics().hidden_units, 3 * m as usize);
        }
        let f3 = build_square(3).unwrap().extract_pwl(0.0, 1.0).unwrap();
        assert_eq!(f3.sup_error_vs_quadratic(1.0, 0.0, 0.0), 0.00390625);
    }

    #[test]
    fn square_nodes_are_exact() {
        for m in 1..=12u32 {
            let net = build_square(m).unwrap();
            let n = 1u32 << m;
            for k in 0..=n {
                let x = k as f64 / n as f64;
                assert!((net.eval(&[x]).unwrap() - x * x).abs() <= 1e-12, "m={m} k={k}");
            }
        }
    }

    #[test]
    fn refinement_identity() {
        for m in 2..=10u32 {
            let prev = build_square(m - 1).unwrap().extract_pwl(0.0, 1.0).unwrap();
            let cur = build_square(m).unwrap().extract_pwl(0.0, 1.0).unwrap();
            let diff = Pwl::linear_combine(&[(1.0, &prev), (-1.0, &cur)], 0.0).unwrap();
            let gm = Pwl::sawtooth(m).unwrap();
            let want = Pwl::linear_combine(&[(4f64.powi(-(m as i32)), &gm)], 0.0).unwrap();
            assert!(diff.sup_distance(&want).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn depth_for_error() {
        assert_eq!(square_depth_for_error(0.0625).unwrap(), 1);
        assert_eq!(square_depth_for_error(0.9).unwrap(), 1);
        assert_eq!(square_depth_for_error(1e-6).unwrap(), 9);
        assert!(square_depth_for_error(0.0).is_err());
        assert!(square_depth_for_error(1.0).is_err());
        // closed form agrees away from exact powers of two
        for &d in &[0.3, 0.01, 3e-5, 7e-9] {
            let closed = ((1.0f64 / d).log2() - 2.0) / 2.0;
            assert_eq!(square_depth_for_error(d).unwrap(), (closed.ceil() as u32).max(1));
        }
    }

    #[test]
    fn abs_network() {
        let net = build_abs();
        assert_eq!(net.eval(&[-0.7]).unwrap(), 0.7);
        assert_eq!(net.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(net.depth(), 3);
        let f = net.extract_pwl(-1.0, 1.0).unwrap();
        assert_eq!(f.breakpoints(), &[-1.0, 0.0, 1.0]);
        assert_eq!(f.values(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn multiplier_params() {
        let p = MultiplierParams::new(2.0, 0.01).unwrap();
        assert!((p.delta - 0.01 / 24.0).abs() < 1e-18);
        assert!(square_error(p.m) <= p.delta);
        assert!(square_error(p.m - 1) > p.delta);
        assert!(MultiplierParams::new(0.5, 0.1).is_err());
        assert!(MultiplierParams::new(2.0, 1.0).is_err());
        assert!(build_multiplier(2.0, 0.0).is_err());
    }

    #[test]
    fn multiplier_zero_lines_and_symmetry() {
        let m = 2.5;
        let net = build_multiplier(m, 0.01).unwrap();
        assert_eq!(net.depth(), MultiplierParams::new(m, 0.01).unwrap().depth());
        for x in [-m, -1.0, 0.3, m, 0.0, 1e-300] {
            assert_eq!(net.eval(&[x, 0.0]).unwrap(), 0.0);
            assert_eq!(net.eval(&[0.0, x]).unwrap(), 0.0);
        }
        for i in 0..50 {
            for j in 0..50 {
                let x = -m + 2.0 * m * i as f64 / 49.0;
                let y = -m + 2.0 * m * j as f64 / 49.0;
                let a = net.eval(&[x, y]).unwrap();
                assert_eq!(a, net.eval(&[y, x]).unwrap());
                assert!((a - x * y).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn multiplier_grid_bound() {
        let net = build_multiplier(3.0, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..201 {
            for j in 0..201 {
                let x = -3.0 + 6.0 * i as f64 / 200.0;
                let y = -3.0 + 6.0 * j as f64 / 200.0;
                worst = worst.max((net.eval(&[x, y]).unwrap() - x * y).abs());
            }
        }
        assert!(worst <= 1e-3, "{worst}");
    }
}
