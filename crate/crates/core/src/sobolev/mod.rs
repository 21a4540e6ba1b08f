//! Approximation of functions from the unit ball of `W^{n,∞}([0,1]^d)` by a
//! sum of local Taylor polynomials times a partition of unity, with every
//! product realised by chained approximate multipliers.
//!
//! The architecture depends only on `(d, n, ε)`; the target enters solely
//! through the output weights `a_{m,α}`. Networks for small `ε` hold
//! millions of units, so [`SobolevNetwork`] keeps the architecture and the
//! coefficients separately, counts its size analytically and evaluates only
//! the terms whose support contains the query point. The result is
//! bit-identical to evaluating the materialised network, because every unit
//! sums with correct rounding and terms outside their support contribute
//! exactly cancelling products.

pub mod oracle;
mod taylor;

use serde::{Deserialize, Serialize};

pub use oracle::SmoothFunction;
pub use taylor::{factorial, grid_index, grid_point, multi_indices, TaylorGrid};

use crate::calculus::{abs_expr, multiply_expr, MultiplierParams};
use crate::error::{precondition, Result};
use crate::network::{Affine, ComplexityMetrics, Evaluator, Network, NetworkBuilder};
use crate::pwl::Pwl;
use crate::sum::{exact_sum, ExactSum};

/// Grid resolution `N = ⌈(n!/(2^d dⁿ) · ε/2)^{−1/n}⌉`.
///
/// Values within `1e-9` (relative) of an integer are taken as that integer,
/// so exact cases such as `d = n = 1, ε = 0.1 → 40` do not round up.
pub fn choose_n(d: usize, n: usize, eps: f64) -> Result<usize> {
    check_params(d, n, eps)?;
    let base = factorial(n) / (2f64.powi(d as i32) * (d as f64).powi(n as i32)) * eps / 2.0;
    let v = base.powf(-1.0 / n as f64);
    let r = v.round();
    let out = if (v - r).abs() <= 1e-9 * v { r } else { v.ceil() };
    Ok((out as usize).max(1))
}

/// Multiplier accuracy `δ = ε/(2^{d+1} dⁿ (d+n))`.
pub fn choose_delta(d: usize, n: usize, eps: f64) -> Result<f64> {
    check_params(d, n, eps)?;
    Ok(eps / (2f64.powi(d as i32 + 1) * (d as f64).powi(n as i32) * (d + n) as f64))
}

fn check_params(d: usize, n: usize, eps: f64) -> Result<()> {
    if d == 0 || n == 0 {
        return Err(precondition("dimension and smoothness must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(precondition(format!("accuracy {eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// The trapezoid `ψ` on `[−3, 3]`.
pub fn psi_pwl() -> Pwl {
    Pwl::new(
        vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0],
        vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
    )
    .expect("static breakpoints")
}

pub fn psi(z: f64) -> f64 {
    (2.0 - z.abs()).clamp(0.0, 1.0)
}

/// `ψ` as a PWL function and as the one-layer network
/// `σ(x+2) − σ(x+1) − σ(x−1) + σ(x−2)`.
pub fn build_psi() -> (Pwl, Network) {
    let mut b = NetworkBuilder::new(1);
    let x = b.input(0);
    let u: Vec<Affine> = [2.0, 1.0, -1.0, -2.0].iter().map(|&c| b.relu(&x.shift(c))).collect();
    let y = Affine::sum([(1.0, &u[0]), (-1.0, &u[1]), (-1.0, &u[2]), (1.0, &u[3])]);
    (psi_pwl(), b.finish(&y))
}

/// `ψ(z) = σ(2 − |z|) − σ(1 − |z|)`: two layers, and both second-layer units
/// are exactly zero whenever `|z| ≥ 2`.
fn psi_expr(b: &mut NetworkBuilder, z: &Affine) -> Affine {
    let a = abs_expr(b, z);
    let outer = b.relu(&(Affine::constant(2.0) - a.clone()));
    let inner = b.relu(&(Affine::constant(1.0) - a));
    outer - inner
}

/// Replays the first two layers of [`psi_expr`] with the same weights to
/// decide whether the factor is exactly zero.
fn psi_support(w: f64, bias: f64, x: f64) -> bool {
    let p = exact_sum([w * x, bias]).max(0.0);
    let n = exact_sum([-w * x, -bias]).max(0.0);
    exact_sum([-p, -n, 2.0]) > 0.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SobolevOptions {
    /// Turn coefficient-bound warnings into errors.
    pub strict: bool,
    /// Skip the default limits `d ≤ 3`, `n ≤ 4`, `ε ≥ 1e-3`.
    pub unlimited: bool,
}

/// The target-independent part of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevArchitecture {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n_grid: usize,
    pub delta: f64,
    pub multiplier: MultiplierParams,
    pub alphas: Vec<Vec<usize>>,
}

impl SobolevArchitecture {
    pub fn new(d: usize, n: usize, eps: f64, opts: &SobolevOptions) -> Result<Self> {
        check_params(d, n, eps)?;
        if !opts.unlimited && (d > 3 || n > 4 || eps < 1e-3) {
            return Err(precondition(format!(
                "d = {d}, n = {n}, eps = {eps} exceeds the default limits d <= 3, n <= 4, eps >= 1e-3"
            )));
        }
        let alphas = multi_indices(d, n);
        // for d = 1 there are n multi-indices, more than the d^n the
        // accuracy formula assumes; shrink δ so the budget still holds
        let dn = (d as f64).powi(n as i32);
        let delta = choose_delta(d, n, eps)? * dn / dn.max(alphas.len() as f64);
        Ok(Self {
            d,
            n,
            epsilon: eps,
            n_grid: choose_n(d, n, eps)?,
            delta,
            multiplier: MultiplierParams::new((d + n) as f64, delta)?,
            alphas,
        })
    }

    pub fn grid_points(&self) -> usize {
        (self.n_grid + 1).pow(self.d as u32)
    }

    pub fn term_count(&self) -> usize {
        self.grid_points() * self.alphas.len()
    }

    fn psi_weight(&self) -> f64 {
        3.0 * self.n_grid as f64
    }

    fn psi_bias(mk: usize) -> f64 {
        -3.0 * mk as f64
    }

    /// `×̃(ψ₁, ×̃(ψ₂, …, ×̃(l₁, … l_r)))`: the `d` bump factors first, then
    /// the linear factors `x_k − m_k/N` with multiplicities `α`.
    pub fn term_expr(&self, b: &mut NetworkBuilder, m: &[usize], alpha: &[usize]) -> Affine {
        let nf = self.n_grid as f64;
        let mut factors = Vec::with_capacity(self.d + alpha.iter().sum::<usize>());
        for (k, &mk) in m.iter().enumerate() {
            let z = b.input(k).scale(self.psi_weight()).shift(Self::psi_bias(mk));
            factors.push(psi_expr(b, &z));
        }
        for (k, &ak) in alpha.iter().enumerate() {
            for _ in 0..ak {
                factors.push(b.input(k).shift(-(m[k] as f64) / nf));
            }
        }
        let mut acc = factors.pop().expect("at least one factor");
        while let Some(f) = factors.pop() {
            acc = multiply_expr(b, &f, &acc, &self.multiplier);
        }
        acc
    }

    pub fn term_network(&self, m: &[usize], alpha: &[usize]) -> Network {
        let mut b = NetworkBuilder::new(self.d);
        let y = self.term_expr(&mut b, m, alpha);
        b.finish(&y)
    }

    /// Size of one term subnetwork; it does not depend on the grid point.
    pub fn term_metrics(&self, alpha: &[usize]) -> ComplexityMetrics {
        self.term_network(&vec![0; self.d], alpha).metrics()
    }

    /// Size of the full network, counted without building it.
    pub fn metrics(&self) -> ComplexityMetrics {
        let p = self.grid_points();
        let (mut hidden, mut conn, mut depth) = (0, 0, 2);
        for alpha in &self.alphas {
            let t = self.term_metrics(alpha);
            hidden += t.hidden_units;
            conn += t.connections;
            depth = depth.max(t.depth);
        }
        let hidden_units = p * hidden;
        let connections = p * conn;
        ComplexityMetrics {
            depth,
            hidden_units,
            computation_units: hidden_units + 1,
            connections,
            weights: connections + hidden_units + 1,
        }
    }

    pub fn reweight(&self, grid: &TaylorGrid) -> Result<SobolevNetwork> {
        if grid.n_grid != self.n_grid || grid.d != self.d || grid.n != self.n {
            return Err(precondition(format!(
                "coefficient grid (N = {}, d = {}, n = {}) does not match the architecture (N = {}, d = {}, n = {})",
                grid.n_grid, grid.d, grid.n, self.n_grid, self.d, self.n
            )));
        }
        Ok(SobolevNetwork {
            arch: self.clone(),
            grid: grid.clone(),
        })
    }

    /// Grid points whose bump factors are all nonzero at `x`.
    fn support(&self, x: &[f64]) -> Vec<usize> {
        let nf = self.n_grid as f64;
        let w = self.psi_weight();
        let per_axis: Vec<Vec<usize>> = x
            .iter()
            .map(|&xk| {
                let c = (xk * nf).floor() as i64;
                ((c - 1).max(0)..=(c + 2).min(self.n_grid as i64))
                    .map(|m| m as usize)
                    .filter(|&m| psi_support(w, Self::psi_bias(m), xk))
                    .collect()
            })
            .collect();
        let mut out = vec![0usize];
        for axis in &per_axis {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for &prefix in &out {
                for &mk in axis {
                    next.push(prefix * (self.n_grid + 1) + mk);
                }
            }
            out = next;
        }
        out
    }
}

/// Architecture plus coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevNetwork {
    pub arch: SobolevArchitecture,
    pub grid: TaylorGrid,
}

impl SobolevNetwork {
    pub fn metrics(&self) -> ComplexityMetrics {
        self.arch.metrics()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_many(&[x.to_vec()])?[0])
    }

    /// Evaluates at many points, building each needed term subnetwork once.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.arch.d;
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(crate::Error::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (pi, x) in points.iter().enumerate() {
            for t in self.arch.support(x) {
                pairs.push((t, pi));
            }
        }
        pairs.sort_unstable();
        let mut acc: Vec<ExactSum> = vec![ExactSum::new(); points.len()];
        let na = self.arch.alphas.len();
        let mut start = 0;
        while start < pairs.len() {
            let t = pairs[start].0;
            let end = start + pairs[start..].partition_point(|p| p.0 == t);
            let m = grid_point(t, self.arch.n_grid, d);
            for (j, alpha) in self.arch.alphas.iter().enumerate() {
                let a = self.grid.coeffs[t * na + j];
                if a == 0.0 {
                    continue;
                }
                let net = self.arch.term_network(&m, alpha);
                let mut ev = Evaluator::new(&net);
                for &(_, pi) in &pairs[start..end] {
                    ev.accumulate_output(&points[pi], a, &mut acc[pi])?;
                }
            }
            start = end;
        }
        Ok(acc.iter().map(ExactSum::value).collect())
    }

    /// Builds the full network, refusing beyond `max_hidden_units`.
    pub fn to_network(&self, max_hidden_units: usize) -> Result<Network> {
        let units = self.metrics().hidden_units;
        if units > max_hidden_units {
            return Err(precondition(format!(
                "network would have {units} hidden units, above the limit {max_hidden_units}"
            )));
        }
        let mut b = NetworkBuilder::new(self.arch.d);
        let mut out = Affine::default();
        let na = self.arch.alphas.len();
        for t in 0..self.arch.grid_points() {
            let m = grid_point(t, self.arch.n_grid, self.arch.d);
            for (j, alpha) in self.arch.alphas.iter().enumerate() {
                let y = self.arch.term_expr(&mut b, &m, alpha);
                out = out.add_scaled(&y, self.grid.coeffs[t * na + j]);
            }
        }
        Ok(b.finish(&out))
    }

    /// `f₁(x) = Σ_m φ_m(x) P_m(x)` evaluated in closed form: the function the
    /// network approximates before any multiplier error.
    pub fn taylor_stage(&self, x: &[f64]) -> f64 {
        let arch = &self.arch;
        let nf = arch.n_grid as f64;
        let na = arch.alphas.len();
        let mut total = 0.0;
        for t in arch.support(x) {
            let m = grid_point(t, arch.n_grid, arch.d);
            let phi: f64 = m
                .iter()
                .zip(x)
                .map(|(&mk, &xk)| psi(3.0 * nf * (xk - mk as f64 / nf)))
                .product();
            for (j, alpha) in arch.alphas.iter().enumerate() {
                let mono: f64 = alpha
                    .iter()
                    .zip(m.iter().zip(x))
                    .map(|(&ak, (&mk, &xk))| (xk - mk as f64 / nf).powi(ak as i32))
                    .product();
                total += self.grid.coeffs[t * na + j] * phi * mono;
            }
        }
        total
    }
}

/// Result of [`build_sobolev_approximator`].
#[derive(Debug, Clone)]
pub struct SobolevBuild {
    pub network: SobolevNetwork,
    pub warnings: Vec<String>,
}

pub fn build_sobolev_approximator(
    f: &dyn SmoothFunction,
    n: usize,
    eps: f64,
    opts: &SobolevOptions,
) -> Result<SobolevBuild> {
    let arch = SobolevArchitecture::new(f.dim(), n, eps, opts)?;
    let (grid, mut warnings) = TaylorGrid::from_oracle(f, arch.n_grid, n)?;
    if !f.certified() {
        warnings.push(format!(
            "derivatives of '{}' are approximate; the coefficient bound is not certified",
            f.name()
        ));
    }
    if opts.strict && grid.coeffs.iter().any(|a| a.abs() > 1.0 + 1e-9) {
        return Err(precondition(format!(
            "target '{}' is outside the unit Sobolev ball: {}",
            f.name(),
            warnings.first().map_or("", String::as_str)
        )));
    }
    Ok(SobolevBuild {
        network: arch.reweight(&grid)?,
        warnings,
    })
}
