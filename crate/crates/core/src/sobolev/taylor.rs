use serde::{Deserialize, Serialize};

use super::oracle::SmoothFunction;
use crate::error::{precondition, Error, Result};

/// All multi-indices `α ∈ ℕ^d` with `|α| < n`, in lexicographic order.
pub fn multi_indices(d: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, budget: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for a in 0..=budget {
            cur.push(a);
            rec(d, budget - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(d, n - 1, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Grid point `m ∈ {0..N}^d` with linear index `i` (last coordinate fastest).
pub fn grid_point(mut i: usize, n_grid: usize, d: usize) -> Vec<usize> {
    let mut m = vec![0; d];
    for k in (0..d).rev() {
        m[k] = i % (n_grid + 1);
        i /= n_grid + 1;
    }
    m
}

pub fn grid_index(m: &[usize], n_grid: usize) -> usize {
    m.iter().fold(0, |acc, &mk| acc * (n_grid + 1) + mk)
}

/// Local Taylor coefficients `a_{m,α} = D^α f(m/N)/α!` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorGrid {
    pub n_grid: usize,
    pub d: usize,
    pub n: usize,
    pub alphas: Vec<Vec<usize>>,
    /// `coeffs[i * alphas.len() + j]` belongs to grid point `i` and `alphas[j]`.
    pub coeffs: Vec<f64>,
}

impl TaylorGrid {
    pub fn zeros(n_grid: usize, d: usize, n: usize) -> Self {
        let alphas = multi_indices(d, n);
        let len = (n_grid + 1).pow(d as u32) * alphas.len();
        Self {
            n_grid,
            d,
            n,
            alphas,
            coeffs: vec![0.0; len],
        }
    }

    /// Fills the coefficients from the oracle. Returns the grid and one
    /// message per coefficient exceeding one in modulus.
    pub fn from_oracle(f: &dyn SmoothFunction, n_grid: usize, n: usize) -> Result<(Self, Vec<String>)> {
        let d = f.dim();
        if n_grid == 0 || n == 0 {
            return Err(precondition("grid resolution and smoothness must be positive"));
        }
        let mut g = Self::zeros(n_grid, d, n);
        let mut warnings = Vec::new();
        let na = g.alphas.len();
        for i in 0..g.points() {
            let m = grid_point(i, n_grid, d);
            let x: Vec<f64> = m.iter().map(|&mk| mk as f64 / n_grid as f64).collect();
            for (j, alpha) in g.alphas.iter().enumerate() {
                let fact: f64 = alpha.iter().map(|&a| factorial(a)).product();
                let a = f.derivative(alpha, &x) / fact;
                if !a.is_finite() {
                    return Err(Error::Evaluation {
                        x,
                        source: Box::new(precondition("target derivative is not finite")),
                    });
                }
                if a.abs() > 1.0 + 1e-9 {
                    warnings.push(format!("|a| = {} > 1 at m = {m:?}, alpha = {alpha:?}", a.abs()));
                }
                g.coeffs[i * na + j] = a;
            }
        }
        Ok((g, warnings))
    }

    pub fn points(&self) -> usize {
        (self.n_grid + 1).pow(self.d as u32)
    }

    pub fn get(&self, point: usize, alpha: usize) -> f64 {
        self.coeffs[point * self.alphas.len() + alpha]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&TaylorRepr::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: TaylorRepr = serde_json::from_str(s)?;
        Self::try_from(r)
    }
}

#[derive(Serialize, Deserialize)]
struct TaylorRepr {
    #[serde(rename = "N")]
    n_grid: usize,
    d: usize,
    n: usize,
    coeffs: Vec<CoeffRepr>,
}

#[derive(Serialize, Deserialize)]
struct CoeffRepr {
    m: Vec<usize>,
    n: Vec<usize>,
    a: f64,
}

impl From<&TaylorGrid> for TaylorRepr {
    fn from(g: &TaylorGrid) -> Self {
        let mut coeffs = Vec::with_capacity(g.coeffs.len());
        for i in 0..g.points() {
            let m = grid_point(i, g.n_grid, g.d);
            for (j, alpha) in g.alphas.iter().enumerate() {
                coeffs.push(CoeffRepr {
                    m: m.clone(),
                    n: alpha.clone(),
                    a: g.get(i, j),
                });
            }
        }
        Self {
            n_grid: g.n_grid,
            d: g.d,
            n: g.n,
            coeffs,
        }
    }
}

impl TryFrom<TaylorRepr> for TaylorGrid {
    type Error = Error;

    fn try_from(r: TaylorRepr) -> Result<Self> {
        let mut g = TaylorGrid::zeros(r.n_grid, r.d, r.n);
        let na = g.alphas.len();
        let mut seen = vec![false; g.coeffs.len()];
        for c in r.coeffs {
            let bad = || {
                precondition(format!(
                    "coefficient entry m = {:?}, n = {:?} does not fit the grid",
                    c.m, c.n
                ))
            };
            if c.m.len() != r.d || c.m.iter().any(|&v| v > r.n_grid) {
                return Err(bad());
            }
            let j = g.alphas.iter().position(|a| *a == c.n).ok_or_else(bad)?;
            let idx = grid_index(&c.m, r.n_grid) * na + j;
            g.coeffs[idx] = c.a;
            seen[idx] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(precondition("coefficient list is incomplete"));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobolev::oracle::{Mean, Sine, Zero};
    use std::f64::consts::PI;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 2), vec![vec![0], vec![1]]);
        assert_eq!(multi_indices(2, 1), vec![vec![0, 0]]);
        assert_eq!(multi_indices(2, 3).len(), 6);
        for d in 1..=3 {
            for n in 1..=4 {
                let count = multi_indices(d, n).len();
                if d == 1 {
                    assert_eq!(count, n);
                } else {
                    assert!(count <= d.pow(n as u32));
                }
            }
        }
    }

    #[test]
    fn grid_indexing_round_trips() {
        for i in 0..27 {
            assert_eq!(grid_index(&grid_point(i, 2, 3), 2), i);
        }
    }

    #[test]
    fn coefficients_of_simple_targets() {
        let (z, w) = TaylorGrid::from_oracle(&Zero { d: 2 }, 3, 2).unwrap();
        assert!(w.is_empty());
        assert!(z.coeffs.iter().all(|&a| a == 0.0));

        let (g, _) = TaylorGrid::from_oracle(&Mean { d: 1 }, 2, 2).unwrap();
        for m in 0..=2 {
            assert_eq!(g.get(m, 0), m as f64 / 2.0);
            assert_eq!(g.get(m, 1), 1.0);
        }

        let n_grid = 5;
        let (g, w) = TaylorGrid::from_oracle(&Sine { d: 1, n: 2 }, n_grid, 2).unwrap();
        assert!(w.is_empty());
        for m in 0..=n_grid {
            let want = (PI * m as f64 / n_grid as f64).cos() / PI;
            assert!((g.get(m, 1) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn json_shape_and_round_trip() {
        let (g, _) = TaylorGrid::from_oracle(&Mean { d: 1 }, 2, 2).unwrap();
        let s = g.to_json().unwrap();
        assert!(
            s.starts_with(r#"{"N":2,"d":1,"n":2,"coeffs":[{"m":[0],"n":[0],"a":0.0}"#),
            "{s}"
        );
        assert_eq!(TaylorGrid::from_json(&s).unwrap(), g);
        let broken = s.replace(r#"{"m":[0],"n":[0],"a":0.0},"#, "");
        assert!(TaylorGrid::from_json(&broken).is_err());
    }
}
