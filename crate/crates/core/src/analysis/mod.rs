//! Error measurement and complexity bounds.

mod report;

pub use report::{
    normalized_constant, run_construction, scaling_experiment, write_csv, ApproxReport, Construction, ScalingConfig,
    CSV_COLUMNS,
};

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::network::Network;
use crate::pwl::Pwl;
use crate::sobolev::SobolevNetwork;

/// Tensor grid on a box, `points[k]` nodes along axis `k` including both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != points.len() {
            return Err(precondition(
                "grid bounds and point counts must have one entry per axis",
            ));
        }
        if points.contains(&0) {
            return Err(precondition("grid axes need at least one point"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(precondition("grid bounds must be finite with lo ≤ hi"));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn uniform(d: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], vec![n; d])
    }

    /// 10⁴+1 points for `d = 1`, 201 per axis for `d = 2`, 41 per axis
    /// beyond, on the unit cube.
    pub fn default_for(d: usize) -> Result<Self> {
        let n = match d {
            1 => 10_001,
            2 => 201,
            _ => 41,
        };
        Self::uniform(d, 0.0, 1.0, n)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, k: usize, i: usize) -> f64 {
        let n = self.points[k];
        if n == 1 || i == 0 {
            self.lo[k]
        } else if i == n - 1 {
            self.hi[k]
        } else {
            self.lo[k] + (self.hi[k] - self.lo[k]) * (i as f64 / (n - 1) as f64)
        }
    }

    /// Point with linear index `i`, last axis fastest.
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for k in (0..d).rev() {
            x[k] = self.coord(k, i % self.points[k]);
            i /= self.points[k];
        }
        x
    }

    pub fn all_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn describe(&self) -> String {
        let axes: Vec<String> = (0..self.dim())
            .map(|k| format!("[{}, {}]x{}", self.lo[k], self.hi[k], self.points[k]))
            .collect();
        axes.join(" * ")
    }
}

/// Measurement grid for a Sobolev approximator with grid resolution `N`:
/// at least 40 points per cell `1/N` in one dimension. Finer grids in two
/// dimensions are capped at 401 points per axis to stay tractable.
pub fn sobolev_grid(d: usize, n_grid: usize) -> Result<GridSpec> {
    let per_cell = 40 * n_grid + 1;
    let n = match d {
        1 => per_cell.max(10_001),
        2 => per_cell.clamp(201, 401),
        _ => 41,
    };
    GridSpec::uniform(d, 0.0, 1.0, n)
}

/// Anything that maps points of `ℝ^d` to numbers through a network.
pub trait Approximant {
    fn input_dim(&self) -> usize;

    fn eval_points(&self, points: &[Vec<f64>]) -> Result<Vec<f64>>;
}

impl Approximant for Network {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval_points(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.eval_many(points)
    }
}

impl Approximant for SobolevNetwork {
    fn input_dim(&self) -> usize {
        self.arch.d
    }

    fn eval_points(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.eval_many(points)
    }
}

const CHUNK: usize = 1 << 14;

/// `max |net(x) − target(x)|` over the grid. This is a lower estimate of
/// the true supremum.
pub fn measure_sup_error(net: &dyn Approximant, target: &dyn Fn(&[f64]) -> f64, grid: &GridSpec) -> Result<f64> {
    if grid.dim() != net.input_dim() {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            got: grid.dim(),
        });
    }
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < grid.len() {
        let end = (start + CHUNK).min(grid.len());
        let pts: Vec<Vec<f64>> = (start..end).map(|i| grid.point(i)).collect();
        let vals = match net.eval_points(&pts) {
            Ok(v) => v,
            Err(e) => return Err(locate_failure(net, &pts).unwrap_or(e)),
        };
        for (x, v) in pts.iter().zip(vals) {
            let diff = (v - target(x)).abs();
            if !diff.is_finite() {
                return Err(Error::Evaluation {
                    x: x.clone(),
                    source: Box::new(precondition(format!("non-finite error {diff}"))),
                });
            }
            worst = worst.max(diff);
        }
        start = end;
    }
    Ok(worst)
}

fn locate_failure(net: &dyn Approximant, pts: &[Vec<f64>]) -> Option<Error> {
    pts.iter().find_map(|x| {
        net.eval_points(std::slice::from_ref(x))
            .err()
            .map(|e| Error::Evaluation {
                x: x.clone(),
                source: Box::new(e),
            })
    })
}

/// Exact `sup_{[lo,hi]} |net(x) − (a x² + b x + c)|` of a 1-D ReLU network.
pub fn exact_error_vs_quadratic(net: &Network, lo: f64, hi: f64, a: f64, b: f64, c: f64) -> Result<f64> {
    Ok(net.extract_pwl(lo, hi)?.sup_error_vs_quadratic(a, b, c))
}

/// Exact sup distance between a 1-D ReLU network and a PWL target on the
/// target's domain.
pub fn exact_error_vs_pwl(net: &Network, target: &Pwl) -> Result<f64> {
    let (lo, hi) = target.domain();
    net.extract_pwl(lo, hi)?.sup_distance(target)
}

/// Linear pieces of a 1-D network against the bound `(2U)^{L−2}`, where `U`
/// counts hidden units and `L` is the depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceBound {
    pub pieces: usize,
    pub bound: f64,
    pub ok: bool,
}

pub fn piece_bound_check(net: &Network, lo: f64, hi: f64) -> Result<PieceBound> {
    let pieces = net.extract_pwl(lo, hi)?.piece_count();
    let m = net.metrics();
    let bound = (2.0 * m.hidden_units as f64).powi(m.depth as i32 - 2);
    Ok(PieceBound {
        pieces,
        bound,
        ok: pieces as f64 <= bound,
    })
}

/// Unit-count lower bound `½(4ε/c₁)^{−1/(2(L−2))}` for depth-`L` ReLU
/// approximants of a function with curvature at least `c₁` on `[−1, 1]`.
pub fn shallow_lower_bound(c1: f64, depth: usize, eps: f64) -> Result<f64> {
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(precondition(format!("curvature bound must be positive, got {c1}")));
    }
    if depth < 3 {
        return Err(precondition(format!("depth must be at least 3, got {depth}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(precondition(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    Ok(0.5 * (4.0 * eps / c1).powf(-1.0 / (2.0 * (depth as f64 - 2.0))))
}

/// Fewest pieces of a uniform interpolant of `x²` on `[lo, hi]` with exact
/// error at most `eps` (relative slack 1e-12), searching up to `max_pieces`.
pub fn min_uniform_pieces_for_square(eps: f64, lo: f64, hi: f64, max_pieces: usize) -> Result<usize> {
    for k in 1..=max_pieces {
        let p = Pwl::interpolate_uniform(|x| x * x, lo, hi, k)?;
        if p.sup_error_vs_quadratic(1.0, 0.0, 0.0) <= eps * (1.0 + 1e-12) {
            return Ok(k);
        }
    }
    Err(precondition(format!(
        "no uniform interpolant with at most {max_pieces} pieces reaches {eps}"
    )))
}
