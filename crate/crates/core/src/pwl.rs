//! Exact algebra for continuous piecewise-linear functions of one variable.
//!
//! [`Pwl`] is the ground truth every one-dimensional network construction is
//! checked against: networks are converted to a `Pwl` by forward propagation
//! (see [`crate::network::Network::extract_pwl`]) and compared with the
//! oracle built here by composition and linear combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which adjacent slopes are considered equal.
pub const COLLINEAR_TOL: f64 = 1e-12;

/// Breakpoints closer than this fraction of the domain width are merged.
const DEDUP_TOL: f64 = 1e-12;

/// A continuous piecewise-linear function on a closed interval, stored as
/// strictly increasing breakpoints with the function values at them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PwlRepr", into = "PwlRepr")]
pub struct Pwl {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PwlRepr {
    domain: [f64; 2],
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TryFrom<PwlRepr> for Pwl {
    type Error = Error;

    fn try_from(r: PwlRepr) -> Result<Self> {
        let f = Pwl::new(r.x, r.y)?;
        let (lo, hi) = f.domain();
        if lo != r.domain[0] || hi != r.domain[1] {
            return Err(Error::Breakpoints(format!(
                "declared domain [{}, {}] does not match breakpoints [{lo}, {hi}]",
                r.domain[0], r.domain[1]
            )));
        }
        Ok(f)
    }
}

impl From<Pwl> for PwlRepr {
    fn from(f: Pwl) -> Self {
        let (lo, hi) = f.domain();
        PwlRepr {
            domain: [lo, hi],
            x: f.xs,
            y: f.ys,
        }
    }
}

impl Pwl {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Breakpoints(format!(
                "{} breakpoints but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Breakpoints("need at least two breakpoints".into()));
        }
        if let Some(bad) = xs.iter().chain(ys.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Breakpoints(format!("non-finite entry {bad}")));
        }
        if let Some(w) = xs.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Breakpoints(format!(
                "breakpoints not strictly increasing at {} >= {}",
                w[0], w[1]
            )));
        }
        Ok(Self { xs, ys })
    }

    fn from_sorted_unchecked(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        debug_assert!(xs.len() >= 2 && xs.len() == ys.len());
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]), "{xs:?}");
        Self { xs, ys }
    }

    pub fn linear(lo: f64, hi: f64, slope: f64, intercept: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![slope * lo + intercept, slope * hi + intercept])
    }

    pub fn identity(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![lo, hi])
    }

    pub fn constant(lo: f64, hi: f64, c: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![c, c])
    }

    pub fn zero(lo: f64, hi: f64) -> Result<Self> {
        Self::constant(lo, hi, 0.0)
    }

    /// The tooth `g(x) = 2x` for `x < 1/2`, `2(1 - x)` otherwise, on `[0, 1]`.
    pub fn tooth() -> Self {
        Self::from_sorted_unchecked(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0])
    }

    /// The `s`-fold composition `g ∘ … ∘ g`, computed by oracle composition.
    pub fn sawtooth(s: u32) -> Result<Self> {
        if s == 0 {
            return Self::identity(0.0, 1.0);
        }
        let g = Self::tooth();
        let mut acc = g.clone();
        for _ in 1..s {
            acc = g.compose(&acc)?;
        }
        Ok(acc)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    /// Slopes of the stored segments (before collinear merging).
    pub fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Minimum and maximum of the function; attained at breakpoints.
    pub fn range(&self) -> (f64, f64) {
        self.ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain { x, lo, hi });
        }
        Ok(self.eval_extended(x))
    }

    /// Evaluates the function, continuing the first and last pieces affinely
    /// outside the domain. This is how a `Pwl` acts as an activation on ℝ.
    pub fn eval_extended(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&b| b <= x);
        if k >= 1 && self.xs[k - 1] == x {
            return self.ys[k - 1];
        }
        let i = k.clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
    }

    fn width(&self) -> f64 {
        let (lo, hi) = self.domain();
        hi - lo
    }

    fn same_domain(&self, other: &Pwl) -> Result<()> {
        let (a0, a1) = self.domain();
        let (b0, b1) = other.domain();
        let tol = DEDUP_TOL * self.width().max(other.width());
        if (a0 - b0).abs() > tol || (a1 - b1).abs() > tol {
            return Err(Error::DomainMismatch(a0, a1, b0, b1));
        }
        Ok(())
    }

    /// Removes interior breakpoints where the slope does not change.
    pub fn simplify(&self) -> Pwl {
        let n = self.xs.len();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        xs.push(self.xs[0]);
        ys.push(self.ys[0]);
        for i in 1..n - 1 {
            let (ax, ay) = (xs[xs.len() - 1], ys[ys.len() - 1]);
            let s1 = (self.ys[i] - ay) / (self.xs[i] - ax);
            let s2 = (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]);
            let scale = s1.abs().max(s2.abs()).max(1.0);
            if (s1 - s2).abs() > COLLINEAR_TOL * scale {
                xs.push(self.xs[i]);
                ys.push(self.ys[i]);
            }
        }
        xs.push(self.xs[n - 1]);
        ys.push(self.ys[n - 1]);
        Pwl::from_sorted_unchecked(xs, ys)
    }

    /// Number of maximal pieces of constant slope.
    pub fn piece_count(&self) -> usize {
        self.simplify().xs.len() - 1
    }

    /// `Σ cᵢ fᵢ + bias` over functions sharing one domain. The result carries
    /// the union of all breakpoints, collinear-merged.
    pub fn linear_combine(terms: &[(f64, &Pwl)], bias: f64) -> Result<Pwl> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::Breakpoints(
                "linear combination needs at least one term to fix the domain".into(),
            ));
        };
        for (_, f) in &terms[1..] {
            first.same_domain(f)?;
        }
        let (lo, hi) = first.domain();
        let grid = union_breakpoints(terms.iter().map(|(_, f)| f.breakpoints()), lo, hi);
        let mut acc = vec![0.0; grid.len()];
        let mut comp = vec![0.0; grid.len()];
        let mut buf = Vec::with_capacity(grid.len());
        for (c, f) in terms {
            if *c == 0.0 {
                continue;
            }
            f.eval_sorted_into(&grid, &mut buf);
            for ((a, e), v) in acc.iter_mut().zip(comp.iter_mut()).zip(&buf) {
                neumaier_add(a, e, c * v);
            }
        }
        let ys = acc.iter().zip(&comp).map(|(a, e)| (a + e) + bias).collect();
        Ok(Pwl::from_sorted_unchecked(grid, ys).simplify())
    }

    /// Evaluates (with affine extension) at increasing points.
    fn eval_sorted_into(&self, pts: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let n = self.xs.len();
        let mut j = 0;
        for &u in pts {
            while j + 2 < n && self.xs[j + 1] < u {
                j += 1;
            }
            let v = if self.xs[j] == u {
                self.ys[j]
            } else if self.xs[j + 1] == u {
                self.ys[j + 1]
            } else {
                let (x0, x1) = (self.xs[j], self.xs[j + 1]);
                let (y0, y1) = (self.ys[j], self.ys[j + 1]);
                y0 + (y1 - y0) * ((u - x0) / (x1 - x0))
            };
            out.push(v);
        }
    }

    /// Exact composition `outer ∘ inner`; the range of `inner` must lie in
    /// the domain of `outer`.
    pub fn compose(&self, inner: &Pwl) -> Result<Pwl> {
        let (lo, hi) = inner.range();
        let (olo, ohi) = self.domain();
        let tol = DEDUP_TOL * self.width().max(1.0);
        if lo < olo - tol || hi > ohi + tol {
            return Err(Error::Range {
                lo,
                hi,
                outer_lo: olo,
                outer_hi: ohi,
            });
        }
        Ok(self.compose_extended(inner))
    }

    /// Composition treating `self` as a function on all of ℝ (affinely
    /// extended outside its domain).
    pub fn compose_extended(&self, inner: &Pwl) -> Pwl {
        let mut xs = Vec::with_capacity(inner.xs.len() * 2);
        let mut ys = Vec::with_capacity(inner.xs.len() * 2);
        let ob = &self.xs;
        for i in 0..inner.xs.len() - 1 {
            let (x0, x1) = (inner.xs[i], inner.xs[i + 1]);
            let (y0, y1) = (inner.ys[i], inner.ys[i + 1]);
            xs.push(x0);
            ys.push(self.eval_extended(y0));
            if y0 == y1 {
                continue;
            }
            let (a, b) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
            let start = ob.partition_point(|&v| v <= a);
            let end = ob.partition_point(|&v| v < b);
            if start >= end {
                continue;
            }
            let crossing = |k: usize| {
                let t = (ob[k] - y0) / (y1 - y0);
                (x0 + t * (x1 - x0), self.ys[k])
            };
            if y0 < y1 {
                for k in start..end {
                    let (x, y) = crossing(k);
                    xs.push(x);
                    ys.push(y);
                }
            } else {
                for k in (start..end).rev() {
                    let (x, y) = crossing(k);
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        xs.push(inner.xs[inner.xs.len() - 1]);
        ys.push(self.eval_extended(inner.ys[inner.ys.len() - 1]));
        dedup_points(&mut xs, &mut ys, inner.width());
        Pwl::from_sorted_unchecked(xs, ys).simplify()
    }

    /// `max(0, f)`, inserting the zero crossings as breakpoints.
    pub fn relu(&self) -> Pwl {
        let mut xs = Vec::with_capacity(self.xs.len() + 4);
        let mut ys = Vec::with_capacity(self.xs.len() + 4);
        for i in 0..self.xs.len() {
            let (x0, y0) = (self.xs[i], self.ys[i]);
            xs.push(x0);
            ys.push(y0.max(0.0));
            if let (Some(&x1), Some(&y1)) = (self.xs.get(i + 1), self.ys.get(i + 1)) {
                if (y0 < 0.0 && y1 > 0.0) || (y0 > 0.0 && y1 < 0.0) {
                    let x = x0 + (-y0 / (y1 - y0)) * (x1 - x0);
                    if x > x0 && x < x1 {
                        xs.push(x);
                        ys.push(0.0);
                    }
                }
            }
        }
        dedup_points(&mut xs, &mut ys, self.width());
        Pwl::from_sorted_unchecked(xs, ys).simplify()
    }

    /// `x ↦ f(a·x + b)` on the preimage interval; `a` must be nonzero.
    pub fn precompose_affine(&self, a: f64, b: f64) -> Result<Pwl> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::Precondition(format!(
                "affine substitution needs a finite nonzero scale, got {a}"
            )));
        }
        let mut pts: Vec<(f64, f64)> = self.xs.iter().zip(&self.ys).map(|(&x, &y)| ((x - b) / a, y)).collect();
        if a < 0.0 {
            pts.reverse();
        }
        let (xs, ys) = pts.into_iter().unzip();
        Pwl::new(xs, ys)
    }

    /// Exact `sup |f − h|` over the shared domain.
    pub fn sup_distance(&self, other: &Pwl) -> Result<f64> {
        self.same_domain(other)?;
        let (lo, hi) = self.domain();
        let grid = union_breakpoints([self.breakpoints(), other.breakpoints()], lo, hi);
        let mut a = Vec::new();
        let mut b = Vec::new();
        self.eval_sorted_into(&grid, &mut a);
        other.eval_sorted_into(&grid, &mut b);
        Ok(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
    }

    /// Interpolates `f` at the given strictly increasing breakpoints.
    pub fn interpolate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64]) -> Result<Pwl> {
        let ys = breakpoints.iter().map(|&x| f(x)).collect();
        Pwl::new(breakpoints.to_vec(), ys)
    }

    /// Interpolates `f` at `pieces + 1` uniformly spaced points of `[lo, hi]`.
    pub fn interpolate_uniform<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, pieces: usize) -> Result<Pwl> {
        if pieces == 0 {
            return Err(Error::Breakpoints("need at least one piece".into()));
        }
        let xs: Vec<f64> = (0..=pieces)
            .map(|k| {
                if k == pieces {
                    hi
                } else {
                    lo + (hi - lo) * (k as f64 / pieces as f64)
                }
            })
            .collect();
        Self::interpolate(f, &xs)
    }

    /// Exact `sup |a x² + b x + c − f(x)|`. On every piece the difference is
    /// a quadratic, so it suffices to check the endpoints and the interior
    /// stationary point.
    pub fn sup_error_vs_quadratic(&self, a: f64, b: f64, c: f64) -> f64 {
        let q = |x: f64| (a * x + b) * x + c;
        let mut worst: f64 = 0.0;
        for i in 0..self.xs.len() - 1 {
            let (x0, x1) = (self.xs[i], self.xs[i + 1]);
            let (y0, y1) = (self.ys[i], self.ys[i + 1]);
            let s = (y1 - y0) / (x1 - x0);
            let diff = |x: f64| q(x) - (y0 + s * (x - x0));
            worst = worst.max((q(x0) - y0).abs()).max((q(x1) - y1).abs());
            if a != 0.0 {
                let xs = (s - b) / (2.0 * a);
                if xs > x0 && xs < x1 {
                    worst = worst.max(diff(xs).abs());
                }
            }
        }
        worst
    }
}

fn neumaier_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// Sorted union of breakpoint lists, with near-coincident points merged and
/// the endpoints pinned to `lo` and `hi`.
fn union_breakpoints<'a, I: IntoIterator<Item = &'a [f64]>>(lists: I, lo: f64, hi: f64) -> Vec<f64> {
    let mut all: Vec<f64> = lists.into_iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let tol = DEDUP_TOL * (hi - lo);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    out.push(lo);
    for x in all {
        if x <= lo + tol || x >= hi - tol {
            continue;
        }
        if x - out[out.len() - 1] > tol {
            out.push(x);
        }
    }
    out.push(hi);
    out
}

fn dedup_points(xs: &mut Vec<f64>, ys: &mut Vec<f64>, width: f64) {
    let tol = DEDUP_TOL * width;
    let n = xs.len();
    let (last_x, last_y) = (xs[n - 1], ys[n - 1]);
    let mut k = 1;
    for i in 1..n - 1 {
        if xs[i] - xs[k - 1] > tol && last_x - xs[i] > tol {
            xs[k] = xs[i];
            ys[k] = ys[i];
            k += 1;
        }
    }
    xs.truncate(k);
    ys.truncate(k);
    xs.push(last_x);
    ys.push(last_y);
}
