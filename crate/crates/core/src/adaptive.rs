//! Function-adaptive approximation of Lipschitz functions on `[0, 1]`.
//!
//! A coarse interpolant `f̃₁` on `T` intervals is corrected by a residual
//! `f̃₂` assembled from a small cache of quantized profiles. Which profile
//! serves which interval is a property of the wiring, not of the weights.

use std::collections::HashMap;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::activation::ReluDecomposition;
use crate::analysis::{measure_sup_error, normalized_constant, ApproxReport, Construction, GridSpec};
use crate::error::{precondition, Error, Result};
use crate::network::{Activation, Affine, Network, NetworkBuilder};
use crate::pwl::Pwl;

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(precondition(format!("epsilon must lie in (0, 1/2), got {eps}")));
    }
    Ok(())
}

/// Smallest `m ≥ 1` with `9^m ≥ 1/ε`, i.e. `⌈½ log₃(1/ε)⌉`.
pub fn choose_m(eps: f64) -> Result<usize> {
    check_epsilon(eps)?;
    let mut m = 1;
    while 9f64.powi(m as i32) * eps < 1.0 {
        m += 1;
    }
    Ok(m)
}

/// Interval count of the ρ-network, `⌈2/(mε)⌉`.
pub fn rho_intervals(m: usize, eps: f64) -> usize {
    (2.0 / (m as f64 * eps)).ceil() as usize
}

/// Interval count of the ReLU network, `⌈4/(mε)⌉`: half the budget goes to
/// quantization, half to the smoothing of ρ.
pub fn relu_intervals(m: usize, eps: f64) -> usize {
    (4.0 / (m as f64 * eps)).ceil() as usize
}

pub fn default_delta(eps: f64, t: usize) -> f64 {
    (0.25f64 - 1e-6).min(eps * t as f64 / 16.0)
}

/// `f₂ = f − f̃₁`.
pub struct Residual<'a> {
    f: &'a dyn Fn(f64) -> f64,
    coarse: Pwl,
}

impl Residual<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x) - self.coarse.eval_extended(x)
    }

    pub fn coarse(&self) -> &Pwl {
        &self.coarse
    }
}

/// Interpolates `f` at `t/T` and returns the interpolant with the residual.
pub fn coarse_interpolant(f: &dyn Fn(f64) -> f64, t: usize) -> Result<(Pwl, Residual<'_>)> {
    if t == 0 {
        return Err(precondition("need at least one interval"));
    }
    let coarse = Pwl::interpolate_uniform(f, 0.0, 1.0, t)?;
    Ok((coarse.clone(), Residual { f, coarse }))
}

/// A member of the cache Γ: a piecewise-linear `γ` on `[0, 1]` with
/// breakpoints `r/m`, `γ(0) = γ(1) = 0` and steps in `{−2/m, 0, 2/m}`.
/// Stored as the step signs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct CachedProfile {
    steps: Vec<i8>,
}

impl TryFrom<Vec<i8>> for CachedProfile {
    type Error = Error;

    fn try_from(steps: Vec<i8>) -> Result<Self> {
        Self::new(steps)
    }
}

impl From<CachedProfile> for Vec<i8> {
    fn from(p: CachedProfile) -> Self {
        p.steps
    }
}

impl CachedProfile {
    pub fn new(steps: Vec<i8>) -> Result<Self> {
        if steps.is_empty() {
            return Err(precondition("a profile needs at least one step"));
        }
        if steps.iter().any(|s| !(-1..=1).contains(s)) {
            return Err(precondition(format!(
                "profile steps must lie in {{-1, 0, 1}}: {steps:?}"
            )));
        }
        if steps.iter().map(|&s| i64::from(s)).sum::<i64>() != 0 {
            return Err(precondition(format!("profile does not return to zero: {steps:?}")));
        }
        Ok(Self { steps })
    }

    pub fn zero(m: usize) -> Self {
        Self { steps: vec![0; m] }
    }

    pub fn m(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[i8] {
        &self.steps
    }

    /// Partial sums of the steps: `γ(r/m) = (2/m)·level(r)`, `r = 0..=m`.
    pub fn levels(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.m() + 1);
        out.push(0);
        let mut acc = 0;
        for &s in &self.steps {
            acc += i64::from(s);
            out.push(acc);
        }
        out
    }

    pub fn node_values(&self) -> Vec<f64> {
        let m = self.m() as f64;
        self.levels().iter().map(|&k| 2.0 * k as f64 / m).collect()
    }

    /// Coefficients `c_r` of `γ(y) = Σ_r c_r σ(y − r/m)` on `[0, 1]`.
    pub fn relu_coefficients(&self) -> Vec<f64> {
        let mut prev = 0;
        self.steps
            .iter()
            .map(|&s| {
                let c = 2.0 * f64::from(s - prev);
                prev = s;
                c
            })
            .collect()
    }

    /// `γ(y)` on `[0, 1]`, zero elsewhere.
    pub fn eval(&self, y: f64) -> f64 {
        if !(0.0..=1.0).contains(&y) {
            return 0.0;
        }
        let m = self.m() as f64;
        self.relu_coefficients()
            .iter()
            .enumerate()
            .map(|(r, c)| c * (y - r as f64 / m).max(0.0))
            .sum()
    }

    pub fn to_pwl(&self) -> Pwl {
        let m = self.m();
        let xs = (0..=m).map(|r| r as f64 / m as f64).collect();
        Pwl::new(xs, self.node_values()).expect("uniform nodes are increasing")
    }
}

/// `(2/m)⌊v/(2/m)⌋`.
pub fn quantize_node(v: f64, m: usize) -> f64 {
    let q = 2.0 / m as f64;
    q * (v / q).floor()
}

/// Quantizes samples `g(r/m)`, `r = 0..=m`, of a Lipschitz-2 function with
/// `g(0) = g(1) = 0` by `γ(r/m) = (2/m)⌊g(r/m)/(2/m)⌋`. Steps that rounding
/// pushes outside Γ are clamped back into it, which leaves legal input
/// untouched.
pub fn quantize_samples(g: &[f64]) -> Result<CachedProfile> {
    if g.len() < 2 {
        return Err(precondition("need samples at r/m for r = 0..=m with m ≥ 1"));
    }
    let m = g.len() - 1;
    let q = 2.0 / m as f64;
    let mut prev = 0i64;
    let mut steps = Vec::with_capacity(m);
    for (r, &v) in g.iter().enumerate().skip(1) {
        if !v.is_finite() {
            return Err(precondition(format!("sample {r} of the residual is not finite")));
        }
        let reach = (m - r) as i64;
        let level = ((v / q).floor() as i64).clamp(prev - 1, prev + 1).clamp(-reach, reach);
        steps.push((level - prev) as i8);
        prev = level;
    }
    CachedProfile::new(steps)
}

/// Profile of `g(y) = T·f₂((t + y)/T)` on interval `t`.
pub fn quantize_profile(f2: &dyn Fn(f64) -> f64, t: usize, intervals: usize, m: usize) -> Result<CachedProfile> {
    if m == 0 || t >= intervals {
        return Err(precondition("need m ≥ 1 and t < T"));
    }
    let tf = intervals as f64;
    let g: Vec<f64> = (0..=m)
        .map(|r| tf * f2((t as f64 + r as f64 / m as f64) / tf))
        .collect();
    quantize_samples(&g)
}

/// Parameters and cache assignment of an adaptive network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePlan {
    pub epsilon: f64,
    pub m: usize,
    #[serde(rename = "T")]
    pub intervals: usize,
    /// Smoothing width of ρ; absent for the ρ-network.
    pub delta: Option<f64>,
    /// Profile index used on each interval.
    pub assignment: Vec<usize>,
    /// Distinct profiles in order of first use.
    pub profiles: Vec<CachedProfile>,
}

impl AdaptivePlan {
    pub fn new(f2: &dyn Fn(f64) -> f64, epsilon: f64, m: usize, intervals: usize, delta: Option<f64>) -> Result<Self> {
        let mut index: HashMap<CachedProfile, usize> = HashMap::new();
        let mut profiles = Vec::new();
        let mut assignment = Vec::with_capacity(intervals);
        for t in 0..intervals {
            let p = quantize_profile(f2, t, intervals, m)?;
            let k = *index.entry(p.clone()).or_insert_with(|| {
                profiles.push(p);
                profiles.len() - 1
            });
            assignment.push(k);
        }
        let plan = Self {
            epsilon,
            m,
            intervals,
            delta,
            assignment,
            profiles,
        };
        plan.check()?;
        Ok(plan)
    }

    pub fn check(&self) -> Result<()> {
        if self.m == 0 || self.intervals == 0 {
            return Err(precondition("plan needs m ≥ 1 and T ≥ 1"));
        }
        if self.assignment.len() != self.intervals {
            return Err(precondition(format!(
                "assignment has {} entries for T = {}",
                self.assignment.len(),
                self.intervals
            )));
        }
        if self.profiles.iter().any(|p| p.m() != self.m) {
            return Err(precondition("profile length differs from m"));
        }
        let mut used = vec![false; self.profiles.len()];
        for &k in &self.assignment {
            *used
                .get_mut(k)
                .ok_or_else(|| precondition(format!("profile index {k} out of range")))? = true;
        }
        if used.iter().any(|u| !u) {
            return Err(precondition("plan lists an unused profile"));
        }
        let cap = 3f64.powi(self.m as i32).min(self.intervals as f64);
        if self.profiles.len() as f64 > cap {
            return Err(precondition("more profiles than min(T, 3^m)"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0 / 3.0) {
                return Err(precondition(format!("delta must lie in (0, 1/3), got {d}")));
            }
        }
        Ok(())
    }

    pub fn profile(&self, t: usize) -> &CachedProfile {
        &self.profiles[self.assignment[t]]
    }

    /// The cached residual `(1/T)·γ_t(Tx − t)` with `t = ⌊Tx⌋`; zero
    /// outside `[0, 1)`.
    pub fn residual(&self, x: f64) -> f64 {
        let tf = self.intervals as f64;
        let y = tf * x;
        let t = y.floor();
        if t < 0.0 || t >= tf {
            return 0.0;
        }
        self.profile(t as usize).eval(y - t) / tf
    }

    /// Worst-case distance to the target implied by the parameters. The
    /// floor quantization is off by less than `2/m` at the nodes and by up
    /// to `3/m` between them.
    pub fn error_bound(&self) -> f64 {
        let (tf, m) = (self.intervals as f64, self.m as f64);
        let quant = 3.0 / (tf * m);
        match self.delta {
            Some(d) => quant.max(8.0 * d / tf),
            None => quant,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(s)?;
        plan.check()?;
        Ok(plan)
    }
}

/// Samples `f` on the quantization nodes and rejects targets that are
/// visibly not 1-Lipschitz or exceed one in modulus.
fn check_target(f: &dyn Fn(f64) -> f64, intervals: usize, m: usize) -> Result<()> {
    let n = intervals * m;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = (i / m) as f64 / intervals as f64 + (i % m) as f64 / (m * intervals) as f64;
        let x = if i == n { 1.0 } else { x };
        let v = f(x);
        if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
            return Err(Error::Evaluation {
                x: vec![x],
                source: Box::new(precondition(format!("target value {v} is not in [-1, 1]"))),
            });
        }
        if let Some((px, pv)) = prev {
            if (v - pv).abs() > (1.0 + 1e-9) * (x - px) + 1e-12 {
                return Err(Error::Evaluation {
                    x: vec![x],
                    source: Box::new(precondition("target is not 1-Lipschitz")),
                });
            }
        }
        prev = Some((x, v));
    }
    Ok(())
}

/// `f̃₁` as `y₀ + Σ_t c_t σ(x − t/T)` with all `T` units in `layer`.
fn coarse_expr(b: &mut NetworkBuilder, coarse: &Pwl, layer: usize) -> Result<Affine> {
    let x = b.input(0);
    let xs = coarse.breakpoints();
    let slopes = coarse.slopes();
    let mut out = Affine::constant(coarse.values()[0]);
    let mut prev = 0.0;
    for (t, &s) in slopes.iter().enumerate() {
        let u = b.unit_at(&(x.clone() - xs[t]), Activation::Relu, layer)?;
        out = out.add_scaled(&Affine::node(u), s - prev);
        prev = s;
    }
    Ok(out)
}

/// Output expression of `f̃₂` given the per-interval selector outputs.
/// Adds `|Γ|` units to `layer` and `m·|Γ|` units to `layer + 1`.
fn cache_expr(b: &mut NetworkBuilder, plan: &AdaptivePlan, selectors: &[Affine], layer: usize) -> Result<Affine> {
    let mut groups = vec![Affine::default(); plan.profiles.len()];
    for (t, sel) in selectors.iter().enumerate() {
        let g = plan.assignment[t];
        groups[g] = groups[g].add_scaled(sel, 1.0);
    }
    let tf = plan.intervals as f64;
    let m = plan.m as f64;
    let mut out = Affine::default();
    for (gamma, pre) in plan.profiles.iter().zip(&groups) {
        let q3 = Affine::node(b.unit_at(pre, Activation::Relu, layer)?);
        for (r, c) in gamma.relu_coefficients().into_iter().enumerate() {
            let q4 = b.unit_at(&(q3.clone() - r as f64 / m), Activation::Relu, layer + 1)?;
            out = out.add_scaled(&Affine::node(q4), c / tf);
        }
    }
    Ok(out)
}

/// `ρ_δ`: the identity on `[0, 1−δ)`, back down to zero on `[1−δ, 1)`, zero
/// elsewhere.
pub fn rho_delta(delta: f64) -> Result<Pwl> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(precondition(format!("delta must lie in (0, 1), got {delta}")));
    }
    Pwl::new(
        vec![-1.0, 0.0, 1.0 - delta, 1.0, 2.0],
        vec![0.0, 0.0, 1.0 - delta, 0.0, 0.0],
    )
}

/// `φ_δ`: ramps up on `[0, δ)`, one on `[δ, 1−2δ)`, down on `[1−2δ, 1−δ)`.
pub fn phi_delta(delta: f64) -> Result<Pwl> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(precondition(format!("delta must lie in (0, 1/3), got {delta}")));
    }
    Pwl::new(
        vec![-1.0, 0.0, delta, 1.0 - 2.0 * delta, 1.0 - delta, 2.0],
        vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
    )
}

/// `Φ_δ(x) = Σ_t φ_δ(Tx − t)` with its units in `layer`.
fn filter_expr(b: &mut NetworkBuilder, intervals: usize, delta: f64, layer: usize) -> Result<Affine> {
    let dec = ReluDecomposition::of(&phi_delta(delta)?)?;
    let x = b.input(0);
    let mut out = Affine::default();
    for t in 0..intervals {
        let y = x.scale(intervals as f64) - t as f64;
        out = out + dec.expand(b, &y, layer)?;
    }
    Ok(out)
}

/// The comb filter `Φ_δ` as a depth-3 ReLU network.
pub fn build_filter(intervals: usize, delta: f64) -> Result<Network> {
    if intervals == 0 {
        return Err(precondition("need at least one interval"));
    }
    let mut b = NetworkBuilder::new(1);
    let out = filter_expr(&mut b, intervals, delta, 1)?;
    Ok(b.finish(&out))
}

/// Depth-5 network with ρ-units: `f̃₁` in parallel with the cached residual
/// `(1/T) Σ_γ Σ_r c_{γ,r} σ(Σ_{t: γ_t = γ} ρ(Tx − t) − r/m)`.
pub fn build_cache_network_rho(f: &dyn Fn(f64) -> f64, eps: f64) -> Result<(Network, AdaptivePlan)> {
    let m = choose_m(eps)?;
    let intervals = rho_intervals(m, eps);
    check_target(f, intervals, m)?;
    let (coarse, residual) = coarse_interpolant(f, intervals)?;
    let plan = AdaptivePlan::new(&|x| residual.eval(x), eps, m, intervals, None)?;

    let mut b = NetworkBuilder::new(1);
    let f1 = coarse_expr(&mut b, &coarse, 1)?;
    let x = b.input(0);
    let selectors = (0..intervals)
        .map(|t| {
            let pre = x.scale(intervals as f64) - t as f64;
            Ok(Affine::node(b.unit_at(&pre, Activation::Rho, 1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let f2 = cache_expr(&mut b, &plan, &selectors, 2)?;
    Ok((b.finish(&(f1 + f2)), plan))
}

/// Depth-6 ReLU network computing
/// `f̃₁ + σ(f̃_{2,δ} + 2Φ_δ − 1) − σ(2Φ_δ − 1)`, where `f̃_{2,δ}` is the
/// cached residual with ρ replaced by `ρ_δ`. Returns the network and its plan.
pub fn assemble_adaptive_relu(f: &dyn Fn(f64) -> f64, eps: f64, delta: Option<f64>) -> Result<(Network, AdaptivePlan)> {
    let m = choose_m(eps)?;
    let intervals = relu_intervals(m, eps);
    let delta = delta.unwrap_or_else(|| default_delta(eps, intervals));
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(precondition(format!("delta must lie in (0, 1/3), got {delta}")));
    }
    check_target(f, intervals, m)?;
    let (coarse, residual) = coarse_interpolant(f, intervals)?;
    let plan = AdaptivePlan::new(&|x| residual.eval(x), eps, m, intervals, Some(delta))?;

    let mut b = NetworkBuilder::new(1);
    let f1 = coarse_expr(&mut b, &coarse, 1)?;
    let rho = ReluDecomposition::of(&rho_delta(delta)?)?;
    let x = b.input(0);
    let selectors = (0..intervals)
        .map(|t| rho.expand(&mut b, &(x.scale(intervals as f64) - t as f64), 1))
        .collect::<Result<Vec<_>>>()?;
    let filter = filter_expr(&mut b, intervals, delta, 1)?;
    let f2 = cache_expr(&mut b, &plan, &selectors, 2)?;
    let gate = filter.scale(2.0) - 1.0;
    let on = b.unit_at(&(f2 + gate.clone()), Activation::Relu, 4)?;
    let off = b.unit_at(&gate, Activation::Relu, 4)?;
    let out = f1 + Affine::node(on) - Affine::node(off);
    Ok((b.finish(&out), plan))
}

/// Result of [`build_adaptive_relu`].
#[derive(Debug, Clone)]
pub struct AdaptiveBuild {
    pub network: Network,
    pub plan: AdaptivePlan,
    pub report: ApproxReport,
}

/// Builds the depth-6 network and measures it on 10⁴+1 points of
/// `[0, 1 − 10⁻⁹]`; the error at `x = 1` is reported separately.
pub fn build_adaptive_relu(f: &dyn Fn(f64) -> f64, eps: f64, delta: Option<f64>) -> Result<AdaptiveBuild> {
    let start = Instant::now();
    let (network, plan) = assemble_adaptive_relu(f, eps, delta)?;
    let grid = GridSpec::uniform(1, 0.0, 1.0 - 1e-9, 10_001)?;
    let err = measure_sup_error(&network, &|x| f(x[0]), &grid)?;
    let at_one = (network.eval(&[1.0])? - f(1.0)).abs();
    let metrics = network.metrics();
    let mut report = ApproxReport::new(Construction::Adaptive, "custom", eps)
        .param("m", plan.m as f64)
        .param("T", plan.intervals as f64)
        .param("delta", plan.delta.unwrap_or(0.0))
        .param("profiles", plan.profiles.len() as f64)
        .param("error_bound", plan.error_bound())
        .param("error_at_1", at_one);
    report.measured_error = Some(err);
    report.grid = Some(grid);
    report.metrics = Some(metrics);
    report.normalized = Some(normalized_constant(Construction::Adaptive, eps, &metrics, 1, 1));
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(AdaptiveBuild { network, plan, report })
}

/// Named 1-Lipschitz targets on `[0, 1]` bounded by one.
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzTarget {
    /// `min(x, 1 − x)`.
    Tent,
    /// `sin(2πx)/(2π)`.
    Sine,
    /// `x/2`.
    Linear,
    Zero,
    /// Random slopes in `[−1, 1]` between sorted uniform breakpoints, starting at 0.
    Random(Pwl),
}

pub const LIPSCHITZ_TARGETS: [&str; 5] = ["tent", "sine", "linear", "zero", "random"];

impl LipschitzTarget {
    pub fn builtin(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "tent" => Self::Tent,
            "sine" => Self::Sine,
            "linear" => Self::Linear,
            "zero" => Self::Zero,
            "random" => Self::Random(random_lipschitz_pwl(500, seed)),
            other => {
                return Err(precondition(format!(
                    "unknown target '{other}', expected one of {}",
                    LIPSCHITZ_TARGETS.join(", ")
                )))
            }
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Tent => x.min(1.0 - x),
            Self::Sine => (2.0 * std::f64::consts::PI * x).sin() / (2.0 * std::f64::consts::PI),
            Self::Linear => x / 2.0,
            Self::Zero => 0.0,
            Self::Random(p) => p.eval_extended(x),
        }
    }
}

pub fn random_lipschitz_pwl(breakpoints: usize, seed: u64) -> Pwl {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..breakpoints).map(|_| rng.gen_range(1e-6..1.0 - 1e-6)).collect();
    xs.push(0.0);
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut ys = vec![0.0];
    for w in xs.windows(2) {
        let s: f64 = rng.gen_range(-1.0..=1.0);
        ys.push(ys[ys.len() - 1] + s * (w[1] - w[0]));
    }
    Pwl::new(xs, ys).expect("sorted distinct breakpoints")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assume, proptest};
    use std::f64::consts::PI;

    fn sine(x: f64) -> f64 {
        (2.0 * PI * x).sin() / (2.0 * PI)
    }

    fn tent(x: f64) -> f64 {
        x.min(1.0 - x)
    }

    #[test]
    fn parameter_choices() {
        assert_eq!(choose_m(0.01).unwrap(), 3);
        assert_eq!(rho_intervals(3, 0.01), 67);
        assert_eq!(choose_m(1.0 / 16.0).unwrap(), 2);
        assert_eq!(choose_m(0.4).unwrap(), 1);
        assert_eq!(choose_m(1.0 / 1024.0).unwrap(), 4);
        assert!(choose_m(0.5).is_err());
        assert!(choose_m(0.0).is_err());
        assert_eq!(relu_intervals(2, 1.0 / 16.0), 32);
        assert_eq!(default_delta(1.0 / 16.0, 32), 0.125);
        assert_eq!(default_delta(0.4, 10), 0.25 - 1e-6);
    }

    #[test]
    fn coarse_interpolation() {
        let lin = |x: f64| 0.3 * x - 0.1;
        let (_, r) = coarse_interpolant(&lin, 7).unwrap();
        for i in 0..=100 {
            assert!(r.eval(i as f64 / 100.0).abs() < 1e-15);
        }

        let (p, r) = coarse_interpolant(&tent, 4).unwrap();
        let exact = Pwl::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 0.0]).unwrap();
        assert_eq!(p.sup_distance(&exact).unwrap(), 0.0);
        assert_eq!(r.eval(0.3), 0.0);

        let (_, r) = coarse_interpolant(&sine, 10).unwrap();
        for t in 0..=10 {
            assert_eq!(r.eval(t as f64 / 10.0), 0.0, "t = {t}");
        }
        // Lipschitz-2 residual
        let xs: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        for w in xs.windows(2) {
            assert!((r.eval(w[1]) - r.eval(w[0])).abs() <= 2.0 * (w[1] - w[0]) + 1e-15);
        }
    }

    #[test]
    fn floor_quantization() {
        assert!((quantize_node(0.85, 5) - 0.8).abs() < 1e-15);
        assert_eq!(quantize_node(0.8, 5), 0.8);
        assert_eq!(quantize_node(-0.1, 5), -0.4);
        let p = quantize_samples(&[0.0, 0.39, 0.79, 0.5, 0.2, 0.0]).unwrap();
        assert_eq!(p.levels(), vec![0, 0, 1, 1, 0, 0]);

        let zero = |_: f64| 0.0;
        assert_eq!(quantize_profile(&zero, 3, 10, 4).unwrap(), CachedProfile::zero(4));
    }

    #[test]
    fn quantization_error_can_reach_three_over_m() {
        // Lipschitz-2, vanishing at the ends, 0.39 at the inner nodes and
        // 0.59 halfway between the first two: every node rounds down to 0.
        let m = 5;
        let g = Pwl::new(
            vec![0.0, 0.2, 0.3, 0.4, 0.8, 1.0],
            vec![0.0, 0.39, 0.59, 0.39, 0.39, 0.0],
        )
        .unwrap();
        let slopes = g.slopes();
        assert!(slopes.iter().all(|s| s.abs() <= 2.0));
        let samples: Vec<f64> = (0..=m).map(|r| g.eval(r as f64 / m as f64).unwrap()).collect();
        let p = quantize_samples(&samples).unwrap();
        assert_eq!(p, CachedProfile::zero(m));
        let err = (g.eval(0.3).unwrap() - p.eval(0.3)).abs();
        assert!(err > 2.0 / m as f64 && err < 3.0 / m as f64);
    }

    #[test]
    fn projection_repairs_rounding_at_the_ends() {
        let p = quantize_samples(&[0.0, 0.5, -1e-17]).unwrap();
        assert_eq!(p.levels(), vec![0, 0, 0]);
        let p = quantize_samples(&[0.0, -0.3, -0.7, -0.2, -1e-300]).unwrap();
        assert_eq!(p.levels().last(), Some(&0));
    }

    #[test]
    fn profile_representations_agree() {
        let p = CachedProfile::new(vec![1, 1, 0, -1, -1, 0]).unwrap();
        let pwl = p.to_pwl();
        for i in 0..=60 {
            let y = i as f64 / 60.0;
            assert!((p.eval(y) - pwl.eval(y).unwrap()).abs() < 1e-14);
        }
        assert!(CachedProfile::new(vec![1, 1]).is_err());
        assert!(CachedProfile::new(vec![2, -2]).is_err());
        let back: CachedProfile = serde_json::from_str("[1,0,-1]").unwrap();
        assert_eq!(back.steps(), &[1, 0, -1]);
        assert!(serde_json::from_str::<CachedProfile>("[1,1]").is_err());
    }

    #[test]
    fn plan_json_shape() {
        let (_, r) = coarse_interpolant(&sine, 8).unwrap();
        let plan = AdaptivePlan::new(&|x| r.eval(x), 0.1, 2, 8, Some(0.01)).unwrap();
        let s = plan.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["epsilon", "m", "T", "delta", "assignment", "profiles"] {
            assert!(v.get(key).is_some(), "{key} missing in {s}");
        }
        assert_eq!(AdaptivePlan::from_json(&s).unwrap(), plan);
        let mut bad = plan.clone();
        bad.assignment.pop();
        assert!(AdaptivePlan::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn rho_network_shape_and_formula() {
        let (net, plan) = build_cache_network_rho(&sine, 0.01).unwrap();
        assert_eq!(net.depth(), 5);
        assert_eq!((plan.m, plan.intervals), (3, 67));
        assert!(net.validate().is_empty());
        let g = plan.profiles.len();
        assert!(g <= 27);
        assert_eq!(net.layer_width(1), 2 * 67);
        assert_eq!(net.layer_width(2), g);
        assert_eq!(net.layer_width(3), 3 * g);

        let (coarse, _) = coarse_interpolant(&sine, 67).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let tf = 67.0;
        for _ in 0..10_000 {
            let x: f64 = rng.gen_range(0.0..1.0);
            // the cached residual summed over profiles and ramps
            let mut f2 = 0.0;
            for (k, gamma) in plan.profiles.iter().enumerate() {
                let inner: f64 = (0..67)
                    .filter(|&t| plan.assignment[t] == k)
                    .map(|t| Activation::Rho.apply(tf * x - t as f64))
                    .sum();
                for (r, c) in gamma.relu_coefficients().iter().enumerate() {
                    f2 += c * (inner - r as f64 / 3.0).max(0.0);
                }
            }
            let want = coarse.eval(x).unwrap() + f2 / tf;
            assert!((net.eval(&[x]).unwrap() - want).abs() < 1e-9, "x = {x}");
            assert!((f2 / tf - plan.residual(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_network_selects_one_interval() {
        let (net, plan) = build_cache_network_rho(&tent, 0.05).unwrap();
        let tf = plan.intervals as f64;
        for i in 0..997 {
            let x = i as f64 / 997.0;
            let trace = net.eval_trace(&[x]).unwrap();
            let t = (tf * x).floor() as usize;
            for (k, unit) in net.layer(1).iter().enumerate() {
                if unit.activation == Activation::Rho {
                    let tk = k - plan.intervals;
                    if tk != t {
                        assert_eq!(trace[1][k], 0.0, "x = {x}, t' = {tk}");
                    }
                }
            }
        }
    }

    #[test]
    fn rho_network_errors() {
        let lin = |x: f64| 0.5 * x;
        let (net, plan) = build_cache_network_rho(&lin, 0.05).unwrap();
        assert!(plan.profiles.iter().all(|p| *p == CachedProfile::zero(plan.m)));
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert!((net.eval(&[x]).unwrap() - 0.5 * x).abs() < 1e-14);
        }

        let eps = 1.0 / 16.0;
        let (net, plan) = build_cache_network_rho(&sine, eps).unwrap();
        assert!(plan.error_bound() <= 1.5 * eps);
        let mut worst: f64 = 0.0;
        for i in 0..10_000 {
            let x = (1.0 - 1e-9) * i as f64 / 9_999.0;
            worst = worst.max((net.eval(&[x]).unwrap() - sine(x)).abs());
        }
        assert!(worst <= eps, "{worst}");

        assert!(build_cache_network_rho(&sine, 0.5).is_err());
        let steep = |x: f64| 3.0 * x;
        assert!(build_cache_network_rho(&steep, 0.1).is_err());
    }

    #[test]
    fn filter_shape() {
        let (t, delta) = (5, 0.1);
        let net = build_filter(t, delta).unwrap();
        assert_eq!(net.depth(), 3);
        let pwl = net.extract_pwl(0.0, 1.0).unwrap().simplify();
        assert!(pwl.breakpoints().len() - 2 <= 4 * t);
        let (lo, hi) = pwl.range();
        assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12, "{lo} {hi}");
        for k in 0..t {
            let x = (k as f64 + 0.5) / t as f64;
            assert!((net.eval(&[x]).unwrap() - 1.0).abs() < 1e-12);
        }
        // y = 1 − δ exactly representable
        let exact = build_filter(4, 0.125).unwrap();
        assert_eq!(exact.eval(&[(2.0 + 0.875) / 4.0]).unwrap(), 0.0);
        assert_eq!(exact.eval(&[(2.0 + 0.125) / 4.0]).unwrap(), 1.0);
        assert!(build_filter(4, 1.0 / 3.0).is_err());
        assert!(build_filter(0, 0.1).is_err());
    }

    #[test]
    fn smoothing_pieces() {
        let d = 0.2;
        let rho = rho_delta(d).unwrap();
        assert_eq!(ReluDecomposition::of(&rho).unwrap().unit_count(), 3);
        assert_eq!(ReluDecomposition::of(&phi_delta(d).unwrap()).unwrap().unit_count(), 4);
        assert!((rho.eval_extended(0.5) - 0.5).abs() < 1e-15);
        assert!((rho.eval_extended(0.9) - 0.4).abs() < 1e-12);
        assert_eq!(rho.eval_extended(1.5), 0.0);
    }

    #[test]
    fn relu_network_depth_and_cases() {
        let eps = 1.0 / 32.0;
        let (net, plan) = assemble_adaptive_relu(&sine, eps, None).unwrap();
        assert_eq!(net.depth(), 6);
        assert!(net.validate().is_empty());
        assert!(net
            .activations()
            .all(|a| matches!(a, Activation::Relu | Activation::Linear)));
        let delta = plan.delta.unwrap();
        let tf = plan.intervals as f64;
        let (coarse, _) = coarse_interpolant(&sine, plan.intervals).unwrap();
        for i in 0..20_000 {
            let x = i as f64 / 20_000.0;
            let t = (tf * x).floor();
            let y = tf * x - t;
            let f3 = net.eval(&[x]).unwrap() - coarse.eval(x).unwrap();
            if y >= 1.0 - delta + 1e-9 {
                assert!(f3.abs() < 1e-12, "x = {x}");
            } else if y >= delta + 1e-9 && y <= 1.0 - 2.0 * delta - 1e-9 {
                assert!((f3 - plan.residual(x)).abs() < 1e-9, "x = {x}");
            }
        }
    }

    #[test]
    fn relu_network_metrics_ignore_delta() {
        let eps = 1.0 / 64.0;
        let (a, pa) = assemble_adaptive_relu(&tent, eps, None).unwrap();
        let (b, _) = assemble_adaptive_relu(&tent, eps, Some(pa.delta.unwrap() / 10.0)).unwrap();
        assert_eq!(a.metrics(), b.metrics());
        assert!(assemble_adaptive_relu(&tent, eps, Some(0.34)).is_err());
    }

    #[test]
    fn relu_network_meets_epsilon() {
        let eps = 1.0 / 32.0;
        let (net, plan) = assemble_adaptive_relu(&tent, eps, None).unwrap();
        assert!(plan.error_bound() <= eps);
        let mut worst: f64 = 0.0;
        for i in 0..=10_000 {
            let x = (1.0 - 1e-9) * i as f64 / 10_000.0;
            worst = worst.max((net.eval(&[x]).unwrap() - tent(x)).abs());
        }
        assert!(worst <= eps, "{worst}");
    }

    #[test]
    fn random_target_is_admissible() {
        let p = random_lipschitz_pwl(500, 7);
        assert_eq!(p.breakpoints().len(), 502);
        assert!(p.slopes().iter().all(|s| s.abs() <= 1.0));
        let (lo, hi) = p.range();
        assert!(lo >= -1.0 && hi <= 1.0);
        assert_eq!(random_lipschitz_pwl(500, 7), p);
        assert!(LipschitzTarget::builtin("nope", 0).is_err());
    }

    proptest! {
        #[test]
        fn floor_steps_stay_in_gamma(vals in proptest::collection::vec(-1.0f64..1.0, 4)) {
            // random Lipschitz-2 g on the nodes r/5 with g(0) = g(1) = 0
            let m = 5;
            let mut g = vec![0.0];
            for v in vals {
                let prev: f64 = g[g.len() - 1];
                g.push(prev + 0.4 * v);
            }
            let last: f64 = g[g.len() - 1];
            prop_assume!(last.abs() <= 0.4);
            g.push(0.0);
            let p = quantize_samples(&g).unwrap();
            let nodes = p.node_values();
            for r in 1..=m {
                let step = nodes[r] - nodes[r - 1];
                prop_assert!([-0.4, 0.0, 0.4].iter().any(|s| (step - s).abs() < 1e-12));
                prop_assert!(g[r] - nodes[r] >= -1e-12 && g[r] - nodes[r] < 0.4 + 1e-12);
            }
        }

        #[test]
        fn plans_respect_cache_bound(seed in 0u64..1000) {
            let f = random_lipschitz_pwl(50, seed);
            let eval = |x: f64| f.eval_extended(x);
            let (_, r) = coarse_interpolant(&eval, 40).unwrap();
            let plan = AdaptivePlan::new(&|x| r.eval(x), 0.05, 2, 40, None).unwrap();
            prop_assert!(plan.profiles.len() <= 9);
            for t in 0..40 {
                let tf = 40.0;
                for k in 0..=20 {
                    let y = k as f64 / 20.0;
                    let x = (t as f64 + y) / tf;
                    let e = (r.eval(x) - plan.profile(t).eval(y) / tf).abs();
                    prop_assert!(e <= 3.0 / (tf * 2.0) + 1e-12);
                }
            }
        }
    }
}
