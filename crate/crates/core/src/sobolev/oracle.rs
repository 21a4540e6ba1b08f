use std::f64::consts::PI;

use crate::error::{precondition, Error, Result};

/// A function on `[0, 1]^d` together with its partial derivatives.
pub trait SmoothFunction {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `D^α f(x)`; the zero multi-index gives the value.
    fn derivative(&self, alpha: &[usize], x: &[f64]) -> f64;

    /// Whether derivatives are exact. Approximate derivatives cannot
    /// certify the coefficient bound `|a| ≤ 1`.
    fn certified(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// The zero function.
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub d: usize,
}

impl SmoothFunction for Zero {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn derivative(&self, _: &[usize], _: &[f64]) -> f64 {
        0.0
    }
    fn name(&self) -> String {
        "zero".into()
    }
}

/// `(x₁ + … + x_d)/d`.
#[derive(Debug, Clone, Copy)]
pub struct Mean {
    pub d: usize,
}

impl SmoothFunction for Mean {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / self.d as f64
    }
    fn derivative(&self, alpha: &[usize], x: &[f64]) -> f64 {
        match alpha.iter().sum::<usize>() {
            0 => self.value(x),
            1 => 1.0 / self.d as f64,
            _ => 0.0,
        }
    }
    fn name(&self) -> String {
        "linear".into()
    }
}

/// `sin(π·mean(x))/πⁿ`, scaled so every derivative up to order `n` is
/// bounded by one.
#[derive(Debug, Clone, Copy)]
pub struct Sine {
    pub d: usize,
    pub n: usize,
}

impl SmoothFunction for Sine {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.derivative(&vec![0; self.d], x)
    }
    fn derivative(&self, alpha: &[usize], x: &[f64]) -> f64 {
        let k = alpha.iter().sum::<usize>();
        let d = self.d as f64;
        let t = PI * x.iter().sum::<f64>() / d;
        let s = match k % 4 {
            0 => t.sin(),
            1 => t.cos(),
            2 => -t.sin(),
            _ => -t.cos(),
        };
        (PI / d).powi(k as i32) * s / PI.powi(self.n as i32)
    }
    fn name(&self) -> String {
        "sine".into()
    }
}

/// `Σ x_k² / (2d)`.
#[derive(Debug, Clone, Copy)]
pub struct Poly {
    pub d: usize,
}

impl SmoothFunction for Poly {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.d as f64)
    }
    fn derivative(&self, alpha: &[usize], x: &[f64]) -> f64 {
        let d2 = 2.0 * self.d as f64;
        let nz: Vec<usize> = (0..alpha.len()).filter(|&k| alpha[k] > 0).collect();
        match (alpha.iter().sum::<usize>(), nz.as_slice()) {
            (0, _) => self.value(x),
            (1, [k]) => 2.0 * x[*k] / d2,
            (2, [k]) if alpha[*k] == 2 => 2.0 / d2,
            _ => 0.0,
        }
    }
    fn name(&self) -> String {
        "poly".into()
    }
}

/// Derivatives by nested central differences of a plain function. Errors
/// are `O(h²)` per order, so these coefficients are not certified.
pub struct FiniteDifference<F: Fn(&[f64]) -> f64> {
    pub d: usize,
    pub f: F,
    pub step: f64,
    pub label: String,
}

impl<F: Fn(&[f64]) -> f64> FiniteDifference<F> {
    pub fn new(d: usize, label: impl Into<String>, f: F) -> Self {
        Self {
            d,
            f,
            step: 1e-4,
            label: label.into(),
        }
    }

    fn diff(&self, alpha: &mut [usize], x: &mut [f64]) -> f64 {
        let Some(k) = alpha.iter().position(|&a| a > 0) else {
            return (self.f)(x);
        };
        alpha[k] -= 1;
        let h = self.step;
        let x0 = x[k];
        x[k] = x0 + h;
        let plus = self.diff(alpha, x);
        x[k] = x0 - h;
        let minus = self.diff(alpha, x);
        x[k] = x0;
        alpha[k] += 1;
        (plus - minus) / (2.0 * h)
    }
}

impl<F: Fn(&[f64]) -> f64> SmoothFunction for FiniteDifference<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn derivative(&self, alpha: &[usize], x: &[f64]) -> f64 {
        self.diff(&mut alpha.to_vec(), &mut x.to_vec())
    }
    fn certified(&self) -> bool {
        false
    }
    fn name(&self) -> String {
        self.label.clone()
    }
}

pub const BUILTIN_TARGETS: [&str; 4] = ["zero", "linear", "sine", "poly"];

/// A built-in member of the unit Sobolev ball, by name.
pub fn builtin(name: &str, d: usize, n: usize) -> Result<Box<dyn SmoothFunction>> {
    if d == 0 {
        return Err(precondition("dimension must be positive"));
    }
    Ok(match name {
        "zero" => Box::new(Zero { d }),
        "linear" => Box::new(Mean { d }),
        "sine" => Box::new(Sine { d, n }),
        "poly" => Box::new(Poly { d }),
        other => {
            return Err(Error::Precondition(format!(
                "unknown target '{other}', expected one of {}",
                BUILTIN_TARGETS.join(", ")
            )))
        }
    })
}
