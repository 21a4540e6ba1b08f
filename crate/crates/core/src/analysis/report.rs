use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{exact_error_vs_quadratic, measure_sup_error, sobolev_grid, GridSpec};
use crate::adaptive::{build_adaptive_relu, LipschitzTarget};
use crate::calculus::{build_multiplier, build_square, square_depth_for_error, MultiplierParams};
use crate::error::{precondition, Error, Result};
use crate::network::ComplexityMetrics;
use crate::sobolev::{build_sobolev_approximator, oracle, SobolevOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Square,
    Multiplier,
    Sobolev,
    Adaptive,
}

impl Construction {
    pub const ALL: [Construction; 4] = [Self::Square, Self::Multiplier, Self::Sobolev, Self::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Self::Square => "square",
            Self::Multiplier => "multiplier",
            Self::Sobolev => "sobolev",
            Self::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            precondition(format!(
                "unknown builder '{s}', expected square, multiplier, sobolev or adaptive"
            ))
        })
    }
}

/// One measured construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub builder: Construction,
    pub target: String,
    pub epsilon: f64,
    pub params: BTreeMap<String, f64>,
    /// Grid maximum of the error; the true supremum may be larger.
    pub measured_error: Option<f64>,
    pub grid: Option<GridSpec>,
    pub metrics: Option<ComplexityMetrics>,
    pub wall_ms: f64,
    pub normalized: Option<f64>,
    pub notes: Vec<String>,
    pub failure: Option<String>,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "builder",
    "epsilon",
    "measured_error",
    "depth",
    "hidden_units",
    "computation_units",
    "connections",
    "weights",
    "wall_ms",
    "extra",
];

impl ApproxReport {
    pub fn new(builder: Construction, target: impl Into<String>, epsilon: f64) -> Self {
        Self {
            builder,
            target: target.into(),
            epsilon,
            params: BTreeMap::new(),
            measured_error: None,
            grid: None,
            metrics: None,
            wall_ms: 0.0,
            normalized: None,
            notes: Vec::new(),
            failure: None,
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Whether the measured error stays within `ε`.
    pub fn within_epsilon(&self) -> bool {
        self.measured_error.is_some_and(|e| e <= self.epsilon)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn csv_record(&self) -> Result<Vec<String>> {
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let m = self.metrics;
        let extra = serde_json::json!({
            "target": self.target,
            "params": self.params,
            "normalized": self.normalized,
            "grid": self.grid.as_ref().map(GridSpec::describe),
            "notes": self.notes,
            "failure": self.failure,
        });
        Ok(vec![
            self.builder.to_string(),
            self.epsilon.to_string(),
            self.measured_error.map(|e| e.to_string()).unwrap_or_default(),
            opt(m.map(|m| m.depth)),
            opt(m.map(|m| m.hidden_units)),
            opt(m.map(|m| m.computation_units)),
            opt(m.map(|m| m.connections)),
            opt(m.map(|m| m.weights)),
            format!("{:.3}", self.wall_ms),
            serde_json::to_string(&extra)?,
        ])
    }
}

/// Size normalized by the asymptotic rate of each construction:
/// `weights/(ln(1/ε)+1)` for squaring and multiplication,
/// `weights·ε^{d/n}/(ln(1/ε)+1)` for the Sobolev approximator and
/// `units·ε·ln(1/ε)` for the adaptive one.
pub fn normalized_constant(builder: Construction, eps: f64, metrics: &ComplexityMetrics, d: usize, n: usize) -> f64 {
    let log = (1.0 / eps).ln();
    let w = metrics.weights as f64;
    match builder {
        Construction::Square | Construction::Multiplier => w / (log + 1.0),
        Construction::Sobolev => w * eps.powf(d as f64 / n as f64) / (log + 1.0),
        Construction::Adaptive => metrics.computation_units as f64 * eps * log,
    }
}

/// What to build and measure in a sweep over `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub builder: Construction,
    /// Target name; empty selects the builder's default.
    pub target: String,
    pub d: usize,
    pub n: usize,
    /// Multiplier range `M`.
    pub bound: f64,
    /// Seed of the random Lipschitz target.
    pub seed: u64,
    /// Smoothing width for the adaptive builder; default when absent.
    pub delta: Option<f64>,
    pub sobolev: SobolevOptions,
}

impl ScalingConfig {
    pub fn new(builder: Construction) -> Self {
        let (target, d, n) = match builder {
            Construction::Square => ("square", 1, 1),
            Construction::Multiplier => ("product", 2, 1),
            Construction::Sobolev => ("sine", 1, 2),
            Construction::Adaptive => ("tent", 1, 1),
        };
        Self {
            builder,
            target: target.into(),
            d,
            n,
            bound: 1.0,
            seed: 0,
            delta: None,
            sobolev: SobolevOptions::default(),
        }
    }
}

/// Builds one network for `ε`, measures it and fills a report.
pub fn run_construction(cfg: &ScalingConfig, eps: f64) -> Result<ApproxReport> {
    let start = Instant::now();
    let mut rep = match cfg.builder {
        Construction::Square => {
            let m = square_depth_for_error(eps)?;
            let net = build_square(m)?;
            let grid = GridSpec::default_for(1)?;
            let mut rep = ApproxReport::new(cfg.builder, "square", eps)
                .param("m", f64::from(m))
                .param("exact_error", exact_error_vs_quadratic(&net, 0.0, 1.0, 1.0, 0.0, 0.0)?);
            rep.measured_error = Some(measure_sup_error(&net, &|x| x[0] * x[0], &grid)?);
            rep.grid = Some(grid);
            rep.metrics = Some(net.metrics());
            rep
        }
        Construction::Multiplier => {
            let p = MultiplierParams::new(cfg.bound, eps)?;
            let net = build_multiplier(cfg.bound, eps)?;
            let grid = GridSpec::uniform(2, -cfg.bound, cfg.bound, 101)?;
            let mut rep = ApproxReport::new(cfg.builder, "product", eps)
                .param("bound", cfg.bound)
                .param("m", f64::from(p.m))
                .param("delta", p.delta);
            rep.measured_error = Some(measure_sup_error(&net, &|x| x[0] * x[1], &grid)?);
            rep.grid = Some(grid);
            rep.metrics = Some(net.metrics());
            rep
        }
        Construction::Sobolev => {
            let f = oracle::builtin(&cfg.target, cfg.d, cfg.n)?;
            let build = build_sobolev_approximator(f.as_ref(), cfg.n, eps, &cfg.sobolev)?;
            let arch = &build.network.arch;
            let grid = sobolev_grid(cfg.d, arch.n_grid)?;
            let mut rep = ApproxReport::new(cfg.builder, f.name(), eps)
                .param("d", cfg.d as f64)
                .param("n", cfg.n as f64)
                .param("N", arch.n_grid as f64)
                .param("delta", arch.delta)
                .param("multiplier_m", f64::from(arch.multiplier.m));
            rep.measured_error = Some(measure_sup_error(&build.network, &|x| f.value(x), &grid)?);
            rep.grid = Some(grid);
            rep.metrics = Some(build.network.metrics());
            rep.notes = build.warnings;
            rep
        }
        Construction::Adaptive => {
            let target = LipschitzTarget::builtin(&cfg.target, cfg.seed)?;
            let f = |x: f64| target.eval(x);
            let mut rep = build_adaptive_relu(&f, eps, cfg.delta)?.report;
            rep.target = cfg.target.clone();
            rep
        }
    };
    rep.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(m) = &rep.metrics {
        rep.normalized = Some(normalized_constant(cfg.builder, eps, m, cfg.d, cfg.n));
    }
    Ok(rep)
}

/// One report per `ε`; failures are recorded in their row and the sweep
/// continues.
pub fn scaling_experiment(cfg: &ScalingConfig, epsilons: &[f64]) -> Vec<ApproxReport> {
    epsilons
        .iter()
        .map(|&eps| {
            run_construction(cfg, eps).unwrap_or_else(|e| {
                let mut rep = ApproxReport::new(cfg.builder, cfg.target.clone(), eps);
                rep.failure = Some(e.to_string());
                rep
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[ApproxReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_record()?)?;
    }
    w.flush()?;
    Ok(())
}
