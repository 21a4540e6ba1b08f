//! Constructive ReLU network approximation.
//!
//! Builders produce explicit [`Network`] values whose accuracy and size are
//! checked against exact piecewise-linear oracles ([`Pwl`]) and grid
//! measurements.

pub mod activation;
pub mod adaptive;
pub mod analysis;
pub mod calculus;
pub mod error;
pub mod network;
pub mod pwl;
pub mod sobolev;
pub mod sum;

pub use adaptive::{AdaptiveBuild, AdaptivePlan, CachedProfile, LipschitzTarget};
pub use analysis::{ApproxReport, Construction, GridSpec, PieceBound, ScalingConfig};
pub use error::{Error, Result};
pub use network::{
    Activation, Affine, ComplexityMetrics, Edge, Interval, Network, NetworkBuilder, NodeRef, Unit, Violation,
};
pub use pwl::Pwl;
pub use sobolev::{SobolevArchitecture, SobolevNetwork, SobolevOptions, TaylorGrid};
