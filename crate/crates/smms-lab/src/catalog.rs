//! Named registry of chart metrics and weights for the experiment runner.

use std::sync::Arc;

use crate::fields::{
    ConformallyFlat, ConstWeight, Euclidean, HalfSquareWeight, MetricField, PowerDecayWeight,
    ScalarField, Schwarzschild, StereographicSphere, TrigMetric, TrigScalar, ZeroWeight,
};
use crate::{Result, SmmsError};

/// Numeric knobs shared by the catalog constructors; unused entries are
/// ignored by fields that do not need them.
#[derive(Clone, Debug)]
pub struct CatalogParams {
    pub n: usize,
    pub mass: f64,
    pub amplitude: f64,
    pub tau: f64,
    pub constant: f64,
    pub seed: u64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams {
            n: 3,
            mass: 1.0,
            amplitude: 0.3,
            tau: 1.5,
            constant: 0.0,
            seed: 1,
        }
    }
}

pub const METRICS: &[&str] = &[
    "euclidean",
    "schwarzschild",
    "stereographic-sphere",
    "conformally-flat",
    "trig-random",
];

pub const WEIGHTS: &[&str] = &[
    "zero",
    "const",
    "trig-random",
    "power-decay",
    "half-square",
];

pub const EXPERIMENTS: &[&str] = &[
    "curvature-identities",
    "mass-suite",
    "clifford-suite",
    "warped-dirac",
    "torus-identities",
    "spectra",
    "mu-interpolation",
    "negative-m",
];

pub fn metric(name: &str, p: &CatalogParams) -> Result<Arc<dyn MetricField>> {
    match name {
        "euclidean" => Ok(Arc::new(Euclidean { n: p.n })),
        "schwarzschild" => Ok(Arc::new(Schwarzschild {
            n: p.n,
            mass: p.mass,
        })),
        "stereographic-sphere" => Ok(Arc::new(StereographicSphere { n: p.n })),
        "conformally-flat" => Ok(Arc::new(ConformallyFlat {
            phi: Arc::new(TrigScalar::seeded(p.n, p.seed, p.amplitude)),
        })),
        "trig-random" => Ok(Arc::new(TrigMetric::seeded(p.n, p.seed, p.amplitude))),
        _ => Err(SmmsError::UnknownCatalogEntry(format!("metric '{name}'"))),
    }
}

pub fn weight(name: &str, p: &CatalogParams) -> Result<Arc<dyn ScalarField>> {
    match name {
        "zero" => Ok(Arc::new(ZeroWeight { n: p.n })),
        "const" => Ok(Arc::new(ConstWeight {
            n: p.n,
            c: p.constant,
        })),
        "trig-random" => Ok(Arc::new(TrigScalar::seeded(p.n, p.seed, p.amplitude))),
        "power-decay" => Ok(Arc::new(PowerDecayWeight {
            n: p.n,
            amplitude: p.amplitude,
            tau: p.tau,
        })),
        "half-square" => Ok(Arc::new(HalfSquareWeight { n: p.n })),
        _ => Err(SmmsError::UnknownCatalogEntry(format!("weight '{name}'"))),
    }
}

/// Deterministic text listing of the built-in catalogs.
pub fn listing() -> String {
    let mut out = String::new();
    out.push_str("metrics:\n");
    for m in METRICS {
        out.push_str(&format!("  {m}\n"));
    }
    out.push_str("weights:\n");
    for w in WEIGHTS {
        out.push_str(&format!("  {w}\n"));
    }
    out.push_str("experiments:\n");
    for e in EXPERIMENTS {
        out.push_str(&format!("  {e}\n"));
    }
    out
}
