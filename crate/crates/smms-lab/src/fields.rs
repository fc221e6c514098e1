//! Chart metric fields and scalar weight fields, evaluated with second-order
//! jets, plus the built-in catalog of closed-form test fields.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::jet::{radius_squared, Jet2};
use crate::{Result, SmmsError};

/// Metric entries with full second-order jets at a point, row-major `n x n`.
#[derive(Clone, Debug)]
pub struct MetricJets {
    pub n: usize,
    entries: Vec<Jet2>,
}

impl MetricJets {
    pub fn from_entries(n: usize, entries: Vec<Jet2>) -> Self {
        assert_eq!(entries.len(), n * n);
        MetricJets { n, entries }
    }

    pub fn entry(&self, i: usize, j: usize) -> &Jet2 {
        &self.entries[i * self.n + j]
    }

    /// `g_ij(x)` as a plain matrix.
    pub fn value(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j).value)
    }

    /// `d_k g_ij(x)`.
    pub fn d1(&self, k: usize, i: usize, j: usize) -> f64 {
        self.entry(i, j).gradient[k]
    }

    /// `d_k d_l g_ij(x)`.
    pub fn d2(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        self.entry(i, j).hessian[(k, l)]
    }

    /// Inverse metric, or a degenerate-metric error. The Cholesky attempt is
    /// the positive-definiteness check.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let g = self.value();
        let chol = g.clone().cholesky().ok_or(SmmsError::DegenerateMetric)?;
        Ok(chol.inverse())
    }
}

/// A smooth coordinate-chart metric `x -> g_ij(x)` with second-order jets.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> MetricJets;
}

/// A smooth scalar field with second-order jets; weights `f`, conformal
/// factors and test functions all use this.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Jet2;
}

/// Dimension parameter of a smooth metric measure space. `Infinite` selects
/// the Bakry-Emery (weighted-manifold) branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MParam {
    Finite(f64),
    Infinite,
}

impl MParam {
    pub fn validate(&self) -> Result<()> {
        if let MParam::Finite(m) = self {
            if *m == 0.0 || !m.is_finite() {
                return Err(SmmsError::InvalidParameter(
                    "SMMS parameter m must be finite nonzero or the infinity sentinel".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The 4-tuple (M, g, e^{-f} dVol, m) restricted to one chart.
#[derive(Clone)]
pub struct SmmsSpec {
    pub metric: Arc<dyn MetricField>,
    pub weight: Arc<dyn ScalarField>,
    pub m: MParam,
}

impl SmmsSpec {
    pub fn new(metric: Arc<dyn MetricField>, weight: Arc<dyn ScalarField>, m: MParam) -> Result<Self> {
        m.validate()?;
        if metric.dim() != weight.dim() {
            return Err(SmmsError::InvalidParameter(
                "metric and weight dimension mismatch".into(),
            ));
        }
        Ok(SmmsSpec { metric, weight, m })
    }
}

// ---------------------------------------------------------------------------
// Catalog metric fields
// ---------------------------------------------------------------------------

/// Flat metric `delta_ij`.
pub struct Euclidean {
    pub n: usize,
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, _x: &[f64]) -> MetricJets {
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(Jet2::constant(if i == j { 1.0 } else { 0.0 }, n));
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

/// Conformally flat metric `e^{2 phi} delta` from any scalar field `phi`.
pub struct ConformallyFlat {
    pub phi: Arc<dyn ScalarField>,
}

impl MetricField for ConformallyFlat {
    fn dim(&self) -> usize {
        self.phi.dim()
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.dim();
        let factor = self.phi.eval(x).scale(2.0).exp();
        let zero = Jet2::constant(0.0, n);
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j { factor.clone() } else { zero.clone() });
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

/// Spatial Schwarzschild slice in isotropic coordinates:
/// `g = u^{4/(n-2)} delta` with the harmonic profile `u = 1 + M/(2 rho^{n-2})`.
pub struct Schwarzschild {
    pub n: usize,
    pub mass: f64,
}

impl MetricField for Schwarzschild {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.n;
        let rho2 = radius_squared(x);
        let u = rho2
            .powf(-((n as f64) - 2.0) / 2.0)
            .scale(self.mass / 2.0)
            .add_scalar(1.0);
        let factor = u.powf(4.0 / (n as f64 - 2.0));
        let zero = Jet2::constant(0.0, n);
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j { factor.clone() } else { zero.clone() });
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

/// Round sphere of curvature one in the stereographic chart,
/// `g = 4 (1+|x|^2)^{-2} delta`.
pub struct StereographicSphere {
    pub n: usize,
}

impl MetricField for StereographicSphere {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.n;
        let factor = radius_squared(x).add_scalar(1.0).powf(-2.0).scale(4.0);
        let zero = Jet2::constant(0.0, n);
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(if i == j { factor.clone() } else { zero.clone() });
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

/// One trigonometric term `a cos(k . x + theta)`.
#[derive(Clone, Debug)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wave: Vec<f64>,
    pub phase: f64,
}

impl TrigTerm {
    pub fn eval(&self, x: &[f64]) -> Jet2 {
        let d = x.len();
        let mut arg = Jet2::constant(self.phase, d);
        for (i, k) in self.wave.iter().enumerate() {
            arg = arg.add(&Jet2::var(x[i], i, d).scale(*k));
        }
        arg.cos().scale(self.amplitude)
    }
}

/// Seeded trigonometric polynomial scalar field; smooth, closed form and
/// derivative-rich, used as the random test family.
pub struct TrigScalar {
    pub n: usize,
    pub terms: Vec<TrigTerm>,
}

impl TrigScalar {
    /// Integer wave vectors in `[-2, 2]^n`, total amplitude bounded by `amp`.
    pub fn seeded(n: usize, seed: u64, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_terms = 4;
        let terms = (0..n_terms)
            .map(|_| {
                let wave: Vec<f64> = (0..n).map(|_| rng.gen_range(-2..=2) as f64).collect();
                TrigTerm {
                    amplitude: rng.gen_range(-1.0..1.0) * amp / n_terms as f64,
                    wave,
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        TrigScalar { n, terms }
    }
}

impl ScalarField for TrigScalar {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> Jet2 {
        let mut acc = Jet2::constant(0.0, x.len());
        for t in &self.terms {
            acc = acc.add(&t.eval(x));
        }
        acc
    }
}

/// Seeded random perturbation of the flat metric,
/// `g = delta + sum_t S_t cos(k_t . x + theta_t)` with symmetric `S_t` and
/// total amplitude small enough to keep `g` positive definite.
pub struct TrigMetric {
    pub n: usize,
    terms: Vec<(DMatrix<f64>, TrigTerm)>,
}

impl TrigMetric {
    pub fn seeded(n: usize, seed: u64, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_terms = 3;
        let terms = (0..n_terms)
            .map(|_| {
                let mut s = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i..n {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        s[(i, j)] = v;
                        s[(j, i)] = v;
                    }
                }
                let scale = amp / (n_terms as f64 * s.amax().max(1e-12));
                let wave: Vec<f64> = (0..n).map(|_| rng.gen_range(-2..=2) as f64).collect();
                (
                    s * scale,
                    TrigTerm {
                        amplitude: 1.0,
                        wave,
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    },
                )
            })
            .collect();
        TrigMetric { n, terms }
    }
}

impl MetricField for TrigMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.n;
        let mut entries: Vec<Jet2> = (0..n * n)
            .map(|idx| Jet2::constant(if idx % n == idx / n { 1.0 } else { 0.0 }, n))
            .collect();
        for (s, term) in &self.terms {
            let osc = term.eval(x);
            for i in 0..n {
                for j in 0..n {
                    entries[i * n + j] = entries[i * n + j].add(&osc.scale(s[(i, j)]));
                }
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

// ---------------------------------------------------------------------------
// Catalog weight fields
// ---------------------------------------------------------------------------

pub struct ZeroWeight {
    pub n: usize,
}

impl ScalarField for ZeroWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> Jet2 {
        Jet2::constant(0.0, x.len())
    }
}

pub struct ConstWeight {
    pub n: usize,
    pub c: f64,
}

impl ScalarField for ConstWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> Jet2 {
        Jet2::constant(self.c, x.len())
    }
}

/// Radial power-decay weight `A (1 + rho^2)^{-tau/2}`.
pub struct PowerDecayWeight {
    pub n: usize,
    pub amplitude: f64,
    pub tau: f64,
}

impl ScalarField for PowerDecayWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> Jet2 {
        radius_squared(x)
            .add_scalar(1.0)
            .powf(-self.tau / 2.0)
            .scale(self.amplitude)
    }
}

/// `f = |x|^2 / 2`, used by closed-form regression tests.
pub struct HalfSquareWeight {
    pub n: usize,
}

impl ScalarField for HalfSquareWeight {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64]) -> Jet2 {
        radius_squared(x).scale(0.5)
    }
}
