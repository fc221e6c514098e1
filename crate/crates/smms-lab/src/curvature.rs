//! Levi-Civita curvature of chart metrics from jets, the weighted and
//! m-Bakry-Emery curvatures, the conformal and warped-product metric
//! constructors, and asymptotic decay-rate diagnostics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::fields::{MetricField, MetricJets, MParam, ScalarField, SmmsSpec};
use crate::jet::Jet2;
use crate::mass::unit_sphere;
use crate::{Result, SmmsError};

/// Christoffel symbols (upper index first), Ricci tensor and scalar
/// curvature at a point.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub n: usize,
    /// `christoffel[k][i][j] = Gamma^k_ij`.
    pub christoffel: Vec<DMatrix<f64>>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

/// Levi-Civita curvature of `metric` at `x`.
pub fn curvature(metric: &dyn MetricField, x: &[f64]) -> Result<CurvaturePack> {
    curvature_of_jets(&metric.eval(x))
}

/// Same, starting from already-evaluated metric jets.
pub fn curvature_of_jets(jets: &MetricJets) -> Result<CurvaturePack> {
    let n = jets.n;
    let ginv = jets.inverse()?;

    // Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij)
    let mut gamma = vec![DMatrix::zeros(n, n); n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(k, l)] * (jets.d1(i, l, j) + jets.d1(j, l, i) - jets.d1(l, i, j));
                }
                gamma[k][(i, j)] = 0.5 * s;
            }
        }
    }

    // d_c g^{kl} = -g^{ka} (d_c g_ab) g^{bl}
    let mut dginv = vec![DMatrix::zeros(n, n); n];
    for c in 0..n {
        let dg = DMatrix::from_fn(n, n, |a, b| jets.d1(c, a, b));
        dginv[c] = -(&ginv * dg * &ginv);
    }

    // d_c Gamma^k_ij
    let mut dgamma = vec![vec![DMatrix::zeros(n, n); n]; n];
    for c in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += dginv[c][(k, l)]
                            * (jets.d1(i, l, j) + jets.d1(j, l, i) - jets.d1(l, i, j));
                        s += ginv[(k, l)]
                            * (jets.d2(c, i, l, j) + jets.d2(c, j, l, i) - jets.d2(c, l, i, j));
                    }
                    dgamma[c][k][(i, j)] = 0.5 * s;
                }
            }
        }
    }

    // Ric_jk = d_i Gamma^i_jk - d_j Gamma^i_ik + Gamma^i_ia Gamma^a_jk
    //          - Gamma^i_ja Gamma^a_ik
    let mut ricci = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += dgamma[i][i][(j, k)] - dgamma[j][i][(i, k)];
                for a in 0..n {
                    s += gamma[i][(i, a)] * gamma[a][(j, k)] - gamma[i][(j, a)] * gamma[a][(i, k)];
                }
            }
            ricci[(j, k)] = s;
        }
    }
    // Symmetrize away rounding noise.
    ricci = (&ricci + ricci.transpose()) * 0.5;

    let mut scalar = 0.0;
    for j in 0..n {
        for k in 0..n {
            scalar += ginv[(j, k)] * ricci[(j, k)];
        }
    }

    Ok(CurvaturePack {
        n,
        christoffel: gamma,
        ricci,
        scalar,
    })
}

/// Weighted first-order data of `f` at a point: gradient (index raised by
/// `g`), covariant Hessian, metric Laplacian and `|grad f|^2_g`.
#[derive(Clone, Debug)]
pub struct WeightJets {
    pub df: DVector<f64>,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub laplacian: f64,
    pub grad_norm2: f64,
}

pub fn weight_jets(f: &Jet2, pack: &CurvaturePack, ginv: &DMatrix<f64>) -> WeightJets {
    let n = pack.n;
    let df = f.gradient.clone();
    let grad = ginv * &df;
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = f.hessian[(i, j)];
            for k in 0..n {
                s -= pack.christoffel[k][(i, j)] * df[k];
            }
            hess[(i, j)] = s;
        }
    }
    let mut laplacian = 0.0;
    let mut grad_norm2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            laplacian += ginv[(i, j)] * hess[(i, j)];
            grad_norm2 += ginv[(i, j)] * df[i] * df[j];
        }
    }
    WeightJets {
        df,
        grad,
        hess,
        laplacian,
        grad_norm2,
    }
}

/// Weighted and m-Bakry-Emery curvatures at a point.
#[derive(Clone, Debug)]
pub struct WeightedCurvatures {
    pub plain: CurvaturePack,
    pub weight: WeightJets,
    pub r_f: f64,
    pub r_m_f: f64,
    pub ric_f: DMatrix<f64>,
    pub ric_m_f: DMatrix<f64>,
}

/// `R_f = R + 2 Lap f - |grad f|^2`, `R^m_f = R + 2 Lap f - (m+1)/m |grad f|^2`,
/// `Ric_f = Ric + Hess f`, `Ric^m_f = Ric + Hess f - (1/m) df (x) df`.
/// The Laplacian sign convention is `Lap = tr Hess` (so `Lap = sum d^2` on
/// flat space).
pub fn weighted_curvatures(smms: &SmmsSpec, x: &[f64]) -> Result<WeightedCurvatures> {
    smms.m.validate()?;
    let jets = smms.metric.eval(x);
    let ginv = jets.inverse()?;
    let plain = curvature_of_jets(&jets)?;
    let f = smms.weight.eval(x);
    let weight = weight_jets(&f, &plain, &ginv);

    let r_f = plain.scalar + 2.0 * weight.laplacian - weight.grad_norm2;
    let ric_f = &plain.ricci + &weight.hess;
    let (r_m_f, ric_m_f) = match smms.m {
        MParam::Infinite => (r_f, ric_f.clone()),
        MParam::Finite(m) => {
            let r = plain.scalar + 2.0 * weight.laplacian - (m + 1.0) / m * weight.grad_norm2;
            let dfdf = &weight.df * weight.df.transpose();
            (r, &ric_f - dfdf / m)
        }
    };

    Ok(WeightedCurvatures {
        plain,
        weight,
        r_f,
        r_m_f,
        ric_f,
        ric_m_f,
    })
}

/// The conformal metric `e^{-2f/(n-1)} g`, with jets propagated through the
/// exponential.
pub struct ConformalMetric {
    pub base: Arc<dyn MetricField>,
    pub weight: Arc<dyn ScalarField>,
}

impl ConformalMetric {
    pub fn new(base: Arc<dyn MetricField>, weight: Arc<dyn ScalarField>) -> Result<Self> {
        if base.dim() < 2 {
            return Err(SmmsError::InvalidParameter(
                "conformal construction requires n >= 2".into(),
            ));
        }
        if base.dim() != weight.dim() {
            return Err(SmmsError::InvalidParameter("dimension mismatch".into()));
        }
        Ok(ConformalMetric { base, weight })
    }
}

impl MetricField for ConformalMetric {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.dim();
        let jets = self.base.eval(x);
        let factor = self
            .weight
            .eval(x)
            .scale(-2.0 / (n as f64 - 1.0))
            .exp();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(factor.mul(jets.entry(i, j)));
            }
        }
        MetricJets::from_entries(n, entries)
    }
}

/// Warped product metric `g (+) e^{-2f/m} h` on the `(n+m)`-dimensional
/// product chart; `f` depends on the base coordinates only.
pub struct WarpedProductMetric {
    pub base: Arc<dyn MetricField>,
    pub weight: Arc<dyn ScalarField>,
    pub fiber: Arc<dyn MetricField>,
    pub m: usize,
}

impl WarpedProductMetric {
    pub fn new(base: SmmsSpec, fiber: Arc<dyn MetricField>) -> Result<Self> {
        let m = match base.m {
            MParam::Finite(m) if m > 0.0 && m.fract() == 0.0 => m as usize,
            _ => {
                return Err(SmmsError::InvalidParameter(
                    "warped product requires finite m in N".into(),
                ))
            }
        };
        if fiber.dim() != m {
            return Err(SmmsError::InvalidParameter(
                "fiber dimension must equal the SMMS parameter m".into(),
            ));
        }
        Ok(WarpedProductMetric {
            base: base.metric,
            weight: base.weight,
            fiber,
            m,
        })
    }
}

impl MetricField for WarpedProductMetric {
    fn dim(&self) -> usize {
        self.base.dim() + self.m
    }
    fn eval(&self, x: &[f64]) -> MetricJets {
        let n = self.base.dim();
        let m = self.m;
        let d = n + m;
        assert_eq!(x.len(), d);
        let base_jets = self.base.eval(&x[..n]);
        let fiber_jets = self.fiber.eval(&x[n..]);
        let warp = self
            .weight
            .eval(&x[..n])
            .scale(-2.0 / m as f64)
            .exp()
            .embed(0, d);
        let zero = Jet2::constant(0.0, d);
        let mut entries = vec![zero; d * d];
        for i in 0..n {
            for j in 0..n {
                entries[i * d + j] = base_jets.entry(i, j).embed(0, d);
            }
        }
        for a in 0..m {
            for b in 0..m {
                entries[(n + a) * d + (n + b)] = warp.mul(&fiber_jets.entry(a, b).embed(n, d));
            }
        }
        MetricJets::from_entries(d, entries)
    }
}

/// Estimated asymptotic decay orders of `sup |g - delta|` and `sup |f|`
/// over coordinate spheres. `None` means no decaying part was detected.
#[derive(Clone, Debug)]
pub struct DecayDiagnostics {
    pub tau_g: Option<f64>,
    pub tau_f: Option<f64>,
}

/// Log-log least-squares slope of sphere suprema over the given radii.
pub fn decay_diagnostics(
    metric: &dyn MetricField,
    weight: &dyn ScalarField,
    radii: &[f64],
) -> Result<DecayDiagnostics> {
    if radii.len() < 3 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SmmsError::InvalidParameter(
            "need at least 3 strictly increasing radii".into(),
        ));
    }
    let n = metric.dim();
    let sphere = unit_sphere(n, 8)?;
    let mut sup_g = Vec::new();
    let mut sup_f = Vec::new();
    for &r in radii {
        let mut mg = 0.0f64;
        let mut mf = 0.0f64;
        for (node, _) in &sphere {
            let x: Vec<f64> = node.iter().map(|c| c * r).collect();
            let jets = metric.eval(&x);
            for i in 0..n {
                for j in 0..n {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    mg = mg.max((jets.entry(i, j).value - delta).abs());
                }
            }
            mf = mf.max(weight.eval(&x).value.abs());
        }
        sup_g.push(mg);
        sup_f.push(mf);
    }
    Ok(DecayDiagnostics {
        tau_g: fit_decay(radii, &sup_g),
        tau_f: fit_decay(radii, &sup_f),
    })
}

fn fit_decay(radii: &[f64], sup: &[f64]) -> Option<f64> {
    if sup.iter().any(|&s| s < 1e-14) {
        return None;
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = sup.iter().map(|s| s.ln()).collect();
    let k = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    Some(-slope)
}
