//! Pointwise spin geometry in a chart: Cholesky orthonormal frames with
//! exact first and second derivatives, spin connection coefficients, plain
//! and weighted Dirac operators, Lichnerowicz-type residuals, O'Neill
//! tensors of warped products, and the warped-product / conformal Dirac
//! comparison residuals.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::clifford::{CMat, ProductSpinorSpace};
use crate::curvature::{curvature, CurvaturePack};
use crate::fields::{MetricField, MParam, ScalarField, SmmsSpec};
use crate::jet::Jet2;
use crate::{Result, SmmsError};

pub type CVec = DVector<Complex64>;

fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Orthonormal frame from the Cholesky factorization `g = L L^T`, carried
/// through the jet arithmetic so the frame comes with exact first and second
/// derivatives. Frame vector `a` has chart components `e[(i, a)]`, the
/// columns of `L^{-T}`.
pub struct ChartFrame {
    pub n: usize,
    /// `L^{-T}` entries as jets, row-major `i * n + a`.
    pub e: Vec<Jet2>,
    /// Cholesky factor `L` at the point.
    pub l: DMatrix<f64>,
    /// Connection coefficients `omega[a][(j, k)] = g(nabla_{e_a} e_j, e_k)`.
    pub omega: Vec<DMatrix<f64>>,
    pub pack: CurvaturePack,
}

fn cholesky_jets(jets: &crate::fields::MetricJets) -> Result<Vec<Jet2>> {
    let n = jets.n;
    let dim = jets.entry(0, 0).dim();
    let zero = Jet2::constant(0.0, dim);
    let mut l = vec![zero.clone(); n * n];
    for j in 0..n {
        let mut diag = jets.entry(j, j).clone();
        for k in 0..j {
            diag = diag.sub(&l[j * n + k].mul(&l[j * n + k]));
        }
        if diag.value <= 0.0 {
            return Err(SmmsError::DegenerateMetric);
        }
        l[j * n + j] = diag.sqrt();
        for i in j + 1..n {
            let mut s = jets.entry(i, j).clone();
            for k in 0..j {
                s = s.sub(&l[i * n + k].mul(&l[j * n + k]));
            }
            l[i * n + j] = s.div(&l[j * n + j]);
        }
    }
    // Forward substitution for L^{-1}, then transpose: e[(i, a)] = inv[(a, i)].
    let mut inv = vec![zero; n * n];
    for col in 0..n {
        for row in col..n {
            let mut s = if row == col {
                Jet2::constant(1.0, dim)
            } else {
                Jet2::constant(0.0, dim)
            };
            for k in col..row {
                s = s.sub(&l[row * n + k].mul(&inv[k * n + col]));
            }
            inv[row * n + col] = s.div(&l[row * n + row]);
        }
    }
    let mut e = Vec::with_capacity(n * n);
    for i in 0..n {
        for a in 0..n {
            e.push(inv[a * n + i].clone());
        }
    }
    Ok(e)
}

pub fn chart_frame(metric: &dyn MetricField, x: &[f64]) -> Result<ChartFrame> {
    let n = metric.dim();
    let jets = metric.eval(x);
    let pack = curvature(metric, x)?;
    let e = cholesky_jets(&jets)?;
    let mut l = DMatrix::zeros(n, n);
    let g = jets.value();
    // Recover L at the point from g = L L^T directly.
    let chol = g
        .clone()
        .cholesky()
        .ok_or(SmmsError::DegenerateMetric)?;
    l.copy_from(chol.l_dirty());
    for i in 0..n {
        for j in i + 1..n {
            l[(i, j)] = 0.0;
        }
    }
    // omega[a][(j,k)] = sum_i e^i_a sum_l (d_i e^l_j + Gamma^l_{ip} e^p_j) L_{lk},
    // using g_{lq} e^q_k = L_{lk}.
    let mut omega = Vec::with_capacity(n);
    for a in 0..n {
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    let eia = e[i * n + a].value;
                    for lq in 0..n {
                        let mut cov = e[lq * n + j].gradient[i];
                        for p in 0..n {
                            cov += pack.christoffel[lq][(i, p)] * e[p * n + j].value;
                        }
                        s += eia * cov * l[(lq, k)];
                    }
                }
                w[(j, k)] = s;
            }
        }
        // The frame is orthonormal, so the coefficients are skew; enforce it
        // against roundoff.
        let skew = (&w - w.transpose()) * 0.5;
        omega.push(skew);
    }
    Ok(ChartFrame {
        n,
        e,
        l,
        omega,
        pack,
    })
}

impl ChartFrame {
    /// Frame component matrix `E` with `e_a = sum_i E[(i, a)] d_i`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, a| self.e[i * self.n + a].value)
    }

    /// Frame components of the gradient of a scalar jet: `(e_a f)`.
    pub fn frame_gradient(&self, f: &Jet2) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |a, _| {
            (0..n).map(|i| self.e[i * n + a].value * f.gradient[i]).sum()
        })
    }
}

/// A spinor-valued chart field. The default Jacobian is a fourth-order
/// central difference, so any closure-backed field nests under further
/// differentiation.
pub trait SpinorField {
    fn dim_space(&self) -> usize;
    fn dim_spinor(&self) -> usize;
    fn eval(&self, x: &[f64]) -> CVec;
    fn jacobian(&self, x: &[f64]) -> Vec<CVec> {
        let h = 1e-4;
        let mut out = Vec::with_capacity(self.dim_space());
        for i in 0..self.dim_space() {
            let shift = |s: f64| {
                let mut y = x.to_vec();
                y[i] += s;
                self.eval(&y)
            };
            let d = (shift(-2.0 * h) - shift(2.0 * h)) * cr(1.0 / (12.0 * h))
                + (shift(h) - shift(-h)) * cr(8.0 / (12.0 * h));
            out.push(d);
        }
        out
    }
}

/// `psi(x) = e^{i k . x} psi0`, with an exact Jacobian.
pub struct PlaneWave {
    pub k: Vec<f64>,
    pub psi0: CVec,
}

impl SpinorField for PlaneWave {
    fn dim_space(&self) -> usize {
        self.k.len()
    }
    fn dim_spinor(&self) -> usize {
        self.psi0.len()
    }
    fn eval(&self, x: &[f64]) -> CVec {
        let phase: f64 = self.k.iter().zip(x).map(|(k, x)| k * x).sum();
        &self.psi0 * Complex64::new(0.0, phase).exp()
    }
    fn jacobian(&self, x: &[f64]) -> Vec<CVec> {
        let v = self.eval(x);
        self.k
            .iter()
            .map(|&ki| &v * Complex64::new(0.0, ki))
            .collect()
    }
}

/// Closure-backed field; derivatives fall back to finite differences.
pub struct ClosureField<F: Fn(&[f64]) -> CVec> {
    pub n: usize,
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> CVec> SpinorField for ClosureField<F> {
    fn dim_space(&self) -> usize {
        self.n
    }
    fn dim_spinor(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64]) -> CVec {
        (self.f)(x)
    }
}

/// `nabla_{e_a} psi = e_a^i d_i psi + (1/4) sum_{j,k} omega_{jk}(e_a)
/// gamma_j gamma_k psi`, for every frame direction `a`.
pub fn spin_covariant_derivative(
    frame: &ChartFrame,
    gens: &[CMat],
    field: &dyn SpinorField,
    x: &[f64],
) -> Result<Vec<CVec>> {
    let n = frame.n;
    if gens.len() != n {
        return Err(SmmsError::InvalidParameter(
            "need one generator per frame direction".into(),
        ));
    }
    let psi = field.eval(x);
    let jac = field.jacobian(x);
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut d = CVec::zeros(psi.len());
        for i in 0..n {
            d += &jac[i] * cr(frame.e[i * n + a].value);
        }
        for j in 0..n {
            for k in 0..n {
                let w = frame.omega[a][(j, k)];
                if w.abs() > 0.0 {
                    d += &gens[j] * (&gens[k] * &psi) * cr(0.25 * w);
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// `D psi = sum_a gamma_a nabla_{e_a} psi` at a point.
pub fn dirac_at_point(
    metric: &dyn MetricField,
    gens: &[CMat],
    field: &dyn SpinorField,
    x: &[f64],
) -> Result<CVec> {
    let frame = chart_frame(metric, x)?;
    let derivs = spin_covariant_derivative(&frame, gens, field, x)?;
    let mut out = CVec::zeros(field.dim_spinor());
    for (g, d) in gens.iter().zip(&derivs) {
        out += g * d;
    }
    Ok(out)
}

/// `D_f psi = D psi - (1/2) gamma(grad f) psi`.
pub fn weighted_dirac_at_point(
    metric: &dyn MetricField,
    weight: &dyn ScalarField,
    gens: &[CMat],
    field: &dyn SpinorField,
    x: &[f64],
) -> Result<CVec> {
    let frame = chart_frame(metric, x)?;
    let derivs = spin_covariant_derivative(&frame, gens, field, x)?;
    let mut out = CVec::zeros(field.dim_spinor());
    for (g, d) in gens.iter().zip(&derivs) {
        out += g * d;
    }
    let psi = field.eval(x);
    let fg = frame.frame_gradient(&weight.eval(x));
    for (g, &fa) in gens.iter().zip(fg.iter()) {
        out -= g * &psi * cr(0.5 * fa);
    }
    Ok(out)
}

/// The connection Laplacian `nabla^* nabla psi` at a point, with the second
/// derivative taken by differencing the (exact-frame) first covariant
/// derivative.
pub fn connection_laplacian(
    metric: &dyn MetricField,
    gens: &[CMat],
    field: &(dyn SpinorField + Sync),
    x: &[f64],
) -> Result<CVec> {
    let n = metric.dim();
    let d = field.dim_spinor();
    let frame = chart_frame(metric, x)?;
    let derivs_here = spin_covariant_derivative(&frame, gens, field, x)?;
    let mut out = CVec::zeros(d);
    for a in 0..n {
        let da = ClosureField {
            n,
            d,
            f: |y: &[f64]| {
                let fr = chart_frame(metric, y).unwrap();
                spin_covariant_derivative(&fr, gens, field, y).unwrap()[a].clone()
            },
        };
        let second = spin_covariant_derivative(&frame, gens, &da, x)?;
        out -= &second[a];
        // Correction: + nabla_{nabla_{e_a} e_a} psi.
        for k in 0..n {
            let w = frame.omega[a][(a, k)];
            if w.abs() > 0.0 {
                out += &derivs_here[k] * cr(w);
            }
        }
    }
    Ok(out)
}

/// `|D^2 psi - (nabla^* nabla psi + (1/4) R psi)|` at a point.
pub fn lichnerowicz_residual(
    metric: &dyn MetricField,
    gens: &[CMat],
    field: &(dyn SpinorField + Sync),
    x: &[f64],
) -> Result<f64> {
    let n = metric.dim();
    let d = field.dim_spinor();
    let dfield = ClosureField {
        n,
        d,
        f: |y: &[f64]| dirac_at_point(metric, gens, field, y).unwrap(),
    };
    let d2 = dirac_at_point(metric, gens, &dfield, x)?;
    let lap = connection_laplacian(metric, gens, field, x)?;
    let r = curvature(metric, x)?.scalar;
    let rhs = lap + field.eval(x) * cr(0.25 * r);
    Ok((d2 - rhs).norm())
}

/// `|D_f^2 psi - (nabla^* nabla psi + nabla_{grad f} psi + (1/4) R_f psi)|`.
pub fn weighted_lichnerowicz_residual(
    smms: &SmmsSpec,
    gens: &[CMat],
    field: &(dyn SpinorField + Sync),
    x: &[f64],
) -> Result<f64> {
    let metric = smms.metric.as_ref();
    let weight = smms.weight.as_ref();
    let n = metric.dim();
    let d = field.dim_spinor();
    let dfield = ClosureField {
        n,
        d,
        f: |y: &[f64]| weighted_dirac_at_point(metric, weight, gens, field, y).unwrap(),
    };
    let d2 = weighted_dirac_at_point(metric, weight, gens, &dfield, x)?;
    let frame = chart_frame(metric, x)?;
    let derivs = spin_covariant_derivative(&frame, gens, field, x)?;
    let lap = connection_laplacian(metric, gens, field, x)?;
    let wc = crate::curvature::weighted_curvatures(smms, x)?;
    let fg = frame.frame_gradient(&weight.eval(x));
    let mut rhs = lap + field.eval(x) * cr(0.25 * wc.r_f);
    for (da, &fa) in derivs.iter().zip(fg.iter()) {
        rhs += da * cr(fa);
    }
    Ok((d2 - rhs).norm())
}

/// O'Neill tensors of a Riemannian submersion in the coordinate-aligned
/// frame: `t[i][j]` is the horizontal frame vector `T(zeta_i, zeta_j)` and
/// `a[b][c]` the vertical frame vector `A(e_b, e_c)`.
pub struct ONeillTensors {
    pub t: Vec<Vec<DVector<f64>>>,
    pub a: Vec<Vec<DVector<f64>>>,
}

pub fn oneill_tensors(total: &dyn MetricField, n: usize, z: &[f64]) -> Result<ONeillTensors> {
    let d = total.dim();
    let m = d - n;
    let frame = chart_frame(total, z)?;
    let t = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| DVector::from_fn(n, |a, _| frame.omega[n + i][(n + j, a)]))
                .collect()
        })
        .collect();
    let a = (0..n)
        .map(|b| {
            (0..n)
                .map(|c| DVector::from_fn(m, |i, _| frame.omega[b][(c, n + i)]))
                .collect()
        })
        .collect();
    Ok(ONeillTensors { t, a })
}

/// Pointwise residuals of the warped-product Dirac comparison: with the
/// fiber-constant spinor `Psi`, the horizontal covariant derivatives reduce
/// to the base ones, the vertical ones to the algebraic `-(1/2m) gamma(grad
/// f) Gamma_{n+i} Psi` term, and the total Dirac to the weighted base Dirac.
pub struct WarpedDiracResidual {
    pub r_conn_h: f64,
    pub r_conn_v: f64,
    pub r_dirac: f64,
}

pub struct FiberConstant<'a> {
    base: &'a dyn SpinorField,
    total_dim: usize,
}

/// Extends a base spinor field to the total space of a warped product by
/// ignoring the fiber coordinates.
pub fn fiber_constant<'a>(base: &'a dyn SpinorField, total_dim: usize) -> FiberConstant<'a> {
    FiberConstant { base, total_dim }
}

impl SpinorField for FiberConstant<'_> {
    fn dim_space(&self) -> usize {
        self.total_dim
    }
    fn dim_spinor(&self) -> usize {
        self.base.dim_spinor()
    }
    fn eval(&self, z: &[f64]) -> CVec {
        self.base.eval(&z[..self.base.dim_space()])
    }
    fn jacobian(&self, z: &[f64]) -> Vec<CVec> {
        let n = self.base.dim_space();
        let mut jac = self.base.jacobian(&z[..n]);
        jac.resize(self.total_dim, CVec::zeros(self.dim_spinor()));
        jac
    }
}

pub fn warped_dirac_residual(
    smms: &SmmsSpec,
    space: &ProductSpinorSpace,
    base_field: &dyn SpinorField,
    x: &[f64],
    y: &[f64],
) -> Result<WarpedDiracResidual> {
    let n = smms.metric.dim();
    let m = match smms.m {
        MParam::Finite(v) if v > 0.0 && v.fract() == 0.0 => v as usize,
        _ => {
            return Err(SmmsError::InvalidParameter(
                "warped comparison needs finite m in N".into(),
            ))
        }
    };
    if space.n != n || space.m != m || base_field.dim_spinor() != space.dim() {
        return Err(SmmsError::InvalidParameter(
            "spinor space does not match the SMMS".into(),
        ));
    }
    let total = crate::curvature::WarpedProductMetric::new(
        smms.clone(),
        std::sync::Arc::new(crate::fields::Euclidean { n: m }),
    )?;
    let mut z = x.to_vec();
    z.extend_from_slice(y);
    let total_field = FiberConstant {
        base: base_field,
        total_dim: n + m,
    };
    let total_frame = chart_frame(&total, &z)?;
    let total_derivs =
        spin_covariant_derivative(&total_frame, &space.generators, &total_field, &z)?;

    let base_frame = chart_frame(smms.metric.as_ref(), x)?;
    let base_gens = &space.generators[..n];
    let base_derivs = spin_covariant_derivative(&base_frame, base_gens, base_field, x)?;

    let mut r_conn_h: f64 = 0.0;
    for a in 0..n {
        r_conn_h = r_conn_h.max((&total_derivs[a] - &base_derivs[a]).norm());
    }
    let psi = base_field.eval(x);
    let fg = base_frame.frame_gradient(&smms.weight.eval(x));
    let mut gamma_grad = CMat::zeros(space.dim(), space.dim());
    for (g, &fa) in base_gens.iter().zip(fg.iter()) {
        gamma_grad += g * cr(fa);
    }
    let mut r_conn_v: f64 = 0.0;
    for i in 0..m {
        let predicted =
            &gamma_grad * (&space.generators[n + i] * &psi) * cr(-0.5 / m as f64);
        r_conn_v = r_conn_v.max((&total_derivs[n + i] - predicted).norm());
    }
    let mut total_dirac = CVec::zeros(space.dim());
    for (g, dv) in space.generators.iter().zip(&total_derivs) {
        total_dirac += g * dv;
    }
    let weighted = weighted_dirac_at_point(
        smms.metric.as_ref(),
        smms.weight.as_ref(),
        base_gens,
        base_field,
        x,
    )?;
    Ok(WarpedDiracResidual {
        r_conn_h,
        r_conn_v,
        r_dirac: (total_dirac - weighted).norm(),
    })
}

/// `|D_f psi - e^{-f/(n-1)} Dtilde psi|` in the Cholesky trivialization,
/// where `Dtilde` is the Dirac operator of `e^{-2f/(n-1)} g`. The bundle
/// identification is the identity on components because rescaling the
/// metric rescales the Cholesky frame.
pub fn conformal_conjugation_residual(
    metric: &std::sync::Arc<dyn MetricField>,
    weight: &std::sync::Arc<dyn ScalarField>,
    gens: &[CMat],
    field: &dyn SpinorField,
    x: &[f64],
) -> Result<f64> {
    let n = metric.dim();
    let df = weighted_dirac_at_point(metric.as_ref(), weight.as_ref(), gens, field, x)?;
    let conf = crate::curvature::ConformalMetric::new(metric.clone(), weight.clone())?;
    let dtilde = dirac_at_point(&conf, gens, field, x)?;
    let scale = (-weight.eval(x).value / (n as f64 - 1.0)).exp();
    Ok((df - dtilde * cr(scale)).norm())
}
