//! Quadrature of the ADM, weighted and SMMS mass integrals over coordinate
//! spheres, with Richardson-style radius extrapolation. The normalization
//! follows the flux integral literally, with no 1/(16 pi) factor.

use std::f64::consts::PI;

use crate::curvature::weighted_curvatures;
use crate::fields::{MetricField, MParam, ScalarField, SmmsSpec};
use crate::{Result, SmmsError};

/// Gauss-Legendre nodes and weights on [-1, 1] via Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Initial guess (Chebyshev-like).
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kp = k as f64;
        let p2 = ((2.0 * kp - 1.0) * x * p1 - (kp - 1.0) * p0) / kp;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Surface area of the unit sphere `S^{n-1}` in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    // 2 pi^{n/2} / Gamma(n/2), for the small n used here.
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        6 => PI * PI * PI,
        _ => {
            // Gamma recursion from the n-2 case.
            sphere_area(n - 2) * 2.0 * PI / (n as f64 - 2.0)
        }
    }
}

/// Quadrature nodes and weights on the unit sphere `S^{n-1}` in `R^n`:
/// product Gauss-Legendre in the polar angles (recursively) and a periodic
/// trapezoid rule in the azimuth. `order` controls nodes per angle.
pub fn unit_sphere(n: usize, order: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    if n < 2 {
        return Err(SmmsError::InvalidParameter(
            "sphere quadrature needs ambient dimension >= 2".into(),
        ));
    }
    if n == 2 {
        let count = 4 * order;
        let w = 2.0 * PI / count as f64;
        return Ok((0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                (vec![t.cos(), t.sin()], w)
            })
            .collect());
    }
    // x = (cos th, sin th * y) with y on S^{n-2} and th in (0, pi);
    // dA = sin^{n-2} th dth dA_{n-2}. Gauss-Legendre in th converges
    // spectrally since the integrand is analytic and periodic-smooth.
    let sub = unit_sphere(n - 1, order)?;
    let (ts, tw) = gauss_legendre(2 * order);
    let mut out = Vec::with_capacity(ts.len() * sub.len());
    for (u, wu) in ts.iter().zip(&tw) {
        let th = (u + 1.0) * PI / 2.0;
        let (s, t) = th.sin_cos();
        let jac = (PI / 2.0) * s.powi(n as i32 - 2);
        for (y, wy) in &sub {
            let mut x = Vec::with_capacity(n);
            x.push(t);
            x.extend(y.iter().map(|c| c * s));
            out.push((x, wu * jac * wy));
        }
    }
    Ok(out)
}

/// Radii (geometric progression) and angular resolution for the mass
/// quadrature.
#[derive(Clone, Debug)]
pub struct RadiusSchedule {
    pub radii: Vec<f64>,
    pub order: usize,
}

impl RadiusSchedule {
    pub fn geometric(r0: f64, ratio: f64, count: usize, order: usize) -> Result<Self> {
        if count < 3 || ratio <= 1.0 || r0 <= 0.0 {
            return Err(SmmsError::InvalidParameter(
                "schedule needs >= 3 radii in increasing geometric progression".into(),
            ));
        }
        Ok(RadiusSchedule {
            radii: (0..count).map(|k| r0 * ratio.powi(k as i32)).collect(),
            order,
        })
    }
}

/// Per-radius flux integrals with extrapolated limit.
#[derive(Clone, Debug)]
pub struct MassEstimate {
    pub per_radius: Vec<(f64, f64)>,
    pub limit: f64,
    pub error_estimate: f64,
}

/// Fit `c0 + c1 r^{-p}` with `p` estimated from successive differences,
/// Richardson style. Falls back to the largest-radius value with the spread
/// as the error when no consistent fit exists.
fn extrapolate(per_radius: &[(f64, f64)]) -> (f64, f64) {
    let v: Vec<f64> = per_radius.iter().map(|p| p.1).collect();
    let r: Vec<f64> = per_radius.iter().map(|p| p.0).collect();
    let k = v.len();
    let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - v.iter().cloned().fold(f64::INFINITY, f64::min);
    let last = v[k - 1];
    // Nearly constant sequence: converged already.
    let scale = v.iter().map(|x| x.abs()).fold(1e-12, f64::max);
    if spread <= 1e-9 * scale {
        return (last, spread.max(1e-14 * scale));
    }
    let mut extrapolants = Vec::new();
    for i in 1..k - 1 {
        let d0 = v[i] - v[i - 1];
        let d1 = v[i + 1] - v[i];
        let s = r[i + 1] / r[i];
        if d0 * d1 <= 0.0 || d1.abs() >= d0.abs() {
            continue; // not a monotone geometric tail
        }
        let p = (d0 / d1).abs().ln() / (r[i] / r[i - 1]).ln();
        let q = s.powf(-p);
        extrapolants.push(v[i + 1] + d1 * q / (1.0 - q));
    }
    match extrapolants.last() {
        None => (last, spread),
        Some(&limit) => {
            let fit_spread = extrapolants
                .iter()
                .map(|e| (e - limit).abs())
                .fold(0.0, f64::max);
            let err = fit_spread.max((limit - last).abs() * 0.05).max(1e-12 * scale);
            (limit, err)
        }
    }
}

/// ADM flux integrand summed over a sphere of radius `rho`:
/// `int_{S_rho} sum_{i,j} (d_i g_ij - d_j g_ii) n_j dA`.
fn adm_integral(metric: &dyn MetricField, rho: f64, sphere: &[(Vec<f64>, f64)]) -> f64 {
    let n = metric.dim();
    let mut total = 0.0;
    for (node, w) in sphere {
        let x: Vec<f64> = node.iter().map(|c| c * rho).collect();
        let jets = metric.eval(&x);
        let mut flux = 0.0;
        for j in 0..n {
            let mut term = 0.0;
            for i in 0..n {
                term += jets.d1(i, i, j) - jets.d1(j, i, i);
            }
            flux += term * node[j];
        }
        total += flux * w;
    }
    total * rho.powi(n as i32 - 1)
}

pub fn adm_mass(metric: &dyn MetricField, schedule: &RadiusSchedule) -> Result<MassEstimate> {
    if metric.dim() < 3 {
        return Err(SmmsError::InvalidParameter("ADM mass needs n >= 3".into()));
    }
    let sphere = unit_sphere(metric.dim(), schedule.order)?;
    let per_radius: Vec<(f64, f64)> = schedule
        .radii
        .iter()
        .map(|&r| (r, adm_integral(metric, r, &sphere)))
        .collect();
    let (limit, error_estimate) = extrapolate(&per_radius);
    Ok(MassEstimate {
        per_radius,
        limit,
        error_estimate,
    })
}

/// Weighted correction flux `2 int_{S_rho} <grad f, n> e^{-f} dA` with the
/// Euclidean normal and area element; the gradient index is raised with `g`.
fn weight_flux(
    metric: &dyn MetricField,
    weight: &dyn ScalarField,
    rho: f64,
    sphere: &[(Vec<f64>, f64)],
) -> Result<f64> {
    let n = metric.dim();
    let mut total = 0.0;
    for (node, w) in sphere {
        let x: Vec<f64> = node.iter().map(|c| c * rho).collect();
        let ginv = metric.eval(&x).inverse()?;
        let f = weight.eval(&x);
        let mut flux = 0.0;
        for j in 0..n {
            for k in 0..n {
                flux += ginv[(j, k)] * f.gradient[k] * node[j];
            }
        }
        total += flux * (-f.value).exp() * w;
    }
    Ok(2.0 * total * rho.powi(n as i32 - 1))
}

pub fn weighted_mass(
    metric: &dyn MetricField,
    weight: &dyn ScalarField,
    schedule: &RadiusSchedule,
) -> Result<MassEstimate> {
    let adm = adm_mass(metric, schedule)?;
    let sphere = unit_sphere(metric.dim(), schedule.order)?;
    let mut per_radius = Vec::with_capacity(schedule.radii.len());
    for (&r, &(_, admr)) in schedule.radii.iter().zip(&adm.per_radius) {
        per_radius.push((r, admr + weight_flux(metric, weight, r, &sphere)?));
    }
    let (limit, error_estimate) = extrapolate(&per_radius);
    Ok(MassEstimate {
        per_radius,
        limit,
        error_estimate,
    })
}

/// Unit-volume flat torus fiber for the SMMS mass.
#[derive(Clone, Debug)]
pub struct FlatTorusFiber {
    pub dim: usize,
    pub periods: Vec<f64>,
}

impl FlatTorusFiber {
    pub fn unit(dim: usize) -> Self {
        FlatTorusFiber {
            dim,
            periods: vec![1.0; dim],
        }
    }
    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }
}

/// SMMS mass: the warped flux integral over `S_rho x F` with the exact fiber
/// integral (the integrand is constant in the fiber coordinates of a flat
/// torus). Requires a unit-volume fiber.
pub fn smms_mass(
    smms: &SmmsSpec,
    fiber: &FlatTorusFiber,
    schedule: &RadiusSchedule,
) -> Result<MassEstimate> {
    let m = match smms.m {
        MParam::Finite(m) if m > 0.0 && m.fract() == 0.0 => m,
        _ => {
            return Err(SmmsError::InvalidParameter(
                "SMMS mass requires m in N".into(),
            ))
        }
    };
    if fiber.dim != m as usize {
        return Err(SmmsError::InvalidParameter(
            "fiber dimension must equal m".into(),
        ));
    }
    if (fiber.volume() - 1.0).abs() > 1e-12 {
        return Err(SmmsError::InvalidParameter(
            "SMMS mass fiber must have unit volume".into(),
        ));
    }
    let metric = smms.metric.as_ref();
    let weight = smms.weight.as_ref();
    let n = metric.dim();
    let sphere = unit_sphere(n, schedule.order)?;
    let mut per_radius = Vec::with_capacity(schedule.radii.len());
    for &rho in &schedule.radii {
        // Fiber block of gbar is e^{-2f/m} I_m, so
        // d_j gbar_aa = d_j g_ii - 2 e^{-2f/m} d_j f over the combined frame.
        let mut total = adm_integral(metric, rho, &sphere);
        let mut corr = 0.0;
        for (node, w) in &sphere {
            let x: Vec<f64> = node.iter().map(|c| c * rho).collect();
            let f = weight.eval(&x);
            let warp = (-2.0 * f.value / m).exp();
            let mut flux = 0.0;
            for j in 0..n {
                flux += f.gradient[j] * node[j];
            }
            corr += 2.0 * warp * flux * w;
        }
        total += corr * rho.powi(n as i32 - 1);
        per_radius.push((rho, total));
    }
    let (limit, error_estimate) = extrapolate(&per_radius);
    Ok(MassEstimate {
        per_radius,
        limit,
        error_estimate,
    })
}

/// One row of the observational positivity experiment.
#[derive(Clone, Debug)]
pub struct PositivityRow {
    pub label: String,
    pub min_r_f: f64,
    pub min_r_f_hijazi: f64,
    pub min_r_m_f: f64,
    pub mass: f64,
    pub error: f64,
    pub flagged: bool,
}

/// Sample the weighted curvatures of each family member on the scheduled
/// spheres plus interior points and compare the mass sign against the
/// positivity statements. Report-only.
pub fn positivity_experiment(
    family: &[(String, SmmsSpec)],
    schedule: &RadiusSchedule,
) -> Result<Vec<PositivityRow>> {
    let mut rows = Vec::new();
    for (label, smms) in family {
        let n = smms.metric.dim();
        let sphere = unit_sphere(n, schedule.order.min(4))?;
        let mut min_r_f = f64::INFINITY;
        let mut min_hijazi = f64::INFINITY;
        let mut min_r_m_f = f64::INFINITY;
        let mut sample = |x: &[f64]| -> Result<()> {
            let wc = weighted_curvatures(smms, x)?;
            min_r_f = min_r_f.min(wc.r_f);
            min_hijazi = min_hijazi.min(wc.r_f + wc.weight.grad_norm2 / (n as f64 - 1.0));
            min_r_m_f = min_r_m_f.min(wc.r_m_f);
            Ok(())
        };
        for &rho in &schedule.radii {
            for (node, _) in &sphere {
                let x: Vec<f64> = node.iter().map(|c| c * rho).collect();
                sample(&x)?;
            }
        }
        // Interior samples along rays toward the smallest radius.
        for (node, _) in sphere.iter().step_by(3) {
            for t in [0.25, 0.5, 0.75] {
                let x: Vec<f64> = node.iter().map(|c| c * schedule.radii[0] * t).collect();
                sample(&x)?;
            }
        }
        let mass = weighted_mass(smms.metric.as_ref(), smms.weight.as_ref(), schedule)?;
        // Positivity hypotheses hold (sampled) but the mass is negative beyond
        // the error bar: flag.
        let hypothesis = min_hijazi >= -1e-9;
        let flagged = hypothesis && mass.limit < -mass.error_estimate;
        rows.push(PositivityRow {
            label: label.clone(),
            min_r_f,
            min_r_f_hijazi: min_hijazi,
            min_r_m_f,
            mass: mass.limit,
            error: mass.error_estimate,
            flagged,
        });
    }
    Ok(rows)
}
