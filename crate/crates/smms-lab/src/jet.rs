//! Forward-mode second-order jets: value, gradient and Hessian of a scalar
//! quantity with respect to the chart coordinates. All metric and weight
//! fields are evaluated entrywise through this type, so every first and
//! second coordinate derivative appearing in a curvature formula is exact
//! up to rounding.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and (symmetric) Hessian with respect to `d` chart
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Jet2 {
            value,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    /// The coordinate function `x_i` seeded for differentiation.
    pub fn var(value: f64, i: usize, dim: usize) -> Self {
        let mut gradient = DVector::zeros(dim);
        gradient[i] = 1.0;
        Jet2 {
            value,
            gradient,
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// Seed all coordinates of a point at once.
    pub fn vars(x: &[f64]) -> Vec<Jet2> {
        (0..x.len()).map(|i| Jet2::var(x[i], i, x.len())).collect()
    }

    /// Re-embed a jet in `d1` variables into `d` variables, its variables
    /// occupying the block starting at `offset`. Used to assemble product
    /// charts.
    pub fn embed(&self, offset: usize, dim: usize) -> Jet2 {
        let d1 = self.dim();
        assert!(offset + d1 <= dim);
        let mut gradient = DVector::zeros(dim);
        let mut hessian = DMatrix::zeros(dim, dim);
        for a in 0..d1 {
            gradient[offset + a] = self.gradient[a];
            for b in 0..d1 {
                hessian[(offset + a, offset + b)] = self.hessian[(a, b)];
            }
        }
        Jet2 {
            value: self.value,
            gradient,
            hessian,
        }
    }

    /// Chain rule through a scalar function with derivatives `h1`, `h2` at
    /// `self.value`.
    pub fn chain(&self, h: f64, h1: f64, h2: f64) -> Jet2 {
        let outer = &self.gradient * self.gradient.transpose();
        Jet2 {
            value: h,
            gradient: h1 * &self.gradient,
            hessian: h1 * &self.hessian + h2 * outer,
        }
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Jet2 {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sin(&self) -> Jet2 {
        self.chain(self.value.sin(), self.value.cos(), -self.value.sin())
    }

    pub fn cos(&self) -> Jet2 {
        self.chain(self.value.cos(), -self.value.sin(), -self.value.cos())
    }

    pub fn sqrt(&self) -> Jet2 {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    pub fn powf(&self, p: f64) -> Jet2 {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn recip(&self) -> Jet2 {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            value: c * self.value,
            gradient: c * &self.gradient,
            hessian: c * &self.hessian,
        }
    }

    pub fn add(&self, other: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + other.value,
            gradient: &self.gradient + &other.gradient,
            hessian: &self.hessian + &other.hessian,
        }
    }

    pub fn sub(&self, other: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - other.value,
            gradient: &self.gradient - &other.gradient,
            hessian: &self.hessian - &other.hessian,
        }
    }

    pub fn mul(&self, other: &Jet2) -> Jet2 {
        let cross = &self.gradient * other.gradient.transpose();
        Jet2 {
            value: self.value * other.value,
            gradient: other.value * &self.gradient + self.value * &other.gradient,
            hessian: other.value * &self.hessian
                + self.value * &other.hessian
                + &cross
                + cross.transpose(),
        }
    }

    pub fn div(&self, other: &Jet2) -> Jet2 {
        self.mul(&other.recip())
    }

    pub fn neg(&self) -> Jet2 {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Jet2 {
        let mut out = self.clone();
        out.value += c;
        out
    }

    /// Largest relative asymmetry of the Hessian.
    pub fn hessian_asymmetry(&self) -> f64 {
        let scale = 1.0 + self.hessian.amax();
        let mut worst = 0.0f64;
        for a in 0..self.dim() {
            for b in (a + 1)..self.dim() {
                worst = worst.max((self.hessian[(a, b)] - self.hessian[(b, a)]).abs() / scale);
            }
        }
        worst
    }
}

/// Sum of squared coordinates as a jet, `|x|^2`.
pub fn radius_squared(x: &[f64]) -> Jet2 {
    let vars = Jet2::vars(x);
    let mut acc = Jet2::constant(0.0, x.len());
    for v in &vars {
        acc = acc.add(&v.mul(v));
    }
    acc
}
