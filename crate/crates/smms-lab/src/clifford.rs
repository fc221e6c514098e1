//! Complex Clifford algebra representations: an explicit inductive family of
//! gamma matrices, chirality splittings, warped-product spinor spaces with
//! their Clifford multiplication, and subset-averaged Hermitian bundle
//! metrics.
//!
//! Convention: generators are skew-Hermitian and square to `-I`, so a unit
//! vector acts unitarily and `v . v . psi = -|v|^2 psi`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Result, SmmsError};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cid(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// An irreducible representation of the complex Clifford algebra on `k`
/// generators, acting on `C^{2^{floor(k/2)}}`.
#[derive(Clone, Debug)]
pub struct GammaRep {
    pub k: usize,
    pub gammas: Vec<CMat>,
}

impl GammaRep {
    /// Inductive construction: start from the one-generator case `[-i]`;
    /// passing from odd `k` to `k + 1` doubles the space with the
    /// off-diagonal embedding, passing from even `k` appends `-i omega_k`.
    /// The normalization makes the volume element of every odd stage `+I`.
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > 12 {
            return Err(SmmsError::InvalidParameter(
                "gamma representation needs 1 <= k <= 12".into(),
            ));
        }
        let mut gammas = vec![CMat::from_element(1, 1, c(0.0, -1.0))];
        for j in 2..=k {
            if j % 2 == 0 {
                // Double: gamma_a -> offdiag(gamma_a, gamma_a), plus the new
                // generator offdiag(-I, I).
                let d = gammas[0].nrows();
                let mut next: Vec<CMat> = gammas
                    .iter()
                    .map(|g| {
                        let mut m = CMat::zeros(2 * d, 2 * d);
                        m.view_mut((0, d), (d, d)).copy_from(g);
                        m.view_mut((d, 0), (d, d)).copy_from(g);
                        m
                    })
                    .collect();
                let mut extra = CMat::zeros(2 * d, 2 * d);
                extra.view_mut((0, d), (d, d)).copy_from(&(-cid(d)));
                extra.view_mut((d, 0), (d, d)).copy_from(&cid(d));
                next.push(extra);
                gammas = next;
            } else {
                let rep = GammaRep {
                    k: j - 1,
                    gammas: gammas.clone(),
                };
                gammas.push(rep.volume_element() * c(0.0, -1.0));
            }
        }
        Ok(GammaRep { k, gammas })
    }

    pub fn dim(&self) -> usize {
        self.gammas[0].nrows()
    }

    /// `omega = i^{floor((k+1)/2)} gamma_1 ... gamma_k`. Hermitian with
    /// `omega^2 = I`; equal to `+I` when `k` is odd.
    pub fn volume_element(&self) -> CMat {
        let mut prod = cid(self.dim());
        for g in &self.gammas {
            prod = prod * g;
        }
        let phase = match ((self.k + 1) / 2) % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        };
        prod * phase
    }

    /// Clifford action of a vector in the orthonormal frame.
    pub fn action(&self, v: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (g, &vi) in self.gammas.iter().zip(v) {
            out += g * c(vi, 0.0);
        }
        out
    }

    /// Projectors onto the `+1` and `-1` eigenspaces of the volume element.
    /// Only the even-rank algebras split.
    pub fn chirality_split(&self) -> Result<(CMat, CMat)> {
        if self.k % 2 != 0 {
            return Err(SmmsError::InvalidParameter(
                "chirality splitting requires even k".into(),
            ));
        }
        let omega = self.volume_element();
        let id = cid(self.dim());
        Ok(((&id + &omega) * c(0.5, 0.0), (&id - &omega) * c(0.5, 0.0)))
    }

    /// Conjugation by the volume element; flips the sign of every generator
    /// in the even case.
    pub fn chirality_conjugate(&self, m: &CMat) -> Result<CMat> {
        if self.k % 2 != 0 {
            return Err(SmmsError::InvalidParameter(
                "chirality conjugation requires even k".into(),
            ));
        }
        let omega = self.volume_element();
        Ok(&omega * m * &omega)
    }
}

/// Spinor space of a warped product of an `n`-manifold base with an
/// `m`-torus fiber, assembled from the factor representations. The generator
/// layout depends on the parities of `n` and `m`; when both are odd the
/// space doubles.
#[derive(Clone, Debug)]
pub struct ProductSpinorSpace {
    pub n: usize,
    pub m: usize,
    pub base: GammaRep,
    pub fiber: GammaRep,
    pub generators: Vec<CMat>,
    pub doubled: bool,
}

impl ProductSpinorSpace {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let base = GammaRep::new(n)?;
        let fiber = GammaRep::new(m)?;
        let db = base.dim();
        let df = fiber.dim();
        let idb = cid(db);
        let idf = cid(df);
        let mut generators = Vec::with_capacity(n + m);
        let doubled;
        if n % 2 == 0 {
            // Even base: twist the fiber generators by the base volume
            // element.
            let omega = base.volume_element();
            for g in &base.gammas {
                generators.push(g.kronecker(&idf));
            }
            for g in &fiber.gammas {
                generators.push(omega.kronecker(g));
            }
            doubled = false;
        } else if m % 2 == 0 {
            // Odd base, even fiber: twist the base generators instead.
            let omega_f = fiber.volume_element();
            for g in &base.gammas {
                generators.push(g.kronecker(&omega_f));
            }
            for g in &fiber.gammas {
                generators.push(idb.kronecker(g));
            }
            doubled = false;
        } else {
            // Both odd: double with the Pauli matrices sigma_3 and sigma_1.
            let s3 = CMat::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
            );
            let s1 = CMat::from_row_slice(
                2,
                2,
                &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            );
            for g in &base.gammas {
                generators.push(s3.kronecker(&g.kronecker(&idf)));
            }
            for g in &fiber.gammas {
                generators.push(s1.kronecker(&idb.kronecker(g)));
            }
            doubled = true;
        }
        Ok(ProductSpinorSpace {
            n,
            m,
            base,
            fiber,
            generators,
            doubled,
        })
    }

    pub fn dim(&self) -> usize {
        self.generators[0].nrows()
    }

    /// Clifford action of a tangent vector `x (+) v` of the warped product,
    /// with `x` in the base orthonormal frame and `v` a raw fiber coordinate
    /// vector: the warp rescales the fiber part by `e^{-f/m}`.
    pub fn warped_action(&self, x: &[f64], v: &[f64], f: f64) -> CMat {
        let scale = (-f / self.m as f64).exp();
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (g, &xi) in self.generators.iter().zip(x) {
            out += g * c(xi, 0.0);
        }
        for (g, &vi) in self.generators[self.n..].iter().zip(v) {
            out += g * c(scale * vi, 0.0);
        }
        out
    }
}

/// Average a Hermitian form over the finite subgroup generated by the
/// gamma matrices: `2^{-k} sum_{S subset [k]} gamma_S^* H gamma_S`. The
/// result is invariant under every generator, so it makes each Clifford
/// multiplication skew-adjoint.
pub fn averaged_hermitian(gammas: &[CMat], h: &CMat) -> Result<CMat> {
    let d = h.nrows();
    if h.ncols() != d || gammas.iter().any(|g| g.nrows() != d || g.ncols() != d) {
        return Err(SmmsError::InvalidParameter(
            "averaging needs square matrices of matching size".into(),
        ));
    }
    let herm_defect = (h - h.adjoint()).norm();
    if herm_defect > 1e-10 * h.norm().max(1.0) {
        return Err(SmmsError::InvalidParameter("seed form must be Hermitian".into()));
    }
    let min_eig = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(SmmsError::InvalidParameter(
            "seed form must be positive definite".into(),
        ));
    }
    let k = gammas.len();
    let mut acc = CMat::zeros(d, d);
    for mask in 0u32..(1 << k) {
        let mut gs = cid(d);
        for (a, g) in gammas.iter().enumerate() {
            if mask & (1 << a) != 0 {
                gs = gs * g;
            }
        }
        acc += gs.adjoint() * h * gs;
    }
    Ok(acc * c(1.0 / (1u64 << k) as f64, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_small(x: f64, tol: f64, what: &str) {
        assert!(x < tol, "{what}: {x} >= {tol}");
    }

    #[test]
    fn generator_relations() {
        for k in 1..=10 {
            let rep = GammaRep::new(k).unwrap();
            assert_eq!(rep.dim(), 1 << (k / 2));
            let id = cid(rep.dim());
            for a in 0..k {
                let ga = &rep.gammas[a];
                assert_small((ga + ga.adjoint()).norm(), 1e-13, "skew-Hermitian");
                for b in 0..k {
                    let anti = ga * &rep.gammas[b] + &rep.gammas[b] * ga;
                    let expected = if a == b { &id * c(-2.0, 0.0) } else { CMat::zeros(rep.dim(), rep.dim()) };
                    assert_small((anti - expected).norm(), 1e-13, "Clifford relation");
                }
            }
        }
    }

    #[test]
    fn volume_element_properties() {
        for k in 1..=10 {
            let rep = GammaRep::new(k).unwrap();
            let omega = rep.volume_element();
            let id = cid(rep.dim());
            assert_small((&omega - omega.adjoint()).norm(), 1e-12, "omega Hermitian");
            assert_small((&omega * &omega - &id).norm(), 1e-12, "omega squares to I");
            if k % 2 == 1 {
                assert_small((&omega - &id).norm(), 1e-12, "odd-rank omega is +I");
            } else {
                for g in &rep.gammas {
                    assert_small((&omega * g + g * &omega).norm(), 1e-12, "omega anticommutes");
                }
            }
        }
    }

    #[test]
    fn unit_vectors_act_unitarily() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [2usize, 3, 5, 6] {
            let rep = GammaRep::new(k).unwrap();
            for _ in 0..20 {
                let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                let a = rep.action(&v);
                assert_small(
                    (&a * a.adjoint() - cid(rep.dim())).norm(),
                    1e-12,
                    "unit action unitary",
                );
                assert_small((&a * &a + cid(rep.dim())).norm(), 1e-12, "unit action squares to -I");
            }
        }
    }

    #[test]
    fn chirality_split_even_only() {
        let rep = GammaRep::new(4).unwrap();
        let (p, q) = rep.chirality_split().unwrap();
        let id = cid(rep.dim());
        assert_small((&p * &p - &p).norm(), 1e-12, "P idempotent");
        assert_small((&p + &q - &id).norm(), 1e-13, "P + Q = I");
        // Generators swap the half-spinor spaces.
        for g in &rep.gammas {
            assert_small((&p * g * &p).norm(), 1e-12, "g is off-diagonal");
            let flipped = rep.chirality_conjugate(g).unwrap();
            assert_small((flipped + g).norm(), 1e-12, "conjugation flips generators");
        }
        assert!(GammaRep::new(3).unwrap().chirality_split().is_err());
    }

    #[test]
    fn product_space_relations() {
        for (n, m) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3), (4, 1)] {
            let space = ProductSpinorSpace::new(n, m).unwrap();
            assert_eq!(space.generators.len(), n + m);
            let d = space.dim();
            let expected_dim = (1 << (n / 2)) * (1 << (m / 2)) * if space.doubled { 2 } else { 1 };
            assert_eq!(d, expected_dim);
            let id = cid(d);
            for a in 0..n + m {
                for b in 0..n + m {
                    let ga = &space.generators[a];
                    let gb = &space.generators[b];
                    let anti = ga * gb + gb * ga;
                    let expected = if a == b { &id * c(-2.0, 0.0) } else { CMat::zeros(d, d) };
                    assert_small((anti - expected).norm(), 1e-13, "product Clifford relation");
                }
            }
        }
    }

    #[test]
    fn warped_action_squares_to_minus_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, m) in [(2usize, 2usize), (3, 2), (3, 3)] {
            let space = ProductSpinorSpace::new(n, m).unwrap();
            let id = cid(space.dim());
            for _ in 0..1000 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f: f64 = rng.gen_range(-1.0..1.0);
                let norm2 = x.iter().map(|a| a * a).sum::<f64>()
                    + (-2.0 * f / m as f64).exp() * v.iter().map(|a| a * a).sum::<f64>();
                let act = space.warped_action(&x, &v, f);
                assert_small(
                    (&act * &act + &id * c(norm2, 0.0)).norm(),
                    1e-11,
                    "warped square identity",
                );
            }
        }
    }

    fn random_pd_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
        let a = CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        &a * a.adjoint() + cid(d) * c(0.5, 0.0)
    }

    #[test]
    fn averaging_produces_invariant_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
            let space = ProductSpinorSpace::new(n, m).unwrap();
            let h = random_pd_hermitian(space.dim(), &mut rng);
            let avg = averaged_hermitian(&space.generators, &h).unwrap();
            assert_small((&avg - avg.adjoint()).norm(), 1e-10, "average Hermitian");
            let min_eig = avg
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig > 0.0, "average positive definite");
            for g in &space.generators {
                assert_small(
                    (g.adjoint() * &avg * g - &avg).norm(),
                    1e-10,
                    "generator invariance",
                );
            }
            // Invariance makes each Clifford multiplication skew-adjoint in
            // the averaged metric: <g u, v> + <u, g v> = 0.
            for g in &space.generators {
                assert_small((&avg * g + g.adjoint() * &avg).norm(), 1e-10, "skew-adjointness");
            }
            let twice = averaged_hermitian(&space.generators, &avg).unwrap();
            assert_small((&twice - &avg).norm(), 1e-10, "idempotent");
        }
    }

    #[test]
    fn averaging_fixes_identity_and_rejects_bad_seeds() {
        let space = ProductSpinorSpace::new(2, 2).unwrap();
        let id = cid(space.dim());
        let avg = averaged_hermitian(&space.generators, &id).unwrap();
        assert_small((&avg - &id).norm(), 1e-13, "identity fixed");
        let non_herm = &space.generators[0] + &id;
        assert!(averaged_hermitian(&space.generators, &non_herm).is_err());
        let indefinite = &id * c(-1.0, 0.0);
        assert!(averaged_hermitian(&space.generators, &indefinite).is_err());
    }
}
