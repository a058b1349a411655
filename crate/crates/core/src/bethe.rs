//! Two-body scattering factors and the permutation sums built from them.
//!
//! The phase convention throughout is e^{i k·x}: the σ-term of the density
//! integrand is e^{-t|k|²/2} e^{i k_σ·(x − y_σ)} Π S_{σ(β),σ(α)}(k) over
//! inversions (α, β) of σ. Since k_σ·y_σ = k·y, the y phase is shared by
//! every term.

use num_complex::Complex64 as C64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{all_permutations, factorial, permutations_capped, Permutation};
use crate::error::{Error, Result};
use crate::exact::{GaussianRational, MultiPoly};

/// Default cap on n for full permutation sums.
pub const SUM_CAP: usize = 8;

/// Relative size below which an S-factor denominator counts as zero.
pub const SINGULAR_TOL: f64 = 1e-14;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Stickiness(f64);

impl Stickiness {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::domain(format!("stickiness must be positive, got {theta}")));
        }
        Ok(Self(theta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// S(k_a, k_b) = (iθ(k_b − k_a) + k_a k_b) / (iθ(k_b − k_a) − k_a k_b), and 1
/// on the singular set.
#[inline]
pub fn s_factor(ka: C64, kb: C64, theta: f64) -> C64 {
    s_factor_tol(ka, kb, theta, SINGULAR_TOL)
}

#[inline]
pub fn s_factor_tol(ka: C64, kb: C64, theta: f64, tol: f64) -> C64 {
    let d = I * theta * (kb - ka);
    let p = ka * kb;
    let num = d + p;
    let den = d - p;
    if den.norm() < tol * (1.0 + num.norm()) {
        return C64::new(1.0, 0.0);
    }
    num / den
}

/// iθ(k_b − k_a) / (iθ(k_b − k_a) − k_a k_b) = (1 + S)/2, the pair factor of
/// the symmetrized sum.
#[inline]
pub fn r_factor(ka: C64, kb: C64, theta: f64) -> C64 {
    let d = I * theta * (kb - ka);
    let den = d - ka * kb;
    if den.norm() < SINGULAR_TOL * (1.0 + d.norm()) {
        return C64::new(1.0, 0.0);
    }
    d / den
}

fn check_dims(k: &[C64], others: &[&[f64]]) -> Result<usize> {
    let n = k.len();
    if n == 0 {
        return Err(Error::domain("empty wavevector"));
    }
    for o in others {
        if o.len() != n {
            return Err(Error::domain(format!("dimension mismatch: {} vs {}", n, o.len())));
        }
    }
    Ok(n)
}

/// Π over inversions of σ of S_{σ(β),σ(α)}(k).
pub fn inversion_product(sigma: &Permutation, k: &[C64], theta: f64) -> C64 {
    let s = sigma.images();
    let mut prod = C64::new(1.0, 0.0);
    for (a, b) in sigma.inversions() {
        prod *= s_factor(k[s[b]], k[s[a]], theta);
    }
    prod
}

pub fn bethe_summand(
    sigma: &Permutation,
    k: &[C64],
    x: &[f64],
    y: &[f64],
    t: f64,
    theta: f64,
) -> Result<C64> {
    let n = check_dims(k, &[x, y])?;
    if sigma.len() != n {
        return Err(Error::domain("permutation size differs from dimension"));
    }
    if !(t > 0.0) {
        return Err(Error::domain("t must be positive"));
    }
    let s = sigma.images();
    let mut phase = C64::new(0.0, 0.0);
    let mut k2 = C64::new(0.0, 0.0);
    for j in 0..n {
        phase += k[s[j]] * (x[j] - y[s[j]]);
        k2 += k[j] * k[j];
    }
    Ok((-0.5 * t * k2 + I * phase).exp() * inversion_product(sigma, k, theta))
}

pub fn bethe_sum(k: &[C64], x: &[f64], y: &[f64], t: f64, theta: f64) -> Result<C64> {
    let n = check_dims(k, &[x, y])?;
    let mut acc = C64::new(0.0, 0.0);
    for sigma in permutations_capped(n, SUM_CAP)? {
        acc += bethe_summand(&sigma, k, x, y, t, theta)?;
    }
    Ok(acc)
}

/// m! Π_{α<β} r_factor(k_α, k_β). Rejects zero coordinates.
pub fn closed_form_sum(k: &[C64], theta: f64) -> Result<C64> {
    let m = k.len();
    if m == 0 {
        return Err(Error::domain("empty wavevector"));
    }
    if k.iter().any(|z| *z == C64::new(0.0, 0.0)) {
        return Err(Error::domain("closed form needs nonzero coordinates"));
    }
    let mut prod = C64::new(factorial(m) as f64, 0.0);
    for a in 0..m {
        for b in a + 1..m {
            prod *= r_factor(k[a], k[b], theta);
        }
    }
    Ok(prod)
}

/// Σ_σ Π over inversions of S, the phase-free permutation sum.
pub fn permutation_sum(k: &[C64], theta: f64) -> Result<C64> {
    let n = k.len();
    let mut acc = C64::new(0.0, 0.0);
    for sigma in permutations_capped(n, SUM_CAP)? {
        acc += inversion_product(&sigma, k, theta);
    }
    Ok(acc)
}

/// E_k(x) = Σ_σ e^{i k_σ·x} Π S. The i in the exponent makes
/// (2π)^{-n} ∫_{k₁>…>kₙ} e^{-t|k|²/2} E_k(x) conj(E_k(y)) dk agree with the
/// full-space integral for real k.
pub fn eigenfunction(k: &[C64], x: &[f64], theta: f64) -> Result<C64> {
    let n = check_dims(k, &[x])?;
    let mut acc = C64::new(0.0, 0.0);
    for sigma in permutations_capped(n, SUM_CAP)? {
        let s = sigma.images();
        let phase: C64 = (0..n).map(|j| k[s[j]] * x[j]).sum();
        acc += (I * phase).exp() * inversion_product(&sigma, k, theta);
    }
    Ok(acc)
}

/// B(k) = Π_{α<β} (k_β − k_α − k_α k_β).
pub fn b_polynomial(k: &[C64]) -> C64 {
    let n = k.len();
    let mut prod = C64::new(1.0, 0.0);
    for a in 0..n {
        for b in a + 1..n {
            prod *= k[b] - k[a] - k[a] * k[b];
        }
    }
    prod
}

pub fn b_polynomial_exact(k: &[GaussianRational]) -> GaussianRational {
    let n = k.len();
    let mut prod = GaussianRational::one();
    for a in 0..n {
        for b in a + 1..n {
            prod *= &(&(&k[b] - &k[a]) - &(&k[a] * &k[b]));
        }
    }
    prod
}

/// B as a polynomial in k₁..kₙ.
pub fn b_polynomial_poly(n: usize) -> MultiPoly {
    let mut prod = MultiPoly::one(n);
    for a in 0..n {
        for b in a + 1..n {
            let ka = MultiPoly::var(n, a);
            let kb = MultiPoly::var(n, b);
            let f = &(&kb - &ka) - &(&ka * &kb);
            prod = &prod * &f;
        }
    }
    prod
}

/// iθ as an exact Gaussian rational.
fn i_theta(theta: &BigRational) -> GaussianRational {
    GaussianRational::new(BigRational::zero(), theta.clone())
}

/// Exact S-factor; None on the singular set.
pub fn s_factor_exact(
    ka: &GaussianRational,
    kb: &GaussianRational,
    theta: &BigRational,
) -> Option<GaussianRational> {
    let d = &i_theta(theta) * &(kb - ka);
    let p = ka * kb;
    let den = &d - &p;
    if den.is_zero() {
        return None;
    }
    Some(&(&d + &p) / &den)
}

/// Exact pair factor iθΔ/(iθΔ − k_a k_b); None on the singular set.
pub fn r_factor_exact(
    ka: &GaussianRational,
    kb: &GaussianRational,
    theta: &BigRational,
) -> Option<GaussianRational> {
    let d = &i_theta(theta) * &(kb - ka);
    let den = &d - &(ka * kb);
    if den.is_zero() {
        return None;
    }
    Some(&d / &den)
}

/// Exact Σ_σ Π over inversions of S. None if any needed factor is singular.
pub fn permutation_sum_exact(k: &[GaussianRational], theta: &BigRational) -> Result<Option<GaussianRational>> {
    let n = k.len();
    // S[p][q] for p < q, the only orientation that occurs.
    let mut s = vec![vec![None; n]; n];
    for p in 0..n {
        for q in p + 1..n {
            match s_factor_exact(&k[p], &k[q], theta) {
                Some(v) => s[p][q] = Some(v),
                None => return Ok(None),
            }
        }
    }
    let mut acc = GaussianRational::zero();
    for sigma in all_permutations(n)? {
        let img = sigma.images();
        let mut prod = GaussianRational::one();
        for (a, b) in sigma.inversions() {
            prod *= s[img[b]][img[a]].as_ref().expect("filled above");
        }
        acc += &prod;
    }
    Ok(Some(acc))
}

/// Exact m! Π_{α<β} r_factor. None on the singular set or for zero coordinates.
pub fn closed_form_sum_exact(k: &[GaussianRational], theta: &BigRational) -> Option<GaussianRational> {
    if k.iter().any(|z| z.is_zero()) {
        return None;
    }
    let m = k.len();
    let mut prod = GaussianRational::real(BigRational::from_integer(factorial(m).into()));
    for a in 0..m {
        for b in a + 1..m {
            prod *= &r_factor_exact(&k[a], &k[b], theta)?;
        }
    }
    Some(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn s_factor_examples() {
        let v = s_factor(c(1.0, 0.0), c(2.0, 0.0), 1.0);
        assert!((v - c(-0.6, -0.8)).norm() < 1e-15);
        assert!((s_factor(c(0.7, 0.0), c(0.7, 0.0), 2.0) + 1.0).norm() < 1e-15);
        assert!((s_factor(c(0.0, 0.0), c(1.3, 0.0), 2.0) - 1.0).norm() < 1e-15);
        assert_eq!(s_factor(c(0.0, 0.0), c(0.0, 0.0), 1.0), c(1.0, 0.0));
        let exact = s_factor_exact(
            &GaussianRational::from_ints(1, 0),
            &GaussianRational::from_ints(2, 0),
            &rat(1, 1),
        )
        .unwrap();
        assert_eq!(exact, GaussianRational::new(rat(-3, 5), rat(-4, 5)));
    }

    #[test]
    fn one_dimensional_summand_is_heat_kernel_integrand() {
        let k = [c(0.8, 0.0)];
        let v = bethe_summand(&Permutation::identity(1), &k, &[0.3], &[-0.2], 1.5, 1.0).unwrap();
        let want = (-0.5 * 1.5 * 0.64 + I * 0.8 * 0.5).exp();
        assert!((v - want).norm() < 1e-15);
    }

    #[test]
    fn two_dimensional_diagonal_sum_vanishes() {
        let k = [c(0.9, 0.0), c(0.9, 0.0)];
        let v = bethe_sum(&k, &[0.4, 0.1], &[0.2, -0.3], 1.0, 1.3).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn closed_form_at_two() {
        let k = [c(0.3, 0.1), c(-1.2, 0.4)];
        let lhs = c(1.0, 0.0) + s_factor(k[0], k[1], 0.7);
        assert!((closed_form_sum(&k, 0.7).unwrap() - lhs).norm() < 1e-14);
        assert!(closed_form_sum(&[c(0.0, 0.0), c(1.0, 0.0)], 1.0).is_err());
    }

    #[test]
    fn b_polynomial_examples() {
        assert_eq!(b_polynomial(&[c(0.0, 0.0), c(0.0, 0.0)]), c(0.0, 0.0));
        assert_eq!(b_polynomial(&[c(1.0, 0.0), c(2.0, 0.0)]), c(-1.0, 0.0));
        let k: Vec<GaussianRational> = [3, -2, 5].iter().map(|&v| GaussianRational::from_ints(v, 1)).collect();
        let pt: Vec<C64> = k.iter().map(|z| z.to_c64()).collect();
        assert!((b_polynomial_exact(&k).to_c64() - b_polynomial(&pt)).norm() < 1e-9);
    }

    #[test]
    fn cap_is_enforced() {
        let k = vec![c(0.1, 0.0); 9];
        let x = vec![0.0; 9];
        assert!(matches!(bethe_sum(&k, &x, &x, 1.0, 1.0), Err(Error::Budget { .. })));
        assert!(bethe_sum(&k[..2], &x[..3], &x[..2], 1.0, 1.0).is_err());
    }
}
