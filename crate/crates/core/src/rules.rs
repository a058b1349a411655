//! One-dimensional quadrature rules.
//!
//! Fourier-variable rules carry the Gaussian factor e^{-t k²/2} inside their
//! (complex) weights, so ∫ e^{-t k²/2} g(k) dk ≈ Σ w_i g(k_i) along the line
//! Im k = η.

use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use num_complex::Complex64 as C64;

#[derive(Clone, Debug)]
pub struct Rule1d {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Truncated trapezoid on k = h(i + offset) + iη, |Re k| ≤ kmax.
    pub fn trapezoid(t: f64, eta: f64, h: f64, kmax: f64, offset: f64) -> Self {
        let m = (kmax / h).ceil() as i64;
        let mut nodes = Vec::with_capacity(2 * m as usize + 1);
        let mut weights = Vec::with_capacity(2 * m as usize + 1);
        for i in -m..=m {
            let k = C64::new(h * (i as f64 + offset), eta);
            nodes.push(k);
            weights.push(h * (-0.5 * t * k * k).exp());
        }
        Self { nodes, weights }
    }

    /// Gauss–Hermite after k = z√(2/t) + jitter + iη.
    pub fn gauss_hermite(t: f64, n: usize, eta: f64, jitter: f64) -> Self {
        let gh = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
        let scale = (2.0 / t).sqrt();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &(z, w) in gh.as_node_weight_pairs() {
            if !(w > 0.0) {
                continue;
            }
            let k = C64::new(z * scale + jitter, eta);
            // w e^{z²} recovers the plain measure; fold in the exact Gaussian at k.
            let lw = C64::new(w.ln() + z * z, 0.0) - 0.5 * t * k * k;
            nodes.push(k);
            weights.push(scale * lw.exp());
        }
        Self { nodes, weights }
    }
}

/// Gauss–Legendre nodes and weights on [a, b].
pub fn legendre(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().iter().map(|&(x, w)| (c + r * x, r * w)).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// Composite Gauss–Legendre with `m` nodes on each panel [e_i, e_{i+1}].
pub fn composite_legendre(edges: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for e in edges.windows(2) {
        let (x, w) = legendre(e[0], e[1], m);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_moment(rule: &Rule1d, p: i32) -> C64 {
        rule.nodes.iter().zip(&rule.weights).map(|(k, w)| w * k.powi(p)).sum()
    }

    #[test]
    fn trapezoid_integrates_gaussian_on_shifted_line() {
        let t = 0.7;
        let want = (2.0 * std::f64::consts::PI / t).sqrt();
        for eta in [0.0, -1.2, 0.9] {
            let r = Rule1d::trapezoid(t, eta, 0.3, (60.0 / t).sqrt(), 0.25);
            assert!((gauss_moment(&r, 0) - want).norm() < 1e-12, "eta {eta}");
            assert!((gauss_moment(&r, 2) - want / t).norm() < 1e-11);
        }
    }

    #[test]
    fn hermite_rule_moments() {
        let t = 2.0;
        let r = Rule1d::gauss_hermite(t, 20, 0.4, 0.0);
        let want = (2.0 * std::f64::consts::PI / t).sqrt();
        assert!((gauss_moment(&r, 0) - want).norm() < 1e-12);
        assert!((gauss_moment(&r, 4) - 3.0 * want / (t * t)).norm() < 1e-11);
    }

    #[test]
    fn legendre_is_sorted_and_exact_for_cubics() {
        let (x, w) = legendre(-1.0, 3.0, 4);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x * x).sum();
        assert!((s - 20.0).abs() < 1e-12);
        let (_, w2) = composite_legendre(&[0.0, 1.0, 2.5], 3);
        assert!((w2.iter().sum::<f64>() - 2.5).abs() < 1e-14);
    }
}
