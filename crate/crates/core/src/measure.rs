//! The reference measure m_θ on the closed Weyl chamber: Lebesgue measure on
//! each stratum, weighted by θ^{|π|−n} Π 1/|block|.
//!
//! Open-chamber integrals over a stratum with |π| = m use gap coordinates
//! z₁ = z, z_{ι+1} = z_ι − g_ι with g_ι > 0, on a truncated box.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{ordered_partitions, OrderedPartition};
use crate::error::{Error, Result};
use crate::rules::legendre;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylPoint(Vec<f64>);

impl WeylPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("empty point"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite coordinate"));
        }
        if coords.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::domain(format!("coordinates must be weakly decreasing: {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_strict(&self) -> bool {
        self.0.windows(2).all(|w| w[0] > w[1])
    }
}

pub fn stratum_weight(pi: &OrderedPartition, theta: f64) -> f64 {
    let n = pi.n() as i32;
    let m = pi.num_blocks() as i32;
    let sizes: f64 = pi.sizes().iter().map(|&s| s as f64).product();
    theta.powi(m - n) / sizes
}

/// Block-constant point carrying z_ι on block ι.
pub fn embed(pi: &OrderedPartition, z: &[f64]) -> Result<WeylPoint> {
    if z.len() != pi.num_blocks() {
        return Err(Error::domain("one value per block expected"));
    }
    if z.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::domain(format!("block values must be strictly decreasing: {z:?}")));
    }
    let mut out = vec![0.0; pi.n()];
    for (j, &zj) in z.iter().enumerate() {
        for i in pi.block_range(j) {
            out[i] = zj;
        }
    }
    WeylPoint::new(out)
}

/// The stratum containing `p`: coordinates within `tol` share a block.
pub fn stratum_of(p: &WeylPoint, tol: f64) -> OrderedPartition {
    let c = p.coords();
    let mut sizes = vec![1usize];
    for w in c.windows(2) {
        if (w[0] - w[1]).abs() <= tol {
            *sizes.last_mut().unwrap() += 1;
        } else {
            sizes.push(1);
        }
    }
    OrderedPartition::from_composition(&sizes).expect("nonempty")
}

/// Box for open-chamber integrals: the top block coordinate z runs over
/// [z_lo, z_hi] and every gap over [0, gap_max], each with Gauss–Legendre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChamberRule {
    pub z_lo: f64,
    pub z_hi: f64,
    pub gap_max: f64,
    pub z_nodes: usize,
    pub gap_nodes: usize,
}

impl ChamberRule {
    /// Box for functions with Gaussian decay of scale `scale` around the
    /// points of [lo, hi]; `sigmas` widths of margin.
    pub fn around(lo: f64, hi: f64, scale: f64, sigmas: f64, nodes: usize) -> Self {
        Self {
            z_lo: lo - sigmas * scale,
            z_hi: hi + sigmas * scale,
            gap_max: (hi - lo) + sigmas * scale * std::f64::consts::SQRT_2,
            z_nodes: nodes,
            gap_nodes: nodes,
        }
    }

    pub fn refined(&self, factor: f64) -> Self {
        Self {
            z_nodes: (self.z_nodes as f64 * factor).ceil() as usize,
            gap_nodes: (self.gap_nodes as f64 * factor).ceil() as usize,
            ..self.clone()
        }
    }

    pub fn z_rule(&self) -> (Vec<f64>, Vec<f64>) {
        legendre(self.z_lo, self.z_hi, self.z_nodes)
    }

    pub fn gap_rule(&self) -> (Vec<f64>, Vec<f64>) {
        legendre(0.0, self.gap_max, self.gap_nodes)
    }

    /// Lowest coordinate any node of an n-point stratum can take.
    pub fn y_min(&self, n: usize) -> f64 {
        self.z_lo - (n.saturating_sub(1)) as f64 * self.gap_max
    }

    /// Tensor nodes (point, weight) for the open chamber of stratum π.
    pub fn stratum_nodes(&self, pi: &OrderedPartition) -> Vec<(Vec<f64>, f64)> {
        let (zx, zw) = self.z_rule();
        let (gx, gw) = self.gap_rule();
        let m = pi.num_blocks();
        let mut pts: Vec<(Vec<f64>, f64)> = zx.iter().zip(&zw).map(|(&z, &w)| (vec![z], w)).collect();
        for _ in 1..m {
            let mut next = Vec::with_capacity(pts.len() * gx.len());
            for (p, w) in &pts {
                let last = *p.last().unwrap();
                for (&g, &wg) in gx.iter().zip(&gw) {
                    let mut q = p.clone();
                    q.push(last - g);
                    next.push((q, w * wg));
                }
            }
            pts = next;
        }
        pts.into_iter()
            .map(|(z, w)| {
                let mut y = vec![0.0; pi.n()];
                for (j, &zj) in z.iter().enumerate() {
                    for i in pi.block_range(j) {
                        y[i] = zj;
                    }
                }
                (y, w)
            })
            .collect()
    }
}

/// ∫ f dm_θ over the n-point chamber, stratum by stratum in enumeration order.
pub fn integrate<F>(f: F, n: usize, theta: f64, rule: &ChamberRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if !(theta > 0.0) {
        return Err(Error::domain("theta must be positive"));
    }
    let mut total = 0.0;
    for pi in ordered_partitions(n)? {
        let mut s = 0.0;
        for (y, w) in rule.stratum_nodes(&pi) {
            let v = f(&y);
            if !v.is_finite() {
                return Err(Error::NonFinite("integrand"));
            }
            s += w * v;
        }
        total += stratum_weight(&pi, theta) * s;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        let p = OrderedPartition::from_composition(&[2]).unwrap();
        assert!((stratum_weight(&p, 0.8) - 1.0 / 1.6).abs() < 1e-15);
        let p = OrderedPartition::from_composition(&[3]).unwrap();
        assert!((stratum_weight(&p, 2.0) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(stratum_weight(&OrderedPartition::singletons(4), 3.0), 1.0);
    }

    #[test]
    fn embedding() {
        let p = OrderedPartition::from_composition(&[2, 1]).unwrap();
        assert_eq!(embed(&p, &[1.0, 0.0]).unwrap().coords(), &[1.0, 1.0, 0.0]);
        let p = OrderedPartition::from_composition(&[1, 3]).unwrap();
        assert_eq!(embed(&p, &[2.0, -1.0]).unwrap().coords(), &[2.0, -1.0, -1.0, -1.0]);
        assert!(embed(&p, &[0.0, 1.0]).is_err());
        assert!(WeylPoint::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn one_dimensional_gaussian() {
        let rule = ChamberRule::around(0.0, 0.0, 1.0, 9.0, 60);
        let v = integrate(|y| (-0.5 * y[0] * y[0]).exp(), 1, 1.0, &rule).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_strata_for_product_function() {
        // ∫∫_{y1>y2} g(y1)h(y2) + (1/2θ) ∫ g h with Gaussian g, h.
        let theta = 0.7;
        let rule = ChamberRule::around(0.0, 0.0, 1.0, 9.0, 70);
        let g = |v: f64| (-0.5 * v * v).exp();
        let h = |v: f64| (-(v - 0.5) * (v - 0.5)).exp();
        let got = integrate(|y| g(y[0]) * h(y[1]), 2, theta, &rule).unwrap();
        // Diagonal part in closed form: ∫ e^{-v²/2 - (v-.5)²} dv.
        let diag = (2.0 * std::f64::consts::PI / 3.0).sqrt() * (-1.0f64 / 12.0).exp();
        // Off-diagonal part by a fine 2D midpoint sum.
        let (m, l) = (3000, 9.0);
        let dx = 2.0 * l / m as f64;
        let mut off = 0.0;
        for i in 0..m {
            let a = -l + (i as f64 + 0.5) * dx;
            for j in 0..i {
                let b = -l + (j as f64 + 0.5) * dx;
                off += g(a) * h(b);
            }
            off += 0.5 * g(a) * h(a);
        }
        off *= dx * dx;
        assert!((got - off - diag / (2.0 * theta)).abs() < 1e-5);
    }

    #[test]
    fn stratum_pattern() {
        let p = WeylPoint::new(vec![2.0, 2.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(stratum_of(&p, 0.0).sizes(), vec![2, 1, 2]);
    }
}
