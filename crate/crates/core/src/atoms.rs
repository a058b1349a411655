//! Atom-size moments of the Howitt–Warren process from diagonal density
//! values, their t → ∞ exponential limit, and the Fredholm determinant.
//!
//! On the diagonal the permutation sum collapses to one product,
//! u⁽ⁿ⁾_t(0, (y,…,y)) = n!/(2π)ⁿ ∫ e^{-t|k|²/2 − iy Σk} Π_{α<β} r(k_α, k_β) dk,
//! with r = iθΔ/(iθΔ − k_αk_β). The integral uses the same deformed
//! contour and trapezoid grids as the full density.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bethe::r_factor;
use crate::combinatorics::factorial;
use crate::density::{DensityValue, KGrid, QuadratureSpec};
use crate::error::{Error, Result};
use crate::par;
use crate::rules::{composite_legendre, legendre};

/// Cap on the diagonal order n.
pub const DIAGONAL_CAP: usize = 8;

const I: C64 = C64::new(0.0, 1.0);

fn check_args(n: usize, t: f64, theta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("order must be at least 1"));
    }
    if n > DIAGONAL_CAP {
        return Err(Error::Budget { what: "diagonal order", requested: n, cap: DIAGONAL_CAP });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain("t must be positive"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::domain("theta must be positive"));
    }
    Ok(())
}

/// Σ_k W(k) e^{-iyΣk} Π r over one grid, and Σ |·|.
fn reduced_sum(grid: &KGrid, y: f64, theta: f64) -> (C64, f64) {
    let n = grid.rules.len();
    let sizes = grid.sizes();
    let wy: Vec<Vec<C64>> = grid
        .rules
        .iter()
        .map(|r| r.nodes.iter().zip(&r.weights).map(|(&k, &w)| w * (-I * k * y).exp()).collect())
        .collect();
    // table[a][b][i * N_b + j] = r(k_a[i], k_b[j]) for a < b
    let mut table: Vec<Vec<Vec<C64>>> = vec![vec![Vec::new(); n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let ka = &grid.rules[a].nodes;
            let kb = &grid.rules[b].nodes;
            table[a][b] = ka.iter().flat_map(|&p| kb.iter().map(move |&q| r_factor(p, q, theta))).collect();
        }
    }
    if n == 1 {
        let s: C64 = wy[0].iter().sum();
        return (s, wy[0].iter().map(|z| z.norm()).sum());
    }
    let partial: Vec<(C64, f64)> = par::map_indices(sizes[0], |i0| {
        let mut idx = vec![0usize; n];
        idx[0] = i0;
        let mut prod = vec![C64::new(0.0, 0.0); n];
        prod[0] = wy[0][i0];
        let mut acc = C64::new(0.0, 0.0);
        let mut abs = 0.0;
        let mut d = 1;
        loop {
            for e in d..n {
                let mut v = prod[e - 1] * wy[e][idx[e]];
                for a in 0..e {
                    v *= table[a][e][idx[a] * sizes[e] + idx[e]];
                }
                prod[e] = v;
            }
            acc += prod[n - 1];
            abs += prod[n - 1].norm();
            d = n - 1;
            loop {
                idx[d] += 1;
                if idx[d] < sizes[d] {
                    break;
                }
                idx[d] = 0;
                d -= 1;
                if d == 0 {
                    return (acc, abs);
                }
            }
        }
    });
    partial.into_iter().fold((C64::new(0.0, 0.0), 0.0), |(a, b), (c, d)| (a + c, b + d))
}

/// u⁽ⁿ⁾_t(0, (y,…,y)) by the reduced single-product integrand. The
/// estimate compares against the same rule with steps 1.5× coarser.
pub fn diagonal_density(n: usize, y: f64, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    check_args(n, t, theta)?;
    spec.validate()?;
    let bound = y.abs();
    let fine = reduced_sum(&KGrid::new(n, t, theta, spec, bound, 0), y, theta);
    let coarse = reduced_sum(&KGrid::new(n, t, theta, spec, bound, -1), y, theta);
    let scale = factorial(n) as f64 / (2.0 * PI).powi(n as i32);
    if !(fine.0.re.is_finite() && fine.0.im.is_finite()) {
        return Err(Error::NonFinite("diagonal integrand"));
    }
    Ok(DensityValue {
        value: scale * fine.0.re,
        est_error: scale * ((fine.0.re - coarse.0.re).abs() + 1e-14 * fine.1),
        imag: scale * fine.0.im,
    })
}

/// ∫ wⁿ γ_t(y, dw) = n⁻¹ θ^{1−n} u⁽ⁿ⁾_t(0, (y,…,y)).
pub fn atom_moment(n: usize, y: f64, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    let u = diagonal_density(n, y, t, theta, spec)?;
    let s = theta.powi(1 - n as i32) / n as f64;
    Ok(DensityValue { value: s * u.value, est_error: s * u.est_error, imag: s * u.imag })
}

/// Rescaled size-biased moment
/// M_n(t, x) = √(2π) e^{x²/2} t^{(n+1)/2} ∫ w^{n+1} γ_t(√t x, dw),
/// evaluated after Brownian rescaling as a t = 1 problem with θ' = θ√t.
pub fn rescaled_moment(n: usize, x: f64, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    check_args(n + 1, t, theta)?;
    let u = diagonal_density(n + 1, x, 1.0, theta * t.sqrt(), spec)?;
    let s = (2.0 * PI).sqrt() * (0.5 * x * x).exp() / ((n + 1) as f64 * theta.powi(n as i32));
    Ok(DensityValue { value: s * u.value, est_error: s * u.est_error, imag: s * u.imag })
}

/// t → ∞ limit of M_n: n!·(θ√(2π) e^{x²/2})^{−n}.
pub fn exponential_limit_moment(n: usize, x: f64, theta: f64) -> f64 {
    let rate = theta * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    factorial(n) as f64 / rate.powi(n as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfValue {
    pub value: f64,
    pub est_error: f64,
    /// 1/(1 − λ e^{−x²/2}/(θ√(2π))), the t → ∞ limit.
    pub limit: f64,
    pub terms: Vec<f64>,
    /// Set when |λ| ≥ θ, outside the radius where the series is controlled.
    pub warning: Option<String>,
}

/// Σ_{n=0}^{N} λⁿ M_n(t, x)/n!.
pub fn size_biased_mgf(x: f64, t: f64, theta: f64, lambda: f64, terms: usize, spec: &QuadratureSpec) -> Result<MgfValue> {
    if terms + 1 > DIAGONAL_CAP {
        return Err(Error::Budget { what: "mgf terms", requested: terms, cap: DIAGONAL_CAP - 1 });
    }
    let warning = (lambda.abs() >= theta).then(|| format!("|lambda| = {} >= theta = {theta}: series may diverge", lambda.abs()));
    let mut value = 0.0;
    let mut err = 0.0;
    let mut out = Vec::with_capacity(terms + 1);
    for n in 0..=terms {
        let m = if n == 0 { DensityValue { value: 1.0, est_error: 0.0, imag: 0.0 } } else { rescaled_moment(n, x, t, theta, spec)? };
        let c = lambda.powi(n as i32) / factorial(n) as f64;
        value += c * m.value;
        err += c.abs() * m.est_error;
        out.push(c * m.value);
    }
    let limit = 1.0 / (1.0 - lambda * (-0.5 * x * x).exp() / (theta * (2.0 * PI).sqrt()));
    Ok(MgfValue { value, est_error: err, limit, terms: out, warning })
}

// ---------------------------------------------------------------------------
// Fredholm series and determinant

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredholmSeries {
    /// 1 + Σ_{n=1}^{N} λⁿ/(n!(n−1)!) ∫ wⁿ γ_t(y, dw)
    pub value: f64,
    pub terms: Vec<f64>,
    /// Quadrature error of the kept terms plus `tail_estimate`.
    pub est_error: f64,
    /// Σ_{n>N} λⁿ θ^{1−n} (2πt)^{−n/2}/n!, from |Π r| ≤ 1.
    pub tail_bound: f64,
    /// Geometric extrapolation from the ratio of the last two terms.
    pub tail_estimate: f64,
}

/// |n-th series term| ≤ |λ|ⁿ θ^{1−n} (2πt)^{−n/2}/n!.
pub fn term_bound(n: usize, lambda: f64, t: f64, theta: f64) -> f64 {
    lambda.abs().powi(n as i32) * theta.powi(1 - n as i32) * (2.0 * PI * t).powf(-0.5 * n as f64) / factorial_f64(n)
}

// tail sums reach orders past u64 factorials
fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Spec for the n-th series term: accuracy exponent tied to the term's
/// a-priori size so that high orders run on coarse grids.
pub fn term_spec(n: usize, lambda: f64, t: f64, theta: f64, abs_tol: f64) -> QuadratureSpec {
    let base = QuadratureSpec::for_dim(n);
    let want = (term_bound(n, lambda, t, theta) / abs_tol).ln() + 3.0;
    QuadratureSpec { accuracy: want.clamp(8.0, 25.0), ..base }
}

/// Default number of series orders. The sixth order at t = 0.5 costs
/// minutes and contributes below 1e-6; it is covered by `tail_estimate`.
pub const DEFAULT_SERIES_TERMS: usize = 5;

/// Atom moments ∫ wⁿ γ_t(y, dw) for n = 1..=N, reusable across λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMoments {
    pub y: f64,
    pub t: f64,
    pub theta: f64,
    pub moments: Vec<DensityValue>,
}

impl SeriesMoments {
    /// Each order gets an accuracy sized for |λ| ≤ `lambda_max` and an
    /// absolute term tolerance `abs_tol`.
    pub fn compute(y: f64, t: f64, theta: f64, max_terms: usize, lambda_max: f64, abs_tol: f64) -> Result<Self> {
        if max_terms > DIAGONAL_CAP {
            return Err(Error::Budget { what: "series terms", requested: max_terms, cap: DIAGONAL_CAP });
        }
        check_args(1, t, theta)?;
        let moments = (1..=max_terms)
            .map(|n| atom_moment(n, y, t, theta, &term_spec(n, lambda_max.max(1e-3), t, theta, abs_tol)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { y, t, theta, moments })
    }

    /// 1 + Σ_{n=1}^{N} λⁿ/(n!(n−1)!) ∫ wⁿ γ_t(y, dw).
    pub fn series(&self, lambda: f64) -> FredholmSeries {
        let mut value = 1.0;
        let mut terms = Vec::with_capacity(self.moments.len());
        let mut err = 0.0;
        for (i, m) in self.moments.iter().enumerate() {
            let n = i + 1;
            let c = lambda.powi(n as i32) / (factorial_f64(n) * factorial_f64(n - 1));
            value += c * m.value;
            err += c.abs() * m.est_error;
            terms.push(c * m.value);
        }
        let last = terms.len();
        let tail_bound: f64 =
            if lambda == 0.0 { 0.0 } else { (last + 1..last + 40).map(|n| term_bound(n, lambda, self.t, self.theta)).sum() };
        let tail_estimate = match terms.as_slice() {
            [.., a, b] if a.abs() > 0.0 && (b / a).abs() < 1.0 => {
                let rho = (b / a).abs();
                b.abs() * rho / (1.0 - rho)
            }
            _ => tail_bound,
        };
        FredholmSeries { value, terms, est_error: err + tail_estimate, tail_bound, tail_estimate }
    }
}

/// The moment series at a single λ.
pub fn fredholm_lhs(lambda: f64, y: f64, t: f64, theta: f64, max_terms: usize, abs_tol: f64) -> Result<FredholmSeries> {
    let n = if lambda == 0.0 { 0 } else { max_terms };
    Ok(SeriesMoments::compute(y, t, theta, n, lambda.abs(), abs_tol)?.series(lambda))
}

/// Mesh parameters for the Nyström rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Envelope exponent: L = √(4·envelope/t), so e^{−tL²/4} = e^{−envelope}.
    pub envelope: f64,
    /// Geometric ratio of the panels toward the origin.
    pub ratio: f64,
    /// Innermost geometric edge.
    pub r_min: f64,
    /// Gauss–Legendre nodes per panel.
    pub panel_nodes: usize,
    /// Panels starting at a ≥ r_c are split to width about alpha·(a²/θ + a).
    pub alpha: f64,
    pub r_c: f64,
    /// No panel is wider than max_width/√t, the scale of the Gaussian envelope.
    pub max_width: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        Self { envelope: 28.0, ratio: 0.5, r_min: 1e-5, panel_nodes: 6, alpha: 0.3, r_c: 0.01, max_width: 1.0 }
    }
}

impl MeshParams {
    /// Finer mesh for the convergence check.
    pub fn refined(&self) -> Self {
        Self { panel_nodes: self.panel_nodes + 2, alpha: self.alpha / 1.5, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NystromGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NystromGrid {
    pub fn half_width(t: f64, envelope: f64) -> f64 {
        (4.0 * envelope / t).sqrt()
    }

    /// Plain Gauss–Legendre on [−L, L].
    pub fn legendre(t: f64, m: usize, envelope: f64) -> Self {
        let l = Self::half_width(t, envelope);
        let (nodes, weights) = legendre(-l, l, m);
        Self { nodes, weights }
    }

    /// Composite Gauss–Legendre graded toward the origin, symmetric in x.
    ///
    /// K(x, x') depends on 1/x − 1/x', so it varies on the scale x²/θ near
    /// 0; a uniform rule converges only algebraically there.
    pub fn graded(t: f64, theta: f64, p: &MeshParams) -> Result<Self> {
        if !(p.ratio > 0.0 && p.ratio < 1.0) || !(p.r_min > 0.0) || p.panel_nodes == 0 || !(p.alpha > 0.0) || !(p.max_width > 0.0) {
            return Err(Error::domain("invalid mesh parameters"));
        }
        let l = Self::half_width(t, p.envelope);
        let mut geo = vec![l];
        while geo.last().unwrap() * p.ratio > p.r_min {
            let v = geo.last().unwrap() * p.ratio;
            geo.push(v);
        }
        geo.push(0.0);
        geo.reverse();
        let mut edges = vec![0.0];
        for w in geo.windows(2) {
            let (a, b) = (w[0], w[1]);
            let by_kernel = if a >= p.r_c { ((b - a) / (p.alpha * (a * a / theta + a))).ceil() } else { 1.0 };
            let by_envelope = ((b - a) * t.sqrt() / p.max_width).ceil();
            let k = by_kernel.max(by_envelope).max(1.0) as usize;
            for j in 1..=k {
                edges.push(a + (b - a) * j as f64 / k as f64);
            }
        }
        let (xs, ws) = composite_legendre(&edges, p.panel_nodes);
        let mut nodes: Vec<f64> = xs.iter().rev().map(|x| -x).collect();
        let mut weights: Vec<f64> = ws.iter().rev().cloned().collect();
        nodes.extend(xs);
        weights.extend(ws);
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// K_y(x, x') = x x' e^{−t(x²+x'²)/4} e^{−iy(x+x')/2}/(iθ(x'−x) + x x').
/// The diagonal is e^{−tx²/2 − iyx}, including x = 0 by continuity.
pub fn kernel(x: f64, xp: f64, y: f64, t: f64, theta: f64) -> Result<C64> {
    let env = (-0.25 * t * (x * x + xp * xp)).exp() * (-I * 0.5 * y * (x + xp)).exp();
    if x == xp {
        return Ok(env);
    }
    let den = C64::new(x * xp, theta * (xp - x));
    if den.norm() == 0.0 {
        return Err(Error::NonFinite("Fredholm kernel denominator"));
    }
    Ok(env * (x * xp) / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantValue {
    /// θ·Re det(I + λ/(2πθ) K_y)
    pub value: f64,
    pub imag: f64,
    pub nodes: usize,
}

/// θ·det(I + λ/(2πθ) W^{1/2} K_y W^{1/2}) by complex LU.
pub fn fredholm_determinant(lambda: f64, y: f64, t: f64, theta: f64, grid: &NystromGrid) -> Result<DeterminantValue> {
    check_args(1, t, theta)?;
    let m = grid.len();
    let mu = lambda / (2.0 * PI * theta);
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let rows: Vec<Result<Vec<C64>>> = par::map_indices(m, |i| {
        (0..m)
            .map(|j| {
                let k = kernel(grid.nodes[i], grid.nodes[j], y, t, theta)?;
                let d = if i == j { 1.0 } else { 0.0 };
                Ok(C64::new(d, 0.0) + mu * sw[i] * sw[j] * k)
            })
            .collect()
    });
    let mut data = Vec::with_capacity(m * m);
    for r in rows {
        data.extend(r?);
    }
    let det = DMatrix::from_row_slice(m, m, &data).determinant();
    if !(det.re.is_finite() && det.im.is_finite()) {
        return Err(Error::NonFinite("Fredholm determinant"));
    }
    Ok(DeterminantValue { value: theta * det.re, imag: theta * det.im, nodes: m })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredholmCheck {
    pub lambda: f64,
    pub y: f64,
    pub t: f64,
    pub theta: f64,
    pub lhs: FredholmSeries,
    pub det: DeterminantValue,
    /// Same determinant on the refined mesh.
    pub det_refined: DeterminantValue,
    /// (1 − θ) + θ·det: the series equals this for every θ; the two agree
    /// without the offset only at θ = 1.
    pub rhs: f64,
    pub difference: f64,
}

/// Series against determinant at (y, t, θ) of `moments`, on the graded
/// mesh and its refinement.
pub fn fredholm_check(lambda: f64, moments: &SeriesMoments, mesh: &MeshParams, det_tol: f64) -> Result<FredholmCheck> {
    let g0 = NystromGrid::graded(moments.t, moments.theta, mesh)?;
    let g1 = NystromGrid::graded(moments.t, moments.theta, &mesh.refined())?;
    fredholm_check_on(lambda, moments, &g0, &g1, det_tol)
}

/// Same on caller-supplied grids. Errors if the two determinants differ by
/// more than `det_tol`.
pub fn fredholm_check_on(lambda: f64, moments: &SeriesMoments, coarse: &NystromGrid, fine: &NystromGrid, det_tol: f64) -> Result<FredholmCheck> {
    let (y, t, theta) = (moments.y, moments.t, moments.theta);
    let det = fredholm_determinant(lambda, y, t, theta, coarse)?;
    let det_refined = fredholm_determinant(lambda, y, t, theta, fine)?;
    if (det.value - det_refined.value).abs() > det_tol {
        return Err(Error::Convergence(format!(
            "determinant moved by {:.3e} between {} and {} nodes",
            (det.value - det_refined.value).abs(),
            det.nodes,
            det_refined.nodes
        )));
    }
    let lhs = moments.series(lambda);
    let rhs = 1.0 - theta + det_refined.value;
    let difference = lhs.value - rhs;
    Ok(FredholmCheck { lambda, y, t, theta, lhs, det, det_refined, rhs, difference })
}

/// CSV of (t, n, y, moment, est_error).
pub fn write_moment_table<W: Write>(rows: &[(f64, usize, f64, DensityValue)], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "t,n,y,moment,est_error")?;
    for (t, n, y, v) in rows {
        writeln!(w, "{t},{n},{y},{:.12e},{:.3e}", v.value, v.est_error)?;
    }
    Ok(())
}

/// CSV of (lambda, y, t, theta, lhs, theta·det, rhs, difference).
pub fn write_fredholm_table<W: Write>(rows: &[FredholmCheck], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "lambda,y,t,theta,lhs,theta_det,rhs,difference")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.3e}",
            r.lambda, r.y, r.t, r.theta, r.lhs.value, r.det_refined.value, r.rhs, r.difference
        )?;
    }
    Ok(())
}
