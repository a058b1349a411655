//! Transition density u_t(x, y) of n sticky Brownian motions, its
//! derivatives, expectations against m_θ, and PDE residuals.
//!
//! u_t(x,y) = (2π)^{-n} ∫ e^{-t|k|²/2} e^{-ik·y} A(k, x) dk with
//! A(k, x) = Σ_σ e^{i k_σ·x} Π S. The default rule moves k₁ to Im k = −c,
//! kₙ to Im k = +c (c = 1/√t) and keeps the middle variables real. On that
//! contour every S-factor is analytic and bounded, so the truncated
//! trapezoid converges geometrically. Only for n ≥ 4, where two middle
//! variables meet at the cusp k_a = k_b = 0, is the rate algebraic.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bethe::s_factor_tol;
use crate::combinatorics::{all_permutations, ordered_partitions, OrderedPartition};
use crate::error::{Error, Result};
use crate::measure::{stratum_weight, ChamberRule, WeylPoint};
use crate::par;
use crate::rules::Rule1d;

/// Cap on n for the full permutation-sum density.
pub const DENSITY_CAP: usize = 8;

const I: C64 = C64::new(0.0, 1.0);

/// Step ratios for the real middle variables when n ≥ 4. Mutually
/// irrational, so no lattice row sits on a diagonal k_a = k_b.
const REAL_STEP_RATIOS: [f64; 6] = [1.0, 1.118_033_988_749_895, 1.236_067_977_499_79, 1.322_875_655_532_295, 1.095_445_115_010_332, 1.183_215_956_619_923];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Truncated trapezoid, step chosen from pole distance and phase.
    Trapezoid,
    /// Tensor Gauss–Hermite with nodes_per_dim nodes.
    GaussHermite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: RuleKind,
    /// Gauss–Hermite: nodes per dimension. Trapezoid: lower bound on it.
    pub nodes_per_dim: usize,
    pub singularity_tol: f64,
    /// Offset added to real-line nodes; None means 1e-3·√2/√t.
    pub jitter: Option<f64>,
    /// Deform k₁ and kₙ off the real axis (see module docs).
    pub contour_shift: bool,
    /// c·√t for the contour offset.
    pub shift_scale: f64,
    /// Target exponent: truncation at e^{-accuracy}, trapezoid aliasing likewise.
    pub accuracy: f64,
    /// Resolution ratio between the two runs behind est_error.
    pub refine: f64,
    /// Half-width of the y box in units of √t, for expectations.
    pub box_sigmas: f64,
    /// Gauss–Legendre nodes per chamber coordinate, for expectations.
    pub chamber_nodes: usize,
}

impl QuadratureSpec {
    pub fn for_dim(n: usize) -> Self {
        Self {
            rule: RuleKind::Trapezoid,
            nodes_per_dim: match n {
                0..=2 => 40,
                3 => 24,
                _ => 16,
            },
            singularity_tol: crate::bethe::SINGULAR_TOL,
            jitter: None,
            contour_shift: true,
            shift_scale: 1.0,
            // n ≥ 4 pays an algebraic rate on the real middle variables.
            accuracy: if n >= 4 { 14.0 } else { 25.0 },
            refine: 1.5,
            box_sigmas: 7.0,
            chamber_nodes: 40,
        }
    }

    /// Plain Gauss–Hermite on the real axis with jittered nodes.
    pub fn hermite_baseline(n: usize) -> Self {
        Self { rule: RuleKind::GaussHermite, contour_shift: false, ..Self::for_dim(n) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim < 4 {
            return Err(Error::domain("nodes_per_dim must be at least 4"));
        }
        if !(self.singularity_tol > 0.0) {
            return Err(Error::domain("singularity_tol must be positive"));
        }
        if !(self.refine > 1.0) || !(self.accuracy > 1.0) || !(self.shift_scale > 0.0) {
            return Err(Error::domain("refine > 1, accuracy > 1 and shift_scale > 0 required"));
        }
        if self.chamber_nodes < 2 || !(self.box_sigmas > 0.0) {
            return Err(Error::domain("chamber box needs nodes and a positive width"));
        }
        Ok(())
    }

    fn jitter_for(&self, t: f64) -> f64 {
        self.jitter.unwrap_or(1e-3 * SQRT_2 / t.sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub value: f64,
    pub est_error: f64,
    /// Imaginary part left over by the quadrature; zero in exact arithmetic.
    pub imag: f64,
}

/// Differentiation variable for in-integrand derivative factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X(usize),
    Y(usize),
    T,
}

/// Linear combination Σ c_j ∂^{axes_j} u, evaluated in one pass.
pub type Functional = [(f64, Vec<Axis>)];

/// Tensor grid in k for one resolution level.
#[derive(Clone, Debug)]
pub struct KGrid {
    pub rules: Vec<Rule1d>,
    pub etas: Vec<f64>,
}

impl KGrid {
    /// `phase_bound` bounds |x_i − y_j| over every point to be evaluated.
    pub fn new(n: usize, t: f64, theta: f64, spec: &QuadratureSpec, phase_bound: f64, level: i32) -> Self {
        let c = spec.shift_scale / t.sqrt();
        let etas: Vec<f64> = (0..n)
            .map(|j| {
                if !spec.contour_shift || n < 2 {
                    0.0
                } else if j == 0 {
                    -c
                } else if j == n - 1 {
                    c
                } else {
                    0.0
                }
            })
            .collect();
        let jitter = spec.jitter_for(t);
        let rules = match spec.rule {
            RuleKind::GaussHermite => {
                let m = (spec.nodes_per_dim as f64 * spec.refine.powi(level)).ceil() as usize;
                etas.iter().map(|&e| Rule1d::gauss_hermite(t, m, e, if e == 0.0 { jitter } else { 0.0 })).collect()
            }
            RuleKind::Trapezoid => {
                let a = spec.accuracy;
                // Extra room for derivative factors growing like |k|².
                let kmax = (2.0 * (a + 4.0) / t).sqrt();
                let h_phase = 2.0 * PI / (phase_bound + (2.0 * a * t).sqrt());
                let h_floor = 2.0 * kmax / (spec.nodes_per_dim as f64 - 1.0);
                let scale = spec.refine.powi(-level);
                let real_dist = if spec.contour_shift { theta * c / (theta + c) } else { 0.5 * theta.min(1.0 / t.sqrt()) };
                let real_acc = if n >= 4 || !spec.contour_shift { 1.6 * a } else { a };
                let mut r_index = 0usize;
                etas.iter()
                    .map(|&e| {
                        if e != 0.0 {
                            let h = h_phase.min(2.0 * PI * c / a).min(h_floor) * scale;
                            Rule1d::trapezoid(t, e, h, kmax, 0.0)
                        } else if n == 1 {
                            let h = h_phase.min(h_floor) * scale;
                            Rule1d::trapezoid(t, 0.0, h, kmax, jitter / h)
                        } else {
                            let base = h_phase.min(2.0 * PI * real_dist / real_acc).min(h_floor) * scale;
                            let (h, off) = if n >= 4 || !spec.contour_shift {
                                let rho = REAL_STEP_RATIOS[r_index % REAL_STEP_RATIOS.len()];
                                let h = base * rho;
                                (h, (0.5 + 0.618_033_988_75 * r_index as f64).fract() + jitter / h)
                            } else {
                                (base, jitter / base)
                            };
                            r_index += 1;
                            Rule1d::trapezoid(t, 0.0, h, kmax, off)
                        }
                    })
                    .collect()
            }
        };
        Self { rules, etas }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.len()).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.sizes().iter().product()
    }
}

/// Precomputed permutation data: images and the (p, q), p < q, index pairs
/// of the S-factors each σ picks up.
#[derive(Clone, Debug)]
struct PermTable {
    images: Vec<Vec<usize>>,
    pairs: Vec<Vec<(usize, usize)>>,
}

impl PermTable {
    fn new(n: usize) -> Result<Self> {
        let perms = all_permutations(n)?;
        let images = perms.iter().map(|s| s.images().to_vec()).collect();
        let pairs = perms
            .iter()
            .map(|s| {
                let img = s.images();
                s.inversions().into_iter().map(|(a, b)| (img[b], img[a])).collect()
            })
            .collect();
        Ok(Self { images, pairs })
    }
}

/// Evaluator for fixed (n, t, θ, spec) and a phase bound.
#[derive(Clone, Debug)]
pub struct DensityEngine {
    n: usize,
    t: f64,
    theta: f64,
    spec: QuadratureSpec,
    grids: [KGrid; 2],
    perms: PermTable,
}

fn check_common(n: usize, t: f64, theta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if n > DENSITY_CAP {
        return Err(Error::Budget { what: "density dimension", requested: n, cap: DENSITY_CAP });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("t must be positive, got {t}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::domain(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

/// max |x_i − y_j|.
pub fn phase_span(x: &[f64], y: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for &a in x {
        for &b in y {
            m = m.max((a - b).abs());
        }
    }
    m
}

impl DensityEngine {
    pub fn new(n: usize, t: f64, theta: f64, spec: &QuadratureSpec, phase_bound: f64) -> Result<Self> {
        check_common(n, t, theta)?;
        spec.validate()?;
        let grids = [
            KGrid::new(n, t, theta, spec, phase_bound, 0),
            KGrid::new(n, t, theta, spec, phase_bound, 1),
        ];
        Ok(Self { n, t, theta, spec: spec.clone(), grids, perms: PermTable::new(n)? })
    }

    /// Engine sized for evaluations at (x, y) and points within `margin` of them.
    pub fn for_points(x: &WeylPoint, y: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec, margin: f64) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::domain("x and y differ in dimension"));
        }
        Self::new(x.dim(), t, theta, spec, phase_span(x.coords(), y.coords()) + 2.0 * margin)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn grid(&self, level: usize) -> &KGrid {
        &self.grids[level]
    }

    /// Σ c_j ∂^{axes_j} u_t(x, y), both resolution levels.
    pub fn functional(&self, x: &[f64], y: &[f64], f: &Functional) -> Result<DensityValue> {
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::domain("point dimension differs from engine dimension"));
        }
        for (_, axes) in f {
            for ax in axes {
                match *ax {
                    Axis::X(a) | Axis::Y(a) if a >= self.n => {
                        return Err(Error::domain(format!("axis {a} out of range")));
                    }
                    _ => {}
                }
            }
        }
        let (v0, _) = self.point_sum(0, x, y, f)?;
        let (v1, abs1) = self.point_sum(1, x, y, f)?;
        let norm = (2.0 * PI).powi(-(self.n as i32));
        let floor = 1e-14 * abs1 * norm;
        Ok(DensityValue { value: v1.re * norm, est_error: (v1.re - v0.re).abs() * norm + floor, imag: v1.im * norm })
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<DensityValue> {
        self.functional(x, y, &[(1.0, vec![])])
    }

    /// Raw quadrature sum Σ_k W e^{-ik·y} Σ_σ (...) and Σ |·| at one level.
    fn point_sum(&self, level: usize, x: &[f64], y: &[f64], f: &Functional) -> Result<(C64, f64)> {
        let n = self.n;
        let grid = &self.grids[level];
        let sizes = grid.sizes();
        // xph[j][node * n + i] = e^{i k_j x_i};  yw[j][node] = w e^{-i k_j y_j}
        let xph: Vec<Vec<C64>> = grid
            .rules
            .iter()
            .map(|r| r.nodes.iter().flat_map(|&k| x.iter().map(move |&xi| (I * k * xi).exp())).collect())
            .collect();
        let yw: Vec<Vec<C64>> = grid
            .rules
            .iter()
            .enumerate()
            .map(|(j, r)| r.nodes.iter().zip(&r.weights).map(|(&k, &w)| w * (-I * k * y[j]).exp()).collect())
            .collect();
        let tol = self.spec.singularity_tol;
        let theta = self.theta;
        let perms = &self.perms;
        let partial: Vec<(C64, f64)> = par::map_indices(sizes[0], |i0| {
            let mut idx = vec![0usize; n];
            idx[0] = i0;
            let mut k = vec![C64::new(0.0, 0.0); n];
            let mut s = vec![C64::new(0.0, 0.0); n * n];
            let mut acc = C64::new(0.0, 0.0);
            let mut abs = 0.0;
            loop {
                for j in 0..n {
                    k[j] = grid.rules[j].nodes[idx[j]];
                }
                for p in 0..n {
                    for q in p + 1..n {
                        s[p * n + q] = s_factor_tol(k[p], k[q], theta, tol);
                    }
                }
                let mut base = C64::new(1.0, 0.0);
                for j in 0..n {
                    base *= yw[j][idx[j]];
                }
                let mut amp = C64::new(0.0, 0.0);
                let mut amp_abs = 0.0;
                for (img, pairs) in perms.images.iter().zip(&perms.pairs) {
                    let mut term = C64::new(1.0, 0.0);
                    for j in 0..n {
                        let v = img[j];
                        term *= xph[v][idx[v] * n + j];
                    }
                    for &(p, q) in pairs {
                        term *= s[p * n + q];
                    }
                    term *= insertion(f, img, &k);
                    amp += term;
                    amp_abs += term.norm();
                }
                acc += base * amp;
                abs += base.norm() * amp_abs;
                // odometer over dims 1..n
                let mut d = n;
                loop {
                    if d == 1 {
                        return (acc, abs);
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < sizes[d] {
                        break;
                    }
                    idx[d] = 0;
                }
                if n == 1 {
                    return (acc, abs);
                }
            }
        });
        let mut acc = C64::new(0.0, 0.0);
        let mut abs = 0.0;
        for (a, b) in partial {
            acc += a;
            abs += b;
        }
        if !(acc.re.is_finite() && acc.im.is_finite()) {
            return Err(Error::NonFinite("density integrand"));
        }
        Ok((acc, abs))
    }

    /// W(k) Σ_σ e^{i k_σ·x} Π S on the full tensor grid, row-major.
    fn amplitude_array(&self, level: usize, x: &[f64]) -> Vec<C64> {
        let n = self.n;
        let grid = &self.grids[level];
        let sizes = grid.sizes();
        let inner: usize = sizes[1..].iter().product();
        let total = sizes[0] * inner;
        let xph: Vec<Vec<C64>> = grid
            .rules
            .iter()
            .map(|r| r.nodes.iter().flat_map(|&k| x.iter().map(move |&xi| (I * k * xi).exp())).collect())
            .collect();
        let tol = self.spec.singularity_tol;
        let theta = self.theta;
        let perms = &self.perms;
        let mut out = vec![C64::new(0.0, 0.0); total];
        par::for_each_chunk_mut(&mut out, inner, |i0, chunk| {
            let mut idx = vec![0usize; n];
            idx[0] = i0;
            let mut k = vec![C64::new(0.0, 0.0); n];
            let mut s = vec![C64::new(0.0, 0.0); n * n];
            for slot in chunk.iter_mut() {
                let mut w = C64::new(1.0, 0.0);
                for j in 0..n {
                    k[j] = grid.rules[j].nodes[idx[j]];
                    w *= grid.rules[j].weights[idx[j]];
                }
                for p in 0..n {
                    for q in p + 1..n {
                        s[p * n + q] = s_factor_tol(k[p], k[q], theta, tol);
                    }
                }
                let mut amp = C64::new(0.0, 0.0);
                for (img, pairs) in perms.images.iter().zip(&perms.pairs) {
                    let mut term = C64::new(1.0, 0.0);
                    for j in 0..n {
                        let v = img[j];
                        term *= xph[v][idx[v] * n + j];
                    }
                    for &(p, q) in pairs {
                        term *= s[p * n + q];
                    }
                    amp += term;
                }
                *slot = w * amp;
                let mut d = n;
                while d > 1 {
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < sizes[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        });
        out
    }

    /// u_t(x, ·) on the open-chamber nodes of stratum π, by contracting one
    /// k variable at a time against the y phase. Returns (points, weights,
    /// values) with points flattened n per node.
    fn stratum_values(&self, level: usize, amp: &[C64], pi: &OrderedPartition, rule: &ChamberRule) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let grid = &self.grids[level];
        let sizes = grid.sizes();
        let (zx, zw) = rule.z_rule();
        let (gx, gw) = rule.gap_rule();
        let mut state: Vec<C64> = amp.to_vec();
        // Per prefix point: current block value, weight, and the block values so far.
        let mut cur: Vec<f64> = vec![0.0];
        let mut wq: Vec<f64> = vec![1.0];
        let mut blocks: Vec<Vec<f64>> = vec![Vec::new()];
        let mut r_rem: usize = sizes.iter().product();
        for j in 0..n {
            let nj = sizes[j];
            let r_next = r_rem / nj;
            let new_block = j == 0 || pi.block_of(j) != pi.block_of(j - 1);
            let (parent, ycur, wnew, bnew): (Vec<usize>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) = if new_block {
                let (nodes, weights) = if j == 0 { (&zx, &zw) } else { (&gx, &gw) };
                let mut parent = Vec::with_capacity(cur.len() * nodes.len());
                let mut yc = Vec::with_capacity(parent.capacity());
                let mut wn = Vec::with_capacity(parent.capacity());
                let mut bn = Vec::with_capacity(parent.capacity());
                for p in 0..cur.len() {
                    for (&v, &w) in nodes.iter().zip(weights.iter()) {
                        let yv = if j == 0 { v } else { cur[p] - v };
                        parent.push(p);
                        yc.push(yv);
                        wn.push(wq[p] * w);
                        let mut b = blocks[p].clone();
                        b.push(yv);
                        bn.push(b);
                    }
                }
                (parent, yc, wn, bn)
            } else {
                ((0..cur.len()).collect(), cur.clone(), wq.clone(), blocks.clone())
            };
            let knodes = &grid.rules[j].nodes;
            let mut next = vec![C64::new(0.0, 0.0); ycur.len() * r_next];
            let st = &state;
            par::for_each_chunk_mut(&mut next, r_next.max(1), |pp, row| {
                let base = parent[pp] * r_rem;
                let yv = ycur[pp];
                for (i, &k) in knodes.iter().enumerate() {
                    let ph = (-I * k * yv).exp();
                    let src = &st[base + i * r_next..base + (i + 1) * r_next];
                    for (o, s) in row.iter_mut().zip(src) {
                        *o += ph * s;
                    }
                }
            });
            state = next;
            cur = ycur;
            wq = wnew;
            blocks = bnew;
            r_rem = r_next;
        }
        let norm = (2.0 * PI).powi(-(n as i32));
        let mut pts = Vec::with_capacity(cur.len() * n);
        for b in &blocks {
            for (jb, &v) in b.iter().enumerate() {
                for _ in pi.block_range(jb) {
                    pts.push(v);
                }
            }
        }
        let vals = state.iter().map(|z| z.re * norm).collect();
        (pts, wq, vals)
    }

    /// ∫ u_t(x, y) f(y) m_θ(dy) at one level.
    fn expectation_level<F>(&self, level: usize, f: &F, x: &[f64], rule: &ChamberRule) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let amp = self.amplitude_array(level, x);
        let mut total = 0.0;
        for pi in ordered_partitions(self.n)? {
            let (pts, w, u) = self.stratum_values(level, &amp, &pi, rule);
            let terms: Vec<f64> = par::map_indices(w.len(), |p| w[p] * u[p] * f(&pts[p * self.n..(p + 1) * self.n]));
            let s = par::pairwise_sum(&terms);
            if !s.is_finite() {
                return Err(Error::NonFinite("expectation integrand"));
            }
            total += stratum_weight(&pi, self.theta) * s;
        }
        Ok(total)
    }
}

fn insertion(f: &Functional, img: &[usize], k: &[C64]) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (c, axes) in f {
        let mut v = C64::new(*c, 0.0);
        for ax in axes {
            v *= match *ax {
                Axis::X(a) => I * k[img[a]],
                Axis::Y(a) => -I * k[a],
                Axis::T => -0.5 * k.iter().map(|z| z * z).sum::<C64>(),
            };
        }
        total += v;
    }
    total
}

fn check_pair(x: &WeylPoint, y: &WeylPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::domain("x and y differ in dimension"));
    }
    Ok(())
}

pub fn evaluate_density(x: &WeylPoint, y: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    check_pair(x, y)?;
    DensityEngine::for_points(x, y, t, theta, spec, 0.0)?.density(x.coords(), y.coords())
}

/// ∂^{axes} u with |axes| ≤ 2, by in-integrand factors.
pub fn density_derivative(x: &WeylPoint, y: &WeylPoint, t: f64, theta: f64, axes: &[Axis], spec: &QuadratureSpec) -> Result<DensityValue> {
    check_pair(x, y)?;
    if axes.len() > 2 {
        return Err(Error::domain("derivative order above 2"));
    }
    DensityEngine::for_points(x, y, t, theta, spec, 0.0)?.functional(x.coords(), y.coords(), &[(1.0, axes.to_vec())])
}

/// θ(∂_b u − ∂_a u) − (b − a)∂_a∂_b u at a point with x_a = x_b (0-based a < b).
pub fn boundary_residual(x: &WeylPoint, a: usize, b: usize, y: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    check_pair(x, y)?;
    if !(a < b && b < x.dim()) {
        return Err(Error::domain("need a < b < n"));
    }
    if x.coords()[a] != x.coords()[b] {
        return Err(Error::domain("boundary residual needs x_a = x_b"));
    }
    let f = [
        (theta, vec![Axis::X(b)]),
        (-theta, vec![Axis::X(a)]),
        (-((b - a) as f64), vec![Axis::X(a), Axis::X(b)]),
    ];
    DensityEngine::for_points(x, y, t, theta, spec, 0.0)?.functional(x.coords(), y.coords(), &f)
}

/// ∂_t u (in-integrand −|k|²/2) minus half the Laplacian in x by central
/// differences of step h, with one k grid for every evaluation.
pub fn heat_residual(x: &WeylPoint, y: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec, h: f64) -> Result<DensityValue> {
    check_pair(x, y)?;
    if !x.is_strict() {
        return Err(Error::domain("heat residual needs x in the open chamber"));
    }
    let n = x.dim();
    let xc = x.coords();
    if !(h > 0.0) || xc.windows(2).any(|w| w[0] - w[1] <= 2.0 * h) {
        return Err(Error::domain("FD step must be positive and below half the smallest gap"));
    }
    let eng = DensityEngine::for_points(x, y, t, theta, spec, h)?;
    let dt = eng.functional(xc, y.coords(), &[(1.0, vec![Axis::T])])?;
    let center = eng.density(xc, y.coords())?;
    let mut lap = 0.0;
    let mut err = dt.est_error + 2.0 * n as f64 * center.est_error / (h * h);
    for a in 0..n {
        let mut xp = xc.to_vec();
        xp[a] += h;
        let mut xm = xc.to_vec();
        xm[a] -= h;
        let up = eng.density(&xp, y.coords())?;
        let um = eng.density(&xm, y.coords())?;
        lap += (up.value - 2.0 * center.value + um.value) / (h * h);
        err += (up.est_error + um.est_error) / (h * h);
    }
    Ok(DensityValue { value: dt.value - 0.5 * lap, est_error: err, imag: dt.imag })
}

/// Same residual with the Laplacian also taken inside the integral. Each
/// σ-term cancels exactly, so this only measures rounding.
pub fn heat_residual_analytic(x: &WeylPoint, y: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<DensityValue> {
    check_pair(x, y)?;
    let n = x.dim();
    let mut f = vec![(1.0, vec![Axis::T])];
    for a in 0..n {
        f.push((-0.5, vec![Axis::X(a), Axis::X(a)]));
    }
    DensityEngine::for_points(x, y, t, theta, spec, 0.0)?.functional(x.coords(), y.coords(), &f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub est_error: f64,
}

/// Chamber box and phase bound used by `expectation`.
pub fn expectation_box(x: &[f64], t: f64, spec: &QuadratureSpec) -> (ChamberRule, f64) {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rule = ChamberRule::around(lo, hi, t.sqrt(), spec.box_sigmas, spec.chamber_nodes);
    let bound = (hi - rule.y_min(x.len())).max(rule.z_hi - lo);
    (rule, bound)
}

/// E_x[f(Y_t)] = ∫ u_t(x, y) f(y) m_θ(dy).
pub fn expectation<F>(f: F, x: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<Expectation>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (rule, bound) = expectation_box(x.coords(), t, spec);
    let eng = DensityEngine::new(x.dim(), t, theta, spec, bound)?;
    let v0 = eng.expectation_level(0, &f, x.coords(), &rule)?;
    let v1 = eng.expectation_level(1, &f, x.coords(), &rule.refined(spec.refine))?;
    Ok(Expectation { value: v1, est_error: (v1 - v0).abs() })
}

pub fn normalization(x: &WeylPoint, t: f64, theta: f64, spec: &QuadratureSpec) -> Result<Expectation> {
    expectation(|_| 1.0, x, t, theta, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(v: &[f64]) -> WeylPoint {
        WeylPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn heat_kernel_values() {
        let spec = QuadratureSpec::for_dim(1);
        let v = evaluate_density(&wp(&[0.0]), &wp(&[0.0]), 1.0, 1.0, &spec).unwrap();
        assert!((v.value - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        let v = evaluate_density(&wp(&[0.0]), &wp(&[1.0]), 2.0, 1.0, &spec).unwrap();
        assert!((v.value - (-0.25f64).exp() / (4.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn heat_kernel_derivative() {
        let spec = QuadratureSpec::for_dim(1);
        let (x, y, t) = (wp(&[0.3]), wp(&[-0.4]), 0.8);
        let u = evaluate_density(&x, &y, t, 1.0, &spec).unwrap().value;
        let d = density_derivative(&x, &y, t, 1.0, &[Axis::X(0)], &spec).unwrap().value;
        assert!((d + 0.7 / t * u).abs() < 1e-12);
        let d0 = density_derivative(&x, &x, t, 1.0, &[Axis::X(0)], &spec).unwrap().value;
        assert!(d0.abs() < 1e-14);
    }

    #[test]
    fn two_point_reference_values() {
        let spec = QuadratureSpec::for_dim(2);
        let o = wp(&[0.0, 0.0]);
        let v = evaluate_density(&o, &o, 0.5, 0.5, &spec).unwrap();
        assert!((v.value - 0.314_827_128_5).abs() < 1e-9, "{v:?}");
        let v = evaluate_density(&o, &o, 2.0, 2.0, &spec).unwrap();
        assert!((v.value - 0.140_292_133_835).abs() < 1e-10, "{v:?}");
        assert!(v.est_error < 1e-9 && v.imag.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let spec = QuadratureSpec::for_dim(2);
        assert!(evaluate_density(&wp(&[0.0, 0.0]), &wp(&[0.0]), 1.0, 1.0, &spec).is_err());
        assert!(evaluate_density(&wp(&[0.0]), &wp(&[0.0]), -1.0, 1.0, &spec).is_err());
        assert!(boundary_residual(&wp(&[1.0, 0.0]), 0, 1, &wp(&[0.0, 0.0]), 1.0, 1.0, &spec).is_err());
        let mut bad = spec.clone();
        bad.nodes_per_dim = 3;
        assert!(evaluate_density(&wp(&[0.0]), &wp(&[0.0]), 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn one_dimensional_expectations() {
        let spec = QuadratureSpec::for_dim(1);
        let x = wp(&[0.0]);
        let m = expectation(|y| y[0], &x, 1.3, 1.0, &spec).unwrap();
        assert!(m.value.abs() < 1e-10);
        let one = normalization(&x, 1.3, 1.0, &spec).unwrap();
        assert!((one.value - 1.0).abs() < 1e-9);
    }
}
