//! Monte Carlo n-point motions of the Beta random walk in random
//! environment, in diffusive scaling ε·X(⌊t/ε²⌋).
//!
//! Two routes produce the same annealed law:
//! - `Route::Annealed` integrates the environment out. Walkers alone on a
//!   site flip fair coins; a group of k walkers on one site sends j of them
//!   right with the Beta-binomial probability C(k,j)B(a+j,a+k−j)/B(a,a).
//! - `Route::Quenched` draws ω_{x,s} ~ Beta(a,a) lazily from a hash of
//!   (seed, path, x, s) and lets every walker on that site flip its own
//!   coin with that bias.
//!
//! Each path owns a ChaCha8 stream (seed, stream = path index), and path
//! results are reduced in fixed chunks, so results do not depend on the
//! thread count.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::density::{expectation, Expectation, QuadratureSpec};
use crate::error::{Error, Result};
use crate::measure::WeylPoint;
use crate::par;

/// Paths per reduction chunk.
const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Annealed,
    Quenched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwreConfig {
    pub theta: f64,
    pub eps: f64,
    pub n: usize,
    pub t: f64,
    pub paths: usize,
    pub seed: u64,
    pub route: Route,
}

impl RwreConfig {
    pub fn new(n: usize, theta: f64, eps: f64, t: f64, paths: usize, seed: u64) -> Self {
        Self { theta, eps, n, t, paths, seed, route: Route::Annealed }
    }

    pub fn steps(&self) -> u64 {
        // Guard against 1/0.02² landing just below an integer.
        (self.t / (self.eps * self.eps) + 1e-9).floor() as u64
    }

    /// Beta shape a = θε.
    pub fn shape(&self) -> f64 {
        self.theta * self.eps
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("need at least one walker"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::domain("theta must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain("eps must lie in (0, 1)"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::domain("t must be positive"));
        }
        if self.steps() < 100 {
            return Err(Error::domain(format!("floor(t/eps^2) = {} < 100 steps", self.steps())));
        }
        if self.paths == 0 {
            return Err(Error::domain("need at least one path"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalResult {
    pub estimate: f64,
    pub std_error: f64,
    pub paths_used: usize,
}

/// A Beta(a,a) draw kept in log space; for small a nearly all mass sits
/// within e^{-1/a} of 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaDraw {
    pub log_q: f64,
    pub log_1mq: f64,
}

impl BetaDraw {
    /// q rounded into the open interval (0, 1).
    pub fn q(&self) -> f64 {
        let q = if self.log_q < self.log_1mq { self.log_q.exp() } else { -self.log_1mq.exp_m1() };
        q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }
}

/// ln G for G ~ Gamma(a, 1), via G(a) = G(a+1)·U^{1/a}.
fn log_gamma_draw<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(a + 1.0, 1.0).expect("shape > 1").sample(rng);
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    g.ln() + u.ln() / a
}

/// q = G₁/(G₁+G₂) with both Gammas in log space.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, rng: &mut R) -> BetaDraw {
    let l1 = log_gamma_draw(a, rng);
    let l2 = log_gamma_draw(a, rng);
    let m = l1.max(l2);
    let log_sum = m + ((l1 - m).exp() + (l2 - m).exp()).ln();
    BetaDraw { log_q: l1 - log_sum, log_1mq: l2 - log_sum }
}

/// P(j of k walkers step right) for j = 0..=k, annealed over Beta(a,a):
/// C(k,j) Π_{i<j}(a+i) Π_{i<k−j}(a+i) / Π_{i<k}(2a+i).
pub fn split_law(k: usize, a: f64) -> Vec<f64> {
    let rising = |m: usize, s: f64| (0..m).map(|i| s + i as f64).product::<f64>();
    let den = rising(k, 2.0 * a);
    let mut binom = 1.0;
    (0..=k)
        .map(|j| {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            binom * rising(j, a) * rising(k - j, a) / den
        })
        .collect()
}

/// Fair bits drawn 64 at a time.
struct Bits {
    word: u64,
    left: u32,
}

impl Bits {
    fn new() -> Self {
        Self { word: 0, left: 0 }
    }

    fn next<R: RngCore>(&mut self, rng: &mut R) -> bool {
        if self.left == 0 {
            self.word = rng.next_u64();
            self.left = 64;
        }
        let b = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        b
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Cumulative split laws for group sizes 0..=n.
fn split_tables(n: usize, a: f64) -> Vec<Vec<f64>> {
    (0..=n)
        .map(|k| {
            let mut acc = 0.0;
            split_law(k, a).into_iter().map(|p| {
                acc += p;
                acc
            }).collect()
        })
        .collect()
}

/// One annealed path. Walkers share parity, so they never cross without
/// meeting; positions stay sorted (decreasing) and groups are runs.
fn annealed_path(cfg: &RwreConfig, tables: &[Vec<f64>], path: u64, pos: &mut [i64]) {
    let mut rng = path_rng(cfg.seed, path);
    let mut bits = Bits::new();
    pos.iter_mut().for_each(|p| *p = 0);
    let n = pos.len();
    for _ in 0..cfg.steps() {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && pos[j] == pos[i] {
                j += 1;
            }
            let k = j - i;
            if k == 1 {
                pos[i] += if bits.next(&mut rng) { 1 } else { -1 };
            } else {
                let u: f64 = rng.random();
                let cdf = &tables[k];
                let right = cdf.iter().position(|&c| u < c).unwrap_or(k);
                for (r, p) in pos[i..j].iter_mut().enumerate() {
                    *p += if r < right { 1 } else { -1 };
                }
            }
            i = j;
        }
    }
}

/// Environment bias at a space-time site, pure in (seed, path, x, step).
#[derive(Clone, Copy, Debug)]
pub struct QuenchedEnv {
    pub seed: u64,
    pub path: u64,
    pub shape: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl QuenchedEnv {
    pub fn bias(&self, x: i64, step: u64) -> f64 {
        let h = splitmix(splitmix(splitmix(self.seed) ^ self.path) ^ (x as u64)) ^ step;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(h));
        sample_beta(self.shape, &mut rng).q()
    }
}

/// Advances labelled walkers one step. Every walker on a site uses the same
/// bias (recorded in `used`) with its own coin.
pub fn quenched_step<R: Rng>(pos: &mut [i64], step: u64, env: &QuenchedEnv, rng: &mut R, used: &mut Vec<f64>) {
    used.clear();
    used.resize(pos.len(), f64::NAN);
    for i in 0..pos.len() {
        if !used[i].is_nan() {
            continue;
        }
        let q = env.bias(pos[i], step);
        for j in i..pos.len() {
            if pos[j] == pos[i] {
                used[j] = q;
            }
        }
    }
    for (p, &q) in pos.iter_mut().zip(used.iter()) {
        *p += if rng.random::<f64>() < q { 1 } else { -1 };
    }
}

fn quenched_path(cfg: &RwreConfig, path: u64, start: &[i64], pos: &mut [i64]) {
    let mut rng = path_rng(cfg.seed ^ 0x5bd1_e995, path);
    let env = QuenchedEnv { seed: cfg.seed, path, shape: cfg.shape() };
    pos.copy_from_slice(start);
    let mut used = Vec::with_capacity(pos.len());
    for s in 0..cfg.steps() {
        quenched_step(pos, s, &env, &mut rng, &mut used);
    }
}

/// Scaled terminal tuple, sorted decreasingly.
fn scaled(pos: &[i64], eps: f64, out: &mut [f64]) {
    for (o, &p) in out.iter_mut().zip(pos) {
        *o = eps * p as f64;
    }
    out.sort_by(|a, b| b.total_cmp(a));
}

/// Runs `cfg.paths` paths from lattice start `start` and hands each scaled
/// ordered tuple to `visit`, which folds it into a per-chunk accumulator.
fn run_paths<A, F, V>(cfg: &RwreConfig, start: &[i64], init: F, visit: V) -> Result<Vec<A>>
where
    A: Send,
    F: Fn() -> A + Sync + Send,
    V: Fn(&mut A, &[f64]) + Sync + Send,
{
    cfg.validate()?;
    if start.len() != cfg.n {
        return Err(Error::domain("start length differs from n"));
    }
    if cfg.route == Route::Annealed && start.iter().any(|&s| s != 0) {
        return Err(Error::domain("the annealed route starts all walkers at the origin"));
    }
    if start.iter().any(|&s| (s - start[0]).rem_euclid(2) != 0) {
        return Err(Error::domain("start positions must share parity"));
    }
    let tables = split_tables(cfg.n, cfg.shape());
    let chunks = cfg.paths.div_ceil(CHUNK);
    Ok(par::map_indices(chunks, |c| {
        let mut acc = init();
        let mut pos = vec![0i64; cfg.n];
        let mut y = vec![0.0; cfg.n];
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(cfg.paths);
        for p in lo..hi {
            match cfg.route {
                Route::Annealed => annealed_path(cfg, &tables, p as u64, &mut pos),
                Route::Quenched => quenched_path(cfg, p as u64, start, &mut pos),
            }
            scaled(&pos, cfg.eps, &mut y);
            visit(&mut acc, &y);
        }
        acc
    }))
}

/// Scaled ordered terminal tuples, one per path.
pub fn simulate_paths(cfg: &RwreConfig) -> Result<Vec<Vec<f64>>> {
    let chunks = run_paths(cfg, &vec![0; cfg.n], Vec::new, |acc: &mut Vec<Vec<f64>>, y| acc.push(y.to_vec()))?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Sample means and standard errors of several functions over one set of paths.
pub fn empirical_expectations(fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)], cfg: &RwreConfig) -> Result<Vec<EmpiricalResult>> {
    empirical_expectations_from(fs, cfg, &vec![0; cfg.n])
}

/// As `empirical_expectations`, from lattice start positions (quenched route).
pub fn empirical_expectations_from(
    fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    cfg: &RwreConfig,
    start: &[i64],
) -> Result<Vec<EmpiricalResult>> {
    let m = fs.len();
    let chunks = run_paths(cfg, start, || vec![(0.0f64, 0.0f64); m], |acc: &mut Vec<(f64, f64)>, y| {
        for (a, f) in acc.iter_mut().zip(fs) {
            let v = f(y);
            a.0 += v;
            a.1 += v * v;
        }
    })?;
    let n = cfg.paths as f64;
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let s = par::pairwise_sum(&chunks.iter().map(|c| c[j].0).collect::<Vec<_>>());
        let s2 = par::pairwise_sum(&chunks.iter().map(|c| c[j].1).collect::<Vec<_>>());
        if !(s.is_finite() && s2.is_finite()) {
            return Err(Error::NonFinite("test function"));
        }
        let mean = s / n;
        let var = if cfg.paths > 1 { ((s2 - s * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        out.push(EmpiricalResult { estimate: mean, std_error: (var / n).sqrt(), paths_used: cfg.paths });
    }
    Ok(out)
}

pub fn empirical_expectation<F>(f: F, cfg: &RwreConfig) -> Result<EmpiricalResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(empirical_expectations(&[&f], cfg)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mc: EmpiricalResult,
    pub quadrature: Expectation,
    /// (mc − quadrature)/√(SE² + est_error²). The denominator is floored at
    /// 1e-9·max(1, |quadrature|) so constant test functions, which have no
    /// Monte Carlo noise, score 0 rather than amplifying rounding.
    pub z: f64,
}

pub fn z_score(mc: &EmpiricalResult, quad: &Expectation) -> f64 {
    let den = (mc.std_error.powi(2) + quad.est_error.powi(2)).sqrt().max(1e-9 * quad.value.abs().max(1.0));
    (mc.estimate - quad.value) / den
}

/// MC against quadrature from the origin.
pub fn compare<F>(f: F, t: f64, theta: f64, cfg: &RwreConfig, spec: &QuadratureSpec) -> Result<Comparison>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if (cfg.t - t).abs() > 1e-12 || (cfg.theta - theta).abs() > 1e-12 {
        return Err(Error::domain("config t/theta differ from the comparison point"));
    }
    let mc = empirical_expectation(&f, cfg)?;
    let x = WeylPoint::new(vec![0.0; cfg.n])?;
    let quadrature = expectation(&f, &x, t, theta, spec)?;
    Ok(Comparison { mc, quadrature, z: z_score(&mc, &quadrature) })
}

/// Symmetric test functions on the chamber, by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// f ≡ 1.
    Unit,
    /// exp(−Σ yᵢ²).
    Gauss,
    /// exp(−(y₁ − yₙ)²).
    Gap,
    /// Π cos yᵢ.
    Cos,
    /// Linear ramp from 1 to 0 as y₁ − yₙ crosses [0.95, 1.05].
    Ramp,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Unit, Preset::Gauss, Preset::Gap, Preset::Cos, Preset::Ramp];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Unit => "unit",
            Preset::Gauss => "gauss",
            Preset::Gap => "gap",
            Preset::Cos => "cos",
            Preset::Ramp => "ramp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown preset {s:?}; expected unit, gauss, gap, cos or ramp")))
    }

    pub fn eval(self, y: &[f64]) -> f64 {
        let spread = y.first().copied().unwrap_or(0.0) - y.last().copied().unwrap_or(0.0);
        match self {
            Preset::Unit => 1.0,
            Preset::Gauss => (-y.iter().map(|v| v * v).sum::<f64>()).exp(),
            Preset::Gap => (-spread * spread).exp(),
            Preset::Cos => y.iter().map(|v| v.cos()).product(),
            Preset::Ramp => ((1.05 - spread) / 0.1).clamp(0.0, 1.0),
        }
    }
}

/// Per-path tuples as CSV with header y1..yn.
pub fn write_paths_csv<W: Write>(paths: &[Vec<f64>], w: &mut W) -> std::io::Result<()> {
    let n = paths.first().map_or(0, |p| p.len());
    let header: Vec<String> = (1..=n).map(|i| format!("y{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for p in paths {
        let row: Vec<String> = p.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_law_sums_to_one_and_matches_pair_formula() {
        for a in [0.01, 0.3, 2.0] {
            for k in 1..6 {
                let s: f64 = split_law(k, a).iter().sum();
                assert!((s - 1.0).abs() < 1e-13);
            }
            let p = split_law(2, a);
            assert!((p[1] - a / (2.0 * a + 1.0)).abs() < 1e-15);
            assert!((p[2] - (a + 1.0) / (2.0 * (2.0 * a + 1.0))).abs() < 1e-15);
        }
        assert_eq!(split_law(1, 0.2), vec![0.5, 0.5]);
    }

    #[test]
    fn beta_draws_stay_inside_and_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = 0.005;
        let m = 20000;
        let mut s = 0.0;
        for _ in 0..m {
            let d = sample_beta(a, &mut rng);
            let q = d.q();
            assert!(q > 0.0 && q < 1.0);
            assert!((d.log_q.exp() + d.log_1mq.exp() - 1.0).abs() < 1e-12);
            s += q;
        }
        // sd of Beta(a,a) is about 1/2 here
        assert!((s / m as f64 - 0.5).abs() < 3.0 * 0.5 / (m as f64).sqrt());
    }

    #[test]
    fn colliding_walkers_share_one_bias() {
        let env = QuenchedEnv { seed: 11, path: 4, shape: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pos = vec![2, 0, 2, -4];
        let mut used = Vec::new();
        quenched_step(&mut pos, 7, &env, &mut rng, &mut used);
        assert_eq!(used[0], used[2]);
        assert_eq!(used[0], env.bias(2, 7));
        assert_ne!(used[0], used[1]);
        assert_eq!(env.bias(2, 7), env.bias(2, 7));
        assert_ne!(env.bias(2, 7), env.bias(2, 8));
    }

    #[test]
    fn step_count_is_robust_to_rounding() {
        assert_eq!(RwreConfig::new(2, 1.0, 0.02, 1.0, 1, 0).steps(), 2500);
        assert!(RwreConfig::new(2, 1.0, 0.2, 1.0, 1, 0).validate().is_err());
    }

    #[test]
    fn constant_function_is_exact() {
        let cfg = RwreConfig::new(2, 1.0, 0.05, 1.0, 500, 9);
        let r = empirical_expectation(|_| 1.0, &cfg).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn tuples_are_ordered_with_lattice_parity() {
        let cfg = RwreConfig::new(3, 0.7, 0.1, 1.0, 50, 5);
        for y in simulate_paths(&cfg).unwrap() {
            assert!(y.windows(2).all(|w| w[0] >= w[1]));
            for v in y {
                assert_eq!(((v / 0.1).round() as i64).rem_euclid(2), 0);
            }
        }
    }
}
