//! Exact arithmetic: Gaussian rationals and sparse multivariate polynomials
//! with rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// re + i·im with both parts exact rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GaussianRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussianRational {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Self { re, im }
    }

    pub fn real(re: BigRational) -> Self {
        Self { re, im: BigRational::zero() }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        Self { re: rat_int(re), im: rat_int(im) }
    }

    pub fn i() -> Self {
        Self::from_ints(0, 1)
    }

    pub fn conj(&self) -> Self {
        Self { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn norm_sqr(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    /// None for zero.
    pub fn inv(&self) -> Option<Self> {
        let d = self.norm_sqr();
        if d.is_zero() {
            return None;
        }
        Some(Self { re: &self.re / &d, im: -(&self.im / &d) })
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Zero for GaussianRational {
    fn zero() -> Self {
        Self::from_ints(0, 0)
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for GaussianRational {
    fn one() -> Self {
        Self::from_ints(1, 0)
    }
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}i", self.re, self.im)
    }
}

impl Serialize for GaussianRational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'a> Add<&'a GaussianRational> for &'a GaussianRational {
    type Output = GaussianRational;
    fn add(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational { re: &self.re + &o.re, im: &self.im + &o.im }
    }
}

impl<'a> Sub<&'a GaussianRational> for &'a GaussianRational {
    type Output = GaussianRational;
    fn sub(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational { re: &self.re - &o.re, im: &self.im - &o.im }
    }
}

impl<'a> Mul<&'a GaussianRational> for &'a GaussianRational {
    type Output = GaussianRational;
    fn mul(self, o: &GaussianRational) -> GaussianRational {
        GaussianRational {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }
}

impl<'a> Div<&'a GaussianRational> for &'a GaussianRational {
    type Output = GaussianRational;
    /// Panics on division by zero; callers test denominators first.
    fn div(self, o: &GaussianRational) -> GaussianRational {
        self * &o.inv().expect("division by zero Gaussian rational")
    }
}

impl Neg for GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational { re: -self.re, im: -self.im }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for GaussianRational {
            type Output = GaussianRational;
            fn $m(self, o: GaussianRational) -> GaussianRational {
                (&self).$m(&o)
            }
        }
        impl<'a> $tr<&'a GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $m(self, o: &GaussianRational) -> GaussianRational {
                (&self).$m(o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl AddAssign<&GaussianRational> for GaussianRational {
    fn add_assign(&mut self, o: &GaussianRational) {
        self.re += &o.re;
        self.im += &o.im;
    }
}

impl MulAssign<&GaussianRational> for GaussianRational {
    fn mul_assign(&mut self, o: &GaussianRational) {
        *self = &*self * o;
    }
}

/// Exponent vector of a monomial.
pub type Monomial = Vec<u16>;

/// Sparse polynomial over Q in `nvars` variables. Zero coefficients are
/// never stored, so structural equality is polynomial equality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigRational::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars);
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, BigRational::one());
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &[u16]) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        debug_assert_eq!(m.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn degree_in(&self, i: usize) -> u16 {
        self.terms.keys().map(|m| m[i]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().map(|&e| e as u32).sum()).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        Self { nvars: self.nvars, terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect() }
    }

    /// Substitutes variable i ↦ variable perm[i].
    pub fn permute_vars(&self, perm: &[usize]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            let mut e = vec![0; self.nvars];
            for (i, &d) in m.iter().enumerate() {
                e[perm[i]] += d;
            }
            out.add_term(e, c.clone());
        }
        out
    }

    pub fn eval(&self, point: &[BigRational]) -> BigRational {
        assert_eq!(point.len(), self.nvars);
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (x, &d) in point.iter().zip(m) {
                if d > 0 {
                    t *= num_traits::pow(x.clone(), d as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Exact quotient by (x_b − x_a); Err carries the nonzero remainder.
    pub fn div_by_difference(&self, b: usize, a: usize) -> std::result::Result<Self, Self> {
        assert!(a != b && a < self.nvars && b < self.nvars);
        // Group by the power of x_b: p = Σ_d c_d x_b^d, then synthetic
        // division by the root x_b = x_a.
        let deg = self.degree_in(b) as usize;
        let mut c: Vec<MultiPoly> = vec![Self::zero(self.nvars); deg + 1];
        for (m, v) in &self.terms {
            let mut e = m.clone();
            let d = e[b] as usize;
            e[b] = 0;
            c[d].add_term(e, v.clone());
        }
        let xa = Self::var(self.nvars, a);
        let mut q: Vec<MultiPoly> = vec![Self::zero(self.nvars); deg.max(1)];
        let mut carry = Self::zero(self.nvars);
        for d in (1..=deg).rev() {
            carry = &c[d] + &(&carry * &xa);
            q[d - 1] = carry.clone();
        }
        let rem = &c[0] + &(&carry * &xa);
        if !rem.is_zero() {
            return Err(rem);
        }
        let mut out = Self::zero(self.nvars);
        for (d, qd) in q.into_iter().enumerate() {
            for (m, v) in qd.terms {
                let mut e = m;
                e[b] += d as u16;
                out.add_term(e, v);
            }
        }
        Ok(out)
    }
}

impl<'a> Add<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn add(self, o: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        out += o;
        out
    }
}

impl<'a> Sub<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn sub(self, o: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        out -= o;
        out
    }
}

impl AddAssign<&MultiPoly> for MultiPoly {
    fn add_assign(&mut self, o: &MultiPoly) {
        assert_eq!(self.nvars, o.nvars);
        for (m, c) in &o.terms {
            self.add_term(m.clone(), c.clone());
        }
    }
}

impl SubAssign<&MultiPoly> for MultiPoly {
    fn sub_assign(&mut self, o: &MultiPoly) {
        assert_eq!(self.nvars, o.nvars);
        for (m, c) in &o.terms {
            self.add_term(m.clone(), -c.clone());
        }
    }
}

impl<'a> Mul<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn mul(self, o: &MultiPoly) -> MultiPoly {
        assert_eq!(self.nvars, o.nvars);
        let mut out = MultiPoly::zero(self.nvars);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let e: Monomial = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

impl Neg for MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        MultiPoly { nvars: self.nvars, terms: self.terms.into_iter().map(|(m, c)| (m, -c)).collect() }
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let is_const = m.iter().all(|&e| e == 0);
            if !mag.is_one() || is_const {
                write!(f, "{mag}")?;
            }
            for (i, &e) in m.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "k{}", i + 1)?,
                    _ => write!(f, "k{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Elementary symmetric polynomial e_m in `nvars` variables.
pub fn elementary_symmetric(nvars: usize, m: usize) -> MultiPoly {
    let mut p = MultiPoly::zero(nvars);
    if m > nvars {
        return p;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let mut e = vec![0u16; nvars];
        for &i in &idx {
            e[i] = 1;
        }
        p.add_term(e, BigRational::one());
        // next m-subset in lexicographic order
        let mut j = m;
        while j > 0 && idx[j - 1] == nvars - m + j - 1 {
            j -= 1;
        }
        if j == 0 {
            break;
        }
        idx[j - 1] += 1;
        for l in j..m {
            idx[l] = idx[l - 1] + 1;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_field_ops() {
        let a = GaussianRational::new(rat(1, 2), rat(-3, 4));
        let b = GaussianRational::from_ints(2, 5);
        let q = &a / &b;
        assert_eq!(&q * &b, a);
        assert!(GaussianRational::zero().inv().is_none());
        assert_eq!(&GaussianRational::i() * &GaussianRational::i(), -GaussianRational::one());
    }

    #[test]
    fn poly_arithmetic_and_division() {
        let x = MultiPoly::var(2, 0);
        let y = MultiPoly::var(2, 1);
        let d = &y - &x;
        let p = &(&d * &d) * &(&x + &y);
        let q = p.div_by_difference(1, 0).unwrap();
        assert_eq!(q, &d * &(&x + &y));
        assert!((&x + &y).div_by_difference(1, 0).is_err());
        assert_eq!(p.total_degree(), 3);
        assert_eq!(elementary_symmetric(4, 2).num_terms(), 6);
        assert_eq!(elementary_symmetric(3, 0), MultiPoly::one(3));
    }

    #[test]
    fn display_is_readable() {
        let x = MultiPoly::var(2, 0);
        let y = MultiPoly::var(2, 1);
        let p = &(&x * &y).scale(&rat_int(2)) - &MultiPoly::one(2);
        assert_eq!(p.to_string(), "2k1k2 - 1");
    }
}
