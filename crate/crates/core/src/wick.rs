//! Graded space-time monomials `t^k0 ξ^k` and their Gaussian expectations.
//!
//! The degree `k0 + |k|/2` is kept as an exact half-integer so that grading
//! comparisons never touch floating point. Exact moments come from the
//! double-factorial formula; an independent tensor-product Gauss–Legendre
//! oracle integrates the same quantities numerically.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::gauss_legendre_on;

/// An exact half-integer, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    /// The default truncation cutoff `3/2`.
    pub const THREE_HALVES: HalfInt = HalfInt(3);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(v: i64) -> Self {
        HalfInt(2 * v)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Exponent vector of the monomial `t^k0 · ξ_1^k1 ⋯ ξ_n^kn`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    pub k0: i32,
    pub kspace: Vec<u32>,
}

impl MultiIndex {
    pub fn new(k0: i32, kspace: Vec<u32>) -> Self {
        assert!(!kspace.is_empty(), "multi-index needs at least one space variable");
        Self { k0, kspace }
    }

    /// The constant monomial in `n` space variables.
    pub fn constant(n: usize) -> Self {
        Self::new(0, vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.kspace.len()
    }

    pub fn spatial_order(&self) -> u32 {
        self.kspace.iter().sum()
    }

    pub fn degree(&self) -> HalfInt {
        degree(self)
    }

    pub fn is_even(&self) -> bool {
        self.kspace.iter().all(|k| k % 2 == 0)
    }

    /// Product of monomials.
    pub fn mul(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim());
        MultiIndex {
            k0: self.k0 + other.k0,
            kspace: self.kspace.iter().zip(&other.kspace).map(|(a, b)| a + b).collect(),
        }
    }

    /// `t^k0 ξ^k` evaluated at a point.
    pub fn eval(&self, t: f64, xi: &[f64]) -> f64 {
        self.kspace
            .iter()
            .zip(xi)
            .fold(t.powi(self.k0), |acc, (&k, &x)| acc * x.powi(k as i32))
    }
}

/// `d(k) = k0 + ½ Σ k_i`.
pub fn degree(k: &MultiIndex) -> HalfInt {
    HalfInt(2 * k.k0 as i64 + k.spatial_order() as i64)
}

/// `(k - 1)!!` with `(-1)!! = 1`, for even `k <= 32`.
fn double_factorial_of_predecessor(k: u32) -> Result<u64> {
    if k > 33 {
        return Err(Error::ExponentTooLarge(k));
    }
    let mut acc: u64 = 1;
    let mut j = k as i64 - 1;
    while j > 1 {
        acc *= j as u64;
        j -= 2;
    }
    Ok(acc)
}

/// `t^{d/2}` for a non-negative twice-degree, exact in the scaling law.
fn t_power(t: f64, twice: i64) -> f64 {
    debug_assert!(twice >= 0);
    let whole = t.powi((twice / 2) as i32);
    if twice % 2 == 1 {
        whole * t.sqrt()
    } else {
        whole
    }
}

/// Exact `G_t(p_k) = ∫ (2πt)^{-n/2} e^{-|ξ|²/2t} t^k0 ξ^k dξ`.
pub fn gaussian_moment(k: &MultiIndex, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let d = degree(k);
    if d.0 < 0 {
        return Err(Error::NegativeDegree { twice_degree: d.0 });
    }
    if let Some(&big) = k.kspace.iter().find(|&&e| e > 33) {
        return Err(Error::ExponentTooLarge(big));
    }
    if !k.is_even() {
        return Ok(0.0);
    }
    let mut coeff = 1.0;
    for &e in &k.kspace {
        coeff *= double_factorial_of_predecessor(e)? as f64;
    }
    Ok(t_power(t, d.0) * coeff)
}

const ORACLE_START_NODES: usize = 16;
const ORACLE_MAX_NODES: usize = 4096;
const ORACLE_REL_TOL: f64 = 1e-12;

fn check_oracle_domain(n: usize, t: f64, radius: f64) -> Result<()> {
    if n > 4 {
        return Err(Error::OracleDimension(n));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let required = 8.0 * (t * n as f64).sqrt();
    if radius < required * (1.0 - 1e-12) {
        return Err(Error::OracleRadius { radius, required });
    }
    Ok(())
}

/// One-dimensional `∫_{-R}^{R} φ_t(ξ) ξ^k dξ` with node doubling; returns
/// the integral and the integral of its absolute integrand (the scale used
/// by the stopping rule).
fn oracle_1d(k: u32, t: f64, radius: f64) -> Result<(f64, f64)> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let rule = |m: usize| {
        let (x, w) = gauss_legendre_on(m, -radius, radius);
        let mut s = 0.0;
        let mut a = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let v = wi * norm * (-xi * xi / (2.0 * t)).exp() * xi.powi(k as i32);
            s += v;
            a += v.abs();
        }
        (s, a)
    };
    let mut m = ORACLE_START_NODES;
    let mut prev = rule(m);
    while m < ORACLE_MAX_NODES {
        m *= 2;
        let next = rule(m);
        if (next.0 - prev.0).abs() <= ORACLE_REL_TOL * next.1.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::OracleNoConvergence(m))
}

/// Tensor-product Gauss–Legendre evaluation of `G_t(p_k)` over the cube
/// `[-radius, radius]^n`. The monomial integrand factorizes, so the tensor
/// rule is evaluated as a product of one-dimensional rules.
pub fn gaussian_moment_oracle(k: &MultiIndex, t: f64, radius: f64) -> Result<f64> {
    check_oracle_domain(k.dim(), t, radius)?;
    let mut value = t.powi(k.k0);
    for &e in &k.kspace {
        value *= oracle_1d(e, t, radius)?.0;
    }
    Ok(value)
}

/// Gaussian expectation of an arbitrary integrand by full tensor-product
/// Gauss–Legendre quadrature over `[-radius, radius]^n`, doubling nodes per
/// axis until the relative change drops below `1e-12`.
pub fn gaussian_expectation_oracle(
    n: usize,
    t: f64,
    radius: f64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    check_oracle_domain(n, t, radius)?;
    let norm = (2.0 * std::f64::consts::PI * t).powf(-(n as f64) / 2.0);
    let max_nodes = match n {
        1 => ORACLE_MAX_NODES,
        2 => 512,
        _ => 64,
    };
    let eval = |m: usize| {
        let (x, w) = gauss_legendre_on(m, -radius, radius);
        let g: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| wi * (-xi * xi / (2.0 * t)).exp()).collect();
        let mut idx = vec![0usize; n];
        let mut point = vec![0.0; n];
        let (mut s, mut a) = (0.0, 0.0);
        loop {
            let mut wt = norm;
            for d in 0..n {
                point[d] = x[idx[d]];
                wt *= g[idx[d]];
            }
            let v = wt * f(&point);
            s += v;
            a += v.abs();
            let mut d = 0;
            loop {
                if d == n {
                    return (s, a);
                }
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    };
    let mut m = ORACLE_START_NODES;
    let mut prev = eval(m);
    while m < max_nodes {
        m *= 2;
        let next = eval(m);
        if (next.0 - prev.0).abs() <= ORACLE_REL_TOL * next.1.max(f64::MIN_POSITIVE) {
            return Ok(next.0);
        }
        prev = next;
    }
    Err(Error::OracleNoConvergence(m))
}

/// All admissible indices in `n` space variables with `0 <= d(k) <= max_degree`
/// and spatial order `|k| <= max_spatial_order`.
pub fn admissible_indices(n: usize, max_degree: HalfInt, max_spatial_order: u32) -> Vec<MultiIndex> {
    let mut spatial = Vec::new();
    let mut current = vec![0u32; n];
    fn rec(pos: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == current.len() {
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[pos] = v;
            rec(pos + 1, left - v, current, out);
        }
        current[pos] = 0;
    }
    rec(0, max_spatial_order, &mut current, &mut spatial);
    let mut out = Vec::new();
    for ks in spatial {
        let order: i64 = ks.iter().map(|&v| v as i64).sum();
        // 0 <= 2 k0 + order <= 2 max
        let k0_min = (-order).div_euclid(2) + if (-order).rem_euclid(2) != 0 { 1 } else { 0 };
        let k0_max = (max_degree.twice() - order).div_euclid(2);
        for k0 in k0_min..=k0_max {
            out.push(MultiIndex::new(k0 as i32, ks.clone()));
        }
    }
    out.sort();
    out
}

/// Sparse real polynomial in `(t, ξ_1..ξ_n)` with possibly negative powers of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        assert!(n >= 1);
        Self { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::constant(n), c);
        p
    }

    pub fn monomial(k: MultiIndex, c: f64) -> Self {
        let mut p = Self::zero(k.dim());
        p.add_term(k, c);
        p
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut p = Self::zero(n);
        for (k, c) in terms {
            if k.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: k.dim() });
            }
            p.add_term(k, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &c)| (k, c))
    }

    pub fn coefficient(&self, k: &MultiIndex) -> f64 {
        self.terms.get(k).copied().unwrap_or(0.0)
    }

    /// Adds `c · p_k`, merging coefficients and dropping exact zeros.
    pub fn add_term(&mut self, k: MultiIndex, c: f64) {
        assert_eq!(k.dim(), self.n, "term dimension mismatch");
        let entry = self.terms.entry(k).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (k, c) in other.terms() {
            out.add_term(k.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (k, c) in self.terms() {
            out.add_term(k.clone(), s * c);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n);
        let mut out = Polynomial::zero(self.n);
        for (ka, ca) in self.terms() {
            for (kb, cb) in other.terms() {
                out.add_term(ka.mul(kb), ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, t: f64, xi: &[f64]) -> f64 {
        self.terms().map(|(k, c)| c * k.eval(t, xi)).sum()
    }

    /// Terms of exactly degree `d`.
    pub fn homogeneous_part(&self, d: HalfInt) -> Polynomial {
        self.filter(|k| degree(k) == d)
    }

    /// Distinct degrees present, ascending.
    pub fn degrees(&self) -> Vec<HalfInt> {
        let mut ds: Vec<HalfInt> = self.terms.keys().map(degree).collect();
        ds.sort();
        ds.dedup();
        ds
    }

    fn filter(&self, keep: impl Fn(&MultiIndex) -> bool) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().filter(|(k, _)| keep(k)).map(|(k, &c)| (k.clone(), c)).collect(),
        }
    }

    /// Termwise exact Gaussian expectation `G_t(f)`.
    pub fn gaussian_integral(&self, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (k, c) in self.terms() {
            acc += c * gaussian_moment(k, t)?;
        }
        Ok(acc)
    }

    /// Termwise quadrature oracle for `G_t(f)`.
    pub fn gaussian_integral_oracle(&self, t: f64, radius: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (k, c) in self.terms() {
            acc += c * gaussian_moment_oracle(k, t, radius)?;
        }
        Ok(acc)
    }
}

/// Projection onto the subalgebra spanned by monomials with all-even space
/// exponents.
pub fn project_even(f: &Polynomial) -> Polynomial {
    f.filter(MultiIndex::is_even)
}

/// Drops every term of degree `>= cutoff` (the quotient by the ideal of
/// degree `>= cutoff`). Rejects polynomials with negative-degree terms.
pub fn truncate_degree(f: &Polynomial, cutoff: HalfInt) -> Result<Polynomial> {
    if let Some(k) = f.terms.keys().find(|k| degree(k).0 < 0) {
        return Err(Error::NegativeDegree { twice_degree: degree(k).0 });
    }
    Ok(f.filter(|k| degree(k) < cutoff))
}

/// Short-time increment of `G_t(fh)/G_t(h) - G_0(fh)/G_0(h)`, namely
/// `G_t(f_1)`, for `f = f_0 + f_{1/2} + f_1` with constant `f_0` and
/// `h = 1 + h_1`.
pub fn ratio_asymptotics(f: &Polynomial, h: &Polynomial, t: f64) -> Result<f64> {
    if f.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: h.dim() });
    }
    let n = f.dim();
    let constant = MultiIndex::constant(n);
    for (k, _) in f.terms() {
        let d = degree(k);
        if d.0 < 0 || d.0 > 2 {
            return Err(Error::Structure(format!("f has a term of degree {d}; expected 0, 1/2 or 1")));
        }
        if d.0 == 0 && *k != constant {
            return Err(Error::Structure("the degree-0 part of f must be a constant".into()));
        }
    }
    if h.coefficient(&constant) != 1.0 {
        return Err(Error::Structure("h must have constant term 1".into()));
    }
    for (k, _) in h.terms() {
        if *k != constant && degree(k).0 != 2 {
            return Err(Error::Structure(format!(
                "h may only contain 1 and degree-1 terms, found degree {}",
                degree(k)
            )));
        }
    }
    f.homogeneous_part(HalfInt::from_int(1)).gaussian_integral(t)
}

/// `|oracle(f) − G_t(Q(q(f)))|`: the error of replacing a Gaussian integral by
/// the even part of its truncation below degree `3/2`.
pub fn quotient_error(f: &Polynomial, t: f64, radius: f64) -> Result<f64> {
    let reduced = project_even(&truncate_degree(f, HalfInt::THREE_HALVES)?);
    Ok((f.gaussian_integral_oracle(t, radius)? - reduced.gaussian_integral(t)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(k0: i32, ks: &[u32]) -> MultiIndex {
        MultiIndex::new(k0, ks.to_vec())
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degree(&mi(1, &[2, 0])), HalfInt::from_int(2));
        assert_eq!(degree(&mi(0, &[0, 0, 0])), HalfInt::ZERO);
        assert_eq!(degree(&mi(-1, &[3, 1])), HalfInt::from_int(1));
        assert_eq!(degree(&mi(0, &[1])).to_string(), "1/2");
    }

    #[test]
    fn moment_examples() {
        assert!((gaussian_moment(&mi(0, &[2]), 0.01).unwrap() - 0.01).abs() < 1e-18);
        assert_eq!(gaussian_moment(&mi(0, &[1, 2]), 0.3).unwrap(), 0.0);
        assert!((gaussian_moment(&mi(0, &[2, 4]), 0.1).unwrap() - 0.003).abs() < 1e-17);
    }

    #[test]
    fn moment_rejects_negative_degree_and_huge_exponents() {
        assert!(matches!(gaussian_moment(&mi(-2, &[2]), 0.1), Err(Error::NegativeDegree { .. })));
        assert!(matches!(gaussian_moment(&mi(0, &[34]), 0.1), Err(Error::ExponentTooLarge(34))));
        assert!(gaussian_moment(&mi(0, &[32]), 0.1).is_ok());
    }

    #[test]
    fn oracle_examples() {
        let v = gaussian_moment_oracle(&mi(0, &[2]), 0.01, 1.0).unwrap();
        assert!((v - 0.01).abs() < 1e-10);
        let t: f64 = 0.05;
        let r = 8.0 * (2.0 * t).sqrt();
        let v = gaussian_moment_oracle(&mi(0, &[4, 2]), t, r).unwrap();
        assert!((v - 3.0 * t.powi(3)).abs() < 1e-10);
        let v = gaussian_moment_oracle(&mi(1, &[0]), 0.2, 8.0 * 0.2f64.sqrt()).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_bad_domains() {
        let k = mi(0, &[2, 2, 2, 2, 2]);
        assert!(matches!(gaussian_moment_oracle(&k, 0.1, 10.0), Err(Error::OracleDimension(5))));
        assert!(matches!(
            gaussian_moment_oracle(&mi(0, &[2]), 0.1, 0.5),
            Err(Error::OracleRadius { .. })
        ));
    }

    #[test]
    fn full_tensor_oracle_agrees_with_factorized_oracle() {
        let t: f64 = 0.02;
        let r = 8.0 * (2.0 * t).sqrt();
        let k = mi(-1, &[2, 2]);
        let full = gaussian_expectation_oracle(2, t, r, |x| k.eval(t, x)).unwrap();
        assert!((full - gaussian_moment_oracle(&k, t, r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn project_even_examples() {
        let f = Polynomial::from_terms(1, [(mi(0, &[1]), 1.0), (mi(0, &[2]), 2.0)]).unwrap();
        assert_eq!(project_even(&f), Polynomial::monomial(mi(0, &[2]), 2.0));
        let c = Polynomial::constant(2, 5.0);
        assert_eq!(project_even(&c), c);
        let odd = Polynomial::monomial(mi(1, &[1]), 3.0);
        assert!(project_even(&odd).is_zero());
    }

    #[test]
    fn truncate_examples() {
        let f = Polynomial::from_terms(1, [(mi(0, &[0]), 1.0), (mi(0, &[2]), 1.0), (mi(0, &[4]), 1.0)])
            .unwrap();
        let g = truncate_degree(&f, HalfInt::THREE_HALVES).unwrap();
        assert_eq!(
            g,
            Polynomial::from_terms(1, [(mi(0, &[0]), 1.0), (mi(0, &[2]), 1.0)]).unwrap()
        );
        let h = Polynomial::monomial(mi(1, &[2]), 1.0);
        assert!(truncate_degree(&h, HalfInt::THREE_HALVES).unwrap().is_zero());
        let cross = Polynomial::monomial(mi(0, &[1, 1]), 1.0);
        assert_eq!(truncate_degree(&cross, HalfInt::THREE_HALVES).unwrap(), cross);
        let bad = Polynomial::monomial(mi(-1, &[0]), 1.0);
        assert!(truncate_degree(&bad, HalfInt::THREE_HALVES).is_err());
    }

    #[test]
    fn zero_coefficients_are_not_stored() {
        let mut p = Polynomial::constant(1, 1.0);
        p.add_term(MultiIndex::constant(1), -1.0);
        assert!(p.is_zero());
    }

    #[test]
    fn ratio_examples() {
        let f = Polynomial::from_terms(1, [(mi(0, &[0]), 2.0), (mi(0, &[2]), 1.0)]).unwrap();
        let h = Polynomial::from_terms(1, [(mi(0, &[0]), 1.0), (mi(0, &[2]), 1.0)]).unwrap();
        assert!((ratio_asymptotics(&f, &h, 0.1).unwrap() - 0.1).abs() < 1e-15);
        let c = Polynomial::constant(1, 7.0);
        assert_eq!(ratio_asymptotics(&c, &h, 0.5).unwrap(), 0.0);
        let f3 = Polynomial::from_terms(2, [(mi(0, &[0, 0]), 3.0), (mi(0, &[2, 0]), 1.0), (mi(0, &[0, 2]), 1.0)])
            .unwrap();
        let one = Polynomial::constant(2, 1.0);
        assert!((ratio_asymptotics(&f3, &one, 0.01).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn ratio_rejects_structural_violations() {
        let h = Polynomial::constant(1, 1.0);
        let nonconst0 = Polynomial::monomial(mi(-1, &[2]), 1.0);
        assert!(matches!(ratio_asymptotics(&nonconst0, &h, 0.1), Err(Error::Structure(_))));
        let deg2 = Polynomial::monomial(mi(0, &[4]), 1.0);
        assert!(ratio_asymptotics(&deg2, &h, 0.1).is_err());
        let bad_h = Polynomial::constant(1, 2.0);
        assert!(ratio_asymptotics(&Polynomial::constant(1, 1.0), &bad_h, 0.1).is_err());
    }

    #[test]
    fn admissible_enumeration_respects_bounds() {
        let all = admissible_indices(2, HalfInt::from_int(3), 6);
        assert!(all.iter().all(|k| {
            let d = degree(k);
            d.twice() >= 0 && d.twice() <= 6 && k.spatial_order() <= 6
        }));
        assert!(all.contains(&mi(-3, &[6, 0])));
        assert!(all.contains(&mi(3, &[0, 0])));
        assert!(!all.contains(&mi(-4, &[6, 0])));
    }
}
