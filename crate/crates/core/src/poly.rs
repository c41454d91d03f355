//! Dense univariate polynomials over exact rationals, with Sturm-sequence
//! real root isolation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{AclError, Result};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"p/q"`, `"p"` or a decimal literal such as `"-0.25"`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| AclError::InvalidCurve(format!("{s}: {e}")))?;
        let d = BigInt::from_str(d.trim()).map_err(|e| AclError::InvalidCurve(format!("{s}: {e}")))?;
        if d.is_zero() {
            return Err(AclError::InvalidCurve(format!("{s}: zero denominator")));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let neg = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let n = BigInt::from_str(&digits).map_err(|e| AclError::InvalidCurve(format!("{s}: {e}")))?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rat::new(n, d);
        return Ok(if neg { -r } else { r });
    }
    BigInt::from_str(s)
        .map(Rat::from_integer)
        .map_err(|e| AclError::InvalidCurve(format!("{s}: {e}")))
}

pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Coefficients are stored lowest degree first, without trailing zeros.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct QPoly {
    coeffs: Vec<Rat>,
}

impl Serialize for QPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<String> = self.coeffs.iter().map(format_rat).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<String> = Vec::deserialize(d)?;
        let c: Result<Vec<Rat>> = v.iter().map(|s| parse_rat(s)).collect();
        c.map(QPoly::new).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for QPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => format_rat(c),
                1 => format!("({})t", format_rat(c)),
                _ => format!("({})t^{i}", format_rat(c)),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl QPoly {
    pub fn new(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        QPoly { coeffs }
    }

    pub fn from_ints(c: &[i64]) -> Self {
        QPoly::new(c.iter().map(|&v| Rat::from_integer(BigInt::from(v))).collect())
    }

    pub fn zero() -> Self {
        QPoly { coeffs: vec![] }
    }

    pub fn constant(c: Rat) -> Self {
        QPoly::new(vec![c])
    }

    /// The monomial `t`.
    pub fn x() -> Self {
        QPoly::new(vec![Rat::zero(), Rat::one()])
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> Rat {
        self.coeffs.last().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeff(&self, i: usize) -> Rat {
        self.coeffs.get(i).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn eval(&self, t: &Rat) -> Rat {
        let mut acc = Rat::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(rat_to_f64).collect()
    }

    pub fn eval_f64(&self, t: f64) -> f64 {
        horner(&self.to_f64_coeffs(), t)
    }

    pub fn derivative(&self) -> Self {
        QPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * Rat::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    pub fn add(&self, o: &QPoly) -> QPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        QPoly::new((0..n).map(|i| self.coeff(i) + o.coeff(i)).collect())
    }

    pub fn sub(&self, o: &QPoly) -> QPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        QPoly::new((0..n).map(|i| self.coeff(i) - o.coeff(i)).collect())
    }

    pub fn scale(&self, s: &Rat) -> QPoly {
        QPoly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, o: &QPoly) -> QPoly {
        if self.is_zero() || o.is_zero() {
            return QPoly::zero();
        }
        let mut out = vec![Rat::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        QPoly::new(out)
    }

    /// `p(a t + b)`.
    pub fn compose_affine(&self, a: &Rat, b: &Rat) -> QPoly {
        let lin = QPoly::new(vec![b.clone(), a.clone()]);
        let mut acc = QPoly::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(&lin).add(&QPoly::constant(c.clone()));
        }
        acc
    }

    pub fn div_rem(&self, d: &QPoly) -> (QPoly, QPoly) {
        assert!(!d.is_zero(), "division by zero polynomial");
        let dd = d.degree().unwrap();
        let lead = d.lead();
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (QPoly::zero(), self.clone());
        }
        let mut quot = vec![Rat::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] / &lead;
            if !c.is_zero() {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    rem[k + j] -= &c * dc;
                }
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (QPoly::new(quot), QPoly::new(rem))
    }

    pub fn monic(&self) -> QPoly {
        if self.is_zero() {
            return QPoly::zero();
        }
        self.scale(&(Rat::one() / self.lead()))
    }

    pub fn gcd(&self, o: &QPoly) -> QPoly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    /// Yun's square-free decomposition: returns `(multiplicity, factor)` pairs
    /// with square-free, pairwise coprime, non-constant factors.
    pub fn squarefree_decomposition(&self) -> Vec<(usize, QPoly)> {
        let mut out = Vec::new();
        if self.degree().unwrap_or(0) == 0 {
            return out;
        }
        let f = self.monic();
        let df = f.derivative();
        let a0 = f.gcd(&df);
        let mut b = f.div_rem(&a0).0;
        let mut c = df.div_rem(&a0).0;
        let mut d = c.sub(&b.derivative());
        let mut i = 1;
        while b.degree().unwrap_or(0) > 0 {
            let a = b.gcd(&d);
            if a.degree().unwrap_or(0) > 0 {
                out.push((i, a.clone()));
            }
            b = b.div_rem(&a).0;
            c = d.div_rem(&a).0;
            d = c.sub(&b.derivative());
            i += 1;
        }
        out
    }

    pub fn sturm_sequence(&self) -> Vec<QPoly> {
        let mut seq = vec![self.clone(), self.derivative()];
        while !seq.last().unwrap().is_zero() {
            let n = seq.len();
            let (_, r) = seq[n - 2].div_rem(&seq[n - 1]);
            // Positive rescaling keeps sign changes intact and tames growth.
            let r = if r.is_zero() { r } else { r.scale(&(Rat::one() / r.lead().abs())) };
            seq.push(r.scale(&-Rat::one()));
        }
        seq.pop();
        seq
    }

    /// Cauchy bound: every real root lies in `(-B, B)`.
    pub fn root_bound(&self) -> Rat {
        let lead = self.lead().abs();
        let m = self
            .coeffs
            .iter()
            .take(self.coeffs.len().saturating_sub(1))
            .map(|c| c.abs() / &lead)
            .fold(Rat::zero(), |a, b| if b > a { b } else { a });
        m + Rat::one()
    }

    /// Distinct real roots of `self` with multiplicities, sorted, each as an
    /// isolating interval refined to width below `tol`.
    pub fn real_roots(&self, tol: f64) -> Vec<RealRoot> {
        let mut out = Vec::new();
        for (mult, factor) in self.squarefree_decomposition() {
            for iv in isolate_squarefree(&factor) {
                let iv = refine_root(&factor, iv, tol);
                out.push(RealRoot { lo: iv.0.clone(), hi: iv.1.clone(), multiplicity: mult });
            }
        }
        out.sort_by(|a, b| a.lo.cmp(&b.lo));
        out
    }

    /// Number of distinct real roots in the half-open interval `(a, b]`.
    pub fn count_roots(&self, a: &Rat, b: &Rat) -> usize {
        let sf = self.squarefree_part();
        if sf.degree().unwrap_or(0) == 0 {
            return 0;
        }
        let seq = sf.sturm_sequence();
        sign_changes(&seq, a).saturating_sub(sign_changes(&seq, b))
    }

    pub fn squarefree_part(&self) -> QPoly {
        if self.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative());
        self.div_rem(&g).0.monic()
    }
}

pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealRoot {
    pub lo: Rat,
    pub hi: Rat,
    pub multiplicity: usize,
}

impl RealRoot {
    pub fn value(&self) -> f64 {
        0.5 * (rat_to_f64(&self.lo) + rat_to_f64(&self.hi))
    }
}

fn sign_changes(seq: &[QPoly], t: &Rat) -> usize {
    let mut last = 0i8;
    let mut n = 0;
    for p in seq {
        let v = p.eval(t);
        let s = if v.is_positive() {
            1
        } else if v.is_negative() {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                n += 1;
            }
            last = s;
        }
    }
    n
}

/// Isolating open intervals for a square-free polynomial.
fn isolate_squarefree(p: &QPoly) -> Vec<(Rat, Rat)> {
    if p.degree().unwrap_or(0) == 0 {
        return vec![];
    }
    let seq = p.sturm_sequence();
    let b = p.root_bound();
    let mut out = Vec::new();
    let mut stack = vec![(-b.clone(), b)];
    while let Some((lo, hi)) = stack.pop() {
        let n = sign_changes(&seq, &lo).saturating_sub(sign_changes(&seq, &hi));
        if n == 0 {
            continue;
        }
        if n == 1 {
            out.push((lo, hi));
            continue;
        }
        // Split points are never roots, so every interval stays open at both ends.
        let mut mid = (&lo + &hi) / rat(2, 1);
        let mut k = 3;
        while p.eval(&mid).is_zero() {
            mid = (&lo * rat(k - 1, 1) + &hi) / rat(k, 1);
            k += 1;
        }
        stack.push((lo, mid.clone()));
        stack.push((mid, hi));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn refine_root(p: &QPoly, (mut lo, mut hi): (Rat, Rat), tol: f64) -> (Rat, Rat) {
    if lo == hi {
        return (lo, hi);
    }
    if p.eval(&hi).is_zero() {
        return (hi.clone(), hi);
    }
    let slo = p.eval(&lo).is_positive();
    let two = rat(2, 1);
    while rat_to_f64(&(&hi - &lo)) > tol {
        let mid = (&lo + &hi) / &two;
        let v = p.eval(&mid);
        if v.is_zero() {
            return (mid.clone(), mid);
        }
        if v.is_positive() == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rat("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rat("-2").unwrap(), rat(-2, 1));
        assert_eq!(parse_rat("-0.25").unwrap(), rat(-1, 4));
        assert!(parse_rat("1/0").is_err());
    }

    #[test]
    fn division_identity() {
        let a = QPoly::from_ints(&[1, -3, 0, 2, 5]);
        let b = QPoly::from_ints(&[2, 1, 1]);
        let (q, r) = a.div_rem(&b);
        assert_eq!(q.mul(&b).add(&r), a);
        assert!(r.degree().unwrap_or(0) < 2);
    }

    #[test]
    fn roots_of_product() {
        // (t-1)^2 (t+2) (t^2+1)
        let p = QPoly::from_ints(&[1, -1])
            .mul(&QPoly::from_ints(&[-1, 1]))
            .mul(&QPoly::from_ints(&[2, 1]))
            .mul(&QPoly::from_ints(&[1, 0, 1]));
        let roots = p.real_roots(1e-12);
        assert_eq!(roots.len(), 2);
        assert!((roots[0].value() + 2.0).abs() < 1e-10);
        assert_eq!(roots[0].multiplicity, 1);
        assert!((roots[1].value() - 1.0).abs() < 1e-10);
        assert_eq!(roots[1].multiplicity, 2);
    }

    #[test]
    fn irrational_roots() {
        let p = QPoly::from_ints(&[-2, 0, 1]);
        let r = p.real_roots(1e-13);
        assert_eq!(r.len(), 2);
        assert!((r[1].value() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.count_roots(&rat(0, 1), &rat(2, 1)), 1);
    }

    #[test]
    fn compose_affine_matches_eval() {
        let p = QPoly::from_ints(&[3, 0, -1, 2]);
        let q = p.compose_affine(&rat(3, 1), &rat(2, 1));
        for t in [-1i64, 0, 2, 5] {
            let tr = rat(t, 1);
            assert_eq!(q.eval(&tr), p.eval(&(rat(3, 1) * &tr + rat(2, 1))));
        }
    }

    #[test]
    fn squarefree_factors() {
        let p = QPoly::from_ints(&[0, 0, 0, 1]).mul(&QPoly::from_ints(&[-1, 1]));
        let sf = p.squarefree_decomposition();
        assert_eq!(sf.len(), 2);
        assert!(sf.iter().any(|(m, f)| *m == 3 && *f == QPoly::x()));
        assert!(sf.iter().any(|(m, f)| *m == 1 && *f == QPoly::from_ints(&[-1, 1])));
    }
}
