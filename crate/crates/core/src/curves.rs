//! Polynomial curves `P: R -> R^d`, their torsion and the affine arc-length
//! weight in the reduced monomial form `t^(2K/d(d+1))`.

use num_traits::{One, Signed, ToPrimitive, Zero};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AclError, Result};
use crate::poly::{format_rat, horner, parse_rat, rat, Rat, QPoly};

/// Exact polynomial curve with a cached derivative tower.
#[derive(Clone, Debug)]
pub struct PolyCurve {
    dim: usize,
    degree: usize,
    components: Vec<QPoly>,
    /// `tower[k][i]` holds the float coefficients of the `k`-th derivative of
    /// component `i`.
    tower: Vec<Vec<Vec<f64>>>,
    torsion: QPoly,
    torsion_f64: Vec<f64>,
}

/// JSON form of a curve: explicit coefficients or a named preset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CurveSpec {
    Preset { preset: String, dim: usize },
    Coeffs { dim: usize, coeffs: Vec<Vec<String>> },
}

impl PolyCurve {
    /// Builds a curve from component polynomials; fails if the torsion
    /// vanishes identically.
    pub fn new(components: Vec<QPoly>) -> Result<Self> {
        let dim = components.len();
        if dim < 2 {
            return Err(AclError::InvalidCurve("dimension must be at least 2".into()));
        }
        let degree = components.iter().filter_map(|c| c.degree()).max().unwrap_or(0);
        let mut exact = vec![components.clone()];
        for k in 1..=degree.max(dim) {
            let prev: Vec<QPoly> = exact[k - 1].iter().map(|p| p.derivative()).collect();
            exact.push(prev);
        }
        let rows: Vec<Vec<QPoly>> = (1..=dim).map(|k| exact[k].clone()).collect();
        let torsion = det_poly(&rows);
        if torsion.is_zero() {
            return Err(AclError::DegenerateCurve);
        }
        let tower = exact
            .iter()
            .map(|row| row.iter().map(|p| p.to_f64_coeffs()).collect())
            .collect();
        let torsion_f64 = torsion.to_f64_coeffs();
        Ok(PolyCurve { dim, degree, components, tower, torsion, torsion_f64 })
    }

    pub fn from_int_rows(rows: &[&[i64]]) -> Result<Self> {
        PolyCurve::new(rows.iter().map(|r| QPoly::from_ints(r)).collect())
    }

    /// `h(t) = (t, t^2, ..., t^d)`.
    pub fn moment(dim: usize) -> Self {
        let comps = (1..=dim)
            .map(|j| {
                let mut c = vec![Rat::zero(); j + 1];
                c[j] = Rat::one();
                QPoly::new(c)
            })
            .collect();
        PolyCurve::new(comps).expect("moment curve is non-degenerate")
    }

    pub fn from_spec(spec: &CurveSpec) -> Result<Self> {
        match spec {
            CurveSpec::Preset { preset, dim } if preset == "moment" => {
                if *dim < 2 {
                    return Err(AclError::InvalidCurve("dimension must be at least 2".into()));
                }
                Ok(PolyCurve::moment(*dim))
            }
            CurveSpec::Preset { preset, .. } => {
                Err(AclError::InvalidCurve(format!("unknown preset {preset}")))
            }
            CurveSpec::Coeffs { dim, coeffs } => {
                if coeffs.len() != *dim {
                    return Err(AclError::InvalidCurve(format!(
                        "expected {dim} coefficient rows, got {}",
                        coeffs.len()
                    )));
                }
                let comps: Result<Vec<QPoly>> = coeffs
                    .iter()
                    .map(|row| row.iter().map(|s| parse_rat(s)).collect::<Result<Vec<_>>>().map(QPoly::new))
                    .collect();
                PolyCurve::new(comps?)
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: CurveSpec =
            serde_json::from_str(s).map_err(|e| AclError::InvalidCurve(e.to_string()))?;
        PolyCurve::from_spec(&spec)
    }

    pub fn to_spec(&self) -> CurveSpec {
        let n = self.degree + 1;
        CurveSpec::Coeffs {
            dim: self.dim,
            coeffs: self
                .components
                .iter()
                .map(|p| (0..n).map(|i| format_rat(&p.coeff(i))).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> &[QPoly] {
        &self.components
    }

    /// `P^(order)(t)`; the zero vector once `order` exceeds the degree.
    pub fn eval(&self, t: f64, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, order, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, order: usize, out: &mut [f64]) {
        match self.tower.get(order) {
            Some(row) => {
                for (o, c) in out.iter_mut().zip(row) {
                    *o = horner(c, t);
                }
            }
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    pub fn eval_exact(&self, t: &Rat, order: usize) -> Vec<Rat> {
        self.components
            .iter()
            .map(|p| {
                let mut q = p.clone();
                for _ in 0..order {
                    q = q.derivative();
                }
                q.eval(t)
            })
            .collect()
    }

    /// `L_P = det(P', ..., P^(d))` with exact coefficients.
    pub fn torsion_poly(&self) -> &QPoly {
        &self.torsion
    }

    pub fn torsion(&self, t: f64) -> f64 {
        horner(&self.torsion_f64, t)
    }

    /// Torsion from point values only: Taylor coefficients at `t` are
    /// solved from `degree + 1` samples at spacing `h`, which recovers every
    /// derivative up to roundoff.
    pub fn torsion_fd(&self, t: f64, h: f64) -> f64 {
        let n = self.degree.max(self.dim) + 1;
        let offs: Vec<f64> = (0..n).map(|i| h * (i as f64 - (n - 1) as f64 / 2.0)).collect();
        let vander = DMatrix::from_fn(n, n, |i, k| offs[i].powi(k as i32));
        let lu = vander.lu();
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for c in 0..self.dim {
            let vals = DVector::from_iterator(n, offs.iter().map(|o| self.eval(t + o, 0)[c]));
            let taylor = lu.solve(&vals).expect("distinct nodes");
            let mut fact = 1.0;
            for k in 1..=self.dim {
                fact *= k as f64;
                m[(c, k - 1)] = taylor[k] * fact;
            }
        }
        m.determinant()
    }

    /// `|L_P(t)|^(2/d(d+1))`.
    pub fn affine_weight(&self, t: f64) -> f64 {
        let d = self.dim as f64;
        self.torsion(t).abs().powf(2.0 / (d * (d + 1.0)))
    }

    /// Curve `X∘P` for a rational matrix `X` (rows act on the output).
    pub fn linear_image(&self, x: &[Vec<Rat>]) -> Result<Self> {
        let comps = x
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.components)
                    .fold(QPoly::zero(), |acc, (a, p)| acc.add(&p.scale(a)))
            })
            .collect();
        PolyCurve::new(comps)
    }

    /// Curve `t ↦ s·P(a t + b)` with exact rationals.
    pub fn reparametrize(&self, a: &Rat, b: &Rat, s: &Rat) -> Result<Self> {
        PolyCurve::new(self.components.iter().map(|p| p.compose_affine(a, b).scale(s)).collect())
    }
}

/// Symbolic determinant by cofactor expansion (dimensions stay small).
pub fn det_poly(m: &[Vec<QPoly>]) -> QPoly {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    if n == 2 {
        return m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0]));
    }
    let mut acc = QPoly::zero();
    for col in 0..n {
        if m[0][col].is_zero() {
            continue;
        }
        let minor: Vec<Vec<QPoly>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, p)| p.clone()).collect())
            .collect();
        let term = m[0][col].mul(&det_poly(&minor));
        acc = if col % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    acc
}

/// Reduced affine arc-length weight `λ(t) = c·t^(2K/d(d+1))` on `(0, ∞)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WeightedMeasure {
    pub dim: usize,
    #[serde(rename = "monomialK")]
    pub k: u32,
    pub normalization: f64,
}

impl WeightedMeasure {
    pub fn new(dim: usize, k: u32) -> Self {
        WeightedMeasure { dim, k, normalization: 1.0 }
    }

    /// Affine arc-length of the moment curve: constant `(∏ j!)^(2/d(d+1))`.
    pub fn moment(dim: usize) -> Self {
        let l: f64 = (1..=dim).map(|j| (1..=j).product::<usize>() as f64).product();
        let d = dim as f64;
        WeightedMeasure { dim, k: 0, normalization: l.powf(2.0 / (d * (d + 1.0))) }
    }

    fn dd1(&self) -> i64 {
        (self.dim * (self.dim + 1)) as i64
    }

    /// Exponent `2K/d(d+1)` as an exact rational.
    pub fn exponent(&self) -> Rat {
        rat(2 * self.k as i64, self.dd1())
    }

    /// `κ = d(d+1)/(2K + d(d+1))`.
    pub fn kappa(&self) -> Rat {
        rat(self.dd1(), 2 * self.k as i64 + self.dd1())
    }

    pub fn gamma(&self) -> f64 {
        2.0 * self.k as f64 / self.dd1() as f64
    }

    pub fn kappa_f64(&self) -> f64 {
        self.kappa().to_f64().unwrap()
    }

    pub fn weight(&self, t: f64) -> f64 {
        if self.k == 0 {
            self.normalization
        } else {
            self.normalization * t.max(0.0).powf(self.gamma())
        }
    }

    /// `F(t) = c·κ·t^(1/κ)`, an antiderivative of the weight.
    pub fn antiderivative(&self, t: f64) -> f64 {
        let kap = self.kappa_f64();
        self.normalization * kap * t.powf(1.0 / kap)
    }

    /// `∫_a^b λ` in closed form.
    pub fn weight_integral(&self, a: f64, b: f64) -> Result<f64> {
        if a < 0.0 || b < a {
            return Err(AclError::Domain(format!("weight_integral needs 0 <= a <= b, got ({a}, {b})")));
        }
        Ok(if self.k == 0 {
            self.normalization * (b - a)
        } else {
            self.antiderivative(b) - self.antiderivative(a)
        })
    }

    /// Exact value when `K = 0` and the normalization is one.
    pub fn weight_integral_exact(&self, a: &Rat, b: &Rat) -> Option<Rat> {
        (self.k == 0 && self.normalization == 1.0 && !a.is_negative() && a <= b).then(|| b - a)
    }

    /// The point `s >= a` with `∫_a^s λ = mass`.
    pub fn advance(&self, a: f64, mass: f64) -> f64 {
        if self.k == 0 {
            return a + mass / self.normalization;
        }
        let kap = self.kappa_f64();
        (a.powf(1.0 / kap) + mass / (self.normalization * kap)).powf(kap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn torsion_from_point_values() {
        let c = PolyCurve::from_int_rows(&[&[0, 1, 0, 2], &[1, 0, -1, 0, 1], &[0, 0, 0, 3]]).unwrap();
        for t in [-1.3, -0.2, 0.0, 0.7, 2.1] {
            let exact = c.torsion(t);
            assert!((c.torsion_fd(t, 0.5) - exact).abs() <= 1e-9 * exact.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn eval_examples() {
        assert_eq!(PolyCurve::moment(2).eval(1.0, 0), vec![1.0, 1.0]);
        assert_eq!(PolyCurve::moment(3).eval(0.0, 2), vec![0.0, 2.0, 0.0]);
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 1]]).unwrap();
        assert_eq!(c.eval(2.0, 1), vec![1.0, 12.0]);
        assert_eq!(c.eval(2.0, 9), vec![0.0, 0.0]);
        assert_eq!(c.eval_exact(&rat(2, 1), 1), vec![rat(1, 1), rat(12, 1)]);
    }

    #[test]
    fn torsion_examples() {
        assert_eq!(*PolyCurve::moment(3).torsion_poly(), QPoly::from_ints(&[12]));
        assert_eq!(*PolyCurve::moment(4).torsion_poly(), QPoly::from_ints(&[288]));
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 1]]).unwrap();
        assert_eq!(*c.torsion_poly(), QPoly::from_ints(&[0, 6]));
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 0, 1]]).unwrap();
        assert_eq!(*c.torsion_poly(), QPoly::from_ints(&[0, 0, 12]));
        assert_eq!(
            PolyCurve::from_int_rows(&[&[0, 1], &[0, 1]]).unwrap_err(),
            AclError::DegenerateCurve
        );
    }

    #[test]
    fn json_round_trip() {
        let c = PolyCurve::from_json(r#"{"dim":2,"coeffs":[["0","1"],["0","0","0","1/2"]]}"#).unwrap();
        assert_eq!(*c.torsion_poly(), QPoly::new(vec![rat(0, 1), rat(3, 1)]));
        let back = PolyCurve::from_spec(&c.to_spec()).unwrap();
        assert_eq!(back.components(), c.components());
        let m = PolyCurve::from_json(r#"{"preset":"moment","dim":3}"#).unwrap();
        assert_eq!(m.dim(), 3);
        assert!(PolyCurve::from_json(r#"{"preset":"spiral","dim":3}"#).is_err());
    }

    #[test]
    fn affine_weight_of_moment() {
        let c = PolyCurve::moment(2);
        assert!((c.affine_weight(0.3) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((WeightedMeasure::moment(2).weight(0.7) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn weight_integral_examples() {
        let m0 = WeightedMeasure::new(2, 0);
        assert_eq!(m0.weight_integral(0.25, 0.75).unwrap(), 0.5);
        assert_eq!(m0.weight_integral_exact(&rat(1, 4), &rat(3, 4)), Some(rat(1, 2)));
        let m3 = WeightedMeasure::new(2, 3);
        assert_eq!(m3.kappa(), rat(1, 2));
        assert!((m3.weight_integral(0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(m3.weight_integral(-1.0, 1.0).is_err());
    }

    #[test]
    fn kappa_range() {
        for d in 2..6 {
            for k in 0..8 {
                let m = WeightedMeasure::new(d, k);
                let kap = m.kappa();
                assert!(kap > Rat::zero() && kap <= Rat::one());
                assert_eq!(kap == Rat::one(), k == 0);
            }
        }
    }

    #[test]
    fn advance_inverts_integral() {
        let m = WeightedMeasure::new(3, 2);
        for &(a, mass) in &[(0.0, 0.3), (0.2, 0.01), (0.9, 1e-4)] {
            let s = m.advance(a, mass);
            assert!((m.weight_integral(a, s).unwrap() - mass).abs() < 1e-14);
        }
    }

    fn random_curve(rng: &mut ChaCha8Rng, d: usize, n: usize) -> PolyCurve {
        loop {
            let comps = (0..d)
                .map(|_| QPoly::new((0..=n).map(|_| rat(rng.gen_range(-5..=5), rng.gen_range(1..=3))).collect()))
                .collect();
            if let Ok(c) = PolyCurve::new(comps) {
                return c;
            }
        }
    }

    #[test]
    fn torsion_matches_numeric_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let d = rng.gen_range(2..=3);
            let c = random_curve(&mut rng, d, 5);
            for _ in 0..100 {
                let t: f64 = rng.gen_range(-2.0..2.0);
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| c.eval(t, j + 1)[i]);
                let num = m.determinant();
                let ex = c.torsion(t);
                assert!((num - ex).abs() <= 1e-9 * ex.abs().max(1.0), "{num} vs {ex}");
            }
        }
    }

    #[test]
    fn torsion_affine_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let c = random_curve(&mut rng, 3, 4);
            let x: Vec<Vec<Rat>> = (0..3).map(|_| (0..3).map(|_| rat(rng.gen_range(-3..=3), 1)).collect()).collect();
            let rows: Vec<Vec<QPoly>> = x.iter().map(|r| r.iter().map(|v| QPoly::constant(v.clone())).collect()).collect();
            let detx = det_poly(&rows).coeff(0);
            match c.linear_image(&x) {
                Ok(img) => assert_eq!(*img.torsion_poly(), c.torsion_poly().scale(&detx)),
                Err(e) => {
                    assert_eq!(e, AclError::DegenerateCurve);
                    assert!(detx.is_zero());
                }
            }
        }
    }
}
