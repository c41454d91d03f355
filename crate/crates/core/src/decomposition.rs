//! Splitting the parameter line into intervals on which the torsion is
//! comparable to a centred monomial and the geometric inequality for `J_P`
//! holds with a sampled constant.

use num_traits::One;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{PolyCurve, WeightedMeasure};
use crate::error::{AclError, Result};
use crate::jacobian::{jp, vandermonde};
use crate::poly::Rat;
use crate::seed::stream_rng;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DecompInterval {
    pub lo: f64,
    pub hi: f64,
    pub b: f64,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "D")]
    pub d_const: f64,
    #[serde(rename = "cLow")]
    pub c_low: f64,
    #[serde(rename = "cHigh")]
    pub c_high: f64,
    #[serde(rename = "geoConstant")]
    pub geo_constant: f64,
    /// Witness tuple at which the sampled minimum was attained.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<f64>,
}

impl DecompInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn comparability_ratio(&self) -> f64 {
        self.c_high / self.c_low
    }
}

/// Comparability target `cHigh/cLow`.
pub const COMPARABILITY_TARGET: f64 = 4.0;

#[derive(Clone, Copy, Debug)]
struct Root {
    value: f64,
    multiplicity: u32,
}

/// Sample points for comparability statistics: a uniform interior grid plus
/// geometric clusters toward both endpoints.
fn comparability_samples(lo: f64, hi: f64) -> Vec<f64> {
    let w = hi - lo;
    let mut pts: Vec<f64> = (0..256).map(|i| lo + w * (i as f64 + 0.5) / 256.0).collect();
    for j in 1..=20 {
        let s = w * 0.5f64.powi(j + 8);
        pts.push(lo + s);
        pts.push(hi - s);
    }
    pts
}

fn nearest_outside(roots: &[Root], lo: f64, hi: f64) -> Option<Root> {
    let mut best: Option<(f64, Root)> = None;
    for r in roots {
        if r.value > lo && r.value < hi {
            continue;
        }
        let dist = if r.value <= lo { lo - r.value } else { r.value - hi };
        // Strict comparison keeps the leftmost root on ties.
        if best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, *r));
        }
    }
    best.map(|(_, r)| r)
}

fn fit_piece(curve: &PolyCurve, roots: &[Root], lo: f64, hi: f64, default_b: f64) -> DecompInterval {
    let (b, k) = match nearest_outside(roots, lo, hi) {
        Some(r) => (r.value, r.multiplicity),
        None => (default_b, 0),
    };
    let pts = comparability_samples(lo, hi);
    let logs: Vec<f64> = pts
        .iter()
        .map(|&t| curve.torsion(t).abs().ln() - k as f64 * (t - b).abs().ln())
        .filter(|v| v.is_finite())
        .collect();
    let log_d = logs.iter().sum::<f64>() / logs.len().max(1) as f64;
    let (mut c_low, mut c_high) = (f64::INFINITY, 0.0f64);
    for l in &logs {
        let r = (l - log_d).exp();
        c_low = c_low.min(r);
        c_high = c_high.max(r);
    }
    if logs.is_empty() {
        c_low = 0.0;
    }
    DecompInterval {
        lo,
        hi,
        b,
        k,
        d_const: log_d.exp(),
        c_low,
        c_high,
        geo_constant: 0.0,
        witness: vec![],
    }
}

/// Breaks the line at the real roots of the torsion, clips to
/// `[-clip, clip]` and bisects pieces until the torsion is within a factor
/// four of `D|t-b|^K` on each.
pub fn decompose(curve: &PolyCurve, clip: f64, max_intervals: usize) -> Result<Vec<DecompInterval>> {
    let torsion = curve.torsion_poly();
    if torsion.is_zero() {
        return Err(AclError::DegenerateCurve);
    }
    let roots: Vec<Root> = torsion
        .real_roots(1e-15)
        .iter()
        .map(|r| Root { value: r.value(), multiplicity: r.multiplicity as u32 })
        .collect();
    let mut breaks: Vec<f64> = roots.iter().map(|r| r.value).filter(|v| v.abs() < clip).collect();
    if roots.is_empty() {
        // Constant-sign torsion without real roots: split into half-lines.
        breaks.push(0.0);
    }
    let mut edges = vec![-clip];
    edges.extend(breaks);
    edges.push(clip);
    let mut pending: Vec<DecompInterval> = edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| fit_piece(curve, &roots, w[0], w[1], 0.0))
        .collect();
    let mut done = Vec::new();
    while let Some(iv) = pending.pop() {
        if iv.comparability_ratio() <= COMPARABILITY_TARGET {
            done.push(iv);
            continue;
        }
        if done.len() + pending.len() + 2 > max_intervals || iv.width() < 1e-9 * clip {
            let worst = pending
                .iter()
                .chain(std::iter::once(&iv))
                .max_by(|a, b| a.comparability_ratio().total_cmp(&b.comparability_ratio()))
                .unwrap();
            return Err(AclError::ComparabilityFailure {
                lo: worst.lo,
                hi: worst.hi,
                ratio: worst.comparability_ratio(),
            });
        }
        let mid = 0.5 * (iv.lo + iv.hi);
        pending.push(fit_piece(curve, &roots, iv.lo, mid, iv.b));
        pending.push(fit_piece(curve, &roots, mid, iv.hi, iv.b));
    }
    done.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    Ok(done)
}

/// Ratio `|J_P(t)| / (∏|L_P(t_i)|^(1/d) |V(t)|)`, or `None` when the
/// Vandermonde factor is below `floor`.
pub fn geometric_ratio(curve: &PolyCurve, tuple: &[f64], floor: f64) -> Option<f64> {
    let v = vandermonde(tuple);
    if v.abs() < floor {
        return None;
    }
    let d = curve.dim() as f64;
    let weights: f64 = tuple.iter().map(|&t| curve.torsion(t).abs().powf(1.0 / d)).product();
    Some(jp(curve, tuple).abs() / (weights * v.abs()))
}

const CHUNK: usize = 4096;

/// Samples ordered tuples in the interval and records the minimum
/// geometric ratio.
pub fn certify_geometric(
    curve: &PolyCurve,
    interval: &DecompInterval,
    samples: usize,
    seed: u64,
) -> Result<DecompInterval> {
    let d = curve.dim();
    let (lo, hi) = (interval.lo, interval.hi);
    let floor = 1e-12 * (hi - lo).powi((d * (d - 1) / 2) as i32);
    let chunks = samples.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut best = (f64::INFINITY, vec![]);
            let mut tuple = vec![0.0; d];
            for _ in 0..n {
                for t in tuple.iter_mut() {
                    *t = lo + (hi - lo) * rng.gen::<f64>();
                }
                tuple.sort_by(f64::total_cmp);
                if let Some(r) = geometric_ratio(curve, &tuple, floor) {
                    if r < best.0 {
                        best = (r, tuple.clone());
                    }
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, vec![]),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    if best.0 < 1e-9 {
        return Err(AclError::GeometricInequalityViolation { ratio: best.0, witness: best.1 });
    }
    let mut out = interval.clone();
    out.geo_constant = if best.0.is_finite() { best.0 } else { 0.0 };
    out.witness = best.1;
    Ok(out)
}

/// Normalized setting for one interval.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub curve: PolyCurve,
    pub measure: WeightedMeasure,
    pub interval: (f64, f64),
    /// `t = b + sign·width·u` maps the reduced parameter `u` back.
    pub sign: f64,
    pub width: f64,
    pub center: f64,
}

/// Translates `b` to the origin, reflects so the interval lies in
/// `(0, ∞)`, rescales it to unit length and scales the curve so that
/// `|L| ≈ u^K`.
pub fn reduce_to_unit_interval(curve: &PolyCurve, iv: &DecompInterval) -> Result<Reduced> {
    let d = curve.dim() as i32;
    let sign = if iv.b <= iv.lo { 1.0 } else { -1.0 };
    let w = iv.width();
    let exact = |v: f64| Rat::from_float(v).ok_or_else(|| AclError::Domain(format!("non-finite {v}")));
    let a = exact(sign * w)?;
    let b = exact(iv.b)?;
    let n = (d * (d + 1) / 2) as f64;
    let target = (1.0 / (iv.d_const * w.powf(iv.k as f64 + n))).powf(1.0 / d as f64);
    let s = if (target - 1.0).abs() < 1e-12 { Rat::one() } else { exact(target)? };
    let reduced = curve.reparametrize(&a, &b, &s)?;
    let (u0, u1) = if sign > 0.0 {
        ((iv.lo - iv.b) / w, (iv.hi - iv.b) / w)
    } else {
        ((iv.b - iv.hi) / w, (iv.b - iv.lo) / w)
    };
    Ok(Reduced {
        curve: reduced,
        measure: WeightedMeasure::new(curve.dim(), iv.k),
        interval: (u0.max(0.0), u1),
        sign,
        width: w,
        center: iv.b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_cubed() -> PolyCurve {
        PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 1]]).unwrap()
    }

    #[test]
    fn moment_curve_half_lines() {
        let iv = decompose(&PolyCurve::moment(3), 8.0, 16).unwrap();
        assert_eq!(iv.len(), 2);
        for i in &iv {
            assert_eq!(i.k, 0);
            assert!((i.d_const - 12.0).abs() < 1e-9);
            assert!((i.c_low - 1.0).abs() < 1e-12 && (i.c_high - 1.0).abs() < 1e-12);
        }
        assert_eq!((iv[0].lo, iv[0].hi, iv[1].lo, iv[1].hi), (-8.0, 0.0, 0.0, 8.0));
    }

    #[test]
    fn cubic_curve_root_at_origin() {
        let iv = decompose(&t_cubed(), 8.0, 16).unwrap();
        assert_eq!(iv.len(), 2);
        for i in &iv {
            assert_eq!(i.k, 1);
            assert_eq!(i.b, 0.0);
            assert!((i.d_const - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quartic_double_root() {
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 0, 1]]).unwrap();
        let iv = decompose(&c, 8.0, 16).unwrap();
        assert!(iv.iter().all(|i| i.k == 2 && i.b == 0.0));
    }

    #[test]
    fn subdivision_reaches_target() {
        // Torsion 6t + 20t^3 switches from linear to cubic growth.
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 1, 0, 1]]).unwrap();
        let iv = decompose(&c, 8.0, 64).unwrap();
        assert!(iv.len() > 2);
        for i in &iv {
            assert!(i.comparability_ratio() <= COMPARABILITY_TARGET);
        }
        for w in iv.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        assert_eq!(iv.first().unwrap().lo, -8.0);
        assert_eq!(iv.last().unwrap().hi, 8.0);
    }

    #[test]
    fn tiny_budget_fails() {
        let c = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 0, 1, 0, 1]]).unwrap();
        assert!(matches!(decompose(&c, 8.0, 2), Err(AclError::ComparabilityFailure { .. })));
    }

    #[test]
    fn certify_moment_ratio_is_one() {
        let c = PolyCurve::moment(2);
        let iv = &decompose(&c, 8.0, 4).unwrap()[1];
        let cert = certify_geometric(&c, iv, 5000, 7).unwrap();
        assert!((cert.geo_constant - 1.0).abs() < 1e-9);
    }

    #[test]
    fn certify_cubic_matches_closed_form() {
        let c = t_cubed();
        let iv = &decompose(&c, 8.0, 4).unwrap()[1];
        let cert = certify_geometric(&c, iv, 5000, 3).unwrap();
        assert!(cert.geo_constant >= 1.0 - 1e-9);
        let w = &cert.witness;
        let closed = (w[0] + w[1]) / (2.0 * (w[0] * w[1]).sqrt());
        assert!((cert.geo_constant - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn certification_is_thread_count_independent() {
        let c = PolyCurve::from_int_rows(&[&[0, 1, 1], &[0, 0, 0, 1]]).unwrap();
        let iv = &decompose(&c, 4.0, 32).unwrap()[0];
        let a = certify_geometric(&c, iv, 20000, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| certify_geometric(&c, iv, 20000, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn reduction_examples() {
        let c = t_cubed();
        let base = DecompInterval {
            lo: 0.0,
            hi: 1.0,
            b: 0.0,
            k: 1,
            d_const: 6.0,
            c_low: 1.0,
            c_high: 1.0,
            geo_constant: 1.0,
            witness: vec![],
        };
        let r = reduce_to_unit_interval(&c, &base).unwrap();
        assert_eq!(r.interval, (0.0, 1.0));
        for u in [0.1, 0.5, 0.9] {
            assert!((r.curve.torsion(u).abs() - u).abs() < 1e-9);
        }
        let refl = DecompInterval { lo: -1.0, hi: 0.0, ..base.clone() };
        let r = reduce_to_unit_interval(&c, &refl).unwrap();
        assert_eq!(r.interval, (0.0, 1.0));
        assert_eq!(r.sign, -1.0);
        let far = DecompInterval { lo: 2.0, hi: 5.0, ..base };
        let r = reduce_to_unit_interval(&c, &far).unwrap();
        assert!((r.interval.0 - 2.0 / 3.0).abs() < 1e-15 && (r.interval.1 - 5.0 / 3.0).abs() < 1e-15);
        for u in [0.7, 1.0, 1.6] {
            let ratio = r.curve.torsion(u).abs() / u;
            assert!((ratio - 1.0).abs() < 1e-9, "{ratio}");
        }
    }
}
