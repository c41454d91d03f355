//! Log-log slope fits of `⟨Aχ_E,χ_F⟩ / (|E|^{1/p} |F|^{1-1/q})` along the
//! test families, and the resulting verdict map over the `(1/p, 1/q)` square.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::families::{extremizer_family, FamilyConfig, FamilyKind};
use crate::curves::{PolyCurve, WeightedMeasure};
use crate::error::{AclError, Result};

/// Slope threshold separating bounded from divergent ratios.
pub const SLOPE_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMeasurement {
    pub delta: f64,
    #[serde(rename = "E_measure")]
    pub e_measure: f64,
    #[serde(rename = "F_measure")]
    pub f_measure: f64,
    pub pairing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszPoint {
    pub delta: f64,
    #[serde(rename = "E_measure")]
    pub e_measure: f64,
    #[serde(rename = "F_measure")]
    pub f_measure: f64,
    pub pairing: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "camelCase")]
pub enum Verdict {
    Bounded,
    Divergent { rate: f64 },
}

impl Verdict {
    pub fn from_slope(slope: f64) -> Self {
        if slope >= -SLOPE_TOLERANCE {
            Verdict::Bounded
        } else {
            Verdict::Divergent { rate: slope }
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Verdict::Bounded)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub family: FamilyKind,
    pub p: f64,
    pub q: f64,
    pub points: Vec<RieszPoint>,
    pub slope: f64,
    pub verdict: Verdict,
}

/// Least-squares slope of `ys` against `xs`.
pub fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `deltas` must have at least 4 values spanning 2 dyadic octaves.
pub fn check_deltas(deltas: &[f64]) -> Result<()> {
    let (lo, hi) = deltas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    if deltas.len() < 4 || (hi / lo).log2() < 2.0 - 1e-9 {
        return Err(AclError::Domain("need at least 4 deltas spanning 2 octaves".into()));
    }
    Ok(())
}

/// Geometric sequence `start, start·ratio, …` of `count` terms.
pub fn geometric_deltas(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

pub fn measure_family(
    kind: FamilyKind,
    deltas: &[f64],
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    cfg: &FamilyConfig,
) -> Result<Vec<FamilyMeasurement>> {
    check_deltas(deltas)?;
    deltas
        .iter()
        .map(|&delta| {
            let fam = extremizer_family(kind, delta, curve, measure, cfg)?;
            if fam.pairing <= 0.0 {
                return Err(AclError::EmptyIncidence);
            }
            Ok(FamilyMeasurement { delta, e_measure: fam.e.measure(), f_measure: fam.f.measure(), pairing: fam.pairing })
        })
        .collect()
}

pub fn ratio(m: &FamilyMeasurement, p: f64, q: f64) -> f64 {
    m.pairing / (m.e_measure.powf(1.0 / p) * m.f_measure.powf(1.0 - 1.0 / q))
}

pub fn slope_report(kind: FamilyKind, data: &[FamilyMeasurement], p: f64, q: f64) -> SlopeReport {
    let points: Vec<RieszPoint> = data
        .iter()
        .map(|m| RieszPoint {
            delta: m.delta,
            e_measure: m.e_measure,
            f_measure: m.f_measure,
            pairing: m.pairing,
            ratio: ratio(m, p, q),
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.delta.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.ratio.ln()).collect();
    let slope = lsq_slope(&xs, &ys);
    SlopeReport { family: kind, p, q, points, slope, verdict: Verdict::from_slope(slope) }
}

pub fn riesz_scan(
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    kind: FamilyKind,
    deltas: &[f64],
    p: f64,
    q: f64,
    cfg: &FamilyConfig,
) -> Result<SlopeReport> {
    let data = measure_family(kind, deltas, curve, measure, cfg)?;
    Ok(slope_report(kind, &data, p, q))
}

/// Component slopes of `log pairing`, `log|E|`, `log|F|` against `log δ`;
/// the ratio slope at `(u, v) = (1/p, 1/q)` is `pairing - u·E - (1-v)·F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySlopes {
    pub family: FamilyKind,
    pub pairing: f64,
    pub e: f64,
    pub f: f64,
    pub data: Vec<FamilyMeasurement>,
}

impl FamilySlopes {
    pub fn from_data(family: FamilyKind, data: Vec<FamilyMeasurement>) -> Self {
        let xs: Vec<f64> = data.iter().map(|m| m.delta.ln()).collect();
        let fit = |f: &dyn Fn(&FamilyMeasurement) -> f64| lsq_slope(&xs, &data.iter().map(|m| f(m).ln()).collect::<Vec<_>>());
        FamilySlopes {
            family,
            pairing: fit(&|m| m.pairing),
            e: fit(&|m| m.e_measure),
            f: fit(&|m| m.f_measure),
            data,
        }
    }

    pub fn slope_at(&self, u: f64, v: f64) -> f64 {
        self.pairing - u * self.e - (1.0 - v) * self.f
    }
}

/// Closed convex hull of `(0,0)`, `(1,1)` and the two nontrivial vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trapezium {
    pub d: usize,
    pub vertices: [(f64, f64); 4],
}

impl Trapezium {
    pub fn new(d: usize) -> Self {
        let df = d as f64;
        let v1 = (1.0 / df, (df - 1.0) / (df * (df + 1.0)));
        let v2 = ((df * df - df + 2.0) / (df * (df + 1.0)), (df - 1.0) / (df + 1.0));
        // Counter-clockwise: lower-right chain then the diagonal back.
        Trapezium { d, vertices: [(0.0, 0.0), v1, v2, (1.0, 1.0)] }
    }

    /// Minimum signed distance to the edge lines; positive inside.
    pub fn edge_distance(&self, u: f64, v: f64) -> f64 {
        (0..4)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % 4];
                let (ex, ey) = (x1 - x0, y1 - y0);
                let len = (ex * ex + ey * ey).sqrt();
                (ex * (v - y0) - ey * (u - x0)) / len
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean distance from outside points to the polygon (0 inside).
    pub fn outside_distance(&self, u: f64, v: f64) -> f64 {
        if self.edge_distance(u, v) >= 0.0 {
            return 0.0;
        }
        (0..4)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % 4];
                let (ex, ey) = (x1 - x0, y1 - y0);
                let s = (((u - x0) * ex + (v - y0) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
                ((u - x0 - s * ex).powi(2) + (v - y0 - s * ey).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn region(&self, u: f64, v: f64, margin: f64) -> Region {
        if self.edge_distance(u, v) >= margin {
            Region::Inside
        } else if self.outside_distance(u, v) > margin {
            Region::Outside
        } else {
            Region::Margin
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Region {
    Inside,
    Outside,
    Margin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub u: f64,
    pub v: f64,
    pub region: Region,
    pub min_slope: f64,
    pub worst_family: FamilyKind,
    pub bounded: bool,
    pub correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramReport {
    pub trapezium: Trapezium,
    pub lattice: usize,
    pub margin: f64,
    pub families: Vec<FamilySlopes>,
    pub points: Vec<DiagramPoint>,
    pub tested: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl DiagramReport {
    pub fn from_slopes(d: usize, lattice: usize, margin: f64, families: Vec<FamilySlopes>) -> Self {
        let trap = Trapezium::new(d);
        let mut points = Vec::new();
        let (mut tested, mut correct) = (0, 0);
        for j in 0..lattice {
            for i in 0..lattice {
                let u = i as f64 / (lattice - 1) as f64;
                let v = j as f64 / (lattice - 1) as f64;
                let (min_slope, worst) = families
                    .iter()
                    .map(|f| (f.slope_at(u, v), f.family))
                    .fold((f64::INFINITY, FamilyKind::BoxR), |a, b| if b.0 < a.0 { b } else { a });
                let bounded = Verdict::from_slope(min_slope).is_bounded();
                let region = trap.region(u, v, margin);
                let ok = match region {
                    Region::Inside => Some(bounded),
                    Region::Outside => Some(!bounded),
                    Region::Margin => None,
                };
                if let Some(ok) = ok {
                    tested += 1;
                    correct += ok as usize;
                }
                points.push(DiagramPoint { u, v, region, min_slope, worst_family: worst, bounded, correct: ok });
            }
        }
        let accuracy = if tested == 0 { 0.0 } else { correct as f64 / tested as f64 };
        DiagramReport { trapezium: trap, lattice, margin, families, points, tested, correct, accuracy }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,region,min_slope,worst_family,bounded,correct\n");
        for p in &self.points {
            let region = match p.region {
                Region::Inside => "inside",
                Region::Outside => "outside",
                Region::Margin => "margin",
            };
            let correct = p.correct.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{},{},{}", p.u, p.v, region, p.min_slope, p.worst_family.name(), p.bounded, correct);
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let size = 520.0;
        let pad = 40.0;
        let scale = size - 2.0 * pad;
        let px = |u: f64| pad + u * scale;
        let py = |v: f64| size - pad - v * scale;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#);
        let _ = writeln!(s, r#"<rect x="{pad}" y="{pad}" width="{scale}" height="{scale}" fill="white" stroke="black"/>"#);
        let poly: Vec<String> = self.trapezium.vertices.iter().map(|&(u, v)| format!("{:.2},{:.2}", px(u), py(v))).collect();
        let _ = writeln!(s, r##"<polygon points="{}" fill="#dfe8f5" stroke="#2b4c7e" stroke-width="1.5"/>"##, poly.join(" "));
        for p in &self.points {
            let fill = match (p.bounded, p.correct) {
                (_, None) => "#999999",
                (true, Some(true)) => "#2e7d32",
                (false, Some(true)) => "#c62828",
                (_, Some(false)) => "#f9a825",
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}"><title>({:.4},{:.4}) slope {:.3} via {}</title></circle>"#,
                px(p.u),
                py(p.v),
                p.u,
                p.v,
                p.min_slope,
                p.worst_family.name()
            );
        }
        for &(u, v) in &self.trapezium.vertices[1..3] {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="black" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">({:.3},{:.3})</text>"#,
                px(u) - 5.0,
                py(v) - 5.0,
                px(u) + 8.0,
                py(v) + 14.0,
                u,
                v
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13">1/p</text>"#, size / 2.0, size - 8.0);
        let _ = writeln!(s, r#"<text x="6" y="{:.1}" font-size="13">1/q</text>"#, size / 2.0);
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="24" font-size="12">d={} accuracy {:.3} ({}/{})</text>"#,
            self.trapezium.d, self.accuracy, self.correct, self.tested
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Per-family delta sequences used by the diagram.
pub fn default_deltas(kind: FamilyKind) -> Vec<f64> {
    match kind {
        FamilyKind::BoxR | FamilyKind::Translates => geometric_deltas(0.25, 0.5, 5),
        _ => geometric_deltas(0.25, 0.5, 4),
    }
}

pub fn riesz_diagram(
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    lattice: usize,
    margin: f64,
    families: &[FamilyKind],
    cfg: &FamilyConfig,
) -> Result<DiagramReport> {
    let slopes = families
        .iter()
        .map(|&k| Ok(FamilySlopes::from_data(k, measure_family(k, &default_deltas(k), curve, measure, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagramReport::from_slopes(curve.dim(), lattice, margin, slopes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(kind: FamilyKind, sp: f64, se: f64, sf: f64) -> FamilySlopes {
        let data = geometric_deltas(0.25, 0.5, 4)
            .into_iter()
            .map(|d| FamilyMeasurement { delta: d, e_measure: d.powf(se), f_measure: d.powf(sf), pairing: d.powf(sp) })
            .collect();
        FamilySlopes::from_data(kind, data)
    }

    #[test]
    fn vertices_for_the_plane() {
        let t = Trapezium::new(2);
        assert!((t.vertices[1].0 - 0.5).abs() < 1e-15 && (t.vertices[1].1 - 1.0 / 6.0).abs() < 1e-15);
        assert!((t.vertices[2].0 - 2.0 / 3.0).abs() < 1e-15 && (t.vertices[2].1 - 1.0 / 3.0).abs() < 1e-15);
        // Both nontrivial vertices lie on the scaling line.
        for d in 2..6 {
            let t = Trapezium::new(d);
            let gap = 2.0 / (d * (d + 1)) as f64;
            for &(u, v) in &t.vertices[1..3] {
                assert!((v - (u - gap)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regions() {
        let t = Trapezium::new(2);
        assert_eq!(t.region(0.5, 0.4, 0.05), Region::Inside);
        assert_eq!(t.region(0.2, 0.8, 0.05), Region::Outside);
        assert_eq!(t.region(0.5, 0.5, 0.05), Region::Margin);
        assert_eq!(t.region(0.9, 0.3, 0.05), Region::Outside);
    }

    #[test]
    fn exact_slopes_reproduce_the_region() {
        // Idealized exponents of the four necessary conditions.
        let fams = vec![
            synthetic(FamilyKind::BoxR, 4.0, 3.0, 3.0),
            synthetic(FamilyKind::BallB, 2.0, 2.0, 1.0),
            synthetic(FamilyKind::AdjointF, 3.0, 1.0, 3.0),
            synthetic(FamilyKind::Translates, -1.0, -1.0, -1.0),
        ];
        let rep = DiagramReport::from_slopes(2, 17, 0.05, fams);
        assert_eq!(rep.correct, rep.tested);
        assert!(rep.tested > 200);
        assert!(rep.to_svg().contains("<polygon"));
        assert_eq!(rep.to_csv().lines().count(), 17 * 17 + 1);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..6).map(|i| (i as f64).ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x + 1.0).collect();
        assert!((lsq_slope(&xs, &ys) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn delta_precondition() {
        assert!(check_deltas(&[0.25, 0.125, 0.0625]).is_err());
        assert!(check_deltas(&[0.25, 0.2, 0.15, 0.1]).is_err());
        assert!(check_deltas(&geometric_deltas(0.25, 0.5, 4)).is_ok());
    }
}
