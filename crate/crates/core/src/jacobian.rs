//! Determinants behind the lower bounds: `J_P`, Vandermonde products, the
//! three-dimensional model Jacobian, mixed-derivative bounds for `J_P`,
//! preimage counting for planar polynomial maps, and the chart Jacobian
//! `J_σ` with its main/error split and truncated domains.

use serde::{Deserialize, Serialize};

use crate::curves::PolyCurve;
use crate::error::{AclError, Result};
use crate::linalg::det_cols;
use crate::operator::BilinearStats;
use crate::quad::gauss_on;
use crate::refinement::chart::{CaseTag, SigmaChart};

/// `det(P'(t_1) … P'(t_d))`.
pub fn jp(curve: &PolyCurve, tuple: &[f64]) -> f64 {
    let d = curve.dim();
    debug_assert_eq!(tuple.len(), d);
    let mut cols = vec![0.0; d * d];
    for (i, &t) in tuple.iter().enumerate() {
        curve.eval_into(t, 1, &mut cols[i * d..(i + 1) * d]);
    }
    det_cols(&cols, d)
}

/// `∏_{i<j} (x_j − x_i)`.
pub fn vandermonde(x: &[f64]) -> f64 {
    let mut v = 1.0;
    for j in 1..x.len() {
        for i in 0..j {
            v *= x[j] - x[i];
        }
    }
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TupleEval {
    pub tuple: Vec<f64>,
    pub jp: f64,
    pub vandermonde: f64,
    pub weights: Vec<f64>,
}

impl TupleEval {
    pub fn new(curve: &PolyCurve, tuple: &[f64]) -> Self {
        let d = curve.dim() as f64;
        TupleEval {
            tuple: tuple.to_vec(),
            jp: jp(curve, tuple),
            vandermonde: vandermonde(tuple),
            weights: tuple.iter().map(|&t| curve.torsion(t).abs().powf(1.0 / d)).collect(),
        }
    }
}

/// Floor constant for the model bound after removing an `L/8` neighbourhood
/// of both endpoints: `6 · (3/4) · (7/64)`.
pub const MODEL_D3_FLOOR: f64 = 6.0 * 0.75 * 7.0 / 64.0;

/// `6 r² |∫_{t1}^{t2} V(t1, t2, x) dx|`, which integrates to `r²(t2 − t1)^4`.
pub fn model_jacobian_d3(r1: f64, t1: f64, t2: f64) -> f64 {
    let l = t2 - t1;
    let v = r1 * r1 * l.powi(4);
    debug_assert!(v >= MODEL_D3_FLOOR * l.powi(4) * (1.0 - 1e-12));
    v
}

fn mixed_step(order: usize) -> f64 {
    1e-5 * 10f64.powi(order as i32 - 1)
}

/// Central finite-difference value of `∏_{j∈S} ∂_j J_P` at `tuple`.
pub fn mixed_partial_fd(curve: &PolyCurve, tuple: &[f64], s: &[usize]) -> f64 {
    let h = mixed_step(s.len());
    let mut acc = 0.0;
    let mut t = tuple.to_vec();
    for mask in 0..(1usize << s.len()) {
        let mut sign = 1.0;
        t.copy_from_slice(tuple);
        for (b, &j) in s.iter().enumerate() {
            if mask >> b & 1 == 1 {
                t[j] -= h;
                sign = -sign;
            } else {
                t[j] += h;
            }
        }
        acc += sign * jp(curve, &t);
    }
    acc / (2.0 * h).powi(s.len() as i32)
}

/// Right-hand side of the mixed-derivative estimate with explicit constant
/// `2^|S|`. Summing the `(T, u, ε)` terms factorizes per index into
/// `d/t_j + Σ_{k≠j} 1/|t_j − t_k|`.
pub fn derivative_bound(curve: &PolyCurve, tuple: &[f64], s: &[usize]) -> f64 {
    let d = tuple.len();
    let mut prod = 2f64.powi(s.len() as i32) * jp(curve, tuple).abs();
    for &j in s {
        let mut f = d as f64 / tuple[j];
        for k in 0..d {
            if k != j {
                f += 1.0 / (tuple[j] - tuple[k]).abs();
            }
        }
        prod *= f;
    }
    prod
}

/// Ratio finite-difference / bound; errors when the bound is exceeded.
pub fn derivative_check(curve: &PolyCurve, tuple: &[f64], s: &[usize]) -> Result<f64> {
    if s.is_empty() || s.iter().any(|&j| j >= tuple.len()) {
        return Err(AclError::Domain("index set must be non-empty and in range".into()));
    }
    let lhs = mixed_partial_fd(curve, tuple, s).abs();
    let rhs = derivative_bound(curve, tuple, s);
    if lhs > rhs * (1.0 + 1e-6) {
        return Err(AclError::DerivativeBoundViolation { ratio: lhs / rhs, witness: tuple.to_vec() });
    }
    Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Planar polynomial maps

/// Bivariate polynomial `Σ c[i][j] x^i y^j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiPoly {
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
struct Iv(f64, f64);

impl Iv {
    fn powi(self, k: usize) -> Iv {
        if k == 0 {
            return Iv(1.0, 1.0);
        }
        let (a, b) = (self.0.powi(k as i32), self.1.powi(k as i32));
        if k % 2 == 0 && self.0 <= 0.0 && self.1 >= 0.0 {
            Iv(0.0, a.max(b))
        } else {
            Iv(a.min(b), a.max(b))
        }
    }

    fn mul(self, o: Iv) -> Iv {
        let p = [self.0 * o.0, self.0 * o.1, self.1 * o.0, self.1 * o.1];
        Iv(p.iter().cloned().fold(f64::INFINITY, f64::min), p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }
}

impl BiPoly {
    pub fn new(c: Vec<Vec<f64>>) -> Self {
        BiPoly { c }
    }

    pub fn degree(&self) -> usize {
        let mut deg = 0;
        for (i, row) in self.c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    deg = deg.max(i + j);
                }
            }
        }
        deg
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, row| acc * x + row.iter().rev().fold(0.0, |a, &v| a * y + v))
    }

    /// `(∂_x, ∂_y)` at a point.
    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut gx, mut gy) = (0.0, 0.0);
        for (i, row) in self.c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i > 0 {
                    gx += v * i as f64 * x.powi(i as i32 - 1) * y.powi(j as i32);
                }
                if j > 0 {
                    gy += v * j as f64 * x.powi(i as i32) * y.powi(j as i32 - 1);
                }
            }
        }
        (gx, gy)
    }

    fn range(&self, x: Iv, y: Iv) -> Iv {
        let mut acc = Iv(0.0, 0.0);
        for (i, row) in self.c.iter().enumerate() {
            let xi = x.powi(i);
            for (j, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let m = xi.mul(y.powi(j));
                let t = if v >= 0.0 { Iv(v * m.0, v * m.1) } else { Iv(v * m.1, v * m.0) };
                acc = Iv(acc.0 + t.0, acc.1 + t.1);
            }
        }
        acc
    }
}

/// Product of the component degrees.
pub fn bezout_bound(degrees: &[usize]) -> usize {
    degrees.iter().product()
}

/// Search window for preimages.
pub const PREIMAGE_WINDOW: f64 = 10.0;

/// Number of isolated real solutions of `(p, q) = target` in the square
/// `[-10, 10]^2`. Cells that may contain a common zero (interval bounds)
/// are bisected down to `2·10/grid / 2^12`; survivors seed Newton's method
/// and converged roots are merged.
pub fn count_preimages_2d(map: (&BiPoly, &BiPoly), target: [f64; 2], grid: usize) -> Result<usize> {
    let (p, q) = map;
    let f = |x: f64, y: f64| (p.eval(x, y) - target[0], q.eval(x, y) - target[1]);
    let shift = |b: &BiPoly, c: f64| {
        let mut b = b.clone();
        if b.c.is_empty() {
            b.c.push(vec![0.0]);
        }
        if b.c[0].is_empty() {
            b.c[0].push(0.0);
        }
        b.c[0][0] -= c;
        b
    };
    let (ps, qs) = (shift(p, target[0]), shift(q, target[1]));
    let w = PREIMAGE_WINDOW;
    let h0 = 2.0 * w / grid as f64;
    let mut stack: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            stack.push((-w + i as f64 * h0, -w + j as f64 * h0, h0));
        }
    }
    let min_h = h0 / 4096.0;
    let mut seeds = Vec::new();
    while let Some((x, y, h)) = stack.pop() {
        let (bx, by) = (Iv(x, x + h), Iv(y, y + h));
        let (rp, rq) = (ps.range(bx, by), qs.range(bx, by));
        if rp.0 > 0.0 || rp.1 < 0.0 || rq.0 > 0.0 || rq.1 < 0.0 {
            continue;
        }
        // Newton from the centre certifies small cells quickly.
        if h <= min_h || h < 1e-2 {
            seeds.push((x + 0.5 * h, y + 0.5 * h, h));
            if h <= min_h {
                continue;
            }
        }
        let g = 0.5 * h;
        stack.extend([(x, y, g), (x + g, y, g), (x, y + g, g), (x + g, y + g, g)]);
    }
    let mut roots: Vec<[f64; 2]> = Vec::new();
    for (sx, sy, h) in seeds {
        let (mut x, mut y) = (sx, sy);
        let mut ok = false;
        for _ in 0..60 {
            let (u, v) = f(x, y);
            let (px, py) = p.grad(x, y);
            let (qx, qy) = q.grad(x, y);
            let det = px * qy - py * qx;
            if det == 0.0 {
                break;
            }
            let dx = (u * qy - v * py) / det;
            let dy = (px * v - qx * u) / det;
            x -= dx;
            y -= dy;
            if dx.abs() + dy.abs() < 1e-14 * (1.0 + x.abs() + y.abs()) {
                ok = true;
                break;
            }
        }
        let (u, v) = f(x, y);
        let scale = 1.0 + target[0].abs() + target[1].abs();
        if !ok && u.abs() + v.abs() > 1e-10 * scale {
            continue;
        }
        if (x - sx).abs() > 2.0 * h || (y - sy).abs() > 2.0 * h || x.abs() > w || y.abs() > w {
            continue;
        }
        if roots.iter().any(|r| (r[0] - x).abs() + (r[1] - y).abs() < 1e-8 * (1.0 + x.abs() + y.abs())) {
            continue;
        }
        let (px, py) = p.grad(x, y);
        let (qx, qy) = q.grad(x, y);
        let jac = px * qy - py * qx;
        if jac.abs() < 1e-9 {
            return Err(AclError::NonGenericTarget { jacobian: jac, root: [x, y] });
        }
        roots.push([x, y]);
    }
    Ok(roots.len())
}

// ---------------------------------------------------------------------------
// Chart Jacobians

/// Assembled chart Jacobian at one `(ρ, τ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JacobianChartEval {
    pub case_tag: CaseTag,
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Column-major square matrix.
    pub matrix: Vec<f64>,
    pub size: usize,
    pub det_value: f64,
    /// Finite-difference determinant of the explicit map.
    pub fd_value: f64,
    pub rel_error: f64,
    /// Determinant after expanding the single `1` of the dilation row.
    pub minor_value: Option<f64>,
}

/// Relative tolerance for analytic vs finite-difference determinants.
pub const ASSEMBLY_TOLERANCE: f64 = 1e-5;

fn richardson_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, at: &[f64], h: f64) -> Vec<f64> {
    let n = at.len();
    let mut cols = Vec::new();
    let mut x = at.to_vec();
    for i in 0..n {
        let mut diff = |step: f64| {
            x[i] = at[i] + step;
            let a = f(&x);
            x[i] = at[i] - step;
            let b = f(&x);
            x[i] = at[i];
            a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * step)).collect::<Vec<f64>>()
        };
        let coarse = diff(h);
        let fine = diff(0.5 * h);
        cols.extend(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0));
    }
    cols
}

/// Determinant of the finite-difference Jacobian of `f` at `at`.
pub fn fd_determinant(f: &dyn Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> f64 {
    let cols = richardson_jacobian(f, at, FD_STEP);
    det_cols(&cols, at.len())
}

/// Base step of the extrapolated central differences.
pub const FD_STEP: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Exact column list of `J_σ` plus a finite-difference cross-check against
/// `Φ∘φ^{-1}`.
pub fn assemble_g_sigma(curve: &PolyCurve, chart: &SigmaChart, rho: &[f64], tau: &[f64]) -> Result<JacobianChartEval> {
    let (matrix, size) = chart.jacobian_columns(curve, rho, tau);
    let det_value = det_cols(&matrix, size);
    let mut at = rho.to_vec();
    at.extend_from_slice(tau);
    let g = |v: &[f64]| {
        let (r, t) = v.split_at(rho.len());
        chart.g_map(curve, r, t)
    };
    let fd_value = fd_determinant(&g, &at);
    let scale = column_scale(&matrix, size);
    let rel_error = (det_value - fd_value).abs() / det_value.abs().max(1e-13 * scale);
    let minor_value = (chart.layout.case == CaseTag::TwoLifted).then(|| {
        let d = size - 1;
        let col = chart.layout.trailing_rho_var().expect("lifted case has a trailing dilation");
        let mut minor = Vec::with_capacity(d * d);
        for c in 0..size {
            if c != col {
                minor.extend_from_slice(&matrix[c * size..c * size + d]);
            }
        }
        let sign = if (col + d) % 2 == 0 { 1.0 } else { -1.0 };
        sign * det_cols(&minor, d)
    });
    let out = JacobianChartEval {
        case_tag: chart.layout.case,
        rho: rho.to_vec(),
        tau: tau.to_vec(),
        sigma: chart.sigma.clone(),
        matrix,
        size,
        det_value,
        fd_value,
        rel_error,
        minor_value,
    };
    if rel_error > ASSEMBLY_TOLERANCE {
        return Err(AclError::JacobianAssembly { analytic: det_value, numeric: fd_value });
    }
    Ok(out)
}

fn column_scale(m: &[f64], n: usize) -> f64 {
    (0..n).map(|c| m[c * n..(c + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6)).product()
}

/// Main term, error term and their ratio at one point `x` of `D(τ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorSplit {
    /// `Δ(ρ)·J_P(τ, x)`.
    pub main_term: f64,
    /// Determinant with substituted columns.
    pub full: f64,
    /// `full − main_term`.
    pub error_term: f64,
    pub delta_rho: f64,
    pub jp: f64,
    /// Measured `|error| / (δ |main|)`.
    pub constant: f64,
}

/// Splits the substituted determinant into `Δ(ρ)J_P(τ,x)` plus error and
/// asserts the error is at most half the main term.
pub fn error_split(
    curve: &PolyCurve,
    chart: &SigmaChart,
    rho: &[f64],
    tau: &[f64],
    x: &[f64],
    delta: f64,
) -> Result<ErrorSplit> {
    let parts = chart.substituted_columns(curve, rho, tau, x);
    let d = curve.dim();
    let full = det_cols(&parts.full, d);
    let jp_val = det_cols(&parts.plain, d);
    let main_term = parts.delta_rho * jp_val;
    let error_term = full - main_term;
    let constant = if main_term == 0.0 || delta == 0.0 { 0.0 } else { error_term.abs() / (delta * main_term.abs()) };
    if error_term.abs() > 0.5 * main_term.abs() {
        return Err(AclError::ErrorDomination {
            main: main_term,
            error: error_term,
            delta,
            rho: rho.to_vec(),
            tau: tau.to_vec(),
            x: x.to_vec(),
        });
    }
    Ok(ErrorSplit { main_term, full, error_term, delta_rho: parts.delta_rho, jp: jp_val, constant })
}

/// `(J_σ, ±C(ρ)∫ det A_σ)` with the integral evaluated by Gauss–Legendre
/// on the product of pair intervals (exact for polynomial curves).
pub fn integral_identity(curve: &PolyCurve, chart: &SigmaChart, rho: &[f64], tau: &[f64]) -> (f64, f64) {
    let (matrix, size) = chart.jacobian_columns(curve, rho, tau);
    let j = det_cols(&matrix, size);
    let ivs = chart.pair_intervals(rho, tau);
    let nodes = curve.degree() / 2 + 2;
    let rules: Vec<(Vec<f64>, Vec<f64>)> = ivs.iter().map(|&(a, b)| gauss_on(nodes, a, b)).collect();
    let d = curve.dim();
    let mut total = 0.0;
    let mut idx = vec![0usize; ivs.len()];
    let mut x = vec![0.0; ivs.len()];
    loop {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            x[k] = rules[k].0[i];
            w *= rules[k].1[i];
        }
        let parts = chart.substituted_columns(curve, rho, tau, &x);
        total += w * det_cols(&parts.full, d);
        let mut k = 0;
        loop {
            if k == idx.len() {
                let pulled = chart.pulled_coefficient(rho, tau) * total;
                let sign = if ivs.len() % 2 == 0 { 1.0 } else { -1.0 };
                let lifted_sign = chart.lifted_expansion_sign();
                return (j, sign * lifted_sign * pulled);
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `(a + ε(b−a), b − ε(b−a))`.
pub fn truncate_interval(a: f64, b: f64, eps: f64) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&eps) {
        return Err(AclError::Domain(format!("truncation parameter {eps} must lie in [0, 1/2)")));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let w = hi - lo;
    let out = (lo + eps * w, hi - eps * w);
    if !(out.1 > out.0) {
        return Err(AclError::DegenerateTruncation { lo: out.0, hi: out.1 });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TruncatedDomain {
    pub intervals: Vec<(f64, f64)>,
    /// Minimum of `|τ_ν − x| τ_ν^γ / α` over corners, `None` without blue indices.
    pub separation: Option<f64>,
}

/// `D(τ)`: every pair interval truncated by `c0` of its width on each side.
pub fn truncate_domain(chart: &SigmaChart, rho: &[f64], tau: &[f64], c0: f64, alpha: f64) -> Result<TruncatedDomain> {
    let intervals = chart
        .pair_intervals(rho, tau)
        .into_iter()
        .map(|(a, b)| truncate_interval(a, b, c0))
        .collect::<Result<Vec<_>>>()?;
    let nu = chart.nu_times(tau);
    let separation = (!nu.is_empty() && !intervals.is_empty()).then(|| {
        let mut best = f64::INFINITY;
        for &tn in &nu {
            for &(a, b) in &intervals {
                // distance to an interval is attained at a corner unless tn lies inside
                let dist = if tn >= a && tn <= b { 0.0 } else { (tn - a).abs().min((tn - b).abs()) };
                best = best.min(dist * tn.powf(chart.gamma) / alpha);
            }
        }
        best
    });
    Ok(TruncatedDomain { intervals, separation })
}

/// `|J_σ| / (α^{d(d+1)/2−M} (β/α)^{(m+n−η)/2} ∏ τ_l^γ)`.
pub fn jacobian_floor_check(curve: &PolyCurve, chart: &SigmaChart, rho: &[f64], tau: &[f64], stats: &BilinearStats) -> f64 {
    let (matrix, size) = chart.jacobian_columns(curve, rho, tau);
    let j = det_cols(&matrix, size).abs();
    let l = &chart.layout;
    let d = l.dim as f64;
    let (a, b) = (stats.alpha, stats.beta);
    let rhs = a.powf(d * (d + 1.0) / 2.0 - l.big_m as f64)
        * (b / a).powf((l.m + l.n - l.eta) as f64 / 2.0)
        * tau.iter().map(|t| t.powf(chart.gamma)).product::<f64>();
    j / rhs
}

/// Exponent of `(β/α)^{1/2}` in the Vandermonde floor: one per red pair
/// whose predecessor is a free variable.
pub fn vandermonde_beta_exponent(chart: &SigmaChart) -> usize {
    let l = &chart.layout;
    let frozen_red = l.case == CaseTag::TwoFlat && l.red.first() == Some(&1);
    l.m - usize::from(frozen_red)
}

/// `|V(τ)| / (α^{M(M−1)/2} (β/α)^{e/2} ∏ τ^{−K(M−1)/d(d+1)})`.
pub fn vandermonde_floor(chart: &SigmaChart, tau: &[f64], stats: &BilinearStats) -> f64 {
    let mm = tau.len() as f64;
    let (a, b) = (stats.alpha, stats.beta);
    let e = vandermonde_beta_exponent(chart) as f64;
    let g = chart.gamma * (mm - 1.0) / 2.0;
    let rhs = a.powf(mm * (mm - 1.0) / 2.0) * (b / a).powf(e / 2.0) * tau.iter().map(|t| t.powf(-g)).product::<f64>();
    vandermonde(tau).abs() / rhs
}
