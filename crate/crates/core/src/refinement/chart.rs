//! Case selection, index bookkeeping and the frozen-variable chart map
//! `G_σ = Φ ∘ φ^{-1}` for a colored tower.
//!
//! Chart labels run `1..=N`. Type 1 charts use the tower labels and the map
//! `x0 + Σ (−1)^i r_{⌊i/2⌋} P(t_i)` with `r_0` fixed. The flat case uses the
//! type 2 relabeling `i ↦ i+1` of the tower, freezes the first tower node as
//! `t0` and maps through `y0 + Σ (−1)^{i+1} r_{⌈i/2⌉} P(t_i)`.

use serde::{Deserialize, Serialize};

use crate::curves::PolyCurve;
use crate::error::{AclError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    #[serde(rename = "Case(1,d)")]
    One,
    #[serde(rename = "Case(2,d+1)")]
    TwoLifted,
    #[serde(rename = "Case(2,d)")]
    TwoFlat,
}

impl CaseTag {
    pub fn label(self) -> &'static str {
        match self {
            CaseTag::One => "Case(1,d)",
            CaseTag::TwoLifted => "Case(2,d+1)",
            CaseTag::TwoFlat => "Case(2,d)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PreColor {
    PreRed,
    PreBlue,
    PreAchromatic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Color {
    Red,
    Blue,
    Achromatic,
}

/// Weight of a tower index in the dimension count.
pub fn zeta(c: PreColor) -> usize {
    if c == PreColor::PreRed {
        2
    } else {
        1
    }
}

/// Table-driven description of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChartLayout {
    pub case: CaseTag,
    pub dim: usize,
    /// `N`.
    pub len: usize,
    /// `Z(N)`.
    pub z: usize,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "M")]
    pub big_m: usize,
    pub eta: usize,
    /// Colors of chart labels `1..=N`, stored at `i − 1`.
    pub colors: Vec<Color>,
    /// Non-blue labels `l_1 < … < l_M`.
    pub non_blue: Vec<usize>,
    /// Red labels.
    pub red: Vec<usize>,
    /// Blue labels; the predecessor of each is a `ν` label (`0` = frozen).
    pub blue: Vec<usize>,
}

/// Picks the minimal `N` with `Z(N) ∈ {d, d+1}` from the pre-colors of tower
/// labels `1..=d+1` and recolors per case.
pub fn select_case(pre: &[PreColor], d: usize) -> Result<ChartLayout> {
    if pre.len() < d + 1 {
        return Err(AclError::Domain(format!("need {} pre-colors, got {}", d + 1, pre.len())));
    }
    let mut z = 0;
    let mut len = 0;
    for (i, &c) in pre.iter().enumerate() {
        z += zeta(c);
        if z >= d {
            len = i + 1;
            break;
        }
    }
    if len == 0 {
        return Err(AclError::Internal("dimension count never reaches d".into()));
    }
    let case = if len % 2 == 1 {
        CaseTag::One
    } else if z == d + 1 {
        CaseTag::TwoLifted
    } else {
        CaseTag::TwoFlat
    };
    ChartLayout::new(case, pre, d, z, len)
}

impl ChartLayout {
    fn new(case: CaseTag, pre: &[PreColor], d: usize, z: usize, len: usize) -> Result<Self> {
        let flat = case == CaseTag::TwoFlat;
        let colors: Vec<Color> = (1..=len)
            .map(|i| {
                let tower = if flat { i + 1 } else { i };
                let pairs_start = if flat { i % 2 == 1 } else { i % 2 == 0 };
                match (pairs_start, pre[tower - 1]) {
                    (true, PreColor::PreRed) => Color::Red,
                    (true, PreColor::PreBlue) => Color::Blue,
                    _ => Color::Achromatic,
                }
            })
            .collect();
        let pick = |c: Color| (1..=len).filter(|&i| colors[i - 1] == c).collect::<Vec<_>>();
        let red = pick(Color::Red);
        let blue = pick(Color::Blue);
        let non_blue: Vec<usize> = (1..=len).filter(|&i| colors[i - 1] != Color::Blue).collect();
        let (m, n) = (red.len(), blue.len());
        let layout = ChartLayout {
            case,
            dim: d,
            len,
            z,
            m,
            n,
            big_m: len - n,
            eta: usize::from(flat),
            colors,
            non_blue,
            red,
            blue,
        };
        layout.check_table()?;
        Ok(layout)
    }

    /// Counting identities of the three cases.
    pub fn check_table(&self) -> Result<()> {
        let (m, n, big_n, d) = (self.m, self.n, self.len, self.dim);
        let ok = match self.case {
            CaseTag::One => big_n == 2 * m + 2 * n + 1 && d == 3 * m + 2 * n + 1,
            CaseTag::TwoLifted => big_n == 2 * m + 2 * n && d + 1 == 3 * m + 2 * n,
            CaseTag::TwoFlat => big_n == 2 * m + 2 * n && d == 3 * m + 2 * n,
        } && self.big_m == big_n - n
            && self.n_vars() == self.out_dim();
        if ok {
            Ok(())
        } else {
            Err(AclError::Internal(format!(
                "{} table violated: N={big_n} m={m} n={n} d={d}",
                self.case.label()
            )))
        }
    }

    pub fn type2(&self) -> bool {
        self.case == CaseTag::TwoFlat
    }

    /// Sign of `P(t_i)` in the map.
    pub fn sign(&self, i: usize) -> f64 {
        let odd = i % 2 == 1;
        if odd != self.type2() {
            -1.0
        } else {
            1.0
        }
    }

    /// Index of the dilation multiplying `P(t_i)`.
    pub fn ridx(&self, i: usize) -> usize {
        if self.type2() {
            i.div_ceil(2)
        } else {
            i / 2
        }
    }

    pub fn n_rho(&self) -> usize {
        self.m + self.n
    }

    pub fn n_vars(&self) -> usize {
        self.n_rho() + self.big_m
    }

    pub fn out_dim(&self) -> usize {
        self.dim + usize::from(self.case == CaseTag::TwoLifted)
    }

    pub fn is_blue(&self, i: usize) -> bool {
        i >= 1 && i <= self.len && self.colors[i - 1] == Color::Blue
    }

    /// Labels `(a, b)` sharing dilation `k`; `b = None` for the trailing
    /// dilation of the lifted case.
    pub fn pair(&self, k: usize) -> (usize, Option<usize>) {
        let a = if self.type2() { 2 * k - 1 } else { 2 * k };
        (a, (a < self.len).then_some(a + 1))
    }

    /// Variable index of the trailing dilation (lifted case only).
    pub fn trailing_rho_var(&self) -> Option<usize> {
        (self.case == CaseTag::TwoLifted).then(|| self.n_rho() - 1)
    }

    /// Tower label of chart label `i`.
    pub fn tower_label(&self, i: usize) -> usize {
        if self.type2() {
            i + 1
        } else {
            i
        }
    }

    /// Non-blue labels whose successor is blue.
    pub fn nu_labels(&self) -> Vec<usize> {
        self.blue.iter().map(|&b| b - 1).filter(|&l| l >= 1).collect()
    }
}

/// Columns of `A_σ`, the same matrix with `T1` substituted for every `ν`
/// column after dividing out `Δ(ρ)`, and `Δ(ρ)` itself.
pub struct SubstitutedColumns {
    pub full: Vec<f64>,
    pub plain: Vec<f64>,
    pub delta_rho: f64,
}

/// Chart with frozen variables.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SigmaChart {
    pub layout: ChartLayout,
    /// `x0` (type 1) or `y0 = x0 − r0 P(t0)` (flat case).
    pub base: Vec<f64>,
    pub r0: f64,
    /// Frozen first tower parameter in the flat case.
    pub t0: f64,
    pub gamma: f64,
    /// One entry per blue label.
    pub sigma: Vec<f64>,
}

impl SigmaChart {
    pub fn new(layout: ChartLayout, curve: &PolyCurve, x0: &[f64], r0: f64, t0: f64, gamma: f64, sigma: Vec<f64>) -> Self {
        let base = if layout.type2() {
            let p = curve.eval(t0, 0);
            x0.iter().zip(&p).map(|(x, p)| x - r0 * p).collect()
        } else {
            x0.to_vec()
        };
        SigmaChart { layout, base, r0, t0, gamma, sigma }
    }

    pub fn with_sigma(&self, sigma: Vec<f64>) -> Self {
        SigmaChart { sigma, ..self.clone() }
    }

    /// Chart tuple `(r_1.., t_1..t_N)` from tower dilations `r_0..` and
    /// parameters `t_1..` (stored at `i − 1`).
    pub fn chart_tuple(&self, tower_r: &[f64], tower_t: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let r = tower_r[1..=l.n_rho()].to_vec();
        let t = (1..=l.len).map(|i| tower_t[l.tower_label(i) - 1]).collect();
        (r, t)
    }

    fn pred_time(&self, t: &[f64], b: usize) -> f64 {
        if b == 1 {
            self.t0
        } else {
            t[b - 2]
        }
    }

    /// `φ(r, t) = (ρ, τ, σ)`.
    pub fn phi(&self, r: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let tau = l.non_blue.iter().map(|&i| t[i - 1]).collect();
        let sigma = l
            .blue
            .iter()
            .map(|&b| {
                let p = self.pred_time(t, b);
                (t[b - 1] - p) * p.powf(self.gamma)
            })
            .collect();
        (r.to_vec(), tau, sigma)
    }

    /// `φ^{-1}(ρ, τ, σ)` with the chart's `σ`.
    pub fn phi_inv(&self, rho: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let mut t = vec![0.0; l.len];
        for (&i, &v) in l.non_blue.iter().zip(tau) {
            t[i - 1] = v;
        }
        for (&b, &s) in l.blue.iter().zip(&self.sigma) {
            let p = self.pred_time(&t, b);
            t[b - 1] = p + s * p.powf(-self.gamma);
        }
        (rho.to_vec(), t)
    }

    fn dilation(&self, r: &[f64], k: usize) -> f64 {
        if k == 0 {
            self.r0
        } else {
            r[k - 1]
        }
    }

    /// `Φ(r, t)`, with the trailing dilation appended in the lifted case.
    pub fn phi_map(&self, curve: &PolyCurve, r: &[f64], t: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let mut out = self.base.clone();
        let mut p = vec![0.0; l.dim];
        for i in 1..=l.len {
            curve.eval_into(t[i - 1], 0, &mut p);
            let c = l.sign(i) * self.dilation(r, l.ridx(i));
            for (o, pv) in out.iter_mut().zip(&p) {
                *o += c * pv;
            }
        }
        if l.case == CaseTag::TwoLifted {
            out.push(r[l.n_rho() - 1]);
        }
        out
    }

    /// `G_σ(ρ, τ)`.
    pub fn g_map(&self, curve: &PolyCurve, rho: &[f64], tau: &[f64]) -> Vec<f64> {
        let (r, t) = self.phi_inv(rho, tau);
        self.phi_map(curve, &r, &t)
    }

    /// Exact Jacobian of `G_σ`, column-major, with its size.
    pub fn jacobian_columns(&self, curve: &PolyCurve, rho: &[f64], tau: &[f64]) -> (Vec<f64>, usize) {
        let l = &self.layout;
        let (r, t) = self.phi_inv(rho, tau);
        let size = l.out_dim();
        let d = l.dim;
        let mut cols = vec![0.0; size * size];
        let mut p = vec![0.0; d];
        for k in 1..=l.n_rho() {
            let col = &mut cols[(k - 1) * size..k * size];
            for i in 1..=l.len {
                if l.ridx(i) == k {
                    curve.eval_into(t[i - 1], 0, &mut p);
                    for (c, pv) in col.iter_mut().zip(&p) {
                        *c += l.sign(i) * pv;
                    }
                }
            }
            if l.case == CaseTag::TwoLifted && k == l.n_rho() {
                col[d] = 1.0;
            }
        }
        for (v, &li) in l.non_blue.iter().enumerate() {
            let col = self.tau_column(curve, &r, &t, li);
            let c = (l.n_rho() + v) * size;
            cols[c..c + d].copy_from_slice(&col);
        }
        (cols, size)
    }

    /// `∂G/∂τ_l`, including the chain-rule term through a blue successor.
    fn tau_column(&self, curve: &PolyCurve, r: &[f64], t: &[f64], li: usize) -> Vec<f64> {
        let l = &self.layout;
        let mut col = curve.eval(t[li - 1], 1);
        let c = l.sign(li) * self.dilation(r, l.ridx(li));
        col.iter_mut().for_each(|v| *v *= c);
        if l.is_blue(li + 1) {
            let (tl, tb) = (t[li - 1], t[li]);
            let chain = 1.0 - self.gamma * (tb - tl) / tl;
            let cb = l.sign(li + 1) * self.dilation(r, l.ridx(li + 1)) * chain;
            for (v, pb) in col.iter_mut().zip(curve.eval(tb, 1)) {
                *v += cb * pb;
            }
        }
        col
    }

    /// Pair intervals `(t_a, t_b)` of the non-trailing dilations.
    pub fn pair_intervals(&self, rho: &[f64], tau: &[f64]) -> Vec<(f64, f64)> {
        let (_, t) = self.phi_inv(rho, tau);
        (1..=self.layout.n_rho())
            .filter_map(|k| {
                let (a, b) = self.layout.pair(k);
                b.map(|b| (t[a - 1], t[b - 1]))
            })
            .collect()
    }

    /// Times `τ_ν` at non-frozen `ν` labels.
    pub fn nu_times(&self, tau: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        l.nu_labels()
            .iter()
            .map(|nu| tau[l.non_blue.iter().position(|x| x == nu).expect("nu labels are non-blue")])
            .collect()
    }

    /// `C(ρ)`: coefficients pulled out of the plain `τ` columns.
    pub fn pulled_coefficient(&self, rho: &[f64], tau: &[f64]) -> f64 {
        let l = &self.layout;
        let (r, _) = self.phi_inv(rho, tau);
        l.non_blue
            .iter()
            .filter(|&&li| !l.is_blue(li + 1))
            .map(|&li| l.sign(li) * self.dilation(&r, l.ridx(li)))
            .product()
    }

    /// Sign from expanding the lifted determinant along its last row.
    pub fn lifted_expansion_sign(&self) -> f64 {
        match self.layout.trailing_rho_var() {
            Some(col) if (col + self.layout.dim) % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }

    /// `A_σ` at `x` (one point per non-trailing pair), its `T1` substitute
    /// and `Δ(ρ)`.
    pub fn substituted_columns(&self, curve: &PolyCurve, rho: &[f64], tau: &[f64], x: &[f64]) -> SubstitutedColumns {
        let l = &self.layout;
        let d = l.dim;
        let (r, t) = self.phi_inv(rho, tau);
        let mut full = Vec::with_capacity(d * d);
        for &xk in x {
            full.extend(curve.eval(xk, 1));
        }
        let mut plain = full.clone();
        let mut delta_rho = 1.0;
        for &li in &l.non_blue {
            let own = curve.eval(t[li - 1], 1);
            if l.is_blue(li + 1) {
                full.extend(self.tau_column(curve, &r, &t, li));
                delta_rho *= l.sign(li) * self.dilation(&r, l.ridx(li))
                    + l.sign(li + 1) * self.dilation(&r, l.ridx(li + 1));
            } else {
                full.extend_from_slice(&own);
            }
            plain.extend(own);
        }
        debug_assert_eq!(full.len(), d * d);
        SubstitutedColumns { full, plain, delta_rho }
    }

    /// Analytic `|det Dφ| = ∏ t_{pred}^γ`.
    pub fn phi_jacobian(&self, t: &[f64]) -> f64 {
        self.layout.blue.iter().map(|&b| self.pred_time(t, b).powf(self.gamma)).product()
    }

    /// `φ` flattened to one vector for finite differencing.
    pub fn phi_flat(&self, v: &[f64]) -> Vec<f64> {
        let (r, t) = v.split_at(self.layout.n_rho());
        let (a, b, c) = self.phi(r, t);
        a.into_iter().chain(b).chain(c).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobian::{assemble_g_sigma, error_split, integral_identity, model_jacobian_d3};
    use PreColor::*;

    fn pre(even: &[PreColor], d: usize) -> Vec<PreColor> {
        (1..=d + 1).map(|i| if i % 2 == 0 { even[i / 2 - 1] } else { PreAchromatic }).collect()
    }

    #[test]
    fn case_examples() {
        let l = select_case(&pre(&[PreRed, PreRed], 3), 3).unwrap();
        assert_eq!((l.case, l.len, l.m, l.n, l.eta), (CaseTag::TwoFlat, 2, 1, 0, 1));
        let l = select_case(&pre(&[PreBlue], 2), 2).unwrap();
        assert_eq!((l.case, l.len, l.m, l.n), (CaseTag::TwoFlat, 2, 0, 1));
        let l = select_case(&pre(&[PreRed], 2), 2).unwrap();
        assert_eq!((l.case, l.len, l.m, l.n), (CaseTag::TwoLifted, 2, 1, 0));
        let l = select_case(&pre(&[PreBlue, PreBlue], 3), 3).unwrap();
        assert_eq!((l.case, l.len, l.m, l.n), (CaseTag::One, 3, 0, 1));
    }

    #[test]
    fn model_chart_matches_closed_form() {
        let curve = PolyCurve::moment(3);
        let l = select_case(&pre(&[PreRed, PreRed], 3), 3).unwrap();
        let chart = SigmaChart::new(l, &curve, &[0.1, 0.2, 0.3], 1.2, 0.05, 0.0, vec![]);
        let ev = assemble_g_sigma(&curve, &chart, &[1.4], &[0.3, 0.8]).unwrap();
        let model = model_jacobian_d3(1.4, 0.3, 0.8);
        assert!((ev.det_value.abs() - model).abs() < 1e-12 * model);
        let ev = assemble_g_sigma(&curve, &chart, &[1.4], &[0.3, 0.3]).unwrap();
        assert_eq!(ev.det_value, 0.0);
    }

    #[test]
    fn lifted_minor_expansion() {
        let curve = PolyCurve::moment(2);
        let l = select_case(&pre(&[PreRed], 2), 2).unwrap();
        let chart = SigmaChart::new(l, &curve, &[0.0, 0.0], 1.1, 0.0, 0.0, vec![]);
        let ev = assemble_g_sigma(&curve, &chart, &[1.5], &[0.2, 0.6]).unwrap();
        assert_eq!(ev.size, 3);
        assert!((ev.minor_value.unwrap() - ev.det_value).abs() < 1e-14);
        let (j, integral) = integral_identity(&curve, &chart, &[1.5], &[0.2, 0.6]);
        assert!((j - integral).abs() < 1e-12 * j.abs().max(1e-300));
    }

    #[test]
    fn blue_chart_identities() {
        let curve = PolyCurve::from_int_rows(&[&[0, 1], &[0, 0, 1], &[0, 0, 0, 0, 1]]).unwrap();
        let l = select_case(&pre(&[PreBlue, PreRed], 3), 3).unwrap();
        assert_eq!(l.case, CaseTag::One);
        let gamma = 1.0 / 6.0;
        let chart = SigmaChart::new(l, &curve, &[0.0, 0.0, 0.0], 1.0, 0.0, gamma, vec![0.004]);
        let rho = [1.7];
        let tau = [0.3, 0.7];
        let ev = assemble_g_sigma(&curve, &chart, &rho, &tau).unwrap();
        assert!(ev.rel_error < 1e-7);
        let (j, integral) = integral_identity(&curve, &chart, &rho, &tau);
        assert!((j - integral).abs() < 1e-10 * j.abs());
        let x: Vec<f64> = chart.pair_intervals(&rho, &tau).iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let s = error_split(&curve, &chart, &rho, &tau, &x, 0.01).unwrap();
        assert!(s.error_term != 0.0 && s.error_term.abs() < 0.5 * s.main_term.abs());
    }

    #[test]
    fn phi_round_trip_and_jacobian() {
        let curve = PolyCurve::moment(2);
        let l = select_case(&pre(&[PreBlue], 2), 2).unwrap();
        let gamma = 0.5;
        let mut chart = SigmaChart::new(l, &curve, &[0.3, 0.1], 1.3, 0.2, gamma, vec![]);
        let r = vec![1.6];
        let t = vec![0.21, 0.7];
        let (rho, tau, sigma) = chart.phi(&r, &t);
        chart.sigma = sigma;
        let (r2, t2) = chart.phi_inv(&rho, &tau);
        assert_eq!(r2, r);
        assert!((t2[0] - t[0]).abs() < 1e-15 && t2[1] == t[1]);
        let v: Vec<f64> = r.iter().chain(&t).cloned().collect();
        let fd = crate::jacobian::fd_determinant(&|v| chart.phi_flat(v), &v).abs();
        assert!((fd - chart.phi_jacobian(&t)).abs() < 1e-9);
    }
}
