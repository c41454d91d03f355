//! Incidence refinement, parameter towers, case charts and the end-to-end
//! lower-bound chain.

pub mod chart;
pub mod tower;
pub mod useq;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{PolyCurve, WeightedMeasure};
use crate::error::{AclError, Result};
use crate::extremal::{compute_cm, derive_c0_from};
use crate::jacobian::{
    assemble_g_sigma, error_split, rel_err, fd_determinant, integral_identity, jacobian_floor_check, model_jacobian_d3,
    truncate_domain, vandermonde_floor,
};
use crate::operator::{Averaging, BilinearStats, Grid, VoxelSet};
use crate::seed::stream_rng;
use chart::{select_case, CaseTag, ChartLayout, PreColor, SigmaChart};
use tower::{check_tower, grow_tower, images_in_sets, refine_binary, Tower, TowerChecks, TowerConfig};
use useq::{build_u_sequence, fiber_property, Generation};

/// Discretization and tower parameters of one refinement run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct RefineConfig {
    pub dim: usize,
    pub res: usize,
    pub nr: usize,
    pub nodes: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub delta: f64,
    pub max_retries: usize,
    pub fiber_cap: usize,
    pub level_cap: usize,
    /// Parameter interval of the averaging measure.
    #[serde(default = "unit_interval")]
    pub t_range: (f64, f64),
}

fn unit_interval() -> (f64, f64) {
    (0.0, 1.0)
}

impl RefineConfig {
    pub fn for_dim(dim: usize) -> Self {
        let (res, nr, nodes) = if dim == 2 { (64, 16, 96) } else { (28, 8, 48) };
        RefineConfig {
            dim,
            res,
            nr,
            nodes,
            box_lo: -0.8,
            box_hi: 2.8,
            delta: 1e-2,
            max_retries: 6,
            fiber_cap: 64,
            level_cap: 4096,
            t_range: unit_interval(),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::cube(self.dim, self.box_lo, self.box_hi, self.res, self.nr)
    }

    pub fn operator(&self, curve: &PolyCurve, measure: &WeightedMeasure) -> Averaging {
        Averaging::with_measure(curve, measure, self.grid(), self.t_range, self.nodes)
    }
}

/// `E` = union of balls near the origin, `F` = superlevel set of `Aχ_E`.
pub fn random_instance(op: &Averaging, seed: u64, stream: u64) -> Result<(VoxelSet, VoxelSet)> {
    let mut rng = stream_rng(seed, stream);
    let d = op.grid.dim();
    let balls: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| ((0..d).map(|_| rng.gen_range(-0.25..0.25)).collect(), rng.gen_range(0.3..0.55)))
        .collect();
    let e = VoxelSet::from_spatial_fn(&op.grid, |x| {
        balls.iter().any(|(c, r)| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r * r)
    });
    let theta = rng.gen_range(0.3..0.6);
    superlevel_pair(op, e, theta)
}

/// Ball of radius in `[0.48, 0.52]` with a jittered centre and `F` at a
/// relative level in `[0.38, 0.42]`.
pub fn ball_instance(op: &Averaging, seed: u64, stream: u64) -> Result<(VoxelSet, VoxelSet)> {
    let mut rng = stream_rng(seed, stream);
    let d = op.grid.dim();
    let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let r = rng.gen_range(0.48..0.52);
    let e = VoxelSet::from_spatial_fn(&op.grid, |x| {
        x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r * r
    });
    superlevel_pair(op, e, rng.gen_range(0.38..0.42))
}

fn superlevel_pair(op: &Averaging, e: VoxelSet, theta: f64) -> Result<(VoxelSet, VoxelSet)> {
    if e.is_empty() {
        return Err(AclError::EmptyIncidence);
    }
    let a = op.apply_set(&e);
    let max = a.iter().cloned().fold(0.0, f64::max);
    let f = VoxelSet::superlevel(&op.grid, &a, theta * max);
    Ok((e, f))
}

/// Output of `refine`: U-sequence summary, the colored tower and its checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RefineOutcome {
    pub generations: Vec<Generation>,
    /// Minimum re-integrated fiber property over generations (must be ≥ 1).
    pub fiber_property: f64,
    pub tower: Tower,
    pub checks: TowerChecks,
    pub layout: ChartLayout,
    pub e_measure: f64,
    pub f_measure: f64,
}

/// U-sequence, tower and binary refinement at the given `δ`.
pub fn refine(
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    op: &Averaging,
    e: &VoxelSet,
    f: &VoxelSet,
    delta: f64,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    let inc = build_u_sequence(op, measure, e, f)?;
    let d = op.grid.dim();
    let fiber = (1..=d + 1).map(|g| fiber_property(&inc, op, g)).fold(f64::INFINITY, f64::min);
    let tcfg = TowerConfig { fiber_cap: cfg.fiber_cap, level_cap: cfg.level_cap, ..TowerConfig::default() };
    let raw = grow_tower(op, measure, &inc, &tcfg)?;
    let tower = refine_binary(raw, delta);
    let mut checks = check_tower(&tower, op, curve);
    checks.images_in_sets = Some(images_in_sets(&tower, e, f));
    let layout = select_case(&tower.precolors, d)?;
    Ok(RefineOutcome {
        generations: inc.generations.clone(),
        fiber_property: fiber,
        tower,
        checks,
        layout,
        e_measure: e.measure(),
        f_measure: f.measure(),
    })
}

/// Min / median summary with the witness of the minimum.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatioSummary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub witness: Vec<f64>,
}

impl RatioSummary {
    pub fn from_samples(mut v: Vec<(f64, Vec<f64>)>) -> Self {
        v.retain(|(x, _)| x.is_finite());
        if v.is_empty() {
            return RatioSummary::default();
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        RatioSummary {
            count: v.len(),
            min: v[0].0,
            median: v[v.len() / 2].0,
            max: v[v.len() - 1].0,
            witness: v[0].1.clone(),
        }
    }
}

/// Per-check report of `jacobian-verify`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JacobianReport {
    pub case_tag: CaseTag,
    pub layout: ChartLayout,
    pub samples: usize,
    pub c0: f64,
    pub delta: f64,
    /// Relative error analytic vs finite-difference `J_σ`.
    pub assembly: RatioSummary,
    pub assembly_failures: usize,
    /// Relative error of `φ`'s finite-difference Jacobian.
    pub phi: RatioSummary,
    pub phi_failures: usize,
    /// Relative gap between `J_σ` and `±C(ρ)∫det A_σ`.
    pub integral: RatioSummary,
    pub jacobian_floor: RatioSummary,
    pub vandermonde: RatioSummary,
    /// `|E_σ| / |Δ(ρ)J_P|` over sampled `D(τ)` points.
    pub error_ratio: RatioSummary,
    pub domination_failures: usize,
    /// `|J_P(τ, x)|` sign changes across `D(τ)` (must be zero).
    pub sign_changes: usize,
    pub separation: RatioSummary,
    /// Relative gap to the closed-form model Jacobian (d = 3 moment curve).
    pub model: Option<RatioSummary>,
    pub model_failures: usize,
    /// Size of `ω(σ)` for the most populated `σ`.
    pub omega_size: usize,
    pub warnings: Vec<String>,
}

/// Relative tolerances of the finite-difference cross-checks.
pub const PHI_TOLERANCE: f64 = 1e-6;
pub const G_SIGMA_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-6;

/// Stored tuples deep enough for the chart, as `(r_0.., t_1..)` paths.
pub fn chart_tuples(tower: &Tower, layout: &ChartLayout, limit: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let depth = layout.len + usize::from(layout.type2());
    let idx: Vec<usize> = tower.alive(depth).collect();
    let step = (idx.len() as f64 / limit.max(1) as f64).max(1.0);
    let mut out = Vec::new();
    let mut pos = 0.0;
    while (pos as usize) < idx.len() && out.len() < limit {
        out.push(tower.path(depth, idx[pos as usize]));
        pos += step;
    }
    out
}

/// Chart for a stored tuple with `σ` read off the tuple.
pub fn chart_for(curve: &PolyCurve, tower: &Tower, layout: &ChartLayout, r: &[f64], t: &[f64]) -> (SigmaChart, Vec<f64>, Vec<f64>) {
    let proto = SigmaChart::new(layout.clone(), curve, &tower.base.x0, tower.base.r0, t[0], tower.gamma, vec![]);
    let (cr, ct) = proto.chart_tuple(r, t);
    let (rho, tau, sigma) = proto.phi(&cr, &ct);
    (proto.with_sigma(sigma), rho, tau)
}

/// All Jacobian-level checks on up to `samples` stored tuples.
pub fn verify_jacobians(
    curve: &PolyCurve,
    tower: &Tower,
    layout: &ChartLayout,
    samples: usize,
    seed: u64,
) -> Result<JacobianReport> {
    let d = layout.dim;
    let pairs = (1..=layout.n_rho()).filter(|&k| layout.pair(k).1.is_some()).count();
    let cm = compute_cm(curve.degree().saturating_sub(1), 256, 6)?.lower;
    let c0 = if pairs > 0 { derive_c0_from(cm, pairs) } else { 0.0 };
    let tuples = chart_tuples(tower, layout, samples);
    if tuples.is_empty() {
        return Err(AclError::TowerCollapse { level: layout.len, detail: "no stored tuple reaches the chart depth".into() });
    }
    let is_moment3 = d == 3 && curve.components().iter().enumerate().all(|(i, c)| {
        c.degree() == Some(i + 1) && c.coeffs().iter().enumerate().all(|(j, v)| (j == i + 1) == (v != &num_traits::Zero::zero()))
    });
    let model_layout = is_moment3.then(|| {
        select_case(&[PreColor::PreAchromatic, PreColor::PreRed, PreColor::PreAchromatic, PreColor::PreRed], 3)
            .expect("model layout satisfies the table")
    });
    let mut rng = stream_rng(seed, 11);
    let (mut asm, mut phi, mut integ, mut jl, mut vf, mut err, mut sep, mut model) =
        (vec![], vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
    let (mut asm_fail, mut phi_fail, mut dom_fail, mut sign_changes, mut model_fail) = (0, 0, 0, 0, 0);
    let mut sigmas: Vec<Vec<f64>> = Vec::new();
    for (r, t) in &tuples {
        let (chart, rho, tau) = chart_for(curve, tower, layout, r, t);
        let mut witness = rho.clone();
        witness.extend(&tau);
        sigmas.push(chart.sigma.clone());
        match assemble_g_sigma(curve, &chart, &rho, &tau) {
            Ok(ev) => {
                if ev.rel_error > G_SIGMA_TOLERANCE {
                    asm_fail += 1;
                }
                asm.push((ev.rel_error, witness.clone()));
            }
            Err(AclError::JacobianAssembly { analytic, numeric }) => {
                asm_fail += 1;
                asm.push((rel_err(analytic, numeric), witness.clone()));
            }
            Err(e) => return Err(e),
        }
        // φ Jacobian by finite differences in the tuple variables
        let (cr, ct) = chart.chart_tuple(r, t);
        let v: Vec<f64> = cr.iter().chain(&ct).cloned().collect();
        let fd = fd_determinant(&|x| chart.phi_flat(x), &v).abs();
        let e_phi = rel_err(fd, chart.phi_jacobian(&ct));
        if e_phi > PHI_TOLERANCE {
            phi_fail += 1;
        }
        phi.push((e_phi, witness.clone()));
        let (j, i) = integral_identity(curve, &chart, &rho, &tau);
        integ.push((rel_err(j, i), witness.clone()));
        jl.push((jacobian_floor_check(curve, &chart, &rho, &tau, &tower.stats), witness.clone()));
        vf.push((vandermonde_floor(&chart, &tau, &tower.stats), witness.clone()));
        let dom = truncate_domain(&chart, &rho, &tau, c0, tower.stats.alpha)?;
        if let Some(s) = dom.separation {
            sep.push((s, witness.clone()));
        }
        let mut points: Vec<Vec<f64>> = Vec::new();
        let k = dom.intervals.len();
        for mask in 0..(1usize << k) {
            points.push(dom.intervals.iter().enumerate().map(|(b, iv)| if mask >> b & 1 == 1 { iv.1 } else { iv.0 }).collect());
        }
        points.push(dom.intervals.iter().map(|iv| 0.5 * (iv.0 + iv.1)).collect());
        for _ in 0..4 {
            points.push(dom.intervals.iter().map(|iv| rng.gen_range(iv.0..iv.1)).collect());
        }
        let mut sign = 0.0;
        for x in &points {
            match error_split(curve, &chart, &rho, &tau, x, tower.delta) {
                Ok(s) => {
                    let ratio = if s.main_term != 0.0 { s.error_term.abs() / s.main_term.abs() } else { 0.0 };
                    err.push((ratio, x.clone()));
                    if sign != 0.0 && s.jp.signum() != sign {
                        sign_changes += 1;
                    }
                    sign = s.jp.signum();
                }
                Err(AclError::ErrorDomination { main, error, .. }) => {
                    dom_fail += 1;
                    err.push(((error / main).abs(), x.clone()));
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(ml) = &model_layout {
            let (mc, mrho, mtau) = chart_for(curve, tower, ml, r, t);
            let ev = assemble_g_sigma(curve, &mc, &mrho, &mtau);
            let direct = model_jacobian_d3(mrho[0], mtau[0], mtau[1]);
            let gap = match ev {
                Ok(ev) => rel_err(ev.det_value.abs(), direct),
                Err(AclError::JacobianAssembly { analytic, .. }) => rel_err(analytic.abs(), direct),
                Err(e) => return Err(e),
            };
            if gap > MODEL_TOLERANCE {
                model_fail += 1;
            }
            model.push((gap, mrho.iter().chain(&mtau).cloned().collect()));
        }
    }
    let omega_size = sigmas
        .iter()
        .map(|s| sigmas.iter().filter(|o| o.iter().zip(s).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()))).count())
        .max()
        .unwrap_or(0);
    let mut warnings = Vec::new();
    if layout.n > 0 && omega_size <= 1 {
        warnings.push("omega(sigma) is a singleton; checks ran pointwise".into());
    }
    Ok(JacobianReport {
        case_tag: layout.case,
        layout: layout.clone(),
        samples: tuples.len(),
        c0,
        delta: tower.delta,
        assembly: RatioSummary::from_samples(asm),
        assembly_failures: asm_fail,
        phi: RatioSummary::from_samples(phi),
        phi_failures: phi_fail,
        integral: RatioSummary::from_samples(integ),
        jacobian_floor: RatioSummary::from_samples(jl),
        vandermonde: RatioSummary::from_samples(vf),
        error_ratio: RatioSummary::from_samples(err),
        domination_failures: dom_fail,
        sign_changes,
        separation: RatioSummary::from_samples(sep),
        model: model_layout.map(|_| RatioSummary::from_samples(model)),
        model_failures: model_fail,
        omega_size,
        warnings,
    })
}

/// Jacobian verification on a refined tower, halving `δ` (and re-running
/// the binary refinement) while the error term fails to be dominated.
pub fn verify_with_retry(
    curve: &PolyCurve,
    op: &Averaging,
    mut outcome: RefineOutcome,
    cfg: &RefineConfig,
    samples: usize,
    seed: u64,
    sets: Option<(&VoxelSet, &VoxelSet)>,
) -> Result<(RefineOutcome, JacobianReport, usize)> {
    let mut delta = outcome.tower.delta;
    for retry in 0..=cfg.max_retries {
        let report = verify_jacobians(curve, &outcome.tower, &outcome.layout, samples, seed)?;
        if report.domination_failures == 0 || retry == cfg.max_retries {
            return Ok((outcome, report, retry));
        }
        delta *= 0.5;
        let tower = refine_binary(outcome.tower.clone(), delta);
        let mut checks = check_tower(&tower, op, curve);
        checks.images_in_sets = sets.map(|(e, f)| images_in_sets(&tower, e, f));
        outcome.checks = checks;
        outcome.layout = select_case(&tower.precolors, op.grid.dim())?;
        outcome.tower = tower;
    }
    unreachable!("loop returns on its last iteration")
}

/// Refinement plus Jacobian verification with the `δ` retry.
#[allow(clippy::too_many_arguments)]
pub fn refine_and_verify(
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    op: &Averaging,
    e: &VoxelSet,
    f: &VoxelSet,
    cfg: &RefineConfig,
    samples: usize,
    seed: u64,
) -> Result<(RefineOutcome, JacobianReport, usize)> {
    let outcome = refine(curve, measure, op, e, f, cfg.delta, cfg)?;
    verify_with_retry(curve, op, outcome, cfg, samples, seed, Some((e, f)))
}

/// Final lower-bound chain for one `(E, F)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainReport {
    pub dim: usize,
    pub stats: BilinearStats,
    pub short_circuit: bool,
    pub case_tag: Option<CaseTag>,
    /// `"E"` or `"F"`.
    pub target_set: String,
    pub target_measure: f64,
    /// `α^{d(d+1)/2} (β/α)^{(d∓1)/2}`.
    pub target_scale: f64,
    /// `|X| / target_scale`.
    pub direct_constant: f64,
    /// Exponents `(a, b)` of `|X| ≳ α^a (β/α)^b` from the case table.
    pub table_exponents: (f64, f64),
    /// Minimum Jacobian ratio times the measured fiber constants.
    pub chain_constant: f64,
    pub jacobian_floor_min: f64,
    /// `⟨Aχ_E, χ_F⟩ / (|E|^{1/d} |F|^{(d²+1)/d(d+1)})`.
    pub pairing_ratio: f64,
    /// Three-dimensional model: `|E| / (α^5 β)`.
    pub model_constant: Option<f64>,
    pub delta: f64,
    pub retries: usize,
}

fn short_circuit(stats: &BilinearStats, delta: f64) -> ChainReport {
    let d = stats.dim;
    let dd = d as f64;
    ChainReport {
        dim: d,
        stats: stats.clone(),
        short_circuit: true,
        case_tag: None,
        target_set: String::new(),
        target_measure: 0.0,
        target_scale: 0.0,
        direct_constant: 0.0,
        table_exponents: (0.0, 0.0),
        chain_constant: 0.0,
        jacobian_floor_min: 0.0,
        pairing_ratio: stats.value
            / (stats.e_measure.powf(1.0 / dd) * stats.f_measure.powf((dd * dd + 1.0) / (dd * (dd + 1.0)))),
        model_constant: (d == 3).then(|| stats.e_measure / (stats.alpha.powi(5) * stats.beta)),
        delta,
        retries: 0,
    }
}

/// Constants of the final inequality from a verified tower.
pub fn chain_report(outcome: &RefineOutcome, report: &JacobianReport, retries: usize) -> ChainReport {
    let l = &outcome.layout;
    let s = &outcome.tower.stats;
    let dd = s.dim as f64;
    let (a, b) = (s.alpha, s.beta);
    let lifted = l.case == CaseTag::TwoLifted;
    let target_exp = if lifted { (dd + 1.0) / 2.0 } else { (dd - 1.0) / 2.0 };
    let target_scale = a.powf(dd * (dd + 1.0) / 2.0) * (b / a).powf(target_exp);
    let target_measure = if lifted { outcome.f_measure } else { outcome.e_measure };
    let ea = dd * (dd + 1.0) / 2.0 - l.big_m as f64 + (l.len - l.n) as f64;
    let eb = (l.m as f64 - l.eta as f64) / 2.0 + (l.len / 2) as f64;
    // |X| ≳ min|J_σ|/RHS × RHS × |ω|, with |ω| bounded below by the fiber
    // constants of the levels the chart uses
    let depth = l.len + usize::from(l.type2());
    let mut fiber = 1.0;
    for level in (1 + usize::from(l.type2()))..=depth {
        let scale = if level % 2 == 1 { a } else { b };
        let m = outcome
            .tower
            .fibers
            .iter()
            .filter(|fs| fs.child_level == level && fs.size > 0)
            .map(|fs| fs.mass / scale)
            .fold(f64::INFINITY, f64::min);
        fiber *= m;
    }
    let chain_constant = report.jacobian_floor.min * fiber * a.powf(ea) * (b / a).powf(eb) / target_scale;
    ChainReport {
        short_circuit: false,
        case_tag: Some(l.case),
        target_set: if lifted { "F".into() } else { "E".into() },
        target_measure,
        target_scale,
        direct_constant: target_measure / target_scale,
        table_exponents: (ea, eb),
        chain_constant,
        jacobian_floor_min: report.jacobian_floor.min,
        retries,
        ..short_circuit(s, outcome.tower.delta)
    }
}

/// Runs the pipeline and reports the constants of the final inequality.
#[allow(clippy::too_many_arguments)]
pub fn weak_type_chain(
    curve: &PolyCurve,
    measure: &WeightedMeasure,
    op: &Averaging,
    e: &VoxelSet,
    f: &VoxelSet,
    cfg: &RefineConfig,
    samples: usize,
    seed: u64,
) -> Result<(ChainReport, Option<(RefineOutcome, JacobianReport)>)> {
    if e.is_empty() || f.is_empty() {
        return Err(AclError::EmptyIncidence);
    }
    let stats = op.bilinear(measure, e, f)?;
    if stats.alpha <= stats.beta {
        return Ok((short_circuit(&stats, cfg.delta), None));
    }
    let (outcome, report, retries) = refine_and_verify(curve, measure, op, e, f, cfg, samples, seed)?;
    Ok((chain_report(&outcome, &report, retries), Some((outcome, report))))
}

/// Same chain starting from a persisted refinement.
pub fn chain_from_outcome(
    curve: &PolyCurve,
    op: &Averaging,
    outcome: RefineOutcome,
    cfg: &RefineConfig,
    samples: usize,
    seed: u64,
) -> Result<(ChainReport, Option<(RefineOutcome, JacobianReport)>)> {
    let stats = outcome.tower.stats.clone();
    if stats.alpha <= stats.beta {
        return Ok((short_circuit(&stats, outcome.tower.delta), None));
    }
    let (outcome, report, retries) = verify_with_retry(curve, op, outcome, cfg, samples, seed, None)?;
    Ok((chain_report(&outcome, &report, retries), Some((outcome, report))))
}
