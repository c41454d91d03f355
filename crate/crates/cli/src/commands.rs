use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use acl_core::decomposition::{certify_geometric, decompose, reduce_to_unit_interval};
use acl_core::extremal::TruncationTable;
use acl_core::operator::families::{FamilyConfig, FamilyKind};
use acl_core::operator::riesz::{default_deltas, riesz_diagram, riesz_scan};
use acl_core::refinement::{
    ball_instance, chain_from_outcome, random_instance, refine, refine_and_verify, weak_type_chain, RefineConfig,
    RefineOutcome,
};
use serde::{Deserialize, Serialize};
use acl_core::{AclError, CurveSpec, PolyCurve, WeightedMeasure};
use serde_json::{json, Value};

use crate::config::{Config, DecomposeSection, FamilyGrid};
use crate::record::{run_id, ExperimentRecord, RunDir, VERSION};
use crate::sets;

pub const NAMES: [&str; 7] =
    ["decompose", "riesz", "riesz-diagram", "refine", "weak-type", "jacobian-verify", "truncation-table"];

#[derive(Debug)]
pub enum CliError {
    Core(AclError),
    Io(std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> String {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "IoError".into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<AclError> for CliError {
    fn from(e: AclError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Out = Result<Value, CliError>;

struct Ctx<'a> {
    cfg: &'a Config,
    seed: u64,
    dir: RunDir,
    timing: BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timing.insert(name.to_string(), t.elapsed().as_secs_f64());
        out
    }
}

/// Runs one command and writes `runs/<id>/record.json`; returns its path.
pub fn execute(name: &str, cfg: &Config, root: &Path) -> Result<PathBuf, CliError> {
    let id = run_id(cfg);
    let mut ctx = Ctx { cfg, seed: cfg.seed.unwrap_or(7), dir: RunDir::create(root, &id)?, timing: BTreeMap::new() };
    let outputs = match name {
        "decompose" => run_decompose(&mut ctx),
        "riesz" => run_riesz(&mut ctx),
        "riesz-diagram" => run_diagram(&mut ctx),
        "refine" => run_refine(&mut ctx),
        "weak-type" => run_weak_type(&mut ctx),
        "jacobian-verify" => run_jacobian(&mut ctx),
        "truncation-table" => run_truncation(&mut ctx),
        other => Err(CliError::Core(AclError::Domain(format!("unknown command {other}")))),
    }?;
    let record = ExperimentRecord {
        id,
        version: VERSION.into(),
        seed: ctx.seed,
        config: cfg.clone(),
        outputs,
        timing: ctx.timing,
        artifacts: ctx.dir.artifacts.clone(),
    };
    let path = ctx.dir.path.join("record.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&record).expect("record serializes"))?;
    Ok(path)
}

fn curve_of(cfg: &Config, default_dim: usize) -> Result<PolyCurve, CliError> {
    let spec = cfg.curve.clone().unwrap_or(CurveSpec::Preset { preset: "moment".into(), dim: default_dim });
    Ok(PolyCurve::from_spec(&spec)?)
}

fn is_moment(spec: &Option<CurveSpec>) -> bool {
    matches!(spec, None | Some(CurveSpec::Preset { .. }))
}

/// Curve, measure and parameter interval for the operator: the moment curve
/// as is, any other curve reduced on its widest bounded decomposition piece.
fn setting(cfg: &Config, dim: usize) -> Result<(PolyCurve, WeightedMeasure, (f64, f64)), CliError> {
    let curve = curve_of(cfg, dim)?;
    if is_moment(&cfg.curve) {
        let d = curve.dim();
        return Ok((curve, WeightedMeasure::moment(d), (0.0, 1.0)));
    }
    let pieces = decompose(&curve, cfg.decompose.clip, cfg.decompose.max_intervals)?;
    let widest = pieces
        .iter()
        .max_by(|a, b| a.width().total_cmp(&b.width()))
        .ok_or_else(|| AclError::Domain("decomposition is empty".into()))?;
    let red = reduce_to_unit_interval(&curve, widest)?;
    Ok((red.curve, red.measure, red.interval))
}

fn family_config(dim: usize, g: &FamilyGrid) -> FamilyConfig {
    let mut c = FamilyConfig::for_dim(dim);
    if let Some(v) = g.res {
        c.res = v;
    }
    if let Some(v) = g.nr {
        c.nr = v;
    }
    if let Some(v) = g.max_nodes {
        c.max_nodes = v;
    }
    c
}

fn run_decompose(ctx: &mut Ctx) -> Out {
    let d = &ctx.cfg.decompose;
    let curve = curve_of(ctx.cfg, 2)?;
    let pieces = ctx.stage("decompose", || decompose(&curve, d.clip, d.max_intervals))?;
    let seed = ctx.seed;
    let certified = ctx.stage("certify", || {
        pieces.iter().map(|iv| certify_geometric(&curve, iv, d.samples, seed)).collect::<Result<Vec<_>, _>>()
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for iv in &certified {
        w.serialize((iv.lo, iv.hi, iv.b, iv.k, iv.d_const, iv.c_low, iv.c_high, iv.geo_constant))
            .map_err(|e| CliError::Io(e.into()))?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    let mut csv = b"lo,hi,b,K,D,cLow,cHigh,geoConstant\n".to_vec();
    csv.extend(body);
    ctx.dir.write("intervals.csv", &csv)?;
    Ok(json!({ "curve": curve.to_spec(), "intervals": certified }))
}

fn run_riesz(ctx: &mut Ctx) -> Out {
    let r = ctx.cfg.riesz.clone();
    let (curve, measure, _) = setting(ctx.cfg, 2)?;
    let kind = FamilyKind::parse(&r.family)?;
    let deltas = if r.deltas.is_empty() { default_deltas(kind) } else { r.deltas.clone() };
    let fc = family_config(curve.dim(), &r.grid);
    let report = ctx.stage("riesz", || riesz_scan(&curve, &measure, kind, &deltas, r.p, r.q, &fc))?;
    let mut csv = String::from("delta,E_measure,F_measure,pairing,ratio\n");
    for p in &report.points {
        csv.push_str(&format!("{},{},{},{},{}\n", p.delta, p.e_measure, p.f_measure, p.pairing, p.ratio));
    }
    ctx.dir.write("riesz.csv", csv.as_bytes())?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn run_diagram(ctx: &mut Ctx) -> Out {
    let r = ctx.cfg.diagram.clone();
    let (curve, measure, _) = setting(ctx.cfg, 2)?;
    let kinds = if r.families.is_empty() {
        FamilyKind::ALL.to_vec()
    } else {
        r.families.iter().map(|f| FamilyKind::parse(f)).collect::<Result<Vec<_>, _>>()?
    };
    let fc = family_config(curve.dim(), &r.grid);
    let report = ctx.stage("riesz-diagram", || riesz_diagram(&curve, &measure, r.lattice, r.margin, &kinds, &fc))?;
    ctx.dir.write("diagram.csv", report.to_csv().as_bytes())?;
    ctx.dir.write("diagram.svg", report.to_svg().as_bytes())?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

struct Instance {
    curve: PolyCurve,
    measure: WeightedMeasure,
    cfg: RefineConfig,
    op: acl_core::Averaging,
    e: acl_core::VoxelSet,
    f: acl_core::VoxelSet,
}

fn instance(ctx: &mut Ctx) -> Result<Instance, CliError> {
    let r = ctx.cfg.refine.clone();
    let dim = r.dim.or_else(|| ctx.cfg.curve.as_ref().map(spec_dim)).unwrap_or(3);
    let (curve, measure, t_range) = setting(ctx.cfg, dim)?;
    let mut cfg = RefineConfig::for_dim(curve.dim());
    cfg.t_range = t_range;
    if let Some(v) = r.delta {
        cfg.delta = v;
    }
    if let Some(v) = r.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = r.res {
        cfg.res = v;
    }
    if let Some(v) = r.nr {
        cfg.nr = v;
    }
    if let Some(v) = r.nodes {
        cfg.nodes = v;
    }
    let op = ctx.stage("operator", || cfg.operator(&curve, &measure));
    if let (Some(pe), Some(pf)) = (&r.e, &r.f) {
        let (se, sf) = (sets::load(pe)?, sets::load(pf)?);
        let e = sets::build_e(&se, &op)?;
        let f = sets::build_f(&sf, &op, &e)?;
        return Ok(Instance { curve, measure, cfg, op, e, f });
    }
    if r.e.is_some() || r.f.is_some() {
        return Err(AclError::Domain("--E and --F must be given together".into()).into());
    }
    let kind = r.instance.clone().unwrap_or_else(|| if curve.dim() == 2 { "random".into() } else { "ball".into() });
    let seed = ctx.seed;
    let (e, f) = ctx.stage("instance", || match kind.as_str() {
        "random" => random_instance(&op, seed, r.stream),
        "ball" => ball_instance(&op, seed, r.stream),
        other => Err(AclError::Domain(format!("unknown instance kind {other}"))),
    })?;
    Ok(Instance { curve, measure, cfg, op, e, f })
}

fn spec_dim(s: &CurveSpec) -> usize {
    match s {
        CurveSpec::Preset { dim, .. } | CurveSpec::Coeffs { dim, .. } => *dim,
    }
}

fn outcome_summary(o: &RefineOutcome) -> Value {
    json!({
        "generations": o.generations,
        "fiberProperty": o.fiber_property,
        "checks": o.checks,
        "passed": o.checks.passed(1e-3),
        "layout": o.layout,
        "caseTag": o.layout.case,
        "eMeasure": o.e_measure,
        "fMeasure": o.f_measure,
        "stats": o.tower.stats,
        "delta": o.tower.delta,
        "precolors": o.tower.precolors,
        "levelSizes": o.tower.levels.iter().map(|l| l.iter().filter(|n| n.alive).count()).collect::<Vec<_>>(),
        "base": o.tower.base,
    })
}

/// Everything `weak-type --tower` needs to resume from a refinement.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TowerFile {
    version: String,
    curve: Option<CurveSpec>,
    decompose: DecomposeSection,
    refine_config: RefineConfig,
    outcome: RefineOutcome,
}

fn write_main(ctx: &mut Ctx, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    ctx.dir.write(name, bytes)?;
    if let Some(path) = &ctx.cfg.refine.out {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

fn run_refine(ctx: &mut Ctx) -> Out {
    let inst = instance(ctx)?;
    let out = ctx.stage("refine", || refine(&inst.curve, &inst.measure, &inst.op, &inst.e, &inst.f, inst.cfg.delta, &inst.cfg))?;
    let mut v = outcome_summary(&out);
    v["refineConfig"] = serde_json::to_value(&inst.cfg).expect("config serializes");
    let file = TowerFile {
        version: VERSION.into(),
        curve: ctx.cfg.curve.clone(),
        decompose: ctx.cfg.decompose.clone(),
        refine_config: inst.cfg,
        outcome: out,
    };
    write_main(ctx, "tower.json", &serde_json::to_vec(&file).expect("tower serializes"))?;
    Ok(v)
}

fn weak_type_from_tower(ctx: &mut Ctx, path: &Path) -> Out {
    let text = std::fs::read_to_string(path)?;
    let file: TowerFile = serde_json::from_str(&text)
        .map_err(|e| AclError::Domain(format!("invalid tower file {}: {e}", path.display())))?;
    let cfg = Config { curve: file.curve.clone(), decompose: file.decompose.clone(), ..Config::default() };
    let (curve, measure, _) = setting(&cfg, file.outcome.tower.stats.dim)?;
    let rc = file.refine_config;
    let op = ctx.stage("operator", || rc.operator(&curve, &measure));
    let samples = ctx.cfg.refine.samples;
    let seed = ctx.seed;
    let (chain, rest) = ctx.stage("weak-type", || chain_from_outcome(&curve, &op, file.outcome, &rc, samples, seed))?;
    chain_output(ctx, chain, rest, &rc)
}

fn chain_output(
    ctx: &mut Ctx,
    chain: acl_core::refinement::ChainReport,
    rest: Option<(RefineOutcome, acl_core::refinement::JacobianReport)>,
    rc: &RefineConfig,
) -> Out {
    write_main(ctx, "chain_report.json", &serde_json::to_vec_pretty(&chain).expect("report serializes"))?;
    let mut v = json!({ "chainReport": chain, "refineConfig": rc });
    if let Some((out, report)) = rest {
        v["refine"] = outcome_summary(&out);
        v["jacobian"] = serde_json::to_value(report).expect("report serializes");
    }
    Ok(v)
}

fn run_jacobian(ctx: &mut Ctx) -> Out {
    let inst = instance(ctx)?;
    let samples = ctx.cfg.refine.samples;
    let seed = ctx.seed;
    let (out, report, retries) = ctx.stage("jacobian-verify", || {
        refine_and_verify(&inst.curve, &inst.measure, &inst.op, &inst.e, &inst.f, &inst.cfg, samples, seed)
    })?;
    Ok(json!({
        "refine": outcome_summary(&out),
        "report": report,
        "retries": retries,
        "refineConfig": inst.cfg,
    }))
}

fn run_weak_type(ctx: &mut Ctx) -> Out {
    if let Some(path) = ctx.cfg.refine.tower.clone() {
        return weak_type_from_tower(ctx, &path);
    }
    let inst = instance(ctx)?;
    let samples = ctx.cfg.refine.samples;
    let seed = ctx.seed;
    let (chain, rest) = ctx.stage("weak-type", || {
        weak_type_chain(&inst.curve, &inst.measure, &inst.op, &inst.e, &inst.f, &inst.cfg, samples, seed)
    })?;
    chain_output(ctx, chain, rest, &inst.cfg)
}

fn run_truncation(ctx: &mut Ctx) -> Out {
    let t = ctx.cfg.truncation.clone();
    let table = ctx.stage("truncation-table", || TruncationTable::build(t.max_degree, t.max_k))?;
    let bytes = serde_json::to_vec_pretty(&table).expect("table serializes");
    ctx.dir.write("truncation.json", &bytes)?;
    if let Some(path) = &t.out {
        std::fs::write(path, &bytes)?;
    }
    Ok(serde_json::to_value(table).expect("table serializes"))
}
