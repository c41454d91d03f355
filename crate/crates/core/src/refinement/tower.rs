//! Parameter towers grown from the refined incidence sets, and the binary
//! refinement that fixes one pre-color per even level.

use serde::{Deserialize, Serialize};

use super::chart::PreColor;
use super::useq::Incidence;
use crate::curves::WeightedMeasure;
use crate::error::{AclError, Result};
use crate::operator::{Averaging, BilinearStats, VoxelSet};

/// One stored tower point. Odd levels sit on an `E` voxel, even levels on a
/// dilated `F` voxel.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TowerNode {
    pub level: usize,
    /// Index into the previous level; `None` for children of the base.
    pub parent: Option<u32>,
    /// Incidence entry realizing this node.
    pub entry: u32,
    pub t: f64,
    /// Current dilation `r_{⌊level/2⌋}` and its slice.
    pub r: f64,
    pub slice: u32,
    /// `E` voxel (odd) or dilated `F` voxel `a·n + i` (even).
    pub voxel: u32,
    /// Fraction of the base mass carried by this node's subtree.
    pub share: f64,
    pub alive: bool,
}

/// Fiber of children below one parent.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FiberSummary {
    pub child_level: usize,
    pub parent: Option<u32>,
    /// `μ_P` (odd children) or `ν_P` (even children) mass of the fiber.
    pub mass: f64,
    pub size: usize,
    pub sampled: usize,
    pub s: f64,
    pub s_tilde: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TowerBase {
    pub x0: Vec<f64>,
    pub r0: f64,
    pub t0: f64,
    pub fa: u32,
    pub entry: u32,
    /// Candidates rejected because a whole level emptied.
    pub attempts: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tower {
    pub dim: usize,
    pub base: TowerBase,
    pub levels: Vec<Vec<TowerNode>>,
    pub fibers: Vec<FiberSummary>,
    pub collapsed_fibers: usize,
    /// Pre-colors of labels `1..=d+1` (odd labels are achromatic).
    pub precolors: Vec<PreColor>,
    pub delta: f64,
    pub retention: f64,
    pub stats: BilinearStats,
    pub gamma: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TowerConfig {
    pub fiber_cap: usize,
    pub level_cap: usize,
    pub max_base_attempts: usize,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig { fiber_cap: 64, level_cap: 4096, max_base_attempts: 64 }
    }
}

/// Picks `count` entries at the stratum midpoints of the cumulative mass.
fn stratified(masses: &[f64], count: usize) -> Vec<usize> {
    let total: f64 = masses.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut i = 0;
    for s in 0..count {
        let target = (s as f64 + 0.5) / count as f64 * total;
        while i + 1 < masses.len() && acc + masses[i] <= target {
            acc += masses[i];
            i += 1;
        }
        if out.last() != Some(&i) {
            out.push(i);
        }
    }
    out
}

/// Largest node `s ≥ t` whose nodes in `(t, s]` carry at most `mass`.
pub fn node_advance(quad: &crate::operator::Quadrature, t: f64, mass: f64) -> f64 {
    let mut s = t;
    let mut acc = 0.0;
    for (&tk, &wk) in quad.t.iter().zip(&quad.w) {
        if tk <= t {
            continue;
        }
        acc += wk;
        if acc > mass {
            break;
        }
        s = tk;
    }
    s
}

struct Grower<'a> {
    inc: &'a Incidence,
    op: &'a Averaging,
    cfg: &'a TowerConfig,
}

struct Candidate {
    entry: usize,
    mass: f64,
}

impl Grower<'_> {
    fn d(&self) -> usize {
        self.op.grid.dim()
    }

    /// Children fiber of a node at `level` with parameter `t` and slice `a`.
    fn fiber(&self, level: usize, entry: usize, t: f64, a: usize) -> (Vec<Candidate>, f64, Option<f64>) {
        let inc = self.inc;
        let d = self.d();
        let g = d - level;
        let (alpha, beta) = (inc.stats.alpha, inc.stats.beta);
        let p = (d as f64) + 2.5 - level as f64;
        if level % 2 == 0 {
            let s = node_advance(&self.op.quad, t, 4f64.powf(-p) * alpha);
            let out = inc
                .fa_range(inc.fa[entry])
                .filter(|&e| inc.in_gen(e, g) && self.op.quad.t[inc.k[e] as usize] > s)
                .map(|e| Candidate { entry: e, mass: self.op.quad.w[inc.k[e] as usize] })
                .collect();
            (out, s, None)
        } else {
            let s = node_advance(&self.op.quad, t, 4f64.powf(-p) * beta);
            let q = (d as f64) + 3.0 - level as f64;
            let s_tilde = node_advance(&self.op.quad, t, 2f64.powf(-q) * (alpha * beta).sqrt());
            let r_cut = 2f64.powf(-(q + 1.0)) * (beta / alpha).sqrt();
            let r_prev = self.op.grid.r_at(a);
            let ns = self.op.grid.n_spatial() as u32;
            let dr = self.op.grid.dr();
            let out = inc
                .z_fiber(inc.z[entry])
                .iter()
                .map(|&e| e as usize)
                .filter(|&e| {
                    let tk = self.op.quad.t[inc.k[e] as usize];
                    let r = self.op.grid.r_at((inc.fa[e] / ns) as usize);
                    let in_rect = (r - r_prev).abs() <= r_cut && tk <= s_tilde;
                    inc.in_gen(e, g) && tk > s && !in_rect
                })
                .map(|e| Candidate { entry: e, mass: dr * self.op.quad.w[inc.k[e] as usize] })
                .collect();
            (out, s, Some(s_tilde))
        }
    }

    fn grow_from(&self, base_entry: usize) -> (Vec<Vec<TowerNode>>, Vec<FiberSummary>, usize) {
        let inc = self.inc;
        let d = self.d();
        let ns = self.op.grid.n_spatial() as u32;
        let base_a = (inc.fa[base_entry] / ns) as usize;
        let mut levels: Vec<Vec<TowerNode>> = Vec::new();
        let mut fibers = Vec::new();
        let mut collapsed = 0;
        // (entry, t, slice, share, parent index)
        let mut parents: Vec<(usize, f64, usize, f64, Option<u32>)> =
            vec![(base_entry, self.op.quad.t[inc.k[base_entry] as usize], base_a, 1.0, None)];
        for level in 0..=d {
            let per = (self.cfg.level_cap / parents.len().max(1)).clamp(1, self.cfg.fiber_cap);
            let mut next = Vec::new();
            for (pi, &(entry, t, a, share, _)) in parents.iter().enumerate() {
                let (mut cands, s, s_tilde) = self.fiber(level, entry, t, a);
                cands.sort_by_key(|c| (inc.k[c.entry], inc.fa[c.entry]));
                let mass: f64 = cands.iter().map(|c| c.mass).sum();
                let parent = (level > 0).then_some(pi as u32);
                let picks = stratified(&cands.iter().map(|c| c.mass).collect::<Vec<_>>(), per.min(cands.len()));
                fibers.push(FiberSummary {
                    child_level: level + 1,
                    parent,
                    mass,
                    size: cands.len(),
                    sampled: picks.len(),
                    s,
                    s_tilde,
                });
                if cands.is_empty() {
                    collapsed += 1;
                    continue;
                }
                for &i in &picks {
                    let e = cands[i].entry;
                    let child_a = if level % 2 == 1 { (inc.fa[e] / ns) as usize } else { a };
                    next.push((
                        e,
                        self.op.quad.t[inc.k[e] as usize],
                        child_a,
                        share / picks.len() as f64,
                        parent,
                    ));
                }
            }
            let child_level = level + 1;
            let nodes: Vec<TowerNode> = next
                .iter()
                .map(|&(e, t, a, share, parent)| TowerNode {
                    level: child_level,
                    parent,
                    entry: e as u32,
                    t,
                    r: self.op.grid.r_at(a),
                    slice: a as u32,
                    voxel: if child_level % 2 == 1 { inc.z[e] } else { inc.fa[e] },
                    share,
                    alive: true,
                })
                .collect();
            let empty = nodes.is_empty();
            levels.push(nodes);
            if empty {
                break;
            }
            parents = next;
        }
        (levels, fibers, collapsed)
    }
}

/// Grows the tower from the heaviest base entry of `U_{d+1}` (ties by
/// `(fa, k)`), moving to the next candidate while a whole level empties.
pub fn grow_tower(op: &Averaging, measure: &WeightedMeasure, inc: &Incidence, cfg: &TowerConfig) -> Result<Tower> {
    let d = op.grid.dim();
    let mut cands: Vec<usize> = (0..inc.len()).filter(|&e| inc.in_gen(e, d + 1)).collect();
    if cands.is_empty() {
        return Err(AclError::TowerCollapse { level: 0, detail: "top generation is empty".into() });
    }
    cands.sort_by(|&x, &y| {
        let (wx, wy) = (op.quad.w[inc.k[x] as usize], op.quad.w[inc.k[y] as usize]);
        wy.total_cmp(&wx).then((inc.fa[x], inc.k[x]).cmp(&(inc.fa[y], inc.k[y])))
    });
    let grower = Grower { inc, op, cfg };
    let mut last = String::new();
    for (attempt, &base) in cands.iter().take(cfg.max_base_attempts).enumerate() {
        let (levels, fibers, collapsed) = grower.grow_from(base);
        if levels.len() == d + 1 && !levels[d].is_empty() {
            let ns = op.grid.n_spatial() as u32;
            let fa = inc.fa[base];
            return Ok(Tower {
                dim: d,
                base: TowerBase {
                    x0: op.grid.center((fa % ns) as usize),
                    r0: op.grid.r_at((fa / ns) as usize),
                    t0: op.quad.t[inc.k[base] as usize],
                    fa,
                    entry: base as u32,
                    attempts: attempt,
                },
                levels,
                fibers,
                collapsed_fibers: collapsed,
                precolors: vec![PreColor::PreAchromatic; d + 1],
                delta: 0.0,
                retention: 1.0,
                stats: inc.stats.clone(),
                gamma: measure.gamma(),
                floor: inc.floor,
            });
        }
        last = format!("candidate {attempt} emptied level {}", levels.len());
    }
    Err(AclError::TowerCollapse { level: 0, detail: last })
}

/// Predicate of the red half-space: `t − t_prev > δ (αβ)^{1/2} t_prev^{−γ}`.
pub fn red_predicate(t: f64, t_prev: f64, delta: f64, stats: &BilinearStats, gamma: f64) -> bool {
    t - t_prev > delta * (stats.alpha * stats.beta).sqrt() * t_prev.powf(-gamma)
}

impl Tower {
    fn parent_t(&self, node: &TowerNode) -> f64 {
        match node.parent {
            Some(p) => self.levels[node.level - 2][p as usize].t,
            None => self.base.t0,
        }
    }

    fn parent_r(&self, node: &TowerNode) -> f64 {
        match node.parent {
            Some(p) => self.levels[node.level - 2][p as usize].r,
            None => self.base.r0,
        }
    }

    fn leaf_share(&self) -> f64 {
        self.levels[self.dim].iter().filter(|n| n.alive).map(|n| n.share).sum()
    }

    fn prune_dangling(&mut self) {
        for level in (0..self.dim).rev() {
            let mut has_child = vec![false; self.levels[level].len()];
            for n in self.levels[level + 1].iter().filter(|n| n.alive) {
                has_child[n.parent.expect("levels above one have parents") as usize] = true;
            }
            for (n, h) in self.levels[level].iter_mut().zip(has_child) {
                n.alive &= h;
            }
        }
        for level in 1..=self.dim {
            for i in 0..self.levels[level].len() {
                let p = self.levels[level][i].parent.expect("levels above one have parents") as usize;
                if !self.levels[level - 1][p].alive {
                    self.levels[level][i].alive = false;
                }
            }
        }
    }

    /// Root-to-node parameters `(r_0.., t_1..)` of a node.
    pub fn path(&self, level: usize, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let mut t = vec![0.0; level];
        let mut r = vec![self.base.r0; level / 2 + 1];
        let (mut l, mut i) = (level, idx);
        loop {
            let n = &self.levels[l - 1][i];
            t[l - 1] = n.t;
            if l % 2 == 0 {
                r[l / 2] = n.r;
            }
            match n.parent {
                Some(p) => {
                    l -= 1;
                    i = p as usize;
                }
                None => break,
            }
        }
        (r, t)
    }

    /// Alive nodes at `level`.
    pub fn alive(&self, level: usize) -> impl Iterator<Item = usize> + '_ {
        self.levels[level - 1].iter().enumerate().filter(|(_, n)| n.alive).map(|(i, _)| i)
    }
}

/// Majority recursion over even levels: keeps, level by level, whichever of
/// the red predicate or its complement carries more subtree share.
pub fn refine_binary(mut tower: Tower, delta: f64) -> Tower {
    refine_with(&mut tower, delta, &|t, tp, tw: &Tower| red_predicate(t, tp, delta, &tw.stats, tw.gamma));
    tower
}

/// Same recursion with an arbitrary predicate on `(t, t_parent)`.
pub fn refine_with(tower: &mut Tower, delta: f64, pred: &dyn Fn(f64, f64, &Tower) -> bool) {
    for n in tower.levels.iter_mut().flatten() {
        n.alive = true;
    }
    let before = tower.leaf_share();
    tower.delta = delta;
    for level in (2..=tower.dim + 1).step_by(2) {
        let idx = level - 1;
        let flags: Vec<Option<bool>> = tower.levels[idx]
            .iter()
            .map(|n| n.alive.then(|| pred(n.t, tower.parent_t(n), tower)))
            .collect();
        let (mut yes, mut no) = (0.0, 0.0);
        for (n, f) in tower.levels[idx].iter().zip(&flags) {
            match f {
                Some(true) => yes += n.share,
                Some(false) => no += n.share,
                None => {}
            }
        }
        let keep = yes >= no;
        tower.precolors[idx] = if keep { PreColor::PreRed } else { PreColor::PreBlue };
        for (n, f) in tower.levels[idx].iter_mut().zip(flags) {
            if f != Some(keep) {
                n.alive = false;
            }
        }
        tower.prune_dangling();
    }
    tower.retention = if before > 0.0 { tower.leaf_share() / before } else { 0.0 };
}

/// Measured constants of the stored tower.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TowerChecks {
    pub ordering: bool,
    pub slab_floor_ok: bool,
    pub min_t1_over_floor: f64,
    /// Minimum fiber mass over `fiber_floor · α` for odd child levels.
    pub fiber_alpha: f64,
    /// Minimum fiber mass over `fiber_floor · β` for even child levels.
    pub fiber_beta: f64,
    /// Minimum over stored tuples of the separation ratios.
    pub separation: f64,
    pub precolor_ok: bool,
    /// Minimum `|r_{j/2} − r_{j/2−1}| / (β/α)^{1/2}` over pre-blue levels.
    pub blue_dilation_gap: Option<f64>,
    pub retention: f64,
    pub retention_floor: f64,
    pub stored_tuples: usize,
    /// Every alive node's voxel lies in `E` (odd levels) or `F` (even
    /// levels and the base); `None` when the sets were not supplied.
    #[serde(default)]
    pub images_in_sets: Option<bool>,
    /// Largest distance, in voxels, between a continuum image and its voxel.
    pub image_drift: f64,
}

impl TowerChecks {
    pub fn passed(&self, separation_floor: f64) -> bool {
        self.ordering
            && self.slab_floor_ok
            && self.fiber_alpha >= 1.0
            && self.fiber_beta >= 1.0
            && self.separation >= separation_floor
            && self.precolor_ok
            && self.retention >= self.retention_floor
            && self.images_in_sets != Some(false)
    }
}

/// Voxel membership of the discrete images along every alive path.
pub fn images_in_sets(tower: &Tower, e: &VoxelSet, f: &VoxelSet) -> bool {
    f.contains(tower.base.fa as usize)
        && (1..=tower.dim + 1).all(|level| {
            tower.alive(level).all(|i| {
                let v = tower.levels[level - 1][i].voxel as usize;
                if level % 2 == 1 {
                    e.contains(v)
                } else {
                    f.contains(v)
                }
            })
        })
}

/// Guaranteed child-fiber mass in units of `α` (odd levels) or `β` (even
/// levels): the U-sequence tail minus the excised slab, and for even levels
/// also minus the dilation rectangle.
pub fn fiber_floor(d: usize, child_level: usize) -> f64 {
    let j = (child_level - 1) as f64;
    let d = d as f64;
    let tail = 4f64.powf(-(d + 2.0 - j));
    let slab = 4f64.powf(-(d + 2.5 - j));
    if child_level % 2 == 1 {
        tail - slab
    } else {
        tail - slab - 4f64.powf(-(d + 3.0 - j))
    }
}

/// Checks ordering, slab floor, fiber masses, separation and pre-colors on
/// every alive node.
pub fn check_tower(tower: &Tower, op: &Averaging, curve: &crate::curves::PolyCurve) -> TowerChecks {
    let d = tower.dim;
    let s = &tower.stats;
    let g = tower.gamma;
    let mut ordering = tower.base.t0 >= tower.floor;
    let mut min_t1 = f64::INFINITY;
    let mut separation = f64::INFINITY;
    let mut precolor_ok = true;
    let mut blue_gap: Option<f64> = None;
    let mut drift: f64 = 0.0;
    let h: Vec<f64> = (0..d).map(|ax| op.grid.spacing(ax)).collect();
    for level in 1..=d + 1 {
        for i in tower.alive(level) {
            let (r, t) = tower.path(level, i);
            let n = &tower.levels[level - 1][i];
            min_t1 = min_t1.min(t[0]);
            ordering &= t.windows(2).all(|w| w[0] < w[1]) && t[0] > tower.base.t0;
            let j = level;
            for (ii, &ti) in t[..j - 1].iter().enumerate() {
                let gap = (t[j - 1] - ti) * ti.powf(g);
                let scale = if j % 2 == 0 && ii == j - 2 { s.beta } else { s.alpha };
                separation = separation.min(gap / scale);
            }
            if j % 2 == 0 {
                let tp = t[j - 2];
                let red = red_predicate(t[j - 1], tp, tower.delta, s, g);
                match tower.precolors[j - 1] {
                    PreColor::PreRed => precolor_ok &= red,
                    PreColor::PreBlue => {
                        precolor_ok &= !red;
                        let gap = (r[j / 2] - tower.parent_r_at(j, i)).abs() / (s.beta / s.alpha).sqrt();
                        blue_gap = Some(blue_gap.map_or(gap, |b: f64| b.min(gap)));
                    }
                    PreColor::PreAchromatic => precolor_ok = false,
                }
            }
            // continuum image versus stored voxel
            let mut x = tower.base.x0.clone();
            for (l, &tl) in t.iter().enumerate() {
                let lab = l + 1;
                let sign = if lab % 2 == 1 { -1.0 } else { 1.0 };
                let p = curve.eval(tl, 0);
                let rr = r[lab / 2];
                for (xv, pv) in x.iter_mut().zip(&p) {
                    *xv += sign * rr * pv;
                }
            }
            let ns = op.grid.n_spatial() as u32;
            let spatial = if level % 2 == 1 { n.voxel } else { n.voxel % ns };
            let c = op.grid.center(spatial as usize);
            for ax in 0..d {
                drift = drift.max((x[ax] - c[ax]).abs() / h[ax]);
            }
        }
    }
    let live_parent = |f: &FiberSummary| match f.parent {
        None => true,
        Some(p) => tower.levels[f.child_level - 2][p as usize].alive,
    };
    let fiber_alpha = tower
        .fibers
        .iter()
        .filter(|f| f.child_level % 2 == 1 && live_parent(f))
        .map(|f| f.mass / (fiber_floor(d, f.child_level) * s.alpha))
        .fold(f64::INFINITY, f64::min);
    let fiber_beta = tower
        .fibers
        .iter()
        .filter(|f| f.child_level % 2 == 0 && live_parent(f))
        .map(|f| f.mass / (fiber_floor(d, f.child_level) * s.beta))
        .fold(f64::INFINITY, f64::min);
    TowerChecks {
        ordering,
        slab_floor_ok: min_t1 >= tower.floor && tower.base.t0 >= tower.floor,
        min_t1_over_floor: min_t1 / tower.floor,
        fiber_alpha,
        fiber_beta,
        separation,
        precolor_ok,
        blue_dilation_gap: blue_gap,
        retention: tower.retention,
        retention_floor: 2f64.powi(-(((d + 1) / 2) as i32)),
        stored_tuples: tower.alive(d + 1).count(),
        image_drift: drift,
        images_in_sets: None,
    }
}

impl Tower {
    fn parent_r_at(&self, level: usize, idx: usize) -> f64 {
        self.parent_r(&self.levels[level - 1][idx])
    }
}
