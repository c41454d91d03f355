//! Discrete incidence set `U = {(x, r, t) : (x, r) ∈ F, x − rP(t) ∈ E}` and
//! its nested refinements `U_0 ⊇ U_1 ⊇ … ⊇ U_{d+1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::WeightedMeasure;
use crate::error::{AclError, Result};
use crate::operator::{Averaging, BilinearStats, VoxelSet};

/// All incidences, sorted by `(fa, k)` where `fa = a·n_spatial + i` is the
/// dilated voxel of `F`, `k` the quadrature node and `z` the voxel of `E`.
#[derive(Clone, Debug)]
pub struct Incidence {
    pub fa: Vec<u32>,
    pub k: Vec<u16>,
    pub z: Vec<u32>,
    /// Entry belongs to `U_g` iff `alive[e] >= g` (`−1`: removed by the slab).
    pub alive: Vec<i8>,
    /// CSR by `z`: entries of the `π₂` fiber over `z` in `(a, k)` order.
    pub z_start: Vec<u32>,
    pub z_entries: Vec<u32>,
    pub stats: BilinearStats,
    pub floor: f64,
    /// `vol · Δr · w_k` per node.
    pub node_mass: Vec<f64>,
    pub generations: Vec<Generation>,
}

/// Summary of one refinement step.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Generation {
    pub generation: usize,
    /// `"slab"`, `"alpha"` (t-fibers) or `"beta"` (surface fibers).
    pub kind: String,
    pub mass: f64,
    pub entries: usize,
    pub retention: f64,
}

/// Alternating parity rule: generation `g` prunes `π₁` fibers against `α`
/// when `g ≢ d (mod 2)` and `π₂` fibers against `β` otherwise.
pub fn uses_alpha(g: usize, d: usize) -> bool {
    g % 2 != d % 2
}

impl Incidence {
    /// Enumerates `U` and computes `(α, β, κ)` from the same sums.
    pub fn build(op: &Averaging, measure: &WeightedMeasure, e: &VoxelSet, f: &VoxelSet) -> Result<Self> {
        let grid = &op.grid;
        let ns = grid.n_spatial();
        let q = op.quad.len();
        let rows: Vec<(u32, Vec<(u16, u32)>)> = f
            .iter_ones()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&fa| {
                let (a, i) = (fa / ns, fa % ns);
                let mut row = Vec::new();
                for k in 0..q {
                    let off = op.offsets.get(a, k);
                    let neg: Vec<i32> = off.iter().map(|o| -o).collect();
                    if let Some(z) = grid.shifted(i, &neg) {
                        if e.contains(z) {
                            row.push((k as u16, z as u32));
                        }
                    }
                }
                (fa as u32, row)
            })
            .collect();
        let mut fav = Vec::new();
        let mut kv = Vec::new();
        let mut zv = Vec::new();
        for (fa, row) in rows {
            for (k, z) in row {
                fav.push(fa);
                kv.push(k);
                zv.push(z);
            }
        }
        let vol = grid.voxel_volume();
        let node_mass: Vec<f64> = op.quad.w.iter().map(|w| vol * grid.dr() * w).collect();
        let value: f64 = kv.iter().map(|&k| node_mass[k as usize]).sum();
        let stats = BilinearStats::new(value, e.measure(), f.measure(), measure)?;
        let mut z_count = vec![0u32; ns + 1];
        for &z in &zv {
            z_count[z as usize + 1] += 1;
        }
        for i in 0..ns {
            z_count[i + 1] += z_count[i];
        }
        let mut fill = z_count.clone();
        let mut z_entries = vec![0u32; zv.len()];
        // entries are visited in (fa, k) order, i.e. (a, i, k): sort each
        // z-run by (a, k) afterwards
        for (e_idx, &z) in zv.iter().enumerate() {
            z_entries[fill[z as usize] as usize] = e_idx as u32;
            fill[z as usize] += 1;
        }
        for zi in 0..ns {
            let s = &mut z_entries[z_count[zi] as usize..z_count[zi + 1] as usize];
            s.sort_by_key(|&en| (fav[en as usize] as usize / ns, kv[en as usize]));
        }
        let floor = stats.slab_floor();
        let n = fav.len();
        Ok(Incidence {
            fa: fav,
            k: kv,
            z: zv,
            alive: vec![0; n],
            z_start: z_count,
            z_entries,
            stats,
            floor,
            node_mass,
            generations: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.fa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fa.is_empty()
    }

    pub fn in_gen(&self, e: usize, g: usize) -> bool {
        self.alive[e] >= g as i8
    }

    pub fn mass(&self, g: usize) -> f64 {
        (0..self.len()).filter(|&e| self.in_gen(e, g)).map(|e| self.node_mass[self.k[e] as usize]).sum()
    }

    /// Range of entries on the `π₁` fiber of `fa`.
    pub fn fa_range(&self, fa: u32) -> std::ops::Range<usize> {
        let s = self.fa.partition_point(|&v| v < fa);
        let e = self.fa.partition_point(|&v| v <= fa);
        s..e
    }

    pub fn z_fiber(&self, z: u32) -> &[u32] {
        &self.z_entries[self.z_start[z as usize] as usize..self.z_start[z as usize + 1] as usize]
    }

    fn record(&mut self, g: usize, kind: &str, prev: f64) -> Generation {
        let mass = self.mass(g);
        let entries = (0..self.len()).filter(|&e| self.in_gen(e, g)).count();
        let gen = Generation {
            generation: g,
            kind: kind.into(),
            mass,
            entries,
            retention: if prev > 0.0 { mass / prev } else { 0.0 },
        };
        self.generations.push(gen.clone());
        gen
    }
}

/// `U_0 … U_{d+1}`; errors if a generation keeps less than a quarter of the
/// previous mass.
pub fn build_u_sequence(
    op: &Averaging,
    measure: &WeightedMeasure,
    e: &VoxelSet,
    f: &VoxelSet,
) -> Result<Incidence> {
    let mut inc = Incidence::build(op, measure, e, f)?;
    let d = op.grid.dim();
    let quad_t = &op.quad.t;
    let full = inc.stats.value;
    for en in 0..inc.len() {
        if quad_t[inc.k[en] as usize] < inc.floor {
            inc.alive[en] = -1;
        }
    }
    let mut prev = inc.record(0, "slab", full).mass;
    if prev <= 0.0 {
        return Err(AclError::EmptyIncidence);
    }
    let ns = op.grid.n_spatial();
    let dr = op.grid.dr();
    let (alpha, beta) = (inc.stats.alpha, inc.stats.beta);
    for g in 1..=d + 1 {
        let (fiber_cut, tail_cut) = (4f64.powf(-(g as f64 + 0.5)), 4f64.powi(-(g as i32 + 1)));
        let mut kill = Vec::new();
        if uses_alpha(g, d) {
            let (fc, tc) = (fiber_cut * alpha, tail_cut * alpha);
            let mut s = 0;
            while s < inc.len() {
                let mut e = s;
                while e < inc.len() && inc.fa[e] == inc.fa[s] {
                    e += 1;
                }
                let live: Vec<usize> = (s..e).filter(|&x| inc.in_gen(x, g - 1)).collect();
                let total: f64 = live.iter().map(|&x| op.quad.w[inc.k[x] as usize]).sum();
                if total <= fc {
                    kill.extend(live);
                } else {
                    let mut tail = 0.0;
                    for &x in live.iter().rev() {
                        if tail <= tc {
                            kill.push(x);
                        }
                        tail += op.quad.w[inc.k[x] as usize];
                    }
                }
                s = e;
            }
        } else {
            let (fc, tc) = (fiber_cut * beta, tail_cut * beta);
            for z in 0..ns as u32 {
                let live: Vec<usize> =
                    inc.z_fiber(z).iter().map(|&x| x as usize).filter(|&x| inc.in_gen(x, g - 1)).collect();
                if live.is_empty() {
                    continue;
                }
                let total: f64 = live.iter().map(|&x| dr * op.quad.w[inc.k[x] as usize]).sum();
                if total <= fc {
                    kill.extend(live);
                    continue;
                }
                // tail over all dilations at nodes k' > k
                let mut by_k = vec![0.0; op.quad.len()];
                for &x in &live {
                    by_k[inc.k[x] as usize] += dr * op.quad.w[inc.k[x] as usize];
                }
                let mut tail = vec![0.0; op.quad.len() + 1];
                for k in (0..op.quad.len()).rev() {
                    tail[k] = tail[k + 1] + by_k[k];
                }
                kill.extend(live.into_iter().filter(|&x| tail[inc.k[x] as usize + 1] <= tc));
            }
        }
        let mut killed = vec![false; inc.len()];
        for x in kill {
            killed[x] = true;
        }
        for x in 0..inc.len() {
            if inc.in_gen(x, g - 1) && !killed[x] {
                inc.alive[x] = g as i8;
            }
        }
        let gen = inc.record(g, if uses_alpha(g, d) { "alpha" } else { "beta" }, prev);
        if gen.mass < 0.25 * prev {
            return Err(AclError::RefinementContract { generation: g, kept: gen.mass, previous: prev });
        }
        prev = gen.mass;
    }
    Ok(inc)
}

/// Direct re-integration of the fiber property at generation `g`: minimum
/// over live entries of (mass strictly after the entry's node on the
/// previous generation) / threshold.
pub fn fiber_property(inc: &Incidence, op: &Averaging, g: usize) -> f64 {
    let d = op.grid.dim();
    let dr = op.grid.dr();
    let thr = 4f64.powi(-(g as i32 + 1));
    let mut worst = f64::INFINITY;
    if uses_alpha(g, d) {
        let mut s = 0;
        while s < inc.len() {
            let mut e = s;
            while e < inc.len() && inc.fa[e] == inc.fa[s] {
                e += 1;
            }
            let mut tail = 0.0;
            for x in (s..e).rev() {
                if inc.in_gen(x, g) {
                    worst = worst.min(tail / (thr * inc.stats.alpha));
                }
                if inc.in_gen(x, g - 1) {
                    tail += op.quad.w[inc.k[x] as usize];
                }
            }
            s = e;
        }
    } else {
        for z in 0..op.grid.n_spatial() as u32 {
            let fib = inc.z_fiber(z);
            for &x in fib {
                if !inc.in_gen(x as usize, g) {
                    continue;
                }
                let kx = inc.k[x as usize];
                let tail: f64 = fib
                    .iter()
                    .filter(|&&y| inc.in_gen(y as usize, g - 1) && inc.k[y as usize] > kx)
                    .map(|&y| dr * op.quad.w[inc.k[y as usize] as usize])
                    .sum();
                worst = worst.min(tail / (thr * inc.stats.beta));
            }
        }
    }
    worst
}
