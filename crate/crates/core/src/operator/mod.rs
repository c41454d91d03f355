//! Discretized averaging operator `Af(x,r) = Σ_k w_k f(x - r P(t_k))`, its
//! adjoint and the bilinear pairing on voxel sets.
//!
//! Spatial voxels are indexed with axis 0 fastest; functions on the product
//! with the dilation axis are stored slice by slice (`a * n_spatial + i`).
//! Translations `r P(t_k)` are rounded to whole voxels, so `A` and `A*` are
//! exact transposes of each other.

pub mod families;
pub mod riesz;

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{PolyCurve, WeightedMeasure};
use crate::error::{AclError, Result};

/// Axis-aligned spatial box with a dilation range `[r_lo, r_hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
    pub r_lo: f64,
    pub r_hi: f64,
    pub nr: usize,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>, r_range: (f64, f64), nr: usize) -> Self {
        assert!(lo.len() == hi.len() && lo.len() == res.len());
        Grid { lo, hi, res, r_lo: r_range.0, r_hi: r_range.1, nr }
    }

    /// Cube `[lo, hi]^d` with `res` voxels per axis and dilations in `[1, 2]`.
    pub fn cube(dim: usize, lo: f64, hi: f64, res: usize, nr: usize) -> Self {
        Grid::new(vec![lo; dim], vec![hi; dim], vec![res; dim], (1.0, 2.0), nr)
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.res[axis] as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn dr(&self) -> f64 {
        (self.r_hi - self.r_lo) / self.nr as f64
    }

    pub fn r_at(&self, a: usize) -> f64 {
        self.r_lo + (a as f64 + 0.5) * self.dr()
    }

    pub fn n_spatial(&self) -> usize {
        self.res.iter().product()
    }

    pub fn n_dilated(&self) -> usize {
        self.n_spatial() * self.nr
    }

    pub fn n_rows(&self) -> usize {
        self.n_spatial() / self.res[0]
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        self.res
            .iter()
            .map(|&n| {
                let c = idx % n;
                idx /= n;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.res).rev().fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Index of `coords + shift` when it stays inside the grid.
    pub fn shifted(&self, idx: usize, shift: &[i32]) -> Option<usize> {
        let mut out = 0usize;
        let mut stride = 1usize;
        let mut rest = idx;
        for (ax, &n) in self.res.iter().enumerate() {
            let c = (rest % n) as i64 + shift[ax] as i64;
            rest /= n;
            if c < 0 || c >= n as i64 {
                return None;
            }
            out += c as usize * stride;
            stride *= n;
        }
        Some(out)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .enumerate()
            .map(|(ax, &c)| self.lo[ax] + (c as f64 + 0.5) * self.spacing(ax))
            .collect()
    }

    /// Voxel containing `x`, if inside.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut coords = Vec::with_capacity(self.dim());
        for ax in 0..self.dim() {
            let c = ((x[ax] - self.lo[ax]) / self.spacing(ax)).floor();
            if c < 0.0 || c >= self.res[ax] as f64 {
                return None;
            }
            coords.push(c as usize);
        }
        Some(self.index(&coords))
    }
}

/// Composite midpoint rule on `[a, b]` with weights `λ(t_k) Δt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl Quadrature {
    pub fn midpoint(measure: &WeightedMeasure, a: f64, b: f64, n: usize) -> Self {
        let dt = (b - a) / n as f64;
        let t: Vec<f64> = (0..n).map(|k| a + (k as f64 + 0.5) * dt).collect();
        let w = t.iter().map(|&tk| measure.weight(tk) * dt).collect();
        Quadrature { t, w, a, b }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.t.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Voxel translations `round(r_a P(t_k) / h)` for every slice and node.
#[derive(Clone, Debug)]
pub struct Offsets {
    pub dim: usize,
    pub nr: usize,
    pub q: usize,
    data: Vec<i32>,
}

impl Offsets {
    pub fn new(curve: &PolyCurve, grid: &Grid, quad: &Quadrature) -> Self {
        let dim = grid.dim();
        let (nr, q) = (grid.nr, quad.len());
        let mut data = vec![0i32; nr * q * dim];
        let mut p = vec![0.0; dim];
        for (k, &t) in quad.t.iter().enumerate() {
            curve.eval_into(t, 0, &mut p);
            for a in 0..nr {
                let r = grid.r_at(a);
                for ax in 0..dim {
                    data[(a * q + k) * dim + ax] = (r * p[ax] / grid.spacing(ax)).round() as i32;
                }
            }
        }
        Offsets { dim, nr, q, data }
    }

    #[inline]
    pub fn get(&self, a: usize, k: usize) -> &[i32] {
        let s = (a * self.q + k) * self.dim;
        &self.data[s..s + self.dim]
    }

    /// Per-axis `(min, max)` offset.
    pub fn extent(&self) -> Vec<(i32, i32)> {
        (0..self.dim)
            .map(|ax| {
                let it = self.data.iter().skip(ax).step_by(self.dim);
                (*it.clone().min().unwrap_or(&0), *it.max().unwrap_or(&0))
            })
            .collect()
    }
}

/// Bundles curve, grid and quadrature into an evaluable operator.
#[derive(Clone, Debug)]
pub struct Averaging {
    pub grid: Grid,
    pub quad: Quadrature,
    pub offsets: Offsets,
}

impl Averaging {
    pub fn new(curve: &PolyCurve, grid: Grid, quad: Quadrature) -> Self {
        let offsets = Offsets::new(curve, &grid, &quad);
        Averaging { grid, quad, offsets }
    }

    pub fn with_measure(curve: &PolyCurve, measure: &WeightedMeasure, grid: Grid, interval: (f64, f64), nodes: usize) -> Self {
        let quad = Quadrature::midpoint(measure, interval.0, interval.1, nodes);
        Averaging::new(curve, grid, quad)
    }

    fn check_box(&self) -> Result<()> {
        for (ax, (lo, hi)) in self.offsets.extent().into_iter().enumerate() {
            let span = (hi - lo) as usize;
            if span >= self.grid.res[ax] {
                return Err(AclError::BoxTooSmall { axis: ax, padding: span + 1 - self.grid.res[ax] });
            }
        }
        Ok(())
    }

    /// `Af` for a gridded function on the spatial grid (zero outside).
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(f.len(), self.grid.n_spatial());
        self.check_box()?;
        let n = self.grid.n_spatial();
        let mut out = vec![0.0; self.grid.n_dilated()];
        out.par_chunks_mut(n).enumerate().for_each(|(a, slice)| {
            let neg: Vec<Vec<i32>> = (0..self.quad.len())
                .map(|k| self.offsets.get(a, k).iter().map(|o| -o).collect())
                .collect();
            for (i, v) in slice.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, sh) in neg.iter().enumerate() {
                    if let Some(j) = self.grid.shifted(i, sh) {
                        acc += self.quad.w[k] * f[j];
                    }
                }
                *v = acc;
            }
        });
        Ok(out)
    }

    /// `A*g(y) = Σ_a Δr Σ_k w_k g(y + r_a P(t_k), r_a)`.
    pub fn adjoint_apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(g.len(), self.grid.n_dilated());
        self.check_box()?;
        let n = self.grid.n_spatial();
        let dr = self.grid.dr();
        let per_slice: Vec<Vec<f64>> = (0..self.grid.nr)
            .into_par_iter()
            .map(|a| {
                let slice = &g[a * n..(a + 1) * n];
                let mut out = vec![0.0; n];
                for k in 0..self.quad.len() {
                    let sh = self.offsets.get(a, k);
                    for (i, o) in out.iter_mut().enumerate() {
                        if let Some(j) = self.grid.shifted(i, sh) {
                            *o += self.quad.w[k] * slice[j];
                        }
                    }
                }
                out
            })
            .collect();
        let mut out = vec![0.0; n];
        for s in per_slice {
            for (o, v) in out.iter_mut().zip(s) {
                *o += dr * v;
            }
        }
        Ok(out)
    }

    /// `Aχ_E` through run-length encoding: each shifted run is added to a
    /// difference array, then rows are prefix-summed.
    pub fn apply_set(&self, e: &VoxelSet) -> Vec<f64> {
        assert!(!e.dilated && e.grid.res == self.grid.res);
        let runs = e.runs(0);
        let n = self.grid.n_spatial();
        let mut out = vec![0.0; self.grid.n_dilated()];
        out.par_chunks_mut(n).enumerate().for_each(|(a, slice)| {
            self.scatter_runs(&runs, |k| (self.offsets.get(a, k).to_vec(), self.quad.w[k]), slice);
        });
        out
    }

    /// `A*χ_F` through run-length encoding of each dilation slice.
    pub fn adjoint_set(&self, f: &VoxelSet) -> Vec<f64> {
        assert!(f.dilated && f.grid.res == self.grid.res && f.grid.nr == self.grid.nr);
        let n = self.grid.n_spatial();
        let dr = self.grid.dr();
        let per_slice: Vec<Vec<f64>> = (0..self.grid.nr)
            .into_par_iter()
            .map(|a| {
                let runs = f.runs(a);
                let mut out = vec![0.0; n];
                if !runs.is_empty() {
                    self.scatter_runs(
                        &runs,
                        |k| (self.offsets.get(a, k).iter().map(|o| -o).collect(), self.quad.w[k] * dr),
                        &mut out,
                    );
                }
                out
            })
            .collect();
        let mut out = vec![0.0; n];
        for s in per_slice {
            for (o, v) in out.iter_mut().zip(s) {
                *o += v;
            }
        }
        out
    }

    fn scatter_runs<F>(&self, runs: &[Run], shift_weight: F, out: &mut [f64])
    where
        F: Fn(usize) -> (Vec<i32>, f64),
    {
        let g = &self.grid;
        let n0 = g.res[0];
        let rows = g.n_rows();
        let mut diff = vec![0.0; rows * (n0 + 1)];
        let row_res = &g.res[1..];
        let run_rows: Vec<Vec<usize>> = runs
            .iter()
            .map(|r| {
                let mut rest = r.row;
                row_res
                    .iter()
                    .map(|&n| {
                        let c = rest % n;
                        rest /= n;
                        c
                    })
                    .collect()
            })
            .collect();
        for k in 0..self.quad.len() {
            let (sh, w) = shift_weight(k);
            if w == 0.0 {
                continue;
            }
            'run: for (run, rc) in runs.iter().zip(&run_rows) {
                let mut row = 0usize;
                let mut stride = 1usize;
                for (ax, &n) in row_res.iter().enumerate() {
                    let c = rc[ax] as i64 + sh[ax + 1] as i64;
                    if c < 0 || c >= n as i64 {
                        continue 'run;
                    }
                    row += c as usize * stride;
                    stride *= n;
                }
                let s = (run.start as i64 + sh[0] as i64).clamp(0, n0 as i64) as usize;
                let e = (run.end as i64 + sh[0] as i64).clamp(0, n0 as i64) as usize;
                if s < e {
                    diff[row * (n0 + 1) + s] += w;
                    diff[row * (n0 + 1) + e] -= w;
                }
            }
        }
        for row in 0..rows {
            let mut acc = 0.0;
            let base = row * (n0 + 1);
            for x in 0..n0 {
                acc += diff[base + x];
                out[row * n0 + x] += acc;
            }
        }
    }

    /// `⟨Aχ_E, χ_F⟩` together with the normalized quantities `α`, `β`.
    pub fn bilinear(&self, measure: &WeightedMeasure, e: &VoxelSet, f: &VoxelSet) -> Result<BilinearStats> {
        let af = self.apply_set(e);
        let value = f.iter_ones().map(|idx| af[idx]).sum::<f64>() * self.grid.voxel_volume() * self.grid.dr();
        BilinearStats::new(value, e.measure(), f.measure(), measure)
    }

    /// The same pairing evaluated as `⟨χ_E, A*χ_F⟩`.
    pub fn bilinear_adjoint(&self, e: &VoxelSet, f: &VoxelSet) -> f64 {
        let ag = self.adjoint_set(f);
        e.iter_ones().map(|idx| ag[idx]).sum::<f64>() * self.grid.voxel_volume()
    }
}

/// `⟨Aχ_E,χ_F⟩ = α|F| = β|E|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearStats {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    #[serde(rename = "E_measure")]
    pub e_measure: f64,
    #[serde(rename = "F_measure")]
    pub f_measure: f64,
    #[serde(rename = "K")]
    pub k: u32,
    pub dim: usize,
}

impl BilinearStats {
    pub fn new(value: f64, e_measure: f64, f_measure: f64, measure: &WeightedMeasure) -> Result<Self> {
        if !(value > 0.0) || e_measure == 0.0 || f_measure == 0.0 {
            return Err(AclError::EmptyIncidence);
        }
        Ok(BilinearStats {
            value,
            alpha: value / f_measure,
            beta: value / e_measure,
            kappa: measure.kappa_f64(),
            e_measure,
            f_measure,
            k: measure.k,
            dim: measure.dim,
        })
    }

    pub fn gamma(&self) -> f64 {
        2.0 * self.k as f64 / (self.dim * (self.dim + 1)) as f64
    }

    /// Lower end `(α/2κ)^κ` of the parameter range kept by the refinement.
    pub fn slab_floor(&self) -> f64 {
        (self.alpha / (2.0 * self.kappa)).powf(self.kappa)
    }
}

/// Maximal run `[start, end)` of set voxels along axis 0 in one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Run {
    pub row: usize,
    pub start: usize,
    pub end: usize,
}

/// Membership mask on the spatial grid (`dilated == false`) or on the
/// product with the dilation slices.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelSet {
    pub grid: Grid,
    pub dilated: bool,
    pub bits: BitVec,
}

impl VoxelSet {
    pub fn empty(grid: &Grid, dilated: bool) -> Self {
        let n = if dilated { grid.n_dilated() } else { grid.n_spatial() };
        VoxelSet { grid: grid.clone(), dilated, bits: bitvec![0; n] }
    }

    pub fn from_spatial_fn(grid: &Grid, pred: impl Fn(&[f64]) -> bool + Sync) -> Self {
        let bits: Vec<bool> = (0..grid.n_spatial()).into_par_iter().map(|i| pred(&grid.center(i))).collect();
        VoxelSet { grid: grid.clone(), dilated: false, bits: bits.into_iter().collect() }
    }

    pub fn from_dilated_fn(grid: &Grid, pred: impl Fn(&[f64], f64) -> bool + Sync) -> Self {
        let n = grid.n_spatial();
        let bits: Vec<bool> = (0..grid.n_dilated())
            .into_par_iter()
            .map(|idx| pred(&grid.center(idx % n), grid.r_at(idx / n)))
            .collect();
        VoxelSet { grid: grid.clone(), dilated: true, bits: bits.into_iter().collect() }
    }

    /// `{ v > threshold }` for a function on the dilated grid.
    pub fn superlevel(grid: &Grid, values: &[f64], threshold: f64) -> Self {
        assert_eq!(values.len(), grid.n_dilated());
        VoxelSet { grid: grid.clone(), dilated: true, bits: values.iter().map(|&v| v > threshold).collect() }
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn measure(&self) -> f64 {
        let cell = if self.dilated { self.grid.voxel_volume() * self.grid.dr() } else { self.grid.voxel_volume() };
        self.count() as f64 * cell
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn union(&self, other: &VoxelSet) -> VoxelSet {
        let mut out = self.clone();
        out.bits |= other.bits.clone();
        out
    }

    pub fn intersection(&self, other: &VoxelSet) -> VoxelSet {
        let mut out = self.clone();
        out.bits &= other.bits.clone();
        out
    }

    pub fn is_subset(&self, other: &VoxelSet) -> bool {
        self.bits.iter_ones().all(|i| other.bits[i])
    }

    /// True when some voxel in the outermost layer of the box is set.
    pub fn touches_boundary(&self) -> bool {
        let n = self.grid.n_spatial();
        self.iter_ones().any(|idx| {
            let c = self.grid.coords(idx % n);
            c.iter().zip(&self.grid.res).any(|(&ci, &r)| ci == 0 || ci + 1 == r)
        })
    }

    /// Runs along axis 0 of slice `a` (ignored for spatial sets).
    pub fn runs(&self, a: usize) -> Vec<Run> {
        let n0 = self.grid.res[0];
        let n = self.grid.n_spatial();
        let base = if self.dilated { a * n } else { 0 };
        let mut runs = Vec::new();
        for row in 0..self.grid.n_rows() {
            let off = base + row * n0;
            let mut x = 0;
            while x < n0 {
                if self.bits[off + x] {
                    let s = x;
                    while x < n0 && self.bits[off + x] {
                        x += 1;
                    }
                    runs.push(Run { row, start: s, end: x });
                } else {
                    x += 1;
                }
            }
        }
        runs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> (PolyCurve, WeightedMeasure, Averaging) {
        let c = PolyCurve::moment(2);
        let m = WeightedMeasure::new(2, 0);
        let g = Grid::cube(2, -1.0, 3.0, 40, 6);
        let op = Averaging::with_measure(&c, &m, g, (0.0, 1.0), 50);
        (c, m, op)
    }

    fn random_set(grid: &Grid, seed: u64, dilated: bool) -> VoxelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-0.5..2.0), rng.gen_range(-0.5..2.0), rng.gen_range(0.2..0.7)))
            .collect();
        let inside = move |x: &[f64]| centers.iter().any(|&(a, b, r)| (x[0] - a).powi(2) + (x[1] - b).powi(2) < r * r);
        if dilated {
            VoxelSet::from_dilated_fn(grid, |x, _| inside(x))
        } else {
            VoxelSet::from_spatial_fn(grid, inside)
        }
    }

    #[test]
    fn set_path_matches_general_path() {
        let (_, _, op) = small();
        let e = random_set(&op.grid, 1, false);
        let fvals: Vec<f64> = e.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let a = op.apply(&fvals).unwrap();
        let b = op.apply_set(&e);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let f = random_set(&op.grid, 2, true);
        let gvals: Vec<f64> = f.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let a = op.adjoint_apply(&gvals).unwrap();
        let b = op.adjoint_set(&f);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_is_exact() {
        let (_, m, op) = small();
        for seed in 0..5 {
            let e = random_set(&op.grid, seed, false);
            let f = random_set(&op.grid, seed + 10, true);
            if let Ok(st) = op.bilinear(&m, &e, &f) {
                let adj = op.bilinear_adjoint(&e, &f);
                assert!((st.value - adj).abs() <= 1e-9 * st.value);
            }
        }
    }

    #[test]
    fn constant_function_gives_total_weight() {
        let c = PolyCurve::moment(2);
        let m = WeightedMeasure::new(2, 2);
        let g = Grid::cube(2, -4.0, 4.0, 64, 4);
        let op = Averaging::with_measure(&c, &m, g.clone(), (0.0, 1.0), 40);
        let af = op.apply(&vec![1.0; g.n_spatial()]).unwrap();
        let total = m.weight_integral(0.0, 1.0).unwrap();
        // Interior node: x - rP(t) stays in the box for all t.
        let idx = g.locate(&[1.0, 1.0]).unwrap();
        for a in 0..g.nr {
            assert!((af[a * g.n_spatial() + idx] - total).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_adjoint() {
        let (_, _, op) = small();
        let z = op.adjoint_apply(&vec![0.0; op.grid.n_dilated()]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curve_larger_than_box_is_rejected() {
        let c = PolyCurve::moment(2);
        let m = WeightedMeasure::new(2, 0);
        let op = Averaging::with_measure(&c, &m, Grid::cube(2, 0.0, 0.5, 10, 2), (0.0, 1.0), 20);
        assert!(matches!(op.apply(&vec![0.0; 100]), Err(AclError::BoxTooSmall { .. })));
    }

    #[test]
    fn empty_incidence() {
        let (_, m, op) = small();
        let e = VoxelSet::from_spatial_fn(&op.grid, |x| x[0] > 2.5 && x[1] > 2.5);
        let f = VoxelSet::from_dilated_fn(&op.grid, |x, _| x[0] < -0.5);
        assert_eq!(op.bilinear(&m, &e, &f), Err(AclError::EmptyIncidence));
    }

    #[test]
    fn full_sets_give_alpha_total_weight() {
        let c = PolyCurve::moment(2);
        let m = WeightedMeasure::new(2, 0);
        let g = Grid::cube(2, -3.0, 3.0, 60, 4);
        let op = Averaging::with_measure(&c, &m, g.clone(), (0.0, 1.0), 30);
        let e = VoxelSet::from_spatial_fn(&g, |_| true);
        let f = VoxelSet::from_dilated_fn(&g, |x, _| x[0].abs() < 0.5 && x[1].abs() < 0.5);
        let st = op.bilinear(&m, &e, &f).unwrap();
        assert!((st.alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_the_set() {
        let (_, _, op) = small();
        let e = random_set(&op.grid, 4, false);
        let big = e.union(&random_set(&op.grid, 5, false));
        let a = op.apply_set(&e);
        let b = op.apply_set(&big);
        assert!(a.iter().zip(&b).all(|(x, y)| *x <= *y + 1e-12));
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let c = PolyCurve::moment(2);
        let m = WeightedMeasure::new(2, 0);
        let g = Grid::cube(2, -1.0, 3.0, 160, 8);
        let e = VoxelSet::from_spatial_fn(&g, |x| x[0] * x[0] + x[1] * x[1] < 0.36);
        let f = VoxelSet::from_dilated_fn(&g, |x, _| (x[0] - 0.8).powi(2) + (x[1] - 0.6).powi(2) < 0.25);
        let v1 = Averaging::with_measure(&c, &m, g.clone(), (0.0, 1.0), 400).bilinear(&m, &e, &f).unwrap().value;
        let v2 = Averaging::with_measure(&c, &m, g, (0.0, 1.0), 800).bilinear(&m, &e, &f).unwrap().value;
        assert!((v1 - v2).abs() < 0.01 * v2);
    }
}
