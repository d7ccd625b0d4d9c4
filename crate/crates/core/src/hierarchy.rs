//! Hierarchical smooth spaces over nested refinements of the two-patch domain.
//!
//! Levels carry dyadically refined copies of the coupled space. Level 0
//! covers the whole domain; each deeper subdomain is a union of complete
//! 2x2 child blocks of cells selected one level up, so every parametric
//! point belongs to exactly one active cell. A level-l basis function is
//! active when its support lies inside the level-l subdomain but not inside
//! the level-(l+1) subdomain.

use crate::bspline::{BasisWindow, RefinementMatrix, UnivariateSplineSpace};
use crate::error::{Error, Result};
use crate::geometry::{compute_gluing, GluingData, PatchId, TwoPatchGeometry};
use crate::space::{BasisFunction, CoupledSpace, Jet2, Smoothness};
use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};

/// One cell of a level's parametric grid on one patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub patch: PatchId,
    pub ex: usize,
    pub ey: usize,
}

#[derive(Debug, Clone)]
struct Level {
    space: CoupledSpace,
    /// Subdomain Omega^l as a set of level-l cells. Level 0 holds every cell.
    cells: BTreeSet<Cell>,
    active_cells: Vec<Cell>,
    /// Active basis functions: local index -> global dof.
    active: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalSpace {
    geometry: TwoPatchGeometry,
    glue: GluingData,
    smoothness: Smoothness,
    levels: Vec<Level>,
    /// One-level refinement of S_p^r, steps[l] maps level l to l+1.
    steps: Vec<RefinementMatrix>,
    /// cums[l][m - l - 1] chains steps l..m.
    cums: Vec<Vec<RefinementMatrix>>,
    ndof: usize,
}

/// An active function visible on some cell.
#[derive(Debug, Clone, Copy)]
pub struct ActiveFn {
    pub level: usize,
    pub local: usize,
    pub dof: usize,
}

/// Everything needed to evaluate all active functions on one active cell.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub level: usize,
    pub cell: Cell,
    /// Parametric bounds ((x1a, x1b), (x2a, x2b)).
    pub bounds: ((f64, f64), (f64, f64)),
    pub funcs: Vec<ActiveFn>,
    /// Per function, (p+1)^2 row-major coefficients over the cell's tensor
    /// window at this cell's level.
    coeffs: Vec<Vec<f64>>,
    window: (usize, usize),
}

impl CellContext {
    /// Tensor coefficients of funcs[k] over the cell's (p+1)^2 window,
    /// row-major in (x index, y index) offsets from `window()`.
    pub fn local_coeffs(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    /// First tensor index of the cell's window in each direction.
    pub fn window(&self) -> (usize, usize) {
        self.window
    }
}

impl HierarchicalSpace {
    pub fn new(
        geometry: TwoPatchGeometry,
        degree: usize,
        regularity: usize,
        smoothness: Smoothness,
        initial_elements: usize,
    ) -> Result<Self> {
        if initial_elements == 0 {
            return Err(Error::validation("initial mesh needs at least one element"));
        }
        let glue = compute_gluing(&geometry)?;
        let brk: Vec<f64> =
            (1..initial_elements).map(|i| i as f64 / initial_elements as f64).collect();
        let space = UnivariateSplineSpace::make(degree, regularity, &brk)?;
        let coupled = CoupledSpace::new(space, &glue, smoothness)?;
        let ne = coupled.univariate().num_elements();
        let mut cells = BTreeSet::new();
        for patch in PatchId::BOTH {
            for ex in 0..ne {
                for ey in 0..ne {
                    cells.insert(Cell { patch, ex, ey });
                }
            }
        }
        let mut h = Self {
            geometry,
            glue,
            smoothness,
            levels: vec![Level { space: coupled, cells, active_cells: Vec::new(), active: BTreeMap::new() }],
            steps: Vec::new(),
            cums: Vec::new(),
            ndof: 0,
        };
        h.recompute();
        Ok(h)
    }

    pub fn geometry(&self) -> &TwoPatchGeometry {
        &self.geometry
    }

    pub fn glue(&self) -> &GluingData {
        &self.glue
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn level_space(&self, l: usize) -> &CoupledSpace {
        &self.levels[l].space
    }

    pub fn level_cells(&self, l: usize) -> &BTreeSet<Cell> {
        &self.levels[l].cells
    }

    pub fn active_cells(&self, l: usize) -> &[Cell] {
        &self.levels[l].active_cells
    }

    pub fn all_active_cells(&self) -> Vec<(usize, Cell)> {
        let mut v = Vec::new();
        for (l, level) in self.levels.iter().enumerate() {
            v.extend(level.active_cells.iter().map(|&c| (l, c)));
        }
        v
    }

    /// Active functions of level l as (local index, global dof), sorted by
    /// local index.
    pub fn active_functions(&self, l: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.levels[l].active.iter().map(|(&g, &dof)| (g, dof))
    }

    /// Parametric bounds of a level-l cell.
    pub fn cell_bounds(&self, l: usize, cell: Cell) -> ((f64, f64), (f64, f64)) {
        let s = self.levels[l].space.univariate();
        (s.element_bounds(cell.ex), s.element_bounds(cell.ey))
    }

    /// Marks active cells for refinement: each (level, cell) is replaced by
    /// its four children in the next level's subdomain.
    pub fn refine_cells(&mut self, marked: &[(usize, Cell)]) -> Result<()> {
        for &(l, c) in marked {
            if l >= self.levels.len() || !self.levels[l].active_cells.contains(&c) {
                return Err(Error::validation(format!(
                    "cell {c:?} at level {l} is not an active cell"
                )));
            }
        }
        let Some(max_l) = marked.iter().map(|&(l, _)| l).max() else {
            return Ok(());
        };
        while self.levels.len() <= max_l + 1 {
            let last = self.levels.last().unwrap();
            let (fine, lam) = last.space.univariate().refine_dyadic();
            let coupled = CoupledSpace::new(fine, &self.glue, self.smoothness)?;
            self.steps.push(lam);
            self.levels.push(Level {
                space: coupled,
                cells: BTreeSet::new(),
                active_cells: Vec::new(),
                active: BTreeMap::new(),
            });
        }
        for &(l, c) in marked {
            for (dx, dy) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                self.levels[l + 1].cells.insert(Cell {
                    patch: c.patch,
                    ex: 2 * c.ex + dx,
                    ey: 2 * c.ey + dy,
                });
            }
        }
        self.recompute();
        Ok(())
    }

    /// Refines every active cell, advancing the whole mesh one dyadic level.
    pub fn refine_uniform(&mut self) -> Result<()> {
        let marked = self.all_active_cells();
        self.refine_cells(&marked)
    }

    fn recompute(&mut self) {
        self.cums = (0..self.steps.len())
            .map(|from| {
                let mut chain = Vec::new();
                let mut acc = self.steps[from].clone();
                chain.push(acc.clone());
                for mid in from + 1..self.steps.len() {
                    acc = acc.compose(&self.steps[mid]);
                    chain.push(acc.clone());
                }
                chain
            })
            .collect();

        let nl = self.levels.len();
        let mut offset = 0;
        for l in 0..nl {
            let next_cells = if l + 1 < nl { Some(self.levels[l + 1].cells.clone()) } else { None };
            let level = &self.levels[l];
            let is_refined = |c: &Cell| -> bool {
                next_cells.as_ref().is_some_and(|s| {
                    [(0, 0), (0, 1), (1, 0), (1, 1)].iter().all(|&(dx, dy)| {
                        s.contains(&Cell { patch: c.patch, ex: 2 * c.ex + dx, ey: 2 * c.ey + dy })
                    })
                })
            };
            let active_cells: Vec<Cell> =
                level.cells.iter().copied().filter(|c| !is_refined(c)).collect();

            let mut candidates = BTreeSet::new();
            for &c in &level.cells {
                candidates.extend(functions_touching_cell(&level.space, c));
            }
            let mut active = BTreeMap::new();
            for &g in &candidates {
                let supp = support_cells(&level.space, level.space.function(g));
                if supp.iter().all(|c| level.cells.contains(c))
                    && !supp.iter().all(|c| is_refined(c))
                {
                    active.insert(g, offset + active.len());
                }
            }
            offset += active.len();
            self.levels[l].active_cells = active_cells;
            self.levels[l].active = active;
        }
        self.ndof = offset;
    }

    /// Builds the evaluation context for one active cell: all active
    /// functions whose support covers it together with their tensor
    /// coefficients over the cell's local window.
    pub fn cell_context(&self, m: usize, cell: Cell) -> CellContext {
        let sm = self.levels[m].space.univariate();
        let p = sm.degree();
        let ix0 = sm.functions_on_element(cell.ex).0;
        let iy0 = sm.functions_on_element(cell.ey).0;
        let mut funcs = Vec::new();
        let mut coeffs = Vec::new();
        for l in 0..=m {
            let anc = Cell {
                patch: cell.patch,
                ex: cell.ex >> (m - l),
                ey: cell.ey >> (m - l),
            };
            let space_l = &self.levels[l].space;
            for g in functions_touching_cell(space_l, anc) {
                let Some(&dof) = self.levels[l].active.get(&g) else { continue };
                let f = space_l.function(g);
                let Some(((xa, xb), (ya, yb))) = space_l.support_on_patch(f, cell.patch) else {
                    continue;
                };
                if anc.ex < xa || anc.ex > xb || anc.ey < ya || anc.ey > yb {
                    continue;
                }
                funcs.push(ActiveFn { level: l, local: g, dof });
                coeffs.push(self.local_coeffs(l, f, m, cell.patch, ix0, iy0, p));
            }
        }
        CellContext {
            level: m,
            cell,
            bounds: self.cell_bounds(m, cell),
            funcs,
            coeffs,
            window: (ix0, iy0),
        }
    }

    /// Tensor coefficients of a level-l function over the (p+1)x(p+1) window
    /// of a level-m cell, obtained by chaining dyadic refinements.
    fn local_coeffs(
        &self,
        l: usize,
        f: BasisFunction,
        m: usize,
        patch: PatchId,
        ix0: usize,
        iy0: usize,
        p: usize,
    ) -> Vec<f64> {
        let rows = self.levels[l].space.coeff_rows(f, patch);
        let mut out = vec![0.0; (p + 1) * (p + 1)];
        if l == m {
            for (i, band) in rows {
                if i < ix0 || i > ix0 + p {
                    continue;
                }
                for (k, &v) in band.coef.iter().enumerate() {
                    let j = band.start + k;
                    if j >= iy0 && j <= iy0 + p {
                        out[(i - ix0) * (p + 1) + (j - iy0)] += v;
                    }
                }
            }
        } else {
            let lam = &self.cums[l][m - l - 1];
            for (i, band) in rows {
                let wx: Vec<f64> = (0..=p).map(|a| lam.entry(i, ix0 + a)).collect();
                if wx.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (k, &cv) in band.coef.iter().enumerate() {
                    let j = band.start + k;
                    for b in 0..=p {
                        let wy = lam.entry(j, iy0 + b);
                        if wy == 0.0 {
                            continue;
                        }
                        for (a, &wxa) in wx.iter().enumerate() {
                            out[a * (p + 1) + b] += cv * wxa * wy;
                        }
                    }
                }
            }
        }
        out
    }

    /// Evaluates every function of the context at a parametric point of the
    /// cell (boundary points use limits from inside the cell).
    pub fn eval_context(&self, ctx: &CellContext, x1: f64, x2: f64, order: usize) -> Vec<Jet2> {
        let sm = self.levels[ctx.level].space.univariate();
        let wx = sm.eval_in_element(ctx.cell.ex, x1, order);
        let wy = sm.eval_in_element(ctx.cell.ey, x2, order);
        self.eval_context_windows(ctx, &wx, &wy, order)
    }

    pub fn eval_context_windows(
        &self,
        ctx: &CellContext,
        wx: &BasisWindow,
        wy: &BasisWindow,
        order: usize,
    ) -> Vec<Jet2> {
        let p = self.levels[ctx.level].space.univariate().degree();
        debug_assert_eq!(wx.first, ctx.window.0);
        debug_assert_eq!(wy.first, ctx.window.1);
        ctx.coeffs
            .iter()
            .map(|c| {
                let mut jet = Jet2::default();
                for a in 0..=p {
                    // Contract the y-direction first.
                    let mut acc = [0.0f64; 3];
                    for b in 0..=p {
                        let v = c[a * (p + 1) + b];
                        if v == 0.0 {
                            continue;
                        }
                        for (d, slot) in acc.iter_mut().enumerate().take(order + 1) {
                            *slot += v * wy.values[d][b];
                        }
                    }
                    jet.v += wx.values[0][a] * acc[0];
                    if order >= 1 {
                        jet.d1 += wx.values[1][a] * acc[0];
                        jet.d2 += wx.values[0][a] * acc[1];
                    }
                    if order >= 2 {
                        jet.d11 += wx.values[2][a] * acc[0];
                        jet.d12 += wx.values[1][a] * acc[1];
                        jet.d22 += wx.values[0][a] * acc[2];
                    }
                }
                jet
            })
            .collect()
    }
}

/// Superset of the basis functions that are nonzero somewhere on the cell.
fn functions_touching_cell(space: &CoupledSpace, c: Cell) -> Vec<usize> {
    let s = space.univariate();
    let mut out = Vec::new();
    let (i_lo, i_hi) = s.functions_on_element(c.ex);
    let (j_lo, j_hi) = s.functions_on_element(c.ey);
    let i0 = space.first_interior_row();
    for i in i_lo.max(i0)..=i_hi {
        for j in j_lo..=j_hi {
            out.push(space.index_of(BasisFunction::Interior { patch: c.patch, i, j }));
        }
    }
    if i_lo <= 1 {
        match space.smoothness() {
            Smoothness::C1 => {
                let s0 = space.trace_space().unwrap();
                let (a, b) = s0.functions_on_element(c.ey);
                for i in a..=b {
                    out.push(space.index_of(BasisFunction::InterfaceValue(i)));
                }
                let s1 = space.derivative_trace_space().unwrap();
                let (a, b) = s1.functions_on_element(c.ey);
                for i in a..=b {
                    out.push(space.index_of(BasisFunction::InterfaceDerivative(i)));
                }
            }
            Smoothness::C0 => {
                if i_lo == 0 {
                    for j in j_lo..=j_hi {
                        out.push(space.index_of(BasisFunction::InterfaceValue(j)));
                    }
                }
            }
        }
    }
    out
}

/// All cells of the function's support, across both patches.
fn support_cells(space: &CoupledSpace, f: BasisFunction) -> Vec<Cell> {
    let mut v = Vec::new();
    for patch in PatchId::BOTH {
        if let Some(((xa, xb), (ya, yb))) = space.support_on_patch(f, patch) {
            for ex in xa..=xb {
                for ey in ya..=yb {
                    v.push(Cell { patch, ex, ey });
                }
            }
        }
    }
    v
}

/// Expresses every coarse basis function as a combination of fine ones after
/// one dyadic refinement: row g of the result holds the coefficients of
/// coarse function g over the fine coupled basis.
///
/// Interface-value rows refine by the refinement matrix of S_p^{r+1} plus a
/// spill onto fine interior functions; interface-derivative rows refine by
/// exactly half the refinement matrix of S_{p-1}^r (the fine transversal
/// derivative is normalized with the halved first knot) plus their own
/// spill. Interior rows refine by the plain tensor-product masks.
pub fn two_level_matrix(coarse: &CoupledSpace, fine: &CoupledSpace) -> Result<DMatrix<f64>> {
    let (refined, lam) = coarse.univariate().refine_dyadic();
    if refined.knots() != fine.univariate().knots()
        || coarse.smoothness() != fine.smoothness()
    {
        return Err(Error::validation(
            "fine space is not the dyadic refinement of the coarse space",
        ));
    }
    let mut c = DMatrix::zeros(coarse.dim(), fine.dim());
    let i0 = coarse.first_interior_row();

    // Spill of one coarse tensor-coefficient row (tensor_row, band) onto the
    // fine interior functions of `patch`.
    let spill = |c: &mut DMatrix<f64>, g: usize, patch: PatchId, tensor_row: usize, band_start: usize, band: &[f64]| {
        let (mask_start, mask) = lam.row(tensor_row);
        for (km, &mv) in mask.iter().enumerate() {
            let ip = mask_start + km;
            if ip < i0 || mv == 0.0 {
                continue;
            }
            for (kj, &cv) in band.iter().enumerate() {
                let j = band_start + kj;
                let (ys, yb) = lam.row(j);
                for (ky, &yv) in yb.iter().enumerate() {
                    let idx = fine.index_of(BasisFunction::Interior {
                        patch,
                        i: ip,
                        j: ys + ky,
                    });
                    c[(g, idx)] += mv * cv * yv;
                }
            }
        }
    };

    for gv in 0..coarse.num_interface_value() {
        let g = coarse.index_of(BasisFunction::InterfaceValue(gv));
        match coarse.smoothness() {
            Smoothness::C1 => {
                let (_, lam0) = coarse.trace_space().unwrap().refine_dyadic();
                let (s0, b0) = lam0.row(gv);
                for (k, &v) in b0.iter().enumerate() {
                    c[(g, fine.index_of(BasisFunction::InterfaceValue(s0 + k)))] = v;
                }
            }
            Smoothness::C0 => {
                let (s0, b0) = lam.row(gv);
                for (k, &v) in b0.iter().enumerate() {
                    c[(g, fine.index_of(BasisFunction::InterfaceValue(s0 + k)))] = v;
                }
            }
        }
        for patch in PatchId::BOTH {
            for (row, band) in coarse.coeff_rows(BasisFunction::InterfaceValue(gv), patch) {
                spill(&mut c, g, patch, row, band.start, &band.coef);
            }
        }
    }

    for gd in 0..coarse.num_interface_derivative() {
        let g = coarse.index_of(BasisFunction::InterfaceDerivative(gd));
        let (_, lam1) = coarse.derivative_trace_space().unwrap().refine_dyadic();
        let (s1, b1) = lam1.row(gd);
        for (k, &v) in b1.iter().enumerate() {
            c[(g, fine.index_of(BasisFunction::InterfaceDerivative(s1 + k)))] = 0.5 * v;
        }
        for patch in PatchId::BOTH {
            for (row, band) in coarse.coeff_rows(BasisFunction::InterfaceDerivative(gd), patch) {
                spill(&mut c, g, patch, row, band.start, &band.coef);
            }
        }
    }

    let n = coarse.univariate().dim();
    for patch in PatchId::BOTH {
        for i in i0..n {
            let (xs, xb) = lam.row(i);
            for j in 0..n {
                let g = coarse.index_of(BasisFunction::Interior { patch, i, j });
                let (ys, yb) = lam.row(j);
                for (kx, &vx) in xb.iter().enumerate() {
                    let ip = xs + kx;
                    if ip < i0 {
                        debug_assert!(vx == 0.0, "interior refinement leaks onto interface rows");
                        continue;
                    }
                    for (ky, &vy) in yb.iter().enumerate() {
                        let idx = fine.index_of(BasisFunction::Interior {
                            patch,
                            i: ip,
                            j: ys + ky,
                        });
                        c[(g, idx)] = vx * vy;
                    }
                }
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curved, lshape};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fresh(geo: TwoPatchGeometry, p: usize, k0: usize, s: Smoothness) -> HierarchicalSpace {
        HierarchicalSpace::new(geo, p, p - 2, s, k0).unwrap()
    }

    #[test]
    fn single_level_matches_coupled_space() {
        let h = fresh(lshape(), 3, 2, Smoothness::C1);
        assert_eq!(h.num_levels(), 1);
        assert_eq!(h.ndof(), h.level_space(0).dim());
        assert_eq!(h.active_cells(0).len(), 2 * 4);
        assert_eq!(h.all_active_cells().len(), 8);
    }

    #[test]
    fn uniform_refinement_reaches_fine_space() {
        let mut h = fresh(lshape(), 3, 2, Smoothness::C1);
        let coarse_dim = h.ndof();
        h.refine_uniform().unwrap();
        assert_eq!(h.num_levels(), 2);
        // Every coarse function's support is now fully refined.
        assert_eq!(h.active_functions(0).count(), 0);
        assert_eq!(h.ndof(), h.level_space(1).dim());
        assert!(h.ndof() > coarse_dim);
        assert_eq!(h.active_cells(0).len(), 0);
        assert_eq!(h.active_cells(1).len(), 2 * 16);
    }

    /// One refined corner cell on patch L: exactly the fine interior
    /// functions living inside that cell become active.
    #[test]
    fn active_sets_for_one_refined_cell() {
        let mut h = fresh(lshape(), 3, 2, Smoothness::C1);
        let marked = Cell { patch: PatchId::L, ex: 0, ey: 0 };
        h.refine_cells(&[(0, marked)]).unwrap();

        // No coarse function fits inside one coarse cell, so all stay active.
        let dim0 = h.level_space(0).dim();
        assert_eq!(h.active_functions(0).count(), dim0);

        // Fine functions must be supported inside the 2x2 child block.
        let fine = h.level_space(1);
        let expected: BTreeSet<usize> = [2usize, 3]
            .into_iter()
            .flat_map(|i| {
                [0usize, 1, 2, 3].into_iter().map(move |j| {
                    fine.index_of(BasisFunction::Interior { patch: PatchId::L, i, j })
                })
            })
            .collect();
        let got: BTreeSet<usize> = h.active_functions(1).map(|(g, _)| g).collect();
        assert_eq!(got, expected);
        assert_eq!(h.ndof(), dim0 + 8);

        assert_eq!(h.active_cells(0).len(), 7);
        assert_eq!(h.active_cells(1).len(), 4);
    }

    /// Active cells partition the parametric domain after arbitrary marking.
    #[test]
    fn active_cells_partition_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = fresh(curved(), 3, 2, Smoothness::C1);
        for _ in 0..3 {
            let cells = h.all_active_cells();
            let marked: Vec<(usize, Cell)> = cells
                .iter()
                .copied()
                .filter(|_| rng.random_range(0.0..1.0) < 0.3)
                .collect();
            if marked.is_empty() {
                continue;
            }
            h.refine_cells(&marked).unwrap();
        }
        assert!(h.num_levels() >= 2);

        // Exact cover at the finest resolution.
        let finest = h.num_levels() - 1;
        let nf = h.level_space(finest).univariate().num_elements();
        let mut owner = vec![vec![vec![0u8; nf]; nf]; 2];
        for (l, cell) in h.all_active_cells() {
            let scale = 1usize << (finest - l);
            for dx in 0..scale {
                for dy in 0..scale {
                    owner[cell.patch.index()][cell.ex * scale + dx][cell.ey * scale + dy] += 1;
                }
            }
        }
        for side in &owner {
            for col in side {
                assert!(col.iter().all(|&c| c == 1), "cells overlap or leave gaps");
            }
        }
    }

    /// A function evaluated through refinement chains must agree with its
    /// own-level evaluation at the same parametric point.
    #[test]
    fn cross_level_evaluation_is_consistent() {
        let mut h = fresh(curved(), 3, 2, Smoothness::C1);
        h.refine_cells(&[
            (0, Cell { patch: PatchId::L, ex: 0, ey: 0 }),
            (0, Cell { patch: PatchId::L, ex: 0, ey: 1 }),
            (0, Cell { patch: PatchId::R, ex: 0, ey: 0 }),
            (0, Cell { patch: PatchId::R, ex: 0, ey: 1 }),
        ])
        .unwrap();
        let fine_cells: Vec<(usize, Cell)> =
            h.all_active_cells().into_iter().filter(|&(l, _)| l == 1).collect();
        h.refine_cells(&[fine_cells[0], fine_cells[5]]).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, cell) in h.all_active_cells() {
            let ctx = h.cell_context(m, cell);
            let ((xa, xb), (ya, yb)) = ctx.bounds;
            for _ in 0..3 {
                let x1 = xa + rng.random_range(0.0..1.0) * (xb - xa);
                let x2 = ya + rng.random_range(0.0..1.0) * (yb - ya);
                let jets = h.eval_context(&ctx, x1, x2, 2);
                for (af, jet) in ctx.funcs.iter().zip(&jets) {
                    let space_l = h.level_space(af.level);
                    let direct =
                        space_l.eval_basis(space_l.function(af.local), cell.patch, x1, x2, 2);
                    assert_abs_diff_eq!(jet.v, direct.v, epsilon = 1e-11);
                    assert_abs_diff_eq!(jet.d1, direct.d1, epsilon = 1e-9);
                    assert_abs_diff_eq!(jet.d2, direct.d2, epsilon = 1e-9);
                    assert_abs_diff_eq!(jet.d11, direct.d11, epsilon = 1e-7);
                    assert_abs_diff_eq!(jet.d12, direct.d12, epsilon = 1e-7);
                    assert_abs_diff_eq!(jet.d22, direct.d22, epsilon = 1e-7);
                }
            }
        }
    }

    /// Every cell context must list exactly the active functions that are
    /// nonzero on the cell: nothing missing (partition-of-unity style sum
    /// stays exact) and nothing extraneous (listed functions vanish outside).
    #[test]
    fn contexts_collect_all_covering_functions() {
        let mut h = fresh(lshape(), 3, 2, Smoothness::C1);
        h.refine_cells(&[(0, Cell { patch: PatchId::R, ex: 1, ey: 1 })]).unwrap();
        let total: usize = (0..h.num_levels()).map(|l| h.active_functions(l).count()).sum();
        assert_eq!(total, h.ndof());

        let mut seen = vec![false; h.ndof()];
        for (m, cell) in h.all_active_cells() {
            let ctx = h.cell_context(m, cell);
            for af in &ctx.funcs {
                seen[af.dof] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "some active function covers no active cell");
    }

    #[test]
    fn two_level_matrix_expands_coarse_basis() {
        for (geo, s) in [(lshape(), Smoothness::C1), (curved(), Smoothness::C1), (lshape(), Smoothness::C0)] {
            let glue = compute_gluing(&geo).unwrap();
            let r = if s == Smoothness::C1 { 1 } else { 2 };
            let coarse_uni = UnivariateSplineSpace::make(3, r, &[0.5]).unwrap();
            let (fine_uni, _) = coarse_uni.refine_dyadic();
            let coarse = CoupledSpace::new(coarse_uni, &glue, s).unwrap();
            let fine = CoupledSpace::new(fine_uni, &glue, s).unwrap();
            if s == Smoothness::C1 {
                assert_eq!(coarse.dim(), 57);
                assert_eq!(fine.dim(), 173);
            }
            let c = two_level_matrix(&coarse, &fine).unwrap();

            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..200 {
                let x1: f64 = rng.random_range(0.0..1.0);
                let x2: f64 = rng.random_range(0.0..1.0);
                let patch = if rng.random_range(0.0..1.0) < 0.5 { PatchId::L } else { PatchId::R };
                for g in 0..coarse.dim() {
                    let direct = coarse.eval_basis(coarse.function(g), patch, x1, x2, 0).v;
                    let mut expanded = 0.0;
                    for gf in 0..fine.dim() {
                        let w = c[(g, gf)];
                        if w != 0.0 {
                            expanded += w * fine.eval_basis(fine.function(gf), patch, x1, x2, 0).v;
                        }
                    }
                    assert_abs_diff_eq!(direct, expanded, epsilon = 1e-11);
                }
            }
        }
    }

    /// Structural facts of the two-level matrix: derivative rows carry
    /// exactly half the S_{p-1}^r refinement matrix, and the two interface
    /// blocks never mix.
    #[test]
    fn two_level_matrix_block_structure() {
        let geo = curved();
        let glue = compute_gluing(&geo).unwrap();
        let coarse_uni = UnivariateSplineSpace::make(3, 1, &[0.5]).unwrap();
        let (fine_uni, _) = coarse_uni.refine_dyadic();
        let coarse = CoupledSpace::new(coarse_uni, &glue, Smoothness::C1).unwrap();
        let fine = CoupledSpace::new(fine_uni, &glue, Smoothness::C1).unwrap();
        let c = two_level_matrix(&coarse, &fine).unwrap();

        let (_, lam1) = coarse.derivative_trace_space().unwrap().refine_dyadic();
        for i in 0..coarse.num_interface_derivative() {
            let g = coarse.index_of(BasisFunction::InterfaceDerivative(i));
            for j in 0..fine.num_interface_derivative() {
                let gf = fine.index_of(BasisFunction::InterfaceDerivative(j));
                assert_abs_diff_eq!(c[(g, gf)], 0.5 * lam1.entry(i, j), epsilon = 1e-13);
            }
            for j in 0..fine.num_interface_value() {
                let gf = fine.index_of(BasisFunction::InterfaceValue(j));
                assert_eq!(c[(g, gf)], 0.0);
            }
        }
        for i in 0..coarse.num_interface_value() {
            let g = coarse.index_of(BasisFunction::InterfaceValue(i));
            for j in 0..fine.num_interface_derivative() {
                let gf = fine.index_of(BasisFunction::InterfaceDerivative(j));
                assert_eq!(c[(g, gf)], 0.0);
            }
        }
    }
}
