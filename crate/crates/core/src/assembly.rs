//! Galerkin assembly, sparse solves, and error norms on hierarchical spaces.
//!
//! Quadrature runs cell by cell over the finest active elements, so every
//! integrand is smooth on its integration domain even though the global
//! fields have reduced regularity across knot lines. Dirichlet data enters
//! weakly: a symmetric Nitsche form for the Poisson problem, penalty terms
//! for value and normal derivative for the bilaplacian.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::geometry::{PatchFrame, PatchId};
use crate::hierarchy::{Cell, CellContext, HierarchicalSpace};
use crate::quadrature::gauss_legendre;
use crate::space::Jet2;

/// Scalar data callback: receives patch, parametric point, physical point.
pub type ScalarData<'a> = &'a dyn Fn(PatchId, [f64; 2], [f64; 2]) -> f64;
/// Flux data callback: additionally receives the outward unit normal.
pub type FluxData<'a> = &'a dyn Fn(PatchId, [f64; 2], [f64; 2], [f64; 2]) -> f64;

/// Symmetric sparse system in triplet form plus its right-hand side.
pub struct LinearSystem {
    pub ndof: usize,
    entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// Penalty and local size used on each Dirichlet boundary edge.
    pub nitsche: Vec<NitscheEdge>,
}

/// Penalty bookkeeping for one boundary edge.
#[derive(Debug, Clone, Copy)]
pub struct NitscheEdge {
    pub gamma: f64,
    /// Thickness of the cell transverse to the edge: physical area over
    /// physical edge length. The trace inverse inequality scales with this
    /// length on stretched cells, where the diameter would undershoot the
    /// penalty and lose coercivity.
    pub h: f64,
}

impl LinearSystem {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ndof];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    /// Dense copy for small-instance diagnostics and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.ndof, self.ndof);
        for &(i, j, v) in &self.entries {
            a[(i, j)] += v;
        }
        a
    }
}

/// L2, H1-seminorm, and H2-seminorm values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Physical quadrature point of a cell, with physical jets of every active
/// function visible on the cell (ordered as in the cell context).
pub(crate) struct QuadPoint {
    pub xi: [f64; 2],
    pub x: [f64; 2],
    /// Gauss weight times |det J|.
    pub weight: f64,
    pub jets: Vec<Jet2>,
}

pub(crate) struct CellQuad {
    pub ctx: CellContext,
    pub diameter: f64,
    pub points: Vec<QuadPoint>,
}

/// Quadrature point on one edge of a cell.
pub(crate) struct EdgePoint {
    pub xi: [f64; 2],
    pub x: [f64; 2],
    /// Gauss weight times the physical length element.
    pub ds: f64,
    /// Outward unit normal of the patch at this point.
    pub normal: [f64; 2],
    pub jets: Vec<Jet2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EdgeSide {
    X1Lo,
    X1Hi,
    X2Lo,
    X2Hi,
}

/// Push a parametric jet through the patch frame to physical coordinates.
pub(crate) fn physical_jet(frame: &PatchFrame, jet: &Jet2, order: usize) -> Jet2 {
    let j = &frame.jac;
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let gx = (j[1][1] * jet.d1 - j[1][0] * jet.d2) / det;
    let gy = (j[0][0] * jet.d2 - j[0][1] * jet.d1) / det;
    let mut out = Jet2 {
        v: jet.v,
        d1: gx,
        d2: gy,
        ..Jet2::default()
    };
    if order >= 2 {
        // Parametric Hessian of f minus the geometry curvature term, then
        // congruence with the inverse Jacobian.
        let m11 = jet.d11 - gx * frame.hess[0][0] - gy * frame.hess[1][0];
        let m12 = jet.d12 - gx * frame.hess[0][1] - gy * frame.hess[1][1];
        let m22 = jet.d22 - gx * frame.hess[0][2] - gy * frame.hess[1][2];
        let a11 = (j[1][1] * m11 - j[1][0] * m12) / det;
        let a12 = (j[1][1] * m12 - j[1][0] * m22) / det;
        let a21 = (j[0][0] * m12 - j[0][1] * m11) / det;
        let a22 = (j[0][0] * m22 - j[0][1] * m12) / det;
        out.d11 = (a11 * j[1][1] - a12 * j[1][0]) / det;
        out.d22 = (a22 * j[0][0] - a21 * j[0][1]) / det;
        let h12 = (a12 * j[0][0] - a11 * j[0][1]) / det;
        let h21 = (a21 * j[1][1] - a22 * j[1][0]) / det;
        out.d12 = 0.5 * (h12 + h21);
    }
    out
}

pub(crate) fn cell_diameter(hier: &HierarchicalSpace, l: usize, cell: Cell) -> f64 {
    let ((xa, xb), (ya, yb)) = hier.cell_bounds(l, cell);
    let mapping = hier.geometry().patch(cell.patch);
    let corners = [
        mapping.point(xa, ya),
        mapping.point(xb, ya),
        mapping.point(xa, yb),
        mapping.point(xb, yb),
    ];
    let mut d = 0.0f64;
    for i in 0..4 {
        for k in i + 1..4 {
            d = d.max((corners[i][0] - corners[k][0]).hypot(corners[i][1] - corners[k][1]));
        }
    }
    d
}

/// Tensor Gauss rule on an active cell with physical jets of all visible
/// functions.
pub(crate) fn cell_quadrature(
    hier: &HierarchicalSpace,
    l: usize,
    cell: Cell,
    q: usize,
    order: usize,
) -> CellQuad {
    let ctx = hier.cell_context(l, cell);
    let ((xa, xb), (ya, yb)) = ctx.bounds;
    let sm = hier.level_space(l).univariate();
    let gx = gauss_legendre(q, xa, xb);
    let gy = gauss_legendre(q, ya, yb);
    let wxs: Vec<_> = gx
        .iter()
        .map(|&(x, _)| sm.eval_in_element(cell.ex, x, order))
        .collect();
    let wys: Vec<_> = gy
        .iter()
        .map(|&(y, _)| sm.eval_in_element(cell.ey, y, order))
        .collect();
    let mapping = hier.geometry().patch(cell.patch);
    let mut points = Vec::with_capacity(q * q);
    for (a, &(x1, w1)) in gx.iter().enumerate() {
        for (b, &(x2, w2)) in gy.iter().enumerate() {
            let frame = mapping.frame(x1, x2);
            let jets = hier
                .eval_context_windows(&ctx, &wxs[a], &wys[b], order)
                .iter()
                .map(|jet| physical_jet(&frame, jet, order))
                .collect();
            points.push(QuadPoint {
                xi: [x1, x2],
                x: frame.point,
                weight: w1 * w2 * frame.det_jac().abs(),
                jets,
            });
        }
    }
    CellQuad {
        diameter: cell_diameter(hier, l, cell),
        ctx,
        points,
    }
}

/// Gauss rule along one edge of an active cell, evaluated from inside the
/// cell so one-sided limits are taken at knot lines.
pub(crate) fn edge_quadrature(
    hier: &HierarchicalSpace,
    ctx: &CellContext,
    side: EdgeSide,
    q: usize,
    order: usize,
) -> Vec<EdgePoint> {
    let ((xa, xb), (ya, yb)) = ctx.bounds;
    let run = match side {
        EdgeSide::X1Lo | EdgeSide::X1Hi => (ya, yb),
        EdgeSide::X2Lo | EdgeSide::X2Hi => (xa, xb),
    };
    edge_quadrature_run(hier, ctx, side, run, q, order)
}

/// Same as `edge_quadrature` but restricted to a sub-interval of the edge,
/// for jump fragments shared with finer neighbours.
pub(crate) fn edge_quadrature_run(
    hier: &HierarchicalSpace,
    ctx: &CellContext,
    side: EdgeSide,
    run: (f64, f64),
    q: usize,
    order: usize,
) -> Vec<EdgePoint> {
    let ((xa, xb), (ya, yb)) = ctx.bounds;
    let cell = ctx.cell;
    let sm = hier.level_space(ctx.level).univariate();
    let mapping = hier.geometry().patch(cell.patch);
    // Fixed coordinate and parametric outward normal.
    let (fixed_x1, nu) = match side {
        EdgeSide::X1Lo => (Some(xa), [-1.0, 0.0]),
        EdgeSide::X1Hi => (Some(xb), [1.0, 0.0]),
        EdgeSide::X2Lo => (None, [0.0, -1.0]),
        EdgeSide::X2Hi => (None, [0.0, 1.0]),
    };
    let fixed = match side {
        EdgeSide::X1Lo => xa,
        EdgeSide::X1Hi => xb,
        EdgeSide::X2Lo => ya,
        EdgeSide::X2Hi => yb,
    };
    gauss_legendre(q, run.0, run.1)
        .into_iter()
        .map(|(t, w)| {
            let (x1, x2) = if fixed_x1.is_some() { (fixed, t) } else { (t, fixed) };
            let wx = sm.eval_in_element(cell.ex, x1, order);
            let wy = sm.eval_in_element(cell.ey, x2, order);
            let frame = mapping.frame(x1, x2);
            let jets: Vec<Jet2> = hier
                .eval_context_windows(ctx, &wx, &wy, order)
                .iter()
                .map(|jet| physical_jet(&frame, jet, order))
                .collect();
            // Tangent along the run direction gives the length element.
            let (tan, _) = if fixed_x1.is_some() {
                ([frame.jac[0][1], frame.jac[1][1]], 1)
            } else {
                ([frame.jac[0][0], frame.jac[1][0]], 0)
            };
            let j = &frame.jac;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            // J^{-T} nu points outward because nu is the parametric outward
            // normal (the gradient of the active coordinate).
            let n = [
                (j[1][1] * nu[0] - j[1][0] * nu[1]) / det,
                (j[0][0] * nu[1] - j[0][1] * nu[0]) / det,
            ];
            let len = n[0].hypot(n[1]);
            EdgePoint {
                xi: [x1, x2],
                x: frame.point,
                ds: w * tan[0].hypot(tan[1]),
                normal: [n[0] / len, n[1] / len],
                jets,
            }
        })
        .collect()
}

/// Parametric sides of the cell that lie on the physical boundary. The
/// interface side x1 = 0 is never one of them.
pub(crate) fn boundary_sides(hier: &HierarchicalSpace, l: usize, cell: Cell) -> Vec<EdgeSide> {
    let nel = hier.level_space(l).univariate().num_elements();
    let mut sides = Vec::new();
    if cell.ex + 1 == nel {
        sides.push(EdgeSide::X1Hi);
    }
    if cell.ey == 0 {
        sides.push(EdgeSide::X2Lo);
    }
    if cell.ey + 1 == nel {
        sides.push(EdgeSide::X2Hi);
    }
    sides
}

fn scatter_symmetric(
    entries: &mut Vec<(usize, usize, f64)>,
    dofs: &[usize],
    local: &[f64],
    nf: usize,
) {
    for i in 0..nf {
        for j in 0..nf {
            let v = if j <= i { local[i * nf + j] } else { local[j * nf + i] };
            if v != 0.0 {
                entries.push((dofs[i], dofs[j], v));
            }
        }
    }
}

/// Default Gauss count per direction: exact for products of basis functions
/// on affine geometry.
pub(crate) fn default_rule(hier: &HierarchicalSpace) -> usize {
    hier.level_space(0).univariate().degree() + 1
}

/// Stiffness matrix and load vector of −Δu = f with Dirichlet data g imposed
/// by a symmetric Nitsche form with penalty 10(p+1)/h.
pub fn assemble_poisson(hier: &HierarchicalSpace, f: ScalarData, g: ScalarData) -> LinearSystem {
    assemble_poisson_with_rule(hier, f, g, default_rule(hier))
}

pub(crate) fn assemble_poisson_with_rule(
    hier: &HierarchicalSpace,
    f: ScalarData,
    g: ScalarData,
    q: usize,
) -> LinearSystem {
    let n = hier.ndof();
    let p = hier.level_space(0).univariate().degree();
    let gamma = 10.0 * (p + 1) as f64;
    let mut entries = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut nitsche = Vec::new();
    for (l, cell) in hier.all_active_cells() {
        let cq = cell_quadrature(hier, l, cell, q, 1);
        let nf = cq.ctx.funcs.len();
        let dofs: Vec<usize> = cq.ctx.funcs.iter().map(|af| af.dof).collect();
        let mut local = vec![0.0; nf * nf];
        let mut area = 0.0;
        for pt in &cq.points {
            area += pt.weight;
            for i in 0..nf {
                let ji = &pt.jets[i];
                for j in 0..=i {
                    local[i * nf + j] +=
                        pt.weight * (ji.d1 * pt.jets[j].d1 + ji.d2 * pt.jets[j].d2);
                }
            }
            let fv = f(cell.patch, pt.xi, pt.x);
            if fv != 0.0 {
                for i in 0..nf {
                    rhs[dofs[i]] += pt.weight * fv * pt.jets[i].v;
                }
            }
        }
        for side in boundary_sides(hier, l, cell) {
            let pts = edge_quadrature(hier, &cq.ctx, side, q, 1);
            let h = boundary_thickness(area, &pts);
            nitsche.push(NitscheEdge { gamma, h });
            let pen = gamma / h;
            for pt in &pts {
                let flux: Vec<f64> = pt
                    .jets
                    .iter()
                    .map(|jet| jet.d1 * pt.normal[0] + jet.d2 * pt.normal[1])
                    .collect();
                for i in 0..nf {
                    for j in 0..=i {
                        local[i * nf + j] += pt.ds
                            * (-flux[i] * pt.jets[j].v - pt.jets[i].v * flux[j]
                                + pen * pt.jets[i].v * pt.jets[j].v);
                    }
                }
                let gv = g(cell.patch, pt.xi, pt.x);
                for i in 0..nf {
                    rhs[dofs[i]] += pt.ds * gv * (pen * pt.jets[i].v - flux[i]);
                }
            }
        }
        scatter_symmetric(&mut entries, &dofs, &local, nf);
    }
    LinearSystem { ndof: n, entries, rhs, nitsche }
}

/// Matrix and load vector of Δ²u = f with u = g1 and ∂u/∂n = g2 imposed by
/// penalties σ/h³ and σ/h, σ = 10(p+1)².
pub fn assemble_bilaplacian(
    hier: &HierarchicalSpace,
    f: ScalarData,
    g1: ScalarData,
    g2: FluxData,
) -> LinearSystem {
    let n = hier.ndof();
    let p = hier.level_space(0).univariate().degree();
    let sigma = 10.0 * ((p + 1) * (p + 1)) as f64;
    let q = default_rule(hier);
    let mut entries = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut nitsche = Vec::new();
    for (l, cell) in hier.all_active_cells() {
        let cq = cell_quadrature(hier, l, cell, q, 2);
        let nf = cq.ctx.funcs.len();
        let dofs: Vec<usize> = cq.ctx.funcs.iter().map(|af| af.dof).collect();
        let mut local = vec![0.0; nf * nf];
        let mut area = 0.0;
        for pt in &cq.points {
            area += pt.weight;
            let lap: Vec<f64> = pt.jets.iter().map(|jet| jet.d11 + jet.d22).collect();
            for i in 0..nf {
                for j in 0..=i {
                    local[i * nf + j] += pt.weight * lap[i] * lap[j];
                }
            }
            let fv = f(cell.patch, pt.xi, pt.x);
            if fv != 0.0 {
                for i in 0..nf {
                    rhs[dofs[i]] += pt.weight * fv * pt.jets[i].v;
                }
            }
        }
        for side in boundary_sides(hier, l, cell) {
            let pts = edge_quadrature(hier, &cq.ctx, side, q, 2);
            let h = boundary_thickness(area, &pts);
            nitsche.push(NitscheEdge { gamma: sigma, h });
            let pen1 = sigma / (h * h * h);
            let pen2 = sigma / h;
            for pt in &pts {
                let flux: Vec<f64> = pt
                    .jets
                    .iter()
                    .map(|jet| jet.d1 * pt.normal[0] + jet.d2 * pt.normal[1])
                    .collect();
                for i in 0..nf {
                    for j in 0..=i {
                        local[i * nf + j] += pt.ds
                            * (pen1 * pt.jets[i].v * pt.jets[j].v + pen2 * flux[i] * flux[j]);
                    }
                }
                let g1v = g1(cell.patch, pt.xi, pt.x);
                let g2v = g2(cell.patch, pt.xi, pt.x, pt.normal);
                for i in 0..nf {
                    rhs[dofs[i]] += pt.ds * (pen1 * g1v * pt.jets[i].v + pen2 * g2v * flux[i]);
                }
            }
        }
        scatter_symmetric(&mut entries, &dofs, &local, nf);
    }
    LinearSystem { ndof: n, entries, rhs, nitsche }
}

/// Local size of a cell transverse to one of its edges: physical area over
/// physical edge length.
pub(crate) fn boundary_thickness(area: f64, edge: &[EdgePoint]) -> f64 {
    let len: f64 = edge.iter().map(|pt| pt.ds).sum();
    area / len.max(f64::MIN_POSITIVE)
}

/// L2 mass matrix with load vector ∫ field·v, for projections.
pub fn assemble_l2_projection(hier: &HierarchicalSpace, field: ScalarData) -> LinearSystem {
    let n = hier.ndof();
    let q = default_rule(hier) + 1;
    let mut entries = Vec::new();
    let mut rhs = vec![0.0; n];
    for (l, cell) in hier.all_active_cells() {
        let cq = cell_quadrature(hier, l, cell, q, 0);
        let nf = cq.ctx.funcs.len();
        let dofs: Vec<usize> = cq.ctx.funcs.iter().map(|af| af.dof).collect();
        let mut local = vec![0.0; nf * nf];
        for pt in &cq.points {
            for i in 0..nf {
                for j in 0..=i {
                    local[i * nf + j] += pt.weight * pt.jets[i].v * pt.jets[j].v;
                }
            }
            let fv = field(cell.patch, pt.xi, pt.x);
            for i in 0..nf {
                rhs[dofs[i]] += pt.weight * fv * pt.jets[i].v;
            }
        }
        scatter_symmetric(&mut entries, &dofs, &local, nf);
    }
    LinearSystem { ndof: n, entries, rhs, nitsche: Vec::new() }
}

/// Sparse Cholesky solve with iterative refinement; the relative residual
/// must reach 1e-10.
pub fn solve(sys: &LinearSystem) -> Result<Vec<f64>> {
    let n = sys.ndof;
    let triplets: Vec<Triplet<usize, usize, f64>> = sys
        .entries
        .iter()
        .map(|&(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::numerical(format!("sparse assembly failed: {e:?}")))?;
    let llt = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::numerical(format!("Cholesky factorization failed ({e:?}); matrix is singular or not positive definite")))?;
    let b = faer::Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i]);
    let mut x = llt.solve(&b);
    let bnorm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        let xs: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let ax = sys.matvec(&xs);
        let rnorm = (0..n)
            .map(|i| (sys.rhs[i] - ax[i]) * (sys.rhs[i] - ax[i]))
            .sum::<f64>()
            .sqrt();
        rel = rnorm / bnorm.max(f64::MIN_POSITIVE);
        if rel <= 1e-10 {
            return Ok(xs);
        }
        let r = faer::Mat::<f64>::from_fn(n, 1, |i, _| sys.rhs[i] - ax[i]);
        let dx = llt.solve(&r);
        for i in 0..n {
            x[(i, 0)] += dx[(i, 0)];
        }
    }
    Err(Error::numerical(format!(
        "solve did not reach residual tolerance: relative residual {rel:.3e} after refinement"
    )))
}

/// Physical jet of the discrete field at a parametric point, evaluated on
/// the deepest active cell containing it.
pub fn eval_solution(
    hier: &HierarchicalSpace,
    coeffs: &[f64],
    patch: PatchId,
    xi1: f64,
    xi2: f64,
    order: usize,
) -> Jet2 {
    for l in (0..hier.num_levels()).rev() {
        let sm = hier.level_space(l).univariate();
        let cell = Cell {
            patch,
            ex: sm.element_of(xi1),
            ey: sm.element_of(xi2),
        };
        if hier.active_cells(l).binary_search(&cell).is_err() {
            continue;
        }
        let ctx = hier.cell_context(l, cell);
        let jets = hier.eval_context(&ctx, xi1, xi2, order);
        let mut acc = Jet2::default();
        for (af, jet) in ctx.funcs.iter().zip(&jets) {
            let c = coeffs[af.dof];
            acc.v += c * jet.v;
            acc.d1 += c * jet.d1;
            acc.d2 += c * jet.d2;
            acc.d11 += c * jet.d11;
            acc.d12 += c * jet.d12;
            acc.d22 += c * jet.d22;
        }
        let frame = hier.geometry().patch(patch).frame(xi1, xi2);
        return physical_jet(&frame, &acc, order);
    }
    // Active cells partition the domain, so this is unreachable for points
    // in [0,1]^2.
    panic!("point ({xi1}, {xi2}) not covered by any active cell");
}

/// Error norms of coeffs against the exact jet, and the norms of the exact
/// solution itself for relative reporting. Integration runs over the finest
/// active elements with p+3 Gauss points per direction.
pub fn error_norms(
    hier: &HierarchicalSpace,
    coeffs: &[f64],
    exact: &dyn Fn(PatchId, [f64; 2], [f64; 2]) -> Jet2,
) -> (Norms, Norms) {
    let q = hier.level_space(0).univariate().degree() + 3;
    let mut err = Norms::default();
    let mut base = Norms::default();
    for (l, cell) in hier.all_active_cells() {
        let cq = cell_quadrature(hier, l, cell, q, 2);
        for pt in &cq.points {
            let mut uh = Jet2::default();
            for (af, jet) in cq.ctx.funcs.iter().zip(&pt.jets) {
                let c = coeffs[af.dof];
                uh.v += c * jet.v;
                uh.d1 += c * jet.d1;
                uh.d2 += c * jet.d2;
                uh.d11 += c * jet.d11;
                uh.d12 += c * jet.d12;
                uh.d22 += c * jet.d22;
            }
            let ue = exact(cell.patch, pt.xi, pt.x);
            let w = pt.weight;
            err.l2 += w * (uh.v - ue.v).powi(2);
            err.h1 += w * ((uh.d1 - ue.d1).powi(2) + (uh.d2 - ue.d2).powi(2));
            err.h2 += w
                * ((uh.d11 - ue.d11).powi(2)
                    + 2.0 * (uh.d12 - ue.d12).powi(2)
                    + (uh.d22 - ue.d22).powi(2));
            base.l2 += w * ue.v * ue.v;
            base.h1 += w * (ue.d1 * ue.d1 + ue.d2 * ue.d2);
            base.h2 += w * (ue.d11 * ue.d11 + 2.0 * ue.d12 * ue.d12 + ue.d22 * ue.d22);
        }
    }
    let root = |n: Norms| Norms {
        l2: n.l2.sqrt(),
        h1: n.h1.sqrt(),
        h2: n.h2.sqrt(),
    };
    (root(err), root(base))
}
