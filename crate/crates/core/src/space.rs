//! Smooth spline spaces coupled across the interface of a two-patch geometry.
//!
//! For a C1 space of degree p and interface regularity r (1 <= r <= p-2) the
//! basis splits into three groups:
//!
//! * interface-value functions, one per basis function of S_p^{r+1}, with a
//!   prescribed value trace and vanishing transversal derivative,
//! * interface-derivative functions, one per basis function of S_{p-1}^r,
//!   with vanishing trace and prescribed transversal derivative,
//! * per-patch interior functions N_i N_j with i >= 2, which vanish to first
//!   order at the interface.
//!
//! On patch S the interface functions are
//!
//!   phi0_i o F^S = N_i(x2) (N_0 + N_1)(x1) + beta^S(x2) N_i'(x2) (t1/p) N_1(x1)
//!   phi1_i o F^S = alpha^S(x2) M_i(x2) N_1(x1)
//!
//! with N_i in S_p^{r+1}, M_i in S_{p-1}^r and t1 the first interior knot.
//! The x2-profiles multiplying N_0 and N_1 lie exactly in S_p^r; their
//! coefficient rows are computed by local collocation at Greville points and
//! stored as bands. The C0 variant only shares the interface value row.

use crate::bspline::{one_basis, BasisWindow, UnivariateSplineSpace};
use crate::error::{Error, Result};
use crate::geometry::{GluingData, PatchId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C1,
    C0,
}

/// One basis function of the coupled space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFunction {
    /// C1: i-th function of S_p^{r+1}; C0: i-th function of S_p^r.
    InterfaceValue(usize),
    /// C1 only: i-th function of S_{p-1}^r.
    InterfaceDerivative(usize),
    /// Tensor function N_i N_j supported inside one patch; i >= 2 for C1,
    /// i >= 1 for C0.
    Interior { patch: PatchId, i: usize, j: usize },
}

/// Banded coefficient row: values for columns start .. start + coef.len().
#[derive(Debug, Clone)]
pub struct CoefRow {
    pub start: usize,
    pub coef: Vec<f64>,
}

/// Value and parametric derivatives of a basis function at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

#[derive(Debug, Clone)]
pub struct CoupledSpace {
    smoothness: Smoothness,
    space: UnivariateSplineSpace,
    space0: Option<UnivariateSplineSpace>,
    space1: Option<UnivariateSplineSpace>,
    b_hat: Vec<CoefRow>,
    b_tilde: [Vec<CoefRow>; 2],
    b_bar: [Vec<CoefRow>; 2],
}

impl CoupledSpace {
    /// Builds the coupled space over `space` (used in both directions on both
    /// patches). `glue` is only consulted for the C1 variant.
    pub fn new(
        space: UnivariateSplineSpace,
        glue: &GluingData,
        smoothness: Smoothness,
    ) -> Result<Self> {
        match smoothness {
            Smoothness::C0 => Ok(Self {
                smoothness,
                space,
                space0: None,
                space1: None,
                b_hat: Vec::new(),
                b_tilde: [Vec::new(), Vec::new()],
                b_bar: [Vec::new(), Vec::new()],
            }),
            Smoothness::C1 => {
                let p = space.degree();
                let r = space.regularity();
                if r == 0 || r + 2 > p {
                    return Err(Error::validation(format!(
                        "C1 coupling requires 1 <= r <= p-2, got p={p}, r={r}"
                    )));
                }
                let derived = space.derived_spaces()?;
                let space0 = derived.smoother;
                let space1 = derived.lower_degree;
                let scale = space.first_interior_knot() / p as f64;

                let mut b_hat = Vec::with_capacity(space0.dim());
                let mut b_tilde = [Vec::new(), Vec::new()];
                let mut b_bar = [Vec::new(), Vec::new()];
                for i in 0..space0.dim() {
                    let supp = space0.support_elements(i);
                    b_hat.push(collocate_on_band(&space, supp, |t| one_basis(&space0, i, t, 0))?);
                    for s in PatchId::BOTH {
                        let beta_s = glue.beta_s(s);
                        b_tilde[s.index()].push(collocate_on_band(&space, supp, |t| {
                            one_basis(&space0, i, t, 0)
                                + beta_s.eval(t) * one_basis(&space0, i, t, 1) * scale
                        })?);
                    }
                }
                for i in 0..space1.dim() {
                    let supp = space1.support_elements(i);
                    for s in PatchId::BOTH {
                        let alpha_s = glue.alpha(s);
                        b_bar[s.index()].push(collocate_on_band(&space, supp, |t| {
                            alpha_s.eval(t) * one_basis(&space1, i, t, 0)
                        })?);
                    }
                }
                Ok(Self {
                    smoothness,
                    space,
                    space0: Some(space0),
                    space1: Some(space1),
                    b_hat,
                    b_tilde,
                    b_bar,
                })
            }
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn univariate(&self) -> &UnivariateSplineSpace {
        &self.space
    }

    /// S_p^{r+1}, the space of interface value traces (C1 only).
    pub fn trace_space(&self) -> Option<&UnivariateSplineSpace> {
        self.space0.as_ref()
    }

    /// S_{p-1}^r, the space of transversal derivative traces (C1 only).
    pub fn derivative_trace_space(&self) -> Option<&UnivariateSplineSpace> {
        self.space1.as_ref()
    }

    /// Index of the first tensor row owned by interior functions.
    pub fn first_interior_row(&self) -> usize {
        match self.smoothness {
            Smoothness::C1 => 2,
            Smoothness::C0 => 1,
        }
    }

    pub fn num_interface_value(&self) -> usize {
        match self.smoothness {
            Smoothness::C1 => self.space0.as_ref().unwrap().dim(),
            Smoothness::C0 => self.space.dim(),
        }
    }

    pub fn num_interface_derivative(&self) -> usize {
        match self.smoothness {
            Smoothness::C1 => self.space1.as_ref().unwrap().dim(),
            Smoothness::C0 => 0,
        }
    }

    fn interior_per_patch(&self) -> usize {
        let n = self.space.dim();
        n * (n - self.first_interior_row())
    }

    pub fn dim(&self) -> usize {
        self.num_interface_value() + self.num_interface_derivative() + 2 * self.interior_per_patch()
    }

    pub fn function(&self, g: usize) -> BasisFunction {
        let nv = self.num_interface_value();
        let nd = self.num_interface_derivative();
        let n = self.space.dim();
        let i0 = self.first_interior_row();
        if g < nv {
            return BasisFunction::InterfaceValue(g);
        }
        if g < nv + nd {
            return BasisFunction::InterfaceDerivative(g - nv);
        }
        let k = g - nv - nd;
        let per = self.interior_per_patch();
        assert!(k < 2 * per, "basis index {g} out of range");
        let (patch, k) = if k < per { (PatchId::L, k) } else { (PatchId::R, k - per) };
        BasisFunction::Interior { patch, i: i0 + k / n, j: k % n }
    }

    pub fn index_of(&self, f: BasisFunction) -> usize {
        let nv = self.num_interface_value();
        let nd = self.num_interface_derivative();
        let n = self.space.dim();
        let i0 = self.first_interior_row();
        match f {
            BasisFunction::InterfaceValue(i) => i,
            BasisFunction::InterfaceDerivative(i) => nv + i,
            BasisFunction::Interior { patch, i, j } => {
                nv + nd + patch.index() * self.interior_per_patch() + (i - i0) * n + j
            }
        }
    }

    pub fn b_hat_row(&self, i: usize) -> &CoefRow {
        &self.b_hat[i]
    }

    pub fn b_tilde_row(&self, patch: PatchId, i: usize) -> &CoefRow {
        &self.b_tilde[patch.index()][i]
    }

    pub fn b_bar_row(&self, patch: PatchId, i: usize) -> &CoefRow {
        &self.b_bar[patch.index()][i]
    }

    /// Tensor-product coefficient rows of basis function `f` on `patch`:
    /// pairs (tensor row i, band in j). Empty when `f` vanishes on the patch.
    pub fn coeff_rows(&self, f: BasisFunction, patch: PatchId) -> Vec<(usize, CoefRow)> {
        match (self.smoothness, f) {
            (Smoothness::C1, BasisFunction::InterfaceValue(i)) => vec![
                (0, self.b_hat[i].clone()),
                (1, self.b_tilde[patch.index()][i].clone()),
            ],
            (Smoothness::C0, BasisFunction::InterfaceValue(j)) => {
                vec![(0, CoefRow { start: j, coef: vec![1.0] })]
            }
            (Smoothness::C1, BasisFunction::InterfaceDerivative(i)) => {
                vec![(1, self.b_bar[patch.index()][i].clone())]
            }
            (Smoothness::C0, BasisFunction::InterfaceDerivative(_)) => {
                unreachable!("C0 space has no derivative functions")
            }
            (_, BasisFunction::Interior { patch: q, i, j }) => {
                if q == patch {
                    vec![(i, CoefRow { start: j, coef: vec![1.0] })]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Inclusive element ranges (x1, x2) of the support on `patch`, or None
    /// when the function vanishes there.
    pub fn support_on_patch(
        &self,
        f: BasisFunction,
        patch: PatchId,
    ) -> Option<((usize, usize), (usize, usize))> {
        match (self.smoothness, f) {
            (Smoothness::C1, BasisFunction::InterfaceValue(i)) => {
                let x1 = (0, self.space.support_elements(1).1);
                Some((x1, self.space0.as_ref().unwrap().support_elements(i)))
            }
            (Smoothness::C0, BasisFunction::InterfaceValue(j)) => {
                Some((self.space.support_elements(0), self.space.support_elements(j)))
            }
            (_, BasisFunction::InterfaceDerivative(i)) => {
                Some((self.space.support_elements(1), self.space1.as_ref().unwrap().support_elements(i)))
            }
            (_, BasisFunction::Interior { patch: q, i, j }) => (q == patch).then(|| {
                (self.space.support_elements(i), self.space.support_elements(j))
            }),
        }
    }

    /// Evaluates basis function `g` on `patch` with pre-computed univariate
    /// windows at the target point (order: highest derivative filled in).
    pub fn eval_in_windows(
        &self,
        f: BasisFunction,
        patch: PatchId,
        wx: &BasisWindow,
        wy: &BasisWindow,
        order: usize,
    ) -> Jet2 {
        let mut jet = Jet2::default();
        for (row_i, band) in self.coeff_rows(f, patch) {
            let p = self.space.degree();
            if row_i < wx.first || row_i > wx.first + p {
                continue;
            }
            let kx = row_i - wx.first;
            let mut acc = [0.0f64; 3];
            let lo = band.start.max(wy.first);
            let hi = (band.start + band.coef.len()).min(wy.first + p + 1);
            for j in lo..hi {
                let c = band.coef[j - band.start];
                for (d, a) in acc.iter_mut().enumerate().take(order + 1) {
                    *a += c * wy.values[d][j - wy.first];
                }
            }
            jet.v += wx.values[0][kx] * acc[0];
            if order >= 1 {
                jet.d1 += wx.values[1][kx] * acc[0];
                jet.d2 += wx.values[0][kx] * acc[1];
            }
            if order >= 2 {
                jet.d11 += wx.values[2][kx] * acc[0];
                jet.d12 += wx.values[1][kx] * acc[1];
                jet.d22 += wx.values[0][kx] * acc[2];
            }
        }
        jet
    }

    pub fn eval_basis(
        &self,
        f: BasisFunction,
        patch: PatchId,
        xi1: f64,
        xi2: f64,
        order: usize,
    ) -> Jet2 {
        let wx = self.space.eval_unchecked(xi1, order);
        let wy = self.space.eval_unchecked(xi2, order);
        self.eval_in_windows(f, patch, &wx, &wy, order)
    }

    /// Expands a coefficient vector over the coupled basis into dense tensor
    /// coefficients on `patch` (row i, column j).
    pub fn tensor_from_combination(&self, coeffs: &[f64], patch: PatchId) -> Vec<Vec<f64>> {
        assert_eq!(coeffs.len(), self.dim());
        let n = self.space.dim();
        let mut c = vec![vec![0.0; n]; n];
        for (g, &w) in coeffs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (row_i, band) in self.coeff_rows(self.function(g), patch) {
                for (k, &v) in band.coef.iter().enumerate() {
                    c[row_i][band.start + k] += w * v;
                }
            }
        }
        c
    }
}

/// Value of the d-th derivative of basis function i of `space` at t.
/// Computes the S_p^r coefficient band of a function g supported exactly on
/// the elements `supp` (a member of S_p^r), via Greville collocation on the
/// band of functions supported there.
fn collocate_on_band(
    space: &UnivariateSplineSpace,
    supp: (usize, usize),
    g: impl Fn(f64) -> f64,
) -> Result<CoefRow> {
    let (start, coef) = space.band_coefficients(supp, g)?;
    Ok(CoefRow { start, coef })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compute_gluing, curved, lshape, TwoPatchGeometry};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c1_space(geo: &TwoPatchGeometry, p: usize, brk: &[f64]) -> CoupledSpace {
        let glue = compute_gluing(geo).unwrap();
        let s = UnivariateSplineSpace::make(p, p - 2, brk).unwrap();
        CoupledSpace::new(s, &glue, Smoothness::C1).unwrap()
    }

    #[test]
    fn dimension_counts() {
        let geo = lshape();
        let w = c1_space(&geo, 3, &[0.5]);
        assert_eq!(w.univariate().dim(), 6);
        assert_eq!(w.num_interface_value(), 5);
        assert_eq!(w.num_interface_derivative(), 4);
        assert_eq!(w.dim(), 57);

        let w = c1_space(&geo, 4, &[0.5]);
        assert_eq!(w.dim(), 6 + 5 + 2 * 7 * 5);

        let glue = compute_gluing(&geo).unwrap();
        let s = UnivariateSplineSpace::make(3, 1, &[0.5]).unwrap();
        let c0 = CoupledSpace::new(s, &glue, Smoothness::C0).unwrap();
        assert_eq!(c0.dim(), 6 + 2 * 6 * 5);
    }

    #[test]
    fn index_roundtrip() {
        let geo = curved();
        let w = c1_space(&geo, 3, &[0.25, 0.5, 0.75]);
        for g in 0..w.dim() {
            assert_eq!(w.index_of(w.function(g)), g);
        }
    }

    /// Interface traces define the basis: value trace N_i^{p,r+1} and zero
    /// transversal derivative for value functions, zero trace and transversal
    /// derivative (p/t1) N_i^{p-1,r} for derivative functions.
    #[test]
    fn interface_traces() {
        for geo in [lshape(), curved()] {
            let glue = compute_gluing(&geo).unwrap();
            for p in [3usize, 4] {
                let space = UnivariateSplineSpace::make(p, p - 2, &[0.5]).unwrap();
                let tau1 = space.first_interior_knot();
                let w = CoupledSpace::new(space, &glue, Smoothness::C1).unwrap();
                let s0 = w.trace_space().unwrap().clone();
                let s1 = w.derivative_trace_space().unwrap().clone();
                for m in 0..=20 {
                    let t = m as f64 / 20.0;
                    for s in PatchId::BOTH {
                        let alpha = glue.alpha(s).eval(t);
                        let beta = glue.beta_s(s).eval(t);
                        let transversal = |jet: &Jet2| (jet.d1 - beta * jet.d2) / alpha;
                        for i in 0..w.num_interface_value() {
                            let jet =
                                w.eval_basis(BasisFunction::InterfaceValue(i), s, 0.0, t, 1);
                            assert_abs_diff_eq!(jet.v, one_basis(&s0, i, t, 0), epsilon = 1e-12);
                            assert_abs_diff_eq!(transversal(&jet), 0.0, epsilon = 1e-11);
                        }
                        for i in 0..w.num_interface_derivative() {
                            let jet =
                                w.eval_basis(BasisFunction::InterfaceDerivative(i), s, 0.0, t, 1);
                            assert_abs_diff_eq!(jet.v, 0.0, epsilon = 1e-12);
                            assert_abs_diff_eq!(
                                transversal(&jet),
                                p as f64 / tau1 * one_basis(&s1, i, t, 0),
                                epsilon = 1e-11
                            );
                        }
                    }
                }
            }
        }
    }

    /// Every function of the space satisfies the parametric G1 matching
    /// condition, which is equivalent to a continuous physical gradient.
    #[test]
    fn random_combinations_are_c1() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for geo in [lshape(), curved()] {
            let glue = compute_gluing(&geo).unwrap();
            for p in [3usize, 4] {
                let space = UnivariateSplineSpace::make(p, p - 2, &[0.25, 0.5, 0.75]).unwrap();
                let w = CoupledSpace::new(space, &glue, Smoothness::C1).unwrap();
                for _ in 0..5 {
                    let coeffs: Vec<f64> =
                        (0..w.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let eval_patch = |s: PatchId, t: f64| {
                        let mut jet = Jet2::default();
                        for (g, &c) in coeffs.iter().enumerate() {
                            let b = w.eval_basis(w.function(g), s, 0.0, t, 1);
                            jet.v += c * b.v;
                            jet.d1 += c * b.d1;
                            jet.d2 += c * b.d2;
                        }
                        jet
                    };
                    for m in 0..=40 {
                        let t = m as f64 / 40.0;
                        let jl = eval_patch(PatchId::L, t);
                        let jr = eval_patch(PatchId::R, t);
                        assert_abs_diff_eq!(jl.v, jr.v, epsilon = 1e-11);
                        let g1 = glue.alpha_r.eval(t) * jl.d1 - glue.alpha_l.eval(t) * jr.d1
                            + glue.beta.eval(t) * jl.d2;
                        assert_abs_diff_eq!(g1, 0.0, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    /// The collocation bands must reproduce the defining closed forms
    /// everywhere, not just at the interface.
    #[test]
    fn banded_representation_matches_direct_formulas() {
        let geo = curved();
        let glue = compute_gluing(&geo).unwrap();
        let space = UnivariateSplineSpace::make(3, 1, &[0.5]).unwrap();
        let tau1 = space.first_interior_knot();
        let p = space.degree();
        let w = CoupledSpace::new(space.clone(), &glue, Smoothness::C1).unwrap();
        let s0 = w.trace_space().unwrap().clone();
        let s1 = w.derivative_trace_space().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x1: f64 = rng.random_range(0.0..1.0);
            let x2: f64 = rng.random_range(0.0..1.0);
            let n0 = one_basis(&space, 0, x1, 0);
            let n1 = one_basis(&space, 1, x1, 0);
            for s in PatchId::BOTH {
                for i in 0..w.num_interface_value() {
                    let direct = one_basis(&s0, i, x2, 0) * (n0 + n1)
                        + glue.beta_s(s).eval(x2)
                            * one_basis(&s0, i, x2, 1)
                            * (tau1 / p as f64)
                            * n1;
                    let jet = w.eval_basis(BasisFunction::InterfaceValue(i), s, x1, x2, 0);
                    assert_abs_diff_eq!(jet.v, direct, epsilon = 1e-12);
                }
                for i in 0..w.num_interface_derivative() {
                    let direct = glue.alpha(s).eval(x2) * one_basis(&s1, i, x2, 0) * n1;
                    let jet = w.eval_basis(BasisFunction::InterfaceDerivative(i), s, x1, x2, 0);
                    assert_abs_diff_eq!(jet.v, direct, epsilon = 1e-12);
                }
            }
        }
    }

    /// Interpolates tensor coefficients of a function on a Greville grid.
    fn tensor_interpolate(
        space: &UnivariateSplineSpace,
        f: impl Fn(f64, f64) -> f64,
    ) -> Vec<Vec<f64>> {
        let n = space.dim();
        let zeta = space.greville();
        let a = DMatrix::from_fn(n, n, |i, j| one_basis(space, j, zeta[i], 0));
        let lu = a.lu();
        // Interpolate rows in x2 first, then columns in x1.
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            let rhs = DVector::from_fn(n, |m, _| f(zeta[i], zeta[m]));
            let sol = lu.solve(&rhs).unwrap();
            row.copy_from_slice(sol.as_slice());
        }
        let mut c = vec![vec![0.0; n]; n];
        for j in 0..n {
            let rhs = DVector::from_fn(n, |m, _| rows[m][j]);
            let sol = lu.solve(&rhs).unwrap();
            for i in 0..n {
                c[i][j] = sol[i];
            }
        }
        c
    }

    /// A globally linear physical function lies in the C1 coupled space; its
    /// coefficients over the basis are recovered from interface traces and
    /// interior tensor coefficients, and must reproduce the tensor
    /// interpolant exactly.
    #[test]
    fn reproduces_physical_linears() {
        let (a, b, c) = (0.3, -0.7, 1.1);
        let u = |x: f64, y: f64| a + b * x + c * y;
        for geo in [lshape(), curved()] {
            let glue = compute_gluing(&geo).unwrap();
            for p in [3usize, 4] {
                let space = UnivariateSplineSpace::make(p, p - 2, &[0.5]).unwrap();
                let tau1 = space.first_interior_knot();
                let w = CoupledSpace::new(space.clone(), &glue, Smoothness::C1).unwrap();
                let s0 = w.trace_space().unwrap().clone();
                let s1 = w.derivative_trace_space().unwrap().clone();

                let mut coeffs = vec![0.0; w.dim()];
                // Interface value coefficients: interpolate the trace in S_p^{r+1}.
                let zeta0 = s0.greville();
                let n0 = s0.dim();
                let a0 = DMatrix::from_fn(n0, n0, |i, j| one_basis(&s0, j, zeta0[i], 0));
                let rhs0 = DVector::from_fn(n0, |m, _| {
                    let q = geo.interface_point(zeta0[m]);
                    u(q[0], q[1])
                });
                let kappa = a0.lu().solve(&rhs0).unwrap();
                for i in 0..n0 {
                    coeffs[w.index_of(BasisFunction::InterfaceValue(i))] = kappa[i];
                }
                // Derivative coefficients: interpolate (t1/p) grad(u) . d in S_{p-1}^r.
                let zeta1 = s1.greville();
                let n1 = s1.dim();
                let a1 = DMatrix::from_fn(n1, n1, |i, j| one_basis(&s1, j, zeta1[i], 0));
                let rhs1 = DVector::from_fn(n1, |m, _| {
                    let d = geo.transversal_direction(&glue, PatchId::L, zeta1[m]);
                    tau1 / p as f64 * (b * d[0] + c * d[1])
                });
                let mu = a1.lu().solve(&rhs1).unwrap();
                for i in 0..n1 {
                    coeffs[w.index_of(BasisFunction::InterfaceDerivative(i))] = mu[i];
                }

                for s in PatchId::BOTH {
                    let patch = geo.patch(s);
                    let exact = tensor_interpolate(&space, |x1, x2| {
                        let q = patch.point(x1, x2);
                        u(q[0], q[1])
                    });
                    // Interior coefficients are plain tensor coefficients.
                    for i in 2..space.dim() {
                        for j in 0..space.dim() {
                            coeffs[w.index_of(BasisFunction::Interior { patch: s, i, j })] =
                                exact[i][j];
                        }
                    }
                    let got = w.tensor_from_combination(&coeffs, s);
                    for i in 0..space.dim() {
                        for j in 0..space.dim() {
                            assert_abs_diff_eq!(got[i][j], exact[i][j], epsilon = 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn c0_combination_has_continuous_values() {
        let geo = curved();
        let glue = compute_gluing(&geo).unwrap();
        let space = UnivariateSplineSpace::make(3, 2, &[0.5]).unwrap();
        let w = CoupledSpace::new(space, &glue, Smoothness::C0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..w.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for m in 0..=40 {
            let t = m as f64 / 40.0;
            let mut vl = 0.0;
            let mut vr = 0.0;
            for (g, &c) in coeffs.iter().enumerate() {
                vl += c * w.eval_basis(w.function(g), PatchId::L, 0.0, t, 0).v;
                vr += c * w.eval_basis(w.function(g), PatchId::R, 0.0, t, 0).v;
            }
            assert_abs_diff_eq!(vl, vr, epsilon = 1e-12);
        }
    }

    #[test]
    fn support_covers_function() {
        let geo = curved();
        let w = c1_space(&geo, 3, &[0.25, 0.5, 0.75]);
        let space = w.univariate().clone();
        for g in 0..w.dim() {
            let f = w.function(g);
            for s in PatchId::BOTH {
                let supp = w.support_on_patch(f, s);
                for ex in 0..space.num_elements() {
                    for ey in 0..space.num_elements() {
                        let (xa, xb) = space.element_bounds(ex);
                        let (ya, yb) = space.element_bounds(ey);
                        let mut maxv = 0.0f64;
                        for &(u, v) in &[(0.5, 0.5), (0.17, 0.83), (0.9, 0.31)] {
                            let x1 = xa + u * (xb - xa);
                            let x2 = ya + v * (yb - ya);
                            maxv = maxv.max(w.eval_basis(f, s, x1, x2, 0).v.abs());
                        }
                        let inside = supp.is_some_and(|((a, b), (c, d))| {
                            ex >= a && ex <= b && ey >= c && ey <= d
                        });
                        if !inside {
                            assert!(
                                maxv < 1e-13,
                                "function {g} leaks outside its support on {s} at ({ex},{ey})"
                            );
                        }
                    }
                }
            }
        }
    }
}
