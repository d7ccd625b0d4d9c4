//! Univariate B-spline spaces over open knot vectors with uniform interior
//! multiplicity, their evaluation, Greville abscissae, and dyadic refinement.
//!
//! A space is determined by a degree `p`, an interior regularity `r` and a
//! strictly increasing list of interior breakpoints in (0,1). Each breakpoint
//! is repeated `p - r` times in the knot vector; 0 and 1 are repeated `p + 1`
//! times, so endpoint basis functions interpolate.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Tolerance used to separate breakpoints read from files.
pub const BREAKPOINT_TOL: f64 = 1e-12;

/// Univariate spline space S of degree `p` and smoothness C^r at each
/// interior breakpoint. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateSplineSpace {
    p: usize,
    r: usize,
    /// Interior breakpoints only, strictly increasing, all in (0,1).
    breakpoints: Vec<f64>,
    /// Full open knot vector.
    knots: Vec<f64>,
    /// Breakpoints with the endpoints attached: 0, tau_1, .., tau_k, 1.
    grid: Vec<f64>,
}

/// Companion spaces used by the interface construction: same breakpoints with
/// regularity raised by one, and with degree lowered by one.
#[derive(Debug, Clone)]
pub struct DerivedSpaces {
    /// S_p^{r+1}
    pub smoother: UnivariateSplineSpace,
    /// S_{p-1}^r
    pub lower_degree: UnivariateSplineSpace,
}

/// Basis values at one point: functions `first .. first + p + 1`, one row per
/// derivative order. Entries outside the window are zero.
#[derive(Debug, Clone)]
pub struct BasisWindow {
    pub first: usize,
    /// `values[d][k]` = d-th derivative of function `first + k`.
    pub values: Vec<Vec<f64>>,
}

/// Sparse row-banded matrix expressing each coarse basis function as a
/// combination of fine ones: N_i = sum_j lambda_{i,j} M_j.
#[derive(Debug, Clone)]
pub struct RefinementMatrix {
    rows: Vec<BandRow>,
    ncols: usize,
}

#[derive(Debug, Clone)]
struct BandRow {
    start: usize,
    coef: Vec<f64>,
}

impl UnivariateSplineSpace {
    pub fn make(p: usize, r: usize, breakpoints: &[f64]) -> Result<Self> {
        if p < 1 {
            return Err(Error::validation("degree must be at least 1"));
        }
        if r >= p {
            return Err(Error::validation(format!(
                "regularity r={r} must satisfy r <= p-1 for degree p={p}"
            )));
        }
        let mut prev = 0.0;
        for &t in breakpoints {
            if !(t > prev + BREAKPOINT_TOL && t < 1.0 - BREAKPOINT_TOL) {
                return Err(Error::validation(format!(
                    "breakpoints must be strictly increasing inside (0,1); got {t} after {prev}"
                )));
            }
            prev = t;
        }
        let mult = p - r;
        let mut knots = Vec::with_capacity(2 * (p + 1) + mult * breakpoints.len());
        knots.extend(std::iter::repeat(0.0).take(p + 1));
        for &t in breakpoints {
            knots.extend(std::iter::repeat(t).take(mult));
        }
        knots.extend(std::iter::repeat(1.0).take(p + 1));
        let mut grid = Vec::with_capacity(breakpoints.len() + 2);
        grid.push(0.0);
        grid.extend_from_slice(breakpoints);
        grid.push(1.0);
        Ok(Self { p, r, breakpoints: breakpoints.to_vec(), knots, grid })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn regularity(&self) -> usize {
        self.r
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.p - 1
    }

    /// Number of breakpoint intervals (elements).
    pub fn num_elements(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.grid[e], self.grid[e + 1])
    }

    /// First knot strictly after the leading zeros; equals the first interior
    /// breakpoint, or 1 when there is none.
    pub fn first_interior_knot(&self) -> f64 {
        self.knots[self.p + 1]
    }

    /// Companion spaces sharing the breakpoints (see `DerivedSpaces`).
    pub fn derived_spaces(&self) -> Result<DerivedSpaces> {
        if self.r + 1 > self.p - 1 {
            return Err(Error::validation(format!(
                "cannot raise regularity: r+1={} exceeds p-1={}",
                self.r + 1,
                self.p - 1
            )));
        }
        Ok(DerivedSpaces {
            smoother: Self::make(self.p, self.r + 1, &self.breakpoints)?,
            lower_degree: Self::make(self.p - 1, self.r, &self.breakpoints)?,
        })
    }

    /// Knot span index mu with knots[mu] <= x < knots[mu+1]; at x = 1 the
    /// last non-empty span is used (left-limit convention).
    fn find_span(&self, x: f64) -> usize {
        let n = self.dim();
        if x >= 1.0 {
            return n - 1;
        }
        // Binary search over [p, n-1].
        let mut lo = self.p;
        let mut hi = n - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Values and derivatives up to `max_deriv` of the p+1 functions that can
    /// be nonzero at `x`.
    pub fn eval(&self, x: f64, max_deriv: usize) -> Result<BasisWindow> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::validation(format!("parameter {x} outside [0,1]")));
        }
        Ok(self.eval_unchecked(x, max_deriv))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, max_deriv: usize) -> BasisWindow {
        self.eval_at_span(self.find_span(x), x, max_deriv)
    }

    /// Evaluates within element `e`'s polynomial pieces even when x sits on
    /// the element boundary, yielding the one-sided limit from inside `e`.
    pub fn eval_in_element(&self, e: usize, x: f64, max_deriv: usize) -> BasisWindow {
        let (a, b) = self.element_bounds(e);
        debug_assert!(x >= a - 1e-12 && x <= b + 1e-12);
        self.eval_at_span(self.find_span(0.5 * (a + b)), x, max_deriv)
    }

    fn eval_at_span(&self, mu: usize, x: f64, max_deriv: usize) -> BasisWindow {
        let p = self.p;
        let d = max_deriv.min(p);

        // Cox-de Boor triangle with knot differences kept for derivatives.
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[mu + 1 - j];
            right[j] = self.knots[mu + j] - x;
            let mut saved = 0.0;
            for k in 0..j {
                ndu[j][k] = right[k + 1] + left[j - k];
                let temp = ndu[k][j - 1] / ndu[j][k];
                ndu[k][j] = saved + right[k + 1] * temp;
                saved = left[j - k] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut values = vec![vec![0.0; p + 1]; max_deriv + 1];
        for k in 0..=p {
            values[0][k] = ndu[k][p];
        }

        // Derivative recursion over the difference table.
        let mut a = vec![vec![0.0; p + 1]; 2];
        for rr in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=d {
                let mut dv = 0.0;
                let rk = rr as isize - k as isize;
                let pk = p - k;
                if rr >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    dv = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if rr as isize - 1 <= pk as isize { k - 1 } else { p - rr };
                for j in j1..=j2 {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    dv += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if rr <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][rr];
                    dv += a[s2][k] * ndu[rr][pk];
                }
                values[k][rr] = dv;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=d {
            for v in values[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }

        BasisWindow { first: mu - p, values }
    }

    /// Greville abscissae: means of p consecutive interior knots.
    pub fn greville(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|m| self.knots[m + 1..m + 1 + self.p].iter().sum::<f64>() / self.p as f64)
            .collect()
    }

    /// Index of the breakpoint interval containing x, with the left-limit
    /// convention at interior breakpoints' right neighbours irrelevant here:
    /// x strictly inside an interval maps to that interval.
    pub fn element_of(&self, x: f64) -> usize {
        let k = self.breakpoints.len();
        let mut lo = 0usize;
        let mut hi = k; // intervals 0..=k
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.grid[mid] <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo.min(k)
    }

    /// Inclusive range of breakpoint intervals on which basis function i is
    /// supported.
    pub fn support_elements(&self, i: usize) -> (usize, usize) {
        let lo_knot = self.knots[i];
        let hi_knot = self.knots[i + self.p + 1];
        let lo = self.grid_index(lo_knot);
        let hi = self.grid_index(hi_knot);
        (lo, hi - 1)
    }

    fn grid_index(&self, value: f64) -> usize {
        let i = self.grid.partition_point(|&g| g < value - BREAKPOINT_TOL);
        assert!(
            i < self.grid.len() && (self.grid[i] - value).abs() <= BREAKPOINT_TOL,
            "knot value must be a breakpoint"
        );
        i
    }

    /// Inclusive range of basis functions supported on breakpoint interval e.
    pub fn functions_on_element(&self, e: usize) -> (usize, usize) {
        let mid = 0.5 * (self.grid[e] + self.grid[e + 1]);
        let w = self.eval_unchecked(mid, 0);
        (w.first, w.first + self.p)
    }

    /// Dyadic refinement: insert every interval midpoint with the same
    /// interior multiplicity. Returns the fine space and the exact mask.
    pub fn refine_dyadic(&self) -> (UnivariateSplineSpace, RefinementMatrix) {
        let mut fine_bp = Vec::with_capacity(2 * self.breakpoints.len() + 1);
        for e in 0..self.num_elements() {
            let (a, b) = self.element_bounds(e);
            if e > 0 {
                fine_bp.push(a);
            }
            fine_bp.push(0.5 * (a + b));
        }
        let fine = Self::make(self.p, self.r, &fine_bp).expect("dyadic breakpoints valid");

        // Knot insertion keeps supports, so row j carries only the fine
        // functions supported inside supp N_j and band collocation recovers
        // its coefficients one row at a time. True entries are products of
        // knot-span ratios and stay far above roundoff; anything at solver
        // noise level is a structural zero of the insertion and is snapped,
        // as downstream mask identities hold exactly.
        let rows = (0..self.dim())
            .map(|j| {
                let (lo, hi) = self.support_elements(j);
                let (start, mut coef) = fine
                    .band_coefficients((2 * lo, 2 * hi + 1), |t| one_basis(self, j, t, 0))
                    .expect("coarse function lies in the fine space");
                let top = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for v in &mut coef {
                    if v.abs() <= 1e-13 * top {
                        *v = 0.0;
                    }
                }
                let lead = coef.iter().take_while(|v| **v == 0.0).count();
                let tail = coef.iter().rev().take_while(|v| **v == 0.0).count();
                let coef = coef[lead..coef.len() - tail].to_vec();
                BandRow { start: start + lead, coef }
            })
            .collect();
        let ncols = fine.dim();
        (fine, RefinementMatrix { rows, ncols })
    }

    fn greville_point(&self, j: usize) -> f64 {
        self.knots[j + 1..j + 1 + self.p].iter().sum::<f64>() / self.p as f64
    }

    /// Band of functions supported inside elements supp.0..=supp.1, found by
    /// binary search: both support endpoints are nondecreasing in the
    /// function index. Returns a half-open index range.
    fn functions_inside(&self, supp: (usize, usize)) -> (usize, usize) {
        let n = self.dim();
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.support_elements(mid).0 < supp.0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let first = lo;
        let (mut lo, mut hi) = (first, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.support_elements(mid).1 <= supp.1 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (first, lo)
    }

    /// Computes the coefficient band of a function g lying in this space and
    /// supported exactly on the elements supp.0..=supp.1. Coefficients of
    /// functions reaching outside supp(g) vanish, because the basis
    /// restricted to any element is linearly independent; the remaining
    /// square collocation system at Greville points is nonsingular by
    /// Schoenberg-Whitney.
    pub(crate) fn band_coefficients(
        &self,
        supp: (usize, usize),
        g: impl Fn(f64) -> f64,
    ) -> Result<(usize, Vec<f64>)> {
        let (start, end) = self.functions_inside(supp);
        if start >= end {
            return Err(Error::numerical("collocation band is empty"));
        }
        let m = end - start;
        let zeta: Vec<f64> = (start..end).map(|j| self.greville_point(j)).collect();
        let a = DMatrix::from_fn(m, m, |row, col| one_basis(self, start + col, zeta[row], 0));
        let rhs = DVector::from_fn(m, |row, _| g(zeta[row]));
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("Greville collocation system is singular"))?;
        Ok((start, sol.iter().copied().collect()))
    }
}

/// Value (or d-th derivative) of the single basis function i at t.
pub(crate) fn one_basis(space: &UnivariateSplineSpace, i: usize, t: f64, d: usize) -> f64 {
    let w = space.eval_unchecked(t, d);
    let k = i.wrapping_sub(w.first);
    if k <= space.degree() {
        w.values[d][k]
    } else {
        0.0
    }
}

impl RefinementMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| BandRow { start: i, coef: vec![1.0] }).collect(),
            ncols: n,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Nonzero band of row i as (first column, coefficients).
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        let r = &self.rows[i];
        (r.start, &r.coef)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let r = &self.rows[i];
        if j >= r.start && j < r.start + r.coef.len() {
            r.coef[j - r.start]
        } else {
            0.0
        }
    }

    /// Chained refinement: self maps level a to b, next maps b to c.
    pub fn compose(&self, next: &RefinementMatrix) -> RefinementMatrix {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut start = usize::MAX;
                let mut end = 0usize;
                for (k, &c) in row.coef.iter().enumerate() {
                    if c != 0.0 {
                        let nr = &next.rows[row.start + k];
                        start = start.min(nr.start);
                        end = end.max(nr.start + nr.coef.len());
                    }
                }
                if start == usize::MAX {
                    return BandRow { start: 0, coef: vec![] };
                }
                let mut coef = vec![0.0; end - start];
                for (k, &c) in row.coef.iter().enumerate() {
                    if c != 0.0 {
                        let nr = &next.rows[row.start + k];
                        for (m, &v) in nr.coef.iter().enumerate() {
                            coef[nr.start + m - start] += c * v;
                        }
                    }
                }
                BandRow { start, coef }
            })
            .collect();
        RefinementMatrix { rows, ncols: next.ncols }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.ncols];
        for row in &self.rows {
            for (k, &c) in row.coef.iter().enumerate() {
                sums[row.start + k] += c;
            }
        }
        sums
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![0.0; self.ncols];
                for (k, &c) in r.coef.iter().enumerate() {
                    v[r.start + k] = c;
                }
                v
            })
            .collect()
    }
}
