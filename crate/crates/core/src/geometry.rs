//! Two-patch planar geometries, their evaluation, and G1 gluing data.
//!
//! A geometry consists of two tensor-product spline patches L and R mapping
//! [0,1]^2 into the plane, glued along the parametric edge xi1 = 0 of both:
//! F^L(0,t) = F^R(0,t) is the interface curve. A geometry is analysis-suitable
//! G1 when linear functions alpha^L, alpha^R and a quadratic beta satisfy
//!
//!   alpha^R d1F^L(0,t) - alpha^L d1F^R(0,t) + beta d2F(0,t) = 0   on [0,1]
//!
//! with alpha^L alpha^R < 0. Those functions are computed here from a sampled
//! null-space problem and normalized by the minimization described in
//! `compute_gluing`.

use crate::bspline::UnivariateSplineSpace;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatchId {
    L,
    R,
}

impl PatchId {
    pub const BOTH: [PatchId; 2] = [PatchId::L, PatchId::R];

    pub fn index(self) -> usize {
        match self {
            PatchId::L => 0,
            PatchId::R => 1,
        }
    }
}

impl std::fmt::Display for PatchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PatchId::L => "L",
            PatchId::R => "R",
        })
    }
}

/// One mapped patch: control net over a tensor-product spline space. The
/// geometry space is independent of any analysis space built on the patch.
#[derive(Debug, Clone)]
pub struct PatchMapping {
    space_xi1: UnivariateSplineSpace,
    space_xi2: UnivariateSplineSpace,
    /// net[i][j] = control point c_{i,j}; i runs along xi1, j along xi2;
    /// i = 0 is the interface column.
    net: Vec<Vec<[f64; 2]>>,
}

/// Value, Jacobian and second derivatives of a patch map at one point.
#[derive(Debug, Clone, Copy)]
pub struct PatchFrame {
    pub point: [f64; 2],
    /// jac[k][d] = d F_k / d xi_d
    pub jac: [[f64; 2]; 2],
    /// hess[k] = [d11 F_k, d12 F_k, d22 F_k]
    pub hess: [[f64; 3]; 2],
}

impl PatchFrame {
    pub fn det_jac(&self) -> f64 {
        self.jac[0][0] * self.jac[1][1] - self.jac[0][1] * self.jac[1][0]
    }
}

impl PatchMapping {
    pub fn new(
        space_xi1: UnivariateSplineSpace,
        space_xi2: UnivariateSplineSpace,
        net: Vec<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        if net.len() != space_xi1.dim() || net.iter().any(|c| c.len() != space_xi2.dim()) {
            return Err(Error::geometry(format!(
                "control net {}x{} does not match space dims {}x{}",
                net.len(),
                net.first().map_or(0, |c| c.len()),
                space_xi1.dim(),
                space_xi2.dim()
            )));
        }
        Ok(Self { space_xi1, space_xi2, net })
    }

    pub fn net(&self) -> &[Vec<[f64; 2]>] {
        &self.net
    }

    /// Map a parametric point; derivatives up to second order.
    pub fn frame(&self, xi1: f64, xi2: f64) -> PatchFrame {
        let wx = self.space_xi1.eval_unchecked(xi1, 2);
        let wy = self.space_xi2.eval_unchecked(xi2, 2);
        let px = self.space_xi1.degree();
        let py = self.space_xi2.degree();
        let mut point = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        let mut hess = [[0.0; 3]; 2];
        for a in 0..=px {
            for b in 0..=py {
                let c = self.net[wx.first + a][wy.first + b];
                let (v0, v1, v2) = (wx.values[0][a], wx.values[1][a], wx.values[2][a]);
                let (u0, u1, u2) = (wy.values[0][b], wy.values[1][b], wy.values[2][b]);
                for k in 0..2 {
                    point[k] += c[k] * v0 * u0;
                    jac[k][0] += c[k] * v1 * u0;
                    jac[k][1] += c[k] * v0 * u1;
                    hess[k][0] += c[k] * v2 * u0;
                    hess[k][1] += c[k] * v1 * u1;
                    hess[k][2] += c[k] * v0 * u2;
                }
            }
        }
        PatchFrame { point, jac, hess }
    }

    pub fn point(&self, xi1: f64, xi2: f64) -> [f64; 2] {
        self.frame(xi1, xi2).point
    }
}

/// Linear polynomial a0 + a1 t stored by monomial coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear(pub f64, pub f64);

impl Linear {
    pub fn eval(&self, t: f64) -> f64 {
        self.0 + self.1 * t
    }
}

/// Quadratic polynomial b0 + b1 t + b2 t^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic(pub f64, pub f64, pub f64);

impl Quadratic {
    pub fn eval(&self, t: f64) -> f64 {
        self.0 + t * (self.1 + t * self.2)
    }
}

/// Gluing data of an analysis-suitable G1 geometry: alpha^S linear with
/// alpha^L alpha^R < 0 on [0,1]; beta = alpha^L beta^R - alpha^R beta^L with
/// linear beta^S of minimal joint L2 norm.
#[derive(Debug, Clone)]
pub struct GluingData {
    pub alpha_l: Linear,
    pub alpha_r: Linear,
    pub beta: Quadratic,
    pub beta_l: Linear,
    pub beta_r: Linear,
}

impl GluingData {
    pub fn alpha(&self, patch: PatchId) -> Linear {
        match patch {
            PatchId::L => self.alpha_l,
            PatchId::R => self.alpha_r,
        }
    }

    pub fn beta_s(&self, patch: PatchId) -> Linear {
        match patch {
            PatchId::L => self.beta_l,
            PatchId::R => self.beta_r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoPatchGeometry {
    left: PatchMapping,
    right: PatchMapping,
}

const INTERFACE_TOL: f64 = 1e-10;

impl TwoPatchGeometry {
    /// Validates the shared interface and Jacobian regularity on a sample
    /// grid; does not require the geometry to be analysis-suitable.
    pub fn new(left: PatchMapping, right: PatchMapping) -> Result<Self> {
        for m in 0..=50 {
            let t = m as f64 / 50.0;
            let a = left.point(0.0, t);
            let b = right.point(0.0, t);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if d > INTERFACE_TOL {
                return Err(Error::geometry(format!(
                    "patch edges xi1=0 disagree at xi2={t}: |F_L - F_R| = {d:.3e}"
                )));
            }
        }
        for (name, patch) in [("L", &left), ("R", &right)] {
            let mut sign = 0.0f64;
            for a in 0..=10 {
                for b in 0..=10 {
                    let det = patch.frame(a as f64 / 10.0, b as f64 / 10.0).det_jac();
                    if det.abs() < 1e-12 {
                        return Err(Error::geometry(format!(
                            "patch {name} has a singular Jacobian at ({}, {})",
                            a as f64 / 10.0,
                            b as f64 / 10.0
                        )));
                    }
                    if sign == 0.0 {
                        sign = det.signum();
                    } else if det.signum() != sign {
                        return Err(Error::geometry(format!(
                            "patch {name} Jacobian determinant changes sign"
                        )));
                    }
                }
            }
        }
        Ok(Self { left, right })
    }

    pub fn patch(&self, id: PatchId) -> &PatchMapping {
        match id {
            PatchId::L => &self.left,
            PatchId::R => &self.right,
        }
    }

    /// Interface curve F(0, t), shared by both patches.
    pub fn interface_point(&self, t: f64) -> [f64; 2] {
        self.left.point(0.0, t)
    }

    /// The transversal direction d at the interface, computed from patch S.
    /// Both patches give the same vector on an AS-G1 geometry.
    pub fn transversal_direction(&self, glue: &GluingData, patch: PatchId, t: f64) -> [f64; 2] {
        let f = self.patch(patch).frame(0.0, t);
        let beta_s = glue.beta_s(patch).eval(t);
        let alpha_s = glue.alpha(patch).eval(t);
        [
            (f.jac[0][0] - beta_s * f.jac[0][1]) / alpha_s,
            (f.jac[1][0] - beta_s * f.jac[1][1]) / alpha_s,
        ]
    }
}

/// Relative singular-value threshold classifying the G1 null space.
const GLUING_NULL_TOL: f64 = 1e-9;

/// Number of interface samples for the null-space system. The residual is a
/// polynomial of modest degree, so any sample count beyond its degree gives
/// the same null space; 41 keeps the system well conditioned.
const GLUING_SAMPLES: usize = 41;

/// Computes gluing data for an analysis-suitable G1 geometry.
///
/// The coefficients (alpha^L, alpha^R, beta) are found as the null space of
/// the G1 identity sampled along the interface. The null space is at least
/// one-dimensional for AS-G1 geometries (scaling freedom); the specific
/// representative minimizes ||alpha^L + 1||^2 + ||alpha^R - 1||^2 in L2([0,1]).
/// beta^L, beta^R then minimize ||beta^L||^2 + ||beta^R||^2 subject to
/// beta = alpha^L beta^R - alpha^R beta^L.
/// Relative sup-norm residual of the gluing identity
/// alpha^R d1F^L - alpha^L d1F^R + beta d2F0 over a 101-point interface
/// sample; what the analysis-suitability threshold is measured against.
pub fn gluing_residual(geo: &TwoPatchGeometry, glue: &GluingData) -> f64 {
    let mut max_res = 0.0f64;
    let mut scale = 0.0f64;
    for m in 0..=100 {
        let t = m as f64 / 100.0;
        let fl = geo.left.frame(0.0, t);
        let fr = geo.right.frame(0.0, t);
        for k in 0..2 {
            let term1 = glue.alpha_r.eval(t) * fl.jac[k][0];
            let term2 = glue.alpha_l.eval(t) * fr.jac[k][0];
            let term3 = glue.beta.eval(t) * fl.jac[k][1];
            max_res = max_res.max((term1 - term2 + term3).abs());
            scale = scale.max(term1.abs()).max(term2.abs()).max(term3.abs());
        }
    }
    max_res / scale.max(1.0)
}

pub fn compute_gluing(geo: &TwoPatchGeometry) -> Result<GluingData> {
    // Rows: alpha^R d1F^L - alpha^L d1F^R + beta d2F0 = 0 at samples, per
    // coordinate; unknowns (aL0, aL1, aR0, aR1, b0, b1, b2), all monomial.
    let mut rows = Vec::with_capacity(2 * GLUING_SAMPLES);
    for m in 0..GLUING_SAMPLES {
        let t = m as f64 / (GLUING_SAMPLES - 1) as f64;
        let fl = geo.left.frame(0.0, t);
        let fr = geo.right.frame(0.0, t);
        for k in 0..2 {
            let d1l = fl.jac[k][0];
            let d1r = fr.jac[k][0];
            let d2 = fl.jac[k][1];
            rows.push([-d1r, -d1r * t, d1l, d1l * t, d2, d2 * t, d2 * t * t]);
        }
    }
    let a = DMatrix::from_fn(rows.len(), 7, |i, j| rows[i][j]);
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd computed with V^T");
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let null_cols: Vec<usize> = (0..7)
        .filter(|&j| svd.singular_values[j] / smax < GLUING_NULL_TOL)
        .collect();
    if null_cols.is_empty() {
        return Err(Error::NotAnalysisSuitable { residual: smin / smax });
    }

    // Minimize J1 over the null space: quadratic in the null coordinates.
    // L2 Gram of the monomials {1, t} on [0,1].
    let g = [[1.0, 0.5], [0.5, 1.0 / 3.0]];
    let m = null_cols.len();
    let basis: Vec<[f64; 7]> = null_cols
        .iter()
        .map(|&j| std::array::from_fn(|k| v_t[(j, k)]))
        .collect();
    let mut aq = DMatrix::zeros(m, m);
    let mut bq = nalgebra::DVector::zeros(m);
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += g[a][b] * (basis[i][a] * basis[j][b] + basis[i][2 + a] * basis[j][2 + b]);
                }
            }
            aq[(i, j)] = s;
        }
        // Linear term from +1 (alpha^L) and -1 (alpha^R) against the constant.
        let mut s = 0.0;
        for a in 0..2 {
            s += g[a][0] * (basis[i][a] - basis[i][2 + a]);
        }
        bq[i] = s;
    }
    let coef = aq
        .lu()
        .solve(&(-bq))
        .ok_or_else(|| Error::numerical("gluing normalization system is singular"))?;
    let mut w = [0.0f64; 7];
    for i in 0..m {
        for k in 0..7 {
            w[k] += coef[i] * basis[i][k];
        }
    }
    let alpha_l = Linear(w[0], w[1]);
    let alpha_r = Linear(w[2], w[3]);
    let beta = Quadratic(w[4], w[5], w[6]);

    // Verify the identity and the sign condition at a fine sample.
    let mut max_res = 0.0f64;
    let mut scale = 0.0f64;
    let mut max_prod = f64::NEG_INFINITY;
    for m in 0..=100 {
        let t = m as f64 / 100.0;
        let fl = geo.left.frame(0.0, t);
        let fr = geo.right.frame(0.0, t);
        for k in 0..2 {
            let term1 = alpha_r.eval(t) * fl.jac[k][0];
            let term2 = alpha_l.eval(t) * fr.jac[k][0];
            let term3 = beta.eval(t) * fl.jac[k][1];
            max_res = max_res.max((term1 - term2 + term3).abs());
            scale = scale.max(term1.abs()).max(term2.abs()).max(term3.abs());
        }
        max_prod = max_prod.max(alpha_l.eval(t) * alpha_r.eval(t));
    }
    if max_res > 1e-9 * scale.max(1.0) {
        return Err(Error::NotAnalysisSuitable { residual: max_res / scale.max(1.0) });
    }
    if max_prod >= 0.0 {
        return Err(Error::geometry(format!(
            "gluing sign condition violated: max alpha^L alpha^R = {max_prod:.3e}"
        )));
    }

    // Minimal-norm linear split of beta: KKT system with the polynomial
    // identity alpha^L beta^R - alpha^R beta^L = beta as three constraints.
    let mut kkt = DMatrix::zeros(7, 7);
    for a in 0..2 {
        for b in 0..2 {
            kkt[(a, b)] = 2.0 * g[a][b];
            kkt[(2 + a, 2 + b)] = 2.0 * g[a][b];
        }
    }
    // Constraint rows (coefficients of 1, t, t^2).
    let cons = [
        [-alpha_r.0, 0.0, alpha_l.0, 0.0],
        [-alpha_r.1, -alpha_r.0, alpha_l.1, alpha_l.0],
        [0.0, -alpha_r.1, 0.0, alpha_l.1],
    ];
    for (ci, row) in cons.iter().enumerate() {
        for (uj, &v) in row.iter().enumerate() {
            kkt[(4 + ci, uj)] = v;
            kkt[(uj, 4 + ci)] = v;
        }
    }
    let mut rhs = nalgebra::DVector::zeros(7);
    rhs[4] = beta.0;
    rhs[5] = beta.1;
    rhs[6] = beta.2;
    // The KKT matrix drops rank when both alphas are constant (the t^2
    // constraint row vanishes); the pseudoinverse still selects the
    // minimal-norm split of the then-consistent system.
    let svd_kkt = kkt.svd(true, true);
    let smax_kkt = svd_kkt.singular_values.max();
    let sol = svd_kkt
        .solve(&rhs, 1e-12 * smax_kkt)
        .map_err(|_| Error::numerical("beta split system is singular"))?;
    Ok(GluingData {
        alpha_l,
        alpha_r,
        beta,
        beta_l: Linear(sol[0], sol[1]),
        beta_r: Linear(sol[2], sol[3]),
    })
}

#[derive(Deserialize)]
struct GeometryFile {
    degree: usize,
    #[serde(default)]
    regularity: Option<usize>,
    #[serde(default)]
    breakpoints: Vec<f64>,
    patches: Vec<PatchFile>,
}

#[derive(Deserialize)]
struct PatchFile {
    id: String,
    control_points: Vec<Vec<[f64; 2]>>,
}

/// Reads a two-patch geometry from JSON: degree, optional regularity,
/// breakpoints shared by both directions, and two patches "L" and "R" with
/// control_points[i][j] = c_{i,j} (i along xi1 starting at the interface).
pub fn load_geometry_str(text: &str) -> Result<TwoPatchGeometry> {
    let file: GeometryFile = serde_json::from_str(text)?;
    let r = file.regularity.unwrap_or(file.degree.saturating_sub(1));
    if file.degree == 0 {
        return Err(Error::geometry("geometry degree must be at least 1"));
    }
    let space = UnivariateSplineSpace::make(file.degree, r.min(file.degree - 1), &file.breakpoints)?;
    let mut left = None;
    let mut right = None;
    for p in file.patches {
        let mapping = PatchMapping::new(space.clone(), space.clone(), p.control_points)?;
        match p.id.as_str() {
            "L" => left = Some(mapping),
            "R" => right = Some(mapping),
            other => return Err(Error::geometry(format!("unknown patch id {other:?}"))),
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => TwoPatchGeometry::new(l, r),
        _ => Err(Error::geometry("geometry file must contain patches \"L\" and \"R\"")),
    }
}

pub fn load_geometry(path: &std::path::Path) -> Result<TwoPatchGeometry> {
    load_geometry_str(&std::fs::read_to_string(path)?)
}

/// Two unit squares [-1,0]x[0,1] and [0,1]^2 glued along the segment x = 0.
pub fn two_unit_squares() -> TwoPatchGeometry {
    let text = r#"{
      "degree": 1, "breakpoints": [],
      "patches": [
        {"id": "L", "control_points": [[[0,0],[0,1]], [[-1,0],[-1,1]]]},
        {"id": "R", "control_points": [[[0,0],[0,1]], [[1,0],[1,1]]]}
      ]}"#;
    load_geometry_str(text).expect("builtin geometry is valid")
}

/// L-shaped domain (-1,1)^2 minus [0,1]x[-1,0], split into two bilinear
/// patches along the diagonal from (0,0) to (-1,1). The reentrant corner of
/// interior angle 3*pi/2 sits at the origin, at parameter (0,0) of both
/// patches.
pub fn lshape() -> TwoPatchGeometry {
    load_geometry_str(include_str!("../data/lshape.json")).expect("builtin geometry is valid")
}

/// Curved AS-G1 two-patch domain with bicubic Bezier patches.
pub fn curved() -> TwoPatchGeometry {
    load_geometry_str(include_str!("../data/curved.json")).expect("builtin geometry is valid")
}

/// Biquadratic initial parameterization of the curved domain; same boundary,
/// but not analysis-suitable G1.
pub fn curved_initial() -> TwoPatchGeometry {
    load_geometry_str(include_str!("../data/curved_initial.json"))
        .expect("builtin geometry is valid")
}
