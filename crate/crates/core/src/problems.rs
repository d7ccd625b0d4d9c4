//! The four benchmark problems: exact solutions, source terms, run defaults.
//!
//! Each problem carries a closed-form exact solution with first and second
//! Cartesian derivatives, so boundary data, source terms, and error norms can
//! all be evaluated without any symbolic machinery. The corner-singular
//! solutions are written in polar coordinates about the reentrant corner and
//! pushed to Cartesian jets through the chain rule.

use crate::geometry::{self, TwoPatchGeometry};
use crate::space::Jet2;

/// Singular exponent for the bilaplacian corner solution: smallest positive
/// root of sin(3πz/2) = z.
pub const BILAPLACIAN_Z: f64 = 0.544483736782464;

/// A benchmark problem on one of the bundled two-patch domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Poisson on the L-shape; u = ρ^{4/3} sin(4θ/3), singular at the corner.
    CornerSingularity,
    /// Poisson on the curved domain; the singular line of u coincides with
    /// the patch interface.
    InterfaceSingularity,
    /// Poisson on the curved domain; u is singular along y = 1.7, which
    /// crosses the interface obliquely.
    LineSingularity,
    /// Bilaplacian on the L-shape; u = ρ^{z+1}(C₁F₁(θ) − C₂F₂(θ)).
    BilaplacianCorner,
}

impl Problem {
    pub const ALL: [Problem; 4] = [
        Problem::CornerSingularity,
        Problem::InterfaceSingularity,
        Problem::LineSingularity,
        Problem::BilaplacianCorner,
    ];

    pub fn from_id(id: u32) -> Option<Problem> {
        match id {
            1 => Some(Problem::CornerSingularity),
            2 => Some(Problem::InterfaceSingularity),
            3 => Some(Problem::LineSingularity),
            4 => Some(Problem::BilaplacianCorner),
            _ => None,
        }
    }

    pub fn id(&self) -> u32 {
        match self {
            Problem::CornerSingularity => 1,
            Problem::InterfaceSingularity => 2,
            Problem::LineSingularity => 3,
            Problem::BilaplacianCorner => 4,
        }
    }

    pub fn geometry(&self) -> TwoPatchGeometry {
        match self {
            Problem::CornerSingularity | Problem::BilaplacianCorner => geometry::lshape(),
            Problem::InterfaceSingularity | Problem::LineSingularity => geometry::curved(),
        }
    }

    /// Elements per direction per patch on the coarsest mesh.
    pub fn initial_elements(&self) -> usize {
        match self {
            Problem::CornerSingularity => 4,
            _ => 8,
        }
    }

    pub fn fourth_order(&self) -> bool {
        matches!(self, Problem::BilaplacianCorner)
    }

    pub fn default_theta(&self) -> f64 {
        match self {
            Problem::CornerSingularity => 0.90,
            _ => 0.75,
        }
    }

    /// Whether convergence reports normalize by the exact solution's seminorm.
    pub fn relative_error(&self) -> bool {
        matches!(self, Problem::InterfaceSingularity)
    }

    pub fn exact(&self, x: f64, y: f64) -> f64 {
        self.exact_jet(x, y).v
    }

    /// Exact solution with Cartesian derivatives through second order.
    pub fn exact_jet(&self, x: f64, y: f64) -> Jet2 {
        match self {
            Problem::CornerSingularity => {
                let theta = wrap_angle(y.atan2(x));
                let (s, c) = (4.0 / 3.0 * theta).sin_cos();
                let g = [s, 4.0 / 3.0 * c, -16.0 / 9.0 * s];
                polar_jet(x, y, 4.0 / 3.0, g)
            }
            Problem::InterfaceSingularity => {
                let w = -120.0 * x + x * x - 96.0 * y - 8.0 * x * y + 16.0 * y * y;
                let (wx, wy) = (2.0 * x - 120.0 - 8.0 * y, -8.0 * x + 32.0 * y - 96.0);
                let (v, vp, vpp) = root_power(w);
                let c = (std::f64::consts::PI * y / 20.0).cos();
                let cp = -(std::f64::consts::PI / 20.0) * (std::f64::consts::PI * y / 20.0).sin();
                let cpp = -(std::f64::consts::PI / 20.0).powi(2) * c;
                Jet2 {
                    v: v * c,
                    d1: vp * wx * c,
                    d2: vp * wy * c + v * cp,
                    d11: vpp * wx * wx * c + 2.0 * vp * c,
                    d12: vpp * wx * wy * c - 8.0 * vp * c + vp * wx * cp,
                    d22: vpp * wy * wy * c + 32.0 * vp * c + 2.0 * vp * wy * cp + v * cpp,
                }
            }
            Problem::LineSingularity => {
                let (v, vp, vpp) = root_power(y - 1.7);
                let (s, c) = (x / 4.0).sin_cos();
                Jet2 {
                    v: v * c,
                    d1: -v * s / 4.0,
                    d2: vp * c,
                    d11: -v * c / 16.0,
                    d12: -vp * s / 4.0,
                    d22: vpp * c,
                }
            }
            Problem::BilaplacianCorner => {
                let z = BILAPLACIAN_Z;
                let theta = wrap_angle(y.atan2(x));
                let (c1, c2) = bilaplacian_constants();
                let zm = z - 1.0;
                let zp = z + 1.0;
                let f1 = [
                    (zm * theta).cos() - (zp * theta).cos(),
                    -zm * (zm * theta).sin() + zp * (zp * theta).sin(),
                    -zm * zm * (zm * theta).cos() + zp * zp * (zp * theta).cos(),
                ];
                // F₂' = F₁, so the jet of G = C₁F₁ − C₂F₂ needs F₂ itself and
                // the first two derivatives of F₁ only.
                let f2 = (zm * theta).sin() / zm - (zp * theta).sin() / zp;
                let g = [
                    c1 * f1[0] - c2 * f2,
                    c1 * f1[1] - c2 * f1[0],
                    c1 * f1[2] - c2 * f1[1],
                ];
                polar_jet(x, y, zp, g)
            }
        }
    }

    /// Source term: −Δu for the Poisson problems, Δ²u = 0 for the
    /// bilaplacian corner solution.
    pub fn rhs(&self, x: f64, y: f64) -> f64 {
        match self {
            // Harmonic and biharmonic exact solutions.
            Problem::CornerSingularity | Problem::BilaplacianCorner => 0.0,
            _ => {
                let jet = self.exact_jet(x, y);
                -(jet.d11 + jet.d22)
            }
        }
    }
}

/// s ↦ |s|^{12/5} with two derivatives; the real odd-root reading of s^{12/5}.
fn root_power(s: f64) -> (f64, f64, f64) {
    let a = s.abs();
    let a04 = a.powf(0.4);
    let a14 = a04 * a;
    (a14 * a, 2.4 * s.signum() * a14, 3.36 * a04)
}

/// Angle in [0, 2π) measured from the positive x axis.
fn wrap_angle(theta: f64) -> f64 {
    if theta < 0.0 {
        theta + 2.0 * std::f64::consts::PI
    } else {
        theta
    }
}

fn bilaplacian_constants() -> (f64, f64) {
    let z = BILAPLACIAN_Z;
    let a = 3.0 * (z - 1.0) * std::f64::consts::PI / 2.0;
    let b = 3.0 * (z + 1.0) * std::f64::consts::PI / 2.0;
    ((a.sin() - b.sin()) / (z - 1.0), a.cos() - b.cos())
}

/// Cartesian jet of u = ρ^lam · G(θ) from G and its first two θ-derivatives.
fn polar_jet(x: f64, y: f64, lam: f64, g: [f64; 3]) -> Jet2 {
    let rho = x.hypot(y);
    if rho < 1e-14 {
        // The corner itself; u → 0 for lam > 0 and no quadrature point lands
        // exactly here.
        return Jet2::default();
    }
    let (s, c) = (y / rho, x / rho);
    let rl = rho.powf(lam);
    let ur = lam * rl / rho * g[0];
    let urr = lam * (lam - 1.0) * rl / (rho * rho) * g[0];
    let ut = rl * g[1];
    let urt = lam * rl / rho * g[1];
    let utt = rl * g[2];
    Jet2 {
        v: rl * g[0],
        d1: c * ur - s / rho * ut,
        d2: s * ur + c / rho * ut,
        d11: c * c * urr - 2.0 * s * c / rho * urt
            + s * s / (rho * rho) * utt
            + s * s / rho * ur
            + 2.0 * s * c / (rho * rho) * ut,
        d12: s * c * urr + (c * c - s * s) / rho * urt
            - s * c / (rho * rho) * utt
            - s * c / rho * ur
            - (c * c - s * s) / (rho * rho) * ut,
        d22: s * s * urr + 2.0 * s * c / rho * urt + c * c / (rho * rho) * utt
            + c * c / rho * ur
            - 2.0 * s * c / (rho * rho) * ut,
    }
}
