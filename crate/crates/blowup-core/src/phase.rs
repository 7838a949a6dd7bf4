//! Phase-space formulations of the profile equation.
//!
//! The profile equation
//!
//! ```text
//! (f^m)'' - alpha f + beta xi f' + xi^sigma f^p = 0
//! ```
//!
//! is autonomized through several changes of variables. Each carries its own
//! regime gate, its own independent "time" `eta`, and (where the change is
//! invertible) maps orbits back to profile arcs `(xi, f, f')`.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::Error;
use crate::params::{derive_exponents, Parameters, Regime};
use crate::Result;

/// Identifies one of the dynamical systems or one of the directional charts
/// used to linearize points at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SystemId {
    /// Supercritical quadratic system in
    /// `X = (m/alpha) xi^{-2} f^{m-1}`, `Y = (m/alpha) xi^{-1} f^{m-2} f'`,
    /// `Z = (m/alpha^2) xi^{sigma-2} f^{m+p-2}`.
    S1,
    /// Supercritical system keeping `xi` as the third coordinate:
    /// `x = f^{m+p-2}`, `y = f^{m-2} f'`, `z = xi` (`z >= 0` only).
    S2,
    /// Supercritical system `U = X^{(m+p-2)/(m-1)}`, same `Y`, `V = Z/U`.
    /// Shares the time variable of [`SystemId::S1`].
    S3,
    /// Supercritical system
    /// `Xb = xi^{-2} f^{m-1}`, `Yb = xi^{-1} f^{m-2} f'`, `Zb = xi^sigma f^{p-1}`
    /// (unbounded near an interface). Time runs `alpha` times faster than S1.
    S4,
    /// Subcritical system
    /// `X = sqrt(m) xi^{-(sigma+2)/2} f^{(m-p)/2}`,
    /// `Y = sqrt(m) xi^{-sigma/2} f^{(m-p-2)/2} f'`,
    /// `Z = (alpha/sqrt(m)) xi^{(2-sigma)/2} f^{(2-m-p)/2}`.
    S5,
    /// Two-dimensional quadratic flow on the center manifold of the origin of
    /// S1, in coordinates `(X, Z, unused)`.
    S1Center,
    /// Directional chart of S1 infinity in the `X` direction. Its origin is
    /// the point `(1,0,0,0)`; the root point `(m,1,0,0)/sqrt(1+m^2)` appears
    /// at `(1/m, 0, 0)`.
    Inf1,
    /// Directional chart of S1 infinity in the `Y` direction, stored with the
    /// orientation that makes `(0,1,0,0)` an unstable node. The antipodal
    /// point `(0,-1,0,0)` uses the negated field.
    Inf2,
    /// Directional chart of S5 infinity in the `X` direction (same layout as
    /// `Inf1`).
    Inf11,
    /// Directional chart of S5 infinity in the `Y` direction, stored with the
    /// orientation of the `Yb < 0` half-sphere (it makes `(0,-1,0,0)` a
    /// stable node); points with `Yb > 0` use the negated field.
    Inf21,
}

impl SystemId {
    pub fn name(&self) -> &'static str {
        match self {
            SystemId::S1 => "S1",
            SystemId::S2 => "S2",
            SystemId::S3 => "S3",
            SystemId::S4 => "S4",
            SystemId::S5 => "S5",
            SystemId::S1Center => "S1-center",
            SystemId::Inf1 => "Inf1",
            SystemId::Inf2 => "Inf2",
            SystemId::Inf11 => "Inf11",
            SystemId::Inf21 => "Inf21",
        }
    }

    /// Regime in which the system's change of variables is defined.
    pub fn regime(&self) -> Regime {
        match self {
            SystemId::S1
            | SystemId::S2
            | SystemId::S3
            | SystemId::S4
            | SystemId::S1Center
            | SystemId::Inf1
            | SystemId::Inf2 => Regime::Supercritical,
            SystemId::S5 | SystemId::Inf11 | SystemId::Inf21 => Regime::Subcritical,
        }
    }

    pub fn is_chart(&self) -> bool {
        matches!(
            self,
            SystemId::Inf1 | SystemId::Inf2 | SystemId::Inf11 | SystemId::Inf21
        )
    }

    fn gate(&self, params: &Parameters) -> Result<()> {
        match self.regime() {
            Regime::Supercritical => params.require_supercritical(),
            Regime::Subcritical => params.require_subcritical(),
            Regime::Critical => unreachable!("no system is defined critically"),
        }
    }
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A state of one of the three-dimensional systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub system: SystemId,
    pub coords: Vector3<f64>,
}

/// A point on a profile: position, value and slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub xi: f64,
    pub f: f64,
    pub df: f64,
}

/// Frequently used derived constants, computed once per call.
struct Consts {
    m: f64,
    p: f64,
    sigma: f64,
    alpha: f64,
    /// beta/alpha = (m-p)/(sigma+2); defined for every admissible sigma.
    ba: f64,
    beta: f64,
    /// m + p - 2.
    mp2: f64,
    g: f64,
}

fn consts(params: &Parameters) -> Result<Consts> {
    let e = derive_exponents(params)?;
    Ok(Consts {
        m: params.m,
        p: params.p,
        sigma: params.sigma,
        alpha: e.alpha,
        ba: e.beta / e.alpha,
        beta: e.beta,
        mp2: params.m + params.p - 2.0,
        g: params.g(),
    })
}

/// Evaluate the autonomous vector field of `system` at `v`.
///
/// Domain errors (negative coordinates fed to fractional powers, `z < 0` for
/// S2) surface as [`Error::DegenerateInput`]; regime violations as
/// [`Error::RegimeMismatch`] or [`Error::CriticalRegime`].
pub fn vector_field(system: SystemId, params: &Parameters, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    system.gate(params)?;
    let c = consts(params)?;
    let (x, y, z) = (v[0], v[1], v[2]);
    match system {
        SystemId::S1 => Ok(Vector3::new(
            x * ((c.m - 1.0) * y - 2.0 * x),
            -y * y - c.ba * y + x - x * y - z,
            z * (c.mp2 * y + (c.sigma - 2.0) * x),
        )),
        SystemId::S2 => {
            if x < 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "S2 requires x >= 0 (fractional power of f), got x = {x}"
                )));
            }
            if z < 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "S2 requires z = xi >= 0, got z = {z}"
                )));
            }
            let r2 = (c.m - 1.0) / c.mp2;
            let xr = x.powf(r2);
            Ok(Vector3::new(
                c.m * c.mp2 * x * y,
                -c.m * y * y - c.beta * y * z + c.alpha * xr - z.powf(c.sigma) * x,
                c.m * xr,
            ))
        }
        SystemId::S3 => {
            if x < 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "S3 requires U >= 0, got U = {x}"
                )));
            }
            let r2 = (c.m - 1.0) / c.mp2;
            let ur = x.powf(r2);
            let c1 = c.mp2 / (c.m - 1.0);
            let c3 = c.g / (c.m - 1.0);
            Ok(Vector3::new(
                c1 * x * ((c.m - 1.0) * y - 2.0 * ur),
                -y * y - c.ba * y + ur * (1.0 - y) - x * z,
                c3 * ur * z,
            ))
        }
        SystemId::S4 => Ok(Vector3::new(
            c.m * x * ((c.m - 1.0) * y - 2.0 * x),
            -c.m * y * y - c.beta * y + c.alpha * x - c.m * x * y - x * z,
            c.m * z * ((c.p - 1.0) * y + c.sigma * x),
        )),
        SystemId::S5 => Ok(Vector3::new(
            x * (0.5 * (c.m - c.p) * y - 0.5 * (c.sigma + 2.0) * x),
            -0.5 * (c.m + c.p) * y * y - 0.5 * c.sigma * x * y + x * z - c.ba * y * z - 1.0,
            z * (0.5 * (2.0 - c.m - c.p) * y + 0.5 * (2.0 - c.sigma) * x),
        )),
        SystemId::S1Center => {
            // (X, Z) flow on the center manifold of the S1 origin; third
            // coordinate is carried along as zero.
            Ok(Vector3::new(
                (x * (x - (c.m - 1.0) * c.alpha * y)) / c.beta,
                (y * (2.0 * x - c.mp2 * c.alpha * y)) / c.beta,
                0.0,
            ))
        }
        // Chart coordinates are (x, y, z) = (Y/X, Z/X, 1/X).
        SystemId::Inf1 => Ok(Vector3::new(
            x + z - c.m * x * x - c.ba * x * z - y * z,
            c.sigma * y - (1.0 - c.p) * x * y,
            2.0 * z - (c.m - 1.0) * x * z,
        )),
        SystemId::Inf2 => Ok(Vector3::new(
            c.m * x - x * x + c.ba * x * z - x * x * z + x * y * z,
            (c.m + c.p - 1.0) * y + (c.sigma - 1.0) * x * y + c.ba * y * z - x * y * z
                + y * y * z,
            z + c.ba * z * z + x * z - x * z * z + y * z * z,
        )),
        // Chart coordinates are (x, y, z) = (Y/X, Z/X, 1/X); the z^2 term
        // comes from the inhomogeneous -1 in the S5 middle equation.
        SystemId::Inf11 => Ok(Vector3::new(
            x + y - z * z - c.m * x * x - c.ba * x * y,
            2.0 * y - (c.m - 1.0) * x * y,
            0.5 * (c.sigma + 2.0) * z - 0.5 * (c.m - c.p) * x * z,
        )),
        SystemId::Inf21 => Ok(Vector3::new(
            -c.m * x - c.ba * x * y + x * x - x * z * z + x * x * y,
            -y - x * y - c.ba * y * y - y * z * z + x * y * y,
            -0.5 * (c.m + c.p) * z - c.ba * y * z - 0.5 * c.sigma * x * z - z * z * z
                + x * y * z,
        )),
    }
}

/// Analytic Jacobian of [`vector_field`]. Same gating.
pub fn jacobian(system: SystemId, params: &Parameters, v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    system.gate(params)?;
    let c = consts(params)?;
    let (x, y, z) = (v[0], v[1], v[2]);
    let j = match system {
        SystemId::S1 => Matrix3::new(
            (c.m - 1.0) * y - 4.0 * x,
            (c.m - 1.0) * x,
            0.0,
            1.0 - y,
            -2.0 * y - c.ba - x,
            -1.0,
            (c.sigma - 2.0) * z,
            c.mp2 * z,
            c.mp2 * y + (c.sigma - 2.0) * x,
        ),
        SystemId::S2 => {
            if x < 0.0 || z < 0.0 {
                return Err(Error::DegenerateInput(
                    "S2 Jacobian needs x >= 0 and z >= 0".into(),
                ));
            }
            let r2 = (c.m - 1.0) / c.mp2;
            // r2 > 1 in the supercritical range, so x^{r2-1} -> 0 as x -> 0.
            let xr1 = x.powf(r2 - 1.0);
            let zs1 = z.powf(c.sigma - 1.0);
            Matrix3::new(
                c.m * c.mp2 * y,
                c.m * c.mp2 * x,
                0.0,
                c.alpha * r2 * xr1 - z.powf(c.sigma),
                -2.0 * c.m * y - c.beta * z,
                -c.beta * y - c.sigma * zs1 * x,
                c.m * r2 * xr1,
                0.0,
                0.0,
            )
        }
        SystemId::S3 => {
            if x < 0.0 {
                return Err(Error::DegenerateInput("S3 Jacobian needs U >= 0".into()));
            }
            let r2 = (c.m - 1.0) / c.mp2;
            let ur = x.powf(r2);
            let ur1 = x.powf(r2 - 1.0);
            let c1 = c.mp2 / (c.m - 1.0);
            let c3 = c.g / (c.m - 1.0);
            Matrix3::new(
                c1 * (c.m - 1.0) * y - 2.0 * c1 * (1.0 + r2) * ur,
                c1 * (c.m - 1.0) * x,
                0.0,
                r2 * ur1 * (1.0 - y) - z,
                -2.0 * y - c.ba - ur,
                -x,
                c3 * r2 * ur1 * z,
                0.0,
                c3 * ur,
            )
        }
        SystemId::S4 => Matrix3::new(
            c.m * (c.m - 1.0) * y - 4.0 * c.m * x,
            c.m * (c.m - 1.0) * x,
            0.0,
            c.alpha - c.m * y - z,
            -2.0 * c.m * y - c.beta - c.m * x,
            -x,
            c.m * c.sigma * z,
            c.m * (c.p - 1.0) * z,
            c.m * ((c.p - 1.0) * y + c.sigma * x),
        ),
        SystemId::S5 => Matrix3::new(
            0.5 * (c.m - c.p) * y - (c.sigma + 2.0) * x,
            0.5 * (c.m - c.p) * x,
            0.0,
            -0.5 * c.sigma * y + z,
            -(c.m + c.p) * y - 0.5 * c.sigma * x - c.ba * z,
            x - c.ba * y,
            0.5 * (2.0 - c.sigma) * z,
            0.5 * (2.0 - c.m - c.p) * z,
            0.5 * (2.0 - c.m - c.p) * y + 0.5 * (2.0 - c.sigma) * x,
        ),
        SystemId::S1Center => Matrix3::new(
            (2.0 * x - (c.m - 1.0) * c.alpha * y) / c.beta,
            -(c.m - 1.0) * c.alpha * x / c.beta,
            0.0,
            2.0 * y / c.beta,
            (2.0 * x - 2.0 * c.mp2 * c.alpha * y) / c.beta,
            0.0,
            0.0,
            0.0,
            0.0,
        ),
        SystemId::Inf1 => Matrix3::new(
            1.0 - 2.0 * c.m * x - c.ba * z,
            -z,
            1.0 - c.ba * x - y,
            -(1.0 - c.p) * y,
            c.sigma - (1.0 - c.p) * x,
            0.0,
            -(c.m - 1.0) * z,
            0.0,
            2.0 - (c.m - 1.0) * x,
        ),
        SystemId::Inf2 => Matrix3::new(
            c.m - 2.0 * x + c.ba * z - 2.0 * x * z + y * z,
            x * z,
            c.ba * x - x * x + x * y,
            (c.sigma - 1.0) * y - y * z,
            c.m + c.p - 1.0 + (c.sigma - 1.0) * x + c.ba * z - x * z + 2.0 * y * z,
            c.ba * y - x * y + y * y,
            z - z * z,
            z * z,
            1.0 + 2.0 * c.ba * z + x - 2.0 * x * z + 2.0 * y * z,
        ),
        SystemId::Inf11 => Matrix3::new(
            1.0 - 2.0 * c.m * x - c.ba * y,
            1.0 - c.ba * x,
            -2.0 * z,
            -(c.m - 1.0) * y,
            2.0 - (c.m - 1.0) * x,
            0.0,
            -0.5 * (c.m - c.p) * z,
            0.0,
            0.5 * (c.sigma + 2.0) - 0.5 * (c.m - c.p) * x,
        ),
        SystemId::Inf21 => Matrix3::new(
            -c.m - c.ba * y + 2.0 * x - z * z + 2.0 * x * y,
            -c.ba * x + x * x,
            -2.0 * x * z,
            -y + y * y,
            -1.0 - x - 2.0 * c.ba * y - z * z + 2.0 * x * y,
            -2.0 * y * z,
            -0.5 * c.sigma * z + y * z,
            -c.ba * z + x * z,
            -0.5 * (c.m + c.p) - c.ba * y - 0.5 * c.sigma * x - 3.0 * z * z + x * y,
        ),
    };
    Ok(j)
}

/// Central finite-difference Jacobian, used for hygiene checks against the
/// analytic one. Step is relative per coordinate.
pub fn jacobian_fd(
    system: SystemId,
    params: &Parameters,
    v: &Vector3<f64>,
    h_rel: f64,
) -> Result<Matrix3<f64>> {
    let mut j = Matrix3::zeros();
    for col in 0..3 {
        let h = h_rel * v[col].abs().max(1.0);
        let mut vp = *v;
        let mut vm = *v;
        vp[col] += h;
        vm[col] -= h;
        let fp = vector_field(system, params, &vp)?;
        let fm = vector_field(system, params, &vm)?;
        for row in 0..3 {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Map a profile point into the phase space of `system`.
///
/// Preconditions: `xi > 0` and `f > 0` (S2 additionally accepts `xi = 0`).
/// Charts are not transform targets.
pub fn profile_to_phase(
    system: SystemId,
    params: &Parameters,
    pt: &ProfilePoint,
) -> Result<PhaseState> {
    system.gate(params)?;
    let c = consts(params)?;
    let (xi, f, df) = (pt.xi, pt.f, pt.df);
    if !(f > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "profile-to-phase requires f > 0, got f = {f}"
        )));
    }
    let need_positive_xi = !matches!(system, SystemId::S2);
    if need_positive_xi && !(xi > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "profile-to-phase requires xi > 0, got xi = {xi}"
        )));
    }
    if matches!(system, SystemId::S2) && xi < 0.0 {
        return Err(Error::DegenerateInput("S2 requires xi >= 0".into()));
    }
    let coords = match system {
        SystemId::S1 => Vector3::new(
            (c.m / c.alpha) * xi.powi(-2) * f.powf(c.m - 1.0),
            (c.m / c.alpha) * f.powf(c.m - 2.0) * df / xi,
            (c.m / (c.alpha * c.alpha)) * xi.powf(c.sigma - 2.0) * f.powf(c.mp2),
        ),
        SystemId::S2 => Vector3::new(f.powf(c.mp2), f.powf(c.m - 2.0) * df, xi),
        SystemId::S3 => {
            let x = (c.m / c.alpha) * xi.powi(-2) * f.powf(c.m - 1.0);
            let u = x.powf(c.mp2 / (c.m - 1.0));
            Vector3::new(
                u,
                (c.m / c.alpha) * f.powf(c.m - 2.0) * df / xi,
                (1.0 / c.alpha)
                    * (c.m / c.alpha).powf((1.0 - c.p) / (c.m - 1.0))
                    * xi.powf(c.g / (c.m - 1.0)),
            )
        }
        SystemId::S4 => Vector3::new(
            xi.powi(-2) * f.powf(c.m - 1.0),
            f.powf(c.m - 2.0) * df / xi,
            xi.powf(c.sigma) * f.powf(c.p - 1.0),
        ),
        SystemId::S5 => {
            let sm = c.m.sqrt();
            Vector3::new(
                sm * xi.powf(-0.5 * (c.sigma + 2.0)) * f.powf(0.5 * (c.m - c.p)),
                sm * xi.powf(-0.5 * c.sigma) * f.powf(0.5 * (c.m - c.p - 2.0)) * df,
                (c.alpha / sm) * xi.powf(0.5 * (2.0 - c.sigma)) * f.powf(0.5 * (2.0 - c.m - c.p)),
            )
        }
        SystemId::S1Center | SystemId::Inf1 | SystemId::Inf2 | SystemId::Inf11
        | SystemId::Inf21 => {
            return Err(Error::Unsupported(
                "charts and the center flow are not profile-transform targets",
            ))
        }
    };
    Ok(PhaseState { system, coords })
}

/// Invert the change of variables of `state.system`.
///
/// Errors with [`Error::NonInvertibleOrbit`] when the state lies in an
/// invariant plane where the inverse is singular (for example `X = 0` or
/// `Z = 0` in S1).
pub fn phase_to_profile(params: &Parameters, state: &PhaseState) -> Result<ProfilePoint> {
    state.system.gate(params)?;
    let c = consts(params)?;
    let v = state.coords;
    let (vx, vy, vz) = (v[0], v[1], v[2]);
    let plane_tol = 1e-300;
    match state.system {
        SystemId::S1 => {
            if vx <= plane_tol || vz <= plane_tol {
                return Err(Error::NonInvertibleOrbit);
            }
            let cexp = c.mp2 / (c.m - 1.0);
            // xi^{g/(m-1)} = (alpha^2/m) (m/(alpha X))^{(m+p-2)/(m-1)} Z.
            let xi = ((c.alpha * c.alpha / c.m)
                * (c.m / (c.alpha * vx)).powf(cexp)
                * vz)
                .powf((c.m - 1.0) / c.g);
            let f = ((c.alpha / c.m) * vx * xi * xi).powf(1.0 / (c.m - 1.0));
            let df = vy * f / (vx * xi);
            Ok(ProfilePoint { xi, f, df })
        }
        SystemId::S2 => {
            if vx <= plane_tol {
                return Err(Error::NonInvertibleOrbit);
            }
            let f = vx.powf(1.0 / c.mp2);
            let df = vy * f.powf(2.0 - c.m);
            Ok(ProfilePoint { xi: vz, f, df })
        }
        SystemId::S3 => {
            if vx <= plane_tol || vz <= plane_tol {
                return Err(Error::NonInvertibleOrbit);
            }
            let xi = (c.alpha * vz / (c.m / c.alpha).powf((1.0 - c.p) / (c.m - 1.0)))
                .powf((c.m - 1.0) / c.g);
            let x = vx.powf((c.m - 1.0) / c.mp2);
            let f = ((c.alpha / c.m) * x * xi * xi).powf(1.0 / (c.m - 1.0));
            let df = vy * f / (x * xi);
            Ok(ProfilePoint { xi, f, df })
        }
        SystemId::S4 => {
            if vx <= plane_tol || vz <= plane_tol {
                return Err(Error::NonInvertibleOrbit);
            }
            let xi = (vz.powf(c.m - 1.0) * vx.powf(1.0 - c.p)).powf(1.0 / c.g);
            let f = (vx * xi * xi).powf(1.0 / (c.m - 1.0));
            let df = vy * xi * f.powf(2.0 - c.m);
            Ok(ProfilePoint { xi, f, df })
        }
        SystemId::S5 => {
            if vx <= plane_tol || vz <= plane_tol {
                return Err(Error::NonInvertibleOrbit);
            }
            let a1 = vx * vz / c.alpha; // xi^{-sigma} f^{1-p}
            let a2 = c.alpha * vx / (c.m * vz); // xi^{-2} f^{m-1}
            let xi = (a2.powf(1.0 - c.p) / a1.powf(c.m - 1.0)).powf(1.0 / c.g);
            let f = (a2 * xi * xi).powf(1.0 / (c.m - 1.0));
            let df = vy * xi.powf(0.5 * c.sigma) * f.powf(0.5 * (2.0 + c.p - c.m)) / c.m.sqrt();
            Ok(ProfilePoint { xi, f, df })
        }
        SystemId::S1Center | SystemId::Inf1 | SystemId::Inf2 | SystemId::Inf11
        | SystemId::Inf21 => Err(Error::Unsupported(
            "charts and the center flow are not profile-transform targets",
        )),
    }
}

/// Evaluate a directional-chart field of the compactified dynamics.
/// Thin validating wrapper over [`vector_field`]: only chart tags pass.
pub fn poincare_infinity_field(
    chart: SystemId,
    params: &Parameters,
    v: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    if !chart.is_chart() {
        return Err(Error::Unsupported(
            "poincare_infinity_field takes a chart tag (Inf1/Inf2/Inf11/Inf21)",
        ));
    }
    vector_field(chart, params, v)
}

/// Tangency residual of a direction `(Xb, Yb, Zb, 0)` on the sphere at
/// infinity: the three homogeneous combinations that vanish exactly at the
/// critical points at infinity. Defined for S1 and S5.
pub fn infinity_tangency_residual(
    system: SystemId,
    params: &Parameters,
    dir: &[f64; 4],
) -> Result<f64> {
    let (x, y, z) = (dir[0], dir[1], dir[2]);
    let c = consts(params)?;
    match system {
        SystemId::S1 => {
            params.require_supercritical()?;
            let e1 = x * y * (x - c.m * y);
            let e2 = x * z * ((c.p - 1.0) * y + c.sigma * x);
            let e3 = z * y * ((c.m + c.p - 1.0) * y + (c.sigma - 1.0) * x);
            Ok(e1.abs() + e2.abs() + e3.abs())
        }
        SystemId::S5 => {
            params.require_subcritical()?;
            let e1 = x * (-c.m * y * y + x * y + x * z - c.ba * y * z);
            let e2 = x * z * (2.0 * x - (c.m - 1.0) * y);
            let e3 = z * (y * y + x * y - x * z + c.ba * y * z);
            Ok(e1.abs() + e2.abs() + e3.abs())
        }
        _ => Err(Error::Unsupported(
            "infinity tangency residual is defined for S1 and S5",
        )),
    }
}

/// Map an S1 state to the S3 state it corresponds to (shared time variable).
pub fn s1_to_s3(params: &Parameters, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    params.require_supercritical()?;
    if v[0] < 0.0 {
        return Err(Error::DegenerateInput("S1 -> S3 requires X >= 0".into()));
    }
    let c = (params.m + params.p - 2.0) / (params.m - 1.0);
    let u = v[0].powf(c);
    let vv = if u > 0.0 { v[2] / u } else { 0.0 };
    Ok(Vector3::new(u, v[1], vv))
}

/// Map an S1 state to the S4 state it corresponds to. S4's time variable
/// runs `alpha` times faster; fields relate by that factor and the Jacobian
/// of this map.
pub fn s1_to_s4(params: &Parameters, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    if v[0] <= 0.0 {
        return Err(Error::DegenerateInput("S1 -> S4 requires X > 0".into()));
    }
    let s = e.alpha / params.m;
    Ok(Vector3::new(s * v[0], s * v[1], e.alpha * v[2] / v[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sup_params() -> Parameters {
        Parameters::new(3.0, 0.5, 1.0).unwrap()
    }

    fn sub_params() -> Parameters {
        Parameters::new(1.3, 0.5, 4.0).unwrap()
    }

    #[test]
    fn s1_field_matches_hand_value() {
        // At (X,Y,Z) = (1,2,3) with (m,p,sigma) = (3,1/2,1):
        // Xdot = 1*(2*2-2) = 2,
        // Ydot = -4 - (5/6)*2 + 1 - 2 - 3 = -29/3,
        // Zdot = 3*(1.5*2 - 1) = 6.
        let f = vector_field(SystemId::S1, &sup_params(), &Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_relative_eq!(f[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(f[1], -29.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(f[2], 6.0, max_relative = 1e-14);
    }

    #[test]
    fn s4_field_is_the_pushforward_of_s1() {
        // T(X,Y,Z) = ((alpha/m)X, (alpha/m)Y, alpha Z/X); the S4 field equals
        // alpha * J_T * (S1 field) because S4 time runs alpha times faster.
        let params = sup_params();
        let alpha = 3.0;
        for &(x, y, z) in &[(1.0, 2.0, 3.0), (0.4, -0.7, 0.2), (2.0, 0.1, 5.0)] {
            let v = Vector3::new(x, y, z);
            let f1 = vector_field(SystemId::S1, &params, &v).unwrap();
            let w = s1_to_s4(&params, &v).unwrap();
            let f4 = vector_field(SystemId::S4, &params, &w).unwrap();
            let s = alpha / params.m;
            let push = Vector3::new(
                s * f1[0],
                s * f1[1],
                -alpha * z / (x * x) * f1[0] + alpha / x * f1[2],
            ) * alpha;
            for i in 0..3 {
                assert_relative_eq!(f4[i], push[i], max_relative = 1e-11, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn s3_field_is_the_pushforward_of_s1() {
        // Same time variable: S3 field = J_T * (S1 field) with
        // T(X,Y,Z) = (X^c, Y, Z X^{-c}), c = (m+p-2)/(m-1).
        let params = sup_params();
        let c = 0.75;
        for &(x, y, z) in &[(1.0, 2.0, 3.0), (0.4, -0.7, 0.2), (2.0, 0.1, 5.0)] {
            let v = Vector3::new(x, y, z);
            let f1 = vector_field(SystemId::S1, &params, &v).unwrap();
            let w = s1_to_s3(&params, &v).unwrap();
            let f3 = vector_field(SystemId::S3, &params, &w).unwrap();
            let push = Vector3::new(
                c * x.powf(c - 1.0) * f1[0],
                f1[1],
                -c * z * x.powf(-c - 1.0) * f1[0] + x.powf(-c) * f1[2],
            );
            for i in 0..3 {
                assert_relative_eq!(f3[i], push[i], max_relative = 1e-11, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fields_vanish_at_known_critical_points() {
        let params = sup_params();
        // P1 = (0, -beta/alpha, 0) and P2 = ((m-1)/(2(m+1)alpha), 1/((m+1)alpha), 0).
        for pt in [
            Vector3::new(0.0, -5.0 / 6.0, 0.0),
            Vector3::new(1.0 / 12.0, 1.0 / 12.0, 0.0),
            Vector3::zeros(),
        ] {
            let f = vector_field(SystemId::S1, &params, &pt).unwrap();
            assert!(f.norm() < 1e-15, "field at {pt:?} is {f:?}");
        }
    }

    #[test]
    fn profile_round_trips_through_every_system() {
        let cases = [
            (sup_params(), vec![SystemId::S1, SystemId::S2, SystemId::S3, SystemId::S4]),
            (sub_params(), vec![SystemId::S5]),
        ];
        for (params, systems) in cases {
            for system in systems {
                for &(xi, f, df) in &[
                    (0.7, 1.3, -0.4),
                    (2.0, 0.05, 0.3),
                    (0.2, 2.5, 0.0),
                    (1.0, 1.0, -1.0),
                ] {
                    let pt = ProfilePoint { xi, f, df };
                    let st = profile_to_phase(system, &params, &pt).unwrap();
                    let back = phase_to_profile(&params, &st).unwrap();
                    assert_relative_eq!(back.xi, xi, max_relative = 1e-12);
                    assert_relative_eq!(back.f, f, max_relative = 1e-12);
                    assert_relative_eq!(back.df, df, max_relative = 1e-11, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn s1_s3_transforms_agree_pointwise() {
        let params = sup_params();
        let pt = ProfilePoint { xi: 0.9, f: 1.7, df: -0.2 };
        let s1 = profile_to_phase(SystemId::S1, &params, &pt).unwrap();
        let s3 = profile_to_phase(SystemId::S3, &params, &pt).unwrap();
        let mapped = s1_to_s3(&params, &s1.coords).unwrap();
        for i in 0..3 {
            assert_relative_eq!(mapped[i], s3.coords[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let cases: Vec<(Parameters, SystemId, Vector3<f64>)> = vec![
            (sup_params(), SystemId::S1, Vector3::new(0.3, -0.4, 0.8)),
            (sup_params(), SystemId::S2, Vector3::new(0.5, -0.2, 1.1)),
            (sup_params(), SystemId::S3, Vector3::new(0.6, 0.4, 0.9)),
            (sup_params(), SystemId::S4, Vector3::new(0.2, 0.7, 1.4)),
            (sup_params(), SystemId::S1Center, Vector3::new(0.4, 0.3, 0.0)),
            (sup_params(), SystemId::Inf1, Vector3::new(0.3, 0.2, 0.5)),
            (sup_params(), SystemId::Inf2, Vector3::new(0.4, 0.3, 0.6)),
            (sub_params(), SystemId::S5, Vector3::new(0.5, -0.3, 0.7)),
            (sub_params(), SystemId::Inf11, Vector3::new(0.3, 0.2, 0.4)),
            (sub_params(), SystemId::Inf21, Vector3::new(0.2, 0.5, 0.3)),
        ];
        for (params, system, state) in cases {
            let ja = jacobian(system, &params, &state).unwrap();
            let jf = jacobian_fd(system, &params, &state, 1e-6).unwrap();
            for r in 0..3 {
                for c in 0..3 {
                    assert_relative_eq!(
                        ja[(r, c)],
                        jf[(r, c)],
                        max_relative = 1e-6,
                        epsilon = 1e-8
                    );
                }
            }
        }
    }

    #[test]
    fn regime_gates_are_enforced() {
        let sup = sup_params();
        let sub = sub_params();
        let v = Vector3::new(0.1, 0.1, 0.1);
        assert!(matches!(
            vector_field(SystemId::S5, &sup, &v),
            Err(Error::RegimeMismatch { .. })
        ));
        assert!(matches!(
            vector_field(SystemId::S1, &sub, &v),
            Err(Error::RegimeMismatch { .. })
        ));
        let crit = Parameters::new(1.5, 0.5, 3.0).unwrap();
        assert!(matches!(
            vector_field(SystemId::S1, &crit, &v),
            Err(Error::CriticalRegime)
        ));
    }

    #[test]
    fn s2_rejects_negative_xi_states() {
        let params = sup_params();
        assert!(matches!(
            vector_field(SystemId::S2, &params, &Vector3::new(0.5, 0.0, -0.1)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn invariant_plane_states_do_not_invert() {
        let params = sup_params();
        for coords in [Vector3::new(0.0, 0.3, 0.2), Vector3::new(0.4, 0.3, 0.0)] {
            let st = PhaseState { system: SystemId::S1, coords };
            assert!(matches!(
                phase_to_profile(&params, &st),
                Err(Error::NonInvertibleOrbit)
            ));
        }
    }

    #[test]
    fn chart_origins_have_documented_eigen_structure() {
        // Inf1 origin: diagonal entries (1, sigma, 2) with zero coupling into
        // the off-diagonal rows that matter.
        let params = sup_params();
        let j = jacobian(SystemId::Inf1, &params, &Vector3::zeros()).unwrap();
        assert_relative_eq!(j[(0, 0)], 1.0);
        assert_relative_eq!(j[(1, 1)], params.sigma);
        assert_relative_eq!(j[(2, 2)], 2.0);
        // Inf2 origin: (m, m+p-1, 1).
        let j2 = jacobian(SystemId::Inf2, &params, &Vector3::zeros()).unwrap();
        assert_relative_eq!(j2[(0, 0)], 3.0);
        assert_relative_eq!(j2[(1, 1)], 2.5);
        assert_relative_eq!(j2[(2, 2)], 1.0);
    }

    #[test]
    fn root_point_in_inf1_chart_is_critical_with_known_matrix() {
        // The root-origin point appears at (1/m, 0, 0) in Inf1. Eigenvalues
        // of the Jacobian there: -1, (m sigma + p - 1)/m, (m+1)/m.
        let params = sup_params();
        let at = Vector3::new(1.0 / 3.0, 0.0, 0.0);
        let f = vector_field(SystemId::Inf1, &params, &at).unwrap();
        assert!(f.norm() < 1e-15);
        let j = jacobian(SystemId::Inf1, &params, &at).unwrap();
        assert_relative_eq!(j[(0, 0)], -1.0, max_relative = 1e-14);
        assert_relative_eq!(j[(1, 1)], (3.0 * 1.0 + 0.5 - 1.0) / 3.0, max_relative = 1e-14);
        assert_relative_eq!(j[(2, 2)], 4.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn s5_tangency_residual_vanishes_at_its_seven_points() {
        let params = sub_params();
        let e = derive_exponents(&params).unwrap();
        let (a, b) = (e.alpha, e.beta);
        let m = params.m;
        let l = (1.0 + (m + 1.0) * (m + 1.0) * a * a + 0.25 * (m - 1.0) * (m - 1.0)).sqrt();
        let n = (a * a + b * b).sqrt();
        let q5n = (1.0 + m * m).sqrt();
        let dirs: Vec<[f64; 4]> = vec![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [m / q5n, 1.0 / q5n, 0.0, 0.0],
            [0.0, -b / n, a / n, 0.0],
            [0.5 * (m - 1.0) / l, 1.0 / l, a * (m + 1.0) / l, 0.0],
        ];
        for d in dirs {
            let r = infinity_tangency_residual(SystemId::S5, &params, &d).unwrap();
            assert!(r < 1e-12, "residual {r} at {d:?}");
        }
    }

    #[test]
    fn s1_tangency_residual_vanishes_at_its_five_points() {
        let params = sup_params();
        let m = params.m;
        let q5n = (1.0 + m * m).sqrt();
        let dirs: Vec<[f64; 4]> = vec![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [m / q5n, 1.0 / q5n, 0.0, 0.0],
        ];
        for d in dirs {
            let r = infinity_tangency_residual(SystemId::S1, &params, &d).unwrap();
            assert!(r < 1e-12, "residual {r} at {d:?}");
        }
    }
}
