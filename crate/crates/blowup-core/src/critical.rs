//! Critical points of the phase systems: enumeration, linearization and the
//! local profile behaviors they carry.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::eigen;
use crate::error::Error;
use crate::params::{derive_exponents, Parameters};
use crate::phase::{
    infinity_tangency_residual, jacobian, vector_field, ProfilePoint, SystemId,
};
use crate::Result;

/// Residual tolerance for accepting a state as critical.
pub const CRITICAL_RESIDUAL_TOL: f64 = 1e-10;

/// Tolerance on eigenvalue real parts when counting manifold dimensions,
/// relative to the eigenvalue scale.
pub const DIMS_REL_TOL: f64 = 1e-9;

/// Canonical names. Finite points and points at infinity of the
/// supercritical system keep their short names; infinity points of the
/// subcritical system are named after the supercritical object they mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name")]
pub enum PointLabel {
    P0,
    P1,
    P2,
    /// Point on the S2 critical line, parameterized by the interface
    /// location.
    PXi0 { xi0: f64 },
    /// Point on the S3 critical line, parameterized by the limit of `V`.
    PV0 { v0: f64 },
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    /// Subcritical infinity point gathering the constant-origin and
    /// origin-tail data in one unstable node.
    SubQ1P0,
    SubQ2,
    SubQ3,
    SubQ4,
    SubQ5,
    SubP1,
    SubP2,
}

impl std::fmt::Display for PointLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointLabel::P0 => write!(f, "P0"),
            PointLabel::P1 => write!(f, "P1"),
            PointLabel::P2 => write!(f, "P2"),
            PointLabel::PXi0 { xi0 } => write!(f, "P(xi0={xi0})"),
            PointLabel::PV0 { v0 } => write!(f, "P(v0={v0})"),
            PointLabel::Q1 => write!(f, "Q1"),
            PointLabel::Q2 => write!(f, "Q2"),
            PointLabel::Q3 => write!(f, "Q3"),
            PointLabel::Q4 => write!(f, "Q4"),
            PointLabel::Q5 => write!(f, "Q5"),
            PointLabel::SubQ1P0 => write!(f, "Q1P0'"),
            PointLabel::SubQ2 => write!(f, "Q2'"),
            PointLabel::SubQ3 => write!(f, "Q3'"),
            PointLabel::SubQ4 => write!(f, "Q4'"),
            PointLabel::SubQ5 => write!(f, "Q5'"),
            PointLabel::SubP1 => write!(f, "P1'"),
            PointLabel::SubP2 => write!(f, "P2'"),
        }
    }
}

/// Finite coordinates, or a unit direction on the sphere at infinity
/// (fourth component is the homogenizing coordinate, zero at infinity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Location {
    Finite([f64; 3]),
    Infinity([f64; 4]),
}

/// Directional chart in which an infinity point is linearized.
/// `orientation = -1` means the stored chart field must be negated to give
/// the true flow direction at this point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartRef {
    pub chart: SystemId,
    pub coords: [f64; 3],
    pub orientation: f64,
}

/// Complex number serialized as an explicit re/im pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexPair {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

/// Linear data at a critical point. The matrix is the true-flow Jacobian
/// (chart orientation already applied for infinity points).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Linearization {
    pub matrix: [[f64; 3]; 3],
    pub eigenvalues: [ComplexPair; 3],
    pub eigenvectors: [[ComplexPair; 3]; 3],
    /// (stable, unstable, center) dimensions.
    pub dims: (usize, usize, usize),
}

/// What kind of profile data the point carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Interpretation {
    /// Orbits entering through `{Y < 0}` carry a vertical-contact interface;
    /// the center-manifold sector carries the origin tail
    /// `f ~ K xi^{(sigma+2)/(m-p)}`.
    TypeIIInterfaceAndOriginTail,
    /// Entry point of profiles with a standard (pressure-slope) interface.
    TypeIInterface,
    /// Origin behavior `f ~ c xi^{2/(m-1)}` of profiles vanishing at the
    /// axis with vanishing flux.
    GoodOrigin,
    /// Profiles with `f(0) = a > 0` and arbitrary slope.
    PositiveOriginAnySlope,
    /// Profiles changing sign at a positive location.
    SignChange,
    /// No admissible profile passes through the point.
    NoProfile,
    /// Profiles vanishing at the axis like `xi^{1/m}` with nonzero flux
    /// (sign change at the origin itself).
    RootOrigin,
    /// Gathers the constant-origin and origin-tail behaviors (subcritical
    /// merge of two supercritical points).
    OriginUnion,
}

/// A critical point with its classification data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPointReport {
    pub system: SystemId,
    pub label: PointLabel,
    pub location: Location,
    pub chart: Option<ChartRef>,
    pub linearization: Option<Linearization>,
    pub interpretation: Interpretation,
    pub note: String,
}

// ---------------------------------------------------------------------------
// Closed-form locations and eigendata used both by the enumeration and as
// oracles in tests.

/// `P1 = (0, -beta/alpha, 0)` in S1.
pub fn p1_location(params: &Parameters) -> Result<Vector3<f64>> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    Ok(Vector3::new(0.0, -e.beta / e.alpha, 0.0))
}

/// `P2 = ((m-1)/(2(m+1)alpha), 1/((m+1)alpha), 0)` in S1.
pub fn p2_location(params: &Parameters) -> Result<Vector3<f64>> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let m = params.m;
    Ok(Vector3::new(
        (m - 1.0) / (2.0 * (m + 1.0) * e.alpha),
        1.0 / ((m + 1.0) * e.alpha),
        0.0,
    ))
}

/// Eigenvalues of the linearization at P1:
/// `(-beta(m-1)/alpha, beta/alpha, -(m+p-2)beta/alpha)`.
pub fn p1_eigenvalues_closed(params: &Parameters) -> Result<[f64; 3]> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let ba = e.beta / e.alpha;
    Ok([
        -ba * (params.m - 1.0),
        ba,
        -(params.m + params.p - 2.0) * ba,
    ])
}

/// The transverse eigenvalue at P2: `g / (2(m+1) alpha)`.
pub fn p2_lambda3(params: &Parameters) -> Result<f64> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    Ok(params.g() / (2.0 * (params.m + 1.0) * e.alpha))
}

/// Sum and product of the two in-plane eigenvalues at P2:
/// trace `-(2 beta (m+1) + 3m + 1)/(2(m+1) alpha)`, product
/// `(m-1)/(2(m+1) alpha^2)`.
pub fn p2_inplane_trace_product(params: &Parameters) -> Result<(f64, f64)> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let m = params.m;
    let tr = -(2.0 * e.beta * (m + 1.0) + 3.0 * m + 1.0) / (2.0 * (m + 1.0) * e.alpha);
    let pr = (m - 1.0) / (2.0 * (m + 1.0) * e.alpha * e.alpha);
    Ok((tr, pr))
}

/// Eigenvector of the transverse eigenvalue at P2, normalized so its
/// Z-component is +1. Both in-plane components are negative, so the outgoing
/// orbit in `{Z > 0}` starts with `X < X(P2)`, `Y < Y(P2)`.
pub fn p2_exit_direction(params: &Parameters) -> Result<Vector3<f64>> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let (m, p, s) = (params.m, params.p, params.sigma);
    let d = -(m - 1.0) * (m - 1.0) * s * s
        - (m - 1.0) * (3.0 * m + 4.0 * p - 3.0) * s
        - (4.0 * m * m + 4.0 * m * p + 4.0 * p * p - 4.0 * m - 8.0 * p);
    debug_assert!(d < 0.0, "denominator must be negative in range, got {d}");
    let v = Vector3::new(
        2.0 * (m - 1.0) * (m - 1.0) * (m + 1.0) * e.alpha / d,
        2.0 * (m + 1.0) * e.alpha * ((m - 1.0) * (s + 2.0) + 2.0 * (p - 1.0)) / d,
        1.0,
    );
    Ok(v)
}

// ---------------------------------------------------------------------------
// Enumeration.

fn report(
    system: SystemId,
    label: PointLabel,
    location: Location,
    chart: Option<ChartRef>,
    interpretation: Interpretation,
    note: &str,
) -> CriticalPointReport {
    CriticalPointReport {
        system,
        label,
        location,
        chart,
        linearization: None,
        interpretation,
        note: note.to_string(),
    }
}

/// Finite critical points of a system.
///
/// S1 has the three isolated points P0, P1, P2. S2 and S3 carry critical
/// half-lines: they are reported at the caller-supplied `line_samples`
/// (interface locations `xi0` for S2, limits `v0` for S3). S4 reports the
/// images of P0, P1, P2 under its variable change; its additional degenerate
/// axis `{Xb = Yb = 0}` parameterizes far-field tails rather than blow-up
/// profiles and is not enumerated. S5 has no finite critical points.
pub fn enumerate_finite(
    system: SystemId,
    params: &Parameters,
    line_samples: &[f64],
) -> Result<Vec<CriticalPointReport>> {
    match system {
        SystemId::S1 => {
            params.require_supercritical()?;
            let p1 = p1_location(params)?;
            let p2 = p2_location(params)?;
            Ok(vec![
                report(
                    system,
                    PointLabel::P0,
                    Location::Finite([0.0; 3]),
                    None,
                    Interpretation::TypeIIInterfaceAndOriginTail,
                    "nilpotent origin: all linear information sits in one row; behavior decided on the center manifold",
                ),
                report(
                    system,
                    PointLabel::P1,
                    Location::Finite([p1[0], p1[1], p1[2]]),
                    None,
                    Interpretation::TypeIInterface,
                    "saddle with a two-dimensional stable manifold entering through Z > 0",
                ),
                report(
                    system,
                    PointLabel::P2,
                    Location::Finite([p2[0], p2[1], p2[2]]),
                    None,
                    Interpretation::GoodOrigin,
                    "in-plane attractor with a single outgoing direction transverse to {Z = 0}",
                ),
            ])
        }
        SystemId::S2 => {
            params.require_supercritical()?;
            let e = derive_exponents(params)?;
            let mut out = Vec::new();
            for &xi0 in line_samples {
                if !(xi0 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "S2 line sample must satisfy xi0 > 0, got {xi0}"
                    )));
                }
                out.push(report(
                    system,
                    PointLabel::PXi0 { xi0 },
                    Location::Finite([0.0, -e.beta * xi0 / params.m, xi0]),
                    None,
                    Interpretation::TypeIInterface,
                    "critical half-line: one point per interface location",
                ));
            }
            Ok(out)
        }
        SystemId::S3 => {
            params.require_supercritical()?;
            let e = derive_exponents(params)?;
            let mut out = Vec::new();
            for &v0 in line_samples {
                if !(v0 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "S3 line sample must satisfy v0 > 0, got {v0}"
                    )));
                }
                out.push(report(
                    system,
                    PointLabel::PV0 { v0 },
                    Location::Finite([0.0, -e.beta / e.alpha, v0]),
                    None,
                    Interpretation::TypeIInterface,
                    "critical half-line shared with the S2 line through the v0 <-> xi0 bijection",
                ));
            }
            Ok(out)
        }
        SystemId::S4 => {
            params.require_supercritical()?;
            let e = derive_exponents(params)?;
            let m = params.m;
            let s = e.alpha / m;
            let p1 = p1_location(params)?;
            let p2 = p2_location(params)?;
            Ok(vec![
                report(
                    system,
                    PointLabel::P0,
                    Location::Finite([0.0; 3]),
                    None,
                    Interpretation::TypeIIInterfaceAndOriginTail,
                    "image of the S1 origin",
                ),
                report(
                    system,
                    PointLabel::P1,
                    Location::Finite([0.0, s * p1[1], 0.0]),
                    None,
                    Interpretation::TypeIInterface,
                    "image of P1",
                ),
                report(
                    system,
                    PointLabel::P2,
                    Location::Finite([s * p2[0], s * p2[1], 0.0]),
                    None,
                    Interpretation::GoodOrigin,
                    "image of P2",
                ),
            ])
        }
        SystemId::S5 => {
            params.require_subcritical()?;
            // The middle equation contains the constant -1: no finite zeros.
            Ok(Vec::new())
        }
        _ => Err(Error::Unsupported(
            "enumerate_finite takes a full system tag (S1..S5)",
        )),
    }
}

/// Critical points at infinity.
///
/// S1 has exactly five; S5 exactly seven. Each is reported with the
/// directional chart used to linearize it (absent for the two points whose
/// analysis is purely asymptotic).
pub fn enumerate_infinity(
    system: SystemId,
    params: &Parameters,
) -> Result<Vec<CriticalPointReport>> {
    let m = params.m;
    match system {
        SystemId::S1 => {
            params.require_supercritical()?;
            let q5n = (1.0 + m * m).sqrt();
            Ok(vec![
                report(
                    system,
                    PointLabel::Q1,
                    Location::Infinity([1.0, 0.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf1,
                        coords: [0.0; 3],
                        orientation: 1.0,
                    }),
                    Interpretation::PositiveOriginAnySlope,
                    "unstable node: profiles with f(0) > 0 and arbitrary slope",
                ),
                report(
                    system,
                    PointLabel::Q2,
                    Location::Infinity([0.0, 1.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf2,
                        coords: [0.0; 3],
                        orientation: 1.0,
                    }),
                    Interpretation::SignChange,
                    "unstable node: orbits leaving it vanish at a positive location with positive flux",
                ),
                report(
                    system,
                    PointLabel::Q3,
                    Location::Infinity([0.0, -1.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf2,
                        coords: [0.0; 3],
                        orientation: -1.0,
                    }),
                    Interpretation::SignChange,
                    "stable node: orbits entering it vanish at a positive location with negative flux",
                ),
                report(
                    system,
                    PointLabel::Q4,
                    Location::Infinity([0.0, 0.0, 1.0, 0.0]),
                    None,
                    Interpretation::NoProfile,
                    "no polynomial chart: ruled out by an asymptotic argument, so no matrix is reported",
                ),
                report(
                    system,
                    PointLabel::Q5,
                    Location::Infinity([m / q5n, 1.0 / q5n, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf1,
                        coords: [1.0 / m, 0.0, 0.0],
                        orientation: 1.0,
                    }),
                    Interpretation::RootOrigin,
                    "saddle: profiles behaving like xi^{1/m} at the axis, changing sign there",
                ),
            ])
        }
        SystemId::S5 => {
            params.require_subcritical()?;
            let e = derive_exponents(params)?;
            let (a, b) = (e.alpha, e.beta);
            let q5n = (1.0 + m * m).sqrt();
            let n = (a * a + b * b).sqrt();
            let l = (1.0 + (m + 1.0) * (m + 1.0) * a * a
                + 0.25 * (m - 1.0) * (m - 1.0))
                .sqrt();
            Ok(vec![
                report(
                    system,
                    PointLabel::SubQ1P0,
                    Location::Infinity([1.0, 0.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf11,
                        coords: [0.0; 3],
                        orientation: 1.0,
                    }),
                    Interpretation::OriginUnion,
                    "unstable node merging the constant-origin and origin-tail data",
                ),
                report(
                    system,
                    PointLabel::SubQ2,
                    Location::Infinity([0.0, 1.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf21,
                        coords: [0.0; 3],
                        orientation: -1.0,
                    }),
                    Interpretation::SignChange,
                    "unstable node: sign change with positive flux",
                ),
                report(
                    system,
                    PointLabel::SubQ3,
                    Location::Infinity([0.0, -1.0, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf21,
                        coords: [0.0; 3],
                        orientation: 1.0,
                    }),
                    Interpretation::SignChange,
                    "stable node: sign change with negative flux",
                ),
                report(
                    system,
                    PointLabel::SubQ4,
                    Location::Infinity([0.0, 0.0, 1.0, 0.0]),
                    None,
                    Interpretation::NoProfile,
                    "no polynomial chart: ruled out asymptotically as in the supercritical case",
                ),
                report(
                    system,
                    PointLabel::SubQ5,
                    Location::Infinity([m / q5n, 1.0 / q5n, 0.0, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf11,
                        coords: [1.0 / m, 0.0, 0.0],
                        orientation: 1.0,
                    }),
                    Interpretation::RootOrigin,
                    "saddle: xi^{1/m} behavior at the axis",
                ),
                report(
                    system,
                    PointLabel::SubP1,
                    Location::Infinity([0.0, -b / n, a / n, 0.0]),
                    Some(ChartRef {
                        chart: SystemId::Inf21,
                        coords: [0.0, -a / b, 0.0],
                        orientation: 1.0,
                    }),
                    Interpretation::NoProfile,
                    "would-be interface point: its unstable manifold lies in an invariant plane that carries no profiles",
                ),
                report(
                    system,
                    PointLabel::SubP2,
                    Location::Infinity([
                        0.5 * (m - 1.0) / l,
                        1.0 / l,
                        a * (m + 1.0) / l,
                        0.0,
                    ]),
                    Some(ChartRef {
                        chart: SystemId::Inf21,
                        coords: [0.5 * (m - 1.0), a * (m + 1.0), 0.0],
                        orientation: -1.0,
                    }),
                    Interpretation::NoProfile,
                    "nonzero third direction: incompatible with interface or tail limits",
                ),
            ])
        }
        _ => Err(Error::Unsupported(
            "infinity enumeration is available for S1 and S5",
        )),
    }
}

/// Fill in the linearization of an enumerated critical point.
///
/// Finite points use the system Jacobian; infinity points use their
/// directional chart with the stored orientation. Points without a chart
/// (Q4 and its subcritical mirror) refuse with [`Error::NoChart`].
/// The state is re-validated: a residual above [`CRITICAL_RESIDUAL_TOL`]
/// produces [`Error::NotACriticalPoint`].
pub fn linearize(point: &CriticalPointReport, params: &Parameters) -> Result<CriticalPointReport> {
    let matrix: Matrix3<f64> = match (&point.location, &point.chart) {
        (Location::Finite(loc), _) => {
            let v = Vector3::new(loc[0], loc[1], loc[2]);
            let f = vector_field(point.system, params, &v)?;
            let scale = 1.0 + v.norm();
            if f.norm() > CRITICAL_RESIDUAL_TOL * scale {
                return Err(Error::NotACriticalPoint {
                    residual: f.norm(),
                    tol: CRITICAL_RESIDUAL_TOL,
                });
            }
            jacobian(point.system, params, &v)?
        }
        (Location::Infinity(dir), Some(chart)) => {
            let r = infinity_tangency_residual(point.system, params, dir)?;
            if r > CRITICAL_RESIDUAL_TOL {
                return Err(Error::NotACriticalPoint {
                    residual: r,
                    tol: CRITICAL_RESIDUAL_TOL,
                });
            }
            let v = Vector3::new(chart.coords[0], chart.coords[1], chart.coords[2]);
            let f = vector_field(chart.chart, params, &v)?;
            if f.norm() > CRITICAL_RESIDUAL_TOL * (1.0 + v.norm()) {
                return Err(Error::NotACriticalPoint {
                    residual: f.norm(),
                    tol: CRITICAL_RESIDUAL_TOL,
                });
            }
            jacobian(chart.chart, params, &v)? * chart.orientation
        }
        (Location::Infinity(_), None) => return Err(Error::NoChart),
    };
    let (vals, vecs) = eigen::eigen_triple(&matrix);
    let dims = eigen::manifold_dims(&vals, DIMS_REL_TOL);
    let mut rows = [[ComplexPair { re: 0.0, im: 0.0 }; 3]; 3];
    for (i, v) in vecs.iter().enumerate() {
        for (j, z) in v.iter().enumerate() {
            rows[i][j] = ComplexPair::from(*z);
        }
    }
    let mut out = point.clone();
    out.linearization = Some(Linearization {
        matrix: [
            [matrix[(0, 0)], matrix[(0, 1)], matrix[(0, 2)]],
            [matrix[(1, 0)], matrix[(1, 1)], matrix[(1, 2)]],
            [matrix[(2, 0)], matrix[(2, 1)], matrix[(2, 2)]],
        ],
        eigenvalues: [
            ComplexPair::from(vals[0]),
            ComplexPair::from(vals[1]),
            ComplexPair::from(vals[2]),
        ],
        eigenvectors: rows,
        dims,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Local profile expansions.

/// Closed-form local behavior of a profile near a critical point, evaluable
/// as `(f, f')` at given `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ExpansionKind {
    /// `f = K xi^{(sigma+2)/(m-p)}`: tail leaving the origin point.
    OriginTail { k: f64 },
    /// `f = c_m xi^{2/(m-1)}` with `c_m = ((m-1)/(2m(m+1)))^{1/(m-1)}`.
    OriginP2,
    /// `f = [K - beta(m-1)/(2m) xi^2]^{1/(m-1)}` with the interface at
    /// `xi0 = sqrt(2mK/((m-1)beta))`; stored by `xi0`.
    TypeIContact { xi0: f64 },
    /// `f = xi^{(sigma+2)/(m-p)} [C - (1-p) xi^{nu}]^{1/(1-p)}`,
    /// `nu = g/(m-p)`, interface at `xi0 = (C/(1-p))^{1/nu}`.
    TypeIIContact { c: f64 },
    /// `f = K xi^{1/m}`.
    RootOrigin { k: f64 },
    /// `f = a + b xi`.
    ConstantOrigin { a: f64, b: f64 },
}

/// A concrete local expansion bound to a parameter triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalExpansion {
    pub kind: ExpansionKind,
    pub params: Parameters,
}

impl LocalExpansion {
    pub fn new(kind: ExpansionKind, params: &Parameters) -> Result<Self> {
        derive_exponents(params)?;
        match kind {
            ExpansionKind::OriginTail { k } | ExpansionKind::RootOrigin { k } => {
                if !(k > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "expansion amplitude must be positive, got {k}"
                    )));
                }
            }
            ExpansionKind::TypeIContact { xi0 } => {
                if !(xi0 > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "interface location must be positive, got {xi0}"
                    )));
                }
            }
            ExpansionKind::TypeIIContact { c } => {
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "contact constant must be positive, got {c}"
                    )));
                }
            }
            ExpansionKind::ConstantOrigin { a, .. } => {
                if !(a > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "constant origin value must be positive, got {a}"
                    )));
                }
            }
            ExpansionKind::OriginP2 => {}
        }
        Ok(Self { kind, params: *params })
    }

    /// Interface location carried by the expansion, if any.
    pub fn interface_xi0(&self) -> Option<f64> {
        let params = &self.params;
        match self.kind {
            ExpansionKind::TypeIContact { xi0 } => Some(xi0),
            ExpansionKind::TypeIIContact { c } => {
                let nu = params.g() / (params.m - params.p);
                Some((c / (1.0 - params.p)).powf(1.0 / nu))
            }
            _ => None,
        }
    }

    /// Evaluate `(f, f')`. Errors on `xi` outside the expansion's domain
    /// (past the interface, or nonpositive where a power law needs xi > 0).
    pub fn eval(&self, xi: f64) -> Result<ProfilePoint> {
        let params = &self.params;
        let (m, p) = (params.m, params.p);
        let e = derive_exponents(params)?;
        let a_exp = (params.sigma + 2.0) / (m - p);
        match self.kind {
            ExpansionKind::OriginTail { k } => {
                if !(xi > 0.0) {
                    return Err(Error::DegenerateInput("origin tail needs xi > 0".into()));
                }
                Ok(ProfilePoint {
                    xi,
                    f: k * xi.powf(a_exp),
                    df: k * a_exp * xi.powf(a_exp - 1.0),
                })
            }
            ExpansionKind::OriginP2 => {
                if !(xi > 0.0) {
                    return Err(Error::DegenerateInput("P2 origin needs xi > 0".into()));
                }
                let cm = ((m - 1.0) / (2.0 * m * (m + 1.0))).powf(1.0 / (m - 1.0));
                let q = 2.0 / (m - 1.0);
                Ok(ProfilePoint {
                    xi,
                    f: cm * xi.powf(q),
                    df: cm * q * xi.powf(q - 1.0),
                })
            }
            ExpansionKind::TypeIContact { xi0 } => {
                let c = e.beta * (m - 1.0) / (2.0 * m);
                let k = c * xi0 * xi0;
                let w = k - c * xi * xi;
                if w <= 0.0 {
                    return Err(Error::DegenerateInput(format!(
                        "xi = {xi} is at or past the interface {xi0}"
                    )));
                }
                let f = w.powf(1.0 / (m - 1.0));
                let df = -2.0 * c * xi / (m - 1.0) * w.powf((2.0 - m) / (m - 1.0));
                Ok(ProfilePoint { xi, f, df })
            }
            ExpansionKind::TypeIIContact { c } => {
                if !(xi > 0.0) {
                    return Err(Error::DegenerateInput("contact family needs xi > 0".into()));
                }
                let nu = params.g() / (m - p);
                let b = c - (1.0 - p) * xi.powf(nu);
                if b <= 0.0 {
                    return Err(Error::DegenerateInput(format!(
                        "xi = {xi} is at or past the interface of the contact family"
                    )));
                }
                let f = xi.powf(a_exp) * b.powf(1.0 / (1.0 - p));
                let df = a_exp * xi.powf(a_exp - 1.0) * b.powf(1.0 / (1.0 - p))
                    - nu * xi.powf(a_exp + nu - 1.0) * b.powf(p / (1.0 - p));
                Ok(ProfilePoint { xi, f, df })
            }
            ExpansionKind::RootOrigin { k } => {
                if !(xi > 0.0) {
                    return Err(Error::DegenerateInput("root origin needs xi > 0".into()));
                }
                Ok(ProfilePoint {
                    xi,
                    f: k * xi.powf(1.0 / m),
                    df: k / m * xi.powf(1.0 / m - 1.0),
                })
            }
            ExpansionKind::ConstantOrigin { a, b } => Ok(ProfilePoint {
                xi,
                f: a + b * xi,
                df: b,
            }),
        }
    }
}

/// Build the local expansion a critical point carries.
///
/// The request must match the point: the origin point carries tails and
/// vertical-contact families, the interface points carry the pressure-slope
/// contact, and so on. No-profile points refuse with
/// [`Error::NoProfileBehavior`].
pub fn local_expansion(
    point: &CriticalPointReport,
    params: &Parameters,
    kind: ExpansionKind,
) -> Result<LocalExpansion> {
    let ok = match (&point.label, &kind) {
        (PointLabel::P0, ExpansionKind::OriginTail { .. })
        | (PointLabel::P0, ExpansionKind::TypeIIContact { .. })
        | (PointLabel::SubQ1P0, ExpansionKind::OriginTail { .. })
        | (PointLabel::SubQ1P0, ExpansionKind::ConstantOrigin { .. })
        | (PointLabel::P2, ExpansionKind::OriginP2)
        | (PointLabel::P1, ExpansionKind::TypeIContact { .. })
        | (PointLabel::Q1, ExpansionKind::ConstantOrigin { .. })
        | (PointLabel::Q5, ExpansionKind::RootOrigin { .. })
        | (PointLabel::SubQ5, ExpansionKind::RootOrigin { .. }) => true,
        (PointLabel::PXi0 { xi0 }, ExpansionKind::TypeIContact { xi0: req }) => {
            (xi0 - req).abs() <= 1e-12 * xi0.abs().max(1.0)
        }
        (PointLabel::PV0 { v0 }, ExpansionKind::TypeIContact { xi0: req }) => {
            let xi0 = xi0_of_v0(*v0, params)?;
            (xi0 - req).abs() <= 1e-9 * xi0.abs().max(1.0)
        }
        (PointLabel::Q4, _)
        | (PointLabel::SubQ4, _)
        | (PointLabel::SubP1, _)
        | (PointLabel::SubP2, _) => return Err(Error::NoProfileBehavior),
        _ => false,
    };
    if !ok {
        return Err(Error::Unsupported(
            "requested expansion kind does not belong to this critical point",
        ));
    }
    LocalExpansion::new(kind, params)
}

/// `v0 = (1/alpha) (m/alpha)^{(1-p)/(m-1)} xi0^{g/(m-1)}`: the S3 line
/// coordinate of the interface at `xi0`.
pub fn v0_of_xi0(xi0: f64, params: &Parameters) -> Result<f64> {
    params.require_supercritical()?;
    if !(xi0 > 0.0) {
        return Err(Error::InvalidParameter(format!("xi0 = {xi0} must be > 0")));
    }
    let e = derive_exponents(params)?;
    let m = params.m;
    Ok((1.0 / e.alpha)
        * (m / e.alpha).powf((1.0 - params.p) / (m - 1.0))
        * xi0.powf(params.g() / (m - 1.0)))
}

/// Inverse of [`v0_of_xi0`].
pub fn xi0_of_v0(v0: f64, params: &Parameters) -> Result<f64> {
    params.require_supercritical()?;
    if !(v0 > 0.0) {
        return Err(Error::InvalidParameter(format!("v0 = {v0} must be > 0")));
    }
    let e = derive_exponents(params)?;
    let m = params.m;
    let base = v0 * e.alpha / (m / e.alpha).powf((1.0 - params.p) / (m - 1.0));
    Ok(base.powf((m - 1.0) / params.g()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sup1() -> Parameters {
        Parameters::new(3.0, 0.5, 1.0).unwrap()
    }

    fn sup3() -> Parameters {
        Parameters::new(3.0, 0.5, 3.0).unwrap()
    }

    fn sub4() -> Parameters {
        Parameters::new(1.3, 0.5, 4.0).unwrap()
    }

    #[test]
    fn p1_linearization_matches_closed_forms() {
        let params = sup1();
        let pts = enumerate_finite(SystemId::S1, &params, &[]).unwrap();
        let p1 = linearize(&pts[1], &params).unwrap();
        let lin = p1.linearization.unwrap();
        // Closed form: (-beta(m-1)/alpha, beta/alpha, -(m+p-2)beta/alpha)
        // = (-5/3, 5/6, -5/4) at (3, 1/2, 1).
        let mut got: Vec<f64> = lin.eigenvalues.iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = p1_eigenvalues_closed(&params).unwrap().to_vec();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(want.iter()) {
            assert_relative_eq!(g, w, max_relative = 1e-10);
        }
        assert_relative_eq!(want[0], -5.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(want[2], 5.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(want[1], -5.0 / 4.0, max_relative = 1e-14);
        assert_eq!(lin.dims, (2, 1, 0));
        for z in lin.eigenvalues {
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn p2_linearization_matches_characteristic_data() {
        let params = sup1();
        let pts = enumerate_finite(SystemId::S1, &params, &[]).unwrap();
        let p2 = linearize(&pts[2], &params).unwrap();
        let lin = p2.linearization.unwrap();
        // M(P2) = (1/24) [[-4, 4, 0], [22, -26, -24], [0, 0, 1]].
        let want = [
            [-4.0 / 24.0, 4.0 / 24.0, 0.0],
            [22.0 / 24.0, -26.0 / 24.0, -1.0],
            [0.0, 0.0, 1.0 / 24.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(lin.matrix[i][j], want[i][j], max_relative = 1e-13, epsilon = 1e-15);
            }
        }
        // Transverse eigenvalue g/(2(m+1)alpha) = 1/24; in-plane pair solves
        // lambda^2 + (5/4) lambda + 1/36 = 0.
        assert_relative_eq!(p2_lambda3(&params).unwrap(), 1.0 / 24.0, max_relative = 1e-14);
        let (tr, pr) = p2_inplane_trace_product(&params).unwrap();
        assert_relative_eq!(tr, -5.0 / 4.0, max_relative = 1e-14);
        assert_relative_eq!(pr, 1.0 / 36.0, max_relative = 1e-14);
        let mut evs: Vec<f64> = lin.eigenvalues.iter().map(|z| z.re).collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // lambda3 is the largest (only positive) one.
        assert_relative_eq!(evs[2], 1.0 / 24.0, max_relative = 1e-9);
        assert_relative_eq!(evs[0] + evs[1], tr, max_relative = 1e-9);
        assert_relative_eq!(evs[0] * evs[1], pr, max_relative = 1e-8);
        assert_eq!(lin.dims, (2, 1, 0));
    }

    #[test]
    fn p2_exit_direction_spot_values() {
        // sigma = 1: e3 = (-96/47, -120/47, 1); sigma = 3: (-32/111, -72/111, 1).
        let e1 = p2_exit_direction(&sup1()).unwrap();
        assert_relative_eq!(e1[0], -96.0 / 47.0, max_relative = 1e-13);
        assert_relative_eq!(e1[1], -120.0 / 47.0, max_relative = 1e-13);
        assert_relative_eq!(e1[2], 1.0);
        let e3 = p2_exit_direction(&sup3()).unwrap();
        assert_relative_eq!(e3[0], -32.0 / 111.0, max_relative = 1e-13);
        assert_relative_eq!(e3[1], -72.0 / 111.0, max_relative = 1e-13);
        // Residual of (M - lambda3 I) e3 must vanish.
        for params in [sup1(), sup3()] {
            let p2 = p2_location(&params).unwrap();
            let m = jacobian(SystemId::S1, &params, &p2).unwrap();
            let lam = p2_lambda3(&params).unwrap();
            let e = p2_exit_direction(&params).unwrap();
            let r = m * e - lam * e;
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn s2_and_s3_lines_are_critical_and_consistent() {
        let params = sup1();
        let xi0 = 1.0;
        let line2 = enumerate_finite(SystemId::S2, &params, &[xi0]).unwrap();
        let lin2 = linearize(&line2[0], &params).unwrap();
        let l2 = lin2.linearization.unwrap();
        // Eigenvalues (-(m+p-2) beta xi0, beta xi0, 0) = (-3.75, 2.5, 0).
        let mut evs: Vec<f64> = l2.eigenvalues.iter().map(|z| z.re).collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(evs[0], -3.75, max_relative = 1e-10);
        assert_relative_eq!(evs[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(evs[2], 2.5, max_relative = 1e-10);
        assert_eq!(l2.dims, (1, 1, 1));
        // v0 at xi0 = 1 equals sqrt(xi0)/3 here; round trip is exact.
        let v0 = v0_of_xi0(xi0, &params).unwrap();
        assert_relative_eq!(v0, 1.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(xi0_of_v0(v0, &params).unwrap(), xi0, max_relative = 1e-12);
        let line3 = enumerate_finite(SystemId::S3, &params, &[v0]).unwrap();
        let lin3 = linearize(&line3[0], &params).unwrap();
        assert_eq!(lin3.linearization.unwrap().dims, (1, 1, 1));
    }

    #[test]
    fn infinity_counts_and_residuals() {
        let s1 = enumerate_infinity(SystemId::S1, &sup1()).unwrap();
        assert_eq!(s1.len(), 5);
        let s5 = enumerate_infinity(SystemId::S5, &sub4()).unwrap();
        assert_eq!(s5.len(), 7);
        for pt in s1.iter().chain(s5.iter()) {
            if let Location::Infinity(d) = pt.location {
                let params = if pt.system == SystemId::S1 { sup1() } else { sub4() };
                let r = infinity_tangency_residual(pt.system, &params, &d).unwrap();
                assert!(r < 1e-12, "{} residual {r}", pt.label);
            }
        }
    }

    #[test]
    fn q4_has_no_chart() {
        let params = sup1();
        let pts = enumerate_infinity(SystemId::S1, &params).unwrap();
        let q4 = pts.iter().find(|p| p.label == PointLabel::Q4).unwrap();
        assert!(matches!(linearize(q4, &params), Err(Error::NoChart)));
    }

    #[test]
    fn subcritical_interface_candidate_has_the_expected_spectrum() {
        // At (1.3, 1/2, 4), the would-be interface point has eigenvalues
        // (1-m, 1, (2-m-p)/2) = (-0.3, 1, 0.1), with the unstable plane
        // inside {x = 0} and the stable direction inside {w = 0}.
        let params = sub4();
        let pts = enumerate_infinity(SystemId::S5, &params).unwrap();
        let p1 = pts.iter().find(|p| p.label == PointLabel::SubP1).unwrap();
        let lin = linearize(p1, &params).unwrap().linearization.unwrap();
        let mut evs: Vec<f64> = lin.eigenvalues.iter().map(|z| z.re).collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(evs[0], -0.3, max_relative = 1e-9);
        assert_relative_eq!(evs[1], 0.1, max_relative = 1e-9);
        assert_relative_eq!(evs[2], 1.0, max_relative = 1e-9);
        assert_eq!(lin.dims, (1, 2, 0));
        // Unstable eigenvectors have zero first (x) component: the unstable
        // manifold is contained in the chart plane {x = 0}.
        for (z, v) in lin.eigenvalues.iter().zip(lin.eigenvectors.iter()) {
            let scale: f64 = v.iter().map(|c| (c.re * c.re + c.im * c.im).sqrt()).sum();
            if z.re > 1e-9 {
                assert!(v[0].re.abs() + v[0].im.abs() < 1e-9 * scale, "{v:?}");
            } else {
                // Stable direction: zero third (w) component.
                assert!(v[2].re.abs() + v[2].im.abs() < 1e-9 * scale, "{v:?}");
            }
        }
    }

    #[test]
    fn q5_like_points_match_their_charts() {
        let params = sup1();
        let pts = enumerate_infinity(SystemId::S1, &params).unwrap();
        let q5 = pts.iter().find(|p| p.label == PointLabel::Q5).unwrap();
        let lin = linearize(q5, &params).unwrap().linearization.unwrap();
        let mut evs: Vec<f64> = lin.eigenvalues.iter().map(|z| z.re).collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // (-1, (m sigma + p - 1)/m, (m+1)/m) = (-1, 5/6, 4/3).
        assert_relative_eq!(evs[0], -1.0, max_relative = 1e-10);
        assert_relative_eq!(evs[1], 5.0 / 6.0, max_relative = 1e-10);
        assert_relative_eq!(evs[2], 4.0 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn subcritical_q2_like_nodes_have_opposite_stability() {
        let params = sub4();
        let pts = enumerate_infinity(SystemId::S5, &params).unwrap();
        let q2 = pts.iter().find(|p| p.label == PointLabel::SubQ2).unwrap();
        let q3 = pts.iter().find(|p| p.label == PointLabel::SubQ3).unwrap();
        let l2 = linearize(q2, &params).unwrap().linearization.unwrap();
        let l3 = linearize(q3, &params).unwrap().linearization.unwrap();
        assert_eq!(l2.dims, (0, 3, 0));
        assert_eq!(l3.dims, (3, 0, 0));
        // Eigenvalues (m, 1, (m+p)/2) up to sign.
        let mut evs: Vec<f64> = l2.eigenvalues.iter().map(|z| z.re).collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(evs[0], 0.9, max_relative = 1e-10);
        assert_relative_eq!(evs[1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(evs[2], 1.3, max_relative = 1e-10);
    }

    #[test]
    fn local_expansions_evaluate_to_known_values() {
        let params = sup1();
        let pts = enumerate_finite(SystemId::S1, &params, &[]).unwrap();
        // Origin tail with K = 1 at (3, 1/2, 1): f = xi^{1.2}.
        let tail = local_expansion(&pts[0], &params, ExpansionKind::OriginTail { k: 1.0 }).unwrap();
        let at = tail.eval(0.5).unwrap();
        assert_relative_eq!(at.f, 0.5f64.powf(1.2), max_relative = 1e-14);
        assert_relative_eq!(at.df, 1.2 * 0.5f64.powf(0.2), max_relative = 1e-14);
        // Vertical-contact family with C = 1/2: interface at xi0 = 1 and
        // f ~ 0.04 (1 - xi)^2 near it.
        let contact =
            local_expansion(&pts[0], &params, ExpansionKind::TypeIIContact { c: 0.5 }).unwrap();
        assert_relative_eq!(contact.interface_xi0().unwrap(), 1.0, max_relative = 1e-13);
        let s = 1e-5;
        let near = contact.eval(1.0 - s).unwrap();
        assert_relative_eq!(near.f / (s * s), 0.04, max_relative = 1e-3);
        // Pressure-slope contact: amplitude constant A^{m-1} = beta(m-1)xi0/m.
        let p1 = &pts[1];
        let t1 = local_expansion(p1, &params, ExpansionKind::TypeIContact { xi0: 2.0 }).unwrap();
        let near1 = t1.eval(2.0 - s).unwrap();
        let a_pow = 2.5 * 2.0 * 2.0 / 3.0; // beta (m-1) xi0 / m
        assert_relative_eq!(
            near1.f.powf(params.m - 1.0) / s,
            a_pow,
            max_relative = 1e-4
        );
    }

    #[test]
    fn expansion_requests_are_validated() {
        let params = sup1();
        let pts = enumerate_finite(SystemId::S1, &params, &[]).unwrap();
        // P2 does not carry a constant origin.
        assert!(matches!(
            local_expansion(&pts[2], &params, ExpansionKind::ConstantOrigin { a: 1.0, b: 0.0 }),
            Err(Error::Unsupported(_))
        ));
        let inf = enumerate_infinity(SystemId::S1, &params).unwrap();
        let q4 = inf.iter().find(|p| p.label == PointLabel::Q4).unwrap();
        assert!(matches!(
            local_expansion(q4, &params, ExpansionKind::OriginTail { k: 1.0 }),
            Err(Error::NoProfileBehavior)
        ));
    }

    #[test]
    fn v0_xi0_bijection_is_monotone_and_exact() {
        let params = sup3();
        let mut last = 0.0;
        for i in 1..40 {
            let xi0 = 0.05 * i as f64;
            let v0 = v0_of_xi0(xi0, &params).unwrap();
            assert!(v0 > last, "v0 must increase with xi0");
            last = v0;
            assert_relative_eq!(xi0_of_v0(v0, &params).unwrap(), xi0, max_relative = 1e-12);
        }
    }
}
