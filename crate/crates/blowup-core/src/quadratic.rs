//! Invariant-theoretic classification of planar homogeneous quadratic
//! fields, applied to the center-manifold flow at the degenerate origin of
//! the supercritical phase system. The classification (Date/Date-Iri) maps
//! sign patterns of scalar invariants to local phase portraits; the two
//! patterns arising here decide whether an elliptic sector exists at the
//! origin, which is exactly the question of existence of profiles carrying
//! both a vertical-contact interface and the anomalous origin tail.

use serde::Serialize;

use crate::error::Error;
use crate::params::{derive_exponents, Parameters};
use crate::Result;

/// Levi-Civita symbol with the convention `eps[0][1] = -1`. Every use below
/// pairs two factors, so the overall sign convention cancels.
const EPS: [[f64; 2]; 2] = [[0.0, -1.0], [1.0, 0.0]];

/// Homogeneous quadratic planar field `x_k' = sum_{l,m} P[k][l][m] x_l x_m`
/// stored as a coefficient tensor symmetric in the lower index pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticSystem2D {
    pub tensor: [[[f64; 2]; 2]; 2],
}

impl QuadraticSystem2D {
    pub fn new(tensor: [[[f64; 2]; 2]; 2]) -> Result<Self> {
        for k in 0..2 {
            let scale = tensor[k]
                .iter()
                .flatten()
                .fold(0.0f64, |a, &b| a.max(b.abs()))
                .max(1.0);
            if (tensor[k][0][1] - tensor[k][1][0]).abs() > 1e-14 * scale {
                return Err(Error::AsymmetricTensor);
            }
        }
        Ok(Self { tensor })
    }

    /// Right-hand side at `x`.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            for l in 0..2 {
                for m in 0..2 {
                    *o += self.tensor[k][l][m] * x[l] * x[m];
                }
            }
        }
        out
    }

    /// The same field expressed in coordinates `x = S y`:
    /// `Pt[a][b][c] = sum Sinv[a][k] P[k][l][m] S[l][b] S[m][c]`.
    pub fn transformed(&self, s: &[[f64; 2]; 2]) -> Result<Self> {
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::DegenerateInput(format!(
                "coordinate change is singular (det = {det:.3e})"
            )));
        }
        let sinv = [
            [s[1][1] / det, -s[0][1] / det],
            [-s[1][0] / det, s[0][0] / det],
        ];
        let mut t = [[[0.0f64; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut acc = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            for m in 0..2 {
                                acc += sinv[a][k] * self.tensor[k][l][m] * s[l][b] * s[m][c];
                            }
                        }
                    }
                    t[a][b][c] = acc;
                }
            }
        }
        // Symmetrize away rounding skew before revalidating.
        for tk in t.iter_mut() {
            let avg = 0.5 * (tk[0][1] + tk[1][0]);
            tk[0][1] = avg;
            tk[1][0] = avg;
        }
        Self::new(t)
    }
}

/// Portrait tags for the sign patterns this toolkit encounters, numbered by
/// the classification table they come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PortraitTag {
    /// `(D<0, K2<0, K3<0)`: an elliptic sector exists at the origin; orbits
    /// leave and re-enter the point.
    #[serde(rename = "no. 8: elliptic sector")]
    Portrait8EllipticSector,
    /// `(D<0, K2>0, K3<0)`: no orbit both leaves and re-enters the origin.
    #[serde(rename = "no. 3: no reentry")]
    Portrait3NoReentry,
    /// Any other strict sign pattern; carries the signs of `(D, K2, K3)`.
    Unclassified {
        sign_d: i8,
        sign_k2: i8,
        sign_k3: i8,
    },
}

impl std::fmt::Display for PortraitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PortraitTag::Portrait8EllipticSector => write!(f, "no. 8: elliptic sector"),
            PortraitTag::Portrait3NoReentry => write!(f, "no. 3: no reentry"),
            PortraitTag::Unclassified {
                sign_d,
                sign_k2,
                sign_k3,
            } => write!(f, "unclassified (signs D:{sign_d} K2:{sign_k2} K3:{sign_k3})"),
        }
    }
}

/// Full invariant set of a quadratic planar field.
///
/// `portrait` is `None` when any deciding scalar sits within tolerance of
/// zero (use [`classify`] for the strict, erroring variant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DateInvariants {
    pub p_vec: [f64; 2],
    pub q: [[[f64; 2]; 2]; 2],
    pub h: [[f64; 2]; 2],
    #[serde(rename = "H")]
    pub scalar_h: f64,
    #[serde(rename = "D")]
    pub scalar_d: f64,
    #[serde(rename = "F")]
    pub scalar_f: f64,
    /// `K_m = F + 9 (-2)^{m-3} H - 27 (-8)^{m-3} D` for m = 1, 2, 3.
    pub k: [f64; 3],
    pub portrait: Option<PortraitTag>,
}

/// Split the coefficient tensor into its vector part `p_l = sum_k P[k][l][k]`
/// and trace-free tensor part
/// `Q[k][l][m] = P[k][l][m] - (delta_{lk} p_m + delta_{mk} p_l)/3`.
/// The decomposition recomposes to `P` exactly.
pub fn decompose(sys: &QuadraticSystem2D) -> ([f64; 2], [[[f64; 2]; 2]; 2]) {
    let t = &sys.tensor;
    let mut p = [0.0f64; 2];
    for (l, pl) in p.iter_mut().enumerate() {
        for k in 0..2 {
            *pl += t[k][l][k];
        }
    }
    let mut q = [[[0.0f64; 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            for m in 0..2 {
                let dlk = if l == k { 1.0 } else { 0.0 };
                let dmk = if m == k { 1.0 } else { 0.0 };
                q[k][l][m] = t[k][l][m] - (dlk * p[m] + dmk * p[l]) / 3.0;
            }
        }
    }
    (p, q)
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Compute the scalar invariants by the literal epsilon contractions:
/// `h[k][l] = (1/2) sum eps eps Q[k].. Q[l]..`, `H = h[k][l] p_k p_l`,
/// `D = -2 sum eps eps h h`, `F = sum eps eps Q[s][k][l] p p p_s`.
pub fn invariants(sys: &QuadraticSystem2D) -> DateInvariants {
    let (p, q) = decompose(sys);
    let mut h = [[0.0f64; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let mut acc = 0.0;
            for mu in 0..2 {
                for nu in 0..2 {
                    for rho in 0..2 {
                        for sg in 0..2 {
                            acc += EPS[mu][nu] * EPS[rho][sg] * q[k][mu][rho] * q[l][nu][sg];
                        }
                    }
                }
            }
            h[k][l] = 0.5 * acc;
        }
    }
    let mut scalar_h = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            scalar_h += h[k][l] * p[k] * p[l];
        }
    }
    let mut scalar_d = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            for mu in 0..2 {
                for nu in 0..2 {
                    scalar_d += EPS[k][l] * EPS[mu][nu] * h[k][mu] * h[l][nu];
                }
            }
        }
    }
    scalar_d *= -2.0;
    let mut scalar_f = 0.0;
    for mu in 0..2 {
        for k in 0..2 {
            for rho in 0..2 {
                for l in 0..2 {
                    for sg in 0..2 {
                        scalar_f += EPS[mu][k] * EPS[rho][l] * q[sg][k][l] * p[mu] * p[rho] * p[sg];
                    }
                }
            }
        }
    }
    let mut k_inv = [0.0f64; 3];
    for (i, ki) in k_inv.iter_mut().enumerate() {
        let mm = (i + 1) as i32;
        *ki = scalar_f + 9.0 * (-2.0f64).powi(mm - 3) * scalar_h
            - 27.0 * (-8.0f64).powi(mm - 3) * scalar_d;
    }
    let portrait = classify_signs(scalar_d, k_inv[1], k_inv[2], scalar_h, scalar_f).ok();
    DateInvariants {
        p_vec: p,
        q,
        h,
        scalar_h,
        scalar_d,
        scalar_f,
        k: k_inv,
        portrait,
    }
}

fn classify_signs(d: f64, k2: f64, k3: f64, h: f64, f: f64) -> Result<PortraitTag> {
    // Degeneracy is judged against the natural magnitude of each scalar so
    // that an exact structural zero (K2 on the critical parameter set) is
    // caught at any alpha scale.
    let scale = f.abs().max(9.0 * h.abs()).max(27.0 * d.abs()).max(1.0);
    for (name, value, sc) in [
        ("D", d, d.abs().max(1.0).max(scale * 1e-3)),
        ("K2", k2, scale),
        ("K3", k3, scale),
    ] {
        if value.abs() <= 1e-12 * sc {
            let which: &'static str = match name {
                "D" => "D",
                "K2" => "K2",
                _ => "K3",
            };
            return Err(Error::DegenerateSigns(which));
        }
    }
    Ok(match (d < 0.0, k2 < 0.0, k3 < 0.0) {
        (true, true, true) => PortraitTag::Portrait8EllipticSector,
        (true, false, true) => PortraitTag::Portrait3NoReentry,
        _ => PortraitTag::Unclassified {
            sign_d: sign_of(d),
            sign_k2: sign_of(k2),
            sign_k3: sign_of(k3),
        },
    })
}

/// Strict classification: errors with [`Error::DegenerateSigns`] on the
/// boundary instead of returning `None`.
pub fn classify(inv: &DateInvariants) -> Result<PortraitTag> {
    classify_signs(
        inv.scalar_d,
        inv.k[1],
        inv.k[2],
        inv.scalar_h,
        inv.scalar_f,
    )
}

/// The quadratic truncation of the center-manifold flow at the origin of
/// the supercritical system, in its invariant `(X, Z)` plane and with the
/// common `1/beta` factor absorbed into the time variable:
/// `X' = X^2 - (m-1) alpha X Z`, `Z' = 2 X Z - (m+p-2) alpha Z^2`.
///
/// Built for any admissible parameters regardless of regime: the sign
/// pattern of its invariants is what distinguishes the regimes.
pub fn origin_center_system(params: &Parameters) -> Result<QuadraticSystem2D> {
    let e = derive_exponents(params)?;
    let a = e.alpha;
    let (m, p) = (params.m, params.p);
    QuadraticSystem2D::new([
        [[1.0, -(m - 1.0) * a / 2.0], [-(m - 1.0) * a / 2.0, 0.0]],
        [[0.0, 1.0], [1.0, -(m + p - 2.0) * a]],
    ])
}

/// Closed forms of the invariants of [`origin_center_system`], used as an
/// independent oracle against the epsilon-contraction route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormInvariants {
    pub h11: f64,
    pub h12: f64,
    pub h22: f64,
    pub scalar_h: f64,
    pub scalar_d: f64,
    pub scalar_f: f64,
    pub k2: f64,
    pub k3: f64,
}

pub fn closed_form_invariants(params: &Parameters) -> Result<ClosedFormInvariants> {
    let e = derive_exponents(params)?;
    let a = e.alpha;
    let (m, p) = (params.m, params.p);
    let a2 = a * a;
    Ok(ClosedFormInvariants {
        h11: -a2 * (1.0 - p) * (1.0 - p) / 9.0,
        h12: a * (1.0 - p) / 18.0,
        h22: -1.0 / 9.0,
        scalar_h: -(a2 / 9.0)
            * (3.0 * (p - 1.0) * (p - 1.0) + 2.25 * (m - 1.0) * (m - 1.0)),
        scalar_d: -a2 * (1.0 - p) * (1.0 - p) / 27.0,
        scalar_f: -(a2 / 2.0) * (3.0 * m + 2.0 * p - 5.0) * (3.0 * m - 2.0 * p - 1.0),
        k2: -(27.0 / 8.0) * a2 * (m + p - 2.0) * (m - p),
        k3: -(27.0 / 4.0) * a2 * (m - 1.0) * (m - 1.0),
    })
}

/// Invariants and portrait of the origin flow for the given parameters.
pub fn classify_origin(params: &Parameters) -> Result<DateInvariants> {
    Ok(invariants(&origin_center_system(params)?))
}
