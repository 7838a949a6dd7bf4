//! Analytic barrier surfaces for the shooting argument.
//!
//! Each function here evaluates a closed-form certificate that confines
//! orbits of the phase systems: a flow sign on a plane or cylinder, or a
//! threshold derived from one. The flow signs are the corresponding
//! component of the vector field restricted to the surface, so every
//! formula can be cross-checked against the integrator's field.

use nalgebra::Vector3;
use serde::Serialize;

use crate::critical::{p2_location, xi0_of_v0};
use crate::error::Error;
use crate::params::{derive_exponents, Parameters};
use crate::Result;

/// Flow of the (U, Y, V) system through the plane {Y = -beta/2alpha},
/// the half-slope plane separating decreasing profiles from the rest.
/// Negative sign means the plane is crossed from right to left.
pub fn flow_across_half_slope_plane(params: &Parameters, u: f64, v: f64) -> Result<f64> {
    params.require_supercritical()?;
    if u < 0.0 {
        return Err(Error::DegenerateInput(format!("U must be >= 0, got {u}")));
    }
    let e = derive_exponents(params)?;
    let ba = e.beta / e.alpha;
    let pw = (1.0 - params.p) / (params.m + params.p - 2.0);
    Ok(u * ((1.0 + 0.5 * ba) * u.powf(pw) - v) + 0.25 * ba * ba)
}

/// Envelope V = h(U) of the half-slope plane: crossing right to left is
/// possible only where V >= h(U), so min h bounds the reachable v0.
pub fn slope_plane_envelope(params: &Parameters, u: f64) -> Result<f64> {
    params.require_supercritical()?;
    if u <= 0.0 {
        return Err(Error::DegenerateInput(format!("U must be > 0, got {u}")));
    }
    let e = derive_exponents(params)?;
    let ba = e.beta / e.alpha;
    let pw = (1.0 - params.p) / (params.m + params.p - 2.0);
    Ok((1.0 + 0.5 * ba) * u.powf(pw) + 0.25 * ba * ba / u)
}

/// The guarantee extracted from the half-slope barrier: every interface
/// orbit with v0 <= v0_max (equivalently xi0 <= xi0_max) stays below the
/// plane {Y = -beta/2alpha} and its profile decreases all the way to the
/// axis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecreasingGuarantee {
    /// Argmin of the envelope h.
    pub u_min: f64,
    /// min h = largest v0 that the barrier still excludes from turning.
    pub v0_max: f64,
    /// Contact radius corresponding to v0_max.
    pub xi0_max: f64,
}

pub fn decreasing_guarantee(params: &Parameters) -> Result<DecreasingGuarantee> {
    params.require_supercritical()?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let mp2 = m + p - 2.0;
    let base = (mp2 * (m - p) * (m - p))
        / (2.0 * (sigma + 2.0) * (2.0 * sigma + 4.0 + m - p) * (1.0 - p));
    let u_min = base.powf(mp2 / (m - 1.0));
    let v0_max = slope_plane_envelope(params, u_min)?;
    let xi0_max = xi0_of_v0(v0_max, params)?;
    Ok(DecreasingGuarantee {
        u_min,
        v0_max,
        xi0_max,
    })
}

/// Flow of the (U, Y, V) system through {Y = 0}. Orbits turning from
/// increasing to decreasing cross where this is negative, and once U has
/// fallen below V^(-(m+p-2)/(1-p)) the sign can never flip back.
pub fn flow_across_axis_plane(params: &Parameters, u: f64, v: f64) -> Result<f64> {
    params.require_supercritical()?;
    if u < 0.0 {
        return Err(Error::DegenerateInput(format!("U must be >= 0, got {u}")));
    }
    let pw = (1.0 - params.p) / (params.m + params.p - 2.0);
    Ok(u * (u.powf(pw) - v))
}

/// Flow of the (U, Y, V) system through the cylinder {UV = const}. For
/// sigma < 2 this is negative in {Y <= 0}, trapping orbits inside.
pub fn flow_across_trap_cylinder(params: &Parameters, u: f64, y: f64, v: f64) -> Result<f64> {
    params.require_supercritical()?;
    if u < 0.0 {
        return Err(Error::DegenerateInput(format!("U must be >= 0, got {u}")));
    }
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let ur = u.powf((m - 1.0) / (m + p - 2.0));
    Ok(u * v * ((m + p - 2.0) * y + (sigma - 2.0) * ur))
}

/// Certificate that, near the lower edge of the sigma range, every orbit
/// leaving P2 or P0 is funneled back into P0: the orbits cross {Y = 0}
/// with UV below the cylinder level k1 that seals the strip
/// {-beta/2alpha <= Y <= 0}. When it holds, all good profiles carry a
/// Type II interface.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunnelCertificate {
    /// U-coordinate of P2.
    pub u_p2: f64,
    /// Y-coordinate of P2.
    pub y_p2: f64,
    /// Slope of the upper barrier plane {Y + kV = 1}.
    pub k: f64,
    /// Bound on UV where the orbits cross {Y = 0}: U(P2)/k.
    pub uv_bound: f64,
    /// Cylinder level beta^2/4alpha^2 below which the strip is sealed.
    pub k1: f64,
    /// The trap cylinder argument needs sigma < 2.
    pub sigma_below_two: bool,
    /// uv_bound < k1 together with sigma < 2.
    pub holds: bool,
}

pub fn type2_funnel_certificate(params: &Parameters) -> Result<FunnelCertificate> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let p2 = p2_location(params)?;
    let u_p2 = p2[0].powf((m + p - 2.0) / (m - 1.0));
    let y_p2 = p2[1];
    let k_inv = ((sigma + 1.0) * (m - 1.0) + 2.0 * (p - 1.0)) / (m - 1.0)
        * u_p2.powf((1.0 - p) / (m + p - 2.0));
    let k = 1.0 / k_inv;
    let uv_bound = u_p2 * k_inv;
    let ba = e.beta / e.alpha;
    let k1 = 0.25 * ba * ba;
    let sigma_below_two = sigma < 2.0;
    Ok(FunnelCertificate {
        u_p2,
        y_p2,
        k,
        uv_bound,
        k1,
        sigma_below_two,
        holds: uv_bound < k1 && sigma_below_two,
    })
}

/// Closed form of the UV bound in the funnel certificate. It vanishes at
/// the lower edge of the sigma range, which is what makes the certificate
/// hold there.
pub fn axis_crossing_uv_bound(params: &Parameters) -> Result<f64> {
    params.require_supercritical()?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let g = sigma * (m - 1.0) + 2.0 * (p - 1.0);
    Ok(g * ((sigma + 1.0) * (m - 1.0) + 2.0 * (p - 1.0)) / (2.0 * (sigma + 2.0) * (m + 1.0)))
}

/// The two planes in the barred system (X~, Y~, Z~) that pin the start of
/// the P2 orbit for large sigma, and the Y~ level below which an orbit can
/// no longer return and must escape to Q3.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EscapePlanes {
    /// Z~ = e - d Y~.
    pub d: f64,
    pub e: f64,
    /// X~ = b Y~ + c.
    pub b: f64,
    pub c: f64,
    /// Crossing Y~ = -y_no_return is irreversible.
    pub y_no_return: f64,
}

pub fn escape_planes(params: &Parameters) -> Result<EscapePlanes> {
    params.require_supercritical()?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let g = sigma * (m - 1.0) + 2.0 * (p - 1.0);
    let q = 2.0 * m * m + 5.0 * m + 1.0;
    Ok(EscapePlanes {
        d: 2.0 * m * (m + 1.0) * (m + 1.0) / (m - 1.0),
        e: 2.0 * (m + 1.0) / (m - 1.0),
        b: m * (m - 1.0) / q,
        c: (2.0 * m + 1.0) * (m - 1.0) / (2.0 * m * q),
        y_no_return: (m - 1.0) * (sigma + 2.0) / (2.0 * m * g),
    })
}

/// Membership of a barred-system state in the two start regions
/// (Z~ > e - d Y~, X~ > b Y~ + c).
pub fn above_escape_planes(planes: &EscapePlanes, s4: &Vector3<f64>) -> (bool, bool) {
    (
        s4[2] > planes.e - planes.d * s4[1],
        s4[0] > planes.b * s4[1] + planes.c,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{vector_field, SystemId};

    fn spot() -> Parameters {
        Parameters::new(3.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn decreasing_guarantee_spot_values() {
        let g = decreasing_guarantee(&spot()).unwrap();
        assert!((g.u_min - 0.472147).abs() < 1e-5, "u_min {}", g.u_min);
        assert!((g.v0_max - 1.470836).abs() < 1e-5, "v0_max {}", g.v0_max);
        // v0 = sqrt(xi0)/3 at this spot, so xi0 = 9 v0^2.
        assert!(
            (g.xi0_max - 9.0 * g.v0_max * g.v0_max).abs() < 1e-9,
            "xi0_max {}",
            g.xi0_max
        );
    }

    #[test]
    fn envelope_minimum_is_at_u_min() {
        for sigma in [0.75, 1.0, 2.5, 3.5] {
            let params = Parameters::new(3.0, 0.5, sigma).unwrap();
            let g = decreasing_guarantee(&params).unwrap();
            let h0 = slope_plane_envelope(&params, g.u_min).unwrap();
            assert!((h0 - g.v0_max).abs() < 1e-14);
            let du = 1e-6 * g.u_min;
            let hp = slope_plane_envelope(&params, g.u_min + du).unwrap();
            let hm = slope_plane_envelope(&params, g.u_min - du).unwrap();
            let deriv = (hp - hm) / (2.0 * du);
            assert!(deriv.abs() < 1e-6, "h'(u_min) = {deriv} at sigma {sigma}");
            assert!(slope_plane_envelope(&params, 1.05 * g.u_min).unwrap() > h0);
            assert!(slope_plane_envelope(&params, 0.95 * g.u_min).unwrap() > h0);
        }
    }

    #[test]
    fn flow_vanishes_exactly_on_the_envelope() {
        let params = spot();
        for u in [0.05, 0.3, 1.0, 4.0] {
            let v = slope_plane_envelope(&params, u).unwrap();
            let f = flow_across_half_slope_plane(&params, u, v).unwrap();
            assert!(f.abs() < 1e-14, "residual {f} at U = {u}");
        }
    }

    #[test]
    fn flows_match_the_phase_field() {
        // Every barrier sign is a field component (or derivative of a
        // conserved combination) on the surface.
        let params = spot();
        let e = derive_exponents(&params).unwrap();
        let ba = e.beta / e.alpha;
        for (u, v) in [(0.1, 0.2), (0.8, 1.3), (2.0, 0.05)] {
            let on_axis = vector_field(SystemId::S3, &params, &Vector3::new(u, 0.0, v)).unwrap();
            let f_axis = flow_across_axis_plane(&params, u, v).unwrap();
            assert!((on_axis[1] - f_axis).abs() < 1e-13 * f_axis.abs().max(1.0));

            let y = -0.5 * ba;
            let on_half = vector_field(SystemId::S3, &params, &Vector3::new(u, y, v)).unwrap();
            let f_half = flow_across_half_slope_plane(&params, u, v).unwrap();
            assert!((on_half[1] - f_half).abs() < 1e-13 * f_half.abs().max(1.0));

            let on_pt = vector_field(SystemId::S3, &params, &Vector3::new(u, y, v)).unwrap();
            let d_uv = on_pt[0] * v + u * on_pt[2];
            let f_cyl = flow_across_trap_cylinder(&params, u, y, v).unwrap();
            assert!((d_uv - f_cyl).abs() < 1e-13 * f_cyl.abs().max(1.0));
        }
    }

    #[test]
    fn funnel_certificate_holds_at_sigma_one() {
        let cert = type2_funnel_certificate(&spot()).unwrap();
        assert!((cert.uv_bound - 0.125).abs() < 1e-12);
        assert!((cert.k1 - 6.25 / 36.0).abs() < 1e-12);
        assert!(cert.sigma_below_two);
        assert!(cert.holds);
    }

    #[test]
    fn funnel_certificate_fails_at_sigma_three() {
        let params = Parameters::new(3.0, 0.5, 3.0).unwrap();
        let cert = type2_funnel_certificate(&params).unwrap();
        assert!((cert.uv_bound - 0.875).abs() < 1e-12);
        assert!((cert.k1 - 0.0625).abs() < 1e-12);
        assert!(!cert.holds);
    }

    #[test]
    fn uv_bound_closed_form_matches_definition() {
        for (m, p, sigma) in [(3.0, 0.5, 1.0), (2.2, 0.7, 1.4), (4.0, 0.25, 0.9), (3.0, 0.5, 3.0)]
        {
            let params = Parameters::new(m, p, sigma).unwrap();
            let cert = type2_funnel_certificate(&params).unwrap();
            let closed = axis_crossing_uv_bound(&params).unwrap();
            assert!(
                (cert.uv_bound - closed).abs() < 1e-12 * closed.abs().max(1.0),
                "({m}, {p}, {sigma}): {} vs {closed}",
                cert.uv_bound
            );
        }
    }

    #[test]
    fn uv_bound_vanishes_at_the_lower_sigma_edge() {
        // sigma_lower = 0.5 here; approaching it the bound collapses while
        // k1 stays bounded away from zero, so the certificate always holds
        // near the edge.
        let mut prev = f64::INFINITY;
        for sigma in [0.8, 0.6, 0.52, 0.501] {
            let params = Parameters::new(3.0, 0.5, sigma).unwrap();
            let cert = type2_funnel_certificate(&params).unwrap();
            assert!(cert.uv_bound < prev);
            assert!(cert.holds, "certificate must hold at sigma {sigma}");
            prev = cert.uv_bound;
        }
        assert!(prev < 2e-3);
    }

    #[test]
    fn escape_plane_constants_at_m_three() {
        let planes = escape_planes(&spot()).unwrap();
        assert_eq!(planes.d, 48.0);
        assert_eq!(planes.e, 4.0);
        assert!((planes.b - 3.0 / 17.0).abs() < 1e-15);
        assert!((planes.c - 7.0 / 102.0).abs() < 1e-15);
        assert!((planes.y_no_return - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_plane_passes_through_p2_image() {
        // In barred coordinates Y~(P2) = 1/(m(m+1)) and the plane
        // Z~ = e - d Y~ meets Z~ = 0 exactly there, for every m.
        for (m, p, sigma) in [(3.0, 0.5, 1.0), (2.5, 0.6, 2.0), (4.0, 0.3, 1.5)] {
            let params = Parameters::new(m, p, sigma).unwrap();
            let planes = escape_planes(&params).unwrap();
            let y_bar = 1.0 / (m * (m + 1.0));
            assert!(
                (planes.e - planes.d * y_bar).abs() < 1e-12,
                "plane misses P2 image at m = {m}"
            );
        }
    }

    #[test]
    fn membership_test_uses_both_planes() {
        let planes = escape_planes(&spot()).unwrap();
        let inside = Vector3::new(1.0, 0.0, 5.0);
        assert_eq!(above_escape_planes(&planes, &inside), (true, true));
        let below_z = Vector3::new(1.0, 0.0, 3.0);
        assert_eq!(above_escape_planes(&planes, &below_z), (false, true));
        let below_x = Vector3::new(0.05, 0.0, 5.0);
        assert_eq!(above_escape_planes(&planes, &below_x), (true, false));
    }
}
