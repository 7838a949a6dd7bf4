//! Orbits of the phase systems, profile reconstruction, interface-type
//! fitting, interface-equation verification, and direct integration of the
//! profile equation in the variables (F, G) = (f^m, (f^m)').
//!
//! Orbits are integrated in the autonomous time eta with stop conditions
//! expressed as proximity balls around critical points, coordinate sign
//! changes, plane crossings, and escape thresholds. Profiles live on a
//! xi-grid with value and slope per sample.

use nalgebra::{Vector2, Vector3};
use serde::Serialize;

use crate::critical::{ExpansionKind, LocalExpansion, PointLabel};
use crate::error::Error;
use crate::ode::{integrate_raw, Direction, Event, RawTermination, StepOptions};
use crate::params::{derive_exponents, Exponents, Parameters};
use crate::phase::{phase_to_profile, profile_to_phase, vector_field, PhaseState, ProfilePoint, SystemId};
use crate::Result;

/// Slope tolerance for "vanishing derivative at the axis", relative to
/// `max(1, f(0))`.
pub const AXIS_SLOPE_TOL: f64 = 1e-6;

/// Relative half-width for interface exponent classification.
pub const FIT_CLASS_TOL: f64 = 0.05;

/// Gate for interface-equation verification: the fitted exponent must match
/// the requested type to within this relative error.
pub const VERIFY_EXPONENT_GATE: f64 = 0.25;

/// Acceptance threshold for the interface-equation residual.
pub const INTERFACE_EQ_TOL: f64 = 2e-2;

/// Terminal threshold on F = f^m for the direct route. The (F, G) chart is
/// explicit-stiff near a contact zero (the Jacobian carries F^((1-m)/m)),
/// so the stop is shallow and the zero location is extrapolated from the
/// local contact power.
pub const F_STOP: f64 = 1e-9;

/// Where an integration starts: an explicit phase state or a local profile
/// expansion evaluated at a given xi and pushed through the change of
/// variables.
#[derive(Debug, Clone)]
pub enum Launch {
    State(Vector3<f64>),
    Expansion { expansion: LocalExpansion, xi: f64 },
}

impl Launch {
    pub fn state(&self, system: SystemId, params: &Parameters) -> Result<Vector3<f64>> {
        match self {
            Launch::State(v) => Ok(*v),
            Launch::Expansion { expansion, xi } => {
                let pt = expansion.eval(*xi)?;
                Ok(profile_to_phase(system, params, &pt)?.coords)
            }
        }
    }
}

/// A stop or count condition for phase-space integration.
#[derive(Debug, Clone)]
pub enum StopCondition {
    /// Terminal proximity ball around a critical point. `halfspace = (i,
    /// true)` restricts entry to `y_i < 0`; `require_decreasing` lists
    /// coordinates whose time derivative must be negative at entry. With
    /// `dynamic_factor = Some(c)` the effective radius follows the orbit's
    /// largest excursion (see [`Event::Ball`]).
    EnterPoint {
        label: PointLabel,
        center: Vector3<f64>,
        radius: f64,
        halfspace: Option<(usize, bool)>,
        require_decreasing: Vec<usize>,
        dynamic_factor: Option<f64>,
    },
    /// Coordinate `coord` crossing `threshold` in the given direction.
    SignChange {
        coord: usize,
        threshold: f64,
        direction: Direction,
        terminal: bool,
    },
    /// General plane crossing, counted or terminal.
    Crossing {
        label: String,
        normal: Vector3<f64>,
        offset: f64,
        direction: Direction,
        terminal: bool,
    },
    /// Escape to infinity in one coordinate with the others bounded;
    /// always terminal. `falling = true` means crossing the threshold
    /// downward.
    Escape {
        direction_label: String,
        coord: usize,
        threshold: f64,
        falling: bool,
        bounds: Vec<(usize, f64)>,
    },
}

/// Standard "entered the origin P0" condition: within `radius` of the
/// origin, through the half-space Y < 0, with X and Z decreasing.
pub fn p0_entry(radius: f64) -> StopCondition {
    StopCondition::EnterPoint {
        label: PointLabel::P0,
        center: Vector3::zeros(),
        radius,
        halfspace: Some((1, true)),
        require_decreasing: vec![0, 2],
        dynamic_factor: None,
    }
}

/// Plain terminal ball around an arbitrary point.
pub fn point_ball(label: PointLabel, center: Vector3<f64>, radius: f64) -> StopCondition {
    StopCondition::EnterPoint {
        label,
        center,
        radius,
        halfspace: None,
        require_decreasing: vec![],
        dynamic_factor: None,
    }
}

/// "Entered Q3": Y below `-y_escape` and falling while |X| and |Z| stay
/// below `bound`.
pub fn q3_escape(y_escape: f64, bound: f64) -> StopCondition {
    StopCondition::Escape {
        direction_label: PointLabel::Q3.to_string(),
        coord: 1,
        threshold: -y_escape.abs(),
        falling: true,
        bounds: vec![(0, bound), (2, bound)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TerminationTag {
    EnteredPoint { label: PointLabel, distance: f64 },
    LeftDomain,
    SignChange { coord: String },
    StepLimit,
    Escaped { direction: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingRecord {
    pub label: String,
    pub count: usize,
    /// Localized crossing states as (eta, coords).
    pub hits: Vec<(f64, [f64; 3])>,
}

/// One integrated orbit of a phase system.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub system: SystemId,
    pub launch_state: Vector3<f64>,
    pub samples: Vec<(f64, Vector3<f64>)>,
    pub termination: TerminationTag,
    pub crossings: Vec<CrossingRecord>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Orbit {
    pub fn last_state(&self) -> Vector3<f64> {
        self.samples.last().map(|s| s.1).unwrap_or(self.launch_state)
    }

    pub fn entered(&self, label: PointLabel) -> bool {
        matches!(&self.termination, TerminationTag::EnteredPoint { label: l, .. } if *l == label)
    }
}

fn coord_name(system: SystemId, coord: usize) -> String {
    let names = match system {
        SystemId::S2 => ["x", "y", "z"],
        SystemId::S3 => ["U", "Y", "V"],
        _ => ["X", "Y", "Z"],
    };
    names.get(coord).map(|s| s.to_string()).unwrap_or_else(|| format!("coord{coord}"))
}

fn compile_stop(stop: &StopCondition) -> Event<3> {
    match stop {
        StopCondition::EnterPoint {
            label,
            center,
            radius,
            halfspace,
            require_decreasing,
            dynamic_factor,
        } => Event::Ball {
            label: label.to_string(),
            center: *center,
            radius: *radius,
            dynamic_factor: *dynamic_factor,
            halfspace: *halfspace,
            require_decreasing: require_decreasing.clone(),
            terminal: true,
        },
        StopCondition::SignChange {
            coord,
            threshold,
            direction,
            terminal,
        } => {
            let mut normal = Vector3::zeros();
            normal[*coord] = 1.0;
            Event::Plane {
                label: format!("sign-change:{coord}"),
                normal,
                offset: -threshold,
                direction: *direction,
                terminal: *terminal,
                bounds: vec![],
            }
        }
        StopCondition::Crossing {
            label,
            normal,
            offset,
            direction,
            terminal,
        } => Event::Plane {
            label: label.clone(),
            normal: *normal,
            offset: *offset,
            direction: *direction,
            terminal: *terminal,
            bounds: vec![],
        },
        StopCondition::Escape {
            direction_label,
            coord,
            threshold,
            falling,
            bounds,
        } => {
            let mut normal = Vector3::zeros();
            normal[*coord] = 1.0;
            Event::Plane {
                label: format!("escape:{direction_label}"),
                normal,
                offset: -threshold,
                direction: if *falling { Direction::Falling } else { Direction::Rising },
                terminal: true,
                bounds: bounds.clone(),
            }
        }
    }
}

/// Integrate a phase system; the step limit is reported in the orbit's
/// termination tag rather than as an error.
pub fn try_integrate(
    system: SystemId,
    params: &Parameters,
    launch: &Launch,
    eta_span: (f64, f64),
    stops: &[StopCondition],
    opts: &StepOptions,
) -> Result<Orbit> {
    let y0 = launch.state(system, params)?;
    // Gate the regime up front so an empty orbit cannot mask a misuse.
    vector_field(system, params, &y0)?;
    let events: Vec<Event<3>> = stops.iter().map(compile_stop).collect();
    let run = integrate_raw(
        |_t, y: &Vector3<f64>| vector_field(system, params, y),
        eta_span.0,
        eta_span.1,
        y0,
        &events,
        opts,
    )?;
    let termination = match run.termination {
        RawTermination::EndOfSpan => TerminationTag::LeftDomain,
        RawTermination::StepLimit => TerminationTag::StepLimit,
        // The phase fields are smooth on their domains, so a stall is a
        // genuine failure here, unlike in the direct route.
        RawTermination::Stalled(t) => {
            return Err(Error::IntegrationFailure(format!(
                "step size underflow at eta = {t:.12e} (local error will not contract)"
            )))
        }
        RawTermination::Event(idx) => match &stops[idx] {
            StopCondition::EnterPoint { label, center, .. } => {
                let y_end = run.samples.last().map(|s| s.1).unwrap_or(y0);
                TerminationTag::EnteredPoint {
                    label: label.clone(),
                    distance: (y_end - center).norm(),
                }
            }
            StopCondition::SignChange { coord, .. } => TerminationTag::SignChange {
                coord: coord_name(system, *coord),
            },
            StopCondition::Crossing { .. } => TerminationTag::LeftDomain,
            StopCondition::Escape { direction_label, .. } => TerminationTag::Escaped {
                direction: direction_label.clone(),
            },
        },
    };
    let crossings = stops
        .iter()
        .enumerate()
        .map(|(idx, stop)| CrossingRecord {
            label: compile_stop(stop).label().to_string(),
            count: run.counts[idx],
            hits: run
                .hits
                .iter()
                .filter(|h| h.event_index == idx)
                .map(|h| (h.t, [h.y[0], h.y[1], h.y[2]]))
                .collect(),
        })
        .collect();
    Ok(Orbit {
        system,
        launch_state: y0,
        samples: run.samples,
        termination,
        crossings,
        steps_accepted: run.steps_accepted,
        steps_rejected: run.steps_rejected,
    })
}

/// Integrate a phase system; exhausting the step budget is an error.
pub fn integrate(
    system: SystemId,
    params: &Parameters,
    launch: &Launch,
    eta_span: (f64, f64),
    stops: &[StopCondition],
    opts: &StepOptions,
) -> Result<Orbit> {
    let orbit = try_integrate(system, params, launch, eta_span, stops, opts)?;
    if orbit.termination == TerminationTag::StepLimit {
        return Err(Error::StepLimitExceeded(
            orbit.steps_accepted + orbit.steps_rejected,
        ));
    }
    Ok(orbit)
}

/// Behavior of a profile at the axis xi = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OriginKind {
    /// f(0) > 0 and f'(0) = 0.
    #[serde(rename = "P1property")]
    P1Property,
    /// f(0) = 0 and (f^m)'(0) = 0.
    #[serde(rename = "P2property")]
    P2Property,
    /// f(0) > 0 and f'(0) < 0.
    NegativeSlope,
    /// f(0) > 0 and f'(0) > 0 (arises transiently during shooting).
    PositiveSlope,
    /// f vanishes at some xi1 > 0 with transversal slope: the continuation
    /// would change sign before reaching the axis.
    SignChangeAtZero,
    /// f(0) = 0 with (f^m)'(0) ≠ 0: a root touch, not a parabolic origin.
    RootOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InterfaceType {
    TypeI,
    TypeII,
    Ambiguous,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InterfaceInfo {
    pub xi0: f64,
    pub kind: InterfaceType,
    pub fitted_exponent: f64,
    pub r2: f64,
    /// Fitted amplitude A in f ≈ A (xi0 - xi)^q.
    pub amplitude: f64,
}

/// A reconstructed or directly integrated profile on [0, xi_max].
#[derive(Debug, Clone)]
pub struct Profile {
    pub params: Parameters,
    pub exponents: Exponents,
    pub samples: Vec<ProfilePoint>,
    pub origin_kind: OriginKind,
    pub interface: Option<InterfaceInfo>,
    /// Extrapolated location of the zero when a backward leg drove f into
    /// the vanishing threshold before reaching the axis.
    pub vanish_xi: Option<f64>,
}

impl Profile {
    /// Good profile: admissible axis behavior and a classified interface.
    pub fn is_good(&self) -> bool {
        matches!(self.origin_kind, OriginKind::P1Property | OriginKind::P2Property)
            && matches!(
                self.interface,
                Some(InterfaceInfo { kind: InterfaceType::TypeI | InterfaceType::TypeII, .. })
            )
    }

    pub fn max_f(&self) -> f64 {
        self.samples.iter().map(|s| s.f).fold(0.0, f64::max)
    }

    /// Cubic Hermite interpolation of f at xi, using stored slopes.
    pub fn f_at(&self, xi: f64) -> Option<f64> {
        let s = &self.samples;
        if s.len() < 2 || xi < s[0].xi || xi > s[s.len() - 1].xi {
            return None;
        }
        let idx = match s.binary_search_by(|pt| pt.xi.partial_cmp(&xi).unwrap()) {
            Ok(i) => return Some(s[i].f),
            Err(i) => i,
        };
        let (a, b) = (&s[idx - 1], &s[idx]);
        let h = b.xi - a.xi;
        let t = (xi - a.xi) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Some(h00 * a.f + h10 * h * a.df + h01 * b.f + h11 * h * b.df)
    }
}

/// Estimate the contact power from the last two samples of a vanishing
/// tail: for f = A s^q one has d ln|f'| / d ln f = (q-1)/q.
fn tail_exponent_guess(a: &ProfilePoint, b: &ProfilePoint) -> f64 {
    if !(a.f > 0.0 && b.f > 0.0 && a.df < 0.0 && b.df < 0.0) || a.f == b.f {
        return 1.0;
    }
    let slope = ((b.df.abs()).ln() - (a.df.abs()).ln()) / (b.f.ln() - a.f.ln());
    let q = 1.0 / (1.0 - slope);
    if q.is_finite() && q > 0.05 && q < 50.0 {
        q
    } else {
        1.0
    }
}

/// Unweighted least squares of y against x over pre-logged pairs;
/// returns (intercept, slope, r2, sse).
fn loglog_fit(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return (0.0, 0.0, 0.0, f64::INFINITY);
    }
    let q = (n * sxy - sx * sy) / det;
    let lna = (sy - q * sx) / n;
    let ss_tot = syy - sy * sy / n;
    let mut sse = 0.0;
    for &(x, y) in points {
        let r = y - (lna + q * x);
        sse += r * r;
    }
    let r2 = if ss_tot > 0.0 { 1.0 - sse / ss_tot } else { 1.0 };
    (lna, q, r2, sse)
}

/// Power fit of a vanishing tail over gaps s = xi0 - xi: least squares of
/// ln f = ln A + q ln s + b1 u + b2 u^2 with u = s / s_top. The polynomial
/// terms soak up the regular part of the contact law, which otherwise biases
/// the exponent when the orbit cannot be sampled deep into the tail; the
/// intercept is still the s -> 0 amplitude. Correction order backs off with
/// the window size. Returns (ln A, q, r2, sse).
fn tail_power_fit(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let n = points.len();
    let order = if n >= 16 {
        2
    } else if n >= 10 {
        1
    } else {
        0
    };
    let s_top = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if !(s_top > 0.0) {
        return (0.0, 0.0, 0.0, f64::INFINITY);
    }
    let cols = 2 + order;
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, cols);
    let mut y = nalgebra::DVector::<f64>::zeros(n);
    for (i, &(s, f)) in points.iter().enumerate() {
        let u = s / s_top;
        a[(i, 0)] = 1.0;
        a[(i, 1)] = s.ln();
        if order >= 1 {
            a[(i, 2)] = u;
        }
        if order >= 2 {
            a[(i, 3)] = u * u;
        }
        y[i] = f.ln();
    }
    let coeffs = match (a.transpose() * &a).cholesky() {
        Some(c) => c.solve(&(a.transpose() * &y)),
        None => return (0.0, 0.0, 0.0, f64::INFINITY),
    };
    let resid = &a * &coeffs - &y;
    let sse = resid.norm_squared();
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - sse / ss_tot } else { 1.0 };
    (coeffs[0], coeffs[1], r2, sse)
}

/// Tail window for a candidate interface position: samples with
/// 0 < xi0 - xi <= 10 * (xi0 - xi_last), as (gap, f) pairs.
fn tail_window(samples: &[ProfilePoint], xi0: f64) -> Vec<(f64, f64)> {
    let xi_last = samples.last().map(|s| s.xi).unwrap_or(0.0);
    let s_min = xi0 - xi_last;
    if !(s_min > 0.0) {
        return vec![];
    }
    samples
        .iter()
        .rev()
        .take_while(|pt| xi0 - pt.xi <= 10.0 * s_min)
        .filter(|pt| pt.f > 0.0 && xi0 - pt.xi > 0.0)
        .map(|pt| (xi0 - pt.xi, pt.f))
        .collect()
}

pub fn classify_exponent(params: &Parameters, q: f64) -> InterfaceType {
    let q1 = 1.0 / (params.m - 1.0);
    let q2 = 1.0 / (1.0 - params.p);
    let near1 = (q / q1 - 1.0).abs() <= FIT_CLASS_TOL;
    let near2 = (q / q2 - 1.0).abs() <= FIT_CLASS_TOL;
    match (near1, near2) {
        (true, false) => InterfaceType::TypeI,
        (false, true) => InterfaceType::TypeII,
        _ => InterfaceType::Ambiguous,
    }
}

/// Fit the interface position and contact power of a vanishing right tail
/// by least squares in log-log coordinates over the last decade of
/// approach. Returns `(xi0, exponent, r2)`.
pub fn fit_interface_exponent(profile: &Profile) -> Result<(f64, f64, f64)> {
    let samples = &profile.samples;
    let n = samples.len();
    if n < 8 {
        return Err(Error::NoInterface("too few samples to fit a tail".into()));
    }
    let last = &samples[n - 1];
    let fmax = profile.max_f();
    if !(last.f < 0.05 * fmax) {
        return Err(Error::NoInterface(format!(
            "profile does not approach zero at its right endpoint (f_end = {:.3e}, max f = {:.3e})",
            last.f, fmax
        )));
    }
    if !(last.df < 0.0) {
        return Err(Error::NoInterface(
            "profile is not decreasing at its right endpoint".into(),
        ));
    }
    // Seed: stored interface position, else slope extrapolation.
    let q_hat = tail_exponent_guess(&samples[n - 2], last);
    let seed_gap = match &profile.interface {
        Some(info) if info.xi0 > last.xi => info.xi0 - last.xi,
        _ => q_hat * last.f / last.df.abs(),
    };
    if !(seed_gap.is_finite() && seed_gap > 0.0) {
        return Err(Error::NoInterface("tail extrapolation failed".into()));
    }
    // 1D search over the interface position: for each candidate the fit is
    // linear, so scan log-spaced candidates and keep the smallest residual.
    let mut best: Option<(f64, f64, f64, f64)> = None; // (sse, xi0, q, r2)
    let mut lo = seed_gap * 0.25;
    let mut hi = seed_gap * 16.0;
    for _round in 0..4 {
        let steps = 96;
        for i in 0..=steps {
            let gap = lo * (hi / lo).powf(i as f64 / steps as f64);
            let xi0 = last.xi + gap;
            let window = tail_window(samples, xi0);
            if window.len() < 6 {
                continue;
            }
            let (lna, q, r2, sse) = tail_power_fit(&window);
            let score = sse / window.len() as f64;
            if q > 0.0 && best.as_ref().map(|b| score < b.0).unwrap_or(true) {
                best = Some((score, xi0, q, r2));
                let _ = lna;
            }
        }
        if let Some((_, xi0, _, _)) = best {
            let gap = xi0 - last.xi;
            lo = gap * 0.7;
            hi = gap * 1.4;
        } else {
            break;
        }
    }
    let (_, xi0, q, r2) =
        best.ok_or_else(|| Error::NoInterface("no tail window admits a power-law fit".into()))?;
    Ok((xi0, q, r2))
}

fn fit_interface_info(profile: &Profile) -> Result<InterfaceInfo> {
    let (xi0, q, r2) = fit_interface_exponent(profile)?;
    let window = tail_window(&profile.samples, xi0);
    let (lna, _, _, _) = tail_power_fit(&window);
    Ok(InterfaceInfo {
        xi0,
        kind: classify_exponent(&profile.params, q),
        fitted_exponent: q,
        r2,
        amplitude: lna.exp(),
    })
}

/// Two sides of the interface-speed equation at a probe time, with their
/// relative mismatch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InterfaceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
    /// Time to blow-up at which the comparison is made.
    pub probe: f64,
}

/// Check the interface speed of the self-similar solution built from the
/// profile: s(t) = xi0 (T-t)^(-beta), against the flux limit of the
/// matching contact power. Type I compares s' with -v_x for the pressure
/// v = m u^(m-1)/(m-1); Type II compares s' with -s^sigma / w_x for
/// w = u^(1-p)/(1-p). The one-sided limits come from a constrained
/// amplitude fit with the type's theoretical exponent.
pub fn verify_interface_equation(profile: &Profile) -> Result<InterfaceCheck> {
    let kind = profile
        .interface
        .as_ref()
        .ok_or_else(|| Error::NoInterface("profile has no classified interface".into()))?
        .kind;
    verify_interface_equation_as(profile, kind)
}

/// Same as [`verify_interface_equation`] but against an explicit type, so a
/// misclassification can be demonstrated.
pub fn verify_interface_equation_as(profile: &Profile, kind: InterfaceType) -> Result<InterfaceCheck> {
    let info = profile
        .interface
        .as_ref()
        .ok_or_else(|| Error::NoInterface("profile has no interface data".into()))?;
    let p = &profile.params;
    let e = &profile.exponents;
    let (alpha, beta) = (e.alpha, e.beta);
    let q_theory = match kind {
        InterfaceType::TypeI => 1.0 / (p.m - 1.0),
        InterfaceType::TypeII => 1.0 / (1.0 - p.p),
        InterfaceType::Ambiguous => {
            return Err(Error::WrongInterfaceType(
                "an ambiguous interface admits no speed equation".into(),
            ))
        }
    };
    // The fitted exponent must actually match the requested contact power;
    // otherwise the one-sided limit below is 0 or infinite.
    let gate = (info.fitted_exponent / q_theory - 1.0).abs();
    if gate > VERIFY_EXPONENT_GATE {
        return Err(Error::WrongInterfaceType(format!(
            "fitted contact power {:.4} is incompatible with exponent {:.4} (limit degenerates)",
            info.fitted_exponent, q_theory
        )));
    }
    // Constrained amplitude: ln A = mean(ln f - q ln s) over the tail.
    let window = tail_window(&profile.samples, info.xi0);
    if window.len() < 4 {
        return Err(Error::NoInterface("tail window too thin for amplitude".into()));
    }
    let lna =
        window.iter().map(|&(s, f)| f.ln() - q_theory * s.ln()).sum::<f64>() / window.len() as f64;
    let a = lna.exp();
    let tau: f64 = 0.5;
    let lhs = info.xi0 * beta * tau.powf(-beta - 1.0);
    let rhs = match kind {
        InterfaceType::TypeI => {
            (p.m / (p.m - 1.0))
                * a.powf(p.m - 1.0)
                * tau.powf(-alpha * (p.m - 1.0) + beta)
        }
        InterfaceType::TypeII => {
            info.xi0.powf(p.sigma) * (1.0 - p.p) * a.powf(p.p - 1.0)
                * tau.powf(-beta * p.sigma + alpha * (1.0 - p.p) - beta)
        }
        InterfaceType::Ambiguous => unreachable!(),
    };
    let rel_error = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
    Ok(InterfaceCheck {
        lhs,
        rhs,
        rel_error,
        probe: tau,
    })
}

/// Reconstruct a profile from a phase orbit by inverting the change of
/// variables sample by sample.
pub fn reconstruct_profile(orbit: &Orbit, params: &Parameters) -> Result<Profile> {
    let total = orbit.samples.len();
    let mut pts: Vec<ProfilePoint> = Vec::with_capacity(total);
    for (_, y) in &orbit.samples {
        let state = PhaseState {
            system: orbit.system,
            coords: *y,
        };
        if let Ok(pt) = phase_to_profile(params, &state) {
            if pt.xi.is_finite() && pt.f.is_finite() && pt.df.is_finite() && pt.f > 0.0 {
                pts.push(pt);
            }
        }
    }
    if pts.len() < 8 || pts.len() * 2 < total {
        return Err(Error::NonInvertibleOrbit);
    }
    pts.sort_by(|a, b| a.xi.partial_cmp(&b.xi).unwrap());
    pts.dedup_by(|a, b| (a.xi - b.xi).abs() < 1e-14 * b.xi.abs().max(1e-300));

    let exponents = derive_exponents(params)?;
    let origin_kind = classify_origin_end(params, &pts);

    let mut profile = Profile {
        params: *params,
        exponents,
        samples: pts,
        origin_kind,
        interface: None,
        vanish_xi: None,
    };
    // An interface is expected when the orbit terminated at a contact
    // point (P0 through Y < 0, P1, or a point on a critical line).
    let expects_interface = matches!(
        &orbit.termination,
        TerminationTag::EnteredPoint { label, .. }
            if matches!(label, PointLabel::P0 | PointLabel::P1 | PointLabel::PXi0 { .. } | PointLabel::PV0 { .. })
    );
    if expects_interface {
        profile.interface = Some(fit_interface_info(&profile)?);
    } else if let Ok(info) = fit_interface_info(&profile) {
        profile.interface = Some(info);
    }
    Ok(profile)
}

/// Classify the axis end from the smallest-xi samples.
fn classify_origin_end(params: &Parameters, pts: &[ProfilePoint]) -> OriginKind {
    let first = &pts[0];
    let xi_last = pts.last().unwrap().xi;
    if first.xi > 0.02 * xi_last {
        // The orbit never approached the axis; report the boundary sample's
        // pointwise behavior.
        return slope_kind(first.f, first.df);
    }
    // Power-law probe on the first decade of xi.
    let window: Vec<(f64, f64)> = pts
        .iter()
        .take_while(|pt| pt.xi <= 10.0 * first.xi)
        .filter(|pt| pt.f > 0.0 && pt.xi > 0.0)
        .map(|pt| (pt.xi.ln(), pt.f.ln()))
        .collect();
    if window.len() < 4 {
        return slope_kind(first.f, first.df);
    }
    let (_, q, _, _) = loglog_fit(&window);
    if q.abs() <= FIT_CLASS_TOL {
        return slope_kind(first.f, first.df);
    }
    if q > 0.0 {
        let mq = params.m * q;
        if mq > 1.0 + FIT_CLASS_TOL {
            OriginKind::P2Property
        } else {
            OriginKind::RootOrigin
        }
    } else {
        // f grows toward the axis: treat as a positive value with the
        // sampled slope.
        slope_kind(first.f, first.df)
    }
}

fn slope_kind(f0: f64, df0: f64) -> OriginKind {
    let tol = AXIS_SLOPE_TOL * f0.max(1.0);
    if df0.abs() <= tol {
        OriginKind::P1Property
    } else if df0 < 0.0 {
        OriginKind::NegativeSlope
    } else {
        OriginKind::PositiveSlope
    }
}

/// Starting data for the direct route.
#[derive(Debug, Clone)]
pub enum DirectStart {
    Point(ProfilePoint),
    Expansion { expansion: LocalExpansion, xi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectDirection {
    Forward,
    Backward,
    /// From an interior point, integrate both toward the axis and outward.
    Both,
}

fn direct_field(params: &Parameters) -> Result<impl Fn(f64, &Vector2<f64>) -> Result<Vector2<f64>>> {
    let e = derive_exponents(params)?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let (alpha, beta) = (e.alpha, e.beta);
    Ok(move |xi: f64, y: &Vector2<f64>| {
        let (ff, g) = (y[0], y[1]);
        if !(ff > 0.0) {
            return Err(Error::NegativeF { xi1: xi });
        }
        // Stage points may round a hair past the axis on backward runs.
        let xi = if xi < 0.0 && xi > -1e-12 { 0.0 } else { xi };
        if xi < 0.0 {
            return Err(Error::DegenerateInput(format!("xi = {xi} < 0")));
        }
        let dg = alpha * ff.powf(1.0 / m)
            - (beta / m) * xi * ff.powf((1.0 - m) / m) * g
            - xi.powf(sigma) * ff.powf(p / m);
        Ok(Vector2::new(g, dg))
    })
}

fn fg_of(params: &Parameters, pt: &ProfilePoint) -> Result<Vector2<f64>> {
    if !(pt.f > 0.0) {
        return Err(Error::NegativeF { xi1: pt.xi });
    }
    let m = params.m;
    Ok(Vector2::new(
        pt.f.powf(m),
        m * pt.f.powf(m - 1.0) * pt.df,
    ))
}

fn fg_to_point(params: &Parameters, xi: f64, y: &Vector2<f64>) -> Option<ProfilePoint> {
    let m = params.m;
    let (ff, g) = (y[0], y[1]);
    if !(ff > 0.0) {
        return None;
    }
    let f = ff.powf(1.0 / m);
    let df = g / (m * ff.powf((m - 1.0) / m));
    if f.is_finite() && df.is_finite() {
        Some(ProfilePoint { xi, f, df })
    } else {
        None
    }
}

struct DirectLeg {
    points: Vec<ProfilePoint>,
    hit_zero: Option<(f64, f64)>, // (xi at threshold, extrapolated xi of the zero)
    step_limited: bool,
}

fn run_direct_leg(
    params: &Parameters,
    start_xi: f64,
    start_fg: Vector2<f64>,
    xi_end: f64,
    opts: &StepOptions,
) -> Result<DirectLeg> {
    let field = direct_field(params)?;
    // The vanishing threshold only fires on falling crossings, so launches
    // that start below it (tiny contacts, deep tails) climb out unharmed.
    let events = vec![Event::Plane {
        label: "f-vanishes".into(),
        normal: Vector2::new(1.0, 0.0),
        offset: -F_STOP,
        direction: Direction::Falling,
        terminal: true,
        bounds: vec![],
    }];
    let run = integrate_raw(field, start_xi, xi_end, start_fg, &events, opts)?;
    let mut points: Vec<ProfilePoint> = run
        .samples
        .iter()
        .filter_map(|(xi, y)| fg_to_point(params, *xi, y))
        .collect();
    let mut hit_zero = None;
    if matches!(run.termination, RawTermination::Event(0)) {
        if let Some(last) = points.last().copied() {
            let prev = points.get(points.len().saturating_sub(2)).copied().unwrap_or(last);
            let q_hat = tail_exponent_guess(&prev, &last);
            let gap = if last.df.abs() > 0.0 {
                q_hat * last.f / last.df.abs()
            } else {
                0.0
            };
            let toward_axis = xi_end < start_xi;
            let xi_zero = if toward_axis { last.xi - gap } else { last.xi + gap };
            hit_zero = Some((last.xi, xi_zero));
        }
    } else if let RawTermination::Stalled(t_stall) = run.termination {
        // A transversal zero with a steep F puts the vanishing threshold
        // within a few ulps of the zero in xi, so the stepper stalls before
        // the threshold plane can fire. F = 0 is the field's only singular
        // locus: a stall whose linear extrapolation F/|G| lands within ulp
        // resolution of the wall is the zero itself.
        let at_zero = run.samples.last().map_or(false, |(_, y)| {
            let toward_axis = xi_end < start_xi;
            let falling = if toward_axis { y[1] > 0.0 } else { y[1] < 0.0 };
            falling && y[0] <= 1e-10 * t_stall.abs().max(1.0) * y[1].abs()
        });
        if at_zero {
            if let Some(last) = points.last().copied() {
                hit_zero = Some((last.xi, t_stall));
            }
        } else {
            return Err(Error::IntegrationFailure(format!(
                "step size underflow at xi = {t_stall:.12e} away from the vanishing locus"
            )));
        }
    }
    points.retain(|pt| pt.f.is_finite());
    Ok(DirectLeg {
        points,
        hit_zero,
        step_limited: matches!(run.termination, RawTermination::StepLimit),
    })
}

/// Step control used by the direct route unless a caller overrides it.
pub fn default_direct_opts() -> StepOptions {
    // Mostly relative control: F spans many decades along a vanishing tail
    // and a large absolute floor would freeze its accuracy. The floor sits
    // well below F_STOP so the stop threshold itself is resolved.
    StepOptions {
        tol: crate::ode::Tolerances {
            rtol: 1e-9,
            atol: 1e-18,
        },
        norm_cap: 1e30,
        max_steps: 200_000,
        ..StepOptions::default()
    }
}

/// Integrate the profile equation directly in (F, G) = (f^m, (f^m)').
///
/// From an interior point the default is to integrate both toward the axis
/// and outward, producing samples on [0 or the sign change, xi_max]. From a
/// local expansion the direction is dictated by which end the expansion
/// describes: origin expansions integrate forward, interface expansions
/// backward.
pub fn integrate_ssode_direct(
    start: &DirectStart,
    params: &Parameters,
    direction: DirectDirection,
) -> Result<Profile> {
    integrate_ssode_direct_opts(start, params, direction, &default_direct_opts())
}

pub fn integrate_ssode_direct_opts(
    start: &DirectStart,
    params: &Parameters,
    direction: DirectDirection,
    opts: &StepOptions,
) -> Result<Profile> {
    params.require_supercritical().or_else(|_| params.require_subcritical())?;
    let exponents = derive_exponents(params)?;

    // Resolve the start point, the legs to run, and any endpoint knowledge
    // contributed by an expansion.
    let mut origin_hint: Option<OriginKind> = None;
    let mut interface_hint: Option<(f64, InterfaceType)> = None;
    let mut prepend: Vec<ProfilePoint> = Vec::new();
    let (pt0, legs): (ProfilePoint, (bool, bool)) = match start {
        DirectStart::Point(pt) => {
            let legs = match direction {
                DirectDirection::Forward => (false, true),
                DirectDirection::Backward => (true, false),
                DirectDirection::Both => (true, true),
            };
            (*pt, legs)
        }
        DirectStart::Expansion { expansion, xi } => {
            let pt = expansion.eval(*xi)?;
            let at_interface = expansion.interface_xi0().is_some();
            match (&direction, at_interface) {
                (DirectDirection::Backward | DirectDirection::Both, false) => {
                    return Err(Error::InvalidParameter(
                        "an origin expansion only launches forward".into(),
                    ))
                }
                (DirectDirection::Forward | DirectDirection::Both, true) => {
                    return Err(Error::InvalidParameter(
                        "an interface expansion only launches backward".into(),
                    ))
                }
                _ => {}
            }
            if let Some(xi0) = expansion.interface_xi0() {
                let kind = match expansion.kind {
                    ExpansionKind::TypeIContact { .. } => InterfaceType::TypeI,
                    _ => InterfaceType::TypeII,
                };
                interface_hint = Some((xi0, kind));
                // Fill the contact side with exact expansion samples so tail
                // fits have data on the asymptotic decade.
                let s_launch = xi0 - *xi;
                for i in 1..=12 {
                    let s = s_launch * (0.01f64).powf(i as f64 / 12.0);
                    if let Ok(p) = expansion.eval(xi0 - s) {
                        prepend.push(p);
                    }
                }
            } else {
                origin_hint = Some(match expansion.kind {
                    ExpansionKind::OriginTail { .. } | ExpansionKind::OriginP2 => {
                        OriginKind::P2Property
                    }
                    ExpansionKind::RootOrigin { .. } => OriginKind::RootOrigin,
                    ExpansionKind::ConstantOrigin { a, b } => {
                        if b.abs() <= AXIS_SLOPE_TOL * a.max(1.0) {
                            OriginKind::P1Property
                        } else if b < 0.0 {
                            OriginKind::NegativeSlope
                        } else {
                            OriginKind::PositiveSlope
                        }
                    }
                    _ => unreachable!("interface kinds handled above"),
                });
                for i in (1..=12).rev() {
                    let xq = *xi * (0.01f64).powf(i as f64 / 12.0);
                    if let Ok(p) = expansion.eval(xq) {
                        prepend.push(p);
                    }
                }
                let at_interface_leg = matches!(direction, DirectDirection::Backward);
                debug_assert!(!at_interface_leg);
            }
            let legs = if at_interface { (true, false) } else { (false, true) };
            (pt, legs)
        }
    };
    let fg0 = fg_of(params, &pt0)?;
    let (run_backward, run_forward) = legs;

    let mut origin_kind = origin_hint;
    let mut sign_change_xi: Option<f64> = None;
    let mut back_points: Vec<ProfilePoint> = Vec::new();
    if run_backward {
        if !(pt0.xi > 0.0) {
            return Err(Error::InvalidParameter(
                "backward integration needs xi > 0 at the start".into(),
            ));
        }
        let leg = run_direct_leg(params, pt0.xi, fg0, 0.0, opts)?;
        if leg.step_limited {
            return Err(Error::StepLimitExceeded(opts.max_steps));
        }
        back_points = leg.points;
        back_points.reverse();
        if let Some((_, xi_zero)) = leg.hit_zero {
            origin_kind = Some(OriginKind::SignChangeAtZero);
            sign_change_xi = Some(xi_zero.max(0.0));
        } else if origin_kind.is_none() {
            let first = back_points.first().copied().unwrap_or(pt0);
            origin_kind = Some(slope_kind(first.f, first.df));
        }
    }

    let mut forward_points: Vec<ProfilePoint> = Vec::new();
    let mut forward_zero: Option<(f64, f64)> = None;
    if run_forward {
        let xi_end = pt0.xi + 1e3;
        let leg = run_direct_leg(params, pt0.xi, fg0, xi_end, opts)?;
        if leg.step_limited {
            return Err(Error::StepLimitExceeded(opts.max_steps));
        }
        forward_points = leg.points;
        forward_zero = leg.hit_zero;
    }

    // Assemble: expansion prefill, backward leg (reversed), forward leg.
    let mut samples: Vec<ProfilePoint> = Vec::new();
    samples.extend(prepend);
    samples.extend(back_points);
    if run_forward {
        if samples.last().map(|s| s.xi) == Some(pt0.xi) && !forward_points.is_empty() {
            samples.extend(forward_points.into_iter().skip(1));
        } else {
            samples.extend(forward_points);
        }
    }
    samples.sort_by(|a, b| a.xi.partial_cmp(&b.xi).unwrap());
    samples.dedup_by(|a, b| (a.xi - b.xi).abs() < 1e-15 * b.xi.abs().max(1e-300));
    if samples.len() < 2 {
        return Err(Error::IntegrationFailure(
            "direct integration produced no usable samples".into(),
        ));
    }

    let origin_kind = origin_kind.unwrap_or_else(|| {
        let first = samples.first().unwrap();
        slope_kind(first.f, first.df)
    });
    let mut profile = Profile {
        params: *params,
        exponents,
        samples,
        origin_kind,
        interface: interface_hint.map(|(xi0, kind)| InterfaceInfo {
            xi0,
            kind,
            fitted_exponent: match kind {
                InterfaceType::TypeI => 1.0 / (params.m - 1.0),
                _ => 1.0 / (1.0 - params.p),
            },
            r2: 1.0,
            amplitude: f64::NAN,
        }),
        vanish_xi: sign_change_xi,
    };
    // A forward leg that drove f to zero marks an interface candidate;
    // replace hints with a fit over the integrated tail.
    if forward_zero.is_some() || profile.interface.is_some() {
        if let Ok(info) = fit_interface_info(&profile) {
            profile.interface = Some(info);
        }
    }
    Ok(profile)
}
