//! Constructive arguments as algorithms: backward shooting for good Type I
//! profiles, endpoint classification of the distinguished P2 orbit, sigma
//! sweeps with barrier bookkeeping, sampled fans of orbits out of P0, and
//! the subcritical non-existence probe.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::barriers::{
    decreasing_guarantee, escape_planes, type2_funnel_certificate, DecreasingGuarantee,
    EscapePlanes, FunnelCertificate,
};
use crate::critical::{
    enumerate_infinity, linearize, p1_location, p2_location, p2_exit_direction, v0_of_xi0,
    CriticalPointReport, ExpansionKind, Interpretation, LocalExpansion, PointLabel,
};
use crate::error::Error;
use crate::ode::{Direction, StepOptions};
use crate::params::{derive_exponents, Parameters};
use crate::phase::{profile_to_phase, s1_to_s3, PhaseState, ProfilePoint, SystemId};
use crate::profile::{
    default_direct_opts, integrate_ssode_direct_opts, p0_entry, point_ball, q3_escape,
    reconstruct_profile, try_integrate, DirectDirection, DirectStart, InterfaceInfo, Launch,
    OriginKind, Profile, StopCondition, TerminationTag,
};
use crate::Result;

/// Absolute bisection width at which the interface search stops.
pub const BISECT_WIDTH: f64 = 1e-8;

/// Relative backoff of the launch point from the interface location.
const LAUNCH_BACKOFF: f64 = 1e-6;

/// Time span, entry radii, and escape thresholds for phase-plane orbit runs.
/// The longest phase stretch is the final approach to P0, which is algebraic
/// and needs time of order the reciprocal of the entry radius.
const ORBIT_SPAN: f64 = 1e8;
const P0_RADIUS: f64 = 1e-6;
const P1_RADIUS: f64 = 1e-4;
const ESCAPE_Y: f64 = 1e3;
const ESCAPE_BOUND: f64 = 1e6;

/// Step budget for a single orbit classification. Near the endpoint flip the
/// orbit lingers at P1, so refinement runs get a larger budget.
const ORBIT_STEPS: usize = 500_000;
const REFINE_STEPS: usize = 2_000_000;

/// Width at which the sigma-star refinement stops.
pub const SIGMA_STAR_WIDTH: f64 = 1e-3;

fn shoot_opts() -> StepOptions {
    // A deep decreasing shot grows F = f^m to enormous values at the axis;
    // that growth is cheap to integrate and not a failure, so the blow-up
    // guard sits far above any value such a shot reaches.
    StepOptions {
        norm_cap: 1e200,
        ..default_direct_opts()
    }
}

// ---------------------------------------------------------------------------
// Backward shooting.

/// What a backward shot from an interface location did at the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ShootOutcome {
    /// Reached xi = 0 with f > 0 and a strictly negative slope.
    DecreasingToAxis { f0: f64, df0: f64 },
    /// f vanished transversally at xi1 before reaching the axis.
    BackwardSignChange { xi1: f64 },
    /// Reached xi = 0 with f > 0 and |f'(0)| inside the slope tolerance.
    GoodProfile { f0: f64, df0: f64 },
    /// Reached xi = 0 with f > 0 and a strictly positive slope; sits on the
    /// far side of the good profile together with the sign changes.
    RisingAtAxis { f0: f64, df0: f64 },
}

impl ShootOutcome {
    /// Position along the small-to-large interface ordering; used to audit
    /// outcome monotonicity on a shot grid.
    fn rank(&self) -> u8 {
        match self {
            ShootOutcome::DecreasingToAxis { .. } => 0,
            ShootOutcome::GoodProfile { .. } => 1,
            ShootOutcome::RisingAtAxis { .. } => 2,
            ShootOutcome::BackwardSignChange { .. } => 3,
        }
    }
}

/// One backward shot.
#[derive(Debug, Clone, Serialize)]
pub struct ShootResult {
    pub xi0: f64,
    /// Third phase coordinate of the matching interface critical point.
    pub v0: f64,
    pub outcome: ShootOutcome,
    #[serde(skip)]
    pub profile: Profile,
}

/// Launch the Type I interface expansion just inside `xi0` and integrate the
/// profile equation backward to the axis.
pub fn shoot_backward(xi0: f64, params: &Parameters) -> Result<ShootResult> {
    shoot_backward_opts(xi0, params, &shoot_opts())
}

pub fn shoot_backward_opts(
    xi0: f64,
    params: &Parameters,
    opts: &StepOptions,
) -> Result<ShootResult> {
    params.require_supercritical()?;
    if !(xi0 > 0.0 && xi0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "interface location must be positive and finite, got {xi0}"
        )));
    }
    let v0 = v0_of_xi0(xi0, params)?;
    let expansion = LocalExpansion::new(ExpansionKind::TypeIContact { xi0 }, params)?;
    let launch_xi = xi0 * (1.0 - LAUNCH_BACKOFF);
    let start = DirectStart::Expansion {
        expansion,
        xi: launch_xi,
    };
    let profile = integrate_ssode_direct_opts(&start, params, DirectDirection::Backward, opts)?;
    let outcome = classify_shot(&profile);
    Ok(ShootResult {
        xi0,
        v0,
        outcome,
        profile,
    })
}

fn classify_shot(profile: &Profile) -> ShootOutcome {
    let first = profile.samples[0];
    match profile.origin_kind {
        OriginKind::SignChangeAtZero => ShootOutcome::BackwardSignChange {
            xi1: profile.vanish_xi.unwrap_or(first.xi),
        },
        OriginKind::P1Property => ShootOutcome::GoodProfile {
            f0: first.f,
            df0: first.df,
        },
        OriginKind::NegativeSlope => ShootOutcome::DecreasingToAxis {
            f0: first.f,
            df0: first.df,
        },
        OriginKind::PositiveSlope => ShootOutcome::RisingAtAxis {
            f0: first.f,
            df0: first.df,
        },
        other => unreachable!("a backward leg cannot classify the origin as {other:?}"),
    }
}

/// Audit a grid of shots (sorted by xi0) for the expected outcome ordering
/// decreasing -> good -> rising -> sign change. Violations are returned as
/// findings rather than suppressed: openness of the outer sets is proven,
/// global monotonicity is not.
pub fn outcome_ordering_findings(shots: &[ShootResult]) -> Vec<String> {
    let mut findings = Vec::new();
    for w in shots.windows(2) {
        if w[0].xi0 > w[1].xi0 {
            findings.push(format!(
                "grid not sorted: xi0 = {} precedes {}",
                w[0].xi0, w[1].xi0
            ));
        }
        if w[0].outcome.rank() > w[1].outcome.rank() {
            findings.push(format!(
                "ordering violated between xi0 = {} ({:?}) and xi0 = {} ({:?})",
                w[0].xi0, w[0].outcome, w[1].xi0, w[1].outcome
            ));
        }
    }
    findings
}

// ---------------------------------------------------------------------------
// Bracketing and bisection.

/// Produce a shooting bracket from the decreasing-side guarantee: the low
/// end sits safely inside the certified decreasing range, the high end is
/// found by doubling until the shot changes sign.
pub fn auto_bracket(params: &Parameters) -> Result<(f64, f64)> {
    let guard = decreasing_guarantee(params)?;
    let lo = 0.9 * guard.xi0_max;
    match shoot_backward(lo, params)?.outcome {
        ShootOutcome::DecreasingToAxis { .. } => {}
        other => {
            return Err(Error::BracketInvalid(format!(
                "certified-decreasing location xi0 = {lo} produced {other:?}"
            )))
        }
    }
    let mut hi = 2.0 * lo;
    for _ in 0..40 {
        match shoot_backward(hi, params)?.outcome {
            ShootOutcome::DecreasingToAxis { .. } => hi *= 2.0,
            _ => return Ok((lo, hi)),
        }
    }
    Err(Error::BracketInvalid(format!(
        "no sign change found while doubling up to xi0 = {hi}"
    )))
}

/// Bisect a (decreasing, sign-changing) bracket down to the good profile.
///
/// Stops early when an iterate lands inside the slope tolerance: the
/// boundary point is the target, not the bracket width.
pub fn find_good_type1(params: &Parameters, bracket: (f64, f64)) -> Result<(f64, Profile)> {
    find_good_type1_opts(params, bracket, &shoot_opts())
}

pub fn find_good_type1_opts(
    params: &Parameters,
    bracket: (f64, f64),
    opts: &StepOptions,
) -> Result<(f64, Profile)> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::BracketInvalid(format!(
            "need 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let lo_shot = shoot_backward_opts(lo, params, opts)?;
    match lo_shot.outcome {
        ShootOutcome::GoodProfile { .. } => return Ok((lo, lo_shot.profile)),
        ShootOutcome::DecreasingToAxis { .. } => {}
        other => {
            return Err(Error::BracketInvalid(format!(
                "low end xi0 = {lo} produced {other:?}, expected a decreasing shot"
            )))
        }
    }
    let hi_shot = shoot_backward_opts(hi, params, opts)?;
    match hi_shot.outcome {
        ShootOutcome::GoodProfile { .. } => return Ok((hi, hi_shot.profile)),
        ShootOutcome::BackwardSignChange { .. } | ShootOutcome::RisingAtAxis { .. } => {}
        ShootOutcome::DecreasingToAxis { .. } => {
            return Err(Error::BracketInvalid(format!(
                "both ends of ({lo}, {hi}) decrease to the axis"
            )))
        }
    }
    let mut last_slope = f64::NAN;
    while hi - lo > BISECT_WIDTH {
        let mid = 0.5 * (lo + hi);
        let shot = shoot_backward_opts(mid, params, opts)?;
        match shot.outcome {
            ShootOutcome::GoodProfile { .. } => return Ok((mid, shot.profile)),
            ShootOutcome::DecreasingToAxis { df0, .. } => {
                last_slope = df0;
                lo = mid;
            }
            _ => hi = mid,
        }
    }
    Err(Error::Undecided(format!(
        "bisection narrowed to [{lo}, {hi}] without the axis slope entering \
         tolerance; last decreasing slope {last_slope:.3e}"
    )))
}

// ---------------------------------------------------------------------------
// P2 orbit classification.

/// Where the distinguished orbit out of P2 ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndpointTag {
    P0,
    P1,
    Q3,
    Undecided,
}

impl std::fmt::Display for EndpointTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndpointTag::P0 => write!(f, "P0"),
            EndpointTag::P1 => write!(f, "P1"),
            EndpointTag::Q3 => write!(f, "Q3"),
            EndpointTag::Undecided => write!(f, "undecided"),
        }
    }
}

/// Endpoint of the P2 orbit with the barrier-relevant crossing data.
#[derive(Debug, Clone, Serialize)]
pub struct P2OrbitClassification {
    pub params: Parameters,
    pub endpoint: EndpointTag,
    pub eta_end: f64,
    pub steps: usize,
    /// Crossings of the plane {Y = 0}, both directions.
    pub axis_crossings: usize,
    /// Crossings of the plane {Y = -beta/2alpha}, both directions.
    pub half_slope_crossings: usize,
    /// Product U V at the first {Y = 0} crossing.
    pub uv_at_first_axis_crossing: Option<f64>,
    pub entry_distance: Option<f64>,
    /// Interface location of the reconstructed profile, when the endpoint
    /// carries one.
    pub xi0: Option<f64>,
    #[serde(skip)]
    pub profile: Option<Profile>,
}

/// Launch the unique orbit leaving P2 into {Z > 0} and classify its endpoint.
pub fn classify_p2_orbit(params: &Parameters) -> Result<P2OrbitClassification> {
    classify_p2_orbit_budget(params, ORBIT_STEPS)
}

pub fn classify_p2_orbit_budget(
    params: &Parameters,
    max_steps: usize,
) -> Result<P2OrbitClassification> {
    params.require_supercritical()?;
    let e = derive_exponents(params)?;
    let p2 = p2_location(params)?;
    let dir = p2_exit_direction(params)?.normalize();
    let start = p2 + dir * (1e-6 * p2.norm());
    let stops = vec![
        p0_entry(P0_RADIUS),
        point_ball(PointLabel::P1, p1_location(params)?, P1_RADIUS),
        q3_escape(ESCAPE_Y, ESCAPE_BOUND),
        StopCondition::Crossing {
            label: "axis-plane".into(),
            normal: Vector3::new(0.0, 1.0, 0.0),
            offset: 0.0,
            direction: Direction::Any,
            terminal: false,
        },
        StopCondition::Crossing {
            label: "half-slope-plane".into(),
            normal: Vector3::new(0.0, 1.0, 0.0),
            offset: e.beta / (2.0 * e.alpha),
            direction: Direction::Any,
            terminal: false,
        },
    ];
    let opts = StepOptions {
        max_steps,
        ..StepOptions::default()
    };
    let orbit = try_integrate(
        SystemId::S1,
        params,
        &Launch::State(start),
        (0.0, ORBIT_SPAN),
        &stops,
        &opts,
    )?;

    let crossing = |label: &str| orbit.crossings.iter().find(|c| c.label == label);
    let axis = crossing("axis-plane");
    let half = crossing("half-slope-plane");
    let axis_crossings = axis.map_or(0, |c| c.count);
    let half_slope_crossings = half.map_or(0, |c| c.count);
    let uv_at_first_axis_crossing = match axis.and_then(|c| c.hits.first()) {
        Some((_, y)) => {
            let s3 = s1_to_s3(params, &Vector3::new(y[0], y[1], y[2]))?;
            Some(s3[0] * s3[2])
        }
        None => None,
    };

    let (endpoint, entry_distance, profile) = match &orbit.termination {
        TerminationTag::EnteredPoint { label, distance } => {
            let tag = match label {
                PointLabel::P0 => EndpointTag::P0,
                PointLabel::P1 => EndpointTag::P1,
                other => {
                    return Err(Error::Undecided(format!(
                        "orbit entered unexpected point {other} at sigma = {}",
                        params.sigma
                    )))
                }
            };
            (tag, Some(*distance), reconstruct_profile(&orbit, params).ok())
        }
        TerminationTag::Escaped { direction } if direction == "Q3" => {
            (EndpointTag::Q3, None, None)
        }
        TerminationTag::Escaped { direction } => {
            return Err(Error::Undecided(format!(
                "orbit escaped toward {direction} at sigma = {}",
                params.sigma
            )))
        }
        TerminationTag::StepLimit => {
            return Err(Error::Undecided(format!(
                "step limit {max_steps} reached before an endpoint at sigma = {}",
                params.sigma
            )))
        }
        TerminationTag::LeftDomain => {
            return Err(Error::Undecided(format!(
                "time span {ORBIT_SPAN:.1e} exhausted before an endpoint at sigma = {}",
                params.sigma
            )))
        }
        TerminationTag::SignChange { coord } => {
            return Err(Error::Undecided(format!(
                "unexpected sign change in {coord} at sigma = {}",
                params.sigma
            )))
        }
    };
    let xi0 = profile
        .as_ref()
        .and_then(|pr| pr.interface.as_ref())
        .map(|info| info.xi0);
    Ok(P2OrbitClassification {
        params: *params,
        endpoint,
        eta_end: orbit.samples.last().map_or(0.0, |s| s.0),
        steps: orbit.steps_accepted,
        axis_crossings,
        half_slope_crossings,
        uv_at_first_axis_crossing,
        entry_distance,
        xi0,
        profile,
    })
}

// ---------------------------------------------------------------------------
// Sigma sweep.

/// Barrier constants evaluated at one parameter triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BarrierChecks {
    pub decreasing: DecreasingGuarantee,
    pub funnel: FunnelCertificate,
    pub planes: EscapePlanes,
}

pub fn barrier_checks(params: &Parameters) -> Result<BarrierChecks> {
    Ok(BarrierChecks {
        decreasing: decreasing_guarantee(params)?,
        funnel: type2_funnel_certificate(params)?,
        planes: escape_planes(params)?,
    })
}

/// One sigma entry of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub sigma: f64,
    pub endpoint: EndpointTag,
    /// Reason when the endpoint is undecided.
    pub note: Option<String>,
    /// Interface location of the P2-orbit profile, when one exists.
    pub xi0_star: Option<f64>,
    pub k1: f64,
    /// Product U V at the orbit's first {Y = 0} crossing.
    pub uv_crossing: Option<f64>,
    pub barrier_checks: BarrierChecks,
}

/// Endpoints across a sigma grid with the transition bracket refined.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub m: f64,
    pub p: f64,
    pub sigma_values: Vec<f64>,
    pub endpoints: Vec<EndpointTag>,
    /// Interval containing the endpoint flip, refined by bisection.
    pub sigma_star_bracket: Option<[f64; 2]>,
    pub sigma_star_note: Option<String>,
    /// Adjacent decided grid pairs whose endpoints differ.
    pub transitions: Vec<[f64; 2]>,
    /// Exactly one transition on the grid (or none).
    pub monotone_consistent: bool,
    pub entries: Vec<SweepEntry>,
}

/// Classify the P2 orbit across a sigma grid and refine the endpoint flip.
/// Grid points run concurrently; the refinement is sequential.
pub fn sweep_sigma(params_base: &Parameters, sigma_grid: &[f64]) -> Result<RegimeReport> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidParameter("empty sigma grid".into()));
    }
    let (m, p) = (params_base.m, params_base.p);
    let mut entries: Vec<SweepEntry> = sigma_grid
        .par_iter()
        .map(|&sigma| sweep_entry(m, p, sigma))
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.sigma.partial_cmp(&b.sigma).unwrap());

    let mut transitions = Vec::new();
    for w in entries.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.endpoint != EndpointTag::Undecided
            && b.endpoint != EndpointTag::Undecided
            && a.endpoint != b.endpoint
        {
            transitions.push([a.sigma, b.sigma]);
        }
    }
    let monotone_consistent = transitions.len() <= 1;

    let mut sigma_star_bracket = None;
    let mut sigma_star_note = None;
    if let Some(&[lo, hi]) = transitions.first() {
        let (bracket, note) = refine_sigma_star(m, p, lo, hi);
        sigma_star_bracket = Some(bracket);
        sigma_star_note = note;
    }

    Ok(RegimeReport {
        m,
        p,
        sigma_values: entries.iter().map(|e| e.sigma).collect(),
        endpoints: entries.iter().map(|e| e.endpoint).collect(),
        sigma_star_bracket,
        sigma_star_note,
        transitions,
        monotone_consistent,
        entries,
    })
}

fn sweep_entry(m: f64, p: f64, sigma: f64) -> Result<SweepEntry> {
    let params = Parameters::new(m, p, sigma)?;
    let barrier = barrier_checks(&params)?;
    let entry = match classify_p2_orbit(&params) {
        Ok(c) => SweepEntry {
            sigma,
            endpoint: c.endpoint,
            note: None,
            xi0_star: c.xi0,
            k1: barrier.funnel.k1,
            uv_crossing: c.uv_at_first_axis_crossing,
            barrier_checks: barrier,
        },
        Err(Error::Undecided(msg)) => SweepEntry {
            sigma,
            endpoint: EndpointTag::Undecided,
            note: Some(msg),
            xi0_star: None,
            k1: barrier.funnel.k1,
            uv_crossing: None,
            barrier_checks: barrier,
        },
        Err(e) => return Err(e),
    };
    Ok(entry)
}

/// Bisect the endpoint flip between two decided grid values. An undecided
/// midpoint or a direct P1 entry stops the refinement honestly.
fn refine_sigma_star(m: f64, p: f64, mut lo: f64, mut hi: f64) -> ([f64; 2], Option<String>) {
    for _ in 0..60 {
        if hi - lo <= SIGMA_STAR_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let params = match Parameters::new(m, p, mid) {
            Ok(v) => v,
            Err(e) => return ([lo, hi], Some(format!("refinement stopped: {e}"))),
        };
        match classify_p2_orbit_budget(&params, REFINE_STEPS) {
            Ok(c) => match c.endpoint {
                EndpointTag::P0 => lo = mid,
                EndpointTag::Q3 => hi = mid,
                EndpointTag::P1 => {
                    return (
                        [lo, hi],
                        Some(format!("orbit entered P1 directly at sigma = {mid}")),
                    )
                }
                EndpointTag::Undecided => {
                    return ([lo, hi], Some(format!("undecided at sigma = {mid}")))
                }
            },
            Err(Error::Undecided(msg)) => return ([lo, hi], Some(msg)),
            Err(e) => return ([lo, hi], Some(format!("refinement stopped: {e}"))),
        }
    }
    ([lo, hi], None)
}

// ---------------------------------------------------------------------------
// Fan of orbits out of P0.

/// Phase radius around P0 where the marched tail hands off to the phase
/// flow. Inside this ball the flow crawls (escaping a distance-d
/// neighborhood of the degenerate point takes time of order 1/d, at steps
/// pinned near unity), while the same stretch in xi is a fixed number of
/// decades, so the climb runs in the direct chart instead.
const FAN_LAUNCH_DISTANCE: f64 = 1e-2;
/// Growth factor per direct-chart span while marching the tail outward.
const FAN_MARCH_FACTOR: f64 = 10.0;
/// Bound on marched spans before the climb is abandoned.
const FAN_MARCH_SPANS: usize = 60;
/// Relative size of the tail family's first correction term at the seed
/// point. The leading-order expansion is only trusted where its own next
/// term is this small; the forward flow then contracts the seeding error
/// onto the tail manifold before the fit window begins.
const FAN_SEED_CORRECTION: f64 = 1e-4;
/// Correction level at which the exponent-fit window is capped; beyond it
/// the tail family itself bends away from a pure power.
const FAN_FIT_CORRECTION: f64 = 3e-2;

/// Default fan: 8 tail constants log-spaced over [1e-2, 1e2].
pub fn default_fan_constants() -> Vec<f64> {
    (0..8)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 7.0))
        .collect()
}

/// One orbit of the fan.
#[derive(Debug, Clone, Serialize)]
pub struct FanEntry {
    /// Tail constant of the launch expansion.
    pub k: f64,
    pub xi_launch: f64,
    pub endpoint: EndpointTag,
    pub note: Option<String>,
    pub entry_distance: Option<f64>,
    /// Log-log slope of f over the marched tail, fitted on integrated
    /// samples below the correction cap with the family's own first
    /// correction power as a regressor.
    pub origin_exponent: Option<f64>,
    pub origin_exponent_r2: Option<f64>,
    pub interface: Option<InterfaceInfo>,
    #[serde(skip)]
    pub profile: Option<Profile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FanReport {
    pub params: Parameters,
    /// Tail exponent (sigma+2)/(m-p) every fan orbit should reproduce.
    pub predicted_origin_exponent: f64,
    pub entries: Vec<FanEntry>,
    pub all_entered_p0: bool,
}

/// Launch a fan of orbits out of P0 along the tail family and classify where
/// each one ends. A finite witness set for the all-orbits statements.
pub fn p0_fan(params: &Parameters, ks: &[f64]) -> Result<FanReport> {
    params.require_supercritical()?;
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty fan constant list".into()));
    }
    let entries: Vec<FanEntry> = ks
        .par_iter()
        .map(|&k| fan_entry(params, k))
        .collect::<Result<Vec<_>>>()?;
    let all_entered_p0 = entries.iter().all(|e| e.endpoint == EndpointTag::P0);
    Ok(FanReport {
        params: *params,
        predicted_origin_exponent: (params.sigma + 2.0) / (params.m - params.p),
        entries,
        all_entered_p0,
    })
}

fn fan_entry(params: &Parameters, k: f64) -> Result<FanEntry> {
    let expansion = LocalExpansion::new(ExpansionKind::OriginTail { k }, params)?;
    let w = params.g() / (params.m - params.p);
    let eps = tail_correction_eps(params, k)?;
    let xi_launch = (FAN_SEED_CORRECTION / eps).powf(1.0 / w);
    let xi_fit_cap = (FAN_FIT_CORRECTION / eps).powf(1.0 / w);
    let seed = expansion.eval(xi_launch)?;
    let (tail, handoff) = march_tail_to_launch(params, &seed)?;
    let origin_fit = fit_origin_exponent(&tail, xi_fit_cap, w);
    let launch = Launch::State(handoff.coords);
    let stops = vec![
        p0_entry(P0_RADIUS),
        q3_escape(ESCAPE_Y, ESCAPE_BOUND),
        StopCondition::Escape {
            direction_label: "x-large".into(),
            coord: 0,
            threshold: 1e5,
            falling: false,
            bounds: vec![],
        },
        StopCondition::Escape {
            direction_label: "z-large".into(),
            coord: 2,
            threshold: 1e5,
            falling: false,
            bounds: vec![],
        },
    ];
    let orbit = try_integrate(
        SystemId::S1,
        params,
        &launch,
        (0.0, ORBIT_SPAN),
        &stops,
        &StepOptions::default(),
    )?;
    let mut entry = FanEntry {
        k,
        xi_launch,
        endpoint: EndpointTag::Undecided,
        note: None,
        entry_distance: None,
        origin_exponent: origin_fit.map(|f| f.0),
        origin_exponent_r2: origin_fit.map(|f| f.1),
        interface: None,
        profile: None,
    };
    match &orbit.termination {
        TerminationTag::EnteredPoint {
            label: PointLabel::P0,
            distance,
        } => {
            entry.endpoint = EndpointTag::P0;
            entry.entry_distance = Some(*distance);
            if let Ok(profile) = reconstruct_profile(&orbit, params) {
                entry.interface = profile.interface;
                entry.profile = Some(profile);
            }
        }
        TerminationTag::Escaped { direction } if direction == "Q3" => {
            entry.endpoint = EndpointTag::Q3;
        }
        other => {
            entry.note = Some(format!("{other:?}"));
        }
    }
    Ok(entry)
}

/// Magnitude of the coefficient on the tail family's first correction term:
/// f = K xi^a (1 + eps xi^w + ...), w = g/(m - p). Both the diffusion and
/// the reaction term force the pure power at exactly this relative order,
/// with the drift part contributing beta * w per unit of correction.
fn tail_correction_eps(params: &Parameters, k: f64) -> Result<f64> {
    let (m, p) = (params.m, params.p);
    let e = derive_exponents(params)?;
    let a = (params.sigma + 2.0) / (m - p);
    let w = params.g() / (m - p);
    let am = a * m;
    Ok((k.powf(m) * am * (am - 1.0) + k.powf(p)) / (k * e.beta * w))
}

/// March the tail outward until its phase image leaves the launch ball,
/// returning the points walked and the handoff state.
///
/// The walk runs in the chart (ln F, ln G) against ln xi. Deep on the tail,
/// F and G span dozens of decades below any absolute floor and the field's
/// second derivative emerges from a cancellation whose depth equals the
/// phase distance from P0, so in the raw chart the per-stage quantization
/// of states and times turns into error-estimate noise comparable to the
/// tolerance itself and the stepper grinds to a halt. Against logarithmic
/// state the same quantization is measured relative to O(100) magnitudes
/// and truncation error dominates again.
fn march_tail_to_launch(
    params: &Parameters,
    seed: &ProfilePoint,
) -> Result<(Vec<ProfilePoint>, PhaseState)> {
    let e = derive_exponents(params)?;
    let (m, p, sigma) = (params.m, params.p, params.sigma);
    let (alpha, beta) = (e.alpha, e.beta);
    // d(ln F)/ds and d(ln G)/ds for s = ln xi; G > 0 holds on the whole
    // march because f still rises where the launch ball is left.
    let field = move |s: f64, y: &nalgebra::Vector2<f64>| -> Result<nalgebra::Vector2<f64>> {
        let (phi, gamma) = (y[0], y[1]);
        let t1 = alpha * (s - gamma + phi / m).exp();
        let t2 = (beta / m) * (2.0 * s + (1.0 - m) * phi / m).exp();
        let t3 = ((sigma + 1.0) * s - gamma + p * phi / m).exp();
        Ok(nalgebra::Vector2::new(
            (s + gamma - phi).exp(),
            t1 - t2 - t3,
        ))
    };
    let opts = StepOptions {
        tol: crate::ode::Tolerances {
            rtol: 1e-9,
            atol: 1e-12,
        },
        h_init: 1e-3,
        norm_cap: 1e6,
        ..StepOptions::default()
    };
    let to_point = |s: f64, y: &nalgebra::Vector2<f64>| -> ProfilePoint {
        let f = (y[0] / m).exp();
        ProfilePoint {
            xi: s.exp(),
            f,
            df: (y[1] - (m - 1.0) * y[0] / m).exp() / m,
        }
    };
    if !(seed.f > 0.0 && seed.df > 0.0 && seed.xi > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "tail march needs a rising seed, got (xi, f, df) = ({}, {}, {})",
            seed.xi, seed.f, seed.df
        )));
    }
    let mut s = seed.xi.ln();
    let mut y = nalgebra::Vector2::new(
        m * seed.f.ln(),
        (m * seed.df).ln() + (m - 1.0) * seed.f.ln(),
    );
    let mut points: Vec<ProfilePoint> = vec![*seed];
    for _ in 0..FAN_MARCH_SPANS {
        let run = crate::ode::integrate_raw(
            &field,
            s,
            s + FAN_MARCH_FACTOR.ln(),
            y,
            &[],
            &opts,
        )?;
        for (si, yi) in run.samples.iter().skip(1) {
            let pt = to_point(*si, yi);
            points.push(pt);
            let state = profile_to_phase(SystemId::S1, params, &pt)?;
            if state.coords.norm() >= FAN_LAUNCH_DISTANCE {
                return Ok((points, state));
            }
        }
        match run.samples.last() {
            Some(&(si, yi)) if si > s => {
                s = si;
                y = yi;
            }
            _ => break,
        }
    }
    Err(Error::Undecided(format!(
        "tail failed to reach phase radius {FAN_LAUNCH_DISTANCE:.0e} within {FAN_MARCH_SPANS} spans"
    )))
}

/// Least-squares slope of ln f against ln xi over the marched tail inside
/// the fit window, with the correction power as a regressor:
/// ln f = c + q ln xi + b v (+ b2 v^2), v = (xi / xi_cap)^w. The correction
/// term is the tail family's own next order, so including it keeps the
/// fitted exponent unbiased right up to the window cap.
fn fit_origin_exponent(tail: &[ProfilePoint], xi_cap: f64, w: f64) -> Option<(f64, f64)> {
    let rows: Vec<(f64, f64, f64)> = tail
        .iter()
        .filter(|pt| pt.xi > 0.0 && pt.xi <= xi_cap && pt.f > 0.0)
        .map(|pt| (pt.xi.ln(), pt.f.ln(), (pt.xi / xi_cap).powf(w)))
        .collect();
    let n = rows.len();
    if n < 8 {
        return None;
    }
    let order = if n >= 16 { 2 } else { 1 };
    let cols = 2 + order;
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, cols);
    let mut yv = nalgebra::DVector::<f64>::zeros(n);
    for (i, &(lx, lf, v)) in rows.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = lx;
        a[(i, 2)] = v;
        if order >= 2 {
            a[(i, 3)] = v * v;
        }
        yv[i] = lf;
    }
    let coeffs = (a.transpose() * &a).cholesky()?.solve(&(a.transpose() * &yv));
    let resid = &a * &coeffs - &yv;
    let sse = resid.norm_squared();
    let mean = yv.mean();
    let ss_tot: f64 = yv.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - sse / ss_tot } else { 1.0 };
    Some((coeffs[1], r2))
}

// ---------------------------------------------------------------------------
// Subcritical non-existence probe.

/// One sampled backward launch of the probe.
#[derive(Debug, Clone, Serialize)]
pub struct LaunchEvidence {
    pub xi0: f64,
    /// Which local interface family seeded the launch.
    pub family: &'static str,
    pub outcome: String,
    pub good: bool,
}

/// Evidence table for the absence of good profiles in the subcritical
/// regime: the phase-space side (no point at infinity carries interface or
/// tail data) and the sampled-launch side (every candidate fails).
#[derive(Debug, Clone, Serialize)]
pub struct NonexistenceReport {
    pub params: Parameters,
    pub point_count: usize,
    pub points: Vec<CriticalPointReport>,
    /// The would-be interface point, with its linearization filled in.
    pub interface_candidate: Option<CriticalPointReport>,
    /// No enumerated point is interpreted as an interface or a tail.
    pub no_interface_carrier: bool,
    pub launches: Vec<LaunchEvidence>,
    pub any_good: bool,
}

/// Sample launch grid for the probe: five interface locations, two families.
const PROBE_XI0: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

pub fn probe_nonexistence(params: &Parameters) -> Result<NonexistenceReport> {
    params.require_subcritical()?;
    let mut points = enumerate_infinity(SystemId::S5, params)?;
    for pt in &mut points {
        if pt.chart.is_some() {
            *pt = linearize(pt, params)?;
        }
    }
    let no_interface_carrier = points.iter().all(|pt| {
        !matches!(
            pt.interpretation,
            Interpretation::TypeIInterface | Interpretation::TypeIIInterfaceAndOriginTail
        )
    });
    let interface_candidate = points
        .iter()
        .find(|pt| pt.label == PointLabel::SubP1)
        .cloned();

    let nu = params.g() / (params.m - params.p);
    let mut launches = Vec::with_capacity(2 * PROBE_XI0.len());
    for &xi0 in &PROBE_XI0 {
        launches.push(probe_launch(
            params,
            xi0,
            "type1",
            ExpansionKind::TypeIContact { xi0 },
        ));
        let c = (1.0 - params.p) * xi0.powf(nu);
        launches.push(probe_launch(
            params,
            xi0,
            "type2",
            ExpansionKind::TypeIIContact { c },
        ));
    }
    let any_good = launches.iter().any(|l| l.good);
    Ok(NonexistenceReport {
        params: *params,
        point_count: points.len(),
        points,
        interface_candidate,
        no_interface_carrier,
        launches,
        any_good,
    })
}

fn probe_launch(
    params: &Parameters,
    xi0: f64,
    family: &'static str,
    kind: ExpansionKind,
) -> LaunchEvidence {
    let run = LocalExpansion::new(kind, params).and_then(|expansion| {
        let start = DirectStart::Expansion {
            expansion,
            xi: xi0 * (1.0 - LAUNCH_BACKOFF),
        };
        integrate_ssode_direct_opts(&start, params, DirectDirection::Backward, &shoot_opts())
    });
    match run {
        Ok(profile) => {
            let good = profile.is_good();
            let outcome = match profile.origin_kind {
                OriginKind::SignChangeAtZero => format!(
                    "sign change at xi = {:.6e}",
                    profile.vanish_xi.unwrap_or(f64::NAN)
                ),
                other => {
                    let first = profile.samples[0];
                    format!(
                        "{other:?} at the axis: f(0) = {:.6e}, f'(0) = {:.6e}",
                        first.f, first.df
                    )
                }
            };
            LaunchEvidence {
                xi0,
                family,
                outcome,
                good,
            }
        }
        Err(e) => LaunchEvidence {
            xi0,
            family,
            outcome: e.to_string(),
            good: false,
        },
    }
}


#[cfg(test)]
mod scratch_march_tests {
    use super::*;

    #[test]
    fn scratch_march() {
        let params = Parameters::new(3.0, 0.5, 1.0).unwrap();
        for k in [0.01, 0.139, 1.931, 100.0] {
            let expansion =
                LocalExpansion::new(ExpansionKind::OriginTail { k }, &params).unwrap();
            let w = params.g() / (params.m - params.p);
            let eps = tail_correction_eps(&params, k).unwrap();
            let xi_launch = (FAN_SEED_CORRECTION / eps).powf(1.0 / w);
            let xi_fit_cap = (FAN_FIT_CORRECTION / eps).powf(1.0 / w);
            let seed = expansion.eval(xi_launch).unwrap();
            let t0 = std::time::Instant::now();
            match march_tail_to_launch(&params, &seed) {
                Ok((points, state)) => {
                    let fit = fit_origin_exponent(&points, xi_fit_cap, w);
                    eprintln!(
                        "K {k}: {} pts, xi {:.3e} -> {:.3e}, |y| {:.3e}, fit {:?} ({:.2?})",
                        points.len(),
                        xi_launch,
                        points.last().unwrap().xi,
                        state.coords.norm(),
                        fit,
                        t0.elapsed()
                    );
                }
                Err(e) => eprintln!("K {k}: ERR {e} ({:.2?})", t0.elapsed()),
            }
        }
        panic!("scratch");
    }
}
