//! Adaptive embedded Runge-Kutta integration of order 5(4) with dense
//! output, plane/ball event localization, and a step controller tuned for
//! orbits that terminate at degenerate critical points.
//!
//! The stepper is dimension-generic so the three-dimensional phase systems
//! and the two-dimensional direct profile route share one engine. Fields
//! return `Result`: a stage evaluation outside the field's domain shrinks
//! the step instead of aborting the orbit.

use nalgebra::SVector;
use serde::Serialize;

use crate::error::Error;
use crate::Result;

pub const DEFAULT_RTOL: f64 = 1e-9;
pub const DEFAULT_ATOL: f64 = 1e-12;

/// Localization tolerance for event times, absolute in the independent
/// variable (scaled by `max(1, |t|)`).
pub const EVENT_T_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
        }
    }
}

impl Tolerances {
    pub fn halved(&self) -> Self {
        Self {
            rtol: self.rtol / 2.0,
            atol: self.atol / 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    pub tol: Tolerances,
    /// Magnitude of the first step.
    pub h_init: f64,
    /// Largest step magnitude; defaults to the span.
    pub h_max: f64,
    pub max_steps: usize,
    /// Norm threshold treated as blow-up in the dependent variables.
    pub norm_cap: f64,
    /// Fixed step engaged inside ten radii of a terminal ball, but only
    /// when the controller proposes something smaller (prevents chatter
    /// without forcing tiny steps along slow manifolds).
    pub fixed_floor: f64,
    /// Retained sample budget; longer orbits are decimated evenly.
    pub max_samples: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            h_init: 1e-6,
            h_max: f64::INFINITY,
            max_steps: 500_000,
            norm_cap: 1e8,
            fixed_floor: 1e-6,
            max_samples: 400_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Falling,
    Rising,
    Any,
}

/// A stop or count condition checked on the dense output of every step.
#[derive(Debug, Clone)]
pub enum Event<const N: usize> {
    /// Affine function `normal . y + offset` crossing zero in the given
    /// direction along the orbit. `bounds` are `(index, limit)` pairs that
    /// must satisfy `|y_i| < limit` at the crossing for it to count.
    Plane {
        label: String,
        normal: SVector<f64, N>,
        offset: f64,
        direction: Direction,
        terminal: bool,
        bounds: Vec<(usize, f64)>,
    },
    /// Proximity ball around a point. The ball arms once the orbit is at
    /// least three effective radii away, so launches next to the center do
    /// not self-trigger. With `dynamic_factor = Some(c)` the effective
    /// radius is `min(radius, c * d_max)` where `d_max` is the largest
    /// distance from the center seen so far (loops of any size produce a
    /// proportionate return tolerance). `halfspace = (i, true)` requires
    /// `y_i < 0` at entry (`false`: `y_i > 0`); `require_decreasing` lists
    /// components whose field value must be negative at entry.
    Ball {
        label: String,
        center: SVector<f64, N>,
        radius: f64,
        dynamic_factor: Option<f64>,
        halfspace: Option<(usize, bool)>,
        require_decreasing: Vec<usize>,
        terminal: bool,
    },
}

impl<const N: usize> Event<N> {
    pub fn label(&self) -> &str {
        match self {
            Event::Plane { label, .. } | Event::Ball { label, .. } => label,
        }
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            Event::Plane { terminal, .. } | Event::Ball { terminal, .. } => *terminal,
        }
    }
}

/// One event trigger: which event, where, and the state there.
#[derive(Debug, Clone)]
pub struct EventHit<const N: usize> {
    pub event_index: usize,
    pub label: String,
    pub t: f64,
    pub y: SVector<f64, N>,
}

/// Why the integration stopped. The step limit is reported as data, not an
/// error, so callers can treat an undecided orbit as a first-class outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RawTermination {
    /// Terminal event index.
    Event(usize),
    EndOfSpan,
    StepLimit,
    /// The step size underflowed against a field singularity or domain
    /// boundary at the reported time; the accepted samples are kept so the
    /// caller can decide what the wall means.
    Stalled(f64),
}

#[derive(Debug, Clone)]
pub struct Integration<const N: usize> {
    pub samples: Vec<(f64, SVector<f64, N>)>,
    pub hits: Vec<EventHit<N>>,
    /// Trigger count per event (terminal events count their final hit).
    pub counts: Vec<usize>,
    pub termination: RawTermination,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Dense-output weights for the quartic interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Dense interpolant over one accepted step, valid for `theta` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [SVector<f64, N>; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, theta: f64) -> SVector<f64, N> {
        let th1 = 1.0 - theta;
        self.rcont[0]
            + (self.rcont[1] + (self.rcont[2] + (self.rcont[3] + self.rcont[4] * th1) * theta) * th1)
                * theta
    }

    pub fn t_at(&self, theta: f64) -> f64 {
        self.t0 + theta * self.h
    }
}

struct EventState {
    armed: bool,
    d_max: f64,
    count: usize,
    // Predicate/value at the end of the previous accepted step.
    prev_pred: bool,
    prev_g: f64,
}

fn err_norm<const N: usize>(
    e: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    tol: &Tolerances,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let r = e[i] / sc;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Attempt the seven stages from `(t, y)` with signed step `h`.
/// `Ok(None)` means a stage left the field's domain.
#[allow(clippy::type_complexity)]
fn try_stages<const N: usize, F>(
    f: &F,
    t: f64,
    y: &SVector<f64, N>,
    h: f64,
) -> Result<Option<([SVector<f64, N>; 7], SVector<f64, N>, SVector<f64, N>)>>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let mut k = [SVector::<f64, N>::zeros(); 7];
    k[0] = match f(t, y) {
        Ok(v) => v,
        Err(Error::Io(e)) => return Err(Error::Io(e)),
        Err(_) => return Ok(None),
    };
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            ys += *kj * (h * A[s][j]);
        }
        if !ys.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        k[s] = match f(t + C[s] * h, &ys) {
            Ok(v) => v,
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(_) => return Ok(None),
        };
    }
    // Fifth-order solution is the seventh stage point; error vs the
    // embedded fourth-order weights.
    let mut y1 = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        y1 += *kj * (h * A[6][j]);
    }
    let mut y4 = *y;
    for (j, kj) in k.iter().enumerate() {
        y4 += *kj * (h * B4[j]);
    }
    let err = y1 - y4;
    Ok(Some((k, y1, err)))
}

fn dense_segment<const N: usize>(
    t0: f64,
    h: f64,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    k: &[SVector<f64, N>; 7],
) -> DenseSegment<N> {
    let dy = y1 - y0;
    let r1 = *y0;
    let r2 = dy;
    let r3 = k[0] * h - dy;
    let r4 = dy - k[6] * h - r3;
    let mut r5 = SVector::<f64, N>::zeros();
    for (j, kj) in k.iter().enumerate() {
        if D[j] != 0.0 {
            r5 += *kj * D[j];
        }
    }
    r5 *= h;
    DenseSegment {
        t0,
        h,
        rcont: [r1, r2, r3, r4, r5],
    }
}

fn plane_value<const N: usize>(normal: &SVector<f64, N>, offset: f64, y: &SVector<f64, N>) -> f64 {
    normal.dot(y) + offset
}

fn effective_radius(radius: f64, dynamic_factor: Option<f64>, d_max: f64) -> f64 {
    match dynamic_factor {
        Some(c) => radius.min(c * d_max).max(0.0),
        None => radius,
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// Events are localized on the dense output by bisection to [`EVENT_T_TOL`]
/// in `t`. A terminal event truncates the orbit at the event point. Norm
/// blow-up past `opts.norm_cap` is an error ([`Error::BlowupInPhaseVariables`]);
/// exhausting `opts.max_steps` is reported as [`RawTermination::StepLimit`],
/// and a step-size underflow against a field singularity as
/// [`RawTermination::Stalled`] with the accepted samples kept.
pub fn integrate_raw<const N: usize, F>(
    f: F,
    t0: f64,
    t_end: f64,
    y0: SVector<f64, N>,
    events: &[Event<N>],
    opts: &StepOptions,
) -> Result<Integration<N>>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if !(t_end - t0).is_finite() || t_end == t0 {
        return Err(Error::InvalidParameter(format!(
            "integration span [{t0}, {t_end}] is empty or not finite"
        )));
    }
    let sign = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    // Progress is lost once steps shrink to the ulp scale of the current
    // time; that scale is relative to |t|, with a span-based floor so spans
    // that start near zero still have a finite stall threshold.
    let t_scale = |t: f64| t.abs().max(0.01 * span).max(f64::MIN_POSITIVE);
    let mut h = opts.h_init.abs().min(span).min(opts.h_max) * sign;
    let mut t = t0;
    let mut y = y0;
    let mut state: Vec<EventState> = events
        .iter()
        .map(|ev| {
            let (pred, g, d) = initial_event_values(ev, &f, t0, &y0);
            EventState {
                armed: match ev {
                    Event::Ball { radius, dynamic_factor, .. } => {
                        d >= 3.0 * effective_radius(*radius, *dynamic_factor, d)
                    }
                    _ => true,
                },
                d_max: d,
                count: 0,
                prev_pred: pred,
                prev_g: g,
            }
        })
        .collect();
    let mut samples = vec![(t0, y0)];
    let mut hits: Vec<EventHit<N>> = Vec::new();
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut termination = RawTermination::EndOfSpan;

    'outer: while (t_end - t) * sign > 0.0 {
        if accepted + rejected >= opts.max_steps {
            termination = RawTermination::StepLimit;
            break;
        }
        if ((t_end - t) * sign) < h.abs() {
            h = t_end - t;
        }
        // Inside ten radii of a terminal ball, do not let the controller
        // shrink below the floor; accept the floor step unconditionally.
        let near_terminal_ball = events.iter().zip(state.iter()).any(|(ev, st)| {
            if let Event::Ball {
                center,
                radius,
                dynamic_factor,
                terminal: true,
                ..
            } = ev
            {
                let r_eff = effective_radius(*radius, *dynamic_factor, st.d_max);
                (y - center).norm() < 10.0 * r_eff
            } else {
                false
            }
        });
        let forced = near_terminal_ball && h.abs() < opts.fixed_floor;
        if forced {
            h = opts.fixed_floor.min((t_end - t).abs()).max(f64::MIN_POSITIVE) * sign;
        }

        let staged = try_stages(&f, t, &y, h)?;
        let (k, y1, err_vec) = match staged {
            Some(v) => v,
            None => {
                // A stage left the field domain: shrink hard and retry.
                rejected += 1;
                h *= 0.25;
                if h.abs() < 1e-14 * t_scale(t) {
                    if y.norm() > 0.01 * opts.norm_cap {
                        return Err(Error::BlowupInPhaseVariables(y.norm()));
                    }
                    termination = RawTermination::Stalled(t);
                    break 'outer;
                }
                continue;
            }
        };
        let err = err_norm(&err_vec, &y, &y1, &opts.tol);
        let y1_finite = y1.iter().all(|v| v.is_finite());
        if !forced && (!err.is_finite() || !y1_finite || err > 1.0) {
            rejected += 1;
            let fac = if err.is_finite() && y1_finite {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                0.25
            };
            h *= fac;
            if h.abs() < 1e-14 * t_scale(t) {
                if y.norm() > 0.01 * opts.norm_cap {
                    return Err(Error::BlowupInPhaseVariables(y.norm()));
                }
                termination = RawTermination::Stalled(t);
                break 'outer;
            }
            continue;
        }

        // Accepted.
        accepted += 1;
        let seg = dense_segment(t, h, &y, &y1, &k);
        let t1 = t + h;

        // Event pass: each event reports its earliest trigger in this step;
        // process them in orbit order so non-terminal crossings ahead of a
        // terminal one are still counted.
        let mut triggered: Vec<(f64, usize, SVector<f64, N>)> = Vec::new();
        for (idx, ev) in events.iter().enumerate() {
            if let Some((theta, ys)) = locate_event(ev, &mut state[idx], &f, &seg) {
                triggered.push((seg.t_at(theta), idx, ys));
            }
        }
        triggered.sort_by(|a, b| ((a.0 - b.0) * sign).partial_cmp(&0.0).unwrap());
        for (te, idx, ys) in triggered {
            state[idx].count += 1;
            hits.push(EventHit {
                event_index: idx,
                label: events[idx].label().to_string(),
                t: te,
                y: ys,
            });
            if events[idx].is_terminal() {
                samples.push((te, ys));
                termination = RawTermination::Event(idx);
                break 'outer;
            }
        }

        // Update per-event trailing values at the step end.
        for (ev, st) in events.iter().zip(state.iter_mut()) {
            refresh_event_state(ev, st, &f, t1, &y1);
        }

        y = y1;
        t = t1;
        samples.push((t, y));
        if y.norm() > opts.norm_cap {
            return Err(Error::BlowupInPhaseVariables(y.norm()));
        }
        let fac = if forced || err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).clamp(-opts.h_max, opts.h_max);
    }

    if samples.len() > opts.max_samples {
        let stride = samples.len().div_ceil(opts.max_samples);
        let last = *samples.last().unwrap();
        let mut kept: Vec<_> = samples.into_iter().step_by(stride).collect();
        if kept.last().map(|s| s.0) != Some(last.0) {
            kept.push(last);
        }
        samples = kept;
    }
    Ok(Integration {
        samples,
        hits,
        counts: state.iter().map(|s| s.count).collect(),
        termination,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

fn initial_event_values<const N: usize, F>(
    ev: &Event<N>,
    f: &F,
    t: f64,
    y: &SVector<f64, N>,
) -> (bool, f64, f64)
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    match ev {
        Event::Plane { normal, offset, .. } => (false, plane_value(normal, *offset, y), 0.0),
        Event::Ball { center, .. } => {
            let d = (y - center).norm();
            let pred = ball_predicate(ev, f, t, y, d, d);
            (pred, 0.0, d)
        }
    }
}

fn ball_predicate<const N: usize, F>(
    ev: &Event<N>,
    f: &F,
    t: f64,
    y: &SVector<f64, N>,
    d: f64,
    d_max: f64,
) -> bool
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let Event::Ball {
        radius,
        dynamic_factor,
        halfspace,
        require_decreasing,
        ..
    } = ev
    else {
        return false;
    };
    if d >= effective_radius(*radius, *dynamic_factor, d_max) {
        return false;
    }
    if let Some((i, negative)) = halfspace {
        if *negative && y[*i] >= 0.0 {
            return false;
        }
        if !*negative && y[*i] <= 0.0 {
            return false;
        }
    }
    if !require_decreasing.is_empty() {
        match f(t, y) {
            Ok(field) => {
                if require_decreasing.iter().any(|&i| field[i] >= 0.0) {
                    return false;
                }
            }
            Err(_) => return false,
        }
    }
    true
}

const THETAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Check one event over a dense segment; returns the earliest trigger as
/// `(theta, state)` and updates arming/trailing values.
fn locate_event<const N: usize, F>(
    ev: &Event<N>,
    st: &mut EventState,
    f: &F,
    seg: &DenseSegment<N>,
) -> Option<(f64, SVector<f64, N>)>
where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    match ev {
        Event::Plane {
            normal,
            offset,
            direction,
            bounds,
            ..
        } => {
            let mut g_prev = st.prev_g;
            let mut th_prev = 0.0f64;
            for &th in &THETAS[1..] {
                let yv = seg.eval(th);
                let g = plane_value(normal, *offset, &yv);
                let crossing = match direction {
                    Direction::Falling => g_prev > 0.0 && g <= 0.0,
                    Direction::Rising => g_prev < 0.0 && g >= 0.0,
                    Direction::Any => (g_prev > 0.0 && g <= 0.0) || (g_prev < 0.0 && g >= 0.0),
                };
                if crossing {
                    let gval = |theta: f64| plane_value(normal, *offset, &seg.eval(theta));
                    let theta = bisect_value(gval, th_prev, th, g_prev, seg);
                    let ys = seg.eval(theta);
                    let in_bounds = bounds.iter().all(|&(i, lim)| ys[i].abs() < lim);
                    if in_bounds {
                        return Some((theta, ys));
                    }
                }
                g_prev = g;
                th_prev = th;
            }
            None
        }
        Event::Ball {
            center,
            radius,
            dynamic_factor,
            ..
        } => {
            let mut pred_prev = st.prev_pred;
            let mut th_prev = 0.0f64;
            let mut result = None;
            for &th in &THETAS[1..] {
                let yv = seg.eval(th);
                let d = (yv - center).norm();
                st.d_max = st.d_max.max(d);
                let r_eff = effective_radius(*radius, *dynamic_factor, st.d_max);
                if !st.armed {
                    if d >= 3.0 * r_eff {
                        st.armed = true;
                    }
                    pred_prev = false;
                    th_prev = th;
                    continue;
                }
                let pred = ball_predicate(ev, f, seg.t_at(th), &yv, d, st.d_max);
                if !pred_prev && pred && result.is_none() {
                    let theta = bisect_predicate(
                        |theta: f64| {
                            let yy = seg.eval(theta);
                            let dd = (yy - center).norm();
                            ball_predicate(ev, f, seg.t_at(theta), &yy, dd, st.d_max)
                        },
                        th_prev,
                        th,
                        seg,
                    );
                    result = Some((theta, seg.eval(theta)));
                }
                pred_prev = pred;
                th_prev = th;
            }
            result
        }
    }
}

fn refresh_event_state<const N: usize, F>(
    ev: &Event<N>,
    st: &mut EventState,
    f: &F,
    t: f64,
    y: &SVector<f64, N>,
) where
    F: Fn(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    match ev {
        Event::Plane { normal, offset, .. } => {
            st.prev_g = plane_value(normal, *offset, y);
        }
        Event::Ball { center, .. } => {
            let d = (y - center).norm();
            st.d_max = st.d_max.max(d);
            st.prev_pred = ball_predicate(ev, f, t, y, d, st.d_max);
        }
    }
}

/// Bisect a sign change of `g` over `[lo, hi]` in theta; `g_lo` is the value
/// at `lo`. Converges to [`EVENT_T_TOL`] in `t`.
fn bisect_value<const N: usize>(
    g: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    g_lo: f64,
    seg: &DenseSegment<N>,
) -> f64 {
    let t_scale = seg.t0.abs().max(1.0);
    let sign_lo = g_lo > 0.0;
    for _ in 0..200 {
        if (hi - lo).abs() * seg.h.abs() <= EVENT_T_TOL * t_scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Bisect a false-to-true transition of a predicate over `[lo, hi]`.
fn bisect_predicate<const N: usize>(
    pred: impl Fn(f64) -> bool,
    mut lo: f64,
    mut hi: f64,
    seg: &DenseSegment<N>,
) -> f64 {
    let t_scale = seg.t0.abs().max(1.0);
    for _ in 0..200 {
        if (hi - lo).abs() * seg.h.abs() <= EVENT_T_TOL * t_scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn harmonic(_t: f64, y: &Vector2<f64>) -> Result<Vector2<f64>> {
        Ok(Vector2::new(y[1], -y[0]))
    }

    #[test]
    fn harmonic_oscillator_accuracy_and_dense_output() {
        let opts = StepOptions::default();
        let run = integrate_raw(
            harmonic,
            0.0,
            10.0,
            Vector2::new(1.0, 0.0),
            &[],
            &opts,
        )
        .unwrap();
        assert!(matches!(run.termination, RawTermination::EndOfSpan));
        let (tf, yf) = *run.samples.last().unwrap();
        assert!((tf - 10.0).abs() < 1e-12);
        assert!((yf[0] - 10.0f64.cos()).abs() < 1e-7, "cos {}", yf[0]);
        assert!((yf[1] + 10.0f64.sin()).abs() < 1e-7, "sin {}", yf[1]);
        // Energy drift stays at tolerance scale over the whole sample set.
        for (_, y) in &run.samples {
            let e = y[0] * y[0] + y[1] * y[1];
            assert!((e - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn dense_output_matches_solution_inside_steps() {
        // Rebuild the dense segment of a single macro step and compare
        // against the closed-form solution at interior points. The
        // interpolant is quartic: interior error must decay like h^5.
        let worst_at = |h: f64| {
            let y0 = Vector2::new(1.0, 0.0);
            let (k, y1, _) = try_stages(&harmonic, 0.0, &y0, h).unwrap().unwrap();
            let seg = dense_segment(0.0, h, &y0, &y1, &k);
            let mut worst = 0.0f64;
            for i in 0..=20 {
                let th = i as f64 / 20.0;
                let t = th * h;
                let y = seg.eval(th);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
            worst
        };
        let (e_coarse, e_fine) = (worst_at(0.5), worst_at(0.1));
        assert!(e_coarse < 1e-4, "h = 0.5: interior error {e_coarse:.3e}");
        assert!(e_fine < 1e-8, "h = 0.1: interior error {e_fine:.3e}");
        // Fifth-order decay: a factor-5 step reduction gains about 5^5.
        assert!(e_coarse / e_fine > 1e3, "order too low: {e_coarse:.3e} / {e_fine:.3e}");
    }

    #[test]
    fn plane_event_is_localized_to_tolerance() {
        // cos crosses zero falling at pi/2.
        let events = vec![Event::Plane {
            label: "x-axis".into(),
            normal: Vector2::new(1.0, 0.0),
            offset: 0.0,
            direction: Direction::Falling,
            terminal: true,
            bounds: vec![],
        }];
        let run = integrate_raw(
            harmonic,
            0.0,
            10.0,
            Vector2::new(1.0, 0.0),
            &events,
            &StepOptions::default(),
        )
        .unwrap();
        assert!(matches!(run.termination, RawTermination::Event(0)));
        let hit = &run.hits[0];
        assert!(
            (hit.t - std::f64::consts::FRAC_PI_2).abs() < 1e-9,
            "t = {}",
            hit.t
        );
        assert!(hit.y[0].abs() < 1e-9);
    }

    #[test]
    fn nonterminal_events_count_crossings() {
        let events = vec![Event::Plane {
            label: "x-axis".into(),
            normal: Vector2::new(1.0, 0.0),
            offset: 0.0,
            direction: Direction::Any,
            terminal: false,
            bounds: vec![],
        }];
        let run = integrate_raw(
            harmonic,
            0.0,
            10.0,
            Vector2::new(1.0, 0.0),
            &events,
            &StepOptions::default(),
        )
        .unwrap();
        // Crossings at pi/2 + k pi below 10: four of them (1.57, 4.71, 7.85).
        assert_eq!(run.counts[0], 3, "hits at {:?}", run.hits.iter().map(|h| h.t).collect::<Vec<_>>());
    }

    #[test]
    fn backward_span_works() {
        let run = integrate_raw(
            |_t, y: &Vector2<f64>| Ok(Vector2::new(y[1], -y[0])),
            10.0,
            0.0,
            Vector2::new(10.0f64.cos(), -(10.0f64.sin())),
            &[],
            &StepOptions::default(),
        )
        .unwrap();
        let (_, yf) = *run.samples.last().unwrap();
        assert!((yf[0] - 1.0).abs() < 1e-7);
        assert!(yf[1].abs() < 1e-7);
    }

    #[test]
    fn ball_event_requires_arming() {
        // Pure outward drift from near the origin: the ball at the origin
        // must not fire on launch, and never fires afterwards.
        let events = vec![Event::Ball {
            label: "origin".into(),
            center: Vector2::zeros(),
            radius: 1e-2,
            dynamic_factor: None,
            halfspace: None,
            require_decreasing: vec![],
            terminal: true,
        }];
        let run = integrate_raw(
            |_t, y: &Vector2<f64>| Ok(*y),
            0.0,
            5.0,
            Vector2::new(5e-3, 0.0),
            &events,
            &StepOptions::default(),
        )
        .unwrap();
        assert!(matches!(run.termination, RawTermination::EndOfSpan));
        assert_eq!(run.counts[0], 0);
    }

    #[test]
    fn ball_event_fires_on_return() {
        // Decaying spiral: x' = -0.2 x - y, y' = x - 0.2 y. Starting on the
        // unit circle, the orbit spirals into the origin ball.
        let events = vec![Event::Ball {
            label: "origin".into(),
            center: Vector2::zeros(),
            radius: 1e-2,
            dynamic_factor: None,
            halfspace: None,
            require_decreasing: vec![],
            terminal: true,
        }];
        let run = integrate_raw(
            |_t, y: &Vector2<f64>| Ok(Vector2::new(-0.2 * y[0] - y[1], y[0] - 0.2 * y[1])),
            0.0,
            100.0,
            Vector2::new(1.0, 0.0),
            &events,
            &StepOptions::default(),
        )
        .unwrap();
        assert!(matches!(run.termination, RawTermination::Event(0)));
        let hit = run.hits.last().unwrap();
        let d = hit.y.norm();
        assert!((d - 1e-2).abs() < 1e-6, "entry distance {d}");
        // Radius 1e-2 crossed when exp(-0.2 t) = 1e-2.
        assert!((hit.t - 5.0 * (100.0f64).ln()).abs() < 1e-4, "t {}", hit.t);
    }

    #[test]
    fn step_limit_is_a_termination_not_an_error() {
        let mut opts = StepOptions::default();
        opts.max_steps = 10;
        opts.h_init = 1e-9;
        let run = integrate_raw(
            harmonic,
            0.0,
            10.0,
            Vector2::new(1.0, 0.0),
            &[],
            &opts,
        )
        .unwrap();
        assert!(matches!(run.termination, RawTermination::StepLimit));
    }

    #[test]
    fn norm_cap_is_reported_as_blowup() {
        let mut opts = StepOptions::default();
        opts.norm_cap = 1e6;
        let res = integrate_raw(
            |_t, y: &Vector2<f64>| Ok(*y * 3.0),
            0.0,
            20.0,
            Vector2::new(1.0, 0.0),
            &[],
            &opts,
        );
        assert!(matches!(res, Err(Error::BlowupInPhaseVariables(_))));
    }

    #[test]
    fn domain_guard_shrinks_then_fails_cleanly() {
        // Field defined only for x < 1, flowing straight at it.
        let f = |_t: f64, y: &Vector2<f64>| {
            if y[0] >= 1.0 {
                return Err(Error::DegenerateInput("x >= 1".into()));
            }
            Ok(Vector2::new(1.0, 0.0))
        };
        let res = integrate_raw(
            f,
            0.0,
            5.0,
            Vector2::new(0.0, 0.0),
            &[],
            &StepOptions::default(),
        );
        assert!(matches!(res, Err(Error::IntegrationFailure(_))));
        // With a terminal plane short of the boundary the run ends cleanly.
        let events = vec![Event::Plane {
            label: "stop".into(),
            normal: Vector2::new(-1.0, 0.0),
            offset: 0.999,
            direction: Direction::Falling,
            terminal: true,
            bounds: vec![],
        }];
        let run = integrate_raw(f, 0.0, 5.0, Vector2::new(0.0, 0.0), &events, &StepOptions::default())
            .unwrap();
        assert!(matches!(run.termination, RawTermination::Event(0)));
        let hit = &run.hits[0];
        assert!((hit.y[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn event_location_stable_under_tolerance_halving() {
        let events = vec![Event::Plane {
            label: "x-axis".into(),
            normal: Vector2::new(1.0, 0.0),
            offset: 0.0,
            direction: Direction::Falling,
            terminal: true,
            bounds: vec![],
        }];
        let mut t_hits = Vec::new();
        for halvings in 0..2 {
            let mut opts = StepOptions::default();
            for _ in 0..halvings {
                opts.tol = opts.tol.halved();
            }
            let run = integrate_raw(
                harmonic,
                0.0,
                10.0,
                Vector2::new(1.0, 0.0),
                &events,
                &opts,
            )
            .unwrap();
            t_hits.push(run.hits[0].t);
        }
        assert!((t_hits[0] - t_hits[1]).abs() < 1e-8);
    }
}
