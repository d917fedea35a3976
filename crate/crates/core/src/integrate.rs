//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! One stepper drives three systems: the reduced equations, the reduced
//! equations joined with their first-order variational equations (15
//! components), and the full Cartesian 2N-body problem in `verify`. Dense
//! output is the standard fourth-order continuous extension; it backs event
//! location and trajectory export.

use crate::error::{Error, Result};
use crate::model::{self, Params, ReducedState};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Tolerances and limits for the stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size; `None` leaves it to the controller.
    pub max_step: Option<f64>,
    /// Collision floor on pairwise distances; `None` means 1e-8 · r0.
    pub rho_min: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: None,
            rho_min: None,
        }
    }
}

impl IntegratorOptions {
    pub fn collision_floor(&self, params: &Params) -> f64 {
        self.rho_min
            .unwrap_or_else(|| params.default_collision_floor())
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParams("max_step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A first-order system `y' = f(t, y)` the stepper can drive.
pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    /// Evaluate the right-hand side; a collision inside the force sums is an
    /// error.
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Smallest pairwise distance at `y`, used for the collision-proximity
    /// record of a trajectory.
    fn min_pair_distance(&self, y: &[f64]) -> f64;
    /// Cheap sanity test of a trial state (positivity etc.).
    fn state_ok(&self, y: &[f64]) -> bool;
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
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
// b - b_hat: coefficients of the embedded error estimate
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// dense-output weights for the fifth interpolation polynomial
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug)]
struct Segment {
    t: f64,
    h: f64,
    cont: [Vec<f64>; 5],
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * self.cont[4][i])));
        }
    }
}

/// Continuous solution on `[t0, t_end]` assembled from accepted steps.
#[derive(Debug)]
pub struct DenseOutput {
    dim: usize,
    t_end: f64,
    segments: Vec<Segment>,
    /// Accepted step endpoints (t, state).
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Smallest pairwise distance seen at any accepted state.
    pub min_pair_distance: f64,
}

impl DenseOutput {
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let t = t.clamp(0.0, self.t_end);
        if t >= self.t_end {
            // exact at the final node; the interpolant is one ulp off there
            out.copy_from_slice(self.states.last().expect("nonempty output"));
            return;
        }
        // segments are ordered by time; binary search for the covering one
        let idx = match self
            .segments
            .binary_search_by(|seg| seg.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.segments[idx].eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

/// Core stepper. Integrates from (0, y0) to t_end, collecting dense output.
pub(crate) fn propagate<S: OdeSystem>(
    sys: &S,
    y0: Vec<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<DenseOutput> {
    opts.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "integration span must be positive, got {t_end}"
        )));
    }
    let dim = sys.dim();
    debug_assert_eq!(y0.len(), dim);

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y = y0;
    let mut t = 0.0f64;
    sys.eval(t, &y, &mut k[0]).map_err(|e| at_time(e, t))?;

    let h_max = opts.max_step.unwrap_or(t_end).min(t_end);
    let mut h = initial_step(sys, &y, &k[0], t_end, opts).min(h_max);
    let h_floor = 1e-13 * t_end.max(1.0);

    let mut out = DenseOutput {
        dim,
        t_end,
        segments: Vec::new(),
        times: vec![0.0],
        states: vec![y.clone()],
        min_pair_distance: sys.min_pair_distance(&y),
    };

    let mut y_trial = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut rejected_on_collision = false;
    let mut steps = 0usize;
    const MAX_STEPS: usize = 20_000_000;

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepFailure { t, h });
        }
        if h < h_floor {
            return if rejected_on_collision {
                Err(Error::Collision {
                    t,
                    min_dist: sys.min_pair_distance(&y),
                    floor: f64::NAN,
                })
            } else {
                Err(Error::StepFailure { t, h })
            };
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        // stages 2..7; stage 7 lands on the candidate endpoint (FSAL)
        let mut stage_failed = false;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_trial[i] = y[i] + h * acc;
            }
            if !sys.state_ok(&y_trial) {
                stage_failed = true;
                rejected_on_collision = true;
                break;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if sys.eval(t + C[s] * h, &y_trial, &mut tail[0]).is_err() {
                stage_failed = true;
                rejected_on_collision = true;
                break;
            }
        }
        if stage_failed {
            h *= 0.5;
            continue;
        }
        // y_trial now holds the 5th-order solution (stage-7 state)
        y_new.copy_from_slice(&y_trial);

        // embedded error estimate
        let mut err = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
            }
            e *= h;
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            // accept: build the interpolant for [t, t+h]
            let mut cont: [Vec<f64>; 5] = [
                y.clone(),
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
            ];
            for i in 0..dim {
                let dy = y_new[i] - y[i];
                cont[1][i] = dy;
                cont[2][i] = h * k[0][i] - dy;
                cont[3][i] = dy - h * k[6][i] - cont[2][i];
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    if D[j] != 0.0 {
                        acc += D[j] * kj[i];
                    }
                }
                cont[4][i] = h * acc;
            }
            out.segments.push(Segment { t, h, cont });
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL
            out.times.push(t);
            out.states.push(y.clone());
            out.min_pair_distance = out.min_pair_distance.min(sys.min_pair_distance(&y));
            rejected_on_collision = false;

            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
            h = (h * fac).min(h_max);
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }
    Ok(out)
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Collision {
            min_dist, floor, ..
        } => Error::Collision { t, min_dist, floor },
        other => other,
    }
}

/// Hairer-style starting step guess from the scale of y and y'.
fn initial_step<S: OdeSystem>(
    sys: &S,
    y: &[f64],
    f0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> f64 {
    let dim = sys.dim();
    let sc: Vec<f64> = y
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect();
    let d0 = rms(y, &sc);
    let d1 = rms(f0, &sc);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(t_end);
    // one explicit Euler probe to estimate the second derivative
    let y1: Vec<f64> = (0..dim).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; dim];
    if !sys.state_ok(&y1) || sys.eval(h0, &y1, &mut f1).is_err() {
        return (h0 * 1e-3).max(1e-10);
    }
    let d2 = {
        let diff: Vec<f64> = (0..dim).map(|i| f1[i] - f0[i]).collect();
        rms(&diff, &sc) / h0
    };
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

fn rms(v: &[f64], sc: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(sc).map(|(x, s)| (x / s) * (x / s)).sum();
    (s / v.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// reduced system
// ---------------------------------------------------------------------------

struct ReducedSystem {
    params: Params,
    a: f64,
    floor: f64,
}

impl OdeSystem for ReducedSystem {
    fn dim(&self) -> usize {
        5
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let s = model::force_sums_full(y[0], y[2], self.params.n, self.floor)?;
        let r = y[0];
        dy[0] = y[1];
        dy[1] = self.a * self.a / (r * r * r) - 2.0 * r * self.params.m * s.f;
        dy[2] = y[3];
        dy[3] = -0.5 * self.params.m * y[2] * s.g;
        dy[4] = self.a / (r * r);
        Ok(())
    }

    fn min_pair_distance(&self, y: &[f64]) -> f64 {
        match model::force_sums_full(y[0], y[2], self.params.n, 0.0) {
            Ok(s) => s.min_dist,
            Err(_) => 0.0,
        }
    }

    fn state_ok(&self, y: &[f64]) -> bool {
        y[0] > 0.0 && y.iter().all(|v| v.is_finite())
    }
}

fn reduced_state(y: &[f64]) -> ReducedState {
    ReducedState {
        r: y[0],
        r_dot: y[1],
        d: y[2],
        d_dot: y[3],
        theta: y[4],
    }
}

/// Trajectory of the reduced system with dense output.
#[derive(Debug)]
pub struct Trajectory {
    pub(crate) dense: DenseOutput,
    pub a: f64,
    pub b: f64,
    pub params: Params,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.dense.t_end()
    }

    pub fn state_at(&self, t: f64) -> ReducedState {
        let mut buf = [0.0; 5];
        self.dense.eval_into(t, &mut buf);
        reduced_state(&buf)
    }

    pub fn end_state(&self) -> ReducedState {
        reduced_state(self.dense.states.last().expect("nonempty trajectory"))
    }

    /// Accepted step times.
    pub fn times(&self) -> &[f64] {
        &self.dense.times
    }

    pub fn state_at_node(&self, i: usize) -> ReducedState {
        reduced_state(&self.dense.states[i])
    }

    /// Smallest pairwise body distance seen along the accepted states.
    pub fn min_pair_distance(&self) -> f64 {
        self.dense.min_pair_distance
    }

    fn channel_at(&self, t: f64, channel: EventChannel) -> f64 {
        let s = self.state_at(t);
        match channel {
            EventChannel::RDot => s.r_dot,
            EventChannel::D => s.d,
            EventChannel::DDot => s.d_dot,
        }
    }
}

/// Integrate the reduced system from the canonical initial condition
/// (r0, 0, 0, b, 0).
pub fn integrate(
    a: f64,
    b: f64,
    t_end: f64,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let sys = ReducedSystem {
        params: *params,
        a,
        floor: opts.collision_floor(params),
    };
    let y0 = vec![params.r0, 0.0, 0.0, b, 0.0];
    let dense = propagate(&sys, y0, t_end, opts)?;
    Ok(Trajectory {
        dense,
        a,
        b,
        params: *params,
    })
}

/// Integrate the reduced system onward from an arbitrary state.
pub fn resume(
    state: &ReducedState,
    a: f64,
    span: f64,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let sys = ReducedSystem {
        params: *params,
        a,
        floor: opts.collision_floor(params),
    };
    let y0 = vec![state.r, state.r_dot, state.d, state.d_dot, state.theta];
    let dense = propagate(&sys, y0, span, opts)?;
    Ok(Trajectory {
        dense,
        a,
        b: state.d_dot,
        params: *params,
    })
}

// ---------------------------------------------------------------------------
// variational system
// ---------------------------------------------------------------------------

/// Sensitivities of the reduced state with respect to the shooting
/// parameters (a, b), carried alongside the base state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalState {
    pub base: ReducedState,
    pub dr_da: f64,
    pub drdot_da: f64,
    pub dd_da: f64,
    pub dddot_da: f64,
    pub dtheta_da: f64,
    pub dr_db: f64,
    pub drdot_db: f64,
    pub dd_db: f64,
    pub dddot_db: f64,
    pub dtheta_db: f64,
}

impl VariationalState {
    fn from_slice(y: &[f64]) -> Self {
        Self {
            base: reduced_state(&y[0..5]),
            dr_da: y[5],
            drdot_da: y[6],
            dd_da: y[7],
            dddot_da: y[8],
            dtheta_da: y[9],
            dr_db: y[10],
            drdot_db: y[11],
            dd_db: y[12],
            dddot_db: y[13],
            dtheta_db: y[14],
        }
    }
}

struct VariationalSystem {
    params: Params,
    a: f64,
    floor: f64,
}

impl OdeSystem for VariationalSystem {
    fn dim(&self) -> usize {
        15
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (r, d) = (y[0], y[2]);
        let m = self.params.m;
        let a = self.a;
        let s = model::force_sums_full(r, d, self.params.n, self.floor)?;
        let r3 = r * r * r;

        dy[0] = y[1];
        dy[1] = a * a / r3 - 2.0 * r * m * s.f;
        dy[2] = y[3];
        dy[3] = -0.5 * m * d * s.g;
        dy[4] = a / (r * r);

        // Jacobian of the (r_ddot, d_ddot) block
        let f_rr = -3.0 * a * a / (r3 * r) - 2.0 * m * (s.f + r * s.f_r);
        let f_rd = -2.0 * r * m * s.f_d;
        let g_dr = -0.5 * m * d * s.g_r;
        let g_dd = -0.5 * m * (s.g + d * s.g_d);

        // sensitivity blocks: offset 5 for d/da (inhomogeneous), 10 for d/db
        for (off, wrt_a) in [(5usize, true), (10usize, false)] {
            let (ur, urd, ud, udd) = (y[off], y[off + 1], y[off + 2], y[off + 3]);
            dy[off] = urd;
            dy[off + 1] = f_rr * ur + f_rd * ud + if wrt_a { 2.0 * a / r3 } else { 0.0 };
            dy[off + 2] = udd;
            dy[off + 3] = g_dr * ur + g_dd * ud;
            dy[off + 4] = (if wrt_a { 1.0 / (r * r) } else { 0.0 }) - 2.0 * a / r3 * ur;
        }
        Ok(())
    }

    fn min_pair_distance(&self, y: &[f64]) -> f64 {
        match model::force_sums_full(y[0], y[2], self.params.n, 0.0) {
            Ok(s) => s.min_dist,
            Err(_) => 0.0,
        }
    }

    fn state_ok(&self, y: &[f64]) -> bool {
        y[0] > 0.0 && y.iter().all(|v| v.is_finite())
    }
}

/// Reduced trajectory integrated jointly with its (a, b)-sensitivities.
#[derive(Debug)]
pub struct VariationalTrajectory {
    dense: DenseOutput,
    pub a: f64,
    pub b: f64,
    pub params: Params,
}

impl VariationalTrajectory {
    pub fn t_end(&self) -> f64 {
        self.dense.t_end()
    }

    pub fn at(&self, t: f64) -> VariationalState {
        let mut buf = [0.0; 15];
        self.dense.eval_into(t, &mut buf);
        VariationalState::from_slice(&buf)
    }

    pub fn final_state(&self) -> VariationalState {
        VariationalState::from_slice(self.dense.states.last().expect("nonempty trajectory"))
    }

    pub fn min_pair_distance(&self) -> f64 {
        self.dense.min_pair_distance
    }

    /// View of the base trajectory (sensitivities dropped on evaluation).
    pub fn base_state_at(&self, t: f64) -> ReducedState {
        self.at(t).base
    }
}

/// Integrate the reduced system and its variational equations in one vector
/// field. At t = 0 every sensitivity vanishes except ∂ḋ/∂b = 1.
pub fn integrate_variational(
    a: f64,
    b: f64,
    t_end: f64,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<VariationalTrajectory> {
    let sys = VariationalSystem {
        params: *params,
        a,
        floor: opts.collision_floor(params),
    };
    let mut y0 = vec![0.0; 15];
    y0[0] = params.r0;
    y0[3] = b;
    y0[13] = 1.0;
    let dense = propagate(&sys, y0, t_end, opts)?;
    Ok(VariationalTrajectory {
        dense,
        a,
        b,
        params: *params,
    })
}

// ---------------------------------------------------------------------------
// event location
// ---------------------------------------------------------------------------

/// Scalar channel of the reduced trajectory whose zeros are of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventChannel {
    /// ṙ — zeros of the radial velocity.
    RDot,
    /// d — crossings of the symmetry plane.
    D,
    /// ḋ — vertical turning points.
    DDot,
}

/// Outcome of a root search on a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventResult {
    Root(f64),
    NoCrossing,
    /// The channel is identically zero over the span (trivial solutions).
    Degenerate,
}

const DEGENERATE_EPS: f64 = 1e-12;
const SUBSAMPLES: usize = 8;

/// First zero crossing of `channel` after time `after`, located on the dense
/// output to 1e-12 absolute time accuracy.
pub fn locate_event(traj: &Trajectory, channel: EventChannel, after: f64) -> EventResult {
    if channel_is_degenerate(traj, channel) {
        return EventResult::Degenerate;
    }
    match crossings(traj, channel, after, true).first() {
        Some(&t) => EventResult::Root(t),
        None => EventResult::NoCrossing,
    }
}

/// All zero crossings of `channel` in `(after, t_end]`.
pub fn locate_events(traj: &Trajectory, channel: EventChannel, after: f64) -> EventResult2 {
    if channel_is_degenerate(traj, channel) {
        return EventResult2::Degenerate;
    }
    EventResult2::Roots(crossings(traj, channel, after, false))
}

/// Multi-root variant of [`EventResult`].
#[derive(Debug, Clone, PartialEq)]
pub enum EventResult2 {
    Roots(Vec<f64>),
    Degenerate,
}

fn channel_is_degenerate(traj: &Trajectory, channel: EventChannel) -> bool {
    let mut max_abs: f64 = 0.0;
    for (i, t) in traj.dense.times.iter().enumerate() {
        max_abs = max_abs.max(traj.channel_at(*t, channel).abs());
        if i + 1 < traj.dense.times.len() {
            let tm = 0.5 * (t + traj.dense.times[i + 1]);
            max_abs = max_abs.max(traj.channel_at(tm, channel).abs());
        }
        if max_abs > DEGENERATE_EPS {
            return false;
        }
    }
    true
}

fn crossings(traj: &Trajectory, channel: EventChannel, after: f64, first_only: bool) -> Vec<f64> {
    let mut roots = Vec::new();
    let t_end = traj.t_end();
    let times = &traj.dense.times;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= after {
            continue;
        }
        let lo = t0.max(after);
        // subdivide the step to catch multiple crossings per segment
        let mut prev_t = lo;
        let mut prev_v = traj.channel_at(prev_t, channel);
        for j in 1..=SUBSAMPLES {
            let tj = lo + (t1 - lo) * j as f64 / SUBSAMPLES as f64;
            let vj = traj.channel_at(tj, channel);
            if prev_v == 0.0 && prev_t > after {
                push_root(&mut roots, prev_t);
            } else if prev_v * vj < 0.0 {
                let root = bisect(traj, channel, prev_t, tj, prev_v);
                push_root(&mut roots, root);
            }
            if first_only && !roots.is_empty() {
                return roots;
            }
            prev_t = tj;
            prev_v = vj;
        }
        let _ = t_end;
    }
    roots
}

fn push_root(roots: &mut Vec<f64>, t: f64) {
    if roots.last().is_none_or(|&prev| t - prev > 1e-9) {
        roots.push(t);
    }
}

fn bisect(
    traj: &Trajectory,
    channel: EventChannel,
    mut lo: f64,
    mut hi: f64,
    mut v_lo: f64,
) -> f64 {
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = traj.channel_at(mid, channel);
        if v == 0.0 {
            return mid;
        }
        if v_lo * v < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            v_lo = v;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// export and quadrature helpers
// ---------------------------------------------------------------------------

/// Write `t,r,rdot,d,ddot,theta` rows sampled uniformly, 17 significant
/// digits.
pub fn write_reduced_csv<W: Write>(traj: &Trajectory, samples: usize, out: &mut W) -> Result<()> {
    writeln!(out, "t,r,rdot,d,ddot,theta")?;
    let n = samples.max(2);
    for i in 0..n {
        let t = traj.t_end() * i as f64 / (n - 1) as f64;
        let s = traj.state_at(t);
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, s.r, s.r_dot, s.d, s.d_dot, s.theta
        )?;
    }
    Ok(())
}

// 7-point Gauss-Legendre nodes/weights on [-1, 1]
const GL_X: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL_W: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

/// Recompute θ(t_end) = ∫ a/r² dt by Gauss quadrature over the dense output;
/// independent cross-check of the θ state component.
pub fn theta_by_quadrature(traj: &Trajectory) -> f64 {
    let mut total = 0.0;
    for w in traj.dense.times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t0 + t1);
        let mut acc = 0.0;
        for (x, wgt) in GL_X.iter().zip(GL_W.iter()) {
            let r = traj.state_at(mid + half * x).r;
            acc += wgt * traj.a / (r * r);
        }
        total += half * acc;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derived_constants;
    use approx::assert_relative_eq;

    struct Harmonic;
    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
        fn min_pair_distance(&self, _y: &[f64]) -> f64 {
            f64::INFINITY
        }
        fn state_ok(&self, y: &[f64]) -> bool {
            y.iter().all(|v| v.is_finite())
        }
    }

    #[test]
    fn stepper_and_dense_output_on_harmonic_oscillator() {
        let opts = IntegratorOptions::default();
        let dense = propagate(&Harmonic, vec![0.0, 1.0], 10.0, &opts).unwrap();
        // endpoint
        let y_end = dense.states.last().unwrap();
        assert_relative_eq!(y_end[0], 10f64.sin(), epsilon = 1e-9);
        assert_relative_eq!(y_end[1], 10f64.cos(), epsilon = 1e-9);
        // dense output between nodes
        for i in 0..=1000 {
            let t = 10.0 * i as f64 / 1000.0;
            let y = dense.eval(t);
            assert!(
                (y[0] - t.sin()).abs() < 1e-9,
                "t={t}: {} vs {}",
                y[0],
                t.sin()
            );
        }
    }

    #[test]
    fn dense_output_exact_at_nodes() {
        let params = Params::reference();
        let traj = integrate(1.8, 0.3, 5.0, &params, &IntegratorOptions::default()).unwrap();
        for (i, &t) in traj.times().iter().enumerate() {
            let from_dense = traj.state_at(t);
            let stored = traj.state_at_node(i);
            assert_eq!(from_dense, stored, "node {i} at t={t}");
        }
    }

    #[test]
    fn trivial_solution_stays_circular() {
        let params = Params::reference();
        let c = derived_constants(&params);
        let traj = integrate(c.a0, 0.0, 50.0, &params, &IntegratorOptions::default()).unwrap();
        for i in 0..traj.times().len() {
            let s = traj.state_at_node(i);
            assert!((s.r - 2.0).abs() < 1e-9, "r drift {}", s.r - 2.0);
            assert!(s.d.abs() < 1e-12);
        }
        // theta advances at the circular rate
        let end = traj.end_state();
        assert_relative_eq!(end.theta, c.a0 / 4.0 * 50.0, max_relative = 1e-9);
    }

    #[test]
    fn energy_conservation_generic_orbit() {
        let params = Params::reference();
        let opts = IntegratorOptions::default();
        let a = 1.91173;
        let traj = integrate(a, 0.1, 10.0, &params, &opts).unwrap();
        let floor = opts.collision_floor(&params);
        let e0 = model::energy(&traj.state_at(0.0), a, &params, floor).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=200 {
            let t = 10.0 * i as f64 / 200.0;
            let e = model::energy(&traj.state_at(t), a, &params, floor).unwrap();
            worst = worst.max((e - e0).abs());
        }
        assert!(worst < 1e-9, "energy drift {worst}");
    }

    #[test]
    fn semigroup_property() {
        let params = Params::reference();
        let opts = IntegratorOptions::default();
        let (a, b) = (1.91173, 0.1);
        let full = integrate(a, b, 10.0, &params, &opts).unwrap();
        let first = integrate(a, b, 4.0, &params, &opts).unwrap();
        let second = resume(&first.end_state(), a, 6.0, &params, &opts).unwrap();
        let s1 = full.end_state();
        let s2 = second.end_state();
        for (x, y) in [
            (s1.r, s2.r),
            (s1.r_dot, s2.r_dot),
            (s1.d, s2.d),
            (s1.d_dot, s2.d_dot),
        ] {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        // theta resumes from first.end_state().theta
        assert!((s1.theta - s2.theta).abs() < 1e-9);
    }

    #[test]
    fn small_b_matches_linearized_gap() {
        let params = Params::reference();
        let c = derived_constants(&params);
        let b = 1e-6;
        let traj = integrate(c.a0, b, c.t0_i, &params, &IntegratorOptions::default()).unwrap();
        let d_end = traj.end_state().d;
        let oracle = model::linearized_oracles(&params, c.t0_i).d_b;
        assert_relative_eq!(d_end / b, oracle, max_relative = 1e-4);
    }

    #[test]
    fn variational_matches_closed_forms_along_circular_solution() {
        let params = Params::reference();
        let c = derived_constants(&params);
        let span = 2.0 * c.t0_ii;
        let vt =
            integrate_variational(c.a0, 0.0, span, &params, &IntegratorOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=400 {
            let t = span * i as f64 / 400.0;
            let v = vt.at(t);
            let lf = model::linearized_oracles(&params, t);
            worst = worst.max((v.dd_db - lf.d_b).abs());
            worst = worst.max((v.dddot_db - lf.d_bt).abs());
            worst = worst.max((v.dr_da - lf.r_a).abs());
            worst = worst.max((v.drdot_da - lf.r_at).abs());
            assert!(v.dr_db.abs() < 1e-10, "r_b = {}", v.dr_db);
        }
        assert!(worst < 1e-8, "worst closed-form deviation {worst}");
    }

    #[test]
    fn variational_matches_finite_differences() {
        let params = Params::reference();
        let opts = IntegratorOptions::default();
        for &(a, b, t) in &[(1.8, 0.2, 3.0), (1.5, 0.3, 5.0), (1.2, 0.6, 2.5)] {
            let v = integrate_variational(a, b, t, &params, &opts)
                .unwrap()
                .final_state();
            let h = 1e-6;
            let pa = integrate(a + h, b, t, &params, &opts).unwrap().end_state();
            let ma = integrate(a - h, b, t, &params, &opts).unwrap().end_state();
            let pb = integrate(a, b + h, t, &params, &opts).unwrap().end_state();
            let mb = integrate(a, b - h, t, &params, &opts).unwrap().end_state();
            let checks = [
                (v.dr_da, (pa.r - ma.r) / (2.0 * h)),
                (v.drdot_da, (pa.r_dot - ma.r_dot) / (2.0 * h)),
                (v.dd_da, (pa.d - ma.d) / (2.0 * h)),
                (v.dddot_da, (pa.d_dot - ma.d_dot) / (2.0 * h)),
                (v.dtheta_da, (pa.theta - ma.theta) / (2.0 * h)),
                (v.dr_db, (pb.r - mb.r) / (2.0 * h)),
                (v.drdot_db, (pb.r_dot - mb.r_dot) / (2.0 * h)),
                (v.dd_db, (pb.d - mb.d) / (2.0 * h)),
                (v.dddot_db, (pb.d_dot - mb.d_dot) / (2.0 * h)),
                (v.dtheta_db, (pb.theta - mb.theta) / (2.0 * h)),
            ];
            for (got, fd) in checks {
                let scale = fd.abs().max(1.0);
                assert!(
                    (got - fd).abs() / scale < 1e-5,
                    "sensitivity {got} vs fd {fd} at (a={a}, b={b}, t={t})"
                );
            }
        }
    }

    #[test]
    fn event_location() {
        let params = Params::reference();
        let c = derived_constants(&params);

        // trivial solution: d identically zero -> degenerate channel
        let trivial = integrate(c.a0, 0.0, 10.0, &params, &IntegratorOptions::default()).unwrap();
        assert_eq!(
            locate_event(&trivial, EventChannel::DDot, 0.0),
            EventResult::Degenerate
        );
        assert_eq!(
            locate_event(&trivial, EventChannel::D, 0.0),
            EventResult::Degenerate
        );

        // small perturbation: first vertical turning point near t0_i
        let traj = integrate(c.a0, 0.01, 6.0, &params, &IntegratorOptions::default()).unwrap();
        match locate_event(&traj, EventChannel::DDot, 0.0) {
            EventResult::Root(t) => assert!((t - c.t0_i).abs() < 1e-3, "t = {t}"),
            other => panic!("expected root, got {other:?}"),
        }
        // any located d-zero has |d| tiny
        match locate_event(&traj, EventChannel::D, 0.1) {
            EventResult::Root(t) => {
                assert!(traj.state_at(t).d.abs() < 1e-10);
                assert!((t - c.t0_ii).abs() < 1e-2, "d-zero at {t}");
            }
            other => panic!("expected root, got {other:?}"),
        }
    }

    #[test]
    fn theta_quadrature_agrees_with_ode_component() {
        let params = Params::reference();
        let traj = integrate(1.8, 0.3, 7.0, &params, &IntegratorOptions::default()).unwrap();
        let theta_ode = traj.end_state().theta;
        let theta_quad = theta_by_quadrature(&traj);
        assert!(
            (theta_ode - theta_quad).abs() < 1e-9,
            "{theta_ode} vs {theta_quad}"
        );
    }

    #[test]
    fn reversal_parity_in_b() {
        // r is even and d odd under b -> -b, the time-reversal mirror
        let params = Params::reference();
        let opts = IntegratorOptions::default();
        let plus = integrate(1.7, 0.4, 5.0, &params, &opts).unwrap();
        let minus = integrate(1.7, -0.4, 5.0, &params, &opts).unwrap();
        for i in 0..=100 {
            let t = 5.0 * i as f64 / 100.0;
            let sp = plus.state_at(t);
            let sm = minus.state_at(t);
            assert!((sp.r - sm.r).abs() < 1e-9);
            assert!((sp.d + sm.d).abs() < 1e-9);
        }
    }

    #[test]
    fn collision_is_detected() {
        // a = 0 with no vertical motion is a straight radial free fall onto
        // the axis: the ring collapses and all pairwise distances vanish
        let params = Params::reference();
        let opts = IntegratorOptions {
            rho_min: Some(1e-6),
            ..Default::default()
        };
        let err = integrate(0.0, 0.0, 20.0, &params, &opts).unwrap_err();
        assert!(
            matches!(err, Error::Collision { .. } | Error::StepFailure { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn csv_export_shape() {
        let params = Params::reference();
        let traj = integrate(1.9, 0.1, 1.0, &params, &IntegratorOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_reduced_csv(&traj, 11, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,r,rdot,d,ddot,theta");
        assert_eq!(lines.len(), 12);
        assert!(lines[1].split(',').count() == 6);
    }
}
