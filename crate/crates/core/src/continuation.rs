//! Pseudo-arclength continuation of shooting-system solution branches,
//! bifurcation detection, and branch switching.
//!
//! A branch is a curve of (a, b, T) points solving one of the two
//! boundary-condition systems. The predictor steps along the unit null
//! vector of the 2×3 residual Jacobian; the corrector is a Newton solve
//! constrained to the hyperplane through the predicted point orthogonal to
//! that tangent. Rank degeneracy of the Jacobian rows signals a bifurcation:
//! we track the tangent-oriented sine of the angle between the rows, whose
//! sign flips when the branch crosses another solution curve.

use crate::error::{Error, Result};
use crate::integrate::IntegratorOptions;
use crate::model::Params;
use crate::shoot::{self, Constraint, PointEval, ShootPoint, SolveOptions, SystemKind};
use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

const GROW: f64 = 1.3;
const SHRINK: f64 = 0.5;
const EASY_ITERATIONS: usize = 3;
const SEED_RESIDUAL_TOL: f64 = 1e-6;
const TRIVIAL_B_EPS: f64 = 1e-9;
/// Corrector landings farther than this multiple of the step are treated as
/// jumps onto a different piece of the solution set and rejected.
const JUMP_FACTOR: f64 = 2.5;
/// Target tangent rotation per step; the step shrinks where the branch
/// curves faster so the stored polyline stays close to the curve.
const TURN_TARGET: f64 = 0.05;
const TURN_REJECT: f64 = 0.30;
const REFINE_ARCLENGTH_TOL: f64 = 1e-6;
const CANDIDATE_DEDUPE_DIST: f64 = 1e-3;
/// Branch-switch probes may only converge within this multiple of the probe
/// offset; farther landings left the candidate's neighborhood.
const SWITCH_LOCALITY: f64 = 10.0;

/// One accepted continuation point.
#[derive(Debug, Clone, Copy)]
pub struct BranchPoint {
    pub point: ShootPoint,
    /// (ṙ(T), second residual) re-evaluated at acceptance.
    pub residual: [f64; 2],
    /// Unit tangent, oriented along the walking direction.
    pub tangent: [f64; 3],
    /// Rotation angle θ(T).
    pub theta0: f64,
    /// Oriented rank statistic of the Jacobian rows: |value| is
    /// sin∠(∇res₁, ∇res₂) capped by their norm ratio (so a vanishing row
    /// also reads as rank deficiency); the sign is the orientation of
    /// ∇res₁×∇res₂ against the tangent and flips when the branch crosses a
    /// bifurcation.
    pub grad_angle_sin: f64,
}

impl BranchPoint {
    pub fn tangent_vector(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.tangent)
    }
}

/// Why a trace stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxPoints,
    AngularMomentumFloor,
    CollisionProximity,
    StepUnderflow,
    RankDeficientCascade,
}

/// Which way to leave the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialDirection {
    /// Orient the first tangent toward increasing b.
    IncreasingB,
    /// Orient the first tangent along the given vector.
    Along([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Initial, minimum, and maximum arclength steps.
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    /// Unsigned grad_angle_sin below which a dip is a bifurcation candidate.
    pub bif_angle_threshold: f64,
    /// Stop when a drops below this.
    pub a_min: f64,
    /// Stop when the orbit's smallest pairwise distance drops below this
    /// multiple of the collision floor.
    pub collision_stop_factor: f64,
    /// |b| used to leave the trivial line when the seed has b = 0.
    pub escape_b: f64,
    /// Disable to continue along the trivial line instead of escaping it.
    pub trivial_escape: bool,
    pub direction: InitialDirection,
    /// Offset of branch-switch probe seeds from the candidate.
    pub switch_delta: f64,
    /// Number of probe directions orthogonal to the parent tangent.
    pub switch_directions: usize,
    /// Converged probes closer than this to the parent are discarded.
    pub switch_discard_eps: f64,
    /// Diagonal weights of the arclength metric on (a, b, T). The default
    /// identity is plain Euclidean, adequate while all three coordinates are
    /// O(1); rescale for other (m, r0).
    pub metric_weights: [f64; 3],
    pub solve: SolveOptions,
    pub integrator: IntegratorOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            h0: 0.01,
            h_min: 1e-6,
            h_max: 0.02,
            max_points: 4000,
            bif_angle_threshold: 1e-3,
            a_min: 0.25,
            collision_stop_factor: 100.0,
            escape_b: 0.01,
            trivial_escape: true,
            direction: InitialDirection::IncreasingB,
            switch_delta: 1e-2,
            switch_directions: 8,
            switch_discard_eps: 1e-3,
            metric_weights: [1.0, 1.0, 1.0],
            solve: SolveOptions::default(),
            integrator: IntegratorOptions::default(),
        }
    }
}

/// Branch metadata mirrored into the JSONL header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchMeta {
    pub kind: SystemKind,
    pub params: Params,
    pub seed: ShootPoint,
    pub options: ContinuationOptions,
    pub termination: Termination,
    /// Set when every point lies on the trivial circular family (b = 0).
    pub trivial_line: bool,
}

/// An ordered set of continuation points with its metadata.
#[derive(Debug, Clone)]
pub struct Branch {
    pub meta: BranchMeta,
    pub points: Vec<BranchPoint>,
}

impl Branch {
    /// Minimum Euclidean distance from `target` to the branch polyline.
    pub fn distance_to(&self, target: &ShootPoint) -> f64 {
        let q = target.as_vector();
        if self.points.len() == 1 {
            return (self.points[0].point.as_vector() - q).norm();
        }
        let mut best = f64::INFINITY;
        for w in self.points.windows(2) {
            let p0 = w[0].point.as_vector();
            let p1 = w[1].point.as_vector();
            let u = p1 - p0;
            let len2 = u.norm_squared();
            let s = if len2 == 0.0 {
                0.0
            } else {
                ((q - p0).dot(&u) / len2).clamp(0.0, 1.0)
            };
            best = best.min((p0 + s * u - q).norm());
        }
        best
    }

    /// Index of the branch point nearest `target`.
    pub fn nearest_index(&self, target: &ShootPoint) -> usize {
        let mut best = (0usize, f64::INFINITY);
        for (i, bp) in self.points.iter().enumerate() {
            let d = bp.point.distance(target);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Maximum gap between consecutive points.
    pub fn max_step_taken(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].point.distance(&w[1].point))
            .fold(0.0, f64::max)
    }
}

fn unsigned_angle_sin(j: &Matrix2x3<f64>) -> (Vector3<f64>, f64) {
    let r0: Vector3<f64> = j.row(0).transpose();
    let r1: Vector3<f64> = j.row(1).transpose();
    let cross = r0.cross(&r1);
    let n0 = r0.norm();
    let n1 = r1.norm();
    let (nmin, nmax) = (n0.min(n1), n0.max(n1));
    if nmax == 0.0 || nmin == 0.0 {
        // a vanished gradient row is rank deficiency, not a right angle
        return (cross, 0.0);
    }
    // sin of the angle between the rows, damped by the norm ratio: a row
    // collapsing to zero loses its direction to integration noise long
    // before the angle statistic reacts
    let sin = cross.norm() / (n0 * n1);
    (cross, sin.min(nmin / nmax))
}

/// Diagonal scaling of (a, b, T) defining the arclength geometry; all
/// continuation geometry (tangents, steps, turn angles, probe fans) lives in
/// the scaled coordinates u = W x.
#[derive(Debug, Clone, Copy)]
struct Metric {
    w: Vector3<f64>,
    identity: bool,
}

impl Metric {
    fn new(opts: &ContinuationOptions) -> Result<Self> {
        let w = Vector3::from_column_slice(&opts.metric_weights);
        if !(w.min() > 0.0) {
            return Err(Error::InvalidParams(format!(
                "metric weights must be positive, got {:?}",
                opts.metric_weights
            )));
        }
        Ok(Self {
            w,
            identity: opts.metric_weights == [1.0, 1.0, 1.0],
        })
    }

    fn scale(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.identity {
            *x
        } else {
            x.component_mul(&self.w)
        }
    }

    fn unscale(&self, u: &Vector3<f64>) -> Vector3<f64> {
        if self.identity {
            *u
        } else {
            u.component_div(&self.w)
        }
    }

    /// Jacobian with respect to the scaled coordinates: columns divided by w.
    fn scale_jacobian(&self, j: &Matrix2x3<f64>) -> Matrix2x3<f64> {
        if self.identity {
            return *j;
        }
        let mut out = *j;
        for col in 0..3 {
            let mut c = out.column_mut(col);
            c /= self.w[col];
        }
        out
    }

    /// Unit x-space direction of a scaled-space direction.
    fn direction(&self, u: &Vector3<f64>) -> Vector3<f64> {
        if self.identity {
            *u
        } else {
            self.unscale(u).normalize()
        }
    }
}

/// Acceptance data computed at a converged point. The tangent lives in the
/// scaled coordinates.
struct Accepted {
    point: ShootPoint,
    eval: PointEval,
    tangent: Vector3<f64>,
    oriented_sin: f64,
}

fn accept(
    point: ShootPoint,
    eval: PointEval,
    orient_along: &Vector3<f64>,
    metric: &Metric,
) -> Accepted {
    let (cross, sin) = unsigned_angle_sin(&metric.scale_jacobian(&eval.jacobian));
    let mut tangent = if cross.norm() > 0.0 {
        cross.normalize()
    } else {
        *orient_along
    };
    if tangent.dot(orient_along) < 0.0 {
        tangent = -tangent;
    }
    let oriented_sin = if cross.norm() > 0.0 {
        sin * cross.dot(&tangent).signum()
    } else {
        0.0
    };
    Accepted {
        point,
        eval,
        tangent,
        oriented_sin,
    }
}

fn branch_point(acc: &Accepted, metric: &Metric) -> BranchPoint {
    let t = metric.direction(&acc.tangent);
    BranchPoint {
        point: acc.point,
        residual: [acc.eval.residual[0], acc.eval.residual[1]],
        tangent: [t[0], t[1], t[2]],
        theta0: acc.eval.theta,
        grad_angle_sin: acc.oriented_sin,
    }
}

/// Unit null vector of the residual Jacobian at `point`.
///
/// Errors with [`Error::RankDeficient`] when the rows are parallel within
/// `opts.bif_angle_threshold` — a bifurcation candidate, not a failure. The
/// tangent is oriented along `previous` when given, else toward
/// increasing b.
pub fn tangent_at(
    point: &ShootPoint,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
    previous: Option<&Vector3<f64>>,
) -> Result<Vector3<f64>> {
    let metric = Metric::new(opts)?;
    let eval = shoot::evaluate(point, kind, false, params, &opts.integrator)?;
    let (cross, sin) = unsigned_angle_sin(&metric.scale_jacobian(&eval.jacobian));
    if sin < opts.bif_angle_threshold {
        return Err(Error::RankDeficient { angle_sin: sin });
    }
    let mut t = metric.direction(&cross.normalize());
    match previous {
        Some(prev) => {
            if t.dot(prev) < 0.0 {
                t = -t;
            }
        }
        None => {
            if t[1] < 0.0 || (t[1] == 0.0 && t[2] < 0.0) {
                t = -t;
            }
        }
    }
    Ok(t)
}

/// Newton-correct the scaled-space prediction `pred_u` within the hyperplane
/// orthogonal (in the scaled metric) to `normal_u`.
fn corrector(
    pred_u: &Vector3<f64>,
    normal_u: &Vector3<f64>,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
    metric: &Metric,
) -> Result<(ShootPoint, PointEval, usize)> {
    let pred = metric.unscale(pred_u);
    let seed = ShootPoint::from_vector(&pred);
    // the plane {u : <u - pred_u, n_u> = 0} pulls back to the x-space normal W n_u
    let constraint = Constraint::new(metric.scale(normal_u), pred);
    let res = shoot::newton_solve(
        &seed,
        kind,
        &constraint,
        params,
        &opts.integrator,
        &opts.solve,
    )?;
    // re-evaluate at the converged point for the stored Jacobian/theta
    let eval = shoot::evaluate(&res.point, kind, false, params, &opts.integrator)?;
    Ok((res.point, eval, res.iterations))
}

/// Trace the solution branch of `kind` through `seed`.
///
/// Seeds on the trivial line (b = 0) are first pushed off it by a Newton
/// solve with b pinned at `opts.escape_b` (both systems are solved by the
/// whole trivial line, so an unconstrained corrector cannot leave it);
/// with `opts.trivial_escape` disabled the trace follows the trivial line
/// itself, which is reported via `meta.trivial_line`.
pub fn trace_branch(
    seed: &ShootPoint,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let metric = Metric::new(opts)?;
    let floor = opts.integrator.collision_floor(params);
    let seed_eval = shoot::evaluate(seed, kind, false, params, &opts.integrator)
        .map_err(|e| Error::SeedRejected(format!("seed evaluation failed: {e}")))?;

    // polish an imprecise seed without leaving its b-slice
    let (seed_pt, seed_eval) = if seed_eval.residual.amax() > SEED_RESIDUAL_TOL {
        let constraint = Constraint::fix_coordinate(1, seed);
        let res = shoot::newton_solve(
            seed,
            kind,
            &constraint,
            params,
            &opts.integrator,
            &opts.solve,
        )
        .map_err(|e| Error::SeedRejected(format!("seed polish failed: {e}")))?;
        let eval = shoot::evaluate(&res.point, kind, false, params, &opts.integrator)?;
        (res.point, eval)
    } else {
        (*seed, seed_eval)
    };

    let preferred = metric.scale(&match opts.direction {
        InitialDirection::IncreasingB => Vector3::new(0.0, 1.0, 0.0),
        InitialDirection::Along(v) => Vector3::from_column_slice(&v),
    });

    let on_trivial = seed_pt.b.abs() < TRIVIAL_B_EPS;
    let mut points: Vec<BranchPoint> = Vec::new();
    let mut last: Accepted;

    if on_trivial && opts.trivial_escape {
        // record the trivial seed, then escape to |b| = escape_b
        let b_sign = if preferred[1] < 0.0 { -1.0 } else { 1.0 };
        let target = ShootPoint::new(seed_pt.a, b_sign * opts.escape_b, seed_pt.t);
        let constraint = Constraint::fix_coordinate(1, &target);
        let first = shoot::newton_solve(
            &target,
            kind,
            &constraint,
            params,
            &opts.integrator,
            &opts.solve,
        )
        .map_err(|e| Error::SeedRejected(format!("trivial-line escape failed: {e}")))?;
        let first_eval = shoot::evaluate(&first.point, kind, false, params, &opts.integrator)?;
        let secant_u = (metric.scale(&first.point.as_vector())
            - metric.scale(&seed_pt.as_vector()))
        .normalize();

        let seed_acc = accept(seed_pt, seed_eval, &secant_u, &metric);
        let secant_x = metric.direction(&secant_u);
        points.push(BranchPoint {
            tangent: [secant_x[0], secant_x[1], secant_x[2]],
            ..branch_point(&seed_acc, &metric)
        });
        last = accept(first.point, first_eval, &secant_u, &metric);
        points.push(branch_point(&last, &metric));
    } else {
        let orient = match opts.direction {
            InitialDirection::IncreasingB if on_trivial => {
                metric.scale(&Vector3::new(0.0, 0.0, 1.0))
            }
            _ => preferred,
        };
        last = accept(seed_pt, seed_eval, &orient, &metric);
        if last.tangent.dot(&orient) == 0.0 {
            return Err(Error::SeedRejected(
                "tangent orthogonal to requested direction".into(),
            ));
        }
        points.push(branch_point(&last, &metric));
    }

    let mut h = opts.h0.clamp(opts.h_min, opts.h_max);
    let mut termination = Termination::MaxPoints;
    let mut singular_failures = 0usize;
    let mut collision_failures = 0usize;

    while points.len() < opts.max_points {
        let pred_u = metric.scale(&last.point.as_vector()) + h * last.tangent;
        let step = match corrector(&pred_u, &last.tangent, kind, params, opts, &metric) {
            Ok((pt, eval, iterations)) => {
                let dx = metric.scale(&pt.as_vector()) - metric.scale(&last.point.as_vector());
                let (cross, _) = unsigned_angle_sin(&metric.scale_jacobian(&eval.jacobian));
                let turn = if cross.norm() > 0.0 {
                    (cross.normalize().dot(&last.tangent).abs().min(1.0)).acos()
                } else {
                    0.0
                };
                // reject landings that jumped, doubled back, or turned hard
                if dx.norm() > JUMP_FACTOR * h || dx.dot(&last.tangent) <= 0.0 || turn > TURN_REJECT
                {
                    None
                } else {
                    Some((pt, eval, iterations, turn))
                }
            }
            Err(Error::SingularJacobian { .. }) => {
                singular_failures += 1;
                None
            }
            Err(Error::Collision { .. }) => {
                collision_failures += 1;
                None
            }
            Err(_) => None,
        };
        match step {
            Some((pt, eval, iterations, turn)) => {
                singular_failures = 0;
                collision_failures = 0;
                let min_dist = eval.min_pair_distance;
                last = accept(pt, eval, &last.tangent, &metric);
                points.push(branch_point(&last, &metric));
                let grow_cap = if iterations <= EASY_ITERATIONS {
                    GROW
                } else {
                    1.0
                };
                let factor = (TURN_TARGET / turn.max(1e-9)).clamp(SHRINK, grow_cap);
                h = (h * factor).clamp(opts.h_min, opts.h_max);
                if pt.a < opts.a_min {
                    termination = Termination::AngularMomentumFloor;
                    break;
                }
                if min_dist < opts.collision_stop_factor * floor {
                    termination = Termination::CollisionProximity;
                    break;
                }
            }
            None => {
                h *= SHRINK;
                if h < opts.h_min {
                    termination = if singular_failures >= 2 {
                        Termination::RankDeficientCascade
                    } else if collision_failures >= 2 {
                        Termination::CollisionProximity
                    } else {
                        Termination::StepUnderflow
                    };
                    break;
                }
            }
        }
    }

    let trivial_line = points.iter().all(|p| p.point.b.abs() < TRIVIAL_B_EPS);
    Ok(Branch {
        meta: BranchMeta {
            kind,
            params: *params,
            seed: *seed,
            options: *opts,
            termination,
            trivial_line,
        },
        points,
    })
}

/// Trace away from the seed in both tangent directions and join the halves
/// (the backward half reversed, seed shared).
pub fn trace_branch_bidirectional(
    seed: &ShootPoint,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let forward = trace_branch(seed, kind, params, opts)?;
    let back_dir = match opts.direction {
        InitialDirection::IncreasingB => [0.0, -1.0, 0.0],
        InitialDirection::Along(v) => [-v[0], -v[1], -v[2]],
    };
    let back_opts = ContinuationOptions {
        direction: InitialDirection::Along(back_dir),
        ..*opts
    };
    let backward = trace_branch(seed, kind, params, &back_opts)?;
    let mut points: Vec<BranchPoint> = backward.points.into_iter().skip(1).rev().collect();
    points.extend(forward.points);
    Ok(Branch {
        meta: forward.meta,
        points,
    })
}

/// A bifurcation candidate: the refined branch point plus the location of
/// the dip in the parent's point list.
#[derive(Debug, Clone)]
pub struct BifurcationCandidate {
    pub point: BranchPoint,
    /// Index i such that the candidate lies between parent points i and i+1.
    pub segment: usize,
}

/// Find rank-degenerate points along a branch.
///
/// Primary detector: sign changes of the oriented `grad_angle_sin` between
/// consecutive points (the continuum statistic passes through zero at a
/// transversal crossing). Secondary: interior local minima of its magnitude
/// below `bif_angle_threshold`, for tangencies without a sign flip. Both are
/// refined by bisection along the branch to arclength 1e-6.
pub fn detect_bifurcations(branch: &Branch) -> Result<Vec<BifurcationCandidate>> {
    let opts = &branch.meta.options;
    let kind = branch.meta.kind;
    let params = &branch.meta.params;
    let pts = &branch.points;
    if pts.len() < 3 {
        return Ok(Vec::new());
    }

    let mut raw: Vec<(usize, bool)> = Vec::new(); // (segment index, is_sign_flip)
    for i in 0..pts.len() - 1 {
        let s0 = pts[i].grad_angle_sin;
        let s1 = pts[i + 1].grad_angle_sin;
        if s0 != 0.0 && s1 != 0.0 && s0 * s1 < 0.0 {
            raw.push((i, true));
        }
    }
    for i in 1..pts.len() - 1 {
        let s = pts[i].grad_angle_sin.abs();
        if s < opts.bif_angle_threshold
            && s <= pts[i - 1].grad_angle_sin.abs()
            && s <= pts[i + 1].grad_angle_sin.abs()
        {
            raw.push((i, false));
        }
    }
    raw.sort_by_key(|&(i, _)| i);

    let metric = Metric::new(opts)?;
    let mut found: Vec<BifurcationCandidate> = Vec::new();
    for (i, is_flip) in raw {
        let refined = if is_flip {
            refine_sign_flip(branch, i, kind, params, opts, &metric)
        } else {
            refine_dip(branch, i, kind, params, opts, &metric)
        };
        if let Ok(candidate) = refined {
            if candidate.point.grad_angle_sin.abs() <= opts.bif_angle_threshold
                && found
                    .iter()
                    .all(|c| c.point.point.distance(&candidate.point.point) > CANDIDATE_DEDUPE_DIST)
            {
                found.push(candidate);
            }
        }
    }
    Ok(found)
}

/// A refined candidate with the parent's chord as its tangent: at a
/// rank-deficient point the row cross product has lost its direction to
/// noise (the null space is two-dimensional there), so the walking direction
/// is the only trustworthy tangent.
fn candidate_point(acc: &Accepted, chord_u: &Vector3<f64>, metric: &Metric) -> BranchPoint {
    let t = metric.direction(chord_u);
    BranchPoint {
        tangent: [t[0], t[1], t[2]],
        ..branch_point(acc, metric)
    }
}

/// Correct onto the branch at scaled-arclength offset `s` along the chord
/// direction `dir_u` from the scaled anchor `p0_u`, and report the oriented
/// statistic there.
fn probe(
    p0_u: &Vector3<f64>,
    dir_u: &Vector3<f64>,
    s: f64,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
    metric: &Metric,
) -> Result<Accepted> {
    let pred_u = p0_u + s * dir_u;
    let (pt, eval, _) = corrector(&pred_u, dir_u, kind, params, opts, metric)?;
    Ok(accept(pt, eval, dir_u, metric))
}

fn refine_sign_flip(
    branch: &Branch,
    segment: usize,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
    metric: &Metric,
) -> Result<BifurcationCandidate> {
    let p0 = metric.scale(&branch.points[segment].point.as_vector());
    let p1 = metric.scale(&branch.points[segment + 1].point.as_vector());
    let chord = p1 - p0;
    let len = chord.norm();
    let u = chord / len;
    let sign_lo = branch.points[segment].grad_angle_sin.signum();

    let (mut lo, mut hi) = (0.0f64, len);
    let mut best: Option<Accepted> = None;
    while hi - lo > REFINE_ARCLENGTH_TOL {
        let mid = 0.5 * (lo + hi);
        let acc = probe(&p0, &u, mid, kind, params, opts, metric)?;
        let sign_mid = acc.oriented_sin.signum();
        if sign_mid == 0.0 {
            best = Some(acc);
            break;
        }
        if sign_mid == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        best = Some(acc);
    }
    let acc = match best {
        Some(a) => a,
        None => probe(&p0, &u, 0.5 * (lo + hi), kind, params, opts, metric)?,
    };
    Ok(BifurcationCandidate {
        point: candidate_point(&acc, &u, metric),
        segment,
    })
}

fn refine_dip(
    branch: &Branch,
    index: usize,
    kind: SystemKind,
    params: &Params,
    opts: &ContinuationOptions,
    metric: &Metric,
) -> Result<BifurcationCandidate> {
    // golden-section minimization of |oriented sin| over the chord spanning
    // the two segments around the dip
    let p0 = metric.scale(&branch.points[index - 1].point.as_vector());
    let p1 = metric.scale(&branch.points[index + 1].point.as_vector());
    let chord = p1 - p0;
    let len = chord.norm();
    let u = chord / len;
    const INV_PHI: f64 = 0.618_033_988_749_894_8;

    let (mut lo, mut hi) = (0.0f64, len);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = probe(&p0, &u, x1, kind, params, opts, metric)?;
    let mut f2 = probe(&p0, &u, x2, kind, params, opts, metric)?;
    while hi - lo > REFINE_ARCLENGTH_TOL {
        if f1.oriented_sin.abs() < f2.oriented_sin.abs() {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = probe(&p0, &u, x1, kind, params, opts, metric)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = probe(&p0, &u, x2, kind, params, opts, metric)?;
        }
    }
    let acc = if f1.oriented_sin.abs() < f2.oriented_sin.abs() {
        f1
    } else {
        f2
    };
    Ok(BifurcationCandidate {
        point: candidate_point(&acc, &u, metric),
        segment: index.saturating_sub(1),
    })
}

/// Probe for solution points near a bifurcation candidate but off the parent
/// branch; survivors seed new `trace_branch` calls.
///
/// Seeds are placed at `candidate ± δ v` for a fan of unit directions v
/// orthogonal to the parent tangent, each corrected in its own normal plane;
/// δ is `opts.switch_delta` shrunk where the parent curves tightly.
pub fn switch_branch(
    candidate: &BranchPoint,
    parent: &Branch,
    params: &Params,
    opts: &ContinuationOptions,
) -> Result<Vec<ShootPoint>> {
    let metric = Metric::new(opts)?;
    let tangent_u = metric.scale(&candidate.tangent_vector()).normalize();
    let helper = if tangent_u[0].abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = tangent_u.cross(&helper).normalize();
    let e2 = tangent_u.cross(&e1).normalize();

    let delta = opts
        .switch_delta
        .min(0.25 * local_curvature_radius(parent, &candidate.point, &metric));
    let kind = parent.meta.kind;
    let center_u = metric.scale(&candidate.point.as_vector());

    let mut survivors: Vec<ShootPoint> = Vec::new();
    for j in 0..opts.switch_directions.max(2) {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / opts.switch_directions.max(2) as f64;
        let v = angle.cos() * e1 + angle.sin() * e2;
        let anchor = metric.unscale(&(center_u + delta * v));
        let seed = ShootPoint::from_vector(&anchor);
        let constraint = Constraint::new(metric.scale(&v), anchor);
        let solved = match shoot::newton_solve(
            &seed,
            kind,
            &constraint,
            params,
            &opts.integrator,
            &opts.solve,
        ) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let dist_u = (metric.scale(&solved.point.as_vector()) - center_u).norm();
        if dist_u > SWITCH_LOCALITY * delta {
            continue;
        }
        if parent.distance_to(&solved.point) <= opts.switch_discard_eps {
            continue;
        }
        if survivors.iter().any(|s| s.distance(&solved.point) < 1e-6) {
            continue;
        }
        survivors.push(solved.point);
    }
    if survivors.is_empty() {
        return Err(Error::NoNewBranch);
    }
    Ok(survivors)
}

fn local_curvature_radius(parent: &Branch, at: &ShootPoint, metric: &Metric) -> f64 {
    let i = parent.nearest_index(at);
    if i == 0 || i + 1 >= parent.points.len() {
        return f64::INFINITY;
    }
    let a = metric.scale(&parent.points[i - 1].point.as_vector());
    let b = metric.scale(&parent.points[i].point.as_vector());
    let c = metric.scale(&parent.points[i + 1].point.as_vector());
    let ab = b - a;
    let ac = c - a;
    let bc = c - b;
    let cross = ab.cross(&ac).norm();
    if cross < 1e-14 {
        f64::INFINITY
    } else {
        ab.norm() * ac.norm() * bc.norm() / (2.0 * cross)
    }
}

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

/// One branch point as serialized to JSONL; classification fields are filled
/// in by the classifier and round-trip untouched otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRecord {
    pub i: usize,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub theta0: f64,
    pub res_rt: f64,
    pub res_d: f64,
    pub grad_angle_sin: f64,
    pub tangent: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j0: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choreography: Option<bool>,
}

impl PointRecord {
    pub fn from_branch_point(i: usize, bp: &BranchPoint) -> Self {
        Self {
            i,
            a: bp.point.a,
            b: bp.point.b,
            t: bp.point.t,
            theta0: bp.theta0,
            res_rt: bp.residual[0],
            res_d: bp.residual[1],
            grad_angle_sin: bp.grad_angle_sin,
            tangent: bp.tangent,
            symmetry: None,
            k0: None,
            j0: None,
            l: None,
            defect: None,
            count: None,
            choreography: None,
        }
    }

    pub fn to_branch_point(&self) -> BranchPoint {
        BranchPoint {
            point: ShootPoint::new(self.a, self.b, self.t),
            residual: [self.res_rt, self.res_d],
            tangent: self.tangent,
            theta0: self.theta0,
            grad_angle_sin: self.grad_angle_sin,
        }
    }
}

impl Branch {
    pub fn records(&self) -> Vec<PointRecord> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, bp)| PointRecord::from_branch_point(i, bp))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", serde_json::to_string(&self.meta)?)?;
        for rec in self.records() {
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<(Branch, Vec<PointRecord>)> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParams("empty branch file".into()))??;
        let meta: BranchMeta = serde_json::from_str(&header)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<PointRecord>(&line)?);
        }
        let points = records.iter().map(PointRecord::to_branch_point).collect();
        Ok((Branch { meta, points }, records))
    }
}

/// Write records (e.g. after classification) under an existing header.
pub fn write_records_jsonl<W: Write>(
    meta: &BranchMeta,
    records: &[PointRecord],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(meta)?)?;
    for rec in records {
        writeln!(out, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}
