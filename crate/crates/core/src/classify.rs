//! Classification of periodic solutions by their half-period rotation angle.
//!
//! A type-II point (a, b, T) closes up as a genuine periodic orbit of the
//! 2N-body problem when the rotation θ0 = Θ(a, b, T) accumulated over the
//! matching time is commensurate with the polygon angle: integers (k, j, l)
//! with k·θ0 = j·π/N + 2πl. Body 1 then arrives after k matching times at
//! the starting position of body 1+j, and the 2N bodies share
//! gcd(j, 2N) distinct trajectories — one shared curve (a choreography)
//! exactly when gcd(j, 2N) = 1. Solutions with a single symmetry never pass
//! that test with odd j, and a sign argument on ḋ rules choreographies out
//! for them entirely.

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::integrate::{self, EventChannel, EventResult2, IntegratorOptions};
use crate::model::Params;
use crate::shoot::{self, ShootPoint, SolveOptions, SystemKind};
use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Residual level above which a point is rejected as "not periodic".
const PERIODIC_TOL: f64 = 1e-6;
/// Half-width of the time windows around t = 0, T, 2T inside which gap
/// zeros are expected, as a fraction of T.
const ZERO_WINDOW_FRACTION: f64 = 1e-6;

/// Integer solution of the angle equation k·θ0 = j·π/N + 2πl.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalMatch {
    /// Smallest admissible number of matching times.
    pub k0: u32,
    /// Smallest admissible arrival offset (1..=2N, parity of k0).
    pub j0: u32,
    /// Winding number normalized so that j0 lies in 1..=2N.
    pub l: i64,
    /// |k0·θ0 − j0·π/N − 2πl| in radians.
    pub defect: f64,
}

/// Whether both parities of the arrival offset are admissible.
///
/// Single-symmetry solutions return to the plane z = 0 only at multiples of
/// T with r(kT) alternating, so body 1 can only reach same-parity starting
/// positions: even j only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParityMode {
    BothParities,
    EvenJOnly,
}

/// Symmetry class of a type-II solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Double,
    Single,
}

impl std::fmt::Display for Symmetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Symmetry::Double => write!(f, "Double"),
            Symmetry::Single => write!(f, "Single"),
        }
    }
}

/// Verdict of the single-symmetry non-choreography criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonChoreography {
    /// d vanishes only near multiples of T and r(0) ≠ r(T): the solution
    /// cannot be a choreography.
    CriterionHolds,
    CriterionFails,
}

/// Full classification of one branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub symmetry: Symmetry,
    pub theta0: f64,
    pub rational: Option<RationalMatch>,
    /// Number of distinct trajectories when a match exists.
    pub count: Option<u32>,
    pub choreography: bool,
}

/// Options for the integer matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    pub k_max: u32,
    /// Defect tolerance in radians.
    pub tol: f64,
    pub parity: ParityMode,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            k_max: 40,
            tol: 1e-3,
            parity: ParityMode::BothParities,
        }
    }
}

/// θ0 = Θ(a, b, T): the rotation angle over the matching time. Rejects
/// points whose type-II residuals exceed 1e-6.
pub fn theta_half_period(
    point: &ShootPoint,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let (res, theta) = shoot::residual_only(point, SystemKind::II, params, opts)?;
    let norm = res.norm();
    if norm > PERIODIC_TOL {
        return Err(Error::NotAPeriodicPoint {
            residual_norm: norm,
        });
    }
    Ok(theta)
}

/// Smallest (k0, then j0) solving k·θ0 = j·π/N + 2πl within `tol`, honoring
/// the parity rule k + j even (the first return to z = 0 with matching
/// vertical velocity direction needs an equal number of half-swings and
/// label steps of the same parity).
pub fn rational_match(theta0: f64, n: u32, opts: &MatchOptions) -> Option<RationalMatch> {
    let two_n = 2 * n;
    for k in 1..=opts.k_max {
        let mut best: Option<RationalMatch> = None;
        for j in 1..=two_n {
            if (k + j) % 2 != 0 {
                continue;
            }
            if opts.parity == ParityMode::EvenJOnly && j % 2 != 0 {
                continue;
            }
            let excess = k as f64 * theta0 - j as f64 * PI / n as f64;
            let l = (excess / (2.0 * PI)).round();
            let defect = (excess - 2.0 * PI * l).abs();
            if defect <= opts.tol && best.is_none() {
                best = Some(RationalMatch {
                    k0: k,
                    j0: j,
                    l: l as i64,
                    defect,
                });
            }
        }
        if let Some(m) = best {
            return Some(m);
        }
    }
    None
}

/// Number of distinct trajectories for arrival offset j0: the orbit count of
/// i ↦ i + j0 on Z_{2N}, i.e. gcd(j0, 2N).
pub fn trajectory_count(m: &RationalMatch, n: u32) -> u32 {
    gcd(m.j0, 2 * n)
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Double if (a, b, T/2) additionally satisfies the type-I conditions within
/// `tol`, else Single.
pub fn symmetry_class(
    point: &ShootPoint,
    params: &Params,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<Symmetry> {
    let (res, _) = shoot::residual_only(point, SystemKind::II, params, opts)?;
    let norm = res.norm();
    if norm > PERIODIC_TOL {
        return Err(Error::NotAPeriodicPoint {
            residual_norm: norm,
        });
    }
    let half = ShootPoint::new(point.a, point.b, 0.5 * point.t);
    let (res_i, _) = shoot::residual_only(&half, SystemKind::I, params, opts)?;
    Ok(if res_i.amax() < tol {
        Symmetry::Double
    } else {
        Symmetry::Single
    })
}

/// Classify one type-II point: symmetry, integer match of θ0, trajectory
/// count, choreography flag. Single-symmetry points are matched with even
/// arrival offsets only.
pub fn classify_point(
    point: &ShootPoint,
    params: &Params,
    symmetry_tol: f64,
    match_opts: &MatchOptions,
    opts: &IntegratorOptions,
) -> Result<TrajectoryReport> {
    let symmetry = symmetry_class(point, params, symmetry_tol, opts)?;
    let theta0 = theta_half_period(point, params, opts)?;
    let effective = MatchOptions {
        parity: match symmetry {
            Symmetry::Single => ParityMode::EvenJOnly,
            Symmetry::Double => match_opts.parity,
        },
        ..*match_opts
    };
    let rational = rational_match(theta0, params.n, &effective);
    let count = rational.as_ref().map(|m| trajectory_count(m, params.n));
    Ok(TrajectoryReport {
        symmetry,
        theta0,
        rational,
        count,
        choreography: count == Some(1),
    })
}

/// Newton-refine a branch point so that Θ(a, b, T) hits `target` exactly,
/// keeping the type-II residuals at zero: the 3×3 system
/// (ṙ(T), d(T), Θ − target) = 0.
///
/// The branch must bracket the target (θ0 − target changes sign between
/// consecutive points); the seed interpolates the bracketing segment.
pub fn choreography_refine(
    branch: &Branch,
    target: f64,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<ShootPoint> {
    let pts = &branch.points;
    let mut bracket = None;
    for i in 0..pts.len().saturating_sub(1) {
        let d0 = pts[i].theta0 - target;
        let d1 = pts[i + 1].theta0 - target;
        if d0 == 0.0 {
            bracket = Some((i, 0.0));
            break;
        }
        if d0 * d1 < 0.0 {
            bracket = Some((i, d0 / (d0 - d1)));
            break;
        }
    }
    let (i, s) = bracket.ok_or(Error::NoBracket)?;
    let p0 = pts[i].point.as_vector();
    let p1 = pts[(i + 1).min(pts.len() - 1)].point.as_vector();
    let seed = ShootPoint::from_vector(&(p0 + s * (p1 - p0)));
    refine_theta_target(&seed, target, params, opts, &SolveOptions::default())
}

/// Damped Newton on (ṙ(T), d(T), Θ(a,b,T) − target) from `seed`.
pub fn refine_theta_target(
    seed: &ShootPoint,
    target: f64,
    params: &Params,
    opts: &IntegratorOptions,
    solve: &SolveOptions,
) -> Result<ShootPoint> {
    let mut x = seed.as_vector();
    let merit = |eval: &shoot::PointEval| -> f64 {
        (eval.residual.norm_squared() + (eval.theta - target).powi(2)).sqrt()
    };
    let mut eval = shoot::evaluate(
        &ShootPoint::from_vector(&x),
        SystemKind::II,
        false,
        params,
        opts,
    )?;
    for iteration in 0..solve.max_iterations {
        let res = Vector3::new(eval.residual[0], eval.residual[1], eval.theta - target);
        if res.amax() < solve.tol {
            let _ = iteration;
            return Ok(ShootPoint::from_vector(&x));
        }
        let mut aug = Matrix3::zeros();
        aug.fixed_view_mut::<2, 3>(0, 0).copy_from(&eval.jacobian);
        aug.set_row(
            2,
            &RowVector3::new(
                eval.theta_gradient[0],
                eval.theta_gradient[1],
                eval.theta_gradient[2],
            ),
        );
        let delta = aug.lu().solve(&(-res)).ok_or(Error::SingularJacobian {
            cond: f64::INFINITY,
        })?;

        let mut lambda = 1.0;
        let current = merit(&eval);
        let mut stepped = false;
        while lambda >= 1.0 / 1024.0 {
            let trial = x + lambda * delta;
            if trial[2] > 0.0 {
                if let Ok(trial_eval) = shoot::evaluate(
                    &ShootPoint::from_vector(&trial),
                    SystemKind::II,
                    false,
                    params,
                    opts,
                ) {
                    if merit(&trial_eval) < (1.0 - 1e-4 * lambda) * current {
                        x = trial;
                        eval = trial_eval;
                        stepped = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !stepped {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual_norm: current,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: solve.max_iterations,
        residual_norm: merit(&eval),
    })
}

/// Single-symmetry non-choreography criterion: over one full period [0, 2T],
/// d vanishes only inside narrow windows around t = 0, T, 2T, and
/// |r(0) − r(T)| > tol. When both hold the solution cannot be a
/// choreography.
pub fn non_choreography_check(
    point: &ShootPoint,
    params: &Params,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<NonChoreography> {
    let (res, _) = shoot::residual_only(point, SystemKind::II, params, opts)?;
    let norm = res.norm();
    if norm > PERIODIC_TOL {
        return Err(Error::NotAPeriodicPoint {
            residual_norm: norm,
        });
    }
    let period = 2.0 * point.t;
    let traj = integrate::integrate(point.a, point.b, period, params, opts)?;

    let window = ZERO_WINDOW_FRACTION * point.t;
    let near_multiple = |t: f64| -> bool {
        t.abs() < window || (t - point.t).abs() < window || (t - period).abs() < window
    };

    // sign crossings of d
    match integrate::locate_events(&traj, EventChannel::D, window) {
        EventResult2::Degenerate => return Ok(NonChoreography::CriterionFails),
        EventResult2::Roots(roots) => {
            if roots.iter().any(|&t| !near_multiple(t)) {
                return Ok(NonChoreography::CriterionFails);
            }
        }
    }
    // near-tangent dips of |d| that do not cross
    let samples = 2048;
    let dip_floor = 1e-9 * params.r0;
    for i in 1..samples {
        let t = period * i as f64 / samples as f64;
        if !near_multiple(t) && traj.state_at(t).d.abs() < dip_floor {
            return Ok(NonChoreography::CriterionFails);
        }
    }

    let r0 = traj.state_at(0.0).r;
    let r_t = traj.state_at(point.t).r;
    if (r0 - r_t).abs() <= tol {
        return Ok(NonChoreography::CriterionFails);
    }
    Ok(NonChoreography::CriterionHolds)
}

/// Orbit count of the shift i ↦ i + j on Z_{2N} by explicit cycle
/// decomposition; test oracle for [`trajectory_count`].
pub fn shift_orbit_count(j: u32, n: u32) -> u32 {
    let size = (2 * n) as usize;
    let mut seen = vec![false; size];
    let mut orbits = 0;
    for start in 0..size {
        if seen[start] {
            continue;
        }
        orbits += 1;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = (i + j as usize) % size;
        }
    }
    orbits as u32
}
