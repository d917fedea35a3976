//! Shooting residuals for the two symmetry boundary-condition systems and a
//! damped Newton corrector.
//!
//! A point (a, b, T) is a type-I solution when ṙ(T) = ḋ(T) = 0 (the orbit is
//! then 4T-periodic with r, d even about t = T) and a type-II solution when
//! ṙ(T) = d(T) = 0 (2T-periodic, d odd about t = T). The trivial circular
//! family (a0, 0, T) solves both systems for every T, so solvers near b = 0
//! must either pin b with a constraint hyperplane or divide the second
//! residual by b.

use crate::error::{Error, Result};
use crate::integrate::{self, IntegratorOptions, VariationalState};
use crate::model::{self, Params};
use nalgebra::{Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Candidate solution of system I or II: angular momentum, initial vertical
/// velocity, matching time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootPoint {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

impl ShootPoint {
    pub fn new(a: f64, b: f64, t: f64) -> Self {
        Self { a, b, t }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.a, self.b, self.t)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            a: v[0],
            b: v[1],
            t: v[2],
        }
    }

    pub fn distance(&self, other: &ShootPoint) -> f64 {
        (self.as_vector() - other.as_vector()).norm()
    }
}

/// Which boundary-condition pair defines the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    /// (ṙ(T), ḋ(T)) = 0; double-symmetry family, period 4T.
    I,
    /// (ṙ(T), d(T)) = 0; period 2T, possibly single-symmetry.
    II,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemKind::I => write!(f, "I"),
            SystemKind::II => write!(f, "II"),
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(SystemKind::I),
            "II" | "ii" | "2" => Ok(SystemKind::II),
            other => Err(Error::InvalidParams(format!(
                "unknown system kind {other:?}"
            ))),
        }
    }
}

/// Converged (or final) state of a Newton solve.
#[derive(Debug, Clone)]
pub struct ShootResult {
    pub point: ShootPoint,
    pub residual: [f64; 2],
    pub jacobian: Matrix2x3<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Rotation angle θ(T) of the converged orbit.
    pub theta: f64,
}

/// Residual, Jacobian rows, and rotation angle at one point, from a single
/// variational integration.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub residual: Vector2<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub theta: f64,
    pub theta_gradient: Vector3<f64>,
    /// Smallest pairwise distance along the orbit up to T.
    pub min_pair_distance: f64,
    pub end: VariationalState,
}

/// Evaluate both residual components of `kind` and their gradients with
/// respect to (a, b, T).
///
/// With `reduced` set and b ≠ 0 the second residual of system II is divided
/// by b (removing the trivial root along b = 0); gradient rows follow the
/// quotient rule.
pub fn evaluate(
    point: &ShootPoint,
    kind: SystemKind,
    reduced: bool,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<PointEval> {
    if !(point.t > 0.0) {
        return Err(Error::InvalidParams(format!(
            "matching time must be positive, got {}",
            point.t
        )));
    }
    let vt = integrate::integrate_variational(point.a, point.b, point.t, params, opts)?;
    let end = vt.final_state();
    let s = end.base;
    let floor = opts.collision_floor(params);
    let der = model::rhs(&s, point.a, params, floor)?;

    // ∇ṙ(T) = (∂ṙ/∂a, ∂ṙ/∂b, r̈(T))
    let row_rdot = RowVector3::new(end.drdot_da, end.drdot_db, der.r_ddot);
    let (second, row_second) = match kind {
        SystemKind::I => (
            s.d_dot,
            RowVector3::new(end.dddot_da, end.dddot_db, der.d_ddot),
        ),
        SystemKind::II => {
            if reduced && point.b != 0.0 {
                let b = point.b;
                (
                    s.d / b,
                    RowVector3::new(end.dd_da / b, end.dd_db / b - s.d / (b * b), s.d_dot / b),
                )
            } else {
                (s.d, RowVector3::new(end.dd_da, end.dd_db, s.d_dot))
            }
        }
    };
    let mut jacobian = Matrix2x3::zeros();
    jacobian.set_row(0, &row_rdot);
    jacobian.set_row(1, &row_second);
    Ok(PointEval {
        residual: Vector2::new(s.r_dot, second),
        jacobian,
        theta: s.theta,
        theta_gradient: Vector3::new(end.dtheta_da, end.dtheta_db, der.theta_dot),
        min_pair_distance: vt.min_pair_distance(),
        end,
    })
}

/// The two shooting residuals of `kind` at `point`, without gradients (a
/// plain 5-component integration), plus the rotation angle θ(T).
pub fn residual_only(
    point: &ShootPoint,
    kind: SystemKind,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<(Vector2<f64>, f64)> {
    if !(point.t > 0.0) {
        return Err(Error::InvalidParams(format!(
            "matching time must be positive, got {}",
            point.t
        )));
    }
    let traj = integrate::integrate(point.a, point.b, point.t, params, opts)?;
    let s = traj.end_state();
    let second = match kind {
        SystemKind::I => s.d_dot,
        SystemKind::II => s.d,
    };
    Ok((Vector2::new(s.r_dot, second), s.theta))
}

/// The two shooting residuals of `kind` at `point`.
pub fn residual(
    point: &ShootPoint,
    kind: SystemKind,
    reduced: bool,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<Vector2<f64>> {
    Ok(evaluate(point, kind, reduced, params, opts)?.residual)
}

/// The 2×3 Jacobian of the residual of `kind` with respect to (a, b, T).
pub fn jacobian(
    point: &ShootPoint,
    kind: SystemKind,
    reduced: bool,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<Matrix2x3<f64>> {
    Ok(evaluate(point, kind, reduced, params, opts)?.jacobian)
}

/// Hyperplane ⟨x − anchor, normal⟩ = 0 that squares the 2×3 shooting system.
#[derive(Debug, Clone, Copy)]
pub struct Constraint {
    pub normal: Vector3<f64>,
    pub anchor: Vector3<f64>,
}

impl Constraint {
    pub fn new(normal: Vector3<f64>, anchor: Vector3<f64>) -> Self {
        Self {
            normal: normal.normalize(),
            anchor,
        }
    }

    /// Pin one coordinate (0 = a, 1 = b, 2 = T) at its seed value.
    pub fn fix_coordinate(index: usize, seed: &ShootPoint) -> Self {
        let mut normal = Vector3::zeros();
        normal[index] = 1.0;
        Self {
            normal,
            anchor: seed.as_vector(),
        }
    }

    fn value(&self, x: &Vector3<f64>) -> f64 {
        self.normal.dot(&(x - self.anchor))
    }
}

/// Options for the damped Newton corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Convergence test: max(|residual components|) below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Condition-number cap on the augmented 3×3 matrix.
    pub max_condition: f64,
    /// Divide the system-II gap residual by b.
    pub reduced_residual: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 25,
            max_condition: 1e14,
            reduced_residual: false,
        }
    }
}

const ARMIJO_MIN_STEP: f64 = 1.0 / 1024.0; // 2^-10
const ARMIJO_SLOPE: f64 = 1e-4;

/// Damped Newton on the 3×3 system (residual of `kind`, hyperplane
/// constraint). Backtracking halves the step on the merit ‖(residual,
/// constraint)‖₂ down to 2⁻¹⁰.
pub fn newton_solve(
    seed: &ShootPoint,
    kind: SystemKind,
    constraint: &Constraint,
    params: &Params,
    opts: &IntegratorOptions,
    solve: &SolveOptions,
) -> Result<ShootResult> {
    let mut x = seed.as_vector();
    let mut eval = evaluate(
        &ShootPoint::from_vector(&x),
        kind,
        solve.reduced_residual,
        params,
        opts,
    )?;

    for iteration in 0..solve.max_iterations {
        let c = constraint.value(&x);
        let merit = merit_norm(&eval.residual, c);
        if eval.residual.amax() < solve.tol && c.abs() < solve.tol.max(1e-12) {
            return Ok(ShootResult {
                point: ShootPoint::from_vector(&x),
                residual: [eval.residual[0], eval.residual[1]],
                jacobian: eval.jacobian,
                converged: true,
                iterations: iteration,
                theta: eval.theta,
            });
        }

        let mut aug = Matrix3::zeros();
        aug.fixed_view_mut::<2, 3>(0, 0).copy_from(&eval.jacobian);
        aug.set_row(
            2,
            &RowVector3::new(
                constraint.normal[0],
                constraint.normal[1],
                constraint.normal[2],
            ),
        );
        let cond = condition_estimate(&aug);
        if !cond.is_finite() || cond > solve.max_condition {
            return Err(Error::SingularJacobian { cond });
        }
        let rhs = Vector3::new(-eval.residual[0], -eval.residual[1], -c);
        let delta = aug
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { cond })?;

        // Armijo backtracking on the merit norm
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda >= ARMIJO_MIN_STEP {
            let trial = x + lambda * delta;
            if trial[2] > 0.0 {
                if let Ok(trial_eval) = evaluate(
                    &ShootPoint::from_vector(&trial),
                    kind,
                    solve.reduced_residual,
                    params,
                    opts,
                ) {
                    let trial_merit = merit_norm(&trial_eval.residual, constraint.value(&trial));
                    if trial_merit <= (1.0 - ARMIJO_SLOPE * lambda) * merit {
                        accepted = Some((trial, trial_eval));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, trial_eval)) => {
                x = trial;
                eval = trial_eval;
            }
            None => {
                // minimum step taken anyway; the iteration cap bounds us
                let trial = x + ARMIJO_MIN_STEP * delta;
                if trial[2] <= 0.0 {
                    return Err(Error::NoConvergence {
                        iterations: iteration,
                        residual_norm: merit,
                    });
                }
                eval = evaluate(
                    &ShootPoint::from_vector(&trial),
                    kind,
                    solve.reduced_residual,
                    params,
                    opts,
                )?;
                x = trial;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: solve.max_iterations,
        residual_norm: merit_norm(&eval.residual, constraint.value(&x)),
    })
}

fn merit_norm(residual: &Vector2<f64>, constraint: f64) -> f64 {
    (residual[0] * residual[0] + residual[1] * residual[1] + constraint * constraint).sqrt()
}

fn condition_estimate(m: &Matrix3<f64>) -> f64 {
    let svd = m.svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Sample the reflection symmetry of an orbit about its matching time.
///
/// Returns the worst |R(T+s) − R(T∓s)| and |D(T+s) ∓ D(T∓s)| over an s-grid:
/// for system I both channels are compared even-even; for system II the gap
/// is compared odd.
pub fn symmetry_defect(
    point: &ShootPoint,
    kind: SystemKind,
    samples: usize,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<(f64, f64)> {
    let traj = integrate::integrate(point.a, point.b, 2.0 * point.t, params, opts)?;
    let mut worst_r: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for i in 1..samples {
        let s = point.t * i as f64 / samples as f64;
        let plus = traj.state_at(point.t + s);
        let minus = traj.state_at(point.t - s);
        worst_r = worst_r.max((plus.r - minus.r).abs());
        match kind {
            SystemKind::I => worst_d = worst_d.max((plus.d - minus.d).abs()),
            SystemKind::II => worst_d = worst_d.max((plus.d + minus.d).abs()),
        }
    }
    Ok((worst_r, worst_d))
}
