//! Embedding of reduced solutions into the full Cartesian 2N-body problem
//! and an independent full-problem integration to cross-check them.
//!
//! Body j sits at R^(j-1) applied to body 1, where R rotates by π/N about
//! the z-axis and flips z. Gravitational constant is 1 and all masses equal.

use crate::error::{Error, Result};
use crate::integrate::{propagate, DenseOutput, IntegratorOptions, OdeSystem, Trajectory};
use crate::model::{Params, ReducedState};
use nalgebra::{Matrix3, Vector3};
use std::io::Write;

/// Positions and velocities of all 2N bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl FullState {
    pub fn body_count(&self) -> usize {
        self.positions.len()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(6 * self.positions.len());
        for p in &self.positions {
            y.extend_from_slice(&[p[0], p[1], p[2]]);
        }
        for v in &self.velocities {
            y.extend_from_slice(&[v[0], v[1], v[2]]);
        }
        y
    }

    fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 6;
        let positions = (0..n)
            .map(|i| Vector3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]))
            .collect();
        let velocities = (0..n)
            .map(|i| Vector3::new(y[3 * n + 3 * i], y[3 * n + 3 * i + 1], y[3 * n + 3 * i + 2]))
            .collect();
        Self {
            positions,
            velocities,
        }
    }

    pub fn center_of_mass(&self) -> Vector3<f64> {
        self.positions.iter().sum::<Vector3<f64>>() / self.positions.len() as f64
    }

    pub fn total_momentum(&self, m: f64) -> Vector3<f64> {
        m * self.velocities.iter().sum::<Vector3<f64>>()
    }

    pub fn total_angular_momentum(&self, m: f64) -> Vector3<f64> {
        m * self
            .positions
            .iter()
            .zip(&self.velocities)
            .map(|(p, v)| p.cross(v))
            .sum::<Vector3<f64>>()
    }

    pub fn total_energy(&self, m: f64) -> f64 {
        let kinetic: f64 = 0.5
            * m
            * self
                .velocities
                .iter()
                .map(|v| v.norm_squared())
                .sum::<f64>();
        let mut potential = 0.0;
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                potential -= m * m / (self.positions[i] - self.positions[j]).norm();
            }
        }
        kinetic + potential
    }

    pub fn min_pair_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                best = best.min((self.positions[i] - self.positions[j]).norm());
            }
        }
        best
    }
}

/// The generator of the antiprism symmetry: rotation by π/N about z composed
/// with the reflection z → −z.
pub fn symmetry_generator(n: u32) -> Matrix3<f64> {
    let ang = std::f64::consts::PI / n as f64;
    let (s, c) = ang.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0)
}

/// Embed a reduced state into Cartesian coordinates. `a` is the angular
/// momentum, needed for the tangential velocity r·θ̇ = a/r.
pub fn embed(state: &ReducedState, a: f64, params: &Params) -> FullState {
    let (sin_t, cos_t) = state.theta.sin_cos();
    let p1 = Vector3::new(state.r * cos_t, state.r * sin_t, state.d);
    let theta_dot = a / (state.r * state.r);
    let v1 = Vector3::new(
        state.r_dot * cos_t - state.r * theta_dot * sin_t,
        state.r_dot * sin_t + state.r * theta_dot * cos_t,
        state.d_dot,
    );
    let gen = symmetry_generator(params.n);
    let count = 2 * params.n as usize;
    let mut positions = Vec::with_capacity(count);
    let mut velocities = Vec::with_capacity(count);
    let mut p = p1;
    let mut v = v1;
    for _ in 0..count {
        positions.push(p);
        velocities.push(v);
        p = gen * p;
        v = gen * v;
    }
    FullState {
        positions,
        velocities,
    }
}

struct FullSystem {
    m: f64,
    bodies: usize,
    floor: f64,
}

impl OdeSystem for FullSystem {
    fn dim(&self) -> usize {
        6 * self.bodies
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.bodies;
        let pos = |i: usize| Vector3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
        dy[..3 * n].copy_from_slice(&y[3 * n..]);
        dy[3 * n..].fill(0.0);
        for i in 0..n {
            let pi = pos(i);
            for j in i + 1..n {
                let diff = pos(j) - pi;
                let dist = diff.norm();
                if !(dist > self.floor) {
                    return Err(Error::Collision {
                        t: f64::NAN,
                        min_dist: dist,
                        floor: self.floor,
                    });
                }
                let g = diff * (self.m / (dist * dist * dist));
                for k in 0..3 {
                    dy[3 * n + 3 * i + k] += g[k];
                    dy[3 * n + 3 * j + k] -= g[k];
                }
            }
        }
        Ok(())
    }

    fn min_pair_distance(&self, y: &[f64]) -> f64 {
        FullState::from_flat(y).min_pair_distance()
    }

    fn state_ok(&self, y: &[f64]) -> bool {
        y.iter().all(|v| v.is_finite())
    }
}

/// Dense full-problem trajectory.
#[derive(Debug)]
pub struct FullTrajectory {
    dense: DenseOutput,
    pub params: Params,
}

impl FullTrajectory {
    pub fn t_end(&self) -> f64 {
        self.dense.t_end()
    }

    pub fn state_at(&self, t: f64) -> FullState {
        FullState::from_flat(&self.dense.eval(t))
    }

    pub fn end_state(&self) -> FullState {
        FullState::from_flat(self.dense.states.last().expect("nonempty trajectory"))
    }

    pub fn min_pair_distance(&self) -> f64 {
        self.dense.min_pair_distance
    }
}

/// Integrate the full Newtonian 2N-body problem from `fs` for `span` time
/// units.
pub fn integrate_full(
    fs: &FullState,
    span: f64,
    params: &Params,
    opts: &IntegratorOptions,
) -> Result<FullTrajectory> {
    let sys = FullSystem {
        m: params.m,
        bodies: fs.body_count(),
        floor: opts.collision_floor(params),
    };
    let dense = propagate(&sys, fs.to_flat(), span, opts)?;
    Ok(FullTrajectory {
        dense,
        params: *params,
    })
}

/// Integrate both representations of the orbit at `(a, b)` over [0, span]
/// and return the maximum over time and bodies of the position discrepancy
/// between the embedded reduced solution and the full integration.
pub fn compare_reduced_full(
    a: f64,
    b: f64,
    span: f64,
    params: &Params,
    opts: &IntegratorOptions,
    samples: usize,
) -> Result<f64> {
    let reduced = crate::integrate::integrate(a, b, span, params, opts)?;
    let full = integrate_full(
        &embed(&reduced.state_at(0.0), a, params),
        span,
        params,
        opts,
    )?;
    let mut worst: f64 = 0.0;
    let n = samples.max(2);
    for i in 0..=n {
        let t = span * i as f64 / n as f64;
        let embedded = embed(&reduced.state_at(t), a, params);
        let direct = full.state_at(t);
        for (p, q) in embedded.positions.iter().zip(&direct.positions) {
            worst = worst.max((p - q).norm());
        }
    }
    Ok(worst)
}

/// Worst violation of the antiprism symmetry r_j = R^(j-1) r_1 over the
/// bodies of a state.
pub fn antiprism_defect(fs: &FullState, params: &Params) -> f64 {
    let gen = symmetry_generator(params.n);
    let mut expected = fs.positions[0];
    let mut worst: f64 = 0.0;
    for j in 1..fs.body_count() {
        expected = gen * expected;
        worst = worst.max((fs.positions[j] - expected).norm());
    }
    worst
}

/// Write `t,body,x,y,z,vx,vy,vz` rows sampled uniformly, 17 significant
/// digits.
pub fn write_full_csv<W: Write>(traj: &FullTrajectory, samples: usize, out: &mut W) -> Result<()> {
    writeln!(out, "t,body,x,y,z,vx,vy,vz")?;
    let n = samples.max(2);
    for i in 0..n {
        let t = traj.t_end() * i as f64 / (n - 1) as f64;
        let fs = traj.state_at(t);
        for (b, (p, v)) in fs.positions.iter().zip(&fs.velocities).enumerate() {
            writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t,
                b + 1,
                p[0],
                p[1],
                p[2],
                v[0],
                v[1],
                v[2]
            )?;
        }
    }
    Ok(())
}

/// Convenience: the embedded-trajectory view of a reduced trajectory at
/// sample times (used by the choreography arrival check).
pub fn embedded_state_at(traj: &Trajectory, t: f64) -> FullState {
    embed(&traj.state_at(t), traj.a, &traj.params)
}
