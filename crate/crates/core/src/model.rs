//! Reduced equations of motion for the equal-mass 2N-body hip-hop problem.
//!
//! The 2N bodies sit at the vertices of an antiprism: two regular N-gons of
//! radius `r` in the planes z = ±d, rotated against each other by π/N. With
//! the angular momentum `a` of one body about the z-axis, the motion reduces
//! to
//!
//! ```text
//!   r̈ = a²/r³ − 2 r m f(r, d)
//!   d̈ = −(m d / 2) g(r, d)
//!   θ̇ = a / r²
//! ```
//!
//! where `f` and `g` are finite sums over the 2N−1 companion bodies. This
//! module owns those sums, their partial derivatives (for the variational
//! equations), the derived constants of the circular relative equilibrium,
//! the conserved energy used as a test oracle, and the closed-form solutions
//! of the variational equations along the circular solution.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Problem constants: `n` bodies per N-gon (2N bodies total), mass `m` per
/// body, initial ring radius `r0`. Gravitational constant is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    pub m: f64,
    pub r0: f64,
}

impl Params {
    pub fn new(n: u32, m: f64, r0: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
        }
        if !(m > 0.0) {
            return Err(Error::InvalidParams(format!("need m > 0, got {m}")));
        }
        if !(r0 > 0.0) {
            return Err(Error::InvalidParams(format!("need r0 > 0, got {r0}")));
        }
        Ok(Self { n, m, r0 })
    }

    /// Reference configuration used throughout the test suite.
    pub fn reference() -> Self {
        Self {
            n: 3,
            m: 1.0,
            r0: 2.0,
        }
    }

    /// Default collision floor: 1e-8 · r0.
    pub fn default_collision_floor(&self) -> f64 {
        1e-8 * self.r0
    }
}

/// Constants derived from `Params`.
///
/// `alpha` and `gamma` are the dimensionless lattice sums of the antiprism;
/// `a0` is the angular momentum of the circular solution, `t0_i`/`t0_ii` the
/// matching times at which the type-I/type-II families branch off the
/// circular solution, and `omega_r`/`omega_z` the radial and vertical
/// frequencies of the linearized motion about it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub a0: f64,
    pub t0_i: f64,
    pub t0_ii: f64,
    pub omega_r: f64,
    pub omega_z: f64,
}

/// Reduced phase point: ring radius, half-gap height, accumulated rotation
/// angle, and their velocities. `d_dot(0)` is the shooting parameter `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub r: f64,
    pub r_dot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub theta: f64,
}

impl ReducedState {
    /// Canonical initial condition of the shooting problem.
    pub fn initial(r0: f64, b: f64) -> Self {
        Self {
            r: r0,
            r_dot: 0.0,
            d: 0.0,
            d_dot: b,
            theta: 0.0,
        }
    }
}

/// Time derivative of a `ReducedState`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedDerivative {
    pub r_dot: f64,
    pub r_ddot: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
    pub theta_dot: f64,
}

/// The force sums and their partial derivatives at a point (r, d).
#[derive(Debug, Clone, Copy)]
pub struct ForceSums {
    pub f: f64,
    pub g: f64,
    pub f_r: f64,
    pub f_d: f64,
    pub g_r: f64,
    pub g_d: f64,
    /// Smallest pairwise distance among the 2N−1 companion terms.
    pub min_dist: f64,
}

/// Evaluate the derived constants.
///
/// `alpha = (1/16) Σ ((−1)^k − 1)² / sin³(kπ/2N)` and
/// `gamma = (1/4) Σ 1 / sin(kπ/2N)`, k = 1..2N−1; `a0² = m γ r0`,
/// `t0_i = (π/2) √(r0³/(m α))`, `t0_ii = 2 t0_i`.
pub fn derived_constants(params: &Params) -> DerivedConstants {
    let n = params.n as f64;
    let mut alpha = 0.0;
    let mut gamma = 0.0;
    for k in 1..2 * params.n {
        let s = (k as f64 * PI / (2.0 * n)).sin();
        let c = if k % 2 == 1 { 4.0 } else { 0.0 }; // ((−1)^k − 1)²
        alpha += c / (s * s * s);
        gamma += 1.0 / s;
    }
    alpha /= 16.0;
    gamma /= 4.0;
    let a0 = (params.m * gamma * params.r0).sqrt();
    let omega_z = (params.m * alpha / params.r0.powi(3)).sqrt();
    let omega_r = (params.m * gamma / params.r0.powi(3)).sqrt();
    let t0_i = 0.5 * PI / omega_z;
    DerivedConstants {
        alpha,
        gamma,
        a0,
        t0_i,
        t0_ii: 2.0 * t0_i,
        omega_r,
        omega_z,
    }
}

/// Force sums `f`, `g` together with their r- and d-derivatives.
///
/// The k-th pairwise distance is `√(4r² sin²(kπ/2N) + ((−1)^k−1)² d²)`; any
/// distance below `floor` is a collision.
pub fn force_sums_full(r: f64, d: f64, n: u32, floor: f64) -> Result<ForceSums> {
    let nn = n as f64;
    let mut out = ForceSums {
        f: 0.0,
        g: 0.0,
        f_r: 0.0,
        f_d: 0.0,
        g_r: 0.0,
        g_d: 0.0,
        min_dist: f64::INFINITY,
    };
    for k in 1..2 * n {
        let s2 = (k as f64 * PI / (2.0 * nn)).sin().powi(2);
        let c2 = if k % 2 == 1 { 4.0 } else { 0.0 };
        let den = 4.0 * r * r * s2 + c2 * d * d;
        let dist = den.sqrt();
        if !(dist > floor) {
            return Err(Error::Collision {
                t: f64::NAN,
                min_dist: dist,
                floor,
            });
        }
        out.min_dist = out.min_dist.min(dist);
        let dm32 = 1.0 / (den * dist); // den^(-3/2)
        let dm52 = dm32 / den; // den^(-5/2)
        out.f += s2 * dm32;
        out.g += c2 * dm32;
        out.f_r += s2 * s2 * dm52;
        out.f_d += s2 * c2 * dm52;
        out.g_r += c2 * s2 * dm52;
        out.g_d += c2 * c2 * dm52;
    }
    out.f_r *= -12.0 * r;
    out.f_d *= -3.0 * d;
    out.g_r *= -12.0 * r;
    out.g_d *= -3.0 * d;
    Ok(out)
}

/// The plain force sums (f, g).
pub fn force_sums(r: f64, d: f64, n: u32, floor: f64) -> Result<(f64, f64)> {
    let s = force_sums_full(r, d, n, floor)?;
    Ok((s.f, s.g))
}

/// Right-hand side of the reduced system at `state` with angular momentum `a`.
pub fn rhs(state: &ReducedState, a: f64, params: &Params, floor: f64) -> Result<ReducedDerivative> {
    let s = force_sums_full(state.r, state.d, params.n, floor)?;
    let r3 = state.r.powi(3);
    Ok(ReducedDerivative {
        r_dot: state.r_dot,
        r_ddot: a * a / r3 - 2.0 * state.r * params.m * s.f,
        d_dot: state.d_dot,
        d_ddot: -0.5 * params.m * state.d * s.g,
        theta_dot: a / (state.r * state.r),
    })
}

/// Potential part of the reduced energy (per body, up to the constant mass
/// factor used below): `−(m/2) Σ 1/dist_k`.
pub fn potential(r: f64, d: f64, params: &Params, floor: f64) -> Result<f64> {
    let nn = params.n as f64;
    let mut u = 0.0;
    for k in 1..2 * params.n {
        let s2 = (k as f64 * PI / (2.0 * nn)).sin().powi(2);
        let c2 = if k % 2 == 1 { 4.0 } else { 0.0 };
        let dist = (4.0 * r * r * s2 + c2 * d * d).sqrt();
        if !(dist > floor) {
            return Err(Error::Collision {
                t: f64::NAN,
                min_dist: dist,
                floor,
            });
        }
        u -= 1.0 / dist;
    }
    Ok(0.5 * params.m * u)
}

/// First integral of the reduced system; a pure test oracle, never used
/// inside the dynamics.
pub fn energy(state: &ReducedState, a: f64, params: &Params, floor: f64) -> Result<f64> {
    let kinetic = 0.5 * (state.r_dot * state.r_dot + state.d_dot * state.d_dot);
    let centrifugal = 0.5 * a * a / (state.r * state.r);
    Ok(kinetic + centrifugal + potential(state.r, state.d, params, floor)?)
}

/// Closed-form partial derivatives of the flow along the circular solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedFlow {
    /// ∂d/∂b and its time derivative.
    pub d_b: f64,
    pub d_bt: f64,
    /// ∂r/∂a and its time derivative.
    pub r_a: f64,
    pub r_at: f64,
    /// ∂r/∂b, identically zero along the circular solution.
    pub r_b: f64,
}

/// Closed forms of the variational solutions along the circular solution:
/// `d_b = sin(ω_z t)/ω_z`, `d_bt = cos(ω_z t)`,
/// `r_a = 2(1 − cos(ω_r t))/(ω_r r0)`, `r_at = 2 sin(ω_r t)/r0`, `r_b = 0`.
///
/// These are the oracles the variational integrator is tested against.
pub fn linearized_oracles(params: &Params, t: f64) -> LinearizedFlow {
    let c = derived_constants(params);
    LinearizedFlow {
        d_b: (c.omega_z * t).sin() / c.omega_z,
        d_bt: (c.omega_z * t).cos(),
        r_a: 2.0 / (c.omega_r * params.r0) * (1.0 - (c.omega_r * t).cos()),
        r_at: 2.0 / params.r0 * (c.omega_r * t).sin(),
        r_b: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> (Params, DerivedConstants) {
        let p = Params::reference();
        let c = derived_constants(&p);
        (p, c)
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(1, 1.0, 1.0).is_err());
        assert!(Params::new(3, 0.0, 1.0).is_err());
        assert!(Params::new(3, 1.0, -2.0).is_err());
        assert!(Params::new(2, 1.0, 1.0).is_ok());
    }

    #[test]
    fn constants_n3() {
        let (_, c) = reference();
        // alpha(3) = 17/4 exactly: even-k terms vanish, odd terms give
        // (1/4)(8 + 1 + 8).
        assert_relative_eq!(c.alpha, 4.25, max_relative = 1e-14);
        // gamma(3) = 5/4 + 1/sqrt(3)
        assert_relative_eq!(c.gamma, 1.25 + 1.0 / 3f64.sqrt(), max_relative = 1e-14);
        // values reported for the reference configuration
        assert!((c.a0 - 1.91173).abs() < 1e-5);
        assert!((c.t0_ii - 4.31023).abs() < 1e-5);
        assert_relative_eq!(c.t0_ii, 2.0 * c.t0_i, max_relative = 1e-15);
        assert_relative_eq!(c.a0 * c.a0, c.gamma * 2.0, max_relative = 1e-14);
        // omega_z * t0_i = pi/2 by construction
        assert_relative_eq!(c.omega_z * c.t0_i, PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn sum_ratio_bound_n2_to_100() {
        // gamma/alpha <= (4+sqrt(2))/8, with equality at N = 2.
        let bound = (4.0 + 2f64.sqrt()) / 8.0;
        for n in 2..=100 {
            let c = derived_constants(&Params::new(n, 1.0, 1.0).unwrap());
            assert!(c.alpha > 0.0 && c.gamma > 0.0);
            let margin = bound - c.gamma / c.alpha;
            assert!(margin >= -1e-13, "N={n}: margin {margin}");
        }
    }

    #[test]
    fn force_sums_planar_identities() {
        let (p, c) = reference();
        let (f, g) = force_sums(2.0, 0.0, p.n, 1e-12).unwrap();
        // f(r,0) = gamma/(2 r^3), g(r,0) = 2 alpha / r^3
        assert_relative_eq!(f, c.gamma / 16.0, max_relative = 1e-14);
        assert_relative_eq!(f, 0.11420939182435164, max_relative = 1e-14);
        assert_relative_eq!(g, 2.0 * c.alpha / 8.0, max_relative = 1e-14);
        assert_relative_eq!(g, 1.0625, max_relative = 1e-14);
    }

    #[test]
    fn force_sum_g_decays_in_d() {
        // every g-term decays like d^-3, so g is monotone decreasing in |d|
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let d = 2.5 * i as f64;
            let (_, g) = force_sums(1.0, d, 3, 1e-12).unwrap();
            assert!(g < prev || (i == 0 && g == prev));
            prev = g;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn force_sums_frozen_value() {
        // frozen from the brute-force pairwise sum over the antiprism
        // vertices (see tests/properties.rs for the live oracle)
        let (f, g) = force_sums(2.0, 0.5, 3, 1e-12).unwrap();
        assert_relative_eq!(f, 0.09507255284707286, max_relative = 1e-14);
        assert_relative_eq!(g, 0.7726089586908348, max_relative = 1e-13);
    }

    #[test]
    fn collision_floor_raises() {
        let err = force_sums(1.0, 0.0, 3, 1.5).unwrap_err();
        assert!(matches!(err, Error::Collision { .. }));
    }

    #[test]
    fn rhs_circular_equilibrium() {
        let (p, c) = reference();
        let state = ReducedState::initial(p.r0, 0.0);
        let der = rhs(&state, c.a0, &p, 1e-12).unwrap();
        assert!(der.r_ddot.abs() < 1e-14);
        assert_eq!(der.d_ddot, 0.0);
        assert_eq!(der.r_dot, 0.0);
        assert_relative_eq!(der.theta_dot, c.a0 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn rhs_gap_acceleration_odd() {
        // d = 0 kills the vertical acceleration regardless of d_dot
        let (p, c) = reference();
        let state = ReducedState {
            r: 2.0,
            r_dot: 0.0,
            d: 0.0,
            d_dot: 0.7,
            theta: 0.0,
        };
        let der = rhs(&state, c.a0, &p, 1e-12).unwrap();
        assert_eq!(der.d_ddot, 0.0);

        // F even / G odd in d
        let s1 = ReducedState {
            r: 1.7,
            r_dot: 0.1,
            d: 0.4,
            d_dot: 0.2,
            theta: 0.0,
        };
        let s2 = ReducedState { d: -0.4, ..s1 };
        let d1 = rhs(&s1, 1.3, &p, 1e-12).unwrap();
        let d2 = rhs(&s2, 1.3, &p, 1e-12).unwrap();
        assert_relative_eq!(d1.r_ddot, d2.r_ddot, max_relative = 1e-14);
        assert_relative_eq!(d1.d_ddot, -d2.d_ddot, max_relative = 1e-14);
    }

    #[test]
    fn energy_trivial_and_parity() {
        let (p, c) = reference();
        let state = ReducedState::initial(p.r0, 0.0);
        let e = energy(&state, c.a0, &p, 1e-12).unwrap();
        // E = -m gamma / (2 r0) = -gamma/4 for the reference configuration
        assert_relative_eq!(e, -c.gamma / 4.0, max_relative = 1e-13);
        assert_relative_eq!(e, -0.45683756729740654, max_relative = 1e-13);

        // E even in d_dot
        let s1 = ReducedState {
            r: 1.9,
            r_dot: 0.2,
            d: 0.3,
            d_dot: 0.5,
            theta: 1.0,
        };
        let s2 = ReducedState { d_dot: -0.5, ..s1 };
        let e1 = energy(&s1, 1.5, &p, 1e-12).unwrap();
        let e2 = energy(&s2, 1.5, &p, 1e-12).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn energy_gradient_matches_forces() {
        // central differences of the potential reproduce the force terms
        let p = Params::reference();
        let h = 1e-6;
        for &(r, d) in &[(2.0, 0.3), (1.2, 0.8), (0.7, 0.05), (3.5, 1.7)] {
            let s = force_sums_full(r, d, p.n, 1e-12).unwrap();
            let du_dr = (potential(r + h, d, &p, 1e-12).unwrap()
                - potential(r - h, d, &p, 1e-12).unwrap())
                / (2.0 * h);
            let du_dd = (potential(r, d + h, &p, 1e-12).unwrap()
                - potential(r, d - h, &p, 1e-12).unwrap())
                / (2.0 * h);
            // dU/dr = 2 r m f, dU/dd = (m d / 2) g
            assert_relative_eq!(du_dr, 2.0 * r * p.m * s.f, max_relative = 1e-6);
            assert_relative_eq!(du_dd, 0.5 * p.m * d * s.g, max_relative = 1e-6);
        }
    }

    #[test]
    fn force_sum_derivatives_match_finite_differences() {
        let h = 1e-6;
        for &(r, d) in &[(2.0, 0.5), (1.1, 1.3), (0.8, 0.1)] {
            let s = force_sums_full(r, d, 3, 1e-12).unwrap();
            let fp = force_sums_full(r + h, d, 3, 1e-12).unwrap();
            let fm = force_sums_full(r - h, d, 3, 1e-12).unwrap();
            assert_relative_eq!(s.f_r, (fp.f - fm.f) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(s.g_r, (fp.g - fm.g) / (2.0 * h), max_relative = 1e-6);
            let dp = force_sums_full(r, d + h, 3, 1e-12).unwrap();
            let dm = force_sums_full(r, d - h, 3, 1e-12).unwrap();
            assert_relative_eq!(s.f_d, (dp.f - dm.f) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(s.g_d, (dp.g - dm.g) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn linearized_oracles_initial_values() {
        let p = Params::reference();
        let lf = linearized_oracles(&p, 0.0);
        assert_eq!(
            (lf.d_b, lf.d_bt, lf.r_a, lf.r_at, lf.r_b),
            (0.0, 1.0, 0.0, 0.0, 0.0)
        );

        let c = derived_constants(&p);
        let at_t0 = linearized_oracles(&p, c.t0_i);
        // d_bt(t0_i) = cos(pi/2) = 0: the gradient of the vertical-velocity
        // residual degenerates there
        assert!(at_t0.d_bt.abs() < 1e-15);
        // while r_at(t0_i) = (2/r0) sin(omega_r t0_i) stays away from zero
        assert_relative_eq!(at_t0.r_at, 0.8572978757408434, max_relative = 1e-13);
        assert_relative_eq!(at_t0.d_b, 1.3719886811400703, max_relative = 1e-13);
        assert_relative_eq!(at_t0.r_a, 1.0151643477741736, max_relative = 1e-13);
    }
}
