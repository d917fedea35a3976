//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Reference configuration N = 3, m = 1, r0 = 2 throughout. The published
//! reference points used as targets:
//!   q0 ≈ (1.91173, 0, 4.31023)          type-II seed on the trivial line
//!   B  = (1.34958, 0.727361, 7.05373)   bifurcation point on the double-symmetry branch
//!   qf = (0.259786, 0.780202, 5.80955)  collision end of that branch
//!   P1257 = (0.886201, 0.557961, 3.61393)   two-trajectory single-symmetry solution
//!   Q5010 = (0.581691, 0.810807, 6.53465)   choreography (θ0 = 5π/3)
//!   Q2878 = (1.37188, 0.717167, 6.95687)    three trajectories (θ0 = π)
//!   Q210  = (1.88461, 0.175173, 4.41712)    two trajectories (θ0 ≈ 2π/3)
//!   Q4225 = (0.827163, 0.825182, 7.28011)   six trajectories (θ0 ≈ 3π/2)

use hiphop_core::classify::{self, MatchOptions, NonChoreography, ParityMode, Symmetry};
use hiphop_core::continuation::{
    detect_bifurcations, switch_branch, trace_branch, Branch, ContinuationOptions,
    InitialDirection, Termination,
};
use hiphop_core::integrate::{self, IntegratorOptions};
use hiphop_core::model::{self, derived_constants};
use hiphop_core::shoot::{self, Constraint, ShootPoint, SolveOptions, SystemKind};
use hiphop_core::verify;
use hiphop_core::Params;
use std::f64::consts::PI;
use std::sync::OnceLock;

const B_REF: ShootPoint = ShootPoint {
    a: 1.34958,
    b: 0.727361,
    t: 7.05373,
};
const QF_REF: ShootPoint = ShootPoint {
    a: 0.259786,
    b: 0.780202,
    t: 5.80955,
};
const P1257: ShootPoint = ShootPoint {
    a: 0.886201,
    b: 0.557961,
    t: 3.61393,
};
const Q5010: ShootPoint = ShootPoint {
    a: 0.581691,
    b: 0.810807,
    t: 6.53465,
};
const Q2878: ShootPoint = ShootPoint {
    a: 1.37188,
    b: 0.717167,
    t: 6.95687,
};
const Q210: ShootPoint = ShootPoint {
    a: 1.88461,
    b: 0.175173,
    t: 4.41712,
};
const Q4225: ShootPoint = ShootPoint {
    a: 0.827163,
    b: 0.825182,
    t: 7.28011,
};

fn params() -> Params {
    Params::reference()
}

fn iopts() -> IntegratorOptions {
    IntegratorOptions::default()
}

fn trace_opts() -> ContinuationOptions {
    ContinuationOptions {
        h_max: 0.015,
        a_min: 0.25,
        max_points: 4000,
        ..Default::default()
    }
}

/// The double-symmetry (DSP) branch from q0, shared across criteria.
fn dsp() -> &'static Branch {
    static DSP: OnceLock<Branch> = OnceLock::new();
    DSP.get_or_init(|| {
        let p = params();
        let c = derived_constants(&p);
        let seed = ShootPoint::new(c.a0, 0.0, c.t0_ii);
        trace_branch(&seed, SystemKind::II, &p, &trace_opts()).expect("DSP trace")
    })
}

/// Single-symmetry (SSP) half-branches switched off the bifurcation
/// candidate near B.
struct SspData {
    candidate: ShootPoint,
    halves: Vec<Branch>,
}

fn ssp() -> &'static SspData {
    static SSP: OnceLock<SspData> = OnceLock::new();
    SSP.get_or_init(|| {
        let p = params();
        let parent = dsp();
        let candidates = detect_bifurcations(parent).expect("bifurcation detection");
        let near_b = candidates
            .iter()
            .min_by(|x, y| {
                let dx = x.point.point.distance(&B_REF);
                let dy = y.point.point.distance(&B_REF);
                dx.partial_cmp(&dy).unwrap()
            })
            .expect("at least one candidate");
        let seeds =
            switch_branch(&near_b.point, parent, &p, &parent.meta.options).expect("branch switch");
        let halves = seeds
            .iter()
            .map(|seed| {
                // trace outward, away from the candidate
                let dir = seed.as_vector() - near_b.point.point.as_vector();
                let opts = ContinuationOptions {
                    direction: InitialDirection::Along([dir[0], dir[1], dir[2]]),
                    max_points: 1200,
                    ..trace_opts()
                };
                trace_branch(seed, SystemKind::II, &p, &opts).expect("SSP trace")
            })
            .collect();
        SspData {
            candidate: near_b.point.point,
            halves,
        }
    })
}

fn check(criterion: u32, description: &str, ok: bool) {
    println!(
        "criterion {criterion:02} {} — {description}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {description}");
}

#[test]
fn criterion_01_derived_constants() {
    let c = derived_constants(&params());
    let ok = (c.a0 - 1.91173).abs() < 1e-5 && (c.t0_ii - 4.31023).abs() < 1e-5;
    check(1, "a0 = 1.91173 ± 1e-5 and T0_II = 4.31023 ± 1e-5", ok);
}

#[test]
fn criterion_02_sum_ratio_bound() {
    let bound = (4.0 + 2f64.sqrt()) / 8.0;
    let mut ok = true;
    for n in 2..=100 {
        let c = derived_constants(&Params::new(n, 1.0, 1.0).unwrap());
        let margin = bound - c.gamma / c.alpha;
        if margin < 0.0 {
            ok = false;
        }
    }
    check(
        2,
        "gamma/alpha <= (4+sqrt(2))/8 for N = 2..100 with margin >= 0",
        ok,
    );
}

#[test]
fn criterion_03_variational_oracles() {
    let p = params();
    let c = derived_constants(&p);
    let span = 2.0 * c.t0_ii;
    let vt = integrate::integrate_variational(c.a0, 0.0, span, &p, &iopts()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=800 {
        let t = span * i as f64 / 800.0;
        let v = vt.at(t);
        let lf = model::linearized_oracles(&p, t);
        worst = worst.max((v.dd_db - lf.d_b).abs());
        worst = worst.max((v.dddot_db - lf.d_bt).abs());
        worst = worst.max((v.dr_da - lf.r_a).abs());
        worst = worst.max((v.drdot_da - lf.r_at).abs());
        worst = worst.max(v.dr_db.abs());
    }
    check(
        3,
        &format!("variational flow matches closed forms to 1e-8 (max {worst:.2e})"),
        worst < 1e-8,
    );
}

#[test]
fn criterion_04_trivial_solution() {
    let p = params();
    let c = derived_constants(&p);
    let opts = iopts();
    let traj = integrate::integrate(c.a0, 0.0, 50.0, &p, &opts).unwrap();
    let floor = opts.collision_floor(&p);
    let e0 = model::energy(&traj.state_at(0.0), c.a0, &p, floor).unwrap();
    let mut worst_r: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for i in 0..=2000 {
        let t = 50.0 * i as f64 / 2000.0;
        let s = traj.state_at(t);
        worst_r = worst_r.max((s.r - 2.0).abs());
        worst_d = worst_d.max(s.d.abs());
        let e = model::energy(&s, c.a0, &p, floor).unwrap();
        worst_e = worst_e.max((e - e0).abs());
    }
    check(
        4,
        &format!("trivial orbit over T=50: |r-2| {worst_r:.2e} < 1e-9, |d| {worst_d:.2e} < 1e-12, energy drift {worst_e:.2e} < 1e-9"),
        worst_r < 1e-9 && worst_d < 1e-12 && worst_e < 1e-9,
    );
}

#[test]
fn criterion_05_jacobian_at_b() {
    let p = params();
    // re-solve system II at the published b of B, then compare gradient rows
    let constraint = Constraint::fix_coordinate(1, &B_REF);
    let solved = shoot::newton_solve(
        &B_REF,
        SystemKind::II,
        &constraint,
        &p,
        &iopts(),
        &SolveOptions::default(),
    )
    .expect("re-solve near B");
    let j = solved.jacobian;
    let grad_rt = [1.44703, 5.44591, -0.229381];
    let grad_d = [4.58986, 17.2712, -0.727943];
    let mut worst: f64 = 0.0;
    for col in 0..3 {
        worst = worst.max(((j[(0, col)] - grad_rt[col]) / grad_rt[col]).abs());
        worst = worst.max(((j[(1, col)] - grad_d[col]) / grad_d[col]).abs());
    }
    check(
        5,
        &format!("gradient rows at B match published values to 1e-2 relative (worst {worst:.2e})"),
        worst < 1e-2,
    );
}

#[test]
fn criterion_06_dsp_branch_reproduction() {
    let p = params();
    let branch = dsp();
    let d_b = branch.distance_to(&B_REF);
    let min_a = branch
        .points
        .iter()
        .map(|bp| bp.point.a)
        .fold(f64::INFINITY, f64::min);
    let d_qf = branch
        .points
        .iter()
        .map(|bp| bp.point.distance(&QF_REF))
        .fold(f64::INFINITY, f64::min);
    // every branch point re-validates below the published filter level
    let mut worst_res: f64 = 0.0;
    for bp in &branch.points {
        let (r, _) = shoot::residual_only(&bp.point, SystemKind::II, &p, &iopts()).unwrap();
        worst_res = worst_res.max(r.amax());
    }
    check(
        6,
        &format!(
            "DSP branch: dist to B {d_b:.2e} < 1e-2, min a {min_a:.3} < 0.30, dist to qf {d_qf:.2e} < 5e-2, max residual {worst_res:.2e} < 1e-4 ({} points, termination {:?})",
            branch.points.len(),
            branch.meta.termination
        ),
        d_b < 1e-2
            && min_a < 0.30
            && d_qf < 5e-2
            && worst_res < 1e-4
            && branch.meta.termination == Termination::AngularMomentumFloor,
    );
}

#[test]
fn criterion_07_bifurcation_and_branch_switch() {
    let p = params();
    let candidates = detect_bifurcations(dsp()).unwrap();
    let near_b = candidates
        .iter()
        .filter(|c| c.point.point.distance(&B_REF) < 1e-2)
        .count();

    let data = ssp();
    // the bifurcation point itself still has double symmetry; the candidate
    // is located to ~1e-6 arclength, so the halved-time residual carries a
    // gradient-times-offset error and the test runs at 1e-4
    let cand_symmetry = classify::symmetry_class(&data.candidate, &p, 1e-4, &iopts()).unwrap();

    // the switched branch passes P1257 and is single-symmetric there
    let (half, dist) = data
        .halves
        .iter()
        .map(|h| (h, h.distance_to(&P1257)))
        .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        .unwrap();
    let nearest = half.points[half.nearest_index(&P1257)].point;
    let symmetry = classify::symmetry_class(&nearest, &p, 1e-6, &iopts()).unwrap();

    // refine theta0 to the published integer match and verify the defect
    let target = (PI / 3.0 + 13.0 * PI) / 13.0;
    let refined =
        classify::choreography_refine(half, target, &p, &iopts()).expect("theta refinement on SSP");
    let refined_dist = refined.distance(&P1257);
    let theta = classify::theta_half_period(&refined, &p, &iopts()).unwrap();
    let defect = (13.0 * theta - (PI / 3.0 + 13.0 * PI)).abs();

    check(
        7,
        &format!(
            "exactly one candidate within 1e-2 of B (got {near_b}); SSP branch within {dist:.2e} of P1257, Single symmetry ({symmetry}), refined point at {refined_dist:.2e} with 13θ0 defect {defect:.2e} < 1e-3"
        ),
        near_b == 1
            && cand_symmetry == Symmetry::Double
            && dist < 5e-2
            && symmetry == Symmetry::Single
            && refined_dist < 5e-2
            && defect < 1e-3,
    );
}

#[test]
fn criterion_08_choreography_refinement() {
    let p = params();
    let branch = dsp();
    let mut ok = true;
    let mut notes = Vec::new();
    for (target, reference) in [(5.0 * PI / 3.0, Q5010), (PI, Q2878)] {
        let pt = classify::choreography_refine(branch, target, &p, &iopts()).expect("refinement");
        let dist = pt.distance(&reference);
        ok &= dist < 1e-2;

        // forward integration over k0*T: body 1 arrives at body (1+j0)'s start
        let m = classify::rational_match(target, p.n, &MatchOptions::default()).unwrap();
        let traj = integrate::integrate(pt.a, pt.b, m.k0 as f64 * pt.t, &p, &iopts()).unwrap();
        let start = verify::embedded_state_at(&traj, 0.0);
        let end = verify::embedded_state_at(&traj, traj.t_end());
        let arrival = m.j0 as usize; // body 1 is index 0, body 1+j0 is index j0
        let pos_err = (end.positions[0] - start.positions[arrival]).norm();
        let vel_err = (end.velocities[0] - start.velocities[arrival]).norm();
        ok &= pos_err < 1e-6 && vel_err < 1e-6;
        notes.push(format!(
            "target {target:.4}: dist {dist:.2e}, arrival body {} pos err {pos_err:.2e}, vel err {vel_err:.2e}",
            arrival + 1
        ));
    }
    check(
        8,
        &format!("choreography refinement: {}", notes.join("; ")),
        ok,
    );
}

#[test]
fn criterion_09_trajectory_counting() {
    let p = params();
    let branch = dsp();
    let mut ok = true;
    let mut notes = Vec::new();
    // nearest-point theta0 carries O(step) error; the integer match runs at
    // a widened defect tolerance with k_max covering the published k0
    let match_opts = MatchOptions {
        k_max: 6,
        tol: 5e-2,
        parity: ParityMode::BothParities,
    };
    for (reference, theta_ref, expected_count) in [(Q210, 2.0 * PI / 3.0, 2), (Q4225, 1.5 * PI, 6)]
    {
        let nearest = branch.points[branch.nearest_index(&reference)];
        let theta_err = (nearest.theta0 - theta_ref).abs();
        ok &= theta_err < 1e-2;
        let m = classify::rational_match(nearest.theta0, p.n, &match_opts)
            .expect("integer match at nearest point");
        let count = classify::trajectory_count(&m, p.n);
        ok &= count == expected_count;
        notes.push(format!(
            "near ({:.4},{:.4},{:.4}): θ0 err {theta_err:.2e}, k0={}, j0={}, count {count}",
            reference.a, reference.b, reference.t, m.k0, m.j0
        ));
    }
    check(9, &format!("trajectory counts: {}", notes.join("; ")), ok);
}

#[test]
fn criterion_10_non_choreography_criterion() {
    let p = params();
    let data = ssp();
    let mut ok = true;
    let mut checked_ssp = 0;
    for half in &data.halves {
        for bp in half.points.iter().step_by(25) {
            if bp.point.distance(&data.candidate) < 0.5 {
                continue; // near B the branch degenerates to double symmetry
            }
            let verdict = classify::non_choreography_check(&bp.point, &p, 1e-6, &iopts()).unwrap();
            ok &= verdict == NonChoreography::CriterionHolds;
            // single symmetry, failing the halved type-I test by a margin
            ok &= classify::symmetry_class(&bp.point, &p, 1e-6, &iopts()).unwrap()
                == Symmetry::Single;
            let half = ShootPoint::new(bp.point.a, bp.point.b, 0.5 * bp.point.t);
            let (res_i, _) = shoot::residual_only(&half, SystemKind::I, &p, &iopts()).unwrap();
            ok &= res_i.amax() > 1e-5;
            checked_ssp += 1;
        }
    }
    let mut checked_dsp = 0;
    for bp in dsp().points.iter().step_by(30) {
        let verdict = classify::non_choreography_check(&bp.point, &p, 1e-6, &iopts()).unwrap();
        ok &= verdict == NonChoreography::CriterionFails;
        ok &= classify::symmetry_class(&bp.point, &p, 1e-6, &iopts()).unwrap() == Symmetry::Double;
        checked_dsp += 1;
    }
    check(
        10,
        &format!("non-choreography criterion holds (and symmetry is Single) on {checked_ssp} SSP points; fails (and symmetry is Double) on {checked_dsp} DSP points"),
        ok && checked_ssp >= 10 && checked_dsp >= 8,
    );
}

#[test]
fn criterion_11_reduced_full_equivalence() {
    let p = params();
    let opts = iopts();
    let branch = dsp();
    let picks = [
        branch.nearest_index(&Q210),
        branch.points.len() / 2,
        branch.nearest_index(&Q2878),
    ];
    let mut ok = true;
    let mut worst_dev: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    for idx in picks {
        let pt = branch.points[idx].point;
        let period = 2.0 * pt.t;
        let dev = verify::compare_reduced_full(pt.a, pt.b, period, &p, &opts, 200).unwrap();
        worst_dev = worst_dev.max(dev);
        ok &= dev < 1e-6;

        let fs = verify::embed(&hiphop_core::ReducedState::initial(p.r0, pt.b), pt.a, &p);
        let e0 = fs.total_energy(p.m);
        let l0 = fs.total_angular_momentum(p.m);
        let full = verify::integrate_full(&fs, period, &p, &opts).unwrap();
        for i in 0..=50 {
            let t = period * i as f64 / 50.0;
            let s = full.state_at(t);
            worst_e = worst_e.max((s.total_energy(p.m) - e0).abs());
            worst_l = worst_l.max((s.total_angular_momentum(p.m) - l0).norm());
        }
        ok &= worst_e < 1e-8 && worst_l < 1e-8;
    }
    check(
        11,
        &format!("reduced/full deviation {worst_dev:.2e} < 1e-6; energy drift {worst_e:.2e}, angular momentum drift {worst_l:.2e} < 1e-8"),
        ok,
    );
}

#[test]
fn criterion_12_property_suite() {
    let p = params();
    let c = derived_constants(&p);
    let opts = iopts();
    let mut ok = true;
    let mut notes = Vec::new();

    // type-I point via shooting, its reflection symmetries and periodicity
    let seed = ShootPoint::new(c.a0, 0.3, c.t0_i);
    let type_i = shoot::newton_solve(
        &seed,
        SystemKind::I,
        &Constraint::fix_coordinate(1, &seed),
        &p,
        &opts,
        &SolveOptions::default(),
    )
    .unwrap()
    .point;
    let (wr, wd) = shoot::symmetry_defect(&type_i, SystemKind::I, 80, &p, &opts).unwrap();
    ok &= wr < 1e-8 && wd < 1e-8;
    notes.push(format!("type-I evenness defects ({wr:.1e}, {wd:.1e})"));

    let traj4 = integrate::integrate(type_i.a, type_i.b, 4.0 * type_i.t, &p, &opts).unwrap();
    let end4 = traj4.end_state();
    let per4 = (end4.r - p.r0)
        .abs()
        .max(end4.r_dot.abs())
        .max(end4.d.abs())
        .max((end4.d_dot - type_i.b).abs());
    ok &= per4 < 1e-7;
    notes.push(format!("4T-periodicity {per4:.1e}"));

    // doubling the matching time turns a type-I point into a type-II one
    let doubled = ShootPoint::new(type_i.a, type_i.b, 2.0 * type_i.t);
    let (res2, _) = shoot::residual_only(&doubled, SystemKind::II, &p, &opts).unwrap();
    ok &= res2.amax() < 1e-9;
    notes.push(format!(
        "doubled point system-II residual {:.1e}",
        res2.amax()
    ));
    let (wr2, wd2) = shoot::symmetry_defect(&doubled, SystemKind::II, 80, &p, &opts).unwrap();
    let traj2 = integrate::integrate(doubled.a, doubled.b, 2.0 * doubled.t, &p, &opts).unwrap();
    let end2 = traj2.end_state();
    let per2 = (end2.r - p.r0)
        .abs()
        .max(end2.r_dot.abs())
        .max(end2.d.abs())
        .max((end2.d_dot - doubled.b).abs());
    ok &= wr2 < 1e-7 && wd2 < 1e-7 && per2 < 1e-7;
    notes.push(format!(
        "2T symmetry/periodicity ({wr2:.1e}, {wd2:.1e}, {per2:.1e})"
    ));

    // finite-difference agreement of the shooting Jacobian
    let probe = ShootPoint::new(1.6, 0.45, 5.5);
    let j = shoot::jacobian(&probe, SystemKind::II, false, &p, &opts).unwrap();
    let h = 1e-6;
    let mut fd_worst: f64 = 0.0;
    for col in 0..3 {
        let mut up = probe;
        let mut dn = probe;
        match col {
            0 => {
                up.a += h;
                dn.a -= h;
            }
            1 => {
                up.b += h;
                dn.b -= h;
            }
            _ => {
                up.t += h;
                dn.t -= h;
            }
        }
        let (rp, _) = shoot::residual_only(&up, SystemKind::II, &p, &opts).unwrap();
        let (rm, _) = shoot::residual_only(&dn, SystemKind::II, &p, &opts).unwrap();
        for row in 0..2 {
            let fd = (rp[row] - rm[row]) / (2.0 * h);
            fd_worst = fd_worst.max(((j[(row, col)] - fd) / fd.abs().max(1e-3)).abs());
        }
    }
    ok &= fd_worst < 1e-5;
    notes.push(format!("jacobian FD agreement {fd_worst:.1e}"));

    // step-halving stability over a common sub-branch
    let coarse_opts = ContinuationOptions {
        max_points: 60,
        ..trace_opts()
    };
    let fine_opts = ContinuationOptions {
        h0: coarse_opts.h0 / 2.0,
        h_max: coarse_opts.h_max / 2.0,
        max_points: 150,
        ..coarse_opts
    };
    let q0 = ShootPoint::new(c.a0, 0.0, c.t0_ii);
    let coarse = trace_branch(&q0, SystemKind::II, &p, &coarse_opts).unwrap();
    let fine = trace_branch(&q0, SystemKind::II, &p, &fine_opts).unwrap();
    let hausdorff = common_extent_hausdorff(&coarse, &fine);
    ok &= hausdorff < 1e-4;
    notes.push(format!("step-halving Hausdorff {hausdorff:.1e}"));

    check(12, &notes.join("; "), ok);
}

/// Symmetric Hausdorff distance between two branches restricted to their
/// common arclength extent.
fn common_extent_hausdorff(x: &Branch, y: &Branch) -> f64 {
    let arc = |b: &Branch| -> Vec<f64> {
        let mut acc = vec![0.0];
        for w in b.points.windows(2) {
            acc.push(acc.last().unwrap() + w[0].point.distance(&w[1].point));
        }
        acc
    };
    let ax = arc(x);
    let ay = arc(y);
    let common = ax.last().unwrap().min(*ay.last().unwrap());
    let mut worst: f64 = 0.0;
    for (b, arcs, other) in [(x, &ax, y), (y, &ay, x)] {
        for (i, bp) in b.points.iter().enumerate() {
            if arcs[i] > common {
                break;
            }
            worst = worst.max(other.distance_to(&bp.point));
        }
    }
    worst
}
