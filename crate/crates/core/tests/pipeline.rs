//! Cross-module checks: simulator against the Green-function solution,
//! trajectory invariants, and invariants of the assembled solution.

mod common;

use common::{certified, compliant, dichotomy, linear, physical_min, SQRT2};
use impulsive_ap::evolution::{bounded_solution_with_tail, tail_length, LinearImpulsiveData};
use impulsive_ap::sim::{SimSettings, Simulator};
use impulsive_ap::solver::{integral_residual, outer_solve, simulation_discrepancy, SolverSettings};
use impulsive_ap::system::{Forcing, ImpulseSystem};
use impulsive_ap::trig::TrigSum;
use impulsive_ap::{Error, SpectralVec};

fn profile_data(sys: &ImpulseSystem) -> (Vec<TrigSum>, Vec<(f64, SpectralVec)>) {
    let profile = match &sys.forcing {
        Forcing::Profile(p) => p.clone(),
        _ => unreachable!(),
    };
    let jumps = (-80..=80)
        .map(|j| (sys.surfaces.base(j), sys.jumps.offset(j)))
        .collect();
    (profile, jumps)
}

#[test]
fn bounded_solution_stable_under_tail_doubling() {
    let sys = linear(4, TrigSum::from_triples(&[[0.4, SQRT2, 0.0]]));
    let dich = dichotomy(&sys, 3);
    let (profile, jumps) = profile_data(&sys);
    let forcing = move |t: f64| SpectralVec(profile.iter().map(|p| p.value(t)).collect());
    let data = LinearImpulsiveData {
        forcing: &forcing,
        forcing_sup: sys.forcing.sup_at_zero(),
        forcing_breaks: vec![],
        jumps,
        data_window: (-80.0, 80.0),
    };
    let tol = 1e-8;
    let tail = tail_length(&data, &dich, tol);
    let times = [-1.3, 0.1, 0.7, 2.9];
    let a = bounded_solution_with_tail(&data, &sys.coeff, &dich, &times, tail, tol).unwrap();
    let b = bounded_solution_with_tail(&data, &sys.coeff, &dich, &times, 2.0 * tail, tol).unwrap();
    for t in times {
        let d = sys.norm(&(&a.trajectory.eval(t).unwrap() - &b.trajectory.eval(t).unwrap()));
        assert!(d < tol, "t = {t}: {d:e}");
    }
}

#[test]
fn simulation_reproduces_fixed_moment_solution() {
    let sys = linear(8, TrigSum::from_triples(&[[0.4, SQRT2, 0.0]]));
    let dich = dichotomy(&sys, 3);
    let (profile, jumps) = profile_data(&sys);
    let forcing = move |t: f64| SpectralVec(profile.iter().map(|p| p.value(t)).collect());
    let data = LinearImpulsiveData {
        forcing: &forcing,
        forcing_sup: sys.forcing.sup_at_zero(),
        forcing_breaks: vec![],
        jumps,
        data_window: (-80.0, 80.0),
    };
    let tail = tail_length(&data, &dich, 1e-12);
    let t0 = 0.25;
    let start = bounded_solution_with_tail(&data, &sys.coeff, &dich, &[t0 - 0.5, t0, t0 + 0.5], tail, 1e-12)
        .unwrap()
        .trajectory
        .right_limit(t0)
        .unwrap();
    let sim = Simulator::new(&sys, SimSettings::default());
    let out = sim.simulate(t0, &start, 4.0, &|_| false).unwrap();
    assert_eq!(out.trajectory.hits.len(), 3);
    // interior nodes only: segment ends sit on the impulse moments
    let mut times = Vec::new();
    for seg in &out.trajectory.segments {
        let n = seg.times.len();
        times.extend_from_slice(&seg.times[1..n - 1]);
    }
    let reference =
        bounded_solution_with_tail(&data, &sys.coeff, &dich, &times, tail, 1e-12).unwrap();
    let mut worst: f64 = 0.0;
    for seg in &out.trajectory.segments {
        let n = seg.times.len();
        for (t, x) in seg.times[1..n - 1].iter().zip(&seg.states[1..n - 1]) {
            let r = reference.trajectory.eval(*t).unwrap();
            worst = worst.max((&r - x).norm0() / r.norm0());
        }
    }
    assert!(worst < 1e-6, "relative discrepancy {worst:e}");
}

#[test]
fn simulated_trajectory_invariants() {
    let sys = certified(0.3);
    let sim = Simulator::new(&sys, SimSettings::default());
    let mut x0 = SpectralVec::zeros(sys.n_modes());
    x0[0] = 0.2;
    x0[2] = 0.02;
    let out = sim.simulate(-0.5, &x0, 30.5, &|_| true).unwrap();
    let traj = &out.trajectory;
    assert_eq!(traj.hits.len(), 31);
    for h in &traj.hits {
        let g = sys.g(h.surface, &h.pre);
        assert!(sys.norm(&(&(&h.post - &h.pre) - &g)) < 1e-10);
        assert!((h.time - sys.tau(h.surface, &h.pre)).abs() < 1e-9);
        // after the hit the trajectory stays strictly past the surface
        for (t, x) in traj.nodes().filter(|(t, _)| *t > h.time) {
            assert!(t - sys.tau(h.surface, x) > 0.0);
        }
    }
    let limit = 10.0 * sim.settings().seg_tol;
    for (t, h, r) in sim.residuals(traj) {
        assert!(r < limit / h, "residual {r:e} at t = {t}, h = {h:e}");
    }
    let min_u = physical_min(&sys, traj.nodes().map(|(_, x)| x));
    assert!(min_u >= -1e-8, "min u = {min_u:e}");
}

#[test]
fn leaving_the_ball_reports_the_exit_time() {
    let sys = linear(4, TrigSum::constant(-30.0));
    let mut x0 = SpectralVec::zeros(4);
    x0[0] = 1.0;
    let err = Simulator::new(&sys, SimSettings::default())
        .simulate(0.3, &x0, 5.0, &|_| false)
        .unwrap_err();
    match err {
        Error::LeftBall { time, norm, rho } => {
            assert!(time > 0.3 && time < 1.0);
            assert!((norm - rho).abs() < 1e-6 * rho, "{norm} vs {rho}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn assembled_solution_invariants() {
    let sys = compliant();
    let dich = dichotomy(&sys, 1);
    let set = SolverSettings::default();
    let sol = outer_solve(&sys, &dich, 0, 30, &set).unwrap();
    let inner = &sol.inner;
    assert!(inner.sup_norm(&sys) <= sys.rho);

    let traj = inner.trajectory();
    for h in &traj.hits {
        let g = sys.g(h.surface, sol.y.get(h.surface));
        assert!(sys.norm(&(&(&h.post - &h.pre) - &g)) < 1e-10);
        assert!((h.time - sys.tau(h.surface, &h.pre)).abs() < set.event_tol);
    }

    let theta = sys.separation(sol.y.lo, sol.y.hi());
    for gamma in [sys.alpha, 0.9] {
        let s = inner.regularity_sup(&sys, gamma, theta / 4.0);
        assert!(s.is_finite() && s > 0.0);
    }

    let res = integral_residual(&sys, &dich, inner, &set, 2).unwrap();
    assert!(res.passed(), "{res:?}");
    // the coarse residual is floored at the Picard stopping tolerance
    assert!(res.fine < 10.0 * res.coarse.max(set.inner_tol), "{res:?}");

    let disc = simulation_discrepancy(&sys, inner, 2, 12, SimSettings::default()).unwrap();
    assert!(disc < 1e-6, "simulation discrepancy {disc:e}");
}
