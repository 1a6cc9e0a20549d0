//! Hybrid simulation: exponential time differencing between impulses, event
//! location on the surfaces, jumps, and beating certificates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quadrature::exp_moments;
use crate::sampling::non_negative_ball_samples;
use crate::spectral::SpectralVec;
use crate::system::{Forcing, ImpulseSystem};
use crate::trajectory::{HitRecord, PiecewiseTrajectory, Segment};

/// Relative slack on ball checks, absorbing rounding at `|x|_alpha = rho`.
const BALL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    /// Local error target per step (absolute, `|.|_0`).
    pub seg_tol: f64,
    /// Width of the bracket around an impulse moment.
    pub event_tol: f64,
    pub h_max: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            seg_tol: 1e-8,
            event_tol: 1e-10,
            h_max: 0.05,
            h_init: 1e-3,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trajectory: PiecewiseTrajectory,
    /// Surfaces met more than once, in order of the repeated meeting.
    pub beatings: Vec<i64>,
    pub steps: usize,
    pub rejected: usize,
}

impl Simulation {
    pub fn hits_per_surface(&self) -> BTreeMap<i64, usize> {
        self.trajectory.hits_per_surface()
    }

    pub fn max_hits_per_surface(&self) -> usize {
        self.hits_per_surface().values().copied().max().unwrap_or(0)
    }
}

enum Crossing {
    None,
    At(f64, i64),
    Unresolved(i64),
}

pub struct Simulator<'a> {
    sys: &'a ImpulseSystem,
    set: SimSettings,
}

impl<'a> Simulator<'a> {
    pub fn new(sys: &'a ImpulseSystem, set: SimSettings) -> Self {
        Simulator { sys, set }
    }

    pub fn settings(&self) -> &SimSettings {
        &self.set
    }

    /// One ETDRK4 step of size `h` from `(t, x)`. The diagonal part
    /// `nu_k` is integrated exactly and `m(t)` through the scalar factor
    /// `exp(int m)`.
    pub fn step(&self, t: f64, x: &SpectralVec, h: f64) -> SpectralVec {
        if h == 0.0 {
            return x.clone();
        }
        let nu = self.sys.coeff.rates();
        let m = self.sys.coeff.m();
        let de = |s: f64| m.integral(t, t + s);
        let n = x.len();
        if matches!(self.sys.forcing, Forcing::Zero) {
            let f = (-de(h)).exp();
            return SpectralVec((0..n).map(|k| x[k] * (-nu[k] * h).exp() * f).collect());
        }
        let nl = |s: f64, y: &SpectralVec| -> SpectralVec {
            let e = de(s);
            let xs = y.scale((-e).exp());
            self.sys.f(t + s, &xs).scale(e.exp())
        };
        let mut e_half = vec![0.0; n];
        let mut e_full = vec![0.0; n];
        let mut p_half = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        let mut f3 = vec![0.0; n];
        for k in 0..n {
            let z = nu[k] * h;
            e_half[k] = (-0.5 * z).exp();
            e_full[k] = (-z).exp();
            p_half[k] = 0.5 * h * exp_moments(0.5 * z, 0)[0];
            let j = exp_moments(z, 2);
            let (p1, p2, p3) = (j[0], j[1], 0.5 * j[2]);
            f1[k] = h * (p1 - 3.0 * p2 + 4.0 * p3);
            f2[k] = h * (p2 - 2.0 * p3);
            f3[k] = h * (-p2 + 4.0 * p3);
        }
        let nu0 = nl(0.0, x);
        let a = SpectralVec((0..n).map(|k| e_half[k] * x[k] + p_half[k] * nu0[k]).collect());
        let na = nl(0.5 * h, &a);
        let b = SpectralVec((0..n).map(|k| e_half[k] * x[k] + p_half[k] * na[k]).collect());
        let nb = nl(0.5 * h, &b);
        let c = SpectralVec(
            (0..n)
                .map(|k| e_half[k] * a[k] + p_half[k] * (2.0 * nb[k] - nu0[k]))
                .collect(),
        );
        let nc = nl(h, &c);
        let scale = (-de(h)).exp();
        SpectralVec(
            (0..n)
                .map(|k| {
                    (e_full[k] * x[k]
                        + f1[k] * nu0[k]
                        + 2.0 * f2[k] * (na[k] + nb[k])
                        + f3[k] * nc[k])
                        * scale
                })
                .collect(),
        )
    }

    /// Step doubling: the two-half-step result and the error estimate.
    fn doubled(&self, t: f64, x: &SpectralVec, h: f64) -> (SpectralVec, f64) {
        let full = self.step(t, x, h);
        let mid = self.step(t, x, 0.5 * h);
        let half = self.step(t + 0.5 * h, &mid, 0.5 * h);
        let err = (&full - &half).norm0() / 15.0;
        (half, err)
    }

    /// `t - tau_j(x)`.
    fn zeta(&self, j: i64, t: f64, x: &SpectralVec) -> f64 {
        t - self.sys.tau(j, x)
    }

    /// Surfaces whose range over the ball meets `[t0, t1]`.
    fn candidates(&self, t0: f64, t1: f64) -> Vec<i64> {
        let s = &self.sys.surfaces;
        let rq = self.sys.rho_q();
        let mut j = s.first_after(t0, rq) - 1;
        let mut out = Vec::new();
        while s.range(j, rq).0 <= t1 {
            if s.range(j, rq).1 >= t0 {
                out.push(j);
            }
            j += 1;
        }
        out
    }

    /// Earliest sign change of `zeta_j` over the step, bisected to
    /// `event_tol`. Sampled at five points; a tangency between samples
    /// counts as no hit.
    fn locate(&self, t0: f64, x0: &SpectralVec, t1: f64, x1: &SpectralVec) -> Crossing {
        let cands = self.candidates(t0, t1);
        if cands.is_empty() {
            return Crossing::None;
        }
        let h = t1 - t0;
        let mut pts: Vec<(f64, SpectralVec)> = vec![(t0, x0.clone())];
        for q in [0.25, 0.5, 0.75] {
            pts.push((t0 + q * h, self.step(t0, x0, q * h)));
        }
        pts.push((t1, x1.clone()));
        let mut best: Option<(f64, i64)> = None;
        for j in cands {
            let signs: Vec<bool> = pts.iter().map(|(t, x)| self.zeta(j, *t, x) >= 0.0).collect();
            let changes: Vec<usize> = (0..4).filter(|&i| signs[i] != signs[i + 1]).collect();
            match changes.len() {
                0 => continue,
                1 => {
                    let i = changes[0];
                    let (mut a, mut b) = (pts[i].0, pts[i + 1].0);
                    let sa = signs[i];
                    while b - a > self.set.event_tol {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        let xm = self.step(t0, x0, mid - t0);
                        if (self.zeta(j, mid, &xm) >= 0.0) == sa {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    if best.is_none_or(|(tb, _)| b < tb) {
                        best = Some((b, j));
                    }
                }
                _ => return Crossing::Unresolved(j),
            }
        }
        match best {
            Some((t, j)) => Crossing::At(t, j),
            None => Crossing::None,
        }
    }

    /// First time in `(t0, t1]` where `|x|_alpha` exceeds `rho`, with the
    /// norm there.
    fn exit_time(&self, t0: f64, x0: &SpectralVec, t1: f64) -> (f64, f64) {
        let lim = self.sys.rho * (1.0 + BALL_SLACK);
        let (mut a, mut b) = (t0, t1);
        while b - a > self.set.event_tol {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.sys.norm(&self.step(t0, x0, mid - t0)) > lim {
                b = mid;
            } else {
                a = mid;
            }
        }
        (b, self.sys.norm(&self.step(t0, x0, b - t0)))
    }

    /// Integrate from `(t0, x0)` to `t1`. `certified(j)` marks surfaces with a
    /// passing beating certificate; meeting one of those twice is an error.
    pub fn simulate(
        &self,
        t0: f64,
        x0: &SpectralVec,
        t1: f64,
        certified: &dyn Fn(i64) -> bool,
    ) -> Result<Simulation> {
        if !(t1 > t0) {
            return Err(Error::Domain(format!("empty time interval [{t0}, {t1}]")));
        }
        if x0.len() != self.sys.n_modes() {
            return Err(Error::Domain("initial state has the wrong dimension".into()));
        }
        let rho = self.sys.rho;
        let lim = rho * (1.0 + BALL_SLACK);
        let n0 = self.sys.norm(x0);
        if n0 > lim {
            return Err(Error::LeftBall { time: t0, norm: n0, rho });
        }
        let tol = self.set.seg_tol;
        let h_min = 10.0 * self.set.event_tol;
        let mut t = t0;
        let mut x = x0.clone();
        let mut h = self.set.h_init.min(self.set.h_max);
        let mut traj = PiecewiseTrajectory::default();
        let mut seg = Segment::default();
        seg.push(t, x.clone());
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        let mut beatings = Vec::new();
        let (mut steps, mut rejected) = (0usize, 0usize);
        while t < t1 {
            if steps + rejected >= self.set.max_steps {
                return Err(Error::NoConvergence { iterations: steps, ratio: f64::NAN });
            }
            let hh = h.min(self.set.h_max).min(t1 - t);
            let (xn, err) = self.doubled(t, &x, hh);
            if err > tol && hh > h_min {
                rejected += 1;
                h = hh * (0.9 * (tol / err).powf(0.2)).max(0.2);
                continue;
            }
            let tn = if t1 - t - hh <= 0.0 { t1 } else { t + hh };
            match self.locate(t, &x, tn, &xn) {
                Crossing::Unresolved(j) => {
                    if hh > h_min {
                        rejected += 1;
                        h = 0.5 * hh;
                        continue;
                    }
                    return Err(Error::EventResolution { surface: j, t0: t, t1: tn });
                }
                Crossing::At(tj, j) => {
                    steps += 1;
                    let pre = self.step(t, &x, tj - t);
                    let npre = self.sys.norm(&pre);
                    if npre > lim {
                        let (time, norm) = self.exit_time(t, &x, tj);
                        return Err(Error::LeftBall { time, norm, rho });
                    }
                    let c = counts.entry(j).or_insert(0);
                    *c += 1;
                    if *c > 1 {
                        beatings.push(j);
                        if certified(j) {
                            return Err(Error::CertifiedBeating { surface: j, time: tj });
                        }
                    }
                    let post = &pre + &self.sys.g(j, &pre);
                    let npost = self.sys.norm(&post);
                    if npost > lim {
                        return Err(Error::JumpExitsBall { surface: j, norm: npost, rho });
                    }
                    if tj > seg.end() {
                        seg.push(tj, pre.clone());
                    } else {
                        *seg.states.last_mut().unwrap() = pre.clone();
                    }
                    traj.segments.push(std::mem::take(&mut seg));
                    traj.hits.push(HitRecord { time: tj, surface: j, pre, post: post.clone() });
                    seg.push(tj, post.clone());
                    t = tj;
                    x = post;
                    h = self.set.h_init;
                    continue;
                }
                Crossing::None => {}
            }
            let nn = self.sys.norm(&xn);
            if nn > lim {
                let (time, norm) = self.exit_time(t, &x, tn);
                return Err(Error::LeftBall { time, norm, rho });
            }
            steps += 1;
            seg.push(tn, xn.clone());
            t = tn;
            x = xn;
            let grow = if err == 0.0 { 2.0 } else { (0.9 * (tol / err).powf(0.2)).min(2.0) };
            h = hh * grow.max(0.2);
        }
        traj.segments.push(seg);
        Ok(Simulation { trajectory: traj, beatings, steps, rejected })
    }

    /// Per continuity segment, `max_i |x_i - r_i|_0 / max_i |r_i|_0` where
    /// `r` re-integrates the segment from its first node with `factor`
    /// equal substeps per accepted step. Returns the worst segment.
    pub fn refinement_error(&self, traj: &PiecewiseTrajectory, factor: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for seg in &traj.segments {
            let mut r = seg.first().clone();
            let (mut diff, mut size): (f64, f64) = (0.0, r.norm0());
            for i in 0..seg.times.len() - 1 {
                let (ta, tb) = (seg.times[i], seg.times[i + 1]);
                let h = (tb - ta) / factor as f64;
                for q in 0..factor {
                    r = self.step(ta + q as f64 * h, &r, h);
                }
                diff = diff.max((&seg.states[i + 1] - &r).norm0());
                size = size.max(r.norm0());
            }
            if size > 0.0 {
                worst = worst.max(diff / size);
            }
        }
        worst
    }

    /// `|du/dt + (A + A1(t)) u - f(t, u)|_0` at the midpoint of each step,
    /// from fourth-order centred differences of the dense output. Returns
    /// `(t, step size, residual)`.
    pub fn residuals(&self, traj: &PiecewiseTrajectory) -> Vec<(f64, f64, f64)> {
        let nu = self.sys.coeff.rates();
        let m = self.sys.coeff.m();
        let mut out = Vec::new();
        for seg in &traj.segments {
            for i in 0..seg.times.len().saturating_sub(1) {
                let (ta, tb) = (seg.times[i], seg.times[i + 1]);
                let hs = tb - ta;
                if hs <= 0.0 {
                    continue;
                }
                let tm = ta + 0.5 * hs;
                let d = (hs / 8.0).min(1e-5);
                let xa = &seg.states[i];
                let at = |s: f64| self.step(ta, xa, s - ta);
                let (p1, m1, p2, m2) = (at(tm + d), at(tm - d), at(tm + 2.0 * d), at(tm - 2.0 * d));
                let u = at(tm);
                let f = self.sys.f(tm, &u);
                let mt = m.value(tm);
                let r: f64 = (0..u.len())
                    .map(|k| {
                        let du = (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * d);
                        let v = du + (nu[k] + mt) * u[k] - f[k];
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt();
                out.push((tm, hs, r));
            }
        }
        out
    }
}

/// Sampled check that surface `j` cannot be met twice from non-negative
/// states: `theta_j(x) = b_j (Q(x + g_j(x)) - Q(x)) <= 0` and the growth rate
/// of `b_j Q` along the flow, evaluated at `t = tau_j(x)`, stays below 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatingCertificate {
    pub surface: i64,
    pub slope: f64,
    pub theta_max: f64,
    pub p_max: f64,
    /// Slope threshold for the logistic forcing, when applicable.
    pub beta0: Option<f64>,
    pub samples: usize,
    pub passed: bool,
}

impl BeatingCertificate {
    pub fn records(&self) -> Vec<(String, String)> {
        vec![
            ("surface".into(), self.surface.to_string()),
            ("slope".into(), format!("{:.17e}", self.slope)),
            ("theta_max".into(), format!("{:.17e}", self.theta_max)),
            ("p_max".into(), format!("{:.17e}", self.p_max)),
            (
                "beta0".into(),
                self.beta0.map_or("none".into(), |b| format!("{b:.17e}")),
            ),
            ("samples".into(), self.samples.to_string()),
            ("passed".into(), self.passed.to_string()),
        ]
    }
}

/// `0.5 / ((1 + sup a b)(rho^2 + sqrt(l) rho^3))` for the logistic forcing.
pub fn logistic_beta0(sys: &ImpulseSystem) -> Option<f64> {
    match &sys.forcing {
        Forcing::Logistic { a, b, rho } => {
            let ab = a.product(b).sup_bound();
            Some(0.5 / ((1.0 + ab) * (rho * rho + sys.lap.l().sqrt() * rho.powi(3))))
        }
        _ => None,
    }
}

/// Growth rate of `b_j Q(x(t))` at `t = tau_j(x)`.
pub fn beating_rate(sys: &ImpulseSystem, j: i64, x: &SpectralVec) -> f64 {
    let b = sys.surfaces.slope(j);
    if b == 0.0 {
        return 0.0;
    }
    let tau = sys.tau(j, x);
    let nu = sys.coeff.rates();
    let lin: f64 = (0..x.len()).map(|k| nu[k] * x[k] * x[k]).sum();
    let mt = sys.coeff.m().value(tau);
    let fx = sys.f(tau, x);
    2.0 * b * (-lin - mt * x.sq_sum() + x.dot(&fx))
}

/// `theta_j(x) = b_j (Q(x + g_j(x)) - Q(x))`.
pub fn jump_shift(sys: &ImpulseSystem, j: i64, x: &SpectralVec) -> f64 {
    let b = sys.surfaces.slope(j);
    let y = x + &sys.g(j, x);
    b * (y.sq_sum() - x.sq_sum())
}

/// Certificate for surface `j` over `samples` non-negative states, half on
/// the sphere `|x|_alpha = rho`; `start` offsets the Halton sequence.
pub fn beating_certificate(
    sys: &ImpulseSystem,
    j: i64,
    samples: usize,
    start: u64,
) -> BeatingCertificate {
    let xs = non_negative_ball_samples(&sys.lap, &sys.grid, sys.alpha, sys.rho, samples, start);
    let mut theta_max = f64::NEG_INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    for x in &xs {
        theta_max = theta_max.max(jump_shift(sys, j, x));
        p_max = p_max.max(beating_rate(sys, j, x));
    }
    BeatingCertificate {
        surface: j,
        slope: sys.surfaces.slope(j),
        theta_max,
        p_max,
        beta0: logistic_beta0(sys),
        samples: xs.len(),
        passed: theta_max <= 0.0 && p_max < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{logistic, logistic_b};
    use crate::system::{Jumps, Surfaces, SystemParts};
    use crate::trig::TrigSum;

    fn heat(n: usize, forcing: Forcing, m: TrigSum) -> ImpulseSystem {
        ImpulseSystem::new(SystemParts {
            l: 1.0,
            n_modes: n,
            grid_intervals: 4 * n.max(16),
            alpha: 0.5,
            rho: 10.0,
            m,
            sigma: vec![],
            forcing,
            surfaces: Surfaces::fixed(1.0, 0.5),
            jumps: Jumps::none(n),
        })
        .unwrap()
    }

    #[test]
    fn step_is_exact_for_linear_part() {
        let m = TrigSum::from_triples(&[[0.3, 1.0, 0.2]]);
        let sys = heat(6, Forcing::Zero, m);
        let sim = Simulator::new(&sys, SimSettings::default());
        let x = SpectralVec((0..6).map(|k| 0.1 / (k + 1) as f64).collect());
        let y = sim.step(0.4, &x, 0.3);
        let z = crate::evolution::evolution_apply(0.7, 0.4, &x, &sys.coeff).unwrap();
        assert!((&y - &z).max_abs() < 1e-15);
    }

    #[test]
    fn constant_forcing_matches_closed_form() {
        // x_k' = -lambda_k x_k + p_k has x_k(t) = p/lambda + (x0 - p/lambda) e^{-lambda t}
        let n = 4;
        let p: Vec<TrigSum> = (0..n).map(|k| TrigSum::constant(1.0 / (k + 1) as f64)).collect();
        let sys = heat(n, Forcing::Profile(p), TrigSum::zero());
        let sim = Simulator::new(&sys, SimSettings::default());
        let x0 = SpectralVec::zeros(n);
        let out = sim.simulate(0.0, &x0, 0.4, &|_| false).unwrap();
        let last = out.trajectory.segments[0].last().clone();
        for k in 0..n {
            let lam = sys.lap.eigenvalue(k + 1);
            let pk = 1.0 / (k + 1) as f64;
            let exact = pk / lam * (1.0 - (-lam * 0.4).exp());
            assert!((last[k] - exact).abs() < 1e-12, "mode {k}: {} vs {exact}", last[k]);
        }
    }

    #[test]
    fn periodic_forcing_fourth_order() {
        // x' = -pi^2 x + cos(5t): compare with the closed form at t = 1
        let p = vec![TrigSum::from_triples(&[[1.0, 5.0, 0.0]])];
        let sys = heat(1, Forcing::Profile(p), TrigSum::zero());
        let sim = Simulator::new(&sys, SimSettings::default());
        let lam = std::f64::consts::PI.powi(2);
        let exact = |t: f64| {
            let d = lam * lam + 25.0;
            (lam * (5.0 * t).cos() + 5.0 * (5.0 * t).sin()) / d
                - lam / d * (-lam * t).exp()
        };
        let x0 = SpectralVec::zeros(1);
        let errs: Vec<f64> = [0.1f64, 0.05]
            .iter()
            .map(|&h| {
                let mut x = x0.clone();
                let mut t = 0.0;
                for _ in 0..(1.0 / h).round() as usize {
                    x = sim.step(t, &x, h);
                    t += h;
                }
                (x[0] - exact(1.0)).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn fixed_moments_hit_once_each() {
        let sys = logistic(8, 0.0, 0.1);
        let sim = Simulator::new(&sys, SimSettings::default());
        let x0 = SpectralVec::basis(8, 1).scale(0.1);
        let out = sim.simulate(0.2, &x0, 5.2, &|_| true).unwrap();
        let hits = out.hits_per_surface();
        assert_eq!(hits.len(), 5);
        assert!(hits.values().all(|&c| c == 1));
        for h in &out.trajectory.hits {
            let tj = sys.surfaces.base(h.surface);
            assert!((h.time - tj).abs() <= 2e-10, "{} vs {tj}", h.time);
        }
    }

    #[test]
    fn moving_surface_event_located() {
        let sys = logistic(8, -0.2, 0.1);
        let sim = Simulator::new(&sys, SimSettings::default());
        let x0 = SpectralVec::basis(8, 1).scale(0.2);
        let out = sim.simulate(0.2, &x0, 3.5, &|_| true).unwrap();
        for h in &out.trajectory.hits {
            let z = h.time - sys.tau(h.surface, &h.pre);
            assert!(z >= 0.0 && z < 1e-9, "zeta {z}");
        }
        assert!(out.max_hits_per_surface() <= 1);
    }

    #[test]
    fn residual_small_for_nonlinear_flow() {
        let sys = logistic_b(8, -0.2, 0.1, 0.05);
        let sim = Simulator::new(&sys, SimSettings::default());
        let x0 = SpectralVec::basis(8, 1).scale(0.2);
        let out = sim.simulate(0.2, &x0, 1.9, &|_| true).unwrap();
        let res = sim.residuals(&out.trajectory);
        for (t, h, r) in res {
            assert!(r < 10.0 * 1e-8 / h, "residual {r} at {t} (h = {h})");
        }
    }

    #[test]
    fn certificate_logistic_instance() {
        let sys = logistic(8, -0.2, 0.1);
        let c = beating_certificate(&sys, 3, 256, 0);
        assert!(c.passed, "{c:?}");
        assert!((c.beta0.unwrap() - 0.25).abs() < 1e-15);
        let steep = logistic(8, -3.0, 0.1);
        let c = beating_certificate(&steep, 3, 256, 0);
        assert!(!c.passed, "{c:?}");
    }
}
