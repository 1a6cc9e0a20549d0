//! Almost periodic solutions: Picard iteration on the Green integral
//! equation at frozen impulse moments, and the outer fixed point of the map
//! `S(y)_j = u*(tau_j(y_j), y)` on bounded sequences.

use rand::Rng;
use rayon::prelude::*;

use crate::ap_analysis::{
    eps_almost_periods, harmonize, wexler_deviation, EpsPeriodReport, Harmonization,
    PiecewiseSampledFunction, StronglyAPSet, WeightedNorm, WindowedSequence,
};
use crate::error::{Error, Result};
use crate::evolution::{k_bundle, BundleInputs, DichotomyData, KBundle, LinearCoefficient};
use crate::quadrature::exp_moments;
use crate::sampling::random_state;
use crate::sim::{SimSettings, Simulator};
use crate::spectral::SpectralVec;
use crate::system::ImpulseSystem;
use crate::trajectory::{HitRecord, PiecewiseTrajectory, Segment};

const BALL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub residual_tol: f64,
    pub event_tol: f64,
    pub tail_tol: f64,
    pub seg_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Largest mesh step inside an impulse interval.
    pub dt_max: f64,
    /// Growth ratio of the mesh away from each impulse moment.
    pub grade: f64,
    /// Fixed number of buffer surfaces on each side of the reported window;
    /// `None` sizes the buffer from the dichotomy and `tail_tol`.
    pub buffer: Option<i64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            inner_tol: 1e-8,
            outer_tol: 1e-8,
            residual_tol: 1e-6,
            event_tol: 1e-10,
            tail_tol: 1e-10,
            seg_tol: 1e-8,
            max_inner: 200,
            max_outer: 200,
            dt_max: 0.02,
            grade: 1.15,
            buffer: None,
        }
    }
}

/// A finite window `lo..=hi` of a sequence in `X^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct APSequencePoint {
    pub lo: i64,
    pub values: Vec<SpectralVec>,
}

impl APSequencePoint {
    pub fn zeros(lo: i64, hi: i64, n: usize) -> Self {
        APSequencePoint {
            lo,
            values: vec![SpectralVec::zeros(n); (hi - lo + 1).max(0) as usize],
        }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: i64) -> &SpectralVec {
        &self.values[(j - self.lo) as usize]
    }

    /// `sup_j |y_j - z_j|_alpha` over the common indices.
    pub fn dist(&self, other: &APSequencePoint, sys: &ImpulseSystem) -> f64 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        (lo..=hi)
            .map(|j| sys.norm(&(self.get(j) - other.get(j))))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self, sys: &ImpulseSystem) -> f64 {
        self.values.iter().map(|y| sys.norm(y)).fold(0.0, f64::max)
    }

    pub fn restrict(&self, lo: i64, hi: i64) -> APSequencePoint {
        APSequencePoint {
            lo,
            values: (lo..=hi).map(|j| self.get(j).clone()).collect(),
        }
    }

    /// As a windowed sequence with the `|.|_alpha` norm.
    pub fn windowed(&self, sys: &ImpulseSystem) -> WindowedSequence {
        WindowedSequence::new(
            self.lo,
            self.values.iter().map(|v| v.0.clone()).collect(),
            WeightedNorm::weighted(sys.lap.weights(sys.alpha)),
        )
    }
}

/// Exponential weights of one mesh step for every mode.
#[derive(Debug, Clone)]
struct StepWeights {
    /// First node of the four-node interpolation stencil.
    s0: usize,
    /// Propagation factor across the step: forward for stable modes,
    /// backward for unstable ones.
    factor: Vec<f64>,
    w: Vec<[f64; 4]>,
}

/// Graded mesh on each interval between frozen impulse moments with the
/// quadrature weights of the variation-of-constants formula.
#[derive(Debug, Clone)]
pub struct FrozenGrid {
    pub lo: i64,
    /// Frozen moments `tau_j(y_j)`, `j = lo..=hi`.
    pub times: Vec<f64>,
    /// Nodes of each interval `[times[i], times[i + 1]]`.
    pub nodes: Vec<Vec<f64>>,
    steps: Vec<Vec<StepWeights>>,
    unstable: Vec<bool>,
}

/// Monomial coefficients (in `z`) of the Lagrange basis on `zs`.
fn lagrange_monomials(zs: &[f64; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for s in 0..4 {
        let mut poly = [1.0, 0.0, 0.0, 0.0];
        let mut deg = 0;
        let mut denom = 1.0;
        for q in 0..4 {
            if q == s {
                continue;
            }
            // poly *= (z - zq)
            let mut next = [0.0; 4];
            for p in 0..=deg {
                next[p + 1] += poly[p];
                next[p] -= zs[q] * poly[p];
            }
            poly = next;
            deg += 1;
            denom *= zs[s] - zs[q];
        }
        for p in 0..4 {
            out[s][p] = poly[p] / denom;
        }
    }
    out
}

fn graded_nodes(a: f64, b: f64, first: f64, grade: f64, dt_max: f64) -> Vec<f64> {
    let len = b - a;
    let mut nodes = vec![a];
    let mut t = a;
    let mut dt = first.min(len / 3.0);
    loop {
        let rest = b - t;
        if rest <= 1.5 * dt {
            if rest > dt {
                nodes.push(t + 0.5 * rest);
            }
            nodes.push(b);
            break;
        }
        t += dt;
        nodes.push(t);
        dt = (dt * grade).min(dt_max);
    }
    while nodes.len() < 4 {
        // too short for the cubic stencil: split uniformly
        let k = nodes.len();
        nodes = (0..=k).map(|i| a + len * i as f64 / k as f64).collect();
    }
    nodes
}

impl FrozenGrid {
    pub fn new(
        coeff: &LinearCoefficient,
        dich: &DichotomyData,
        lo: i64,
        times: Vec<f64>,
        set: &SolverSettings,
        refine: usize,
    ) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "frozen impulse moments must be strictly increasing".into(),
            ));
        }
        let fastest = coeff.rates().iter().copied().fold(1.0, f64::max) + coeff.m_sup();
        let first = 0.02 / fastest;
        let nodes: Vec<Vec<f64>> = times
            .windows(2)
            .map(|w| {
                let base = graded_nodes(w[0], w[1], first, set.grade, set.dt_max);
                if refine <= 1 {
                    return base;
                }
                let mut fine = Vec::with_capacity(base.len() * refine);
                for p in base.windows(2) {
                    for r in 0..refine {
                        fine.push(p[0] + (p[1] - p[0]) * r as f64 / refine as f64);
                    }
                }
                fine.push(*base.last().unwrap());
                fine
            })
            .collect();
        let unstable = dich.unstable_mask(coeff.n_modes());
        let steps = nodes
            .par_iter()
            .map(|ns| {
                (0..ns.len() - 1)
                    .map(|i| step_weights(coeff, &unstable, ns, i))
                    .collect()
            })
            .collect();
        Ok(FrozenGrid {
            lo,
            times,
            nodes,
            steps,
            unstable,
        })
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.times.len() as i64 - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().map(|n| n.len()).sum()
    }

    /// `int G(t, s) F(s) ds + sum_j G(t, tau_j) g_j` on the nodes, with `F`
    /// given on the nodes (right limit at the first node of an interval,
    /// left limit at the last).
    fn sweep(&self, f: &[Vec<SpectralVec>], jumps: &[SpectralVec]) -> Vec<Vec<SpectralVec>> {
        let n = self.unstable.len();
        let mut u: Vec<Vec<SpectralVec>> = self
            .nodes
            .iter()
            .map(|ns| vec![SpectralVec::zeros(n); ns.len()])
            .collect();
        let quad = |sw: &StepWeights, fs: &[SpectralVec], k: usize| -> f64 {
            (0..4).map(|q| sw.w[k][q] * fs[sw.s0 + q][k]).sum()
        };
        for k in 0..n {
            if !self.unstable[k] {
                let mut carry = 0.0;
                for (i, seg) in u.iter_mut().enumerate() {
                    seg[0][k] = carry + jumps[i][k];
                    for (s, sw) in self.steps[i].iter().enumerate() {
                        seg[s + 1][k] = sw.factor[k] * seg[s][k] + quad(sw, &f[i], k);
                    }
                    carry = seg.last().unwrap()[k];
                }
            } else {
                let mut carry = 0.0;
                for (i, seg) in u.iter_mut().enumerate().rev() {
                    let last = seg.len() - 1;
                    seg[last][k] = carry - jumps[i + 1][k];
                    for (s, sw) in self.steps[i].iter().enumerate().rev() {
                        seg[s][k] = sw.factor[k] * seg[s + 1][k] + quad(sw, &f[i], k);
                    }
                    carry = seg[0][k];
                }
            }
        }
        u
    }
}

fn stencil_start(i: usize, len: usize) -> usize {
    i.saturating_sub(1).min(len - 4)
}

fn step_weights(coeff: &LinearCoefficient, unstable: &[bool], ns: &[f64], i: usize) -> StepWeights {
    let s0 = stencil_start(i, ns.len());
    let v: [f64; 4] = std::array::from_fn(|q| ns[s0 + q]);
    interval_weights(coeff, unstable, ns[i], ns[i + 1], v, s0)
}

/// Weights over `[a, b]` with the forcing interpolated on the nodes `v`.
fn interval_weights(
    coeff: &LinearCoefficient,
    unstable: &[bool],
    a: f64,
    b: f64,
    v: [f64; 4],
    s0: usize,
) -> StepWeights {
    let n = coeff.n_modes();
    let m = coeff.m();
    let nu = coeff.rates();
    let h = b - a;
    let c = 0.5 * (a + b);
    let mc = m.value(c);
    let zs: [f64; 4] = std::array::from_fn(|q| (v[q] - a) / h);
    let coef = lagrange_monomials(&zs);
    let im = m.integral(a, b);
    let corr_fwd: [f64; 4] = std::array::from_fn(|q| (-m.integral(v[q], b) + mc * (b - v[q])).exp());
    let corr_bwd: [f64; 4] = std::array::from_fn(|q| (m.integral(a, v[q]) - mc * (v[q] - a)).exp());
    let mut factor = vec![0.0; n];
    let mut w = vec![[0.0; 4]; n];
    for k in 0..n {
        let x = (nu[k] + mc) * h;
        let j = exp_moments(x, 3);
        if !unstable[k] {
            factor[k] = (-nu[k] * h - im).exp();
            for q in 0..4 {
                let s: f64 = (0..4).map(|p| coef[q][p] * j[p]).sum();
                w[k][q] = h * s * corr_fwd[q];
            }
        } else {
            factor[k] = (nu[k] * h + im).exp();
            let ex = x.exp();
            for q in 0..4 {
                let s: f64 = (0..4).map(|p| coef[q][p] * ex * j[p]).sum();
                w[k][q] = -h * s * corr_bwd[q];
            }
        }
    }
    StepWeights { s0, factor, w }
}

/// Converged inner iterate on a frozen grid.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub grid: FrozenGrid,
    pub states: Vec<Vec<SpectralVec>>,
    /// `g_j(y_j)` for `j = lo..=hi`.
    pub jumps: Vec<SpectralVec>,
    pub iterations: usize,
    /// `sup_t |u_{n+1} - u_n|_alpha`, `n = 0, 1, ...`
    pub increments: Vec<f64>,
    /// `(n, increment_n / increment_{n-1})` while above rounding level.
    pub ratios: Vec<(usize, f64)>,
}

impl InnerSolution {
    /// `u(tau_j)`, the value before the jump.
    pub fn left_limit(&self, j: i64) -> SpectralVec {
        let i = (j - self.grid.lo) as usize;
        if i == 0 {
            &self.states[0][0] - &self.jumps[0]
        } else {
            self.states[i - 1].last().unwrap().clone()
        }
    }

    pub fn right_limit(&self, j: i64) -> SpectralVec {
        let i = (j - self.grid.lo) as usize;
        if i == self.states.len() {
            self.states[i - 1].last().unwrap() + &self.jumps[i]
        } else {
            self.states[i][0].clone()
        }
    }

    /// `u(t)` between nodes by the same variation-of-constants formula as
    /// the mesh steps: stable modes from the node on the left, unstable
    /// modes from the node on the right. Left-continuous at the moments.
    pub fn eval(&self, sys: &ImpulseSystem, t: f64) -> Option<SpectralVec> {
        let times = &self.grid.times;
        if t < times[0] || t > *times.last().unwrap() {
            return None;
        }
        let i = times.partition_point(|&x| x < t).saturating_sub(1);
        let ns = &self.grid.nodes[i];
        let xs = &self.states[i];
        let s = ns.partition_point(|&x| x < t).clamp(1, ns.len() - 1) - 1;
        if t == ns[s] {
            return Some(xs[s].clone());
        }
        if t == ns[s + 1] {
            return Some(xs[s + 1].clone());
        }
        let s0 = stencil_start(s, ns.len());
        let v: [f64; 4] = std::array::from_fn(|q| ns[s0 + q]);
        let f: Vec<SpectralVec> = (0..4).map(|q| sys.f(v[q], &xs[s0 + q])).collect();
        let unstable = &self.grid.unstable;
        let fwd = interval_weights(&sys.coeff, unstable, ns[s], t, v, s0);
        let bwd = interval_weights(&sys.coeff, unstable, t, ns[s + 1], v, s0);
        let n = sys.n_modes();
        Some(SpectralVec(
            (0..n)
                .map(|k| {
                    let (sw, from) = if unstable[k] { (&bwd, &xs[s + 1]) } else { (&fwd, &xs[s]) };
                    sw.factor[k] * from[k] + (0..4).map(|q| sw.w[k][q] * f[q][k]).sum::<f64>()
                })
                .collect(),
        ))
    }

    pub fn sup_norm(&self, sys: &ImpulseSystem) -> f64 {
        self.states
            .iter()
            .flatten()
            .map(|x| sys.norm(x))
            .fold(0.0, f64::max)
    }

    /// The nodes as a left-continuous trajectory; interior moments are hits.
    pub fn trajectory(&self) -> PiecewiseTrajectory {
        let segments: Vec<Segment> = self
            .grid
            .nodes
            .iter()
            .zip(&self.states)
            .map(|(t, x)| Segment {
                times: t.clone(),
                states: x.clone(),
            })
            .collect();
        let hits = (1..self.states.len())
            .map(|i| HitRecord {
                time: self.grid.times[i],
                surface: self.grid.lo + i as i64,
                pre: self.states[i - 1].last().unwrap().clone(),
                post: self.states[i][0].clone(),
            })
            .collect();
        PiecewiseTrajectory { segments, hits }
    }

    /// `sup |u(t)|_gamma` over nodes with `t` outside `[tau_j, tau_j + gap)`.
    pub fn regularity_sup(&self, sys: &ImpulseSystem, gamma: f64, gap: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for (i, (ts, xs)) in self.grid.nodes.iter().zip(&self.states).enumerate() {
            let start = self.grid.times[i];
            for (t, x) in ts.iter().zip(xs) {
                if *t >= start + gap {
                    sup = sup.max(sys.lap.frac_norm(x, gamma));
                }
            }
        }
        sup
    }
}

fn forcing_on(
    sys: &ImpulseSystem,
    grid: &FrozenGrid,
    states: &[Vec<SpectralVec>],
) -> Vec<Vec<SpectralVec>> {
    grid.nodes
        .par_iter()
        .zip(states.par_iter())
        .map(|(ts, xs)| ts.iter().zip(xs).map(|(t, x)| sys.f(*t, x)).collect())
        .collect()
}

fn sup_diff(sys: &ImpulseSystem, a: &[Vec<SpectralVec>], b: &[Vec<SpectralVec>]) -> f64 {
    a.par_iter()
        .zip(b.par_iter())
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(x, y)| sys.norm(&(x - y)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Picard iteration `u_{n+1} = int G f(s, u_n) ds + sum_j G(t, tau_j) g_j`
/// from `u_0 = 0` with the jumps `g_j` held fixed.
pub fn inner_solve(
    sys: &ImpulseSystem,
    grid: FrozenGrid,
    jumps: Vec<SpectralVec>,
    set: &SolverSettings,
) -> Result<InnerSolution> {
    if jumps.len() != grid.times.len() {
        return Err(Error::Domain("one jump per frozen moment is required".into()));
    }
    let n = sys.n_modes();
    let mut u: Vec<Vec<SpectralVec>> = grid
        .nodes
        .iter()
        .map(|ns| vec![SpectralVec::zeros(n); ns.len()])
        .collect();
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let lim = sys.rho * (1.0 + BALL_SLACK);
    for it in 0..set.max_inner {
        let f = forcing_on(sys, &grid, &u);
        let next = grid.sweep(&f, &jumps);
        let inc = sup_diff(sys, &next, &u);
        let sup = next
            .iter()
            .flatten()
            .map(|x| sys.norm(x))
            .fold(0.0, f64::max);
        if sup > lim {
            return Err(Error::BallViolation {
                iteration: it + 1,
                norm: sup,
                rho: sys.rho,
            });
        }
        if let Some(&prev) = increments.last() {
            if prev > 1e3 * f64::EPSILON * sup.max(1e-300) {
                ratios.push((it, inc / prev));
            }
        }
        increments.push(inc);
        u = next;
        if inc < set.inner_tol {
            return Ok(InnerSolution {
                grid,
                states: u,
                jumps,
                iterations: it + 1,
                increments,
                ratios,
            });
        }
    }
    let ratio = ratios.last().map_or(f64::NAN, |r| r.1);
    Err(Error::NoConvergence {
        iterations: set.max_inner,
        ratio,
    })
}

/// Number of extra surfaces on each side so that truncation at the window
/// edges stays below `tail_tol`.
pub fn buffer_surfaces(sys: &ImpulseSystem, dich: &DichotomyData, set: &SolverSettings) -> i64 {
    if let Some(b) = set.buffer {
        return b.max(0);
    }
    let theta = sys.separation(-200, 200);
    let scale = (dich.m1 * sys.rho).max(1.0);
    ((scale / set.tail_tol).ln() / (dich.beta * theta)).ceil() as i64 + 1
}

/// Frozen moments, jumps and the inner solution for the sequence `y`.
pub fn frozen_problem(
    sys: &ImpulseSystem,
    dich: &DichotomyData,
    y: &APSequencePoint,
    set: &SolverSettings,
    refine: usize,
) -> Result<(FrozenGrid, Vec<SpectralVec>)> {
    let times: Vec<f64> = (y.lo..=y.hi()).map(|j| sys.tau(j, y.get(j))).collect();
    let jumps: Vec<SpectralVec> = (y.lo..=y.hi()).map(|j| sys.g(j, y.get(j))).collect();
    let grid = FrozenGrid::new(&sys.coeff, dich, y.lo, times, set, refine)?;
    Ok((grid, jumps))
}

/// `S(y)_j = u*(tau_j(y_j), y)` on the whole window of `y`.
pub fn poincare_map(
    sys: &ImpulseSystem,
    dich: &DichotomyData,
    y: &APSequencePoint,
    set: &SolverSettings,
) -> Result<(APSequencePoint, InnerSolution)> {
    let (grid, jumps) = frozen_problem(sys, dich, y, set, 1)?;
    let inner = inner_solve(sys, grid, jumps, set)?;
    let s = APSequencePoint {
        lo: y.lo,
        values: (y.lo..=y.hi()).map(|j| inner.left_limit(j)).collect(),
    };
    let sup = s.sup_norm(sys);
    if sup > sys.rho * (1.0 + BALL_SLACK) {
        return Err(Error::BallViolation {
            iteration: inner.iterations,
            norm: sup,
            rho: sys.rho,
        });
    }
    Ok((s, inner))
}

/// Result of the outer iteration. `y` covers the extended window; the
/// reported range is `report.0..=report.1`.
#[derive(Debug, Clone)]
pub struct OuterSolution {
    pub y: APSequencePoint,
    pub report: (i64, i64),
    pub inner: InnerSolution,
    pub iterations: usize,
    /// `||S(y_k) - y_k||` per outer step.
    pub increments: Vec<f64>,
    /// `max_j |tau_j(y_j) - tau_j(S(y)_j)|` at the last step.
    pub event_gap: f64,
}

impl OuterSolution {
    pub fn reported(&self) -> APSequencePoint {
        self.y.restrict(self.report.0, self.report.1)
    }

    /// Observed contraction ratios of consecutive outer increments.
    pub fn ratios(&self) -> Vec<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn records(&self) -> Vec<(String, String)> {
        vec![
            ("report_lo".into(), self.report.0.to_string()),
            ("report_hi".into(), self.report.1.to_string()),
            ("window_lo".into(), self.y.lo.to_string()),
            ("window_hi".into(), self.y.hi().to_string()),
            ("outer_iterations".into(), self.iterations.to_string()),
            (
                "fixed_point_residual".into(),
                format!("{:.6e}", self.increments.last().copied().unwrap_or(0.0)),
            ),
            ("event_gap".into(), format!("{:.6e}", self.event_gap)),
            ("inner_iterations".into(), self.inner.iterations.to_string()),
            ("nodes".into(), self.inner.grid.node_count().to_string()),
        ]
    }
}

/// Plain Picard iteration `y_{k+1} = S(y_k)` from `y_0 = 0` on the surfaces
/// `j_lo..=j_hi` plus buffers.
pub fn outer_solve(
    sys: &ImpulseSystem,
    dich: &DichotomyData,
    j_lo: i64,
    j_hi: i64,
    set: &SolverSettings,
) -> Result<OuterSolution> {
    if j_hi <= j_lo {
        return Err(Error::Domain(format!("empty surface window [{j_lo}, {j_hi}]")));
    }
    let buf = buffer_surfaces(sys, dich, set);
    let mut y = APSequencePoint::zeros(j_lo - buf, j_hi + buf, sys.n_modes());
    let mut increments = Vec::new();
    let mut rising = 0;
    for k in 0..set.max_outer {
        let (s, inner) = poincare_map(sys, dich, &y, set)?;
        let inc = s.dist(&y, sys);
        let gap = (y.lo..=y.hi())
            .map(|j| (sys.tau(j, y.get(j)) - sys.tau(j, s.get(j))).abs())
            .fold(0.0, f64::max);
        if let Some(&prev) = increments.last() {
            if inc >= prev && prev > 0.0 {
                rising += 1;
                if rising >= 5 {
                    return Err(Error::NoContraction { ratio: inc / prev });
                }
            } else {
                rising = 0;
            }
        }
        increments.push(inc);
        if inc < set.outer_tol && gap < set.event_tol {
            return Ok(OuterSolution {
                y,
                report: (j_lo, j_hi),
                inner,
                iterations: k + 1,
                increments,
                event_gap: gap,
            });
        }
        y = s;
    }
    let n = increments.len();
    let ratio = if n >= 2 && increments[n - 2] > 0.0 {
        increments[n - 1] / increments[n - 2]
    } else {
        f64::NAN
    };
    Err(Error::NoConvergence {
        iterations: set.max_outer,
        ratio,
    })
}

/// Residual of the integral equation for a converged inner solution: on
/// the solver mesh and independently on a mesh refined by `factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualCheck {
    pub coarse: f64,
    pub fine: f64,
    pub tolerance: f64,
}

impl ResidualCheck {
    pub fn passed(&self) -> bool {
        self.fine < self.tolerance
    }
}

pub fn integral_residual(
    sys: &ImpulseSystem,
    dich: &DichotomyData,
    inner: &InnerSolution,
    set: &SolverSettings,
    factor: usize,
) -> Result<ResidualCheck> {
    let f = forcing_on(sys, &inner.grid, &inner.states);
    let coarse = sup_diff(sys, &inner.grid.sweep(&f, &inner.jumps), &inner.states);
    let fine_grid = FrozenGrid::new(
        &sys.coeff,
        dich,
        inner.grid.lo,
        inner.grid.times.clone(),
        set,
        factor,
    )?;
    let states: Vec<Vec<SpectralVec>> = fine_grid
        .nodes
        .par_iter()
        .zip(inner.states.par_iter())
        .map(|(ts, orig)| {
            ts.iter()
                .enumerate()
                .map(|(i, t)| {
                    if i % factor == 0 {
                        orig[i / factor].clone()
                    } else {
                        inner.eval(sys, *t).unwrap()
                    }
                })
                .collect()
        })
        .collect();
    let ff = forcing_on(sys, &fine_grid, &states);
    let image = fine_grid.sweep(&ff, &inner.jumps);
    let fine = image
        .iter()
        .zip(&inner.states)
        .flat_map(|(img, orig)| {
            orig.iter()
                .enumerate()
                .map(move |(i, x)| sys.norm(&(&img[i * factor] - x)))
        })
        .fold(0.0, f64::max);
    Ok(ResidualCheck {
        coarse,
        fine,
        tolerance: set.residual_tol,
    })
}

/// Largest `|.|_0` discrepancy between the assembled solution and a direct
/// simulation started from its right limit at `tau_{j_from}` and run to
/// `tau_{j_to}`, compared on the simulation nodes.
pub fn simulation_discrepancy(
    sys: &ImpulseSystem,
    inner: &InnerSolution,
    j_from: i64,
    j_to: i64,
    sim: SimSettings,
) -> Result<f64> {
    let t0 = inner.grid.times[(j_from - inner.grid.lo) as usize];
    let t1 = inner.grid.times[(j_to - inner.grid.lo) as usize];
    let x0 = inner.right_limit(j_from);
    let simulator = Simulator::new(sys, sim);
    let out = simulator.simulate(t0, &x0, t1, &|_| false)?;
    let mut worst: f64 = 0.0;
    let segs = &out.trajectory.segments;
    for (i, seg) in segs.iter().enumerate() {
        let last = seg.times.len() - 1;
        // the first node of a segment is a right limit, the last one of an
        // interior segment is the state just before a hit
        for (s, (t, x)) in seg.times.iter().zip(&seg.states).enumerate().skip(1) {
            let u = if s == last && i + 1 < segs.len() {
                Some(inner.left_limit(out.trajectory.hits[i].surface))
            } else {
                inner.eval(sys, *t)
            };
            if let Some(u) = u {
                worst = worst.max((&u - x).norm0());
            }
        }
    }
    Ok(worst)
}

/// Constants of the smallness conditions, measured on the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBounds {
    pub alpha: f64,
    pub rho: f64,
    pub theta: f64,
    pub a: f64,
    /// Larger of `q_formula` and `q_measured`.
    pub q: f64,
    /// Spread bound from the moment offsets.
    pub q_formula: f64,
    /// Directly measured sup of `tau''_{j+1} - tau'_j` over the window.
    pub q_measured: f64,
    /// Measured Lipschitz constants of `f`, `g_j`, `tau_j`.
    pub n1_f: f64,
    pub n1_g: f64,
    pub n1_tau: f64,
    pub n1_declared: Option<f64>,
    pub h1: f64,
    pub m0: f64,
    pub g_star: f64,
}

impl ProblemBounds {
    pub fn n1_measured(&self) -> f64 {
        self.n1_f + self.n1_g + self.n1_tau
    }

    /// Value used in the verdicts: the declared one when larger.
    pub fn n1(&self) -> f64 {
        self.n1_measured().max(self.n1_declared.unwrap_or(0.0))
    }

    pub fn m_star(&self) -> f64 {
        self.m0 + self.n1() * self.rho
    }

    pub fn bundle_inputs(&self) -> BundleInputs {
        BundleInputs {
            alpha: self.alpha,
            theta: self.theta,
            q: self.q,
            g_star: self.g_star,
            m_star: self.m_star(),
        }
    }

    pub fn records(&self) -> Vec<(String, String)> {
        let mut r: Vec<(String, String)> = [
            ("alpha", self.alpha),
            ("rho", self.rho),
            ("theta", self.theta),
            ("a", self.a),
            ("Q", self.q),
            ("Q_formula", self.q_formula),
            ("Q_measured", self.q_measured),
            ("N1_f", self.n1_f),
            ("N1_g", self.n1_g),
            ("N1_tau", self.n1_tau),
            ("N1_measured", self.n1_measured()),
            ("N1", self.n1()),
            ("H1", self.h1),
            ("M0", self.m0),
            ("g_star", self.g_star),
            ("M_star", self.m_star()),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:.12e}")))
        .collect();
        r.push((
            "N1_declared".into(),
            self.n1_declared.map_or("none".into(), |v| format!("{v:.12e}")),
        ));
        r
    }
}

/// Sample the Lipschitz and size constants over `|x|_alpha <= rho`,
/// `j in j_lo..=j_hi` and `t` in the span of those surfaces.
pub fn measure_bounds<R: Rng>(
    sys: &ImpulseSystem,
    j_lo: i64,
    j_hi: i64,
    n1_declared: Option<f64>,
    samples: usize,
    rng: &mut R,
) -> ProblemBounds {
    let rho = sys.rho;
    let lap = &sys.lap;
    let alpha = sys.alpha;
    let t_lo = sys.surfaces.base(j_lo);
    let t_hi = sys.surfaces.base(j_hi).max(t_lo + 1.0);
    let theta = sys.separation(j_lo - 3, j_hi + 3);
    let (qf, qm) = sys.q_bounds(j_lo - 3, j_hi + 3);
    let (mut nf, mut ng, mut nt, mut h1): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut g_star: f64 = 0.0;
    // extreme pairs along the first mode, where Q and the norms peak
    let e1 = lap.weights(alpha)[0];
    let mut pairs: Vec<(SpectralVec, SpectralVec)> = Vec::new();
    for s in [1.0, -1.0] {
        let x = SpectralVec::basis(sys.n_modes(), 1).scale(s * rho / e1);
        pairs.push((x.clone(), x.scale(1.0 - 1e-4)));
    }
    for i in 0..samples {
        let r1 = rho * rng.gen::<f64>().sqrt();
        let u1 = random_state(lap, alpha, r1, rng);
        let u2 = if i % 2 == 0 {
            let r2 = rho * rng.gen::<f64>().sqrt();
            random_state(lap, alpha, r2, rng)
        } else {
            let d = random_state(lap, alpha, 1e-4 * rho, rng);
            let v = &u1 + &d;
            let nv = lap.frac_norm(&v, alpha);
            if nv > rho {
                v.scale(rho / nv)
            } else {
                v
            }
        };
        pairs.push((u1, u2));
    }
    for (u1, u2) in &pairs {
        let du = lap.frac_norm(&(u1 - u2), alpha);
        if du == 0.0 {
            continue;
        }
        let t = rng.gen_range(t_lo..t_hi);
        let j = rng.gen_range(j_lo..=j_hi);
        nf = nf.max((&sys.f(t, u1) - &sys.f(t, u2)).norm0() / du);
        ng = ng.max(lap.frac_norm(&(&sys.g(j, u1) - &sys.g(j, u2)), alpha) / du);
        nt = nt.max((sys.tau(j, u1) - sys.tau(j, u2)).abs() / du);
        let dt = 1e-4;
        h1 = h1.max((&sys.f(t + dt, u1) - &sys.f(t, u1)).norm0() / dt);
        g_star = g_star
            .max(lap.frac_norm(&sys.g(j, u1), 1.0))
            .max(lap.frac_norm(&sys.g(j, u2), 1.0));
    }
    let zero = SpectralVec::zeros(sys.n_modes());
    let mut m0 = sys.forcing.sup_at_zero();
    for j in j_lo..=j_hi {
        let g0 = lap.frac_norm(&sys.g(j, &zero), 1.0);
        m0 = m0.max(g0);
        g_star = g_star.max(g0);
    }
    for _ in 0..samples.min(256) {
        let t = rng.gen_range(t_lo..t_hi);
        m0 = m0.max(sys.f(t, &zero).norm0());
    }
    ProblemBounds {
        alpha,
        rho,
        theta,
        a: sys.surfaces.a,
        q: qf.max(qm),
        q_formula: qf,
        q_measured: qm,
        n1_f: nf,
        n1_g: ng,
        n1_tau: nt,
        n1_declared,
        h1,
        m0,
        g_star,
    }
}

/// Verdicts on the smallness conditions and the observed contraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub k_m0: f64,
    pub rho: f64,
    pub km0_pass: bool,
    pub n1: f64,
    pub n1_limit: f64,
    pub n1_pass: bool,
    pub l_second: f64,
    pub l_prime: f64,
    /// `(L' + L'' / theta^alpha) N1`.
    pub contraction_bound: f64,
    /// Predicted inner ratio `K N1`.
    pub kn1: f64,
    pub observed_inner_ratio: Option<f64>,
    pub observed_s_ratio: Option<f64>,
}

impl ContractionReport {
    pub fn all_pass(&self) -> bool {
        self.km0_pass && self.n1_pass
    }

    pub fn inner_ratio_pass(&self) -> Option<bool> {
        self.observed_inner_ratio.map(|r| r <= self.kn1 * 1.05)
    }

    pub fn s_ratio_pass(&self) -> Option<bool> {
        self.observed_s_ratio.map(|r| r < 1.0)
    }

    pub fn records(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.12e}"));
        let optb = |v: Option<bool>| v.map_or("none".to_string(), |x| x.to_string());
        vec![
            ("K_M0".into(), format!("{:.12e}", self.k_m0)),
            ("rho".into(), format!("{:.12e}", self.rho)),
            ("check_KM0".into(), self.km0_pass.to_string()),
            ("N1".into(), format!("{:.12e}", self.n1)),
            ("N1_limit".into(), format!("{:.12e}", self.n1_limit)),
            ("check_N1".into(), self.n1_pass.to_string()),
            ("L_second".into(), format!("{:.12e}", self.l_second)),
            ("L_prime".into(), format!("{:.12e}", self.l_prime)),
            ("contraction_bound".into(), format!("{:.12e}", self.contraction_bound)),
            ("K_N1".into(), format!("{:.12e}", self.kn1)),
            ("observed_inner_ratio".into(), opt(self.observed_inner_ratio)),
            ("check_inner_ratio".into(), optb(self.inner_ratio_pass())),
            ("observed_S_ratio".into(), opt(self.observed_s_ratio)),
            ("check_S_ratio".into(), optb(self.s_ratio_pass())),
            ("all_pass".into(), self.all_pass().to_string()),
        ]
    }
}

pub fn verify_smallness(
    bounds: &ProblemBounds,
    kb: &KBundle,
    observed_inner_ratio: Option<f64>,
    observed_s_ratio: Option<f64>,
) -> ContractionReport {
    let n1 = bounds.n1();
    let k_m0 = kb.k * bounds.m0;
    let n1_limit = (1.0 / kb.psi1).min(1.0 / kb.psi3);
    let l_second = if n1 * kb.psi3 < 1.0 {
        kb.k4 / (1.0 - n1 * kb.psi3)
    } else {
        f64::INFINITY
    };
    let l_prime = if n1 * kb.psi1 < 1.0 {
        (n1 * kb.psi2 * l_second + kb.k3) / (1.0 - n1 * kb.psi1)
    } else {
        f64::INFINITY
    };
    ContractionReport {
        k_m0,
        rho: bounds.rho,
        km0_pass: k_m0 < bounds.rho,
        n1,
        n1_limit,
        n1_pass: n1 < n1_limit,
        l_second,
        l_prime,
        contraction_bound: (l_prime + l_second / kb.theta.powf(kb.alpha)) * n1,
        kn1: kb.k * n1,
        observed_inner_ratio,
        observed_s_ratio,
    }
}

/// Constant bundle for the measured bounds.
pub fn bundle_for(bounds: &ProblemBounds, dich: &DichotomyData) -> Result<KBundle> {
    k_bundle(bounds.bundle_inputs(), dich)
}

/// Largest inner increment ratio from the second ratio on.
pub fn observed_inner_ratio(inner: &InnerSolution) -> Option<f64> {
    inner
        .ratios
        .iter()
        .filter(|(n, _)| *n >= 2)
        .map(|(_, r)| *r)
        .reduce(f64::max)
}

/// Random sequence in the ball on `lo..=hi`.
pub fn random_sequence<R: Rng>(sys: &ImpulseSystem, lo: i64, hi: i64, rng: &mut R) -> APSequencePoint {
    APSequencePoint {
        lo,
        values: (lo..=hi)
            .map(|_| {
                let r = sys.rho * rng.gen::<f64>();
                random_state(&sys.lap, sys.alpha, r, rng)
            })
            .collect(),
    }
}

/// `max ||S(y) - S(z)|| / ||y - z||` over random pairs in the ball.
pub fn probe_s_ratio<R: Rng>(
    sys: &ImpulseSystem,
    dich: &DichotomyData,
    lo: i64,
    hi: i64,
    pairs: usize,
    set: &SolverSettings,
    rng: &mut R,
) -> Result<f64> {
    let probes: Vec<(APSequencePoint, APSequencePoint)> = (0..pairs)
        .map(|_| (random_sequence(sys, lo, hi, rng), random_sequence(sys, lo, hi, rng)))
        .collect();
    let ratios: Result<Vec<f64>> = probes
        .par_iter()
        .map(|(y, z)| {
            let (sy, _) = poincare_map(sys, dich, y, set)?;
            let (sz, _) = poincare_map(sys, dich, z, set)?;
            Ok(sy.dist(&sz, sys) / y.dist(z, sys))
        })
        .collect();
    Ok(ratios?.into_iter().fold(0.0, f64::max))
}

/// Almost periodicity evidence for one `eps`.
#[derive(Debug, Clone)]
pub struct APReport {
    pub eps: f64,
    pub sequence: EpsPeriodReport,
    pub harmonization: Harmonization,
    /// Wexler deviation of `u*` at the harmonized shift.
    pub deviation: Option<f64>,
}

impl APReport {
    pub fn records(&self) -> Vec<(String, String)> {
        let mut r = self.sequence.records();
        match self.harmonization.pair {
            Some((q, s)) => {
                r.push(("harmonized_q".into(), q.to_string()));
                r.push(("harmonized_r".into(), format!("{s:.12e}")));
            }
            None => r.push(("harmonized_q".into(), "none".into())),
        }
        r.push((
            "wexler_deviation".into(),
            self.deviation.map_or("none".into(), |d| format!("{d:.6e}")),
        ));
        r
    }
}

/// The reported part of `u*` sampled with step `h` (values as coefficient
/// vectors, jumps at the frozen moments).
pub fn sampled_solution(
    sys: &ImpulseSystem,
    sol: &OuterSolution,
    h: f64,
) -> Result<PiecewiseSampledFunction> {
    let lo = (sol.report.0 - sol.y.lo) as usize;
    let hi = (sol.report.1 - sol.y.lo) as usize;
    let times = &sol.inner.grid.times;
    PiecewiseSampledFunction::sample(
        times[lo],
        times[hi],
        h,
        |t| sol.inner.eval(sys, t).map(|x| x.0).unwrap_or_default(),
        times[lo..=hi].to_vec(),
        WeightedNorm::weighted(sys.lap.weights(sys.alpha)),
    )
}

/// eps-almost periods of `y*` and a harmonized shift for `u*`, per `eps`.
pub fn certify_almost_periodicity(
    sys: &ImpulseSystem,
    sol: &OuterSolution,
    eps_list: &[f64],
    h: f64,
) -> Result<Vec<APReport>> {
    let y = sol.reported();
    let seq = y.windowed(sys);
    let p_hi = (seq.len() / 3) as i64;
    let lo = (sol.report.0 - sol.y.lo) as usize;
    let hi = (sol.report.1 - sol.y.lo) as usize;
    let times = &sol.inner.grid.times[lo..=hi];
    let a = sys.surfaces.a;
    let offsets: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, t)| t - a * (sol.report.0 + i as i64) as f64)
        .collect();
    let taus = StronglyAPSet::from_offsets(a, offsets, sol.report.0)?;
    let f = sampled_solution(sys, sol, h)?;
    let span = f.t_end() - f.t0;
    eps_list
        .iter()
        .map(|&eps| {
            let sequence = eps_almost_periods(&seq, eps, 1, p_hi.max(1))?;
            let harmonization = harmonize(&seq, &taus, &f, eps, taus.theta(), span / 3.0)?;
            let deviation = match harmonization.pair {
                Some((_, r)) => Some(wexler_deviation(&f, r, eps)?),
                None => None,
            };
            Ok(APReport {
                eps,
                sequence,
                harmonization,
                deviation,
            })
        })
        .collect()
}
