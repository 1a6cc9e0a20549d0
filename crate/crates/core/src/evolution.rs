//! Evolution family of `x' + (A + A1(t)) x = 0` with `A1(t) = m(t) + diag(sigma)`,
//! dichotomy fitting, the Green function, the bounded solution of the linear
//! impulsive problem and the constant bundle used by the solver.

use rand::Rng;
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_vec, gauss_legendre_composite};
use crate::spectral::{DirichletLaplacian, SpectralVec};
use crate::trajectory::{PiecewiseTrajectory, Segment};
use crate::trig::TrigSum;

/// `A1(t) x = m(t) x + sigma_k x_k`, together with the Laplacian it perturbs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficient {
    lap: DirichletLaplacian,
    m: TrigSum,
    sigma: Vec<f64>,
    rates: Vec<f64>,
}

impl LinearCoefficient {
    pub fn new(lap: DirichletLaplacian, m: TrigSum) -> Self {
        let n = lap.n_modes();
        Self::with_shifts(lap, m, vec![0.0; n]).unwrap()
    }

    pub fn with_shifts(lap: DirichletLaplacian, m: TrigSum, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != lap.n_modes() {
            return Err(Error::Domain(format!(
                "{} mode shifts for {} modes",
                sigma.len(),
                lap.n_modes()
            )));
        }
        let rates = lap
            .eigenvalues()
            .iter()
            .zip(&sigma)
            .map(|(l, s)| l + s)
            .collect();
        Ok(LinearCoefficient {
            lap,
            m,
            sigma,
            rates,
        })
    }

    pub fn lap(&self) -> &DirichletLaplacian {
        &self.lap
    }

    pub fn m(&self) -> &TrigSum {
        &self.m
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_modes(&self) -> usize {
        self.rates.len()
    }

    /// `nu_k = lambda_k + sigma_k` (index 0 is mode 1).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Mean exponents `nu_k + mean(m)`.
    pub fn mean_exponents(&self) -> Vec<f64> {
        let mbar = self.m.mean();
        self.rates.iter().map(|r| r + mbar).collect()
    }

    pub fn m_sup(&self) -> f64 {
        self.m.sup_bound()
    }

    pub fn m_lipschitz(&self) -> f64 {
        self.m.lipschitz_bound()
    }

    /// `log U_k(t, s)` for any order of `t`, `s`.
    pub fn log_factor(&self, k: usize, t: f64, s: f64) -> f64 {
        -self.rates[k] * (t - s) - self.m.integral(s, t)
    }

    /// `a_*(h) = sup_s |m(s) - m(s + h)|`, sampled over `[lo, hi]`.
    pub fn a_star(&self, h: f64, lo: f64, hi: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        self.m.shift_difference(h).sup_abs_on(lo, hi)
    }
}

/// `U(t, s) x` for `t >= s`.
pub fn evolution_apply(
    t: f64,
    s: f64,
    x: &SpectralVec,
    coeff: &LinearCoefficient,
) -> Result<SpectralVec> {
    if t < s {
        return Err(Error::Domain(format!("evolution needs t >= s, got t = {t}, s = {s}")));
    }
    if t == s {
        return Ok(x.clone());
    }
    let im = coeff.m.integral(s, t);
    Ok(SpectralVec(
        coeff
            .rates
            .iter()
            .zip(x.iter())
            .map(|(r, c)| c * (-r * (t - s) - im).exp())
            .collect(),
    ))
}

/// Projection data and fitted dichotomy constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyData {
    pub alpha: f64,
    /// Indices (0-based) of modes with negative mean exponent.
    pub unstable_modes: Vec<usize>,
    pub mean_exponents: Vec<f64>,
    pub m: f64,
    pub beta: f64,
    pub m1: f64,
    pub m2: f64,
    pub beta1: f64,
    /// `|(U(t,s) - I) x|_alpha <= C (t - s)^{1 - alpha} |x|_1` for `0 < t - s <= 1`.
    pub c_evop: f64,
    pub window: (f64, f64),
    pub tau_max: f64,
}

impl DichotomyData {
    pub fn is_unstable(&self, k: usize) -> bool {
        self.unstable_modes.contains(&k)
    }

    pub fn unstable_mask(&self, n: usize) -> Vec<bool> {
        (0..n).map(|k| self.is_unstable(k)).collect()
    }

    /// `P x`.
    pub fn project_unstable(&self, x: &SpectralVec) -> SpectralVec {
        let mut y = SpectralVec::zeros(x.len());
        for &k in &self.unstable_modes {
            y[k] = x[k];
        }
        y
    }

    pub fn records(&self) -> Vec<(String, String)> {
        let modes: Vec<String> = self
            .unstable_modes
            .iter()
            .map(|k| (k + 1).to_string())
            .collect();
        vec![
            ("alpha".into(), format!("{}", self.alpha)),
            ("unstable_modes".into(), modes.join(",")),
            ("M".into(), format!("{:.12e}", self.m)),
            ("beta".into(), format!("{:.12e}", self.beta)),
            ("M1".into(), format!("{:.12e}", self.m1)),
            ("M2".into(), format!("{:.12e}", self.m2)),
            ("beta1".into(), format!("{:.12e}", self.beta1)),
            ("C".into(), format!("{:.12e}", self.c_evop)),
            (
                "min_abs_mean_exponent".into(),
                format!(
                    "{:.12e}",
                    self.mean_exponents
                        .iter()
                        .fold(f64::INFINITY, |m, e| m.min(e.abs()))
                ),
            ),
        ]
    }
}

/// `psi_alpha(s) = 1 + s^{-alpha}` for `s > 0`, `1` otherwise.
pub fn psi(alpha: f64, s: f64) -> f64 {
    if s > 0.0 {
        1.0 + s.powf(-alpha)
    } else {
        1.0
    }
}

/// Scalar Green factor of mode `k`.
fn green_mode(coeff: &LinearCoefficient, unstable: bool, k: usize, t: f64, s: f64) -> f64 {
    match (unstable, t > s) {
        (false, true) => coeff.log_factor(k, t, s).exp(),
        (true, false) => -coeff.log_factor(k, t, s).exp(),
        _ => 0.0,
    }
}

/// `G(t, s) x`: stable modes forward for `t > s`, unstable modes backward
/// with a minus sign for `t <= s`.
pub fn green_apply(
    t: f64,
    s: f64,
    x: &SpectralVec,
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
) -> SpectralVec {
    let mask = dich.unstable_mask(x.len());
    let im = coeff.m.integral(s, t);
    SpectralVec(
        (0..x.len())
            .map(|k| match (mask[k], t > s) {
                (false, true) | (true, false) => {
                    let g = (-coeff.rates[k] * (t - s) - im).exp();
                    if mask[k] {
                        -g * x[k]
                    } else {
                        g * x[k]
                    }
                }
                _ => 0.0,
            })
            .collect(),
    )
}

/// Draw `tau > 0` half log-uniformly on `[1e-4, tau_max]`, half uniformly.
fn draw_gap<R: Rng>(rng: &mut R, tau_max: f64) -> f64 {
    if rng.gen_bool(0.5) {
        1e-4 * (tau_max / 1e-4).powf(rng.gen::<f64>())
    } else {
        rng.gen_range(1e-4..tau_max)
    }
}

/// Sampling plan for fits and verifications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleWindow {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl Default for SampleWindow {
    fn default() -> Self {
        SampleWindow {
            lo: -100.0,
            hi: 100.0,
            samples: 4000,
        }
    }
}

/// Fit the dichotomy of the diagonal family: unstable modes by the sign of
/// the mean exponent, `beta = 0.95 min |mean exponent|`, and the bound
/// constants as sampled sups with 5% slack. Operator norms are exact
/// per-mode maxima, so the sup over `x` needs no sampling.
pub fn fit_dichotomy<R: Rng>(
    coeff: &LinearCoefficient,
    alpha: f64,
    plan: SampleWindow,
    rng: &mut R,
) -> Result<DichotomyData> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let mean_exponents = coeff.mean_exponents();
    for (k, e) in mean_exponents.iter().enumerate() {
        if e.abs() < 1e-8 {
            return Err(Error::NonHyperbolic {
                mode: k + 1,
                exponent: *e,
            });
        }
    }
    let unstable_modes: Vec<usize> = (0..mean_exponents.len())
        .filter(|&k| mean_exponents[k] < 0.0)
        .collect();
    let beta = 0.95
        * mean_exponents
            .iter()
            .fold(f64::INFINITY, |m, e| m.min(e.abs()));
    let n = coeff.n_modes();
    let mask: Vec<bool> = (0..n).map(|k| unstable_modes.contains(&k)).collect();
    let w = coeff.lap.weights(alpha);
    if plan.hi - plan.lo < 60.0 {
        return Err(Error::Domain(format!(
            "sample window [{}, {}] shorter than 60",
            plan.lo, plan.hi
        )));
    }
    let tau_max = (40.0 / beta).clamp(10.0, 0.25 * (plan.hi - plan.lo));

    let mut m_fit: f64 = 1.0;
    let mut m1_fit: f64 = 0.0;
    let mut c_fit: f64 = 0.0;
    for _ in 0..plan.samples {
        let s = rng.gen_range(plan.lo..plan.hi - tau_max);
        let tau = draw_gap(rng, tau_max);
        let t = s + tau;
        // forward pair (t > s) for stable modes, backward pair (s, t) for unstable
        let im = coeff.m.integral(s, t);
        for k in 0..n {
            let g = if mask[k] {
                // |U(s, t) P| for s <= t: exponent reversed
                (coeff.rates[k] * tau + im).exp()
            } else {
                (-coeff.rates[k] * tau - im).exp()
            };
            let dec = (-beta * tau).exp();
            m_fit = m_fit.max(g / dec);
            let p = if mask[k] { 1.0 } else { psi(alpha, tau) };
            m1_fit = m1_fit.max(w[k] * g / (p * dec));
            if tau <= 1.0 {
                let u = (-coeff.rates[k] * tau - im).exp_m1().abs();
                let l = coeff.lap.eigenvalues()[k];
                c_fit = c_fit.max(u * l.powf(alpha - 1.0) / tau.powf(1.0 - alpha));
            }
        }
    }
    let m = 1.05 * m_fit;
    let m1 = (1.05 * m1_fit).max(m);
    let c_evop = 1.05 * c_fit;
    let beta1 = 0.5 * beta;

    let mut dich = DichotomyData {
        alpha,
        unstable_modes,
        mean_exponents,
        m,
        beta,
        m1,
        m2: 0.0,
        beta1,
        c_evop,
        window: (plan.lo, plan.hi),
        tau_max,
    };
    let mut m2_fit: f64 = 0.0;
    for _ in 0..plan.samples {
        let (h, t, tau) = draw_shift_sample(rng, &dich);
        let a = coeff.a_star(h, plan.lo, plan.hi);
        if a < 1e-12 {
            continue;
        }
        let r = shift_defect_ratio(coeff, &dich, h, t, tau, &w);
        m2_fit = m2_fit.max(r / (dich.beta1 * -(t - tau).abs()).exp() / psi(alpha, t - tau) / a);
    }
    dich.m2 = 1.05 * m2_fit;
    Ok(dich)
}

fn draw_shift_sample<R: Rng>(rng: &mut R, dich: &DichotomyData) -> (f64, f64, f64) {
    let (lo, hi) = dich.window;
    let h = rng.gen_range(-10.0..10.0);
    let gap = draw_gap(rng, dich.tau_max);
    let gap = if rng.gen_bool(0.5) { gap } else { -gap };
    let inner_lo = lo + dich.tau_max + 10.0;
    let inner_hi = hi - dich.tau_max - 10.0;
    let tau = rng.gen_range(inner_lo..inner_hi);
    (h, tau + gap, tau)
}

/// `max_k lambda_k^alpha |(G(t+h, tau+h) - G(t, tau))_k|`, the operator
/// norm from `X` to `X^alpha` of the shift defect.
fn shift_defect_ratio(
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
    h: f64,
    t: f64,
    tau: f64,
    w: &[f64],
) -> f64 {
    let i0 = coeff.m.integral(tau, t);
    let ih = coeff.m.integral(tau + h, t + h);
    (0..coeff.n_modes())
        .map(|k| {
            let g = green_mode(coeff, dich.is_unstable(k), k, t, tau);
            w[k] * (g * (-(ih - i0)).exp_m1()).abs()
        })
        .fold(0.0, f64::max)
}

/// Direct shift defect `|(G(t+h, tau+h) - G(t, tau)) x|_alpha` and the
/// bound `M2 e^{-beta1 |t - tau|} psi_alpha(t - tau) a_*(h) |x|_0`.
pub fn green_shift_defect(
    h: f64,
    t: f64,
    tau: f64,
    x: &SpectralVec,
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
) -> (f64, f64) {
    let a = green_apply(t + h, tau + h, x, coeff, dich);
    let b = green_apply(t, tau, x, coeff, dich);
    let defect = coeff.lap.frac_norm(&(&a - &b), dich.alpha);
    let (lo, hi) = dich.window;
    let bound = dich.m2
        * (-dich.beta1 * (t - tau).abs()).exp()
        * psi(dich.alpha, t - tau)
        * coeff.a_star(h, lo, hi)
        * x.norm0();
    (defect, bound)
}

/// Counts of violations of the dichotomy bounds, the refined `M1` bound and
/// the shift inequality on fresh samples with random `x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DichotomyCheck {
    pub samples: usize,
    pub stable_violations: usize,
    pub unstable_violations: usize,
    pub refined_violations: usize,
    pub shift_violations: usize,
    pub worst_ratio: f64,
    pub worst_shift_ratio: f64,
}

pub fn verify_dichotomy<R: Rng>(
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
    samples: usize,
    rng: &mut R,
) -> DichotomyCheck {
    let n = coeff.n_modes();
    let lap = &coeff.lap;
    let al = dich.alpha;
    let (lo, hi) = dich.window;
    let mut out = DichotomyCheck {
        samples,
        ..Default::default()
    };
    for _ in 0..samples {
        let x = SpectralVec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let s = rng.gen_range(lo..hi - dich.tau_max);
        let tau = draw_gap(rng, dich.tau_max);
        let t = s + tau;
        let xa = lap.frac_norm(&x, al);
        // (I - P) forward
        let mut q = x.clone();
        for &k in &dich.unstable_modes {
            q[k] = 0.0;
        }
        let fwd = evolution_apply(t, s, &q, coeff).unwrap();
        let bound = dich.m * (-dich.beta * tau).exp() * xa;
        let r = lap.frac_norm(&fwd, al) / bound;
        out.worst_ratio = out.worst_ratio.max(r);
        if r > 1.0 {
            out.stable_violations += 1;
        }
        // P backward: U(s, t) P x for s <= t
        let px = dich.project_unstable(&x);
        let back = green_apply(s, t, &px, coeff, dich);
        let r = lap.frac_norm(&back, al) / bound;
        out.worst_ratio = out.worst_ratio.max(r);
        if r > 1.0 {
            out.unstable_violations += 1;
        }
        // refined: |G(t, s) x|_alpha <= M1 psi e^{-beta |t-s|} |x|_0, both orders
        for (a, b) in [(t, s), (s, t)] {
            let g = green_apply(a, b, &x, coeff, dich);
            let rb = dich.m1 * psi(al, a - b) * (-dich.beta * (a - b).abs()).exp() * x.norm0();
            if lap.frac_norm(&g, al) > rb {
                out.refined_violations += 1;
            }
        }
        let (h, t, tau) = draw_shift_sample(rng, dich);
        let (d, b) = green_shift_defect(h, t, tau, &x, coeff, dich);
        if b > 0.0 {
            out.worst_shift_ratio = out.worst_shift_ratio.max(d / b);
        }
        if d > b {
            out.shift_violations += 1;
        }
    }
    out
}

/// Per basis vector `e_k`: the direct difference `G(t+h, tau+h) - G(t, tau)`
/// and the quadrature of `int G(t,s) (m(s) - m(s+h)) G(s+h, tau+h) ds`.
/// Returns the largest `|.|_alpha` discrepancy over the modes.
pub fn green_identity_defect(
    t: f64,
    tau: f64,
    h: f64,
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
) -> f64 {
    let w = coeff.lap.weights(dich.alpha);
    let m = coeff.m();
    (0..coeff.n_modes())
        .map(|k| {
            let un = dich.is_unstable(k);
            let direct =
                green_mode(coeff, un, k, t + h, tau + h) - green_mode(coeff, un, k, t, tau);
            let (a, b) = if t > tau { (tau, t) } else { (t, tau) };
            let quad = adaptive_simpson(
                |s| {
                    green_mode(coeff, un, k, t, s)
                        * (m.value(s) - m.value(s + h))
                        * green_mode(coeff, un, k, s + h, tau + h)
                },
                a,
                b,
                1e-13,
            );
            w[k] * (direct - quad).abs()
        })
        .fold(0.0, f64::max)
}

/// Data of the linear impulsive problem `x' + (A + A1) x = f(t)`,
/// `x(t_j + 0) - x(t_j) = g_j`.
pub struct LinearImpulsiveData<'a> {
    pub forcing: &'a (dyn Fn(f64) -> SpectralVec + Sync),
    /// Upper bound of `|f(t)|_0`.
    pub forcing_sup: f64,
    /// Discontinuities of `f`, used to split quadrature panels.
    pub forcing_breaks: Vec<f64>,
    pub jumps: Vec<(f64, SpectralVec)>,
    /// Range where `f` and the jump list are known.
    pub data_window: (f64, f64),
}

/// Output of `bounded_solution`.
#[derive(Debug, Clone)]
pub struct BoundedSolution {
    pub trajectory: PiecewiseTrajectory,
    pub t_tail: f64,
    pub tail_bound: f64,
}

/// Truncation length for which the a-priori tail bound is below `tail_tol`.
pub fn tail_length(data: &LinearImpulsiveData<'_>, dich: &DichotomyData, tail_tol: f64) -> f64 {
    let g_sup = data
        .jumps
        .iter()
        .map(|(_, g)| g.norm0())
        .fold(0.0, f64::max);
    let mut times: Vec<f64> = data.jumps.iter().map(|(t, _)| *t).collect();
    times.sort_by(f64::total_cmp);
    let theta = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let jump_sum = if theta.is_finite() {
        g_sup / (1.0 - (-dich.beta * theta).exp())
    } else {
        g_sup
    };
    let scale = dich.m1 * (data.forcing_sup / dich.beta + jump_sum);
    if scale <= tail_tol {
        return 0.0;
    }
    (scale / tail_tol).ln() / dich.beta
}

/// `u0(t) = int G(t, v) f(v) dv + sum_j G(t, t_j) g_j` evaluated at `times`
/// by adaptive quadrature truncated at `t_tail`.
pub fn bounded_solution(
    data: &LinearImpulsiveData<'_>,
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
    times: &[f64],
    tail_tol: f64,
) -> Result<BoundedSolution> {
    let t_tail = tail_length(data, dich, tail_tol);
    bounded_solution_with_tail(data, coeff, dich, times, t_tail, tail_tol)
}

pub fn bounded_solution_with_tail(
    data: &LinearImpulsiveData<'_>,
    coeff: &LinearCoefficient,
    dich: &DichotomyData,
    times: &[f64],
    t_tail: f64,
    tail_tol: f64,
) -> Result<BoundedSolution> {
    use rayon::prelude::*;
    let n = coeff.n_modes();
    let mask = dich.unstable_mask(n);
    let any_stable = mask.iter().any(|u| !u);
    let any_unstable = mask.iter().any(|u| *u);
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let need_lo = if any_stable { t_min - t_tail } else { t_min };
    let need_hi = if any_unstable { t_max + t_tail } else { t_max };
    let (have_lo, have_hi) = data.data_window;
    if need_lo < have_lo || need_hi > have_hi {
        return Err(Error::TailWindow {
            need_lo,
            need_hi,
            have_lo,
            have_hi,
        });
    }
    let mut jumps = data.jumps.clone();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));

    let value = |t: f64, right: bool| -> SpectralVec {
        let mut u = SpectralVec::zeros(n);
        if any_stable {
            let part = green_integral(coeff, &mask, data, t, t - t_tail, t, false);
            u += &part;
        }
        if any_unstable {
            let part = green_integral(coeff, &mask, data, t, t, t + t_tail, true);
            u += &part;
        }
        for (tj, g) in &jumps {
            let past = if right { *tj <= t } else { *tj < t };
            if (t - tj).abs() > t_tail {
                continue;
            }
            let im = coeff.m.integral(*tj, t);
            for k in 0..n {
                if mask[k] == past {
                    continue;
                }
                let e = (-coeff.rates[k] * (t - tj) - im).exp();
                u[k] += if past { e * g[k] } else { -e * g[k] };
            }
        }
        u
    };

    // segments split at the jump moments
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut cuts: Vec<f64> = jumps
        .iter()
        .map(|(t, _)| *t)
        .filter(|t| *t > t_min && *t < t_max)
        .collect();
    cuts.dedup();
    let mut pieces: Vec<Vec<f64>> = Vec::new();
    let mut cur = vec![sorted[0]];
    let mut ci = 0;
    for &t in &sorted[1..] {
        while ci < cuts.len() && cuts[ci] < t {
            if *cur.last().unwrap() < cuts[ci] {
                cur.push(cuts[ci]);
            }
            pieces.push(std::mem::take(&mut cur));
            cur.push(cuts[ci]);
            ci += 1;
        }
        cur.push(t);
    }
    pieces.push(cur);

    let segments: Vec<Segment> = pieces
        .par_iter()
        .map(|p| {
            let mut seg = Segment::default();
            for (i, &t) in p.iter().enumerate() {
                let right = i == 0 && cuts.contains(&t);
                seg.push(t, value(t, right));
            }
            seg
        })
        .collect();
    Ok(BoundedSolution {
        trajectory: PiecewiseTrajectory {
            segments,
            hits: Vec::new(),
        },
        t_tail,
        tail_bound: tail_tol,
    })
}

/// Adaptive quadrature of the stable (`backward == false`, over `[a, t]`) or
/// unstable (`[t, b]`) part of the Green integral at time `t`. Panels are
/// graded toward `t` where fast modes form a boundary layer.
fn green_integral(
    coeff: &LinearCoefficient,
    mask: &[bool],
    data: &LinearImpulsiveData<'_>,
    t: f64,
    a: f64,
    b: f64,
    backward: bool,
) -> SpectralVec {
    let n = coeff.n_modes();
    let w = coeff.lap.weights(0.5);
    let integrand = |v: f64| -> Vec<f64> {
        let f = (data.forcing)(v);
        let im = coeff.m.integral(v, t);
        (0..n)
            .map(|k| {
                if mask[k] != backward {
                    return 0.0;
                }
                let e = (-coeff.rates[k] * (t - v) - im).exp();
                if backward {
                    -e * f[k]
                } else {
                    e * f[k]
                }
            })
            .collect()
    };
    let err = |d: &[f64]| d.iter().zip(&w).fold(0.0f64, |m, (x, w)| m.max((w * x).abs()));
    // breakpoints: graded toward t, plus the forcing discontinuities
    let mut pts = vec![a, b];
    let len = b - a;
    let mut d = 1e-5;
    while d < len {
        pts.push(if backward { t + d } else { t - d });
        d *= 4.0;
    }
    pts.extend(data.forcing_breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = vec![0.0; n];
    for p in pts.windows(2) {
        let part = adaptive_simpson_vec(&integrand, p[0], p[1], 1e-13, &err);
        for (o, x) in out.iter_mut().zip(part) {
            *o += x;
        }
    }
    SpectralVec(out)
}

/// Constants entering the solver's smallness conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBundle {
    pub alpha: f64,
    pub theta: f64,
    pub q: f64,
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub k3: f64,
    pub k4: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

impl KBundle {
    pub fn records(&self) -> Vec<(String, String)> {
        [
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("Q", self.q),
            ("K1", self.k1),
            ("K2", self.k2),
            ("K", self.k),
            ("K3", self.k3),
            ("K4", self.k4),
            ("Psi1", self.psi1),
            ("Psi2", self.psi2),
            ("Psi3", self.psi3),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:.12e}")))
        .collect()
    }
}

/// `K1 = int M1 psi_alpha(s) e^{-beta |s|} ds` by open Gauss-Legendre after
/// the substitution `s = w^{1/(1-alpha)}`, which removes the singularity.
pub fn k1_integral(alpha: f64, m1: f64, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let s_end = 45.0 / beta;
    let neg = gauss_legendre_composite(|s| (-beta * s).exp(), 0.0, s_end, 64, 10);
    let one = neg;
    let p = 1.0 / (1.0 - alpha);
    let w_end = s_end.powf(1.0 - alpha);
    let sing = p * gauss_legendre_composite(|w| (-beta * w.powf(p)).exp(), 0.0, w_end, 64, 10);
    Ok(m1 * (neg + one + sing))
}

/// Inputs of the constant bundle beyond the dichotomy fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleInputs {
    pub alpha: f64,
    pub theta: f64,
    pub q: f64,
    pub g_star: f64,
    pub m_star: f64,
}

pub fn k_bundle(inp: BundleInputs, dich: &DichotomyData) -> Result<KBundle> {
    k_bundle_from(inp, dich.m1, dich.beta, dich.c_evop)
}

/// Same as `k_bundle` with explicit `(M1, beta, C)`.
pub fn k_bundle_from(inp: BundleInputs, m1: f64, beta: f64, c: f64) -> Result<KBundle> {
    let BundleInputs {
        alpha,
        theta,
        q,
        g_star,
        m_star,
    } = inp;
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let k1 = k1_integral(alpha, m1, beta)?;
    let den = 1.0 - (-beta * theta).exp();
    let k2 = 2.0 * m1 / den;
    let ta = 1.0 + theta.powf(-alpha);
    let k3 = m1 * ta * (1.0 + c * g_star + 2.0 * m_star) / den;
    let k4 = m1 * (g_star * c + 2.0 * m_star);
    let qa = q.powf(1.0 - alpha);
    let psi1 = 2.0 * m1 * ta * q / den + m1 * qa / (1.0 - alpha);
    let psi2 = 2.0 * m1 * ta * qa / (den * (1.0 - alpha));
    let psi3 = m1 * beta_fn(1.0 - alpha, 1.0 - alpha) * qa;
    Ok(KBundle {
        alpha,
        theta,
        q,
        k1,
        k2,
        k: k1 + k2,
        k3,
        k4,
        psi1,
        psi2,
        psi3,
    })
}

fn beta_fn(a: f64, b: f64) -> f64 {
    beta(a, b)
}
