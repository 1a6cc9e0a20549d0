//! Almost-periodicity diagnostics on finite windows: eps-almost periods of
//! sequences, Wexler deviation of piecewise continuous functions, and the
//! common (q, r) harmonization of a sequence, a point set and a function.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trig::APSequenceGen;

/// Norm `(sum w_i^2 v_i^2)^{1/2}`; unit weights give the Euclidean norm and
/// weights `lambda_k^alpha` give `|.|_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    weights: Option<Vec<f64>>,
}

impl WeightedNorm {
    pub fn euclidean() -> Self {
        WeightedNorm { weights: None }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        WeightedNorm {
            weights: Some(weights),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match &self.weights {
            None => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Some(w) => v
                .iter()
                .zip(w)
                .map(|(x, w)| (w * x) * (w * x))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.weights {
            None => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Some(w) => a
                .iter()
                .zip(b)
                .zip(w)
                .map(|((x, y), w)| (w * (x - y)) * (w * (x - y)))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Values `x_k` for `k = lo, lo + 1, ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSequence {
    pub lo: i64,
    pub values: Vec<Vec<f64>>,
    pub norm: WeightedNorm,
}

impl WindowedSequence {
    pub fn new(lo: i64, values: Vec<Vec<f64>>, norm: WeightedNorm) -> Self {
        WindowedSequence { lo, values, norm }
    }

    pub fn scalar(lo: i64, values: Vec<f64>) -> Self {
        WindowedSequence {
            lo,
            values: values.into_iter().map(|v| vec![v]).collect(),
            norm: WeightedNorm::euclidean(),
        }
    }

    pub fn from_generator(g: &APSequenceGen, lo: i64, hi: i64) -> Self {
        WindowedSequence::new(lo, g.window(lo, hi), WeightedNorm::euclidean())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn get(&self, k: i64) -> Option<&[f64]> {
        if k < self.lo || k > self.hi() {
            None
        } else {
            Some(&self.values[(k - self.lo) as usize])
        }
    }

    /// `sup_k |x_{k+p} - x_k|` over the overlap, stopping once `stop` is
    /// reached. `None` when the overlap is empty.
    pub fn shift_deviation(&self, p: i64, stop: f64) -> Option<f64> {
        let n = self.values.len() as i64;
        if p.abs() >= n {
            return None;
        }
        let (from, to) = if p >= 0 { (0, n - p) } else { (-p, n) };
        let mut dev: f64 = 0.0;
        for i in from..to {
            let d = self
                .norm
                .dist(&self.values[(i + p) as usize], &self.values[i as usize]);
            dev = dev.max(d);
            if dev >= stop {
                break;
            }
        }
        Some(dev)
    }
}

/// Report of `eps_almost_periods`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsPeriodReport {
    pub epsilon: f64,
    pub periods: Vec<f64>,
    pub max_gap: Option<f64>,
    pub relatively_dense: bool,
    pub scan_lo: f64,
    pub scan_hi: f64,
}

impl EpsPeriodReport {
    fn from_periods(epsilon: f64, periods: Vec<f64>, scan_lo: f64, scan_hi: f64) -> Self {
        let max_gap = periods
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g))));
        EpsPeriodReport {
            epsilon,
            relatively_dense: max_gap.is_some(),
            periods,
            max_gap,
            scan_lo,
            scan_hi,
        }
    }

    pub fn integer_periods(&self) -> Vec<i64> {
        self.periods.iter().map(|p| p.round() as i64).collect()
    }

    pub fn records(&self) -> Vec<(String, String)> {
        vec![
            ("epsilon".into(), format!("{:e}", self.epsilon)),
            ("scan_lo".into(), format!("{}", self.scan_lo)),
            ("scan_hi".into(), format!("{}", self.scan_hi)),
            ("count".into(), self.periods.len().to_string()),
            (
                "max_gap".into(),
                self.max_gap.map_or("none".into(), |g| format!("{g}")),
            ),
            ("relatively_dense".into(), self.relatively_dense.to_string()),
            (
                "periods".into(),
                self.periods
                    .iter()
                    .map(|p| format!("{p}"))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ]
    }
}

/// All `p` in `[p_lo, p_hi]` with `sup_k |x_{k+p} - x_k| < eps` over the
/// window overlap.
pub fn eps_almost_periods(
    seq: &WindowedSequence,
    eps: f64,
    p_lo: i64,
    p_hi: i64,
) -> Result<EpsPeriodReport> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if p_lo > p_hi {
        return Err(Error::Domain(format!("empty shift range [{p_lo}, {p_hi}]")));
    }
    let reach = p_lo.unsigned_abs().max(p_hi.unsigned_abs()) as usize;
    let needed = 3 * reach.max(1);
    if seq.len() < needed {
        return Err(Error::WindowTooShort {
            needed,
            available: seq.len(),
        });
    }
    let periods: Vec<f64> = (p_lo..=p_hi)
        .into_par_iter()
        .filter(|&p| matches!(seq.shift_deviation(p, eps), Some(d) if d < eps))
        .map(|p| p as f64)
        .collect();
    Ok(EpsPeriodReport::from_periods(
        eps,
        periods,
        p_lo as f64,
        p_hi as f64,
    ))
}

/// Point set `tau_k = a k + c_k` on an index window.
#[derive(Debug, Clone, PartialEq)]
pub struct StronglyAPSet {
    pub a: f64,
    pub j_min: i64,
    taus: Vec<f64>,
    theta: f64,
}

impl StronglyAPSet {
    /// `c` is a scalar generator sampled at the integers of the window.
    pub fn new(a: f64, c: &APSequenceGen, j_min: i64, j_max: i64) -> Result<Self> {
        let cs = (j_min..=j_max).map(|j| c.value(j)[0]).collect();
        Self::from_offsets(a, cs, j_min)
    }

    pub fn from_offsets(a: f64, c: Vec<f64>, j_min: i64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Validation(format!("mean gap a must be positive, got {a}")));
        }
        let taus: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(i, ci)| a * (j_min + i as i64) as f64 + ci)
            .collect();
        let theta = taus
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if theta <= 0.0 {
            return Err(Error::Validation(format!(
                "point set is not strictly increasing (min gap {theta})"
            )));
        }
        Ok(StronglyAPSet {
            a,
            j_min,
            taus,
            theta,
        })
    }

    pub fn j_max(&self) -> i64 {
        self.j_min + self.taus.len() as i64 - 1
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn tau(&self, j: i64) -> Option<f64> {
        if j < self.j_min || j > self.j_max() {
            None
        } else {
            Some(self.taus[(j - self.j_min) as usize])
        }
    }

    /// Minimal separation on the window.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Index of the point nearest to `t`.
    pub fn nearest(&self, t: f64) -> i64 {
        let i = self.taus.partition_point(|&x| x < t);
        let best = if i == 0 {
            0
        } else if i == self.taus.len() || t - self.taus[i - 1] <= self.taus[i] - t {
            i - 1
        } else {
            i
        };
        self.j_min + best as i64
    }
}

/// Left-continuous function sampled on the uniform grid `t0 + i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSampledFunction {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<Vec<f64>>,
    pub discontinuities: Vec<f64>,
    pub norm: WeightedNorm,
}

impl PiecewiseSampledFunction {
    pub fn new(
        t0: f64,
        h: f64,
        values: Vec<Vec<f64>>,
        mut discontinuities: Vec<f64>,
        norm: WeightedNorm,
    ) -> Result<Self> {
        if !(h > 0.0) || values.len() < 2 {
            return Err(Error::Domain("sampled function needs h > 0 and two nodes".into()));
        }
        let t1 = t0 + h * (values.len() - 1) as f64;
        discontinuities.retain(|&d| d >= t0 && d <= t1);
        discontinuities.sort_by(f64::total_cmp);
        Ok(PiecewiseSampledFunction {
            t0,
            h,
            values,
            discontinuities,
            norm,
        })
    }

    /// Sample `f` on `[t0, t1]` with step close to `h`.
    pub fn sample(
        t0: f64,
        t1: f64,
        h: f64,
        f: impl Fn(f64) -> Vec<f64>,
        discontinuities: Vec<f64>,
        norm: WeightedNorm,
    ) -> Result<Self> {
        let n = ((t1 - t0) / h).round().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        let values = (0..=n).map(|i| f(t0 + i as f64 * h)).collect();
        Self::new(t0, h, values, discontinuities, norm)
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h * (self.values.len() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Distance from `t` to the discontinuity set.
    pub fn dist_to_jumps(&self, t: f64) -> f64 {
        let d = &self.discontinuities;
        let i = d.partition_point(|&x| x < t);
        let mut best = f64::INFINITY;
        if i < d.len() {
            best = best.min(d[i] - t);
        }
        if i > 0 {
            best = best.min(t - d[i - 1]);
        }
        best
    }

    /// Linear interpolation at an arbitrary time inside the grid.
    pub fn value_at(&self, t: f64) -> Option<Vec<f64>> {
        let x = (t - self.t0) / self.h;
        let n = self.values.len() - 1;
        if x < -1e-9 || x > n as f64 + 1e-9 {
            return None;
        }
        let i = (x.floor().max(0.0) as usize).min(n - 1);
        let w = (x - i as f64).clamp(0.0, 1.0);
        if w < 1e-9 {
            return Some(self.values[i].clone());
        }
        if w > 1.0 - 1e-9 {
            return Some(self.values[i + 1].clone());
        }
        Some(
            self.values[i]
                .iter()
                .zip(&self.values[i + 1])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        )
    }
}

/// `sup |f(t + r) - f(t)|` over grid times `t` at distance at least
/// `eps_guard` from the discontinuities and with `t + r` inside the data.
pub fn wexler_deviation(f: &PiecewiseSampledFunction, r: f64, eps_guard: f64) -> Result<f64> {
    wexler_deviation_capped(f, r, eps_guard, f64::INFINITY)
}

fn wexler_deviation_capped(
    f: &PiecewiseSampledFunction,
    r: f64,
    eps_guard: f64,
    stop: f64,
) -> Result<f64> {
    if !(eps_guard > 0.0) {
        return Err(Error::Domain(format!("eps_guard must be positive, got {eps_guard}")));
    }
    let n = f.values.len();
    let shift = r / f.h;
    let on_grid = (shift - shift.round()).abs() < 1e-9;
    let lo = f.t0.max(f.t0 - r);
    let hi = f.t_end().min(f.t_end() - r);
    if hi - lo < f.h {
        return Err(Error::InsufficientWindow { shift: r });
    }
    let mut dev: f64 = 0.0;
    for i in 0..n {
        let t = f.time(i);
        if t < lo - 1e-9 * f.h || t > hi + 1e-9 * f.h || f.dist_to_jumps(t) < eps_guard {
            continue;
        }
        let d = if on_grid {
            let j = i as i64 + shift.round() as i64;
            f.norm.dist(&f.values[j as usize], &f.values[i])
        } else {
            match f.value_at(t + r) {
                Some(v) => f.norm.dist(&v, &f.values[i]),
                None => continue,
            }
        };
        dev = dev.max(d);
        if dev >= stop {
            break;
        }
    }
    Ok(dev)
}

/// Outcome of `harmonize`: the pair found (if any) and the scanned range.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonization {
    pub pair: Option<(i64, f64)>,
    pub r_lo: f64,
    pub r_hi: f64,
    pub theta_tent: f64,
}

/// Tent `max(0, 1 - |t| / w)`.
fn tent(t: f64, w: f64) -> f64 {
    (1.0 - t.abs() / w).max(0.0)
}

/// Search for `(q, r)` with `sup_k |B_{k+q} - B_k| < eps`,
/// `sup_k |tau_{k+q} - tau_k - r| < eps` and Wexler deviation of `f` at
/// `r` below `eps`. Candidates `r` run over grid multiples of `f.h` in
/// `[r_lo, r_hi]`; saw functions built from tents around the `tau_k`
/// discard most candidates before the direct check.
pub fn harmonize(
    b: &WindowedSequence,
    taus: &StronglyAPSet,
    f: &PiecewiseSampledFunction,
    eps: f64,
    r_lo: f64,
    r_hi: f64,
) -> Result<Harmonization> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let theta_tent = taus.theta() / 4.0 - 1e-9;
    let k_lo = b.lo.max(taus.j_min);
    let k_hi = b.hi().min(taus.j_max());
    if k_hi <= k_lo {
        return Err(Error::WindowTooShort {
            needed: 2,
            available: (k_hi - k_lo + 1).max(0) as usize,
        });
    }
    let tau = |k: i64| taus.tau(k).unwrap();
    let t_first = tau(k_lo);
    let t_last = tau(k_hi);

    // saw functions F1 = sum phi(t - tau_j) B_j, F2 = sum phi(t - tau_j);
    // tents are disjoint so only the nearest point contributes
    let saw = |t: f64| -> (f64, Option<&[f64]>) {
        let j = taus.nearest(t);
        let w = tent(t - tau(j), theta_tent);
        (w, b.get(j))
    };

    let n_lo = (r_lo / f.h).ceil() as i64;
    let n_hi = (r_hi / f.h).floor() as i64;
    let mid = k_lo + (k_hi - k_lo) / 2;
    let pass = |n: i64| -> Option<(i64, f64)> {
        let r = n as f64 * f.h;
        // quick rejection at a single point, then the whole overlap
        let probe = |k: i64| -> bool {
            let t = tau(k) + r;
            if t < t_first || t > t_last {
                return true;
            }
            let (w2, bj) = saw(t);
            if (1.0 - w2) * theta_tent >= eps {
                return false;
            }
            match (bj, b.get(k)) {
                (Some(bj), Some(bk)) => {
                    let f1: Vec<f64> = bj.iter().map(|x| w2 * x).collect();
                    b.norm.dist(&f1, bk) < eps + (1.0 - w2) * b.norm.norm(bj)
                }
                _ => true,
            }
        };
        if !probe(mid) {
            return None;
        }
        let mut offsets = Vec::new();
        for k in k_lo..=k_hi {
            let t = tau(k) + r;
            if t < t_first || t > t_last {
                continue;
            }
            if !probe(k) {
                return None;
            }
            offsets.push((taus.nearest(t) - k) as f64);
        }
        if offsets.is_empty() {
            return None;
        }
        let q = (offsets.iter().sum::<f64>() / offsets.len() as f64).round() as i64;
        if q < 1 {
            return None;
        }
        verify_pair(b, taus, f, eps, q, r).ok().filter(|ok| *ok)?;
        Some((q, r))
    };
    let pair = (n_lo.max(1)..=n_hi).into_par_iter().find_map_first(pass);
    Ok(Harmonization {
        pair,
        r_lo,
        r_hi,
        theta_tent,
    })
}

/// Direct check of the three harmonization bounds for a given pair.
pub fn verify_pair(
    b: &WindowedSequence,
    taus: &StronglyAPSet,
    f: &PiecewiseSampledFunction,
    eps: f64,
    q: i64,
    r: f64,
) -> Result<bool> {
    let k_lo = b.lo.max(taus.j_min);
    let k_hi = b.hi().min(taus.j_max());
    let mut any = false;
    for k in k_lo..=(k_hi - q) {
        any = true;
        let (bk, bq) = (b.get(k).unwrap(), b.get(k + q).unwrap());
        if b.norm.dist(bq, bk) >= eps {
            return Ok(false);
        }
        let dt = taus.tau(k + q).unwrap() - taus.tau(k).unwrap();
        if (dt - r).abs() >= eps {
            return Ok(false);
        }
    }
    if !any {
        return Ok(false);
    }
    Ok(wexler_deviation_capped(f, r, eps, eps)? < eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_sequence_all_shifts() {
        let s = WindowedSequence::scalar(-200, vec![3.5; 401]);
        let rep = eps_almost_periods(&s, 1e-6, -50, 50).unwrap();
        assert_eq!(rep.periods.len(), 101);
        assert_eq!(rep.max_gap, Some(1.0));
        assert!(rep.relatively_dense);
    }

    #[test]
    fn exact_period_seven() {
        let s = WindowedSequence::scalar(
            -300,
            (-300..=300)
                .map(|k| (2.0 * PI * k as f64 / 7.0).cos())
                .collect(),
        );
        let rep = eps_almost_periods(&s, 1e-9, -100, 100).unwrap();
        let expect: Vec<i64> = (-100..=100).filter(|p| p % 7 == 0).collect();
        assert_eq!(rep.integer_periods(), expect);
        assert_eq!(rep.max_gap, Some(7.0));
    }

    #[test]
    fn errors() {
        let s = WindowedSequence::scalar(0, vec![0.0; 30]);
        assert!(matches!(
            eps_almost_periods(&s, 0.0, -1, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            eps_almost_periods(&s, 0.1, -20, 20),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn wexler_periodic_and_zero() {
        let h = 2.0 * PI / 400.0;
        let f = PiecewiseSampledFunction::sample(
            -20.0 * PI,
            20.0 * PI,
            h,
            |t| vec![t.sin(), (2.0 * t).cos()],
            vec![],
            WeightedNorm::euclidean(),
        )
        .unwrap();
        assert!(wexler_deviation(&f, 2.0 * PI, 0.01).unwrap() < 1e-12);
        let z = PiecewiseSampledFunction::sample(
            0.0,
            10.0,
            0.01,
            |_| vec![0.0],
            vec![],
            WeightedNorm::euclidean(),
        )
        .unwrap();
        for r in [0.013, 1.0, 4.5] {
            assert_eq!(wexler_deviation(&z, r, 0.01).unwrap(), 0.0);
        }
        assert!(matches!(
            wexler_deviation(&z, 20.0, 0.01),
            Err(Error::InsufficientWindow { .. })
        ));
    }

    #[test]
    fn nearest_point() {
        let s = StronglyAPSet::from_offsets(1.0, vec![0.0; 11], -5).unwrap();
        assert_eq!(s.nearest(0.4), 0);
        assert_eq!(s.nearest(0.6), 1);
        assert_eq!(s.nearest(-100.0), -5);
        assert_eq!(s.nearest(100.0), 5);
        assert!(StronglyAPSet::from_offsets(1.0, vec![0.0, -1.5], 0).is_err());
    }

    #[test]
    fn harmonize_periodic_data() {
        let b = WindowedSequence::scalar(-50, vec![1.0; 101]);
        let taus = StronglyAPSet::from_offsets(1.0, vec![0.0; 101], -50).unwrap();
        let f = PiecewiseSampledFunction::sample(
            -50.0,
            50.0,
            0.01,
            |_| vec![0.0],
            taus.taus().to_vec(),
            WeightedNorm::euclidean(),
        )
        .unwrap();
        let h = harmonize(&b, &taus, &f, 1e-6, 0.0, 5.0).unwrap();
        let (q, r) = h.pair.unwrap();
        assert_eq!(q, 1);
        assert!((r - 1.0).abs() < 1e-9);
        assert!(verify_pair(&b, &taus, &f, 1e-6, q, r).unwrap());
    }
}
