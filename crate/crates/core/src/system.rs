//! Problem instances: `x' + (A + A1(t)) x = f(t, x)` away from the surfaces
//! `t = tau_j(x) = t_j + b_j Q(x)`, with jumps `x(t+0) - x(t) = g_j(x)`.

use crate::error::{Error, Result};
use crate::evolution::LinearCoefficient;
use crate::spectral::{DirichletLaplacian, SpectralGrid, SpectralVec};
use crate::trig::{APSequenceGen, TrigSum};

/// Scalar Lipschitz maps with `I(0) = 0` used inside jump kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointwiseMap {
    Zero,
    Identity,
    /// `lambda * max(u, 0)`
    Positive(f64),
    /// `lambda * tanh(max(u, 0))`
    TanhPositive(f64),
}

impl PointwiseMap {
    pub fn parse(name: &str, lambda: f64) -> Result<Self> {
        match name {
            "zero" => Ok(PointwiseMap::Zero),
            "identity" => Ok(PointwiseMap::Identity),
            "positive" => Ok(PointwiseMap::Positive(lambda)),
            "tanh_positive" => Ok(PointwiseMap::TanhPositive(lambda)),
            other => Err(Error::Validation(format!(
                "unknown jump map {other:?} (zero, identity, positive, tanh_positive)"
            ))),
        }
    }

    pub fn apply(&self, u: f64) -> f64 {
        match *self {
            PointwiseMap::Zero => 0.0,
            PointwiseMap::Identity => u,
            PointwiseMap::Positive(l) => l * u.max(0.0),
            PointwiseMap::TanhPositive(l) => l * u.max(0.0).tanh(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            PointwiseMap::Zero => 0.0,
            PointwiseMap::Identity => 1.0,
            PointwiseMap::Positive(l) | PointwiseMap::TanhPositive(l) => l.abs(),
        }
    }

    pub fn is_non_negative(&self) -> bool {
        match *self {
            PointwiseMap::Zero => true,
            PointwiseMap::Identity => false,
            PointwiseMap::Positive(l) | PointwiseMap::TanhPositive(l) => l >= 0.0,
        }
    }
}

/// Right-hand side `f(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// `f(t, x) = p(t)`, one trigonometric sum per mode.
    Profile(Vec<TrigSum>),
    /// `f(t, u) = a(t) b(t) (rho - u) u` pointwise; the linear part then
    /// carries `m(t) = -a(t)(1 - rho b(t))`.
    Logistic { a: TrigSum, b: TrigSum, rho: f64 },
}

impl Forcing {
    pub fn eval(&self, t: f64, x: &SpectralVec, grid: &SpectralGrid) -> SpectralVec {
        match self {
            Forcing::Zero => SpectralVec::zeros(x.len()),
            Forcing::Profile(p) => SpectralVec(p.iter().map(|s| s.value(t)).collect()),
            Forcing::Logistic { a, b, rho } => {
                let c = a.value(t) * b.value(t);
                if c == 0.0 {
                    return SpectralVec::zeros(x.len());
                }
                grid.nonlinear_image(x, |u| c * (rho - u) * u)
            }
        }
    }

    /// Whether `f` does not depend on the state.
    pub fn is_state_free(&self) -> bool {
        match self {
            Forcing::Zero | Forcing::Profile(_) => true,
            Forcing::Logistic { a, b, .. } => a.product(b).is_zero(),
        }
    }

    /// `sup_t |f(t, 0)|_0` by the coefficient bound.
    pub fn sup_at_zero(&self) -> f64 {
        match self {
            Forcing::Profile(p) => p.iter().map(|s| s.sup_bound().powi(2)).sum::<f64>().sqrt(),
            _ => 0.0,
        }
    }

    /// Time-frequency content of `f`, for grid choices.
    pub fn max_freq(&self) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Profile(p) => p.iter().map(|s| s.max_freq()).fold(0.0, f64::max),
            Forcing::Logistic { a, b, .. } => a.max_freq() + b.max_freq(),
        }
    }
}

/// Surfaces `tau_j(x) = a j + c_j + b_j Q(x)` with `Q(x) = sum x_k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surfaces {
    pub a: f64,
    pub c: APSequenceGen,
    pub b: APSequenceGen,
}

impl Surfaces {
    /// Fixed moments `t_j = a j + c0`.
    pub fn fixed(a: f64, c0: f64) -> Self {
        Surfaces {
            a,
            c: APSequenceGen::constant(vec![c0]),
            b: APSequenceGen::constant(vec![0.0]),
        }
    }

    pub fn base(&self, j: i64) -> f64 {
        self.a * j as f64 + self.c.value(j)[0]
    }

    pub fn slope(&self, j: i64) -> f64 {
        self.b.value(j)[0]
    }

    pub fn functional(x: &SpectralVec) -> f64 {
        x.sq_sum()
    }

    pub fn tau(&self, j: i64, x: &SpectralVec) -> f64 {
        let b = self.slope(j);
        if b == 0.0 {
            self.base(j)
        } else {
            self.base(j) + b * x.sq_sum()
        }
    }

    /// Range of `tau_j` over the ball: `[t_j + b_j rho_q, t_j]` for `b_j <= 0`.
    pub fn range(&self, j: i64, rho_q: f64) -> (f64, f64) {
        let t = self.base(j);
        let b = self.slope(j);
        (t + b.min(0.0) * rho_q, t + b.max(0.0) * rho_q)
    }

    /// `sup_j |b_j|` bound from the generator.
    pub fn slope_bound(&self) -> f64 {
        self.b.offset[0].abs()
            + self
                .b
                .components
                .iter()
                .map(|c| c.amplitude[0].abs())
                .sum::<f64>()
    }

    /// First index whose whole range lies at or after `t`.
    pub fn first_after(&self, t: f64, rho_q: f64) -> i64 {
        let mut j = ((t - self.c.offset[0]) / self.a).floor() as i64 - 2;
        let reach = self.c.components.iter().map(|c| c.amplitude[0].abs()).sum::<f64>()
            + self.slope_bound() * rho_q;
        j -= (reach / self.a).ceil() as i64 + 1;
        while self.range(j, rho_q).0 < t {
            j += 1;
        }
        j
    }
}

/// Jumps `g_j(x) = int K(xi, zeta) I(u(zeta)) dzeta + d_j` with the kernel
/// stored by its sine-basis weights `K = sum W_pq e_p(xi) e_q(zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jumps {
    /// Row-major `N x N` weights.
    pub kernel: Vec<f64>,
    pub map: PointwiseMap,
    pub d: APSequenceGen,
}

impl Jumps {
    pub fn none(n: usize) -> Self {
        Jumps {
            kernel: vec![0.0; n * n],
            map: PointwiseMap::Zero,
            d: APSequenceGen::constant(vec![0.0; n]),
        }
    }

    /// Rank-one separable kernel `e_p (x) e_q` scaled by `w`.
    pub fn rank_one(n: usize, p: usize, q: usize, w: f64) -> Vec<f64> {
        let mut k = vec![0.0; n * n];
        k[(p - 1) * n + (q - 1)] = w;
        k
    }

    pub fn offset(&self, j: i64) -> SpectralVec {
        SpectralVec(self.d.value(j))
    }

    fn kernel_image(&self, x: &SpectralVec, grid: &SpectralGrid) -> SpectralVec {
        let n = x.len();
        if self.map == PointwiseMap::Zero || self.kernel.iter().all(|w| *w == 0.0) {
            return SpectralVec::zeros(n);
        }
        let map = self.map;
        let p = grid.nonlinear_image(x, |u| map.apply(u));
        SpectralVec(
            (0..n)
                .map(|r| (0..n).map(|c| self.kernel[r * n + c] * p[c]).sum())
                .collect(),
        )
    }

    pub fn g(&self, j: i64, x: &SpectralVec, grid: &SpectralGrid) -> SpectralVec {
        let mut out = self.kernel_image(x, grid);
        out += &self.offset(j);
        out
    }

    /// Frobenius norm of the kernel weights times the Lipschitz constant of `I`.
    pub fn kernel_norm(&self) -> f64 {
        self.kernel.iter().map(|w| w * w).sum::<f64>().sqrt() * self.map.lipschitz()
    }

    /// Minimum of the kernel on the grid, for the positivity hypothesis.
    pub fn kernel_min(&self, grid: &SpectralGrid) -> f64 {
        let n = grid.n_modes();
        let mut m = f64::INFINITY;
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|q| grid.eval_physical(&SpectralVec::basis(n, q + 1)))
            .collect();
        let pts = grid.nodes().len();
        for i in 0..pts {
            for k in 0..pts {
                let mut v = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        let w = self.kernel[p * n + q];
                        if w != 0.0 {
                            v += w * cols[p][i] * cols[q][k];
                        }
                    }
                }
                m = m.min(v);
            }
        }
        m
    }
}

/// A complete instance.
#[derive(Debug, Clone)]
pub struct ImpulseSystem {
    pub lap: DirichletLaplacian,
    pub grid: SpectralGrid,
    pub alpha: f64,
    pub rho: f64,
    pub coeff: LinearCoefficient,
    pub forcing: Forcing,
    pub surfaces: Surfaces,
    pub jumps: Jumps,
}

/// Parts for `ImpulseSystem::new`; `m` and `sigma` describe `A1` and are
/// ignored for the logistic forcing, which fixes `m` itself.
#[derive(Debug, Clone)]
pub struct SystemParts {
    pub l: f64,
    pub n_modes: usize,
    pub grid_intervals: usize,
    pub alpha: f64,
    pub rho: f64,
    pub m: TrigSum,
    pub sigma: Vec<f64>,
    pub forcing: Forcing,
    pub surfaces: Surfaces,
    pub jumps: Jumps,
}

impl ImpulseSystem {
    pub fn new(p: SystemParts) -> Result<Self> {
        if !(0.0..1.0).contains(&p.alpha) {
            return Err(Error::Validation(format!("alpha must lie in [0, 1), got {}", p.alpha)));
        }
        if !(p.rho > 0.0) {
            return Err(Error::Validation(format!("rho must be positive, got {}", p.rho)));
        }
        if !(p.surfaces.a > 0.0) {
            return Err(Error::Validation(format!(
                "mean impulse gap must be positive, got {}",
                p.surfaces.a
            )));
        }
        let lap = DirichletLaplacian::new(p.l, p.n_modes).map_err(as_validation)?;
        let grid = SpectralGrid::new(p.l, p.n_modes, p.grid_intervals).map_err(as_validation)?;
        let m = match &p.forcing {
            Forcing::Logistic { a, b, rho } => {
                if (rho - p.rho).abs() > 0.0 {
                    return Err(Error::Validation(
                        "logistic capacity must equal the ball radius rho".into(),
                    ));
                }
                a.scale(-1.0).add(&a.product(b).scale(*rho))
            }
            _ => p.m.clone(),
        };
        let sigma = if p.sigma.is_empty() {
            vec![0.0; p.n_modes]
        } else {
            p.sigma.clone()
        };
        let coeff = LinearCoefficient::with_shifts(lap.clone(), m, sigma).map_err(as_validation)?;
        if let Forcing::Profile(pr) = &p.forcing {
            if pr.len() != p.n_modes {
                return Err(Error::Validation(format!(
                    "forcing profile has {} modes, expected {}",
                    pr.len(),
                    p.n_modes
                )));
            }
        }
        if p.jumps.kernel.len() != p.n_modes * p.n_modes || p.jumps.d.dim() != p.n_modes {
            return Err(Error::Validation("jump kernel or offsets have wrong dimension".into()));
        }
        if p.surfaces.c.dim() != 1 || p.surfaces.b.dim() != 1 {
            return Err(Error::Validation("surface generators must be scalar".into()));
        }
        let b_sup = p.surfaces.b.offset[0]
            + p.surfaces
                .b
                .components
                .iter()
                .map(|c| c.amplitude[0].abs())
                .sum::<f64>();
        if b_sup > 0.0 {
            return Err(Error::Validation(format!(
                "surface slopes must satisfy b_j <= 0 (bound {b_sup})"
            )));
        }
        let sys = ImpulseSystem {
            lap,
            grid,
            alpha: p.alpha,
            rho: p.rho,
            coeff,
            forcing: p.forcing,
            surfaces: p.surfaces,
            jumps: p.jumps,
        };
        let theta = sys.separation(-200, 200);
        if !(theta > 0.0) {
            return Err(Error::Validation(format!(
                "impulse surfaces are not separated over the ball (theta = {theta})"
            )));
        }
        Ok(sys)
    }

    pub fn n_modes(&self) -> usize {
        self.lap.n_modes()
    }

    pub fn norm(&self, x: &SpectralVec) -> f64 {
        self.lap.frac_norm(x, self.alpha)
    }

    /// `sup Q` over `|x|_alpha <= rho`.
    pub fn rho_q(&self) -> f64 {
        self.rho * self.rho / self.lap.spectral_bound().powf(2.0 * self.alpha)
    }

    /// `inf_j (inf tau_{j+1} - sup tau_j)` over `[j_lo, j_hi]`.
    pub fn separation(&self, j_lo: i64, j_hi: i64) -> f64 {
        let rq = self.rho_q();
        (j_lo..j_hi)
            .map(|j| self.surfaces.range(j + 1, rq).0 - self.surfaces.range(j, rq).1)
            .fold(f64::INFINITY, f64::min)
    }

    /// The bound `Q` from the base-time formula and from the measured ranges;
    /// both are returned, the larger is used downstream.
    pub fn q_bounds(&self, j_lo: i64, j_hi: i64) -> (f64, f64) {
        let theta = self.separation(j_lo, j_hi);
        let rq = self.rho_q();
        let formula = (j_lo..j_hi)
            .map(|j| self.surfaces.base(j + 3) - self.surfaces.base(j))
            .fold(f64::NEG_INFINITY, f64::max)
            - 2.0 * theta;
        let measured = (j_lo..j_hi)
            .map(|j| self.surfaces.range(j + 1, rq).1 - self.surfaces.range(j, rq).0)
            .fold(f64::NEG_INFINITY, f64::max);
        (formula, measured)
    }

    pub fn f(&self, t: f64, x: &SpectralVec) -> SpectralVec {
        self.forcing.eval(t, x, &self.grid)
    }

    pub fn g(&self, j: i64, x: &SpectralVec) -> SpectralVec {
        self.jumps.g(j, x, &self.grid)
    }

    pub fn tau(&self, j: i64, x: &SpectralVec) -> f64 {
        self.surfaces.tau(j, x)
    }

    /// Whether all data are non-negative functions: kernel, jump map and
    /// offsets on the window, and the logistic forcing.
    pub fn has_non_negative_data(&self, j_lo: i64, j_hi: i64) -> bool {
        let tol = 1e-12;
        let kernel_ok = self.jumps.map == PointwiseMap::Zero
            || (self.jumps.map.is_non_negative() && self.jumps.kernel_min(&self.grid) >= -tol);
        let d_ok = (j_lo..=j_hi).all(|j| {
            self.grid
                .eval_physical(&self.jumps.offset(j))
                .iter()
                .all(|v| *v >= -tol)
        });
        kernel_ok && d_ok && matches!(self.forcing, Forcing::Logistic { .. } | Forcing::Zero)
    }
}

fn as_validation(e: Error) -> Error {
    match e {
        Error::Domain(s) => Error::Validation(s),
        Error::AliasingRisk { intervals, modes } => Error::Validation(format!(
            "aliasing risk: {intervals} grid intervals for {modes} modes (need at least {})",
            4 * modes
        )),
        other => other,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Logistic instance with `b(t) = 0`, slopes `b_j = slope`, kernel
    /// `e1 (x) e1` with positive-part map, offsets `d (e1 + 0.1 e3)`.
    pub fn logistic(n: usize, slope: f64, d: f64) -> ImpulseSystem {
        logistic_b(n, slope, d, 0.0)
    }

    /// As `logistic` with constant `b(t) = b`.
    pub fn logistic_b(n: usize, slope: f64, d: f64, b: f64) -> ImpulseSystem {
        let mut off = vec![0.0; n];
        off[0] = d;
        if n >= 3 {
            off[2] = 0.1 * d;
        }
        ImpulseSystem::new(SystemParts {
            l: 1.0,
            n_modes: n,
            grid_intervals: 4 * n.max(16),
            alpha: 0.5,
            rho: 1.0,
            m: TrigSum::zero(),
            sigma: vec![],
            forcing: Forcing::Logistic {
                a: TrigSum::from_triples(&[
                    [2.0, 0.0, 0.0],
                    [0.5, 1.0, 0.0],
                    [0.5, 2f64.sqrt(), 0.0],
                ]),
                b: TrigSum::constant(b),
                rho: 1.0,
            },
            surfaces: Surfaces {
                a: 1.0,
                c: APSequenceGen::constant(vec![0.0]).with_component(2f64.sqrt(), 0.0, vec![0.05]),
                b: APSequenceGen::constant(vec![slope]),
            },
            jumps: Jumps {
                kernel: Jumps::rank_one(n, 1, 1, 0.05),
                map: PointwiseMap::Positive(1.0),
                d: APSequenceGen::constant(off),
            },
        })
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::logistic;
    use super::*;

    #[test]
    fn logistic_linear_part() {
        let s = logistic(8, -0.2, 0.1);
        // b = 0 so m = -a and f = 0
        assert!((s.coeff.m().mean() + 2.0).abs() < 1e-15);
        assert!(s.forcing.is_state_free());
        assert!(s.f(0.3, &SpectralVec::basis(8, 1)).max_abs() == 0.0);
        assert!(s.has_non_negative_data(-10, 10));
    }

    #[test]
    fn jump_identity_kernel() {
        let n = 4;
        let grid = SpectralGrid::new(1.0, n, 64).unwrap();
        let j = Jumps {
            kernel: Jumps::rank_one(n, 1, 1, 1.0),
            map: PointwiseMap::Identity,
            d: APSequenceGen::constant(vec![0.0; n]),
        };
        let x = SpectralVec::basis(n, 1).scale(0.3);
        let g = j.g(0, &x, &grid);
        assert!((g[0] - 0.3).abs() < 1e-12);
        assert!(g.0[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(Jumps::none(n).g(3, &x, &grid), SpectralVec::zeros(n));
    }

    #[test]
    fn separation_and_q() {
        let s = logistic(8, -0.2, 0.1);
        let rq = s.rho_q();
        assert!((rq - 1.0 / std::f64::consts::PI.powi(2)).abs() < 1e-15);
        let th = s.separation(-50, 50);
        assert!(th > 0.0 && th < 1.0);
        let (qf, qm) = s.q_bounds(-50, 50);
        assert!(qf > 0.0 && qm > 0.0);
    }

    #[test]
    fn validation_errors() {
        let mut parts = SystemParts {
            l: 1.0,
            n_modes: 4,
            grid_intervals: 16,
            alpha: 0.5,
            rho: 1.0,
            m: TrigSum::zero(),
            sigma: vec![],
            forcing: Forcing::Zero,
            surfaces: Surfaces::fixed(1.0, 0.0),
            jumps: Jumps::none(4),
        };
        assert!(ImpulseSystem::new(parts.clone()).is_ok());
        parts.surfaces.b = APSequenceGen::constant(vec![0.1]);
        assert!(matches!(ImpulseSystem::new(parts.clone()), Err(Error::Validation(_))));
        parts.surfaces.b = APSequenceGen::constant(vec![-50.0]);
        assert!(matches!(ImpulseSystem::new(parts.clone()), Err(Error::Validation(_))));
        parts.surfaces = Surfaces::fixed(1.0, 0.0);
        parts.grid_intervals = 8;
        assert!(matches!(ImpulseSystem::new(parts), Err(Error::Validation(_))));
    }
}
