//! Dirichlet Laplacian on `(0, l)` in its sine eigenbasis, fractional norms,
//! the heat semigroup and pseudo-spectral evaluation of pointwise maps.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use rand::Rng;

use crate::error::{Error, Result};

/// Coefficients in the basis `e_k(xi) = sqrt(2/l) sin(k pi xi / l)`, `k = 1..N`.
/// Index 0 holds mode 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralVec(pub Vec<f64>);

impl SpectralVec {
    pub fn zeros(n: usize) -> Self {
        SpectralVec(vec![0.0; n])
    }

    /// Basis vector `e_k`, `k` counted from 1.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = vec![0.0; n];
        v[k - 1] = 1.0;
        SpectralVec(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Euclidean norm of the coefficients, i.e. the L2 norm of `u`.
    pub fn norm0(&self) -> f64 {
        self.sq_sum().sqrt()
    }

    /// `sum x_k^2 = int_0^l u^2`.
    pub fn sq_sum(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &SpectralVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, c: f64) -> SpectralVec {
        SpectralVec(self.0.iter().map(|x| c * x).collect())
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &SpectralVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Index<usize> for SpectralVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for SpectralVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &SpectralVec {
    type Output = SpectralVec;
    fn add(self, rhs: &SpectralVec) -> SpectralVec {
        SpectralVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &SpectralVec {
    type Output = SpectralVec;
    fn sub(self, rhs: &SpectralVec) -> SpectralVec {
        SpectralVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Add for SpectralVec {
    type Output = SpectralVec;
    fn add(self, rhs: SpectralVec) -> SpectralVec {
        &self + &rhs
    }
}

impl Sub for SpectralVec {
    type Output = SpectralVec;
    fn sub(self, rhs: SpectralVec) -> SpectralVec {
        &self - &rhs
    }
}

impl AddAssign<&SpectralVec> for SpectralVec {
    fn add_assign(&mut self, rhs: &SpectralVec) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl SubAssign<&SpectralVec> for SpectralVec {
    fn sub_assign(&mut self, rhs: &SpectralVec) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &SpectralVec {
    type Output = SpectralVec;
    fn mul(self, c: f64) -> SpectralVec {
        self.scale(c)
    }
}

impl Neg for &SpectralVec {
    type Output = SpectralVec;
    fn neg(self) -> SpectralVec {
        self.scale(-1.0)
    }
}

impl fmt::Display for SpectralVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{x:.17e}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SpectralVec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("coefficient {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(SpectralVec)
    }
}

/// `A = -d^2/dxi^2` with Dirichlet conditions, truncated to `N` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletLaplacian {
    l: f64,
    eigenvalues: Vec<f64>,
}

impl DirichletLaplacian {
    pub fn new(l: f64, n_modes: usize) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Domain(format!("interval length must be positive, got {l}")));
        }
        if n_modes == 0 {
            return Err(Error::Domain("need at least one mode".into()));
        }
        let eigenvalues = (1..=n_modes)
            .map(|k| (k as f64 * PI / l).powi(2))
            .collect();
        Ok(DirichletLaplacian { l, eigenvalues })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_k`, `k` counted from 1.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k - 1]
    }

    /// `delta = lambda_1`.
    pub fn spectral_bound(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Per-mode weights `lambda_k^alpha` of the operator `A^alpha`.
    pub fn weights(&self, alpha: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.powf(alpha)).collect()
    }

    /// `|x|_alpha = (sum lambda_k^{2 alpha} x_k^2)^{1/2}`.
    pub fn frac_norm(&self, x: &SpectralVec, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return x.norm0();
        }
        self.eigenvalues
            .iter()
            .zip(x.iter())
            .map(|(l, c)| l.powf(2.0 * alpha) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `e^{-A t} x`.
    pub fn semigroup_apply(&self, t: f64, x: &SpectralVec) -> Result<SpectralVec> {
        if t < 0.0 {
            return Err(Error::Domain(format!("semigroup needs t >= 0, got {t}")));
        }
        Ok(SpectralVec(
            self.eigenvalues
                .iter()
                .zip(x.iter())
                .map(|(l, c)| c * (-l * t).exp())
                .collect(),
        ))
    }

    /// `A^alpha x`.
    pub fn power_apply(&self, alpha: f64, x: &SpectralVec) -> SpectralVec {
        SpectralVec(
            self.eigenvalues
                .iter()
                .zip(x.iter())
                .map(|(l, c)| l.powf(alpha) * c)
                .collect(),
        )
    }
}

/// Uniform grid with `m` intervals on `[0, l]`; only the `m - 1` interior
/// nodes are stored since every basis function vanishes at the ends.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    l: f64,
    n_modes: usize,
    intervals: usize,
    xi: Vec<f64>,
    // basis[k * (m - 1) + i] = e_{k+1}(xi_i)
    basis: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(l: f64, n_modes: usize, intervals: usize) -> Result<Self> {
        if intervals < 4 * n_modes {
            return Err(Error::AliasingRisk {
                intervals,
                modes: n_modes,
            });
        }
        let h = l / intervals as f64;
        let xi: Vec<f64> = (1..intervals).map(|i| i as f64 * h).collect();
        let norm = (2.0 / l).sqrt();
        let mut basis = Vec::with_capacity(n_modes * xi.len());
        for k in 1..=n_modes {
            for &x in &xi {
                basis.push(norm * (k as f64 * PI * x / l).sin());
            }
        }
        Ok(SpectralGrid {
            l,
            n_modes,
            intervals,
            xi,
            basis,
        })
    }

    /// Grid with `4N` intervals rounded up to a multiple of 16.
    pub fn for_modes(l: f64, n_modes: usize) -> Result<Self> {
        Self::new(l, n_modes, (4 * n_modes).div_ceil(16) * 16)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xi
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn step(&self) -> f64 {
        self.l / self.intervals as f64
    }

    /// `u(xi_i)` at the interior nodes.
    pub fn eval_physical(&self, x: &SpectralVec) -> Vec<f64> {
        let p = self.xi.len();
        let mut u = vec![0.0; p];
        for (k, c) in x.iter().enumerate().take(self.n_modes) {
            if *c == 0.0 {
                continue;
            }
            let row = &self.basis[k * p..(k + 1) * p];
            for (ui, b) in u.iter_mut().zip(row) {
                *ui += c * b;
            }
        }
        u
    }

    /// Trapezoid projection `<u, e_k>` of nodal values (interior nodes).
    pub fn project(&self, u: &[f64]) -> SpectralVec {
        let p = self.xi.len();
        debug_assert_eq!(u.len(), p);
        let h = self.step();
        SpectralVec(
            (0..self.n_modes)
                .map(|k| {
                    let row = &self.basis[k * p..(k + 1) * p];
                    h * row.iter().zip(u).map(|(b, v)| b * v).sum::<f64>()
                })
                .collect(),
        )
    }

    pub fn project_fn(&self, u: impl Fn(f64) -> f64) -> SpectralVec {
        let vals: Vec<f64> = self.xi.iter().map(|&x| u(x)).collect();
        self.project(&vals)
    }

    /// `project(map o u)`.
    pub fn nonlinear_image(&self, x: &SpectralVec, map: impl Fn(f64) -> f64) -> SpectralVec {
        let u: Vec<f64> = self.eval_physical(x).into_iter().map(map).collect();
        self.project(&u)
    }

    /// Trapezoid `int_0^l` of nodal values (zero boundary values).
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.step() * u.iter().sum::<f64>()
    }
}

/// Basis synthesis at arbitrary points.
pub fn eval_at(x: &SpectralVec, l: f64, xi: &[f64]) -> Vec<f64> {
    let norm = (2.0 / l).sqrt();
    xi.iter()
        .map(|&p| {
            x.iter()
                .enumerate()
                .map(|(k, c)| c * norm * ((k + 1) as f64 * PI * p / l).sin())
                .sum()
        })
        .collect()
}

/// Fitted constant in `|A^alpha e^{-At}| <= C_alpha t^{-alpha} e^{-delta t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConstants {
    pub alpha: f64,
    pub c_alpha: f64,
    pub delta: f64,
}

impl SmoothingConstants {
    /// Operator norm of `t^alpha e^{delta t} A^alpha e^{-At}`: exact max
    /// over modes since the operator is diagonal.
    fn ratio(lap: &DirichletLaplacian, alpha: f64, t: f64) -> f64 {
        let d = lap.spectral_bound();
        lap.eigenvalues()
            .iter()
            .map(|l| (l * t).powf(alpha) * (-(l - d) * t).exp())
            .fold(0.0, f64::max)
    }

    /// Fit on `n` random times in `[t_lo, t_hi]` with 5% slack.
    pub fn fit<R: Rng>(
        lap: &DirichletLaplacian,
        alpha: f64,
        t_lo: f64,
        t_hi: f64,
        n: usize,
        rng: &mut R,
    ) -> Self {
        let mut c: f64 = if alpha == 0.0 { 1.0 } else { 0.0 };
        for _ in 0..n {
            let t = t_lo * (t_hi / t_lo).powf(rng.gen::<f64>());
            c = c.max(Self::ratio(lap, alpha, t));
        }
        SmoothingConstants {
            alpha,
            c_alpha: 1.05 * c,
            delta: lap.spectral_bound(),
        }
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.c_alpha * t.powf(-self.alpha) * (-self.delta * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frac_norm_examples() {
        let lap = DirichletLaplacian::new(1.0, 8).unwrap();
        let e1 = SpectralVec::basis(8, 1);
        assert_eq!(lap.frac_norm(&e1, 0.0), 1.0);
        assert!((lap.frac_norm(&e1, 0.5) - PI).abs() < 1e-14);
        let e5 = SpectralVec::basis(8, 5);
        assert!((lap.frac_norm(&e5, 1.0) - 25.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn semigroup_examples() {
        let lap = DirichletLaplacian::new(1.0, 4).unwrap();
        let x = SpectralVec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(lap.semigroup_apply(0.0, &x).unwrap(), x);
        let y = lap.semigroup_apply(1.0, &SpectralVec::basis(4, 1)).unwrap();
        assert!((y[0] - (-PI * PI).exp()).abs() < 1e-18);
        assert_eq!(&y.0[1..], &[0.0, 0.0, 0.0]);
        assert!(matches!(lap.semigroup_apply(-1.0, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn synthesis_examples() {
        let g = SpectralGrid::new(1.0, 4, 16).unwrap();
        assert!(g.eval_physical(&SpectralVec::zeros(4)).iter().all(|v| *v == 0.0));
        let mid = eval_at(&SpectralVec::basis(4, 1), 1.0, &[0.5, 1e-12]);
        assert!((mid[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(mid[1].abs() < 1e-10);
    }

    #[test]
    fn projection_of_basis_function() {
        let l = 2.0;
        let g = SpectralGrid::new(l, 8, 32).unwrap();
        let e = g.project_fn(|x| (2.0 / l).sqrt() * (PI * x / l).sin());
        assert!((e[0] - 1.0).abs() < 1e-10);
        assert!(e.0[1..].iter().all(|c| c.abs() < 1e-10));
        assert!(g.project_fn(|_| 0.0).0.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn aliasing_guard() {
        assert!(matches!(
            SpectralGrid::new(1.0, 16, 63),
            Err(Error::AliasingRisk { .. })
        ));
        assert!(SpectralGrid::new(1.0, 16, 64).is_ok());
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = SpectralGrid::new(1.0, 16, 256).unwrap();
        let x = SpectralVec((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y = g.project(&g.eval_physical(&x));
        assert!((&y - &x).max_abs() < 1e-10);
    }

    #[test]
    fn square_of_first_mode() {
        // <2 sin^2(pi xi), sqrt2 sin(k pi xi)> = sqrt2 * 8 / (pi k (4 - k^2)) for odd k, 0 otherwise
        let g = SpectralGrid::new(1.0, 8, 64).unwrap();
        let y = g.nonlinear_image(&SpectralVec::basis(8, 1), |u| u * u);
        for k in 1..=8usize {
            let kf = k as f64;
            let exact = if k % 2 == 1 {
                2f64.sqrt() * 8.0 / (PI * kf * (4.0 - kf * kf))
            } else {
                0.0
            };
            // trapezoid on a grid with 4N intervals loses only aliased harmonics
            assert!((y[k - 1] - exact).abs() < 1e-5, "k={k}: {} vs {exact}", y[k - 1]);
        }
    }

    #[test]
    fn smoothing_fit_then_verify() {
        let lap = DirichletLaplacian::new(1.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sc = SmoothingConstants::fit(&lap, 0.5, 0.01, 2.0, 400, &mut rng);
        let grid = SpectralGrid::new(1.0, 16, 64).unwrap();
        let _ = grid;
        for _ in 0..200 {
            let t = rng.gen_range(0.01..2.0);
            let x = SpectralVec((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let x = x.scale(1.0 / x.norm0());
            let y = lap.semigroup_apply(t, &x).unwrap();
            assert!(lap.frac_norm(&y, 0.5) <= sc.bound(t));
        }
    }
}
