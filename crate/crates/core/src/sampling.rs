//! Low-discrepancy and random states in the admissible ball.

use rand::Rng;

use crate::spectral::{DirichletLaplacian, SpectralGrid, SpectralVec};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u32) -> f64 {
    let b = b as u64;
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Point `i` of the Halton sequence in `dim <= 24` dimensions.
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|d| radical_inverse(i, PRIMES[d])).collect()
}

/// Scale `x` so that `|x|_alpha = r`.
pub fn with_norm(x: &SpectralVec, lap: &DirichletLaplacian, alpha: f64, r: f64) -> SpectralVec {
    let n = lap.frac_norm(x, alpha);
    if n == 0.0 {
        x.clone()
    } else {
        x.scale(r / n)
    }
}

/// Non-negative states (on the grid) with `|x|_alpha <= rho`: even samples
/// lie on the sphere, odd ones inside. Halton index starts at `start`.
pub fn non_negative_ball_samples(
    lap: &DirichletLaplacian,
    grid: &SpectralGrid,
    alpha: f64,
    rho: f64,
    count: usize,
    start: u64,
) -> Vec<SpectralVec> {
    let n = lap.n_modes();
    let dim = n.min(PRIMES.len());
    let e1 = grid.eval_physical(&SpectralVec::basis(n, 1));
    (0..count)
        .map(|i| {
            let h = halton(start + i as u64 + 1, dim);
            let mut x = SpectralVec::zeros(n);
            for k in 1..dim {
                x[k] = (2.0 * h[k] - 1.0) / ((k + 1) * (k + 1)) as f64;
            }
            // smallest first coefficient keeping u >= 0 on the grid, plus a margin
            let rest = grid.eval_physical(&x);
            let c1 = rest
                .iter()
                .zip(&e1)
                .map(|(r, e)| -r / e)
                .fold(0.0, f64::max);
            x[0] = c1 + h[0];
            let r = if i % 2 == 0 {
                rho
            } else {
                rho * radical_inverse(start + i as u64 + 1, 97)
            };
            with_norm(&x, lap, alpha, r)
        })
        .collect()
}

/// Uniform-direction random state with `|x|_alpha = r`, coefficients decaying
/// like `1/k` so that `|x|_1` stays moderate.
pub fn random_state<R: Rng>(
    lap: &DirichletLaplacian,
    alpha: f64,
    r: f64,
    rng: &mut R,
) -> SpectralVec {
    let n = lap.n_modes();
    let x = SpectralVec(
        (0..n)
            .map(|k| rng.gen_range(-1.0..1.0) / (k + 1) as f64)
            .collect(),
    );
    with_norm(&x, lap, alpha, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert!((halton(3, 3)[2] - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn samples_are_non_negative_and_admissible() {
        let lap = DirichletLaplacian::new(1.0, 16).unwrap();
        let grid = SpectralGrid::new(1.0, 16, 64).unwrap();
        let xs = non_negative_ball_samples(&lap, &grid, 0.5, 1.0, 64, 0);
        for (i, x) in xs.iter().enumerate() {
            let nrm = lap.frac_norm(x, 0.5);
            assert!(nrm <= 1.0 + 1e-12);
            if i % 2 == 0 {
                assert!((nrm - 1.0).abs() < 1e-12);
            }
            assert!(grid.eval_physical(x).iter().all(|u| *u >= -1e-14));
        }
    }
}
