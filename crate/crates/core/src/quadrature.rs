//! Quadrature kernels: adaptive Simpson (scalar and vector valued),
//! Gauss-Legendre rules, and the exponential moments used by the
//! exponential-integrator quadrature of the Green integrals.

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Vector-valued adaptive Simpson. The error of a panel is measured by
/// `err(delta)`, so the caller picks the norm (e.g. a weighted max norm).
pub fn adaptive_simpson_vec<F, E>(f: F, a: f64, b: f64, tol: f64, err: E) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64>,
    E: Fn(&[f64]) -> f64,
{
    let fa = f(a);
    if a == b {
        return vec![0.0; fa.len()];
    }
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson_panel(b - a, &fa, &fm, &fb);
    let mut out = vec![0.0; fa.len()];
    simpson_vec_rec(&f, &err, a, b, &fa, &fm, &fb, &whole, tol, 40, &mut out);
    out
}

fn simpson_panel(h: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| h / 6.0 * (a + 4.0 * m + b))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_vec_rec<F, E>(
    f: &F,
    err: &E,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
    out: &mut [f64],
) where
    F: Fn(f64) -> Vec<f64>,
    E: Fn(&[f64]) -> f64,
{
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson_panel(m - a, fa, &flm, fm);
    let right = simpson_panel(b - m, fm, &frm, fb);
    let delta: Vec<f64> = left
        .iter()
        .zip(&right)
        .zip(whole)
        .map(|((l, r), w)| l + r - w)
        .collect();
    if depth == 0 || err(&delta) <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += left[i] + right[i] + delta[i] / 15.0;
        }
        return;
    }
    simpson_vec_rec(f, err, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1, out);
    simpson_vec_rec(f, err, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1, out);
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre on `[a, b]` with `panels` panels. Open rule:
/// no node sits on a panel boundary.
pub fn gauss_legendre_composite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += wi * f(c + 0.5 * h * xi);
        }
    }
    0.5 * h * sum
}

/// `J_p(x) = int_0^1 e^{-x (1 - z)} z^p dz` for `p = 0..=deg`.
///
/// Power series for small `|x|`, upward recursion `J_p = (1 - p J_{p-1}) / x`
/// otherwise.
pub fn exp_moments(x: f64, deg: usize) -> [f64; 4] {
    debug_assert!(deg <= 3);
    let mut j = [0.0; 4];
    if x.abs() < 1.0 {
        // J_p = sum_n (-x)^n p! / (n + p + 1)!
        for (p, jp) in j.iter_mut().enumerate().take(deg + 1) {
            let mut term = 1.0 / (p + 1) as f64; // n = 0: p!/(p+1)!
            let mut sum = term;
            for n in 1..40 {
                term *= -x / (n + p + 1) as f64;
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            *jp = sum;
        }
    } else {
        j[0] = -(-x).exp_m1() / x;
        for p in 1..=deg {
            j[p] = (1.0 - p as f64 * j[p - 1]) / x;
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_exponential() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| (-50.0 * x).exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1.0 - (-50f64).exp()) / 50.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_vec_matches_scalar() {
        let v = adaptive_simpson_vec(
            |x| vec![x.sin(), (-3.0 * x).exp()],
            0.0,
            1.5,
            1e-13,
            |d| d.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        );
        assert!((v[0] - (1.0 - 1.5f64.cos())).abs() < 1e-12);
        assert!((v[1] - (1.0 - (-4.5f64).exp()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn exp_moments_against_quadrature() {
        for &x in &[-3.0, -0.9, -1e-6, 0.0, 1e-8, 0.5, 0.99, 1.0, 4.0, 60.0, 3000.0] {
            let j = exp_moments(x, 3);
            for (p, jp) in j.iter().enumerate() {
                let reference = adaptive_simpson(
                    |z| (-x * (1.0 - z)).exp() * z.powi(p as i32),
                    0.0,
                    1.0,
                    1e-15,
                );
                let scale = reference.abs().max(1e-300);
                assert!(
                    (jp - reference).abs() <= 1e-10 * scale.max(1.0 / (1.0 + x.abs())),
                    "x={x} p={p}: {jp} vs {reference}"
                );
            }
        }
    }
}
