//! Finite trigonometric sums. These are the generators for every almost
//! periodic coefficient in the crate: time coefficients `a(t)`, `b(t)`,
//! `m(t)` and index sequences such as `c_j`, `b_j` (sampled at integers).

use std::f64::consts::PI;

/// One term `amp * cos(freq * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

impl TrigTerm {
    pub fn new(amp: f64, freq: f64, phase: f64) -> Self {
        TrigTerm { amp, freq, phase }
    }
}

/// `s(t) = sum_i amp_i cos(freq_i t + phase_i)`.
///
/// Frequencies are kept non-negative and terms with equal frequency are
/// merged, so a zero-frequency term (if any) is the mean value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigSum {
    terms: Vec<TrigTerm>,
}

const FREQ_MERGE_TOL: f64 = 1e-13;

impl TrigSum {
    pub fn zero() -> Self {
        TrigSum { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        TrigSum::new(vec![TrigTerm::new(c, 0.0, 0.0)])
    }

    pub fn new(terms: Vec<TrigTerm>) -> Self {
        let mut s = TrigSum { terms: Vec::new() };
        for t in terms {
            s.push(t);
        }
        s
    }

    /// Build from `(amplitude, frequency, phase)` triples.
    pub fn from_triples(triples: &[[f64; 3]]) -> Self {
        TrigSum::new(
            triples
                .iter()
                .map(|t| TrigTerm::new(t[0], t[1], t[2]))
                .collect(),
        )
    }

    fn push(&mut self, mut t: TrigTerm) {
        if t.freq < 0.0 {
            t.freq = -t.freq;
            t.phase = -t.phase;
        }
        if t.freq <= FREQ_MERGE_TOL {
            t.freq = 0.0;
        }
        if t.amp == 0.0 {
            return;
        }
        if let Some(existing) = self
            .terms
            .iter_mut()
            .find(|e| (e.freq - t.freq).abs() <= FREQ_MERGE_TOL * (1.0 + t.freq))
        {
            // complex amplitudes add: amp * e^{i phase}
            let re = existing.amp * existing.phase.cos() + t.amp * t.phase.cos();
            let im = existing.amp * existing.phase.sin() + t.amp * t.phase.sin();
            if existing.freq == 0.0 {
                existing.amp = re;
                existing.phase = 0.0;
            } else {
                existing.amp = re.hypot(im);
                existing.phase = im.atan2(re);
            }
        } else {
            if t.freq == 0.0 {
                t.amp *= t.phase.cos();
                t.phase = 0.0;
            }
            self.terms.push(t);
        }
        self.terms.retain(|e| e.amp != 0.0);
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|e| e.amp * (e.freq * t + e.phase).cos())
            .sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|e| -e.amp * e.freq * (e.freq * t + e.phase).sin())
            .sum()
    }

    /// Antiderivative `E(t)` with the oscillatory part centred
    /// (`E(t) = mean * t + bounded`).
    pub fn antiderivative(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|e| {
                if e.freq == 0.0 {
                    e.amp * t
                } else {
                    e.amp / e.freq * (e.freq * t + e.phase).sin()
                }
            })
            .sum()
    }

    /// `int_s^t value(v) dv`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|e| {
                if e.freq == 0.0 {
                    e.amp * (t - s)
                } else {
                    // sin(A) - sin(B) = 2 cos((A+B)/2) sin((A-B)/2), stable for t close to s
                    let half = 0.5 * e.freq * (t - s);
                    let mid = 0.5 * e.freq * (t + s) + e.phase;
                    2.0 * e.amp / e.freq * mid.cos() * half.sin()
                }
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .filter(|e| e.freq == 0.0)
            .map(|e| e.amp)
            .sum()
    }

    /// Upper bound `sum |amp|` on `sup |s(t)|`; attained when the
    /// frequencies are rationally independent.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|e| e.amp.abs()).sum()
    }

    /// Upper bound on the Lipschitz constant, `sum |amp * freq|`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.terms.iter().map(|e| (e.amp * e.freq).abs()).sum()
    }

    /// Bound on the oscillating part of the antiderivative,
    /// `sup |E(t) - mean * t|`.
    pub fn oscillation_bound(&self) -> f64 {
        self.terms
            .iter()
            .filter(|e| e.freq != 0.0)
            .map(|e| (e.amp / e.freq).abs())
            .sum()
    }

    pub fn max_freq(&self) -> f64 {
        self.terms.iter().map(|e| e.freq).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> TrigSum {
        TrigSum::new(
            self.terms
                .iter()
                .map(|e| TrigTerm::new(e.amp * c, e.freq, e.phase))
                .collect(),
        )
    }

    pub fn add(&self, other: &TrigSum) -> TrigSum {
        TrigSum::new(self.terms.iter().chain(other.terms.iter()).copied().collect())
    }

    /// Product expanded with `cos A cos B = (cos(A+B) + cos(A-B)) / 2`.
    pub fn product(&self, other: &TrigSum) -> TrigSum {
        let mut out = Vec::with_capacity(2 * self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let amp = 0.5 * a.amp * b.amp;
                out.push(TrigTerm::new(amp, a.freq + b.freq, a.phase + b.phase));
                out.push(TrigTerm::new(amp, a.freq - b.freq, a.phase - b.phase));
            }
        }
        TrigSum::new(out)
    }

    /// `s(t) - s(t + h)` as a trigonometric sum.
    pub fn shift_difference(&self, h: f64) -> TrigSum {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for e in &self.terms {
            if e.freq == 0.0 {
                continue;
            }
            out.push(*e);
            out.push(TrigTerm::new(-e.amp, e.freq, e.phase + e.freq * h));
        }
        TrigSum::new(out)
    }

    /// Sampled `sup |s(t)|` over `[lo, hi]`, refined around the best sample.
    pub fn sup_abs_on(&self, lo: f64, hi: f64) -> f64 {
        self.extremum_on(lo, hi, |v| v.abs())
    }

    /// Sampled `sup s(t)` over `[lo, hi]`.
    pub fn max_on(&self, lo: f64, hi: f64) -> f64 {
        self.extremum_on(lo, hi, |v| v)
    }

    /// Sampled `inf s(t)` over `[lo, hi]`.
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        -self.extremum_on(lo, hi, |v| -v)
    }

    fn extremum_on(&self, lo: f64, hi: f64, score: impl Fn(f64) -> f64) -> f64 {
        if self.terms.iter().all(|e| e.freq == 0.0) {
            return score(self.value(lo));
        }
        let wmax = self.max_freq();
        let step = (0.02 * 2.0 * PI / wmax).min(0.05);
        let n = (((hi - lo) / step).ceil() as usize).max(2);
        let h = (hi - lo) / n as f64;
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for i in 0..=n {
            let v = score(self.value(lo + i as f64 * h));
            if v > best {
                best = v;
                best_i = i;
            }
        }
        // golden-section refinement on the bracketing cell pair
        let mut a = (lo + (best_i as f64 - 1.0) * h).max(lo);
        let mut b = (lo + (best_i as f64 + 1.0) * h).min(hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = score(self.value(c));
        let mut fd = score(self.value(d));
        for _ in 0..60 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = score(self.value(c));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = score(self.value(d));
            }
        }
        best.max(fc).max(fd)
    }
}

/// Vector-valued almost periodic sequence generator
/// `x_k = offset + sum_m amp_m cos(freq_m k + phase_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct APSequenceGen {
    pub offset: Vec<f64>,
    pub components: Vec<APComponent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct APComponent {
    pub freq: f64,
    pub phase: f64,
    pub amplitude: Vec<f64>,
}

impl APSequenceGen {
    pub fn constant(offset: Vec<f64>) -> Self {
        APSequenceGen {
            offset,
            components: Vec::new(),
        }
    }

    pub fn with_component(mut self, freq: f64, phase: f64, amplitude: Vec<f64>) -> Self {
        assert_eq!(amplitude.len(), self.offset.len(), "dimension mismatch");
        self.components.push(APComponent {
            freq,
            phase,
            amplitude,
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn value(&self, k: i64) -> Vec<f64> {
        let mut x = self.offset.clone();
        for c in &self.components {
            let w = (c.freq * k as f64 + c.phase).cos();
            for (xi, ai) in x.iter_mut().zip(&c.amplitude) {
                *xi += ai * w;
            }
        }
        x
    }

    pub fn window(&self, lo: i64, hi: i64) -> Vec<Vec<f64>> {
        (lo..=hi).map(|k| self.value(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrigSum {
        TrigSum::from_triples(&[[2.0, 0.0, 0.0], [0.5, 1.0, 0.3], [0.25, 2f64.sqrt(), -1.0]])
    }

    #[test]
    fn antiderivative_matches_integral() {
        let s = sample();
        for &(a, b) in &[(0.0, 1.0), (-3.0, 7.5), (2.0, 2.0 + 1e-9)] {
            let lhs = s.integral(a, b);
            let rhs = s.antiderivative(b) - s.antiderivative(a);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + b - a), "{lhs} vs {rhs}");
        }
        assert_eq!(s.mean(), 2.0);
    }

    #[test]
    fn product_is_pointwise() {
        let a = sample();
        let b = TrigSum::from_triples(&[[1.0, 0.0, 0.0], [-0.3, 1.0, 0.0]]);
        let p = a.product(&b);
        for i in 0..50 {
            let t = -10.0 + 0.37 * i as f64;
            assert!((p.value(t) - a.value(t) * b.value(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn shift_difference_vanishes_at_period() {
        let s = TrigSum::from_triples(&[[1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.2, 3.0, 1.0]]);
        let d = s.shift_difference(2.0 * PI);
        assert!(d.sup_abs_on(0.0, 20.0) < 1e-12);
        let d = s.shift_difference(0.7);
        for i in 0..40 {
            let t = 0.21 * i as f64;
            assert!((d.value(t) - (s.value(t) - s.value(t + 0.7))).abs() < 1e-13);
        }
    }

    #[test]
    fn sampled_sup_single_frequency_is_amplitude() {
        let s = TrigSum::from_triples(&[[0.7, 3.3, 0.1]]);
        assert!((s.sup_abs_on(0.0, 10.0) - 0.7).abs() < 1e-12);
        assert!((s.min_on(0.0, 10.0) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn ap_generator_rational_frequencies_repeat() {
        let g = APSequenceGen::constant(vec![1.0, 0.0])
            .with_component(2.0 * PI / 3.0, 0.2, vec![1.0, -1.0])
            .with_component(2.0 * PI / 4.0, 0.0, vec![0.5, 0.5]);
        for k in -20..20 {
            let a = g.value(k);
            let b = g.value(k + 12);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
