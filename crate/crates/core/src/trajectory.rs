//! Left-continuous piecewise trajectories with recorded impulse moments.

use std::collections::BTreeMap;

use crate::spectral::{DirichletLaplacian, SpectralVec};

/// Nodes of one continuity interval. `states[0]` is the right limit at
/// `times[0]`, the last state is the left limit at the last time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub times: Vec<f64>,
    pub states: Vec<SpectralVec>,
}

impl Segment {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn first(&self) -> &SpectralVec {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralVec {
        self.states.last().unwrap()
    }

    pub fn push(&mut self, t: f64, x: SpectralVec) {
        self.times.push(t);
        self.states.push(x);
    }

    /// Cubic Lagrange interpolation on the four nodes around `t`.
    pub fn interpolate(&self, t: f64) -> SpectralVec {
        let n = self.times.len();
        if n == 1 {
            return self.states[0].clone();
        }
        let i = self.times.partition_point(|&x| x < t);
        if i < n && self.times[i] == t {
            return self.states[i].clone();
        }
        let i = i.clamp(1, n - 1);
        let lo = i.saturating_sub(2).min(n.saturating_sub(4));
        let hi = (lo + 4).min(n);
        let idx: Vec<usize> = (lo..hi).collect();
        let mut out = SpectralVec::zeros(self.states[0].len());
        for &a in &idx {
            let mut w = 1.0;
            for &b in &idx {
                if a != b {
                    w *= (t - self.times[b]) / (self.times[a] - self.times[b]);
                }
            }
            out.axpy(w, &self.states[a]);
        }
        out
    }
}

/// One impulse: the moment, the surface index, and the states around it.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRecord {
    pub time: f64,
    pub surface: i64,
    pub pre: SpectralVec,
    pub post: SpectralVec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseTrajectory {
    pub segments: Vec<Segment>,
    pub hits: Vec<HitRecord>,
}

impl PiecewiseTrajectory {
    pub fn start(&self) -> f64 {
        self.segments[0].start()
    }

    pub fn end(&self) -> f64 {
        self.segments.last().unwrap().end()
    }

    fn segment_for(&self, t: f64, right: bool) -> Option<&Segment> {
        if self.segments.is_empty() || t < self.start() || t > self.end() {
            return None;
        }
        let i = if right {
            self.segments.partition_point(|s| s.end() <= t)
        } else {
            self.segments.partition_point(|s| s.end() < t)
        };
        self.segments.get(i.min(self.segments.len() - 1))
    }

    /// `u(t)`, with `u(T_j) = u(T_j - 0)` at impulse moments.
    pub fn eval(&self, t: f64) -> Option<SpectralVec> {
        self.segment_for(t, false).map(|s| s.interpolate(t))
    }

    /// `u(t + 0)`.
    pub fn right_limit(&self, t: f64) -> Option<SpectralVec> {
        self.segment_for(t, true).map(|s| s.interpolate(t))
    }

    pub fn hit_times(&self) -> Vec<f64> {
        self.hits.iter().map(|h| h.time).collect()
    }

    pub fn hits_per_surface(&self) -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for h in &self.hits {
            *m.entry(h.surface).or_insert(0) += 1;
        }
        m
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, &SpectralVec)> {
        self.segments
            .iter()
            .flat_map(|s| s.times.iter().copied().zip(s.states.iter()))
    }

    pub fn sup_norm(&self, lap: &DirichletLaplacian, alpha: f64) -> f64 {
        self.nodes()
            .map(|(_, x)| lap.frac_norm(x, alpha))
            .fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.segments.iter().map(|s| s.times.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t0: f64, t1: f64, c: f64) -> Segment {
        let mut s = Segment::default();
        for i in 0..=10 {
            let t = t0 + (t1 - t0) * i as f64 / 10.0;
            s.push(t, SpectralVec(vec![c + t * t * t]));
        }
        s
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let s = ramp(0.0, 1.0, 0.0);
        for t in [0.0, 0.03, 0.5, 0.77, 1.0] {
            assert!((s.interpolate(t)[0] - t * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn left_continuity_at_impulse() {
        let tr = PiecewiseTrajectory {
            segments: vec![ramp(0.0, 1.0, 0.0), ramp(1.0, 2.0, 5.0)],
            hits: vec![],
        };
        assert!((tr.eval(1.0).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!((tr.right_limit(1.0).unwrap()[0] - 6.0).abs() < 1e-14);
        assert!(tr.eval(2.5).is_none());
    }
}
