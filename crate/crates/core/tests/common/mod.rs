//! Instances shared by the integration and acceptance tests.
#![allow(dead_code)]

use impulsive_ap::evolution::{fit_dichotomy, DichotomyData, SampleWindow};
use impulsive_ap::system::{Forcing, ImpulseSystem, Jumps, PointwiseMap, Surfaces, SystemParts};
use impulsive_ap::trig::{APSequenceGen, TrigSum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Logistic instance on `(0, 1)` with `rho = 1`, `alpha = 1/2`, a rank-one
/// kernel `w e1 (x) e1` with positive-part map and offsets `d (e1 + 0.1 e3)`.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub n: usize,
    pub a: TrigSum,
    pub b: f64,
    pub gap: f64,
    pub c_amp: f64,
    pub slope: f64,
    pub d: f64,
    pub w: f64,
}

impl Default for Logistic {
    fn default() -> Self {
        Logistic {
            n: 16,
            a: TrigSum::from_triples(&[[2.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.5, SQRT2, 0.0]]),
            b: 0.0,
            gap: 1.0,
            c_amp: 0.05,
            slope: -0.2,
            d: 0.1,
            w: 0.05,
        }
    }
}

impl Logistic {
    pub fn build(&self) -> ImpulseSystem {
        let n = self.n;
        let mut off = vec![0.0; n];
        off[0] = self.d;
        if n >= 3 {
            off[2] = 0.1 * self.d;
        }
        let c = if self.c_amp == 0.0 {
            APSequenceGen::constant(vec![0.0])
        } else {
            APSequenceGen::constant(vec![0.0]).with_component(SQRT2, 0.0, vec![self.c_amp])
        };
        ImpulseSystem::new(SystemParts {
            l: 1.0,
            n_modes: n,
            grid_intervals: 64.max(4 * n),
            alpha: 0.5,
            rho: 1.0,
            m: TrigSum::zero(),
            sigma: vec![],
            forcing: Forcing::Logistic {
                a: self.a.clone(),
                b: TrigSum::constant(self.b),
                rho: 1.0,
            },
            surfaces: Surfaces {
                a: self.gap,
                c,
                b: APSequenceGen::constant(vec![self.slope]),
            },
            jumps: Jumps {
                kernel: Jumps::rank_one(n, 1, 1, self.w),
                map: PointwiseMap::Positive(1.0),
                d: APSequenceGen::constant(off),
            },
        })
        .expect("valid logistic instance")
    }
}

/// Certified instance: slopes `-0.2`, offsets `0.1`.
pub fn certified(b: f64) -> ImpulseSystem {
    Logistic { b, ..Default::default() }.build()
}

/// Instance meeting the smallness conditions.
pub fn compliant() -> ImpulseSystem {
    Logistic {
        slope: -0.02,
        d: 0.005,
        b: 0.01,
        w: 0.005,
        ..Default::default()
    }
    .build()
}

/// Linear instance: `m(t)` given, forcing `p_k(t) = 0.5/k cos(t + 0.3(k-1))`,
/// fixed moments `j + 1/4`, constant jumps `(0.3, -0.1, 0, ..)`.
pub fn linear(n: usize, m: TrigSum) -> ImpulseSystem {
    let mut d = vec![0.0; n];
    d[0] = 0.3;
    if n > 1 {
        d[1] = -0.1;
    }
    let profile: Vec<TrigSum> = (0..n)
        .map(|k| TrigSum::from_triples(&[[0.5 / (k + 1) as f64, 1.0, 0.3 * k as f64]]))
        .collect();
    ImpulseSystem::new(SystemParts {
        l: 1.0,
        n_modes: n,
        grid_intervals: 64.max(4 * n),
        alpha: 0.5,
        rho: 50.0,
        m,
        sigma: vec![],
        forcing: Forcing::Profile(profile),
        surfaces: Surfaces::fixed(1.0, 0.25),
        jumps: Jumps {
            kernel: vec![0.0; n * n],
            map: PointwiseMap::Zero,
            d: APSequenceGen::constant(d),
        },
    })
    .expect("valid linear instance")
}

pub fn dichotomy(sys: &ImpulseSystem, seed: u64) -> DichotomyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit_dichotomy(&sys.coeff, sys.alpha, SampleWindow::default(), &mut rng).expect("hyperbolic")
}

/// Minimum of `u(t, xi)` over the collocation grid at the given states.
pub fn physical_min<'a>(sys: &ImpulseSystem, xs: impl Iterator<Item = &'a impulsive_ap::SpectralVec>) -> f64 {
    xs.map(|x| sys.grid.eval_physical(x).into_iter().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min)
}
