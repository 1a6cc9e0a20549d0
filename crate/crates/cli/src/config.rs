//! Instance configuration: TOML sections, every time function given as a
//! list of `(amplitude, frequency, phase)` triples.

use std::path::Path;

use impulsive_ap::sim::SimSettings;
use impulsive_ap::solver::SolverSettings;
use impulsive_ap::system::{Forcing, ImpulseSystem, Jumps, PointwiseMap, Surfaces, SystemParts};
use impulsive_ap::trig::{APSequenceGen, TrigSum};
use impulsive_ap::SpectralVec;
use serde::Deserialize;

use crate::CliError;

pub type Triple = [f64; 3];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub geometry: Geometry,
    pub coefficients: Coefficients,
    pub surfaces: SurfaceConfig,
    #[serde(default)]
    pub jumps: JumpConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub l: f64,
    pub modes: usize,
    /// Collocation intervals; defaults to `4 max(N, 16)`.
    pub grid: Option<usize>,
    pub alpha: f64,
    pub rho: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { l: 1.0, modes: 16, grid: None, alpha: 0.5, rho: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    /// `logistic`, `profile` or `zero`.
    pub forcing: String,
    #[serde(default)]
    pub a: Vec<Triple>,
    #[serde(default)]
    pub b: Vec<Triple>,
    /// `m(t)` in `A1(t) = m(t) I + diag(sigma)`; fixed by `a`, `b` for the
    /// logistic forcing.
    #[serde(default)]
    pub m: Vec<Triple>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    /// One list of triples per mode.
    #[serde(default)]
    pub profile: Vec<Vec<Triple>>,
}

/// Scalar sequence `offset + sum amplitude cos(frequency j + phase)`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalarSequence {
    pub offset: f64,
    pub terms: Vec<Triple>,
}

impl ScalarSequence {
    fn generator(&self) -> APSequenceGen {
        self.terms
            .iter()
            .fold(APSequenceGen::constant(vec![self.offset]), |g, [a, f, p]| {
                g.with_component(*f, *p, vec![*a])
            })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// Mean distance `a` between consecutive moments.
    pub gap: f64,
    #[serde(default)]
    pub c: ScalarSequence,
    #[serde(default)]
    pub b: ScalarSequence,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorTerm {
    pub amplitude: Vec<f64>,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    /// `zero`, `identity`, `positive` or `tanh_positive`.
    pub map: String,
    pub lambda: f64,
    /// Sine-basis kernel weights `(p, q, w)`, modes counted from 1.
    pub kernel: Vec<(usize, usize, f64)>,
    /// Leading coefficients of the offsets `d_j`; the rest are zero.
    pub d_offset: Vec<f64>,
    pub d_terms: Vec<VectorTerm>,
}

impl Default for JumpConfig {
    fn default() -> Self {
        JumpConfig {
            map: "zero".into(),
            lambda: 1.0,
            kernel: vec![],
            d_offset: vec![],
            d_terms: vec![],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub j_lo: i64,
    pub j_hi: i64,
    /// Buffer surfaces on each side; sized from the dichotomy when absent.
    pub buffer: Option<i64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { j_lo: 0, j_hi: 30, buffer: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub residual_tol: f64,
    pub event_tol: f64,
    pub tail_tol: f64,
    pub seg_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub dt_max: f64,
    pub grade: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig {
            inner_tol: s.inner_tol,
            outer_tol: s.outer_tol,
            residual_tol: s.residual_tol,
            event_tol: s.event_tol,
            tail_tol: s.tail_tol,
            seg_tol: s.seg_tol,
            max_inner: s.max_inner,
            max_outer: s.max_outer,
            dt_max: s.dt_max,
            grade: s.grade,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Defaults to half a gap before the first surface of the window.
    pub t0: Option<f64>,
    /// Defaults to half a gap after the last surface of the window.
    pub t1: Option<f64>,
    /// Leading coefficients of the initial state; zero when empty.
    pub x0: Vec<f64>,
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub samples: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig { samples: 512 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub eps: Vec<f64>,
    /// Time step of the sampled solution.
    pub h: f64,
    pub probe_pairs: usize,
    pub bound_samples: usize,
    pub n1_declared: Option<f64>,
    pub residual_factor: usize,
    pub dichotomy_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            eps: vec![1e-2],
            h: 0.01,
            probe_pairs: 20,
            bound_samples: 2000,
            n1_declared: None,
            residual_factor: 2,
            dichotomy_samples: 4000,
        }
    }
}

/// Replacements for fitted or measured constants in `constants`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub m1: Option<f64>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn finite(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{name} has non-finite entries")))
    }
}

fn triples(name: &str, t: &[Triple]) -> Result<TrigSum, CliError> {
    finite(name, &t.concat())?;
    Ok(TrigSum::from_triples(t))
}

fn padded(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>, CliError> {
    if v.len() > n {
        return Err(invalid(format!("{name} has {} entries for {n} modes", v.len())));
    }
    finite(name, v)?;
    let mut out = v.to_vec();
    out.resize(n, 0.0);
    Ok(out)
}

impl InstanceConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: InstanceConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.window.j_hi <= self.window.j_lo {
            return Err(invalid("window.j_hi must exceed window.j_lo"));
        }
        if let Some(t) = self.overrides.theta {
            if !(t > 0.0) {
                return Err(invalid(format!("overrides.theta must be positive, got {t}")));
            }
        }
        for (name, v) in [("overrides.m1", self.overrides.m1), ("overrides.beta", self.overrides.beta)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(invalid(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.analysis.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("analysis.eps entries must be positive"));
        }
        if !(self.analysis.h > 0.0) || self.analysis.residual_factor < 1 {
            return Err(invalid("analysis.h must be positive and residual_factor at least 1"));
        }
        let s = &self.solver;
        if [s.inner_tol, s.outer_tol, s.residual_tol, s.event_tol, s.tail_tol, s.seg_tol, s.dt_max]
            .iter()
            .any(|v| !(*v > 0.0))
            || !(s.grade >= 1.0)
        {
            return Err(invalid("solver tolerances must be positive and grade at least 1"));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<ImpulseSystem, CliError> {
        let g = &self.geometry;
        let n = g.modes;
        if n == 0 {
            return Err(invalid("geometry.modes must be positive"));
        }
        let c = &self.coefficients;
        let forcing = match c.forcing.as_str() {
            "logistic" => {
                if c.a.is_empty() {
                    return Err(invalid("logistic forcing needs coefficients.a"));
                }
                Forcing::Logistic {
                    a: triples("coefficients.a", &c.a)?,
                    b: triples("coefficients.b", &c.b)?,
                    rho: g.rho,
                }
            }
            "profile" => {
                if c.profile.len() > n {
                    return Err(invalid("coefficients.profile has more rows than modes"));
                }
                let mut rows = c
                    .profile
                    .iter()
                    .map(|r| triples("coefficients.profile", r))
                    .collect::<Result<Vec<_>, _>>()?;
                rows.resize(n, TrigSum::zero());
                Forcing::Profile(rows)
            }
            "zero" => Forcing::Zero,
            other => {
                return Err(invalid(format!(
                    "unknown forcing {other:?} (logistic, profile, zero)"
                )))
            }
        };
        let sigma = if c.sigma.is_empty() {
            vec![]
        } else {
            padded("coefficients.sigma", &c.sigma, n)?
        };

        let j = &self.jumps;
        let map = PointwiseMap::parse(&j.map, j.lambda).map_err(|e| invalid(e.to_string()))?;
        if map.apply(0.0) != 0.0 {
            return Err(invalid("jump map must vanish at zero"));
        }
        let mut kernel = vec![0.0; n * n];
        for &(p, q, w) in &j.kernel {
            if p == 0 || q == 0 || p > n || q > n || !w.is_finite() {
                return Err(invalid(format!("kernel entry ({p}, {q}, {w}) out of range")));
            }
            kernel[(p - 1) * n + (q - 1)] += w;
        }
        // finite coefficients give d_j in X^1 at finite N
        let mut d = APSequenceGen::constant(padded("jumps.d_offset", &j.d_offset, n)?);
        for t in &j.d_terms {
            finite("jumps.d_terms", &[t.frequency, t.phase])?;
            d = d.with_component(t.frequency, t.phase, padded("jumps.d_terms", &t.amplitude, n)?);
        }

        let s = &self.surfaces;
        finite("surfaces", &[s.gap, s.c.offset, s.b.offset])?;
        finite("surfaces.c", &s.c.terms.concat())?;
        finite("surfaces.b", &s.b.terms.concat())?;

        let sys = ImpulseSystem::new(SystemParts {
            l: g.l,
            n_modes: n,
            grid_intervals: g.grid.unwrap_or(4 * n.max(16)),
            alpha: g.alpha,
            rho: g.rho,
            m: triples("coefficients.m", &c.m)?,
            sigma,
            forcing,
            surfaces: Surfaces { a: s.gap, c: s.c.generator(), b: s.b.generator() },
            jumps: Jumps { kernel, map, d },
        })
        .map_err(|e| invalid(e.to_string()))?;
        let (lo, hi) = (self.window.j_lo, self.window.j_hi);
        let theta = sys.separation(lo - 1, hi + 1);
        if !(theta > 0.0) {
            return Err(invalid(format!("surfaces are not separated on the window (theta = {theta})")));
        }
        Ok(sys)
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            inner_tol: s.inner_tol,
            outer_tol: s.outer_tol,
            residual_tol: s.residual_tol,
            event_tol: s.event_tol,
            tail_tol: s.tail_tol,
            seg_tol: s.seg_tol,
            max_inner: s.max_inner,
            max_outer: s.max_outer,
            dt_max: s.dt_max,
            grade: s.grade,
            buffer: self.window.buffer,
        }
    }

    pub fn sim_settings(&self) -> SimSettings {
        let mut set = SimSettings {
            seg_tol: self.solver.seg_tol,
            event_tol: self.solver.event_tol,
            ..SimSettings::default()
        };
        if let Some(h) = self.simulate.h_max {
            set.h_max = h;
        }
        set
    }

    pub fn initial_state(&self) -> Result<SpectralVec, CliError> {
        Ok(SpectralVec(padded("simulate.x0", &self.simulate.x0, self.geometry.modes)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [coefficients]
        forcing = "logistic"
        a = [[2.0, 0.0, 0.0]]
        [surfaces]
        gap = 1.0
        b = { offset = -0.2 }
        [jumps]
        map = "positive"
        kernel = [[1, 1, 0.05]]
        d_offset = [0.1, 0.0, 0.01]
    "#;

    #[test]
    fn minimal_config_builds() {
        let cfg = InstanceConfig::parse(MINIMAL).unwrap();
        let sys = cfg.system().unwrap();
        assert_eq!(sys.n_modes(), 16);
        assert_eq!(sys.surfaces.slope(3), -0.2);
        assert_eq!(sys.jumps.offset(0)[2], 0.01);
        assert_eq!(sys.jumps.kernel[0], 0.05);
    }

    #[test]
    fn rejects_positive_slopes_and_bad_theta() {
        let text = MINIMAL.replace("offset = -0.2", "offset = 0.2");
        let cfg = InstanceConfig::parse(&text).unwrap();
        assert!(matches!(cfg.system(), Err(CliError::Validation(_))));
        let text = format!("{MINIMAL}\n[overrides]\ntheta = 0.0\n");
        assert!(matches!(InstanceConfig::parse(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_maps() {
        let text = MINIMAL.replace("gap = 1.0", "gap = 1.0\nspeed = 2");
        assert!(InstanceConfig::parse(&text).is_err());
        let text = MINIMAL.replace("\"positive\"", "\"cubic\"");
        let cfg = InstanceConfig::parse(&text).unwrap();
        assert!(cfg.system().is_err());
    }

    #[test]
    fn rejects_out_of_range_kernel() {
        let text = MINIMAL.replace("[[1, 1, 0.05]]", "[[17, 1, 0.05]]");
        let cfg = InstanceConfig::parse(&text).unwrap();
        assert!(cfg.system().is_err());
    }
}
