use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("window too short: need {needed} samples, have {available}")]
    WindowTooShort { needed: usize, available: usize },

    #[error("insufficient window: shift {shift} leaves the sampled range")]
    InsufficientWindow { shift: f64 },

    #[error("aliasing risk: {intervals} grid intervals for {modes} modes (need at least {})", 4 * .modes)]
    AliasingRisk { intervals: usize, modes: usize },

    #[error("non-hyperbolic mode {mode}: mean exponent {exponent:e}")]
    NonHyperbolic { mode: usize, exponent: f64 },

    #[error("left admissible ball at t = {time}: |u|_alpha = {norm} > rho = {rho}")]
    LeftBall { time: f64, norm: f64, rho: f64 },

    #[error("jump exits ball on surface {surface}: |u+|_alpha = {norm} > rho = {rho}")]
    JumpExitsBall { surface: i64, norm: f64, rho: f64 },

    #[error("event resolution too coarse; reduce step (surface {surface} on [{t0}, {t1}])")]
    EventResolution { surface: i64, t0: f64, t1: f64 },

    #[error("beating on certified surface {surface} at t = {time}")]
    CertifiedBeating { surface: i64, time: f64 },

    #[error("ball violation: hypotheses fail (iteration {iteration}, sup |u|_alpha = {norm}, rho = {rho})")]
    BallViolation { iteration: usize, norm: f64, rho: f64 },

    #[error("no convergence after {iterations} iterations (last increment ratio {ratio})")]
    NoConvergence { iterations: usize, ratio: f64 },

    #[error("no contraction: reduce N1 or check dichotomy (ratio {ratio})")]
    NoContraction { ratio: f64 },

    #[error("window too small for requested tolerance: need [{need_lo}, {need_hi}], data covers [{have_lo}, {have_hi}]")]
    TailWindow {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("invalid instance: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonHyperbolic { .. }
                | Error::LeftBall { .. }
                | Error::JumpExitsBall { .. }
                | Error::EventResolution { .. }
                | Error::CertifiedBeating { .. }
                | Error::BallViolation { .. }
                | Error::NoConvergence { .. }
                | Error::NoContraction { .. }
                | Error::TailWindow { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
