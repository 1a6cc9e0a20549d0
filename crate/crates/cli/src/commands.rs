//! The five pipeline stages. Each writes its data files and a key-value
//! report into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use impulsive_ap::ap_analysis::{
    eps_almost_periods, harmonize, PiecewiseSampledFunction, StronglyAPSet, WeightedNorm,
    WindowedSequence,
};
use impulsive_ap::evolution::{fit_dichotomy, k_bundle_from, DichotomyData, SampleWindow};
use impulsive_ap::io::{write_hits, write_records, write_sequence, write_table, write_trajectory};
use impulsive_ap::sim::{beating_certificate, logistic_beta0, Simulator};
use impulsive_ap::solver::{
    bundle_for, certify_almost_periodicity, integral_residual, measure_bounds,
    observed_inner_ratio, outer_solve, probe_s_ratio, verify_smallness,
};
use impulsive_ap::system::{Forcing, ImpulseSystem};
use impulsive_ap::PiecewiseTrajectory;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::InstanceConfig;
use crate::CliError;

type Records = Vec<(String, String)>;

pub struct Context {
    pub cfg: InstanceConfig,
    pub sys: ImpulseSystem,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: InstanceConfig, seed: Option<u64>, out: &Path) -> Result<Self, CliError> {
        let sys = cfg.system()?;
        std::fs::create_dir_all(out)?;
        Ok(Context {
            seed: seed.unwrap_or(cfg.seed),
            cfg,
            sys,
            out: out.to_path_buf(),
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn window(&self) -> (i64, i64) {
        (self.cfg.window.j_lo, self.cfg.window.j_hi)
    }

    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> impulsive_ap::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.out.join(name))?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn write_records(&self, name: &str, records: &Records) -> Result<(), CliError> {
        self.write(name, |w| write_records(w, records))
    }

    fn dichotomy(&self, rng: &mut ChaCha8Rng) -> Result<DichotomyData, CliError> {
        let plan = SampleWindow {
            samples: self.cfg.analysis.dichotomy_samples,
            ..SampleWindow::default()
        };
        Ok(fit_dichotomy(&self.sys.coeff, self.sys.alpha, plan, rng)?)
    }

    fn header(&self, command: &str) -> Records {
        vec![
            ("command".into(), command.into()),
            ("seed".into(), self.seed.to_string()),
            ("j_lo".into(), self.cfg.window.j_lo.to_string()),
            ("j_hi".into(), self.cfg.window.j_hi.to_string()),
        ]
    }
}

fn prefixed(prefix: &str, records: Records) -> Records {
    records
        .into_iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), v))
        .collect()
}

fn sci(v: f64) -> String {
    format!("{v:.12e}")
}

/// Dichotomy fit, measured bounds, constant bundle and smallness verdicts.
pub fn constants(ctx: &Context) -> Result<(), CliError> {
    let mut rng = ctx.rng();
    let (lo, hi) = ctx.window();
    let a = &ctx.cfg.analysis;
    let ov = &ctx.cfg.overrides;
    let dich = ctx.dichotomy(&mut rng)?;
    let bounds = measure_bounds(&ctx.sys, lo, hi, a.n1_declared, a.bound_samples, &mut rng);
    let mut inputs = bounds.bundle_inputs();
    if let Some(t) = ov.theta {
        inputs.theta = t;
    }
    let kb = k_bundle_from(
        inputs,
        ov.m1.unwrap_or(dich.m1),
        ov.beta.unwrap_or(dich.beta),
        ov.c.unwrap_or(dich.c_evop),
    )?;
    let rep = verify_smallness(&bounds, &kb, None, None);
    let mut r = ctx.header("constants");
    r.extend(prefixed("dichotomy", dich.records()));
    r.extend(prefixed("bounds", bounds.records()));
    r.extend(prefixed("bundle", kb.records()));
    r.extend(prefixed("smallness", rep.records()));
    ctx.write_records("constants.txt", &r)
}

/// Direct simulation with event location from `simulate.x0`.
pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let (lo, hi) = ctx.window();
    let sys = &ctx.sys;
    let gap = sys.surfaces.a;
    let t0 = ctx.cfg.simulate.t0.unwrap_or(sys.surfaces.base(lo) - 0.5 * gap);
    let t1 = ctx.cfg.simulate.t1.unwrap_or(sys.surfaces.base(hi) + 0.5 * gap);
    let x0 = ctx.cfg.initial_state()?;
    let samples = ctx.cfg.certify.samples;
    let start = ctx.seed % 1_000_000;
    let certified = |j: i64| beating_certificate(sys, j, samples, start).passed;
    let sim = Simulator::new(sys, ctx.cfg.sim_settings());
    let out = sim.simulate(t0, &x0, t1, &certified)?;
    let traj = &out.trajectory;
    ctx.write("trajectory.tsv", |w| write_trajectory(w, traj, &sys.lap, sys.alpha))?;
    ctx.write("hits.tsv", |w| write_hits(w, &traj.hits, &sys.lap, sys.alpha))?;
    let mut r = ctx.header("simulate");
    r.extend([
        ("t0".into(), format!("{t0}")),
        ("t1".into(), format!("{t1}")),
        ("steps".into(), out.steps.to_string()),
        ("rejected_steps".into(), out.rejected.to_string()),
        ("hits".into(), traj.hits.len().to_string()),
        ("max_hits_per_surface".into(), out.max_hits_per_surface().to_string()),
        (
            "beating_surfaces".into(),
            out.beatings.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("sup_norm_alpha".into(), sci(traj.sup_norm(&sys.lap, sys.alpha))),
    ]);
    ctx.write_records("simulate.txt", &r)
}

/// Beating certificates for every surface of the window.
pub fn certify(ctx: &Context) -> Result<(), CliError> {
    let (lo, hi) = ctx.window();
    let sys = &ctx.sys;
    let samples = ctx.cfg.certify.samples;
    let start = ctx.seed % 1_000_000;
    let certs: Vec<_> = (lo..=hi)
        .map(|j| beating_certificate(sys, j, samples, start))
        .collect();
    let rows: Vec<Vec<String>> = certs
        .iter()
        .map(|c| {
            vec![
                c.surface.to_string(),
                sci(c.slope),
                sci(c.theta_max),
                sci(c.p_max),
                c.passed.to_string(),
            ]
        })
        .collect();
    ctx.write("certificates.tsv", |w| {
        write_table(w, &["surface", "slope", "theta_max", "p_max", "passed"], &rows)
    })?;
    for c in &certs {
        ctx.write_records(&format!("certificate_{}.txt", c.surface), &c.records())?;
    }
    let mut r = ctx.header("certify");
    r.extend([
        ("samples".into(), samples.to_string()),
        (
            "beta0".into(),
            logistic_beta0(sys).map_or("none".into(), |b| format!("{b:.17e}")),
        ),
        ("surfaces".into(), certs.len().to_string()),
        ("passed".into(), certs.iter().filter(|c| c.passed).count().to_string()),
        ("all_passed".into(), certs.iter().all(|c| c.passed).to_string()),
        (
            "max_p".into(),
            sci(certs.iter().map(|c| c.p_max).fold(f64::NEG_INFINITY, f64::max)),
        ),
        (
            "max_theta".into(),
            sci(certs.iter().map(|c| c.theta_max).fold(f64::NEG_INFINITY, f64::max)),
        ),
    ]);
    ctx.write_records("certify.txt", &r)
}

fn within(traj: PiecewiseTrajectory, t_lo: f64, t_hi: f64) -> PiecewiseTrajectory {
    PiecewiseTrajectory {
        segments: traj
            .segments
            .into_iter()
            .filter(|s| s.start() >= t_lo && s.end() <= t_hi)
            .collect(),
        hits: traj
            .hits
            .into_iter()
            .filter(|h| h.time >= t_lo && h.time <= t_hi)
            .collect(),
    }
}

/// Outer fixed point `y*`, the assembled `u*`, verdicts and almost
/// periodicity evidence.
pub fn solve_ap(ctx: &Context) -> Result<(), CliError> {
    let mut rng = ctx.rng();
    let (lo, hi) = ctx.window();
    let sys = &ctx.sys;
    let a = &ctx.cfg.analysis;
    let set = ctx.cfg.solver_settings();
    let dich = ctx.dichotomy(&mut rng)?;
    let sol = outer_solve(sys, &dich, lo, hi, &set)?;
    let bounds = measure_bounds(sys, lo, hi, a.n1_declared, a.bound_samples, &mut rng);
    let kb = bundle_for(&bounds, &dich)?;
    let s_ratio = if a.probe_pairs > 0 {
        Some(probe_s_ratio(sys, &dich, sol.y.lo, sol.y.hi(), a.probe_pairs, &set, &mut rng)?)
    } else {
        None
    };
    let rep = verify_smallness(&bounds, &kb, observed_inner_ratio(&sol.inner), s_ratio);
    let res = integral_residual(sys, &dich, &sol.inner, &set, a.residual_factor)?;
    let ap = certify_almost_periodicity(sys, &sol, &a.eps, a.h)?;

    let times = &sol.inner.grid.times;
    let t_lo = times[(lo - sol.y.lo) as usize];
    let t_hi = times[(hi - sol.y.lo) as usize];
    let u = within(sol.inner.trajectory(), t_lo, t_hi);
    ctx.write("y_star.tsv", |w| write_sequence(w, &sol.reported(), &sys.lap, sys.alpha))?;
    ctx.write("u_star.tsv", |w| write_trajectory(w, &u, &sys.lap, sys.alpha))?;
    ctx.write("u_star_hits.tsv", |w| write_hits(w, &u.hits, &sys.lap, sys.alpha))?;

    let mut r = ctx.header("solve-ap");
    r.extend(prefixed("dichotomy", dich.records()));
    r.extend(prefixed("bounds", bounds.records()));
    r.extend(prefixed("bundle", kb.records()));
    r.extend(prefixed("smallness", rep.records()));
    ctx.write_records("contraction.txt", &r)?;

    let theta = sys.separation(sol.y.lo, sol.y.hi());
    let mut r = ctx.header("solve-ap");
    r.extend(sol.records());
    r.extend([
        ("sup_norm_alpha".into(), sci(sol.inner.sup_norm(sys))),
        ("residual_coarse".into(), sci(res.coarse)),
        ("residual_fine".into(), sci(res.fine)),
        ("residual_tolerance".into(), sci(res.tolerance)),
        ("residual_pass".into(), res.passed().to_string()),
        (
            "regularity_sup_alpha".into(),
            sci(sol.inner.regularity_sup(sys, sys.alpha, theta / 4.0)),
        ),
        (
            "regularity_sup_0.9".into(),
            sci(sol.inner.regularity_sup(sys, 0.9, theta / 4.0)),
        ),
    ]);
    ctx.write_records("solution.txt", &r)?;

    let mut r = ctx.header("solve-ap");
    for (i, rep) in ap.iter().enumerate() {
        r.extend(prefixed(&format!("eps{i}"), rep.records()));
    }
    ctx.write_records("almost_periodicity.txt", &r)
}

/// Almost-periodicity diagnostics of the instance data: the sequence
/// `(c_j, b_j, d_j)`, the moments `a j + c_j` and the time coefficients.
pub fn analyze_ap(ctx: &Context) -> Result<(), CliError> {
    let (lo, hi) = ctx.window();
    let sys = &ctx.sys;
    let a = &ctx.cfg.analysis;
    let s = &sys.surfaces;
    let values: Vec<Vec<f64>> = (lo..=hi)
        .map(|j| {
            let mut v = vec![s.c.value(j)[0], s.b.value(j)[0]];
            v.extend(sys.jumps.d.value(j));
            v
        })
        .collect();
    let seq = WindowedSequence::new(lo, values, WeightedNorm::euclidean());
    let taus = StronglyAPSet::new(s.a, &s.c, lo, hi)?;
    let coeffs = |t: f64| -> Vec<f64> {
        let mut v = vec![sys.coeff.m().value(t)];
        match &sys.forcing {
            Forcing::Logistic { a, b, .. } => v.extend([a.value(t), b.value(t)]),
            Forcing::Profile(p) => v.extend(p.iter().map(|x| x.value(t))),
            Forcing::Zero => {}
        }
        v
    };
    let ts = taus.taus();
    let f = PiecewiseSampledFunction::sample(
        ts[0],
        ts[ts.len() - 1],
        a.h,
        coeffs,
        vec![],
        WeightedNorm::euclidean(),
    )?;
    let span = f.t_end() - f.t0;
    let p_hi = ((seq.len() / 3) as i64).max(1);
    let mut r = ctx.header("analyze-ap");
    r.push(("theta".into(), sci(taus.theta())));
    for (i, &eps) in a.eps.iter().enumerate() {
        let rep = eps_almost_periods(&seq, eps, 1, p_hi)?;
        let h = harmonize(&seq, &taus, &f, eps, taus.theta(), span / 3.0)?;
        let mut rec = rep.records();
        match h.pair {
            Some((q, rr)) => {
                rec.push(("harmonized_q".into(), q.to_string()));
                rec.push(("harmonized_r".into(), format!("{rr:.12e}")));
            }
            None => rec.push(("harmonized_q".into(), "none".into())),
        }
        r.extend(prefixed(&format!("eps{i}"), rec));
    }
    ctx.write_records("analysis.txt", &r)
}
