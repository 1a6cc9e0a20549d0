//! Plot-ready output: tab-separated data files and `key = value` records.

use std::io::Write;

use crate::error::Result;
use crate::solver::APSequencePoint;
use crate::spectral::DirichletLaplacian;
use crate::trajectory::{HitRecord, PiecewiseTrajectory};

pub fn write_records<W: Write>(w: &mut W, records: &[(String, String)]) -> Result<()> {
    for (k, v) in records {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

fn coeff_header(n: usize) -> String {
    (1..=n).map(|k| format!("\tc{k}")).collect()
}

fn coeff_row(x: &[f64]) -> String {
    x.iter().map(|c| format!("\t{c:e}")).collect()
}

/// One row per node: segment index, time, `|x|_alpha`, coefficients.
pub fn write_trajectory<W: Write>(
    w: &mut W,
    traj: &PiecewiseTrajectory,
    lap: &DirichletLaplacian,
    alpha: f64,
) -> Result<()> {
    writeln!(w, "segment\tt\tnorm_alpha{}", coeff_header(lap.n_modes()))?;
    for (i, s) in traj.segments.iter().enumerate() {
        for (t, x) in s.times.iter().zip(&s.states) {
            writeln!(
                w,
                "{i}\t{t:e}\t{:e}{}",
                lap.frac_norm(x, alpha),
                coeff_row(x.coeffs())
            )?;
        }
    }
    Ok(())
}

/// One row per impulse: time, surface, `|pre|_alpha`, `|post|_alpha`.
pub fn write_hits<W: Write>(
    w: &mut W,
    hits: &[HitRecord],
    lap: &DirichletLaplacian,
    alpha: f64,
) -> Result<()> {
    writeln!(w, "t\tsurface\tpre_norm_alpha\tpost_norm_alpha")?;
    for h in hits {
        writeln!(
            w,
            "{:e}\t{}\t{:e}\t{:e}",
            h.time,
            h.surface,
            lap.frac_norm(&h.pre, alpha),
            lap.frac_norm(&h.post, alpha)
        )?;
    }
    Ok(())
}

/// One row per index: `j`, `|y_j|_alpha`, coefficients.
pub fn write_sequence<W: Write>(
    w: &mut W,
    y: &APSequencePoint,
    lap: &DirichletLaplacian,
    alpha: f64,
) -> Result<()> {
    let n = y.values.first().map_or(0, |v| v.len());
    writeln!(w, "j\tnorm_alpha{}", coeff_header(n))?;
    for (i, v) in y.values.iter().enumerate() {
        writeln!(
            w,
            "{}\t{:e}{}",
            y.lo + i as i64,
            lap.frac_norm(v, alpha),
            coeff_row(v.coeffs())
        )?;
    }
    Ok(())
}

/// Generic table with a header line.
pub fn write_table<W: Write>(w: &mut W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(w, "{}", header.join("\t"))?;
    for r in rows {
        writeln!(w, "{}", r.join("\t"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralVec;
    use crate::trajectory::Segment;

    #[test]
    fn trajectory_rows_match_nodes() {
        let lap = DirichletLaplacian::new(1.0, 2).unwrap();
        let mut s = Segment::default();
        s.push(0.0, SpectralVec(vec![1.0, 0.0]));
        s.push(0.5, SpectralVec(vec![0.5, 0.25]));
        let tr = PiecewiseTrajectory { segments: vec![s.clone(), s], hits: vec![] };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &tr, &lap, 0.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "segment\tt\tnorm_alpha\tc1\tc2");
        assert_eq!(lines[1], "0\t0e0\t1e0\t1e0\t0e0");
        assert!(lines[4].starts_with("1\t5e-1"));
    }

    #[test]
    fn records_are_key_value_lines() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[("a".into(), "1".into()), ("b".into(), "x".into())]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a = 1\nb = x\n");
    }
}
