//! Parameter sweeps over a base configuration.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::artifacts::{execute, headline, Headline};
use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::picard::RunStatus;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub headline: Headline,
    pub status: RunStatus,
    /// Observed order from three successive refinements of a grid field.
    pub richardson_order: Option<f64>,
}

pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Argument(format!("sweep value {s:?} is not a number")))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::Argument("sweep needs at least one value".into()));
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("sweep value {v} is not finite")));
    }
    Ok(vals)
}

const REFINEMENT_FIELDS: [&str; 3] = ["nt", "nx", "nv"];

/// `log(|q₁ − q₀| / |q₂ − q₁|) / log(r)` with `r` the refinement ratio.
pub fn richardson(q: [f64; 3], r: f64) -> Option<f64> {
    let (d1, d2) = ((q[1] - q[0]).abs(), (q[2] - q[1]).abs());
    if d1 > 0.0 && d2 > 0.0 && r > 1.0 {
        Some((d1 / d2).ln() / r.ln())
    } else {
        None
    }
}

pub fn sweep(
    base: &RunConfig,
    param: &str,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Argument("sweep needs at least one value".into()));
    }
    let cfgs: Vec<RunConfig> = values
        .iter()
        .map(|&v| base.with_param(param, v))
        .collect::<Result<_>>()?;
    let one = |cfg: &RunConfig| -> Result<(Headline, RunStatus)> {
        let (out, h) = execute(cfg)?;
        Ok((headline(cfg, &out, h.as_ref()), out.report.status.clone()))
    };
    let results: Vec<Result<(Headline, RunStatus)>> = if parallel {
        cfgs.par_iter().map(one).collect()
    } else {
        cfgs.iter().map(one).collect()
    };
    let mut rows = Vec::new();
    for (v, r) in values.iter().zip(results) {
        let (headline, status) = r?;
        rows.push(SweepRow {
            value: *v,
            headline,
            status,
            richardson_order: None,
        });
    }
    if REFINEMENT_FIELDS.contains(&param) {
        for i in 2..rows.len() {
            let r1 = rows[i - 1].value / rows[i - 2].value;
            let r2 = rows[i].value / rows[i - 1].value;
            if (r1 - r2).abs() <= 1e-9 * r1 {
                let q = [
                    rows[i - 2].headline.final_mass,
                    rows[i - 1].headline.final_mass,
                    rows[i].headline.final_mass,
                ];
                rows[i].richardson_order = richardson(q, r1);
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv(path: &Path, param: &str, rows: &[SweepRow], hash: &str) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# config_hash={hash}")?;
    writeln!(
        w,
        "{param},final_mass,p_sup,tau_beta,iterations,status,weak_residual,richardson_order"
    )?;
    for r in rows {
        let status = match &r.status {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::Diverged { .. } => "diverged",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.value,
            r.headline.final_mass,
            r.headline.p_sup,
            opt(r.headline.tau_beta),
            r.headline.iterations,
            status,
            opt(r.headline.weak_residual),
            opt(r.richardson_order)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse() {
        assert_eq!(parse_values("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_values("").is_err());
        assert!(parse_values("1,x").is_err());
        assert!(parse_values("inf").is_err());
    }

    #[test]
    fn richardson_recovers_order() {
        // q(h) = 1 + h², h halving
        let q = [1.0 + 1.0, 1.0 + 0.25, 1.0 + 0.0625];
        assert!((richardson(q, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(richardson([1.0, 1.0, 1.0], 2.0).is_none());
    }
}
