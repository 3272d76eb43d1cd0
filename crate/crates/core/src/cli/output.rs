//! CSV traces and the tab-separated metrics summary.

use std::io::{self, Write};

use crate::simulation::RunResult;

pub struct LabeledRun<'a> {
    pub id: &'a str,
    pub result: &'a RunResult,
}

impl<'a> LabeledRun<'a> {
    pub fn new(id: &'a str, result: &'a RunResult) -> Self {
        Self { id, result }
    }
}

/// `[run_id,]k,y_star,y,u,du,e,phi_1,...`; shorter PG vectors leave trailing cells empty.
pub fn write_trace_csv<W: Write>(out: &mut W, runs: &[LabeledRun<'_>], with_run_id: bool) -> io::Result<()> {
    let width = runs.iter().map(|r| r.result.trace.pg_len()).max().unwrap_or(0);
    let mut header = String::new();
    if with_run_id {
        header.push_str("run_id,");
    }
    header.push_str("k,y_star,y,u,du,e");
    for i in 1..=width {
        header.push_str(&format!(",phi_{i}"));
    }
    writeln!(out, "{header}")?;
    for run in runs {
        for row in run.result.trace.rows() {
            if with_run_id {
                write!(out, "{},", run.id)?;
            }
            write!(out, "{},{},{},{},{},{}", row.k, row.y_star, row.y, row.u, row.du, row.e)?;
            for i in 0..width {
                match row.phi.get(i) {
                    Some(v) => write!(out, ",{v}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(out: &mut W, runs: &[LabeledRun<'_>]) -> io::Result<()> {
    writeln!(out, "variant\tlambda\tISE\tIAE\tmax_e\tdiverged")?;
    for run in runs {
        let r = run.result;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.variant, r.config_echo.lambda, r.metrics.ise, r.metrics.iae, r.metrics.max_abs_e, r.metrics.diverged
        )?;
    }
    Ok(())
}
