use std::io::Write;

use serde_json::json;

use super::{CsResult, ExperimentResult, ResultRecord};
use crate::error::Result;

/// First line of every results CSV.
pub const RESULTS_CSV_HEADER: &str = "# scsparc-results v1";
pub const RESULTS_CSV_COLUMNS: &str = "snr_db,rate_bits,trials,ser_mean,fer,nmse_mean,nmse_std,iters_mean";
pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;

/// Writes the versioned curve CSV, one row per sweep point.
pub fn write_results_csv<W: Write>(records: &[ResultRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RESULTS_CSV_HEADER}")?;
    writeln!(out, "{RESULTS_CSV_COLUMNS}")?;
    for r in records {
        writeln!(
            out,
            "{:.6},{:.6},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6}",
            r.point.snr_db, r.rate_bits, r.trials, r.ser_mean, r.fer, r.nmse_mean, r.nmse_std, r.iters_mean
        )?;
    }
    Ok(())
}

/// Writes `t,mse_empirical,mse_se` for the compressed-sensing experiment.
pub fn write_cs_csv<W: Write>(cs: &CsResult, mut out: W) -> Result<()> {
    writeln!(out, "# scsparc-cs v1")?;
    writeln!(out, "t,mse_empirical,mse_se")?;
    for (t, (e, s)) in cs.mse_empirical.iter().zip(&cs.mse_se).enumerate() {
        writeln!(out, "{t},{e:.9e},{s:.9e}")?;
    }
    Ok(())
}

/// Full diagnostics: config echo, aggregates and per-trial records.
pub fn write_diagnostics_json<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let doc = json!({
        "schema_version": DIAGNOSTICS_SCHEMA_VERSION,
        "config": result.config,
        "points": result.points,
        "cs": result.cs,
    });
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}
