//! Tidy CSV series for external plotting, built from the run logs.

use std::fs;
use std::path::{Path, PathBuf};

use super::report::read_rows;
use super::{io_err, HarnessError, TRACE_HEADER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub er_rows: usize,
    pub completion_rows: usize,
    pub loss_rows: usize,
    pub wrench_rows: usize,
}

const AXES: [&str; 6] = ["fx", "fy", "fz", "mx", "my", "mz"];

fn sorted_matches(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let p = entry.map_err(|e| io_err(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(prefix) && name.ends_with(".csv") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn source_name(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

fn open(p: &Path) -> Result<fs::File, HarnessError> {
    fs::File::open(p).map_err(|e| io_err(p, e))
}

fn writer(p: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    Ok(csv::Writer::from_writer(fs::File::create(p).map_err(|e| io_err(p, e))?))
}

/// `export-plots --in <dir> --out <dir>`. Reads `episodes.csv`, `eval_*.csv`,
/// `telemetry.csv` and `trace_*.csv`; at least one must exist.
pub fn cmd_export_plots(input: &Path, out: &Path) -> Result<ExportSummary, HarnessError> {
    let mut episode_logs = sorted_matches(input, "episodes")?;
    episode_logs.extend(sorted_matches(input, "eval_")?);
    let telemetry = input.join("telemetry.csv");
    let traces = sorted_matches(input, "trace_")?;
    if episode_logs.is_empty() && traces.is_empty() && !telemetry.exists() {
        return Err(HarnessError::Io(format!("{}: no run logs found", input.display())));
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let mut er = writer(&out.join("er_series.csv"))?;
    er.write_record(["source", "episode", "mode", "ER"])?;
    let mut done = writer(&out.join("completion_steps.csv"))?;
    done.write_record(["source", "episode", "mode", "steps"])?;
    let (mut er_rows, mut completion_rows) = (0, 0);
    for p in &episode_logs {
        let src = source_name(p);
        for r in read_rows(open(p)?)? {
            er.write_record([src.as_str(), &r.episode.to_string(), r.mode.as_str(), &r.er.to_string()])?;
            er_rows += 1;
            if r.succeeded() {
                done.write_record([src.as_str(), &r.episode.to_string(), r.mode.as_str(), &r.steps.to_string()])?;
                completion_rows += 1;
            }
        }
    }
    er.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    done.flush().map_err(|e| HarnessError::Io(e.to_string()))?;

    let mut loss = writer(&out.join("loss_curve.csv"))?;
    loss.write_record(["step", "loss", "epsilon"])?;
    let mut loss_rows = 0;
    if telemetry.exists() {
        let mut rdr = csv::Reader::from_reader(open(&telemetry)?);
        let h = rdr.headers()?.clone();
        let col = |name: &str| {
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| HarnessError::Io(format!("telemetry.csv: missing column {name}")))
        };
        let (cs, cl, ce) = (col("step")?, col("loss")?, col("epsilon")?);
        for rec in rdr.records() {
            let rec = rec?;
            let loss_v: f64 =
                rec[cl].parse().map_err(|_| HarnessError::Io(format!("telemetry.csv: bad loss {:?}", &rec[cl])))?;
            loss.write_record([&rec[cs], &loss_v.to_string(), &rec[ce]])?;
            loss_rows += 1;
        }
    }
    loss.flush().map_err(|e| HarnessError::Io(e.to_string()))?;

    let mut wrench = writer(&out.join("wrench_trace.csv"))?;
    wrench.write_record(["source", "episode", "step", "substep", "axis", "value", "zone", "accepted"])?;
    let mut wrench_rows = 0;
    for p in &traces {
        let src = source_name(p);
        let mut rdr = csv::Reader::from_reader(open(p)?);
        if rdr.headers()?.iter().ne(TRACE_HEADER.iter().copied()) {
            return Err(HarnessError::Io(format!("{}: unexpected trace header", p.display())));
        }
        for rec in rdr.records() {
            let rec = rec?;
            for (k, axis) in AXES.iter().enumerate() {
                let v: f64 = rec[3 + k]
                    .parse()
                    .map_err(|_| HarnessError::Io(format!("{}: bad value {:?}", p.display(), &rec[3 + k])))?;
                wrench.write_record([
                    src.as_str(),
                    &rec[0],
                    &rec[1],
                    &rec[2],
                    axis,
                    &v.to_string(),
                    &rec[9],
                    &rec[10],
                ])?;
                wrench_rows += 1;
            }
        }
    }
    wrench.flush().map_err(|e| HarnessError::Io(e.to_string()))?;

    Ok(ExportSummary { er_rows, completion_rows, loss_rows, wrench_rows })
}
