//! Plot-ready summaries of stored traces.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use ice_core::{confidence_jumps, confidence_trajectory, jump_category_histogram, Trace};

/// Every `*.jsonl` trace in `dir`, sorted by file name.
pub fn load_traces(dir: &Path) -> Result<Vec<(String, Trace)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();
    if paths.is_empty() {
        bail!("no .jsonl traces in {}", dir.display());
    }
    paths
        .into_iter()
        .map(|p| {
            let file = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            let trace = Trace::read_jsonl(BufReader::new(file)).with_context(|| format!("parsing {}", p.display()))?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, trace))
        })
        .collect()
}

pub fn write_trajectory_csv<W: Write>(traces: &[(String, Trace)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trace", "step", "avg_answer_conf"])?;
    for (name, trace) in traces {
        for (step, conf) in confidence_trajectory(trace).with_context(|| format!("trace {name}"))? {
            out.write_record([name.clone(), step.to_string(), conf.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_jumps_csv<W: Write>(traces: &[(String, Trace)], delta: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trace", "step", "delta_conf", "tokens", "categories"])?;
    for (name, trace) in traces {
        for jump in confidence_jumps(trace, delta)? {
            let tokens: Vec<String> = jump.tokens.iter().map(|(t, _)| t.to_string()).collect();
            let cats: Vec<&str> = jump.tokens.iter().map(|(_, c)| c.name()).collect();
            out.write_record([
                name.clone(),
                jump.step.to_string(),
                jump.delta_conf.to_string(),
                tokens.join(" "),
                cats.join(" "),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(traces: &[(String, Trace)], delta: f64, w: W) -> Result<()> {
    let hist = jump_category_histogram(traces.iter().map(|(_, t)| t), delta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["category", "count"])?;
    for (cat, n) in hist {
        out.write_record([cat.name().to_string(), n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `trajectory.csv`, `jumps.csv` and `histogram.csv` into `out_dir`.
pub fn trace_stats(trace_dir: &Path, delta: f64, out_dir: &Path) -> Result<()> {
    let traces = load_traces(trace_dir)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let create = |name: &str| {
        let p = out_dir.join(name);
        File::create(&p).with_context(|| format!("creating {}", p.display()))
    };
    write_trajectory_csv(&traces, create("trajectory.csv")?)?;
    write_jumps_csv(&traces, delta, create("jumps.csv")?)?;
    write_histogram_csv(&traces, delta, create("histogram.csv")?)?;
    Ok(())
}
