//! CSV formats for trajectories, discretized baths and error reports.
//!
//! Every file starts with `# key: value` metadata lines followed by a header
//! row. Numbers are written in shortest round-trip form, so identical inputs
//! give byte-identical files.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::lindblad::Trajectory;
use crate::oracle::{DiscretizedBath, ErrorSeries};

pub type Metadata = Vec<(String, String)>;

fn write_meta<W: Write>(w: &mut W, meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        for line in v.lines() {
            writeln!(w, "# {k}: {line}")?;
        }
        if v.is_empty() {
            writeln!(w, "# {k}:")?;
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error, offset: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize + offset).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Splits leading `#` metadata from the CSV body; returns the metadata and
/// the number of lines consumed.
fn split_meta<R: BufRead>(r: R) -> Result<(Metadata, String, usize)> {
    let mut meta = Vec::new();
    let mut body = String::new();
    let mut consumed = 0;
    let mut in_header = true;
    for line in r.lines() {
        let line = line?;
        if in_header {
            if let Some(rest) = line.strip_prefix('#') {
                consumed += 1;
                let rest = rest.trim_start();
                match rest.split_once(':') {
                    Some((k, v)) => meta.push((k.trim().to_string(), v.trim().to_string())),
                    None => meta.push((String::new(), rest.to_string())),
                }
                continue;
            }
            in_header = false;
        }
        body.push_str(&line);
        body.push('\n');
    }
    Ok((meta, body, consumed))
}

fn parse_f64(s: &str, line: usize, column: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: cannot parse {s:?} as a number"),
    })
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory, meta: &[(String, String)]) -> Result<()> {
    write_meta(w, meta)?;
    let warn: Metadata = traj.warnings.iter().map(|s| ("warning".to_string(), s.clone())).collect();
    write_meta(w, &warn)?;
    let mut header = vec!["t".to_string(), "pop_emitter".to_string()];
    header.extend((1..=traj.mode_populations.len()).map(|i| format!("pop_mode_{i}")));
    header.push("trace_drift".into());
    if traj.min_eigenvalue.is_some() {
        header.push("min_eig".into());
    }
    let mut out = csv::Writer::from_writer(&mut *w);
    out.write_record(&header).map_err(|e| csv_error(e, 0))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt(traj.times[k]), fmt(traj.emitter_population[k])];
        row.extend(traj.mode_populations.iter().map(|s| fmt(s[k])));
        row.push(fmt(traj.trace_drift[k]));
        if let Some(e) = &traj.min_eigenvalue {
            row.push(fmt(e[k]));
        }
        out.write_record(&row).map_err(|e| csv_error(e, 0))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<(Trajectory, Metadata)> {
    let (meta, body, offset) = split_meta(r)?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, offset))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 3 || header[0] != "t" || header[1] != "pop_emitter" {
        return Err(Error::Parse {
            line: offset + 1,
            message: "expected header starting with t,pop_emitter".into(),
        });
    }
    let has_eig = header.last().map(String::as_str) == Some("min_eig");
    let drift_col = if has_eig { header.len() - 2 } else { header.len() - 1 };
    if header[drift_col] != "trace_drift" {
        return Err(Error::Parse {
            line: offset + 1,
            message: "missing trace_drift column".into(),
        });
    }
    let n_modes = drift_col - 2;
    let mut traj = Trajectory {
        mode_populations: vec![vec![]; n_modes],
        min_eigenvalue: has_eig.then(Vec::new),
        warnings: meta
            .iter()
            .filter(|(k, _)| k == "warning")
            .map(|(_, v)| v.clone())
            .collect(),
        ..Default::default()
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(e, offset))?;
        let line = offset + k + 2;
        let val = |i: usize| parse_f64(&rec[i], line, &header[i]);
        traj.times.push(val(0)?);
        traj.emitter_population.push(val(1)?);
        for m in 0..n_modes {
            traj.mode_populations[m].push(val(2 + m)?);
        }
        traj.trace_drift.push(val(drift_col)?);
        if let Some(e) = traj.min_eigenvalue.as_mut() {
            e.push(val(drift_col + 1)?);
        }
    }
    if traj.times.windows(2).any(|w| w[0].is_nan() || w[1].is_nan() || w[1] <= w[0]) {
        return Err(Error::invalid("trajectory times are not ascending"));
    }
    Ok((traj, meta))
}

pub fn write_bath_csv<W: Write>(w: &mut W, bath: &DiscretizedBath, meta: &[(String, String)]) -> Result<()> {
    write_meta(w, meta)?;
    writeln!(w, "# range: {} {}", fmt(bath.lo), fmt(bath.hi))?;
    let mut out = csv::Writer::from_writer(&mut *w);
    out.write_record(["omega", "g"]).map_err(|e| csv_error(e, 0))?;
    for (o, g) in bath.omegas.iter().zip(&bath.gs) {
        out.write_record([fmt(*o), fmt(*g)]).map_err(|e| csv_error(e, 0))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bath_csv<R: BufRead>(r: R) -> Result<DiscretizedBath> {
    let (meta, body, offset) = split_meta(r)?;
    let range = meta
        .iter()
        .find(|(k, _)| k == "range")
        .and_then(|(_, v)| {
            let mut it = v.split_whitespace().map(|s| s.parse::<f64>());
            Some((it.next()?.ok()?, it.next()?.ok()?))
        })
        .ok_or_else(|| Error::Parse {
            line: offset,
            message: "missing '# range: lo hi' metadata".into(),
        })?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let mut bath = DiscretizedBath {
        omegas: vec![],
        gs: vec![],
        lo: range.0,
        hi: range.1,
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(e, offset))?;
        let line = offset + k + 2;
        bath.omegas.push(parse_f64(&rec[0], line, "omega")?);
        bath.gs.push(parse_f64(&rec[1], line, "g")?);
    }
    Ok(bath)
}

pub fn write_error_csv<W: Write>(w: &mut W, series: &ErrorSeries, meta: &[(String, String)]) -> Result<()> {
    let s = series.summary();
    let mut meta = meta.to_vec();
    meta.push(("max_eps".into(), fmt(s.max)));
    meta.push(("mean_eps".into(), fmt(s.mean)));
    meta.push(("flagged_fraction".into(), fmt(s.flagged_fraction)));
    write_meta(w, &meta)?;
    let mut out = csv::Writer::from_writer(&mut *w);
    out.write_record(["t", "eps_r", "flag"]).map_err(|e| csv_error(e, 0))?;
    for ((t, e), f) in series.times.iter().zip(&series.eps).zip(&series.flagged) {
        out.write_record([fmt(*t), fmt(*e), (*f as u8).to_string()])
            .map_err(|e| csv_error(e, 0))?;
    }
    out.flush()?;
    Ok(())
}
