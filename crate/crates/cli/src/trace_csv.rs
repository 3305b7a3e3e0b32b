//! Versioned CSV traces and the merged report format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use imela_core::{Method, SolverTrace};

pub const TRACE_SCHEMA: &str = "imela-trace";
pub const REPORT_SCHEMA: &str = "imela-report";
pub const SCHEMA_VERSION: &str = "v1";
pub const TRACE_HEADER: &str = "t,inner_steps,cum_oracle,obj,infeas,stat,comp_slack,lambda_norm,branch,wall_ms";

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Renders a trace. The wall-clock column stays empty unless `wall_clock`
/// is set, which keeps the bytes reproducible.
pub fn render_trace(trace: &SolverTrace<f64>, wall_clock: bool) -> String {
    let mut s = format!("# {TRACE_SCHEMA} {SCHEMA_VERSION} method={}\n{TRACE_HEADER}\n", trace.method);
    for r in &trace.records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.inner_steps,
            r.cum_oracle,
            num(r.objective),
            num(r.infeasibility),
            opt(r.stationarity),
            opt(r.comp_slack),
            opt(r.lambda_norm),
            r.branch.map(|b| b.name()).unwrap_or(""),
            if wall_clock { format!("{:.3}", r.wall_ms) } else { String::new() },
        )
        .expect("writing to a String");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub inner_steps: usize,
    pub cum_oracle: u64,
    pub obj: f64,
    pub infeas: f64,
    pub stat: Option<f64>,
    pub comp_slack: Option<f64>,
    pub lambda_norm: Option<f64>,
    pub branch: Option<String>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub method: Method,
    pub rows: Vec<TraceRow>,
}

fn check_schema(line: Option<&str>, schema: &str) -> Result<BTreeMap<String, String>> {
    let line = line.ok_or_else(|| anyhow!("empty file"))?;
    let mut toks = line
        .strip_prefix('#')
        .ok_or_else(|| anyhow!("missing schema line"))?
        .split_whitespace();
    if toks.next() != Some(schema) {
        bail!("not an {schema} file");
    }
    match toks.next() {
        Some(SCHEMA_VERSION) => {}
        Some(v) => bail!("unsupported {schema} schema version '{v}' (this build reads {SCHEMA_VERSION})"),
        None => bail!("schema line has no version"),
    }
    Ok(toks.filter_map(|t| t.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

fn parse_opt(cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        Ok(Some(cell.parse()?))
    }
}

pub fn parse_trace(text: &str) -> Result<TraceTable> {
    let mut lines = text.lines();
    let meta = check_schema(lines.next(), TRACE_SCHEMA)?;
    let method: Method = meta
        .get("method")
        .ok_or_else(|| anyhow!("schema line does not name the method"))?
        .parse()?;
    if lines.next() != Some(TRACE_HEADER) {
        bail!("unexpected column header");
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 10 {
            bail!("line {}: expected 10 cells, got {}", k + 3, c.len());
        }
        let row = (|| -> Result<TraceRow> {
            Ok(TraceRow {
                t: c[0].parse()?,
                inner_steps: c[1].parse()?,
                cum_oracle: c[2].parse()?,
                obj: c[3].parse()?,
                infeas: c[4].parse()?,
                stat: parse_opt(c[5])?,
                comp_slack: parse_opt(c[6])?,
                lambda_norm: parse_opt(c[7])?,
                branch: (!c[8].is_empty()).then(|| c[8].to_string()),
                wall_ms: parse_opt(c[9])?,
            })
        })()
        .with_context(|| format!("line {}", k + 3))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("trace has no rows");
    }
    if rows.windows(2).any(|w| w[1].cum_oracle < w[0].cum_oracle) {
        bail!("cum_oracle is not non-decreasing");
    }
    Ok(TraceTable { method, rows })
}

pub fn read_trace(path: &Path) -> Result<TraceTable> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("{}", path.display()))
}

/// Resamples every trace onto the union of their `cum_oracle` values,
/// carrying the last row at or before each grid point forward. Cells before
/// a trace's first row are empty.
pub fn merge_traces(traces: &[TraceTable]) -> Result<String> {
    if traces.is_empty() {
        bail!("no traces to merge");
    }
    let mut labels: Vec<String> = Vec::new();
    for t in traces {
        let base = t.method.name();
        let n = labels.iter().filter(|l| l.as_str() == base || l.starts_with(&format!("{base}_"))).count();
        labels.push(if n == 0 { base.to_string() } else { format!("{base}_{}", n + 1) });
    }
    let mut grid: Vec<u64> = traces.iter().flat_map(|t| t.rows.iter().map(|r| r.cum_oracle)).collect();
    grid.sort_unstable();
    grid.dedup();

    let mut out = format!("# {REPORT_SCHEMA} {SCHEMA_VERSION}\ncum_oracle");
    for l in &labels {
        write!(out, ",{l}_obj,{l}_infeas,{l}_stat,{l}_comp_slack").expect("writing to a String");
    }
    out.push('\n');
    let mut cursors = vec![None::<usize>; traces.len()];
    for &g in &grid {
        out.push_str(&g.to_string());
        for (t, cur) in traces.iter().zip(&mut cursors) {
            let mut i = cur.map_or(0, |c| c + 1);
            while i < t.rows.len() && t.rows[i].cum_oracle <= g {
                *cur = Some(i);
                i += 1;
            }
            match cur.map(|c| &t.rows[c]) {
                Some(r) => write!(out, ",{},{},{},{}", num(r.obj), num(r.infeas), opt(r.stat), opt(r.comp_slack)),
                None => write!(out, ",,,,"),
            }
            .expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(method: Method, pts: &[(u64, f64)]) -> TraceTable {
        TraceTable {
            method,
            rows: pts
                .iter()
                .enumerate()
                .map(|(t, &(c, v))| TraceRow {
                    t,
                    inner_steps: 0,
                    cum_oracle: c,
                    obj: v,
                    infeas: 0.0,
                    stat: Some(v),
                    comp_slack: Some(0.0),
                    lambda_norm: Some(0.0),
                    branch: None,
                    wall_ms: None,
                })
                .collect(),
        }
    }

    #[test]
    fn schema_versions() {
        let ok = format!("# imela-trace v1 method=ssg\n{TRACE_HEADER}\n0,0,0,1e0,0e0,,,,,\n");
        let t = parse_trace(&ok).unwrap();
        assert_eq!(t.method, Method::Ssg);
        assert_eq!(t.rows[0].stat, None);
        let v2 = ok.replace("v1", "v2");
        let e = parse_trace(&v2).unwrap_err().to_string();
        assert!(e.contains("unsupported"), "{e}");
        assert!(parse_trace(&ok.replace("# imela-trace v1 method=ssg\n", "")).is_err());
        assert!(parse_trace(&format!("# imela-trace v1 method=ssg\n{TRACE_HEADER}\n")).is_err());
    }

    #[test]
    fn single_trace_resamples_to_itself() {
        let a = table(Method::Imela, &[(0, 3.0), (4, 2.0), (4, 1.5), (9, 1.0)]);
        let m = merge_traces(&[a]).unwrap();
        let lines: Vec<&str> = m.lines().collect();
        assert_eq!(lines.len(), 2 + 3);
        assert_eq!(lines[3], "4,1.5e0,0e0,1.5e0,0e0");
    }

    #[test]
    fn disjoint_grids_carry_forward() {
        let a = table(Method::Imela, &[(0, 3.0), (10, 1.0)]);
        let b = table(Method::Imela, &[(5, 7.0)]);
        let m = merge_traces(&[a, b]).unwrap();
        let lines: Vec<&str> = m.lines().collect();
        assert!(lines[1].contains("imela_2_obj"));
        assert_eq!(lines[2], "0,3e0,0e0,3e0,0e0,,,,");
        assert_eq!(lines[3], "5,3e0,0e0,3e0,0e0,7e0,0e0,7e0,0e0");
        assert_eq!(lines[4], "10,1e0,0e0,1e0,0e0,7e0,0e0,7e0,0e0");
        assert!(merge_traces(&[]).is_err());
    }
}
