//! CSV and JSON files written by the harness.
//!
//! | file | columns |
//! |------|---------|
//! | `metrics.csv` | `agent,point,series,seed,x,y` |
//! | `runs.csv` | `agent,point,seed,status,stop,samples_total,samples_top,error` |
//! | `runs/<agent>/<point>/seed<k>/trace.csv` | `t,level,state_0..state_{n-1},action,reward,sigma` |
//! | `runs/<agent>/<point>/seed<k>/heatmap_l<level>.csv` | one row per `y` (from 0), one column per `x` |
//!
//! Numbers use the shortest representation that round-trips, so files are
//! locale independent and identical across reruns.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentTrace;

use super::metrics::MetricRow;
use super::HarnessError;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 6] = ["agent", "point", "series", "seed", "x", "y"];
pub const RUNS_HEADER: [&str; 8] = [
    "agent",
    "point",
    "seed",
    "status",
    "stop",
    "samples_total",
    "samples_top",
    "error",
];

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, HarnessError> {
    w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))
}

pub fn trace_csv(trace: &AgentTrace) -> Result<Vec<u8>, HarnessError> {
    let dim = trace.records.first().map_or(0, |r| r.state.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "level".to_string()];
    header.extend((0..dim).map(|i| format!("state_{i}")));
    header.extend(["action", "reward", "sigma"].map(String::from));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.t.to_string(), r.level.to_string()];
        row.extend(r.state.iter().map(f64::to_string));
        row.extend([r.action.to_string(), r.reward.to_string(), r.sigma.to_string()]);
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn heatmap_csv(values: &[f64], width: usize) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in values.chunks(width) {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    finish(w)
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.agent.clone(),
            r.point.clone(),
            r.series.clone(),
            r.seed.to_string(),
            r.x.to_string(),
            r.y.to_string(),
        ])?;
    }
    finish(w)
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str], what: &str) -> Result<(), HarnessError> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(HarnessError::Csv(format!("{what}: unexpected header {header:?}")));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, HarnessError> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| HarnessError::Csv(format!("{what} line {line}: bad field {i}")))
}

pub fn parse_metrics(bytes: &[u8]) -> Result<Vec<MetricRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    check_header(&mut rdr, &METRICS_HEADER, "metrics.csv")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(MetricRow {
            agent: field(&rec, 0, "metrics.csv")?,
            point: field(&rec, 1, "metrics.csv")?,
            series: field(&rec, 2, "metrics.csv")?,
            seed: field(&rec, 3, "metrics.csv")?,
            x: field(&rec, 4, "metrics.csv")?,
            y: field(&rec, 5, "metrics.csv")?,
        });
    }
    Ok(out)
}

/// Outcome of one run as listed in runs.csv and summary.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub agent: String,
    pub point: String,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    /// Stop reason, empty for failed runs.
    pub stop: String,
    pub samples_total: usize,
    pub samples_top: usize,
    pub error: String,
}

impl RunStatus {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn runs_csv(runs: &[RunStatus]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_HEADER)?;
    for r in runs {
        w.write_record([
            r.agent.clone(),
            r.point.clone(),
            r.seed.to_string(),
            r.status.clone(),
            r.stop.clone(),
            r.samples_total.to_string(),
            r.samples_top.to_string(),
            r.error.clone(),
        ])?;
    }
    finish(w)
}

pub fn parse_runs(bytes: &[u8]) -> Result<Vec<RunStatus>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    check_header(&mut rdr, &RUNS_HEADER, "runs.csv")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(RunStatus {
            agent: field(&rec, 0, "runs.csv")?,
            point: field(&rec, 1, "runs.csv")?,
            seed: field(&rec, 2, "runs.csv")?,
            status: field(&rec, 3, "runs.csv")?,
            stop: field(&rec, 4, "runs.csv")?,
            samples_total: field(&rec, 5, "runs.csv")?,
            samples_top: field(&rec, 6, "runs.csv")?,
            error: field(&rec, 7, "runs.csv")?,
        });
    }
    Ok(out)
}

/// Median and range over seeds at one x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub x: f64,
    pub n: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub agent: String,
    pub point: String,
    pub series: String,
    pub bands: Vec<Band>,
}

/// Non-finite values (targets never reached) serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub runs: usize,
    pub failed: usize,
    pub failures: Vec<RunStatus>,
    pub series: Vec<SeriesSummary>,
}

impl Summary {
    pub fn find(&self, agent: &str, point: &str, series: &str) -> Option<&SeriesSummary> {
        self.series
            .iter()
            .find(|s| s.agent == agent && s.point == point && s.series == series)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups rows by (agent, point, series, x) and reduces over seeds.
pub fn summarize(rows: &[MetricRow], runs: &[RunStatus]) -> Summary {
    type Key = (String, String, String);
    let mut groups: BTreeMap<Key, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.agent.clone(), r.point.clone(), r.series.clone()))
            .or_default()
            .push((r.x, r.y));
    }
    let series = groups
        .into_iter()
        .map(|((agent, point, series), mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let bands = pts
                .chunk_by(|a, b| a.0 == b.0)
                .map(|chunk| {
                    let ys: Vec<f64> = chunk.iter().map(|p| p.1).collect();
                    Band {
                        x: chunk[0].0,
                        n: ys.len(),
                        median: median(&ys),
                        min: ys.iter().copied().fold(f64::INFINITY, f64::min),
                        max: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect();
            SeriesSummary {
                agent,
                point,
                series,
                bands,
            }
        })
        .collect();
    let failures: Vec<RunStatus> = runs.iter().filter(|r| !r.ok()).cloned().collect();
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        runs: runs.len(),
        failed: failures.len(),
        failures,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TraceRecord;

    fn row(series: &str, seed: u64, x: f64, y: f64) -> MetricRow {
        MetricRow {
            agent: "rmax".into(),
            point: "base".into(),
            series: series.into(),
            seed,
            x,
            y,
        }
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let rows = vec![row("a", 0, 0.1, 1.0 / 3.0), row("b,c", 1, 2.0, f64::INFINITY), row("a", 2, 1e-300, -0.0)];
        let back = parse_metrics(&metrics_csv(&rows).unwrap()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.series, b.series);
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
    }

    #[test]
    fn medians_and_bands() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        let rows = vec![row("v", 0, 1.0, 5.0), row("v", 1, 1.0, 7.0), row("v", 0, 0.0, 1.0), row("v", 2, 1.0, 6.0)];
        let s = summarize(&rows, &[]);
        let bands = &s.find("rmax", "base", "v").unwrap().bands;
        assert_eq!(bands.len(), 2);
        assert_eq!(bands[0], Band { x: 0.0, n: 1, median: 1.0, min: 1.0, max: 1.0 });
        assert_eq!(bands[1], Band { x: 1.0, n: 3, median: 6.0, min: 5.0, max: 7.0 });
    }

    #[test]
    fn trace_header_names_state_columns() {
        let mut trace = AgentTrace::new(2);
        trace.records.push(TraceRecord {
            t: 0,
            level: 1,
            state: vec![0.5, 1.0],
            action: 3,
            reward: -1.0,
            sigma: 0.25,
            terminal: false,
        });
        let text = String::from_utf8(trace_csv(&trace).unwrap()).unwrap();
        assert_eq!(text, "t,level,state_0,state_1,action,reward,sigma\n0,1,0.5,1,3,-1,0.25\n");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn failed_runs_are_listed() {
        let runs = vec![
            RunStatus {
                agent: "rmax".into(),
                point: "base".into(),
                seed: 0,
                status: "ok".into(),
                stop: "total_budget".into(),
                samples_total: 10,
                samples_top: 4,
                error: String::new(),
            },
            RunStatus {
                agent: "gp_vi".into(),
                point: "base".into(),
                seed: 0,
                status: "failed".into(),
                stop: String::new(),
                samples_total: 0,
                samples_top: 0,
                error: "boom, \"quoted\"".into(),
            },
        ];
        let back = parse_runs(&runs_csv(&runs).unwrap()).unwrap();
        assert_eq!(back, runs);
        let s = summarize(&[], &back);
        assert_eq!((s.runs, s.failed), (2, 1));
    }
}
