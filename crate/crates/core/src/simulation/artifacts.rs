//! CSV run artifacts and the comparison between two runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{m_pow_n, Metrics};
use crate::scalar::Scalar;

pub const TRAVEL_TIMES: &str = "travel_times.csv";
pub const TOTALS_VS_N: &str = "totals_vs_n.csv";
pub const COMPUTATIONS: &str = "computations.csv";
pub const REPORT: &str = "report.txt";
pub const COMPARISON: &str = "comparison.csv";
pub const COMPARISON_SUMMARY: &str = "comparison.txt";

const TRAVEL_HEADER: [&str; 4] = ["cav_id", "t_start", "t_finish", "travel_time"];
const TOTALS_HEADER: [&str; 2] = ["n", "cumulative_total"];
const COMPUTATIONS_HEADER: [&str; 4] = ["event_index", "n_cavs", "evaluations", "m_pow_n"];
const COMPARISON_HEADER: [&str; 3] = ["n", "cumulative_total_a", "cumulative_total_b"];

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeRow {
    pub cav_id: u32,
    pub t_start: f64,
    pub t_finish: f64,
    pub travel_time: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputationRow {
    pub event_index: usize,
    pub n_cavs: usize,
    pub evaluations: usize,
    pub m_pow_n: BigUint,
}

/// Tabular content of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub travel_times: Vec<TravelTimeRow>,
    pub totals: Vec<(usize, f64)>,
    pub computations: Vec<ComputationRow>,
}

/// Six decimals, the precision of every real column.
fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// Parses a value as written by [`fixed`] so summaries built in memory and
/// read back from disk agree.
fn round6(x: f64) -> f64 {
    fixed(x).parse().expect("formatted float")
}

impl RunSummary {
    pub fn from_metrics<T: Scalar>(metrics: &Metrics<T>) -> Self {
        Self {
            travel_times: metrics
                .trips
                .iter()
                .map(|r| TravelTimeRow {
                    cav_id: r.cav.0,
                    t_start: round6(r.t_start.as_f64()),
                    t_finish: round6(r.t_finish.as_f64()),
                    travel_time: round6(r.travel_time.as_f64()),
                })
                .collect(),
            totals: metrics
                .cumulative_totals()
                .into_iter()
                .map(|(n, t)| (n, round6(t.as_f64())))
                .collect(),
            computations: metrics
                .events
                .iter()
                .map(|e| ComputationRow {
                    event_index: e.event_index,
                    n_cavs: e.n_cavs,
                    evaluations: e.evaluations,
                    m_pow_n: m_pow_n(metrics.m, e.n_cavs),
                })
                .collect(),
        }
    }

    pub fn final_total(&self) -> f64 {
        self.totals.last().map_or(0.0, |t| t.1)
    }

    pub fn total_evaluations(&self) -> usize {
        self.computations.iter().map(|c| c.evaluations).sum()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), ArtifactError> {
    let csv_err = |e: csv::Error| ArtifactError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the three metric tables and a plain-text report into `dir`.
pub fn write_artifacts<T: Scalar>(metrics: &Metrics<T>, dir: &Path) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let summary = RunSummary::from_metrics(metrics);
    write_csv(
        &dir.join(TRAVEL_TIMES),
        &TRAVEL_HEADER,
        summary.travel_times.iter().map(|r| {
            vec![
                r.cav_id.to_string(),
                fixed(r.t_start),
                fixed(r.t_finish),
                fixed(r.travel_time),
            ]
        }),
    )?;
    write_csv(
        &dir.join(TOTALS_VS_N),
        &TOTALS_HEADER,
        summary.totals.iter().map(|&(n, t)| vec![n.to_string(), fixed(t)]),
    )?;
    write_csv(
        &dir.join(COMPUTATIONS),
        &COMPUTATIONS_HEADER,
        summary.computations.iter().map(|c| {
            vec![
                c.event_index.to_string(),
                c.n_cavs.to_string(),
                c.evaluations.to_string(),
                c.m_pow_n.to_string(),
            ]
        }),
    )?;
    let path = dir.join(REPORT);
    fs::write(&path, run_report(metrics, &summary)).map_err(io_err(&path))
}

fn run_report<T: Scalar>(metrics: &Metrics<T>, summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode: {}", metrics.mode);
    let _ = writeln!(s, "candidate routes per cav: {}", metrics.m);
    let _ = writeln!(s, "trips submitted: {}", metrics.submitted);
    let _ = writeln!(s, "trips completed: {}", metrics.trips.len());
    let _ = writeln!(s, "trips rejected: {}", metrics.rejected.len());
    for (cav, why) in &metrics.rejected {
        let _ = writeln!(s, "  {cav}: {why}");
    }
    let _ = writeln!(s, "total travel time: {}", fixed(summary.final_total()));
    let _ = writeln!(s, "travel time evaluations: {}", metrics.total_evaluations());
    let _ = writeln!(s, "re-route changes: {}", metrics.reroute_changes());
    if let Some(last) = summary.computations.last() {
        let _ = writeln!(s, "assignments at last arrival (M^N): {}", last.m_pow_n);
    }
    s
}

fn read_table(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, ArtifactError> {
    let malformed = |line: u64, message: String| ArtifactError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => ArtifactError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => malformed(1, e.to_string()),
    })?;
    let found = r.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(malformed(
            1,
            format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<F: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<F, ArtifactError> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("column {name} is not a valid value"),
        })
}

/// Loads the tables written by [`write_artifacts`].
pub fn read_run(dir: &Path) -> Result<RunSummary, ArtifactError> {
    let p = dir.join(TRAVEL_TIMES);
    let travel_times = read_table(&p, &TRAVEL_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(TravelTimeRow {
                cav_id: field(&p, line, &r, 0, "cav_id")?,
                t_start: field(&p, line, &r, 1, "t_start")?,
                t_finish: field(&p, line, &r, 2, "t_finish")?,
                travel_time: field(&p, line, &r, 3, "travel_time")?,
            })
        })
        .collect::<Result<Vec<_>, ArtifactError>>()?;
    let p = dir.join(TOTALS_VS_N);
    let totals = read_table(&p, &TOTALS_HEADER)?
        .into_iter()
        .map(|(line, r)| Ok((field(&p, line, &r, 0, "n")?, field(&p, line, &r, 1, "cumulative_total")?)))
        .collect::<Result<Vec<_>, ArtifactError>>()?;
    let p = dir.join(COMPUTATIONS);
    let computations = read_table(&p, &COMPUTATIONS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(ComputationRow {
                event_index: field(&p, line, &r, 0, "event_index")?,
                n_cavs: field(&p, line, &r, 1, "n_cavs")?,
                evaluations: field(&p, line, &r, 2, "evaluations")?,
                m_pow_n: field(&p, line, &r, 3, "m_pow_n")?,
            })
        })
        .collect::<Result<Vec<_>, ArtifactError>>()?;
    Ok(RunSummary {
        travel_times,
        totals,
        computations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub total_a: f64,
    pub total_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub final_a: f64,
    pub final_b: f64,
    /// Reduction of `a`'s total relative to `b`'s, in percent.
    pub improvement_pct: f64,
    pub evaluations_a: usize,
    pub evaluations_b: usize,
    /// `M^N` at the last arrival of run `a`.
    pub m_pow_n: Option<BigUint>,
}

/// Compares run `a` against reference run `b` of the same trips.
pub fn compare_runs(a: &RunSummary, b: &RunSummary) -> Result<ComparisonReport, ArtifactError> {
    let mut common = 0;
    for ra in &a.travel_times {
        if let Some(rb) = b.travel_times.iter().find(|r| r.cav_id == ra.cav_id) {
            common += 1;
            if (ra.t_start - rb.t_start).abs() > 1e-6 {
                return Err(ArtifactError::Mismatch(format!(
                    "cav {} starts at {} in one run and {} in the other",
                    ra.cav_id, ra.t_start, rb.t_start
                )));
            }
        }
    }
    if common == 0 && !(a.travel_times.is_empty() && b.travel_times.is_empty()) {
        return Err(ArtifactError::Mismatch("no trip appears in both runs".into()));
    }
    let rows = a
        .totals
        .iter()
        .zip(&b.totals)
        .map(|(&(n, ta), &(_, tb))| ComparisonRow {
            n,
            total_a: ta,
            total_b: tb,
        })
        .collect();
    let (final_a, final_b) = (a.final_total(), b.final_total());
    let improvement_pct = if final_b > 0.0 {
        (final_b - final_a) / final_b * 100.0
    } else {
        0.0
    };
    Ok(ComparisonReport {
        rows,
        final_a,
        final_b,
        improvement_pct,
        evaluations_a: a.total_evaluations(),
        evaluations_b: b.total_evaluations(),
        m_pow_n: a.computations.last().map(|c| c.m_pow_n.clone()),
    })
}

impl ComparisonReport {
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "total travel time a: {}", fixed(self.final_a));
        let _ = writeln!(s, "total travel time b: {}", fixed(self.final_b));
        let _ = writeln!(s, "improvement of a over b: {:.2}%", self.improvement_pct);
        let _ = writeln!(s, "evaluations a: {}", self.evaluations_a);
        let _ = writeln!(s, "evaluations b: {}", self.evaluations_b);
        if let Some(m) = &self.m_pow_n {
            let _ = writeln!(s, "exhaustive assignments at last arrival of a: {m}");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), ArtifactError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_csv(
            &dir.join(COMPARISON),
            &COMPARISON_HEADER,
            self.rows
                .iter()
                .map(|r| vec![r.n.to_string(), fixed(r.total_a), fixed(r.total_b)]),
        )?;
        let path = dir.join(COMPARISON_SUMMARY);
        fs::write(&path, self.summary_text()).map_err(io_err(&path))
    }
}
