use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::checks::{CheckResult, Verdict};
use super::config::{Check, ScenarioSpec};
use crate::data::Dataset;
use crate::error::{LabError, Result};
use crate::trainer::{Snapshot, Termination};

/// One line of the cross-scenario summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub id: String,
    pub final_gamma_tilde: Option<f64>,
    pub final_dir_gap: Option<f64>,
    /// Bound total at the optimal margin minus the measured target error.
    pub bound_margin: Option<f64>,
    pub verdicts: Vec<(Check, Verdict)>,
    /// Set when the scenario could not be run at all.
    pub error: Option<String>,
}

pub const SUMMARY_HEADER: [&str; 7] =
    ["id", "final_gamma_tilde", "final_dir_gap", "bound_margin", "fail_count", "verdicts", "error"];

impl SummaryRow {
    pub fn from_run(spec: &ScenarioSpec, snapshots: &[Snapshot], results: &[CheckResult]) -> Self {
        let last = snapshots.last();
        let bound_margin = results.iter().find(|r| r.check == Check::TargetBound).and_then(|r| {
            let total: f64 = r.get("total_at_opt")?.parse().ok()?;
            let err: f64 = r.get("target_error")?.parse().ok()?;
            Some(total - err)
        });
        Self {
            id: spec.id.clone(),
            final_gamma_tilde: last.and_then(|s| s.gamma_tilde),
            final_dir_gap: last.and_then(|s| s.dir_gap),
            bound_margin,
            verdicts: results.iter().map(|r| (r.check, r.verdict)).collect(),
            error: None,
        }
    }

    pub fn errored(id: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            final_gamma_tilde: None,
            final_dir_gap: None,
            bound_margin: None,
            verdicts: Vec::new(),
            error: Some(error.into()),
        }
    }

    /// FAIL and ERROR verdicts, plus one for a scenario that never ran.
    pub fn fail_count(&self) -> usize {
        self.verdicts.iter().filter(|(_, v)| v.is_failure()).count() + usize::from(self.error.is_some())
    }

    fn verdict_string(&self) -> String {
        self.verdicts.iter().map(|(c, v)| format!("{}={}", c.name(), v.name())).collect::<Vec<_>>().join(";")
    }

    fn fields(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        [
            self.id.clone(),
            opt(self.final_gamma_tilde),
            opt(self.final_dir_gap),
            opt(self.bound_margin),
            self.fail_count().to_string(),
            self.verdict_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

#[allow(clippy::too_many_arguments)]
pub fn write_report<W: Write>(
    out: &mut W,
    spec: &ScenarioSpec,
    data: &Dataset,
    snapshots: &[Snapshot],
    termination: Option<Termination>,
    summary: &SummaryRow,
    results: &[CheckResult],
    notes: &[String],
    train_error: Option<&str>,
) -> Result<()> {
    writeln!(out, "[run]")?;
    writeln!(out, "id = {}", spec.id)?;
    writeln!(out, "seed = {}", spec.seed)?;
    writeln!(out, "generator = {}", spec.generator.name())?;
    writeln!(out, "n = {}", data.len())?;
    writeln!(out, "d = {}", data.dim())?;
    writeln!(out, "eta0 = {:e}", spec.train.eta0)?;
    writeln!(out, "schedule = {}", spec.train.schedule.name())?;
    writeln!(out, "lambda = {:e}", spec.train.lambda)?;
    writeln!(out, "loss = {}", spec.train.loss.name())?;
    writeln!(out, "max_steps = {}", spec.train.max_steps)?;
    if let Some(last) = snapshots.last() {
        writeln!(out, "final_t = {}", last.t)?;
        writeln!(out, "final_log_risk = {:.16e}", last.log_risk)?;
        writeln!(out, "final_norm_theta = {:.16e}", last.norm_theta)?;
    }
    writeln!(out, "termination = {}", termination.map_or("none", |t| t.name()))?;
    writeln!(out, "train_error = {}", train_error.unwrap_or(""))?;
    for note in notes {
        writeln!(out, "note = {note}")?;
    }
    writeln!(out)?;

    writeln!(out, "[summary]")?;
    writeln!(out, "final_gamma_tilde = {}", opt_f64(summary.final_gamma_tilde))?;
    writeln!(out, "final_dir_gap = {}", opt_f64(summary.final_dir_gap))?;
    writeln!(out, "bound_margin = {}", opt_f64(summary.bound_margin))?;
    writeln!(out, "fail_count = {}", summary.fail_count())?;
    writeln!(out)?;

    for r in results {
        writeln!(out, "[check.{}]", r.check.name())?;
        writeln!(out, "verdict = {}", r.verdict.name())?;
        writeln!(out, "note = {}", r.note.replace('\n', " "))?;
        for (k, v) in &r.metrics {
            writeln!(out, "{k} = {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Rebuilds a summary row from a written report.
pub fn parse_report(text: &str) -> Result<SummaryRow> {
    let mut section = String::new();
    let mut row = SummaryRow::errored("", "");
    row.error = None;
    let mut current: Option<Check> = None;
    let num = |v: &str| -> Option<f64> { (!v.is_empty()).then(|| v.parse().ok()).flatten() };
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            current = name.strip_prefix("check.").map(|c| {
                Check::parse(c).ok_or_else(|| LabError::structural(format!("unknown check section `{name}`")))
            }).transpose()?;
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(LabError::structural(format!("malformed report line `{line}`")));
        };
        let (k, v) = (k.trim(), v.trim());
        match (section.as_str(), k) {
            ("run", "id") => row.id = v.to_string(),
            ("run", "train_error") if !v.is_empty() => row.error = Some(v.to_string()),
            ("summary", "final_gamma_tilde") => row.final_gamma_tilde = num(v),
            ("summary", "final_dir_gap") => row.final_dir_gap = num(v),
            ("summary", "bound_margin") => row.bound_margin = num(v),
            (_, "verdict") => {
                if let Some(c) = current {
                    let verdict =
                        Verdict::parse(v).ok_or_else(|| LabError::structural(format!("unknown verdict `{v}`")))?;
                    row.verdicts.push((c, verdict));
                }
            }
            _ => {}
        }
    }
    if row.id.is_empty() {
        return Err(LabError::structural("report has no run id"));
    }
    // A training error is already counted through the ERROR verdicts.
    if !row.verdicts.is_empty() {
        row.error = None;
    }
    Ok(row)
}

/// Collects every `report.txt` below `dir`.
pub fn collect_reports(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut files = Vec::new();
    find_reports(dir, &mut files)?;
    let mut rows = files
        .iter()
        .map(|f| parse_report(&fs::read_to_string(f)?))
        .collect::<Result<Vec<_>>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_reports(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == super::scenario::REPORT_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|a, b| a.id.cmp(&b.id));
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table for the terminal.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(SummaryRow::fields).collect();
    let mut widths = SUMMARY_HEADER.map(str::len);
    for r in &body {
        for (w, f) in widths.iter_mut().zip(r) {
            *w = (*w).max(f.len());
        }
    }
    let mut s = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(SUMMARY_HEADER.to_vec());
    for r in &body {
        line(r.iter().map(String::as_str).collect());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, verdicts: Vec<(Check, Verdict)>) -> SummaryRow {
        SummaryRow {
            id: id.into(),
            final_gamma_tilde: Some(0.5),
            final_dir_gap: None,
            bound_margin: Some(0.25),
            verdicts,
            error: None,
        }
    }

    #[test]
    fn fail_count_includes_errors() {
        let r = row("a", vec![(Check::NormGrowth, Verdict::Pass), (Check::Direction, Verdict::Fail), (Check::NonsepLimit, Verdict::Error)]);
        assert_eq!(r.fail_count(), 2);
        assert_eq!(SummaryRow::errored("b", "boom").fail_count(), 1);
    }

    #[test]
    fn report_round_trip() {
        let text = "[run]\nid = demo\ntrain_error =\n\n[summary]\nfinal_gamma_tilde = 5e-1\nfinal_dir_gap =\n\
                    bound_margin = 2.5e-1\nfail_count = 1\n\n[check.norm_growth]\nverdict = PASS\nnote = ok\n\n\
                    [check.direction]\nverdict = FAIL\nnote = x\nkl = 0.1\n\n[certificate]\nseparable = true\n";
        let parsed = parse_report(text).unwrap();
        assert_eq!(parsed, row("demo", vec![(Check::NormGrowth, Verdict::Pass), (Check::Direction, Verdict::Fail)]));
    }

    #[test]
    fn rows_sort_by_id_and_table_aligns() {
        let mut rows = vec![row("b", vec![]), row("a", vec![])];
        sort_rows(&mut rows);
        assert_eq!(rows[0].id, "a");
        let table = summary_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.starts_with("id"));
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("id,final_gamma_tilde"));
    }
}
