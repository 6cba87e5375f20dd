//! Text-entry metrics over trial logs, plus the line-delimited log format.
//!
//! Key inputs are letter, space, backspace and suggestion taps; the submit
//! tap closes a trial but is not a key input. Durations run from the first
//! to the last key-input `t_down`.
//!
//! Log files hold one or more trials. Each trial is a `trial` header record,
//! one `event` record per input and a closing `end` record:
//!
//! ```text
//! {"record":"trial","presented":"the cat","layout":"enlarged","condition":"ar-thumb","group":"ar-thumb B1","block":1,"trial":1,"seed":7}
//! {"record":"event","t_down":0.0,"t_up":140.0,"label":"t","kind":"letter","touch":{"x":32.0,"y":0.0},"del":0,"ins":"t"}
//! {"record":"end","transcribed":"the cat"}
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{KeyLabel, TouchPoint};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("trial has no submit event")]
    MissingSubmit,
    #[error("group `{0}` has no trials")]
    EmptyGroup(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Letter,
    Space,
    Backspace,
    Suggestion,
    Submit,
}

impl InputKind {
    pub fn of(label: KeyLabel) -> InputKind {
        match label {
            KeyLabel::Letter(_) => InputKind::Letter,
            KeyLabel::Space => InputKind::Space,
            KeyLabel::Backspace => InputKind::Backspace,
            KeyLabel::Suggestion(_) => InputKind::Suggestion,
            KeyLabel::Submit => InputKind::Submit,
        }
    }

    pub fn is_key_input(&self) -> bool {
        !matches!(self, InputKind::Submit)
    }
}

/// Edit applied to the end of the text field: drop `removed` characters,
/// then append `inserted`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDelta {
    #[serde(rename = "del")]
    pub removed: usize,
    #[serde(rename = "ins")]
    pub inserted: String,
}

impl TextDelta {
    pub fn insert(s: impl Into<String>) -> TextDelta {
        TextDelta { removed: 0, inserted: s.into() }
    }

    pub fn apply(&self, text: &mut String) {
        for _ in 0..self.removed {
            text.pop();
        }
        text.push_str(&self.inserted);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    pub t_down: f64,
    pub t_up: f64,
    pub label: KeyLabel,
    pub kind: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub touch: Option<TouchPoint>,
    #[serde(flatten)]
    pub delta: TextDelta,
}

/// Provenance of a trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialHeader {
    pub presented: String,
    #[serde(default)]
    pub layout: String,
    #[serde(default)]
    pub condition: String,
    /// Summary column this trial is reported under.
    #[serde(default)]
    pub group: String,
    #[serde(default)]
    pub block: u32,
    #[serde(default)]
    pub trial: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub header: TrialHeader,
    pub events: Vec<InputEvent>,
    pub transcribed: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Trial(TrialHeader),
    Event(InputEvent),
    End { transcribed: String },
}

/// Replays deltas over an empty field.
pub fn replay(events: &[InputEvent]) -> String {
    let mut text = String::new();
    for e in events {
        e.delta.apply(&mut text);
    }
    text
}

impl TrialLog {
    pub fn presented(&self) -> &str {
        &self.header.presented
    }

    pub fn key_inputs(&self) -> impl Iterator<Item = &InputEvent> {
        self.events.iter().filter(|e| e.kind.is_key_input())
    }

    pub fn is_submitted(&self) -> bool {
        self.events.last().is_some_and(|e| e.kind == InputKind::Submit)
    }

    /// Checks ordering, durations, delta shape and replay consistency.
    pub fn validate(&self) -> Result<(), String> {
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t_up >= e.t_down) {
                return Err(format!("event {i}: t_up before t_down"));
            }
            if e.kind != InputKind::of(e.label) {
                return Err(format!("event {i}: kind does not match label `{}`", e.label));
            }
            if e.kind == InputKind::Backspace && (e.delta.removed > 1 || !e.delta.inserted.is_empty()) {
                return Err(format!("event {i}: backspace must remove at most one character"));
            }
        }
        if self.events.windows(2).any(|w| w[1].t_down < w[0].t_down) {
            return Err("events are not ordered by t_down".into());
        }
        if replay(&self.events) != self.transcribed {
            return Err("transcribed text does not match event replay".into());
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        };
        push(&Record::Trial(self.header.clone()));
        for e in &self.events {
            push(&Record::Event(e.clone()));
        }
        push(&Record::End { transcribed: self.transcribed.clone() });
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Serialises several trials into one document.
pub fn trials_to_jsonl(logs: &[TrialLog]) -> String {
    logs.iter().map(TrialLog::to_jsonl).collect()
}

/// Parses every trial in a log document.
pub fn parse_trials(text: &str) -> Result<Vec<TrialLog>, MetricsError> {
    let mut out = Vec::new();
    let mut open: Option<(usize, TrialLog)> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| MetricsError::Parse { line: line_no, message };
        let record: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match (record, open.as_mut()) {
            (Record::Trial(header), None) => {
                open = Some((line_no, TrialLog { header, events: Vec::new(), transcribed: String::new() }));
            }
            (Record::Trial(_), Some(_)) => return Err(err("trial header before previous trial ended".into())),
            (Record::Event(e), Some((_, log))) => log.events.push(e),
            (Record::End { transcribed }, Some(_)) => {
                let (start, mut log) = open.take().expect("open trial");
                log.transcribed = transcribed;
                log.validate().map_err(|m| MetricsError::Parse { line: start, message: m })?;
                out.push(log);
            }
            (_, None) => return Err(err("record outside a trial".into())),
        }
    }
    if let Some((start, _)) = open {
        return Err(MetricsError::Parse { line: start, message: "trial is not terminated".into() });
    }
    Ok(out)
}

pub fn load_trials(path: &Path) -> Result<Vec<TrialLog>, MetricsError> {
    parse_trials(&std::fs::read_to_string(path)?)
}

/// Levenshtein distance over characters with unit costs.
pub fn msd(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// `t_down` of the first and last key inputs.
fn key_span(log: &TrialLog) -> Result<(f64, f64), MetricsError> {
    let mut inputs = log.key_inputs();
    let first = inputs.next().ok_or(MetricsError::Undefined("no key inputs"))?;
    let last = inputs.last().ok_or(MetricsError::Undefined("fewer than two key inputs"))?;
    Ok((first.t_down, last.t_down))
}

pub fn duration_ms(log: &TrialLog) -> Result<f64, MetricsError> {
    key_span(log).map(|(a, b)| b - a)
}

/// Words per minute: `(|T| - 1) / 5` words over the first-to-last key-input span.
pub fn wpm(log: &TrialLog) -> Result<f64, MetricsError> {
    let minutes = duration_ms(log)? / 60_000.0;
    if !(minutes > 0.0) {
        return Err(MetricsError::Undefined("zero entry duration"));
    }
    let chars = char_len(&log.transcribed).saturating_sub(1) as f64;
    Ok(chars / 5.0 / minutes)
}

pub fn backspace_count(log: &TrialLog) -> usize {
    log.events.iter().filter(|e| e.kind == InputKind::Backspace).count()
}

pub fn uncorrected_error_rate(log: &TrialLog) -> Result<f64, MetricsError> {
    if !log.is_submitted() {
        return Err(MetricsError::MissingSubmit);
    }
    let (p, t) = (log.presented(), log.transcribed.as_str());
    let denom = char_len(p).max(char_len(t));
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(msd(p, t) as f64 / denom as f64 * 100.0)
}

/// Like the uncorrected rate, with every backspace counted as one more error
/// in both numerator and denominator.
pub fn corrected_error_rate(log: &TrialLog) -> Result<f64, MetricsError> {
    if !log.is_submitted() {
        return Err(MetricsError::MissingSubmit);
    }
    let (p, t) = (log.presented(), log.transcribed.as_str());
    let bs = backspace_count(log);
    let denom = char_len(p).max(char_len(t)) + bs;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok((msd(p, t) + bs) as f64 / denom as f64 * 100.0)
}

pub fn iki_series(log: &TrialLog) -> Result<Vec<f64>, MetricsError> {
    let downs: Vec<f64> = log.key_inputs().map(|e| e.t_down).collect();
    if downs.len() < 2 {
        return Err(MetricsError::Undefined("fewer than two key inputs"));
    }
    Ok(downs.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn mean_iki(log: &TrialLog) -> Result<f64, MetricsError> {
    iki_series(log).map(|s| mean(&s))
}

pub fn kpd_series(log: &TrialLog) -> Result<Vec<f64>, MetricsError> {
    let series: Vec<f64> = log.key_inputs().map(|e| e.t_up - e.t_down).collect();
    if series.is_empty() {
        return Err(MetricsError::Undefined("no key inputs"));
    }
    Ok(series)
}

pub fn mean_kpd(log: &TrialLog) -> Result<f64, MetricsError> {
    kpd_series(log).map(|s| mean(&s))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub wpm: f64,
    pub uer_pct: f64,
    pub cer_pct: f64,
    pub backspace_count: usize,
    pub mean_iki_ms: f64,
    pub mean_kpd_ms: f64,
    pub char_count: usize,
    pub duration_ms: f64,
}

impl MetricsReport {
    pub fn compute(log: &TrialLog) -> Result<MetricsReport, MetricsError> {
        Ok(MetricsReport {
            wpm: wpm(log)?,
            uer_pct: uncorrected_error_rate(log)?,
            cer_pct: corrected_error_rate(log)?,
            backspace_count: backspace_count(log),
            mean_iki_ms: mean_iki(log)?,
            mean_kpd_ms: mean_kpd(log)?,
            char_count: char_len(&log.transcribed),
            duration_ms: duration_ms(log)?,
        })
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Wpm => self.wpm,
            Metric::Uer => self.uer_pct,
            Metric::Cer => self.cer_pct,
            Metric::Iki => self.mean_iki_ms,
            Metric::Backspace => self.backspace_count as f64,
            Metric::Kpd => self.mean_kpd_ms,
        }
    }
}

/// Rows of the summary table, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wpm,
    Uer,
    Cer,
    Iki,
    Backspace,
    Kpd,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Wpm, Metric::Uer, Metric::Cer, Metric::Iki, Metric::Backspace, Metric::Kpd];

    pub fn key(&self) -> &'static str {
        match self {
            Metric::Wpm => "wpm",
            Metric::Uer => "uer",
            Metric::Cer => "cer",
            Metric::Iki => "iki",
            Metric::Backspace => "backspace",
            Metric::Kpd => "kpd",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::Wpm => "Text Entry Speed (WPM)",
            Metric::Uer => "UER (%)",
            Metric::Cer => "CER (%)",
            Metric::Iki => "IKI (ms)",
            Metric::Backspace => "Backspace Usage (count)",
            Metric::Kpd => "Key Press Duration (ms)",
        }
    }

    fn table_decimals(&self) -> usize {
        match self {
            Metric::Iki | Metric::Kpd => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Sample (n-1) standard deviation; 0 when `sd_defined` is false.
    pub sd: f64,
    pub sd_defined: bool,
}

impl MetricStat {
    pub fn of(values: &[f64]) -> MetricStat {
        let m = mean(values);
        if values.len() < 2 {
            return MetricStat { mean: m, sd: 0.0, sd_defined: false };
        }
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
        MetricStat { mean: m, sd: var.sqrt(), sd_defined: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub trials: usize,
    pub stats: Vec<(Metric, MetricStat)>,
}

impl GroupSummary {
    pub fn stat(&self, metric: Metric) -> MetricStat {
        self.stats.iter().find(|(m, _)| *m == metric).map(|(_, s)| *s).expect("all metrics present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

/// Per-group means and sample standard deviations, groups in first-seen order.
pub fn summarize(reports: &[(String, MetricsReport)]) -> Result<Summary, MetricsError> {
    let mut order: Vec<&str> = Vec::new();
    for (label, _) in reports {
        if !order.contains(&label.as_str()) {
            order.push(label);
        }
    }
    summarize_groups(reports, &order)
}

/// As [`summarize`], with an explicit column order; every named group must
/// have at least one trial.
pub fn summarize_groups(reports: &[(String, MetricsReport)], groups: &[&str]) -> Result<Summary, MetricsError> {
    let groups = groups
        .iter()
        .map(|&label| {
            let members: Vec<&MetricsReport> = reports.iter().filter(|(g, _)| g == label).map(|(_, r)| r).collect();
            if members.is_empty() {
                return Err(MetricsError::EmptyGroup(label.to_string()));
            }
            let stats = Metric::ALL
                .iter()
                .map(|&m| {
                    let values: Vec<f64> = members.iter().map(|r| r.value(m)).collect();
                    (m, MetricStat::of(&values))
                })
                .collect();
            Ok(GroupSummary { label: label.to_string(), trials: members.len(), stats })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Summary { groups })
}

impl Summary {
    pub fn group(&self, label: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Long-form CSV: one row per (group, metric).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,trials,metric,mean,sd,sd_defined\n");
        for g in &self.groups {
            for (m, s) in &g.stats {
                let _ = writeln!(out, "{},{},{},{:.6},{:.6},{}", g.label, g.trials, m.key(), s.mean, s.sd, s.sd_defined);
            }
        }
        out
    }

    /// Metrics as rows, groups as columns, cells `mean (sd)`.
    pub fn to_table(&self) -> String {
        let cell = |m: Metric, s: &MetricStat| {
            let d = m.table_decimals();
            if s.sd_defined {
                format!("{:.d$} ({:.d$})", s.mean, s.sd)
            } else {
                format!("{:.d$} (-)", s.mean)
            }
        };
        let mut rows: Vec<Vec<String>> = vec![std::iter::once(String::new())
            .chain(self.groups.iter().map(|g| g.label.clone()))
            .collect()];
        for m in Metric::ALL {
            rows.push(
                std::iter::once(m.title().to_string())
                    .chain(self.groups.iter().map(|g| cell(m, &g.stat(m))))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
