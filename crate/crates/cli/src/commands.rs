use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context as _};
use serde::Serialize;
use thumbkey_core::metrics::{load_trials, summarize};
use thumbkey_core::simulator::{calibrate_motor_sigma, default_layout_for, write_outputs, ExperimentOutput};
use thumbkey_core::{
    resolve_layout, run_experiment, shipped_lexicon, shipped_phrases, CandidateSequence, Decoder, ExperimentConfig,
    ExperimentPlan, KeyboardLayout, Lexicon, LoadReport, MetricsReport, PhraseSet, Summary, SuggestionPair,
    TouchPoint, TypistProfile, DEFAULT_CONFIG,
};

use crate::args::CommonArgs;
use crate::error::{Classify, Failure};

/// Output directory used when neither `--out` nor the config names one.
pub const DEFAULT_OUT: &str = "thumbkey-out";

/// Layout used when neither `--layout` nor the command implies one.
pub const DEFAULT_LAYOUT: &str = "enlarged";

/// Resolved inputs: flags, then the config file, then embedded defaults.
pub struct Context {
    pub common: CommonArgs,
    config: Option<ExperimentConfig>,
}

impl Context {
    pub fn new(common: CommonArgs) -> Result<Context, Failure> {
        let config = match &common.config {
            Some(path) => Some(
                ExperimentConfig::load(path)
                    .with_context(|| format!("config {}", path.display()))
                    .data_err()?,
            ),
            None => None,
        };
        Ok(Context { common, config })
    }

    fn lexicon_path(&self) -> Option<PathBuf> {
        self.common.lexicon.clone().or_else(|| self.config.as_ref().and_then(|c| c.lexicon.clone()))
    }

    fn phrases_path(&self) -> Option<PathBuf> {
        self.common.phrases.clone().or_else(|| self.config.as_ref().and_then(|c| c.phrases.clone()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.common
            .out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn lexicon(&self) -> Result<(Arc<Lexicon>, LoadReport), Failure> {
        let (lex, report) = match self.lexicon_path() {
            Some(path) => Lexicon::load(&path).with_context(|| format!("lexicon {}", path.display())).data_err()?,
            None => shipped_lexicon(),
        };
        Ok((Arc::new(lex), report))
    }

    pub fn phrases(&self, lexicon: &Lexicon) -> Result<PhraseSet, Failure> {
        match self.phrases_path() {
            Some(path) => PhraseSet::load(&path, lexicon).with_context(|| format!("phrases {}", path.display())).data_err(),
            None => Ok(shipped_phrases(lexicon)),
        }
    }

    /// `--layout`, else `fallback`.
    pub fn layout(&self, fallback: &str) -> Result<KeyboardLayout, Failure> {
        let spec = self.common.layout.as_deref().unwrap_or(fallback);
        resolve_layout(spec).with_context(|| format!("layout `{spec}`")).data_err()
    }

    /// The experiment to run, with `--seed` and `--layout` applied.
    pub fn experiment(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(c) => c.clone(),
            None => ExperimentConfig::from_toml(DEFAULT_CONFIG).expect("embedded config parses"),
        };
        if let Some(seed) = self.common.seed {
            cfg.master_seed = seed;
        }
        if let Some(layout) = &self.common.layout {
            for c in &mut cfg.conditions {
                c.layout = layout.clone();
            }
        }
        Ok(cfg)
    }

    pub fn plan(&self) -> Result<ExperimentPlan, Failure> {
        self.experiment()?.plan().context("experiment config").data_err()
    }

    pub fn seed(&self) -> u64 {
        self.common.seed.or_else(|| self.config.as_ref().map(|c| c.master_seed)).unwrap_or_else(|| {
            ExperimentConfig::from_toml(DEFAULT_CONFIG).expect("embedded config parses").master_seed
        })
    }
}

// ---------------------------------------------------------------------------
// decode

/// Parses a tap file: one `x y` pair (mm) per line; blank lines and `#`
/// comments are skipped.
pub fn parse_taps(text: &str) -> Result<Vec<TouchPoint>, Failure> {
    let mut taps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        match parsed.as_deref() {
            Some([x, y]) => taps.push(TouchPoint::new(*x, *y)),
            _ => return Err(Failure::data(anyhow!("line {}: expected two numbers `x y`, got `{line}`", i + 1))),
        }
    }
    if taps.is_empty() {
        return Err(Failure::usage("tap file holds no taps"));
    }
    Ok(taps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeOutput {
    pub layout: String,
    pub taps: Vec<TouchPoint>,
    pub literal: String,
    pub candidates: Vec<CandidateSequence>,
    pub suggestions: SuggestionPair,
}

pub fn decode(ctx: &Context, taps: &[TouchPoint], limit: usize) -> Result<DecodeOutput, Failure> {
    let layout = ctx.layout(DEFAULT_LAYOUT)?;
    let (lexicon, _) = ctx.lexicon()?;
    let decoder = Decoder::new(&layout, lexicon);
    let mut candidates = decoder.candidates(taps).data_err()?;
    candidates.truncate(limit);
    Ok(DecodeOutput {
        layout: layout.name().to_string(),
        taps: taps.to_vec(),
        literal: decoder.model().literal_string(taps),
        candidates,
        suggestions: decoder.suggest(taps),
    })
}

pub fn cmd_decode(ctx: &Context, path: &Path, limit: usize, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("tap file {}", path.display())).data_err()?;
    let result = decode(ctx, &parse_taps(&text)?, limit)?;
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("serializable")).runtime_err()?;
        return Ok(());
    }
    let mut text = format!("layout: {}\ntaps: {}\nliteral: {}\n", result.layout, result.taps.len(), result.literal);
    text.push_str("candidates:\n");
    for (i, c) in result.candidates.iter().enumerate() {
        text.push_str(&format!("  {:>2}. {:<16} {:.6e}\n", i + 1, c.letters, c.prob));
    }
    text.push_str("suggestions:\n");
    for (slot, s) in [("left", &result.suggestions.first), ("right", &result.suggestions.second)] {
        match s {
            Some(s) => text.push_str(&format!("  {slot:<5} {:<16} {:.6e}\n", s.word, s.score)),
            None => text.push_str(&format!("  {slot:<5} (empty)\n")),
        }
    }
    out.write_all(text.as_bytes()).runtime_err()
}

// ---------------------------------------------------------------------------
// simulate

pub struct SimulationRun {
    pub out_dir: PathBuf,
    pub plan: ExperimentPlan,
    pub output: ExperimentOutput,
}

pub fn simulate(ctx: &Context) -> Result<SimulationRun, Failure> {
    let plan = ctx.plan()?;
    let (lexicon, _) = ctx.lexicon()?;
    let phrases = ctx.phrases(&lexicon)?;
    let output = run_experiment(&plan, &phrases, lexicon).context("simulation").data_err()?;
    let out_dir = ctx.out_dir();
    write_outputs(&out_dir, &plan, &output)
        .with_context(|| format!("writing {}", out_dir.display()))
        .runtime_err()?;
    Ok(SimulationRun { out_dir, plan, output })
}

pub fn cmd_simulate(ctx: &Context, out: &mut dyn Write) -> Result<(), Failure> {
    let run = simulate(ctx)?;
    write!(out, "{}", run.output.summary.to_table()).runtime_err()?;
    writeln!(out, "\n{} trials written to {}", run.output.logs.len(), run.out_dir.display()).runtime_err()
}

// ---------------------------------------------------------------------------
// metrics

pub struct MetricsRun {
    pub summary: Summary,
    pub trials: usize,
    /// One message per file that could not be used.
    pub warnings: Vec<String>,
}

/// The directory holding the logs: `dir/logs` when present, else `dir`.
fn logs_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("logs");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Recomputes the summary from every `*.jsonl` log under `dir`. Files are
/// read in name order, which is the order the simulator writes them in, so
/// group columns come out as they did at simulation time.
pub fn metrics(dir: &Path) -> Result<MetricsRun, Failure> {
    let dir = logs_dir(dir);
    let entries = std::fs::read_dir(&dir).with_context(|| format!("log directory {}", dir.display())).data_err()?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();

    let mut reports: Vec<(String, MetricsReport)> = Vec::new();
    let mut warnings = Vec::new();
    for file in &files {
        let computed = load_trials(file).and_then(|logs| {
            logs.iter()
                .map(|log| {
                    let group = if log.header.group.is_empty() { "all".to_string() } else { log.header.group.clone() };
                    MetricsReport::compute(log).map(|r| (group, r))
                })
                .collect::<Result<Vec<_>, _>>()
        });
        match computed {
            Ok(mut r) => reports.append(&mut r),
            Err(e) => warnings.push(format!("skipping {}: {e}", file.display())),
        }
    }
    if reports.is_empty() {
        return Err(Failure::data(anyhow!("no usable trial logs in {}", dir.display())));
    }
    let trials = reports.len();
    let summary = summarize(&reports).data_err()?;
    Ok(MetricsRun { summary, trials, warnings })
}

pub fn cmd_metrics(ctx: &Context, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let run = metrics(dir)?;
    for w in &run.warnings {
        writeln!(err, "warning: {w}").runtime_err()?;
    }
    if let Some(target) = &ctx.common.out {
        std::fs::create_dir_all(target).runtime_err()?;
        std::fs::write(target.join("summary.csv"), run.summary.to_csv()).runtime_err()?;
        std::fs::write(target.join("summary.txt"), run.summary.to_table()).runtime_err()?;
    }
    write!(out, "{}", run.summary.to_table()).runtime_err()?;
    writeln!(out, "\n{} trials from {}", run.trials, dir.display()).runtime_err()
}

// ---------------------------------------------------------------------------
// validate

pub fn cmd_validate_lexicon(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let (lex, report) = Lexicon::load(path).with_context(|| format!("lexicon {}", path.display())).data_err()?;
    let mut text = format!("entries: {}\n", lex.len());
    text.push_str(&format!("malformed rows: {}", report.malformed_lines.len()));
    if !report.malformed_lines.is_empty() {
        let shown: Vec<String> = report.malformed_lines.iter().take(10).map(|l| l.to_string()).collect();
        text.push_str(&format!(" (lines {}{})", shown.join(", "), if report.malformed_lines.len() > 10 { ", ..." } else { "" }));
    }
    text.push_str(&format!(
        "\nnon-letter rows dropped: {}\nduplicates merged: {}\nprobability sum: {:.12} ({})\n",
        report.dropped_non_letter,
        report.merged_duplicates,
        report.prob_sum,
        if report.prob_sum_ok() { "ok" } else { "off" }
    ));
    out.write_all(text.as_bytes()).runtime_err()?;
    if !report.prob_sum_ok() {
        return Err(Failure::data(anyhow!("probabilities sum to {}", report.prob_sum)));
    }
    Ok(())
}

pub fn cmd_validate_layout(spec: &str, out: &mut dyn Write) -> Result<(), Failure> {
    let layout = resolve_layout(spec).with_context(|| format!("layout `{spec}`")).data_err()?;
    layout.validate().with_context(|| format!("layout `{spec}`")).data_err()?;
    writeln!(
        out,
        "layout: {}\nkeys: {}\nkey width: {} mm\ngap: {} mm\npitch: {} x {} mm\nok",
        layout.name(),
        layout.keys().len(),
        layout.key_width(),
        layout.key_gap(),
        layout.column_pitch(),
        layout.row_pitch()
    )
    .runtime_err()
}

pub fn cmd_validate_phrases(ctx: &Context, path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let (lexicon, _) = ctx.lexicon()?;
    let set = PhraseSet::load(path, &lexicon).with_context(|| format!("phrases {}", path.display())).data_err()?;
    writeln!(out, "kept: {}\nremoved: {}", set.len(), set.removed.len()).runtime_err()?;
    for p in &set.removed {
        writeln!(out, "  - {p}").runtime_err()?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate, layout export

pub fn cmd_calibrate(ctx: &Context, profile: &str, target: f64, tolerance: f64, out: &mut dyn Write) -> Result<(), Failure> {
    let base = TypistProfile::preset(profile).ok_or_else(|| Failure::usage(format!("unknown profile `{profile}`")))?;
    if !(target.is_finite() && target >= 0.0 && tolerance.is_finite() && tolerance > 0.0) {
        return Err(Failure::usage("target must be non-negative and tolerance positive"));
    }
    let layout = match &ctx.common.layout {
        Some(_) => ctx.layout(DEFAULT_LAYOUT)?,
        None => default_layout_for(profile).data_err()?,
    };
    let (lexicon, _) = ctx.lexicon()?;
    let phrases = ctx.phrases(&lexicon)?;
    let r = calibrate_motor_sigma(&base, &layout, lexicon, &phrases.phrases, target, tolerance, ctx.seed())
        .context("calibration")
        .data_err()?;
    writeln!(
        out,
        "profile: {profile}\nlayout: {}\nmotor sigma: {} mm\nmean CER: {:.3}%\niterations: {}\nwithin tolerance: {}",
        layout.name(),
        r.motor_sigma_mm,
        r.cer_pct,
        r.iterations,
        r.within_tolerance
    )
    .runtime_err()?;
    if !r.within_tolerance {
        return Err(Failure::runtime(anyhow!("no sigma reached CER {target} +/- {tolerance}")));
    }
    Ok(())
}

pub fn cmd_layout_export(ctx: &Context, out: &mut dyn Write) -> Result<(), Failure> {
    let layout = ctx.layout(DEFAULT_LAYOUT)?;
    match &ctx.common.out {
        Some(path) => layout.save(path).with_context(|| format!("writing {}", path.display())).runtime_err(),
        None => writeln!(out, "{}", layout.to_json()).runtime_err(),
    }
}
