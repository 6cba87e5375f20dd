//! Synthetic typists driving the session state machine.
//!
//! A simulated tap aims at a key center, lands with Gaussian motor noise,
//! is observed through a lagging tracker (latency against a moving thumb)
//! with bounded jitter, and is registered to the nearest typing key. Timing
//! comes from truncated normal inter-key intervals and press durations; an
//! optional capacitive trace is debounced into down/up edges.
//!
//! The typist keeps a belief of what the field should show. A wrong
//! single-character commit is noticed with probability `p_notice_error` and
//! repaired with backspaces; any other deviation is always noticed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{Decoder, SuggestionPair};
use crate::geometry::{build_layout, GeometryError, KeyClass, KeyLabel, KeyboardLayout, LayoutOverrides, TouchPoint};
use crate::lexicon::{Lexicon, LexiconError};
use crate::metrics::{MetricsError, MetricsReport, Summary, TrialHeader, TrialLog};
use crate::session::{Action, PhraseSchedule, PhraseSet, Session, SessionError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("phrase is empty")]
    EmptyPhrase,
    #[error("word `{0}` is not in the lexicon but the suggestion policy needs lexicon words")]
    OutOfVocabulary(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("capacitance stream is not time-ordered at sample {0}")]
    UnorderedStream(usize),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Debounce

/// Two-threshold tap detector state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebounceState {
    pub engaged: bool,
    pub engage_threshold: f64,
    pub release_threshold: f64,
    /// Time of the pending engagement while `engaged`.
    #[serde(skip)]
    pub engaged_at: Option<f64>,
}

impl Default for DebounceState {
    fn default() -> Self {
        DebounceState { engaged: false, engage_threshold: 250.0, release_threshold: 200.0, engaged_at: None }
    }
}

/// Turns a capacitance stream into completed `(t_down, t_up)` taps.
///
/// Engages on the first sample strictly above the engage threshold and
/// releases on the first sample strictly below the release threshold;
/// samples in between never change state. A tap still engaged at the end of
/// the stream stays pending in `state`.
pub fn debounce(stream: &[(f64, f64)], state: &mut DebounceState) -> Result<Vec<(f64, f64)>, SimError> {
    if state.engage_threshold <= state.release_threshold {
        return Err(SimError::Config("engage threshold must exceed release threshold".into()));
    }
    if let Some(i) = stream.windows(2).position(|w| !(w[1].0 >= w[0].0)) {
        return Err(SimError::UnorderedStream(i + 1));
    }
    let mut taps = Vec::new();
    for &(t, value) in stream {
        if !state.engaged && value > state.engage_threshold {
            state.engaged = true;
            state.engaged_at = Some(t);
        } else if state.engaged && value < state.release_threshold {
            state.engaged = false;
            if let Some(down) = state.engaged_at.take() {
                taps.push((down, t));
            }
        }
    }
    Ok(taps)
}

/// Synthetic capacitive tape: linear ramps between a resting and a touched
/// level, sampled on a fixed grid, with bounded uniform noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitiveSensor {
    pub sample_ms: f64,
    pub rest_level: f64,
    pub touch_level: f64,
    pub ramp_ms: f64,
    pub noise: f64,
}

impl Default for CapacitiveSensor {
    fn default() -> Self {
        CapacitiveSensor { sample_ms: 1.0, rest_level: 60.0, touch_level: 400.0, ramp_ms: 4.0, noise: 15.0 }
    }
}

impl CapacitiveSensor {
    /// Samples one contact from `t_down` to `t_up`.
    pub fn trace<R: Rng>(&self, t_down: f64, t_up: f64, rng: &mut R) -> Vec<(f64, f64)> {
        let level = |t: f64| -> f64 {
            let rise = ((t - t_down) / self.ramp_ms).clamp(0.0, 1.0);
            let fall = ((t - t_up) / self.ramp_ms).clamp(0.0, 1.0);
            (rise - fall).max(0.0)
        };
        let start = (t_down / self.sample_ms).floor() * self.sample_ms - 2.0 * self.sample_ms;
        let end = t_up + self.ramp_ms + 3.0 * self.sample_ms;
        let steps = ((end - start) / self.sample_ms).ceil() as usize;
        (0..=steps)
            .map(|i| {
                let t = start + i as f64 * self.sample_ms;
                let jitter = if self.noise > 0.0 { rng.random_range(-self.noise..=self.noise) } else { 0.0 };
                (t, self.rest_level + (self.touch_level - self.rest_level) * level(t) + jitter)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Profiles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JitterModel {
    /// Uniform in `[-a, a]` per axis.
    Uniform,
    /// Zero-mean normal with standard deviation `a / 2` per axis.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuggestionPolicy {
    pub enabled: bool,
    /// Letters of the current word that must be on screen before the typist
    /// looks at the suggestion bar.
    pub min_typed_letters: usize,
    /// Accept the target from either button; otherwise only from the left one.
    pub accept_second: bool,
}

impl Default for SuggestionPolicy {
    fn default() -> Self {
        SuggestionPolicy { enabled: true, min_typed_letters: 2, accept_second: true }
    }
}

impl SuggestionPolicy {
    pub fn off() -> Self {
        SuggestionPolicy { enabled: false, ..Default::default() }
    }
}

/// Calibrated motor noise of the shipped overlay typist (enlarged layout).
pub const AR_THUMB_MOTOR_SIGMA_MM: f64 = 2.1875;
/// Calibrated motor noise of the shipped smartphone typist (original layout).
pub const SMARTPHONE_MOTOR_SIGMA_MM: f64 = 1.8662109375;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypistProfile {
    pub iki_mean_ms: f64,
    pub iki_sd_ms: f64,
    pub kpd_mean_ms: f64,
    pub kpd_sd_ms: f64,
    pub motor_sigma_mm: f64,
    pub jitter_amplitude_mm: f64,
    #[serde(default = "uniform")]
    pub jitter_model: JitterModel,
    pub latency_ms: f64,
    /// How long the thumb hovers over its target before touching down.
    /// Tracker latency shifts the registered point only when it exceeds this.
    #[serde(default)]
    pub settle_ms: f64,
    pub p_notice_error: f64,
    #[serde(default)]
    pub suggestions: SuggestionPolicy,
    #[serde(default)]
    pub sensor: Option<CapacitiveSensor>,
}

fn uniform() -> JitterModel {
    JitterModel::Uniform
}

impl TypistProfile {
    /// Overlay typist at final-block speed on the enlarged layout.
    pub fn ar_thumb() -> TypistProfile {
        TypistProfile {
            iki_mean_ms: 585.0,
            iki_sd_ms: 100.0,
            kpd_mean_ms: 139.0,
            kpd_sd_ms: 17.0,
            motor_sigma_mm: AR_THUMB_MOTOR_SIGMA_MM,
            jitter_amplitude_mm: 1.0,
            jitter_model: JitterModel::Uniform,
            latency_ms: 90.0,
            settle_ms: 100.0,
            p_notice_error: 0.97,
            suggestions: SuggestionPolicy::default(),
            sensor: Some(CapacitiveSensor::default()),
        }
    }

    /// Touchscreen typist on the original layout: no tracker in the loop.
    pub fn smartphone() -> TypistProfile {
        TypistProfile {
            iki_mean_ms: 315.0,
            iki_sd_ms: 72.0,
            kpd_mean_ms: 84.0,
            kpd_sd_ms: 9.0,
            motor_sigma_mm: SMARTPHONE_MOTOR_SIGMA_MM,
            jitter_amplitude_mm: 0.0,
            jitter_model: JitterModel::Uniform,
            latency_ms: 0.0,
            settle_ms: 0.0,
            p_notice_error: 0.97,
            suggestions: SuggestionPolicy::default(),
            sensor: None,
        }
    }

    /// Perfectly accurate typist with constant timing and no suggestions.
    pub fn noiseless(iki_ms: f64, kpd_ms: f64) -> TypistProfile {
        TypistProfile {
            iki_mean_ms: iki_ms,
            iki_sd_ms: 0.0,
            kpd_mean_ms: kpd_ms,
            kpd_sd_ms: 0.0,
            motor_sigma_mm: 0.0,
            jitter_amplitude_mm: 0.0,
            jitter_model: JitterModel::Uniform,
            latency_ms: 0.0,
            settle_ms: 0.0,
            p_notice_error: 1.0,
            suggestions: SuggestionPolicy::off(),
            sensor: None,
        }
    }

    pub fn preset(name: &str) -> Option<TypistProfile> {
        match name {
            "ar-thumb" => Some(TypistProfile::ar_thumb()),
            "smartphone" => Some(TypistProfile::smartphone()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let non_negative = [
            ("iki_mean_ms", self.iki_mean_ms),
            ("iki_sd_ms", self.iki_sd_ms),
            ("kpd_mean_ms", self.kpd_mean_ms),
            ("kpd_sd_ms", self.kpd_sd_ms),
            ("motor_sigma_mm", self.motor_sigma_mm),
            ("jitter_amplitude_mm", self.jitter_amplitude_mm),
            ("latency_ms", self.latency_ms),
            ("settle_ms", self.settle_ms),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimError::Profile(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if !(self.iki_mean_ms > 0.0) {
            return Err(SimError::Profile("iki_mean_ms must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_notice_error) {
            return Err(SimError::Profile("p_notice_error must be in [0, 1]".into()));
        }
        if let Some(s) = &self.sensor {
            if !(s.sample_ms > 0.0) || !(s.ramp_ms > 0.0) {
                return Err(SimError::Profile("sensor sample and ramp times must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Normal sample resampled until non-negative (strictly positive when
/// `strict`).
fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, strict: bool) -> f64 {
    if sd == 0.0 {
        return mean.max(0.0);
    }
    for _ in 0..1000 {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if v > 0.0 || (!strict && v == 0.0) {
            return v;
        }
    }
    mean.max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Tap pipeline

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedTap {
    pub intended: KeyLabel,
    /// Center of the intended key.
    pub aimed_point: TouchPoint,
    pub motor_offset: TouchPoint,
    pub jitter_offset: TouchPoint,
    /// What the tracker reported at touch-down, jitter included.
    pub registered_point: TouchPoint,
    pub registered: KeyLabel,
    pub t_down: f64,
    pub t_up: f64,
}

/// Per-trial generator of timed, noisy taps.
struct TapGenerator<'a> {
    profile: &'a TypistProfile,
    layout: &'a KeyboardLayout,
    rng: ChaCha8Rng,
    clock: f64,
    /// Landing point and lift time of the previous tap.
    last: Option<(TouchPoint, f64)>,
    debounce: DebounceState,
}

impl<'a> TapGenerator<'a> {
    fn new(profile: &'a TypistProfile, layout: &'a KeyboardLayout, seed: u64) -> Self {
        TapGenerator {
            profile,
            layout,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0.0,
            last: None,
            debounce: DebounceState::default(),
        }
    }

    fn jitter(&mut self) -> TouchPoint {
        let a = self.profile.jitter_amplitude_mm;
        if a == 0.0 {
            return TouchPoint::default();
        }
        match self.profile.jitter_model {
            JitterModel::Uniform => TouchPoint::new(self.rng.random_range(-a..=a), self.rng.random_range(-a..=a)),
            JitterModel::Gaussian => {
                let x: f64 = StandardNormal.sample(&mut self.rng);
                let y: f64 = StandardNormal.sample(&mut self.rng);
                TouchPoint::new(x * a / 2.0, y * a / 2.0)
            }
        }
    }

    /// Tracked thumb position at time `t` for a thumb that lifted from
    /// `from` at `lift`, moved in a straight line and came to rest over
    /// `to` at `rest`.
    fn tracked(from: TouchPoint, lift: f64, to: TouchPoint, rest: f64, t: f64) -> TouchPoint {
        let lift = lift.min(rest);
        if t >= rest || rest <= lift {
            return to;
        }
        if t <= lift {
            return from;
        }
        let f = (t - lift) / (rest - lift);
        TouchPoint::new(from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f)
    }

    fn tap(&mut self, intended: KeyLabel) -> SimulatedTap {
        let p = self.profile;
        let aimed = self.layout.center_of(intended).expect("simulated typists aim at existing keys");
        let sigma = p.motor_sigma_mm;
        let mx: f64 = StandardNormal.sample(&mut self.rng);
        let my: f64 = StandardNormal.sample(&mut self.rng);
        let motor = TouchPoint::new(mx * sigma, my * sigma);
        let landing = aimed.offset(motor.x, motor.y);
        let jitter = self.jitter();

        let iki = truncated_normal(&mut self.rng, p.iki_mean_ms, p.iki_sd_ms, true);
        let kpd = truncated_normal(&mut self.rng, p.kpd_mean_ms, p.kpd_sd_ms, false);
        let contact_down = self.clock + iki;
        let contact_up = contact_down + kpd;
        self.clock = contact_down;

        let observed = match self.last {
            Some((from, lift)) => {
                Self::tracked(from, lift, landing, contact_down - p.settle_ms, contact_down - p.latency_ms)
            }
            None => landing,
        };
        self.last = Some((landing, contact_up));
        let registered_point = observed.offset(jitter.x, jitter.y);
        let registered = self.layout.nearest_key(&registered_point, KeyClass::Typing).label;

        let (t_down, t_up) = match p.sensor {
            Some(sensor) => {
                let trace = sensor.trace(contact_down, contact_up, &mut self.rng);
                self.debounce = DebounceState::default();
                match debounce(&trace, &mut self.debounce) {
                    Ok(edges) if !edges.is_empty() => edges[0],
                    _ => (contact_down, contact_up),
                }
            }
            None => (contact_down, contact_up),
        };
        SimulatedTap {
            intended,
            aimed_point: aimed,
            motor_offset: motor,
            jitter_offset: jitter,
            registered_point,
            registered,
            t_down,
            t_up,
        }
    }

    /// Deliberate, noise-free tap used for submitting.
    fn clean_time(&mut self) -> (f64, f64) {
        let iki = truncated_normal(&mut self.rng, self.profile.iki_mean_ms, self.profile.iki_sd_ms, true);
        let kpd = truncated_normal(&mut self.rng, self.profile.kpd_mean_ms, self.profile.kpd_sd_ms, false);
        // Submit must not precede the last debounced key event.
        self.clock += iki;
        (self.clock, self.clock + kpd)
    }
}

/// One simulated trial: the log plus the taps that produced it.
#[derive(Debug, Clone)]
pub struct TrialSimulation {
    pub log: TrialLog,
    pub taps: Vec<SimulatedTap>,
}

/// Typist state: the text it believes should be on screen and how far
/// through the phrase that belief reaches.
struct Typist<'a> {
    target: &'a [u8],
    belief: String,
}

impl Typist<'_> {
    fn pos(&self) -> usize {
        self.belief.len()
    }

    /// Word containing the character before `pos`, as `(start, end)` byte
    /// offsets into the target, when that character is a letter.
    fn word_before(&self, pos: usize) -> Option<(usize, usize)> {
        if pos == 0 || self.target[pos - 1] == b' ' {
            return None;
        }
        let start = self.target[..pos].iter().rposition(|&c| c == b' ').map_or(0, |i| i + 1);
        let end = self.target[pos..].iter().position(|&c| c == b' ').map_or(self.target.len(), |i| pos + i);
        Some((start, end))
    }

    /// Suggestion button to tap once the typist considers `pos` characters
    /// typed, with the text it expects afterwards. The last word is always
    /// finished by hand so the transcription gets no trailing space.
    fn suggestion_for(&self, policy: &SuggestionPolicy, shown: &SuggestionPair, pos: usize) -> Option<(KeyLabel, String)> {
        if !policy.enabled {
            return None;
        }
        let (start, end) = self.word_before(pos)?;
        if end == self.target.len() || pos - start < policy.min_typed_letters {
            return None;
        }
        let word = std::str::from_utf8(&self.target[start..end]).expect("phrases are ASCII");
        match shown.position(word) {
            Some(slot) if slot == 0 || policy.accept_second => {
                let mut expected = self.belief[..start.min(self.belief.len())].to_string();
                expected.push_str(word);
                expected.push(' ');
                Some((KeyLabel::Suggestion(slot), expected))
            }
            _ => None,
        }
    }
}

fn press(session: &mut Session, gen: &mut TapGenerator, taps: &mut Vec<SimulatedTap>, intended: KeyLabel) -> Result<(), SimError> {
    let tap = gen.tap(intended);
    session.apply(Action::Press {
        label: tap.registered,
        touch: Some(tap.registered_point),
        t_down: tap.t_down,
        t_up: tap.t_up,
    })?;
    taps.push(tap);
    Ok(())
}

/// Simulates one transcription of `phrase`.
pub fn simulate_trial(
    profile: &TypistProfile,
    phrase: &str,
    decoder: Arc<Decoder>,
    header: TrialHeader,
    seed: u64,
) -> Result<TrialSimulation, SimError> {
    profile.validate()?;
    let phrase = phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if phrase.is_empty() {
        return Err(SimError::EmptyPhrase);
    }
    if let Some(bad) = phrase.split(' ').find(|w| !w.bytes().all(|b| b.is_ascii_lowercase())) {
        return Err(SimError::OutOfVocabulary(bad.to_string()));
    }
    if profile.suggestions.enabled {
        if let Some(oov) = phrase.split(' ').find(|w| !decoder.lexicon().contains_word(w)) {
            return Err(SimError::OutOfVocabulary(oov.to_string()));
        }
    }

    let layout = decoder.layout().clone();
    let mut session = Session::new(Arc::clone(&decoder), TrialHeader { seed, ..header });
    session.show_phrase(&phrase)?;
    let mut taps = Vec::new();
    let mut gen = TapGenerator::new(profile, &layout, seed);
    let mut typist = Typist { target: phrase.as_bytes(), belief: String::new() };
    let mut noticed = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let budget = 12 * phrase.len() + 60;

    while taps.len() < budget {
        let pos = typist.pos();
        if pos == typist.target.len() && session.committed() == typist.belief {
            break;
        }

        // Forward step: a suggestion for the current word, or the next character.
        let (aim, intended_text) = match typist.suggestion_for(&profile.suggestions, &session.suggestions(), pos) {
            Some(step) => step,
            None => {
                let c = typist.target[pos];
                let mut text = typist.belief.clone();
                text.push(c as char);
                (if c == b' ' { KeyLabel::Space } else { KeyLabel::Letter(c) }, text)
            }
        };

        press(&mut session, &mut gen, &mut taps, aim)?;
        let screen = session.committed().to_string();
        if screen == intended_text {
            typist.belief = screen;
            continue;
        }
        let substitution = aim.is_letter()
            && screen.len() == intended_text.len()
            && screen[..screen.len() - 1] == intended_text[..intended_text.len() - 1];
        if substitution {
            if noticed.random::<f64>() >= profile.p_notice_error {
                // Overlooked: carry on as if the intended character were there.
                typist.belief = screen;
                continue;
            }
            // The decoder may already show the intended word despite the slip.
            if let Some((fix, expected)) = typist.suggestion_for(&profile.suggestions, &session.suggestions(), pos + 1) {
                press(&mut session, &mut gen, &mut taps, fix)?;
                if session.committed() == expected {
                    typist.belief = expected;
                    continue;
                }
            }
        }
        while !typist.belief.starts_with(session.committed()) && taps.len() < budget {
            press(&mut session, &mut gen, &mut taps, KeyLabel::Backspace)?;
        }
        typist.belief.truncate(session.committed().len().min(typist.belief.len()));
    }

    let (t_down, t_up) = gen.clean_time();
    let t_down = t_down.max(session.events().last().map_or(0.0, |e| e.t_up));
    session.apply(Action::Press { label: KeyLabel::Submit, touch: None, t_down, t_up: t_up.max(t_down) })?;
    let log = session.completed().last().cloned().expect("submitted trial is recorded");
    Ok(TrialSimulation { log, taps })
}

// ---------------------------------------------------------------------------
// Experiments

/// One experimental condition: a typist on a layout for some blocks.
#[derive(Debug, Clone)]
pub struct ConditionPlan {
    pub name: String,
    pub layout: KeyboardLayout,
    pub profile: TypistProfile,
    pub blocks: u32,
    /// Report all blocks under one summary column instead of one per block.
    pub pool_blocks: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub conditions: Vec<ConditionPlan>,
    pub trials_per_block: u32,
    pub master_seed: u64,
    pub allow_replacement: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub logs: Vec<TrialLog>,
    pub reports: Vec<(String, MetricsReport)>,
    pub summary: Summary,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one trial, derived from the master seed and its coordinates.
pub fn trial_seed(master: u64, condition: usize, block: u32, trial: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(master ^ condition as u64) ^ block as u64) ^ trial as u64)
}

pub fn group_label(condition: &ConditionPlan, block: u32) -> String {
    if condition.pool_blocks {
        condition.name.clone()
    } else {
        format!("{} B{}", condition.name, block)
    }
}

/// Summary columns in reporting order.
pub fn group_order(plan: &ExperimentPlan) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in &plan.conditions {
        for b in 1..=c.blocks {
            let label = group_label(c, b);
            if !out.contains(&label) {
                out.push(label);
            }
        }
    }
    out
}

struct TrialJob {
    condition: usize,
    block: u32,
    trial: u32,
    phrase: String,
}

/// Runs every trial of `plan`. Phrases follow one seeded order shared by all
/// conditions; trials run in parallel and come back in (condition, block,
/// trial) order.
pub fn run_experiment(plan: &ExperimentPlan, phrases: &PhraseSet, lexicon: Arc<Lexicon>) -> Result<ExperimentOutput, SimError> {
    if plan.conditions.is_empty() {
        return Err(SimError::Config("no conditions".into()));
    }
    if plan.trials_per_block == 0 {
        return Err(SimError::Config("trials_per_block must be at least 1".into()));
    }
    let mut names: Vec<&str> = Vec::new();
    for c in &plan.conditions {
        if c.blocks == 0 {
            return Err(SimError::Config(format!("condition `{}` needs at least one block", c.name)));
        }
        if c.name.is_empty() || names.contains(&c.name.as_str()) {
            return Err(SimError::Config(format!("condition names must be unique and non-empty (`{}`)", c.name)));
        }
        names.push(&c.name);
        c.profile.validate()?;
    }

    let mut schedule = PhraseSchedule::new(phrases.len(), plan.master_seed, plan.allow_replacement);
    let mut jobs = Vec::new();
    for (ci, c) in plan.conditions.iter().enumerate() {
        for block in 1..=c.blocks {
            for trial in 1..=plan.trials_per_block {
                let phrase = schedule.next_phrase(phrases)?.to_string();
                jobs.push(TrialJob { condition: ci, block, trial, phrase });
            }
        }
    }
    let decoders: Vec<Arc<Decoder>> = plan
        .conditions
        .iter()
        .map(|c| Arc::new(Decoder::new(&c.layout, Arc::clone(&lexicon))))
        .collect();

    let logs: Vec<TrialLog> = jobs
        .par_iter()
        .map(|job| {
            let c = &plan.conditions[job.condition];
            let header = TrialHeader {
                presented: String::new(),
                layout: c.layout.name().to_string(),
                condition: c.name.clone(),
                group: group_label(c, job.block),
                block: job.block,
                trial: job.trial,
                seed: 0,
            };
            let seed = trial_seed(plan.master_seed, job.condition, job.block, job.trial);
            simulate_trial(&c.profile, &job.phrase, Arc::clone(&decoders[job.condition]), header, seed).map(|s| s.log)
        })
        .collect::<Result<_, _>>()?;

    let reports = logs
        .iter()
        .map(|log| MetricsReport::compute(log).map(|r| (log.header.group.clone(), r)))
        .collect::<Result<Vec<_>, _>>()?;
    let order = group_order(plan);
    let order: Vec<&str> = order.iter().map(String::as_str).collect();
    let summary = crate::metrics::summarize_groups(&reports, &order)?;
    Ok(ExperimentOutput { logs, reports, summary })
}

/// File name of a trial log inside an output directory.
pub fn log_file_name(condition_index: usize, log: &TrialLog) -> String {
    format!(
        "c{:02}_{}_b{:02}_t{:02}.jsonl",
        condition_index, log.header.condition, log.header.block, log.header.trial
    )
}

/// Writes `logs/`, `summary.csv` and `summary.txt` under `dir`.
pub fn write_outputs(dir: &Path, plan: &ExperimentPlan, output: &ExperimentOutput) -> Result<(), SimError> {
    let logs_dir = dir.join("logs");
    std::fs::create_dir_all(&logs_dir)?;
    for log in &output.logs {
        let ci = plan.conditions.iter().position(|c| c.name == log.header.condition).unwrap_or(0);
        log.save(&logs_dir.join(log_file_name(ci, log)))?;
    }
    std::fs::write(dir.join("summary.csv"), output.summary.to_csv())?;
    std::fs::write(dir.join("summary.txt"), output.summary.to_table())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Config files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Preset(String),
    Inline(Box<TypistProfile>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub name: String,
    pub layout: String,
    pub profile: ProfileRef,
    pub blocks: u32,
    #[serde(default)]
    pub pool_blocks: bool,
}

/// Experiment description as stored on disk (TOML). Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials_per_block: u32,
    #[serde(default)]
    pub phrases: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub allow_replacement: bool,
    #[serde(rename = "condition")]
    pub conditions: Vec<ConditionConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, SimError> {
        let mut cfg = ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.phrases, &mut cfg.lexicon, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Resolves layouts and profiles into a runnable plan.
    pub fn plan(&self) -> Result<ExperimentPlan, SimError> {
        if self.conditions.is_empty() {
            return Err(SimError::Config("at least one [[condition]] is required".into()));
        }
        let conditions = self
            .conditions
            .iter()
            .map(|c| {
                if c.blocks == 0 {
                    return Err(SimError::Config(format!("condition `{}`: blocks must be at least 1", c.name)));
                }
                let profile = match &c.profile {
                    ProfileRef::Preset(name) => TypistProfile::preset(name)
                        .ok_or_else(|| SimError::Config(format!("unknown profile preset `{name}`")))?,
                    ProfileRef::Inline(p) => (**p).clone(),
                };
                let layout = crate::geometry::resolve_layout(&c.layout)?;
                Ok(ConditionPlan { name: c.name.clone(), layout, profile, blocks: c.blocks, pool_blocks: c.pool_blocks })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        if self.trials_per_block == 0 {
            return Err(SimError::Config("trials_per_block must be at least 1".into()));
        }
        Ok(ExperimentPlan {
            conditions,
            trials_per_block: self.trials_per_block,
            master_seed: self.master_seed,
            allow_replacement: self.allow_replacement,
        })
    }
}

// ---------------------------------------------------------------------------
// Calibration

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub motor_sigma_mm: f64,
    pub cer_pct: f64,
    pub iterations: usize,
    pub within_tolerance: bool,
}

/// Mean corrected error rate of `profile` over `phrases` with fixed seeds.
pub fn mean_cer(profile: &TypistProfile, phrases: &[String], decoder: &Arc<Decoder>, seed: u64) -> Result<f64, SimError> {
    let cers = phrases
        .par_iter()
        .enumerate()
        .map(|(i, phrase)| {
            let sim = simulate_trial(profile, phrase, Arc::clone(decoder), TrialHeader::default(), trial_seed(seed, 0, 0, i as u32))?;
            Ok(crate::metrics::corrected_error_rate(&sim.log)?)
        })
        .collect::<Result<Vec<f64>, SimError>>()?;
    Ok(cers.iter().sum::<f64>() / cers.len() as f64)
}

/// Bisects `motor_sigma_mm` until the mean corrected error rate over
/// `phrases` is within `tolerance` of `target_cer`. Common random numbers
/// across iterations keep the response close to monotone.
pub fn calibrate_motor_sigma(
    base: &TypistProfile,
    layout: &KeyboardLayout,
    lexicon: Arc<Lexicon>,
    phrases: &[String],
    target_cer: f64,
    tolerance: f64,
    seed: u64,
) -> Result<CalibrationResult, SimError> {
    if phrases.is_empty() {
        return Err(SimError::Config("calibration needs phrases".into()));
    }
    let decoder = Arc::new(Decoder::new(layout, lexicon));
    let eval = |sigma: f64| {
        let profile = TypistProfile { motor_sigma_mm: sigma, ..base.clone() };
        mean_cer(&profile, phrases, &decoder, seed)
    };
    let (mut lo, mut hi) = (0.0, layout.column_pitch());
    let mut best = (f64::NAN, f64::INFINITY);
    for iteration in 1..=40 {
        let mid = (lo + hi) / 2.0;
        let cer = eval(mid)?;
        if (cer - target_cer).abs() < (best.1 - target_cer).abs() {
            best = (mid, cer);
        }
        if (cer - target_cer).abs() <= tolerance / 4.0 || hi - lo < 1e-3 {
            return Ok(CalibrationResult {
                motor_sigma_mm: best.0,
                cer_pct: best.1,
                iterations: iteration,
                within_tolerance: (best.1 - target_cer).abs() <= tolerance,
            });
        }
        if cer < target_cer {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CalibrationResult {
        motor_sigma_mm: best.0,
        cer_pct: best.1,
        iterations: 40,
        within_tolerance: (best.1 - target_cer).abs() <= tolerance,
    })
}

/// Layout preset a shipped profile is meant for.
pub fn default_layout_for(profile: &str) -> Result<KeyboardLayout, SimError> {
    let name = if profile == "smartphone" { "original" } else { "enlarged" };
    Ok(build_layout(name, &LayoutOverrides::default())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debounce_single_tap() {
        let stream: Vec<(f64, f64)> =
            [0.0, 100.0, 260.0, 240.0, 190.0].iter().enumerate().map(|(i, v)| (i as f64 * 10.0, *v)).collect();
        let mut st = DebounceState::default();
        assert_eq!(debounce(&stream, &mut st).unwrap(), vec![(20.0, 40.0)]);
        assert!(!st.engaged);
    }

    #[test]
    fn debounce_band_holds_state() {
        let mut st = DebounceState::default();
        let quiet: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 150.0)).collect();
        assert!(debounce(&quiet, &mut st).unwrap().is_empty());
        let wobble = [(0.0, 260.0), (1.0, 230.0), (2.0, 260.0), (3.0, 190.0)];
        assert_eq!(debounce(&wobble, &mut st).unwrap(), vec![(0.0, 3.0)]);
        let exact = [(0.0, 250.0), (1.0, 200.0)];
        assert!(debounce(&exact, &mut st).unwrap().is_empty());
        assert!(!st.engaged);
    }

    #[test]
    fn debounce_rejects_unordered() {
        let mut st = DebounceState::default();
        assert!(matches!(debounce(&[(5.0, 0.0), (4.0, 0.0)], &mut st), Err(SimError::UnorderedStream(1))));
    }

    #[test]
    fn debounce_carries_pending_tap() {
        let mut st = DebounceState::default();
        assert!(debounce(&[(0.0, 300.0)], &mut st).unwrap().is_empty());
        assert!(st.engaged);
        assert_eq!(debounce(&[(7.0, 100.0)], &mut st).unwrap(), vec![(0.0, 7.0)]);
    }

    #[test]
    fn sensor_trace_debounces_near_contact_times() {
        let sensor = CapacitiveSensor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let down = 1000.0 + i as f64 * 13.7;
            let up = down + 120.0 + i as f64;
            let trace = sensor.trace(down, up, &mut rng);
            let taps = debounce(&trace, &mut DebounceState::default()).unwrap();
            assert_eq!(taps.len(), 1);
            let (d, u) = taps[0];
            assert!(d >= down && d <= down + sensor.ramp_ms + sensor.sample_ms);
            assert!(u >= up && u <= up + sensor.ramp_ms + sensor.sample_ms);
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = TypistProfile::ar_thumb();
        p.validate().unwrap();
        p.p_notice_error = 1.5;
        assert!(p.validate().is_err());
        let mut p = TypistProfile::smartphone();
        p.kpd_sd_ms = -1.0;
        assert!(p.validate().is_err());
        assert!(TypistProfile::preset("nobody").is_none());
    }

    #[test]
    fn truncated_normal_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            assert!(truncated_normal(&mut rng, 10.0, 50.0, true) > 0.0);
        }
    }

    #[test]
    fn tracked_position_lags_only_while_moving() {
        let a = TouchPoint::new(0.0, 0.0);
        let b = TouchPoint::new(10.0, 0.0);
        // Rest at t=100; sampling before rest sees the thumb in flight.
        assert_eq!(TapGenerator::tracked(a, 0.0, b, 100.0, 50.0), TouchPoint::new(5.0, 0.0));
        assert_eq!(TapGenerator::tracked(a, 0.0, b, 100.0, 100.0), b);
        assert_eq!(TapGenerator::tracked(a, 0.0, b, 100.0, -5.0), a);
        // Lift after the rest time collapses to an instantaneous move.
        assert_eq!(TapGenerator::tracked(a, 200.0, b, 100.0, 150.0), b);
    }

    #[test]
    fn seeds_are_spread() {
        let a = trial_seed(1, 0, 1, 1);
        assert_ne!(a, trial_seed(1, 0, 1, 2));
        assert_ne!(a, trial_seed(1, 1, 1, 1));
        assert_ne!(a, trial_seed(2, 0, 1, 1));
        assert_eq!(a, trial_seed(1, 0, 1, 1));
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            master_seed = 9
            trials_per_block = 2

            [[condition]]
            name = "ar-thumb"
            layout = "enlarged"
            profile = "ar-thumb"
            blocks = 2

            [[condition]]
            name = "phone"
            layout = "original"
            blocks = 1
            pool_blocks = true
            [condition.profile]
            iki_mean_ms = 300.0
            iki_sd_ms = 0.0
            kpd_mean_ms = 80.0
            kpd_sd_ms = 0.0
            motor_sigma_mm = 0.0
            jitter_amplitude_mm = 0.0
            latency_ms = 0.0
            p_notice_error = 1.0
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.conditions.len(), 2);
        assert_eq!(plan.conditions[1].profile.iki_mean_ms, 300.0);
        assert_eq!(group_order(&plan), ["ar-thumb B1", "ar-thumb B2", "phone"]);

        let zero = text.replacen("blocks = 2", "blocks = 0", 1);
        assert!(ExperimentConfig::from_toml(&zero).unwrap().plan().is_err());
        let bad_profile = text.replacen("profile = \"ar-thumb\"", "profile = \"ghost\"", 1);
        assert!(ExperimentConfig::from_toml(&bad_profile).unwrap().plan().is_err());
        assert!(ExperimentConfig::from_toml("master_seed = 1").is_err());
    }
}
