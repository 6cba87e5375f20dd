//! Phrase sets and the transcription-session state machine.
//!
//! A session walks `Preparation -> PhraseShown -> Transcribing -> Submitted`
//! and back to `PhraseShown` for the next trial. The committed text keeps a
//! parallel record of the touch point behind every character, so the
//! decoder context (the taps of the word being typed) survives backspacing
//! across a space.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{Decoder, SuggestionPair};
use crate::geometry::{KeyClass, KeyLabel, TouchPoint};
use crate::lexicon::Lexicon;
use crate::metrics::{InputEvent, InputKind, MetricsError, MetricsReport, TextDelta, TrialHeader, TrialLog};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no phrases left after filtering {removed} out-of-vocabulary phrases")]
    NoPhrases { removed: usize },
    #[error("phrase pool of {pool} exhausted (replacement disabled)")]
    Exhausted { pool: usize },
    #[error("`{action}` is not allowed during {phase}")]
    Illegal { phase: Phase, action: String },
    #[error("event at {t_down} ms precedes the previous event at {previous} ms")]
    OutOfOrder { t_down: f64, previous: f64 },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("cannot read phrases: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercase phrases whose every word is in the lexicon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhraseSet {
    pub source: String,
    pub phrases: Vec<String>,
    /// Phrases dropped because they contained out-of-vocabulary words.
    pub removed: Vec<String>,
}

fn normalise_phrase(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Reads one phrase per line, lowercases and collapses whitespace, and drops
/// phrases containing any word outside the lexicon.
pub fn load_phrases(text: &str, source: &str, lexicon: &Lexicon) -> Result<PhraseSet, SessionError> {
    let mut phrases = Vec::new();
    let mut removed = Vec::new();
    for line in text.lines() {
        let phrase = normalise_phrase(line);
        if phrase.is_empty() {
            continue;
        }
        if phrase.split(' ').all(|w| lexicon.contains_word(w)) {
            phrases.push(phrase);
        } else {
            removed.push(phrase);
        }
    }
    if phrases.is_empty() {
        return Err(SessionError::NoPhrases { removed: removed.len() });
    }
    Ok(PhraseSet { source: source.to_string(), phrases, removed })
}

impl PhraseSet {
    pub fn load(path: &Path, lexicon: &Lexicon) -> Result<PhraseSet, SessionError> {
        let text = std::fs::read_to_string(path)?;
        load_phrases(&text, &path.display().to_string(), lexicon)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// Seeded presentation order over a phrase set.
#[derive(Debug, Clone)]
pub struct PhraseSchedule {
    order: Vec<usize>,
    cursor: usize,
    allow_replacement: bool,
    rng: ChaCha8Rng,
}

impl PhraseSchedule {
    pub fn new(pool: usize, seed: u64, allow_replacement: bool) -> PhraseSchedule {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..pool).collect();
        order.shuffle(&mut rng);
        PhraseSchedule { order, cursor: 0, allow_replacement, rng }
    }

    /// Index of the next phrase; reshuffles on exhaustion when replacement
    /// is allowed.
    pub fn next_index(&mut self) -> Result<usize, SessionError> {
        if self.cursor == self.order.len() {
            if !self.allow_replacement || self.order.is_empty() {
                return Err(SessionError::Exhausted { pool: self.order.len() });
            }
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        Ok(self.order[self.cursor - 1])
    }

    pub fn next_phrase<'a>(&mut self, set: &'a PhraseSet) -> Result<&'a str, SessionError> {
        self.next_index().map(|i| set.phrases[i].as_str())
    }

    /// Draws `n` phrases up front.
    pub fn take(&mut self, set: &PhraseSet, n: usize) -> Result<Vec<String>, SessionError> {
        (0..n).map(|_| self.next_phrase(set).map(str::to_string)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparation,
    PhraseShown,
    Transcribing,
    Submitted,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Preparation => "preparation",
            Phase::PhraseShown => "phrase_shown",
            Phase::Transcribing => "transcribing",
            Phase::Submitted => "submitted",
        })
    }
}

/// A user action delivered to the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    ShowPhrase { phrase: String },
    /// Raw touch; registered to the nearest key of any class.
    Tap { touch: TouchPoint, t_down: f64, t_up: f64 },
    /// An already-registered key, optionally with the touch that produced it.
    Press {
        label: KeyLabel,
        #[serde(default)]
        touch: Option<TouchPoint>,
        t_down: f64,
        t_up: f64,
    },
}

impl Action {
    fn name(&self) -> String {
        match self {
            Action::ShowPhrase { .. } => "show_phrase".into(),
            Action::Tap { .. } => "tap".into(),
            Action::Press { label, .. } => format!("press {label}"),
        }
    }
}

/// What an applied action did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Applied {
    pub label: Option<KeyLabel>,
    pub delta: TextDelta,
    pub committed: String,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct Session {
    decoder: Arc<Decoder>,
    template: TrialHeader,
    phase: Phase,
    presented: String,
    committed: String,
    /// Touch behind each committed character; `None` for spaces.
    char_taps: Vec<Option<TouchPoint>>,
    events: Vec<InputEvent>,
    completed: Vec<TrialLog>,
    trial_counter: u32,
}

impl Session {
    /// New session in the preparation phase. `template` supplies the header
    /// fields copied into every trial (layout, condition, block, seed).
    pub fn new(decoder: Arc<Decoder>, template: TrialHeader) -> Session {
        Session {
            decoder,
            template,
            phase: Phase::Preparation,
            presented: String::new(),
            committed: String::new(),
            char_taps: Vec::new(),
            events: Vec::new(),
            completed: Vec::new(),
            trial_counter: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn presented(&self) -> &str {
        &self.presented
    }

    pub fn committed(&self) -> &str {
        &self.committed
    }

    pub fn events(&self) -> &[InputEvent] {
        &self.events
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn completed(&self) -> &[TrialLog] {
        &self.completed
    }

    pub fn template_mut(&mut self) -> &mut TrialHeader {
        &mut self.template
    }

    /// Taps behind the letters of the word currently being typed.
    pub fn tap_context(&self) -> Vec<TouchPoint> {
        let start = self.committed.rfind(' ').map_or(0, |i| i + 1);
        self.char_taps[start..].iter().map(|t| t.expect("letters carry taps")).collect()
    }

    pub fn suggestions(&self) -> SuggestionPair {
        self.decoder.suggest(&self.tap_context())
    }

    pub fn show_phrase(&mut self, phrase: &str) -> Result<(), SessionError> {
        self.apply(Action::ShowPhrase { phrase: phrase.to_string() }).map(|_| ())
    }

    /// Moves a submitted (or fresh) session on to the next scheduled phrase.
    pub fn next_trial(&mut self, schedule: &mut PhraseSchedule, phrases: &PhraseSet) -> Result<(), SessionError> {
        if !matches!(self.phase, Phase::Submitted | Phase::Preparation) {
            return Err(SessionError::Illegal { phase: self.phase, action: "next_trial".into() });
        }
        let phrase = schedule.next_phrase(phrases)?.to_string();
        self.show_phrase(&phrase)
    }

    pub fn apply(&mut self, action: Action) -> Result<Applied, SessionError> {
        let illegal = |phase: Phase, action: &Action| SessionError::Illegal { phase, action: action.name() };
        match action {
            Action::ShowPhrase { ref phrase } => {
                if !matches!(self.phase, Phase::Preparation | Phase::Submitted) {
                    return Err(illegal(self.phase, &action));
                }
                self.presented = normalise_phrase(phrase);
                self.committed.clear();
                self.char_taps.clear();
                self.events.clear();
                self.phase = Phase::PhraseShown;
                Ok(self.applied(None, TextDelta::default()))
            }
            Action::Tap { touch, t_down, t_up } => {
                if !touch.is_finite() {
                    return Err(SessionError::InvalidEvent("touch coordinates must be finite".into()));
                }
                let label = self.decoder.layout().nearest_key(&touch, KeyClass::All).label;
                self.press(label, Some(touch), t_down, t_up, &action)
            }
            Action::Press { label, touch, t_down, t_up } => self.press(label, touch, t_down, t_up, &action),
        }
    }

    fn press(
        &mut self,
        label: KeyLabel,
        touch: Option<TouchPoint>,
        t_down: f64,
        t_up: f64,
        action: &Action,
    ) -> Result<Applied, SessionError> {
        let kind = InputKind::of(label);
        let legal = match self.phase {
            Phase::PhraseShown => kind.is_key_input(),
            Phase::Transcribing => true,
            Phase::Preparation | Phase::Submitted => false,
        };
        if !legal {
            return Err(SessionError::Illegal { phase: self.phase, action: action.name() });
        }
        if !(t_down.is_finite() && t_up.is_finite() && t_up >= t_down) {
            return Err(SessionError::InvalidEvent("need finite times with t_up >= t_down".into()));
        }
        if let Some(prev) = self.events.last() {
            if t_down < prev.t_down {
                return Err(SessionError::OutOfOrder { t_down, previous: prev.t_down });
            }
        }

        let delta = match label {
            KeyLabel::Letter(c) => {
                let at = match touch {
                    Some(p) => p,
                    None => self.decoder.layout().center_of(label).expect("layouts hold every letter"),
                };
                self.char_taps.push(Some(at));
                TextDelta::insert((c as char).to_string())
            }
            KeyLabel::Space => {
                self.char_taps.push(None);
                TextDelta::insert(" ")
            }
            KeyLabel::Backspace => {
                if self.committed.is_empty() {
                    TextDelta::default()
                } else {
                    self.char_taps.pop();
                    TextDelta { removed: 1, inserted: String::new() }
                }
            }
            KeyLabel::Suggestion(slot) => match self.suggestions().slot(slot) {
                Some(s) => {
                    let partial = self.tap_context().len();
                    let layout = self.decoder.layout();
                    self.char_taps.truncate(self.char_taps.len() - partial);
                    for c in s.word.chars() {
                        let center = KeyLabel::letter(c).and_then(|l| layout.center_of(l).ok());
                        self.char_taps.push(Some(center.expect("lexicon words are a-z")));
                    }
                    self.char_taps.push(None);
                    TextDelta { removed: partial, inserted: format!("{} ", s.word) }
                }
                None => TextDelta::default(),
            },
            KeyLabel::Submit => TextDelta::default(),
        };
        delta.apply(&mut self.committed);
        self.events.push(InputEvent { t_down, t_up, label, kind, touch, delta: delta.clone() });

        if label == KeyLabel::Submit {
            self.phase = Phase::Submitted;
            self.trial_counter += 1;
            let header = TrialHeader {
                presented: self.presented.clone(),
                trial: if self.template.trial > 0 { self.template.trial } else { self.trial_counter },
                ..self.template.clone()
            };
            self.completed.push(TrialLog {
                header,
                events: self.events.clone(),
                transcribed: self.committed.clone(),
            });
        } else {
            self.phase = Phase::Transcribing;
        }
        Ok(self.applied(Some(label), delta))
    }

    fn applied(&self, label: Option<KeyLabel>, delta: TextDelta) -> Applied {
        Applied { label, delta, committed: self.committed.clone(), phase: self.phase }
    }

    /// Metrics of the most recent submitted trial.
    pub fn last_metrics(&self) -> Option<Result<MetricsReport, MetricsError>> {
        self.completed.last().map(MetricsReport::compute)
    }
}
