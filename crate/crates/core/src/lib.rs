//! Virtual QWERTY geometry, statistical word suggestions, a noisy-typist
//! simulator and text-entry metrics for thumb typing on a virtual keyboard.
//!
//! The shipped lexicon, phrase set and default experiment config are
//! embedded so the library works without any files on disk.

// `!(x > 0.0)` is the validation idiom here: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoder;
pub mod geometry;
pub mod lexicon;
pub mod metrics;
pub mod session;
pub mod simulator;

pub use decoder::{BeamParams, CandidateSequence, Decoder, SpatialModel, Suggestion, SuggestionPair};
pub use geometry::{build_layout, resolve_layout, Key, KeyClass, KeyLabel, KeyboardLayout, LayoutOverrides, TouchPoint};
pub use lexicon::{Lexicon, LoadReport, WordEntry};
pub use metrics::{MetricsReport, Summary, TrialHeader, TrialLog};
pub use session::{load_phrases, Action, Phase, PhraseSchedule, PhraseSet, Session};
pub use simulator::{run_experiment, simulate_trial, ExperimentConfig, ExperimentPlan, TypistProfile};

/// Word frequency table, `word<TAB>count` per line.
pub const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.tsv");
/// One phrase per line, before out-of-vocabulary filtering.
pub const SHIPPED_PHRASES: &str = include_str!("../data/phrases.txt");
/// Default experiment: an AR thumb condition and a smartphone baseline.
pub const DEFAULT_CONFIG: &str = include_str!("../data/default.toml");

/// Parses the embedded lexicon.
pub fn shipped_lexicon() -> (Lexicon, LoadReport) {
    Lexicon::from_reader(SHIPPED_LEXICON.as_bytes()).expect("embedded lexicon parses")
}

/// The embedded phrases filtered against `lexicon`.
pub fn shipped_phrases(lexicon: &Lexicon) -> PhraseSet {
    load_phrases(SHIPPED_PHRASES, "shipped", lexicon).expect("embedded phrases survive filtering")
}
