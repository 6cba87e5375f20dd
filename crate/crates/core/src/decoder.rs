//! Statistical word suggestion from noisy taps.
//!
//! Each tap yields a normalised distribution over the 26 letters from
//! isotropic Gaussians centred on the letter keys. Sequence probabilities are
//! products of per-tap probabilities, and a word is scored as the probability
//! of its first `taps.len()` letters times its language-model probability.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{KeyClass, KeyboardLayout, TouchPoint};
use crate::lexicon::{Lexicon, PrefixNode};

pub type LetterDistribution = [f64; 26];

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("no taps to decode")]
    EmptyTaps,
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("beam must keep at least one letter per tap and one sequence")]
    BadBeam,
}

/// Per-letter Gaussian touch model over a layout.
#[derive(Debug, Clone)]
pub struct SpatialModel {
    layout: KeyboardLayout,
    centers: [TouchPoint; 26],
    sigma: f64,
}

impl SpatialModel {
    /// Model with sigma equal to the layout's column pitch.
    pub fn new(layout: &KeyboardLayout) -> SpatialModel {
        SpatialModel {
            layout: layout.clone(),
            centers: layout.letter_centers(),
            sigma: layout.column_pitch(),
        }
    }

    pub fn with_sigma(layout: &KeyboardLayout, sigma: f64) -> Result<SpatialModel, DecodeError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(DecodeError::BadSigma(sigma));
        }
        Ok(SpatialModel { sigma, ..SpatialModel::new(layout) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn layout(&self) -> &KeyboardLayout {
        &self.layout
    }

    /// Normalised letter distribution for a touch at `p`.
    pub fn spatial_probabilities(&self, p: &TouchPoint) -> LetterDistribution {
        let mut d2 = [0.0; 26];
        for (slot, c) in d2.iter_mut().zip(&self.centers) {
            *slot = c.distance_sq(p);
        }
        // Shift by the nearest key so the densest term is exactly 1.
        let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let denom = 2.0 * self.sigma * self.sigma;
        let mut out = [0.0; 26];
        let mut total = 0.0;
        for (w, d) in out.iter_mut().zip(&d2) {
            *w = (-(d - nearest) / denom).exp();
            total += *w;
        }
        for w in &mut out {
            *w /= total;
        }
        out
    }

    /// Nearest letter per tap; the text committed without a suggestion.
    pub fn literal_string(&self, taps: &[TouchPoint]) -> String {
        taps.iter()
            .filter_map(|p| self.layout.nearest_key(p, KeyClass::Letters).label.as_letter())
            .collect()
    }
}

/// Most probable letter, ties to the earlier letter.
pub fn argmax_letter(dist: &LetterDistribution) -> char {
    let mut best = 0;
    for i in 1..26 {
        if dist[i] > dist[best] {
            best = i;
        }
    }
    (b'a' + best as u8) as char
}

/// Pruning bounds for sequence expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub letters_per_tap: usize,
    pub max_sequences: usize,
    /// Letters whose probability is below this fraction of the tap's most
    /// likely letter are not expanded.
    #[serde(default)]
    pub min_letter_ratio: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams { letters_per_tap: 26, max_sequences: 500, min_letter_ratio: 1e-2 }
    }
}

impl BeamParams {
    /// No pruning at all: every letter on every tap, unbounded sequence count.
    pub fn wide_open() -> Self {
        BeamParams { letters_per_tap: 26, max_sequences: usize::MAX, min_letter_ratio: 0.0 }
    }

    fn check(&self) -> Result<(), DecodeError> {
        if self.letters_per_tap == 0 || self.max_sequences == 0 || !(0.0..1.0).contains(&self.min_letter_ratio) {
            return Err(DecodeError::BadBeam);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSequence {
    pub letters: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub word: String,
    pub score: f64,
}

/// Left (best) and right (runner-up) suggestion buttons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuggestionPair {
    pub first: Option<Suggestion>,
    pub second: Option<Suggestion>,
}

impl SuggestionPair {
    pub fn from_ranked(mut ranked: Vec<Suggestion>) -> SuggestionPair {
        ranked.truncate(2);
        let mut it = ranked.into_iter();
        SuggestionPair { first: it.next(), second: it.next() }
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_none()
    }

    pub fn slot(&self, slot: u8) -> Option<&Suggestion> {
        match slot {
            0 => self.first.as_ref(),
            1 => self.second.as_ref(),
            _ => None,
        }
    }

    /// Slot holding `word`, if shown.
    pub fn position(&self, word: &str) -> Option<u8> {
        [&self.first, &self.second]
            .iter()
            .position(|s| s.as_ref().is_some_and(|s| s.word == word))
            .map(|p| p as u8)
    }

    pub fn words(&self) -> Vec<&str> {
        [&self.first, &self.second].into_iter().flatten().map(|s| s.word.as_str()).collect()
    }
}

/// Descending probability, then lexicographic text.
fn by_prob_then_text(pa: f64, ta: &str, pb: f64, tb: &str) -> Ordering {
    pb.total_cmp(&pa).then_with(|| ta.cmp(tb))
}

/// Letters of `dist` worth expanding, best first.
fn top_letters(dist: &LetterDistribution, beam: &BeamParams) -> Vec<(u8, f64)> {
    let mut letters: Vec<(u8, f64)> = (0..26u8).map(|i| (b'a' + i, dist[i as usize])).collect();
    letters.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let floor = letters[0].1 * beam.min_letter_ratio;
    letters.retain(|&(_, p)| p >= floor);
    letters.truncate(beam.letters_per_tap.min(26));
    letters
}

/// Ranked character sequences for `taps` under `beam` pruning.
pub fn sequence_candidates(
    model: &SpatialModel,
    taps: &[TouchPoint],
    beam: &BeamParams,
) -> Result<Vec<CandidateSequence>, DecodeError> {
    beam.check()?;
    if taps.is_empty() {
        return Err(DecodeError::EmptyTaps);
    }
    let mut live = vec![CandidateSequence { letters: String::new(), prob: 1.0 }];
    for tap in taps {
        let letters = top_letters(&model.spatial_probabilities(tap), beam);
        let mut next = Vec::with_capacity(live.len() * letters.len());
        for seq in &live {
            for &(c, p) in &letters {
                let mut text = seq.letters.clone();
                text.push(c as char);
                next.push(CandidateSequence { letters: text, prob: seq.prob * p });
            }
        }
        next.sort_by(|a, b| by_prob_then_text(a.prob, &a.letters, b.prob, &b.letters));
        next.truncate(beam.max_sequences);
        live = next;
    }
    Ok(live)
}

struct Hypothesis {
    node: PrefixNode,
    letters: Vec<u8>,
    prob: f64,
}

/// Top `k` words for `taps`, best first. Empty when no lexicon word extends
/// a surviving candidate sequence.
pub fn suggest_top_k(
    model: &SpatialModel,
    lexicon: &Lexicon,
    taps: &[TouchPoint],
    beam: &BeamParams,
    k: usize,
) -> Vec<Suggestion> {
    if taps.is_empty() || k == 0 || beam.check().is_err() {
        return Vec::new();
    }
    let mut live = vec![Hypothesis { node: lexicon.root(), letters: Vec::new(), prob: 1.0 }];
    for tap in taps {
        let letters = top_letters(&model.spatial_probabilities(tap), beam);
        let mut next = Vec::new();
        for hyp in &live {
            for &(c, p) in &letters {
                // Sequences that prefix no lexicon word are dropped here.
                if let Some(node) = lexicon.child(hyp.node, c) {
                    let mut text = hyp.letters.clone();
                    text.push(c);
                    next.push(Hypothesis { node, letters: text, prob: hyp.prob * p });
                }
            }
        }
        if next.len() > beam.max_sequences {
            // Letter strings are unique, so the kept set is fully determined.
            next.select_nth_unstable_by(beam.max_sequences - 1, |a, b| {
                b.prob.total_cmp(&a.prob).then_with(|| a.letters.cmp(&b.letters))
            });
            next.truncate(beam.max_sequences);
        }
        if next.is_empty() {
            return Vec::new();
        }
        live = next;
    }

    // Live hypotheses cover disjoint subtrees, and inside one subtree the
    // spatial factor is shared, so the global top-k is drawn from the
    // per-subtree top-k lists.
    let mut scored: Vec<Suggestion> = live
        .iter()
        .flat_map(|hyp| {
            lexicon
                .top_words(hyp.node, k)
                .into_iter()
                .map(move |e| Suggestion { word: e.word.clone(), score: hyp.prob * e.lm_prob })
        })
        .collect();
    scored.sort_by(|a, b| by_prob_then_text(a.score, &a.word, b.score, &b.word));
    scored.truncate(k);
    scored
}

pub fn suggest(model: &SpatialModel, lexicon: &Lexicon, taps: &[TouchPoint], beam: &BeamParams) -> SuggestionPair {
    SuggestionPair::from_ranked(suggest_top_k(model, lexicon, taps, beam, 2))
}

/// A spatial model, lexicon and beam bundled for repeated use.
#[derive(Debug, Clone)]
pub struct Decoder {
    model: SpatialModel,
    lexicon: Arc<Lexicon>,
    beam: BeamParams,
}

impl Decoder {
    pub fn new(layout: &KeyboardLayout, lexicon: Arc<Lexicon>) -> Decoder {
        Decoder { model: SpatialModel::new(layout), lexicon, beam: BeamParams::default() }
    }

    pub fn with_model(model: SpatialModel, lexicon: Arc<Lexicon>, beam: BeamParams) -> Decoder {
        Decoder { model, lexicon, beam }
    }

    pub fn model(&self) -> &SpatialModel {
        &self.model
    }

    pub fn layout(&self) -> &KeyboardLayout {
        self.model.layout()
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn shared_lexicon(&self) -> Arc<Lexicon> {
        Arc::clone(&self.lexicon)
    }

    pub fn beam(&self) -> BeamParams {
        self.beam
    }

    pub fn suggest(&self, taps: &[TouchPoint]) -> SuggestionPair {
        suggest(&self.model, &self.lexicon, taps, &self.beam)
    }

    pub fn candidates(&self, taps: &[TouchPoint]) -> Result<Vec<CandidateSequence>, DecodeError> {
        sequence_candidates(&self.model, taps, &self.beam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, LayoutOverrides};

    fn layout() -> KeyboardLayout {
        build_layout("enlarged", &LayoutOverrides::default()).unwrap()
    }

    fn centers(l: &KeyboardLayout, word: &str) -> Vec<TouchPoint> {
        word.chars().map(|c| l.key_center(&c.to_string()).unwrap()).collect()
    }

    #[test]
    fn default_sigma_is_pitch() {
        let l = layout();
        assert_eq!(SpatialModel::new(&l).sigma(), 8.0);
        assert_eq!(SpatialModel::with_sigma(&l, 0.0).unwrap_err(), DecodeError::BadSigma(0.0));
    }

    #[test]
    fn peak_at_key_center() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let d = m.spatial_probabilities(&l.key_center("t").unwrap());
        assert_eq!(argmax_letter(&d), 't');
        let sum: f64 = d.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_is_symmetric() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let t = l.key_center("t").unwrap();
        let y = l.key_center("y").unwrap();
        let d = m.spatial_probabilities(&t.midpoint(&y));
        assert_eq!(d[(b't' - b'a') as usize], d[(b'y' - b'a') as usize]);
    }

    #[test]
    fn between_keys_gives_two_dominant_masses() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let p = l.key_center("t").unwrap().offset(3.5, 0.0);
        let d = m.spatial_probabilities(&p);
        let mut order: Vec<usize> = (0..26).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
        assert_eq!((order[0], order[1]), ((b't' - b'a') as usize, (b'y' - b'a') as usize));
        let tail = d[(b'p' - b'a') as usize];
        assert!(tail < d[order[1]] / 50.0, "{tail}");
    }

    #[test]
    fn empty_taps_and_bad_beam() {
        let m = SpatialModel::new(&layout());
        assert_eq!(sequence_candidates(&m, &[], &BeamParams::default()), Err(DecodeError::EmptyTaps));
        let bad = BeamParams { letters_per_tap: 0, ..BeamParams::default() };
        assert_eq!(
            sequence_candidates(&m, &[TouchPoint::default()], &bad),
            Err(DecodeError::BadBeam)
        );
    }

    #[test]
    fn single_tap_top_candidate() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let c = sequence_candidates(&m, &centers(&l, "a"), &BeamParams::default()).unwrap();
        assert_eq!(c[0].letters, "a");
        let d = m.spatial_probabilities(&l.key_center("a").unwrap());
        let kept = d.iter().filter(|&&p| p >= c[0].prob * 1e-2).count();
        assert_eq!(c.len(), kept);
        let narrow = BeamParams { letters_per_tap: 5, ..BeamParams::default() };
        assert_eq!(sequence_candidates(&m, &centers(&l, "a"), &narrow).unwrap().len(), 5);
    }

    #[test]
    fn product_of_maxima() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let taps = centers(&l, "the");
        let c = sequence_candidates(&m, &taps, &BeamParams::default()).unwrap();
        let expect: f64 = taps
            .iter()
            .map(|p| m.spatial_probabilities(p).iter().copied().fold(0.0, f64::max))
            .fold(1.0, |acc, p| acc * p);
        assert_eq!(c[0].letters, "the");
        assert_eq!(c[0].prob, expect);
        assert!(c.windows(2).all(|w| w[0].prob >= w[1].prob));
    }

    #[test]
    fn language_model_breaks_spatial_tie() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let lex = Lexicon::from_counts([("the", 5), ("they", 3), ("cat", 2)]).unwrap();
        let pair = suggest(&m, &lex, &centers(&l, "th"), &BeamParams::default());
        assert_eq!(pair.first.as_ref().unwrap().word, "the");
        assert_eq!(pair.second.as_ref().unwrap().word, "they");
        assert!(pair.first.unwrap().score >= pair.second.unwrap().score);
    }

    #[test]
    fn far_taps_yield_empty_pair() {
        let l = layout();
        let m = SpatialModel::new(&l);
        let lex = Lexicon::from_counts([("the", 5), ("cat", 2)]).unwrap();
        let pair = suggest(&m, &lex, &centers(&l, "zzz"), &BeamParams::default());
        assert!(pair.is_empty());
        assert!(suggest(&m, &lex, &[], &BeamParams::default()).is_empty());
    }

    #[test]
    fn literal_path() {
        let l = layout();
        let m = SpatialModel::new(&l);
        assert_eq!(m.literal_string(&centers(&l, "cat")), "cat");
        let j = l.key_center("j").unwrap();
        let k = l.key_center("k").unwrap();
        assert_eq!(m.literal_string(&[j.midpoint(&k)]), "j");
    }

    #[test]
    fn pair_lookup() {
        let pair = SuggestionPair::from_ranked(vec![
            Suggestion { word: "the".into(), score: 0.3 },
            Suggestion { word: "they".into(), score: 0.2 },
            Suggestion { word: "them".into(), score: 0.1 },
        ]);
        assert_eq!(pair.position("they"), Some(1));
        assert_eq!(pair.position("them"), None);
        assert_eq!(pair.words(), ["the", "they"]);
    }
}
