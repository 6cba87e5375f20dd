use thumbkey_core::{load_phrases, shipped_lexicon, shipped_phrases, Lexicon, PhraseSchedule, SHIPPED_PHRASES};

/// Retained and removed counts for the shipped phrase and word lists.
const KEPT: usize = 147;
const REMOVED: usize = 49;

#[test]
fn shipped_filter_counts_are_stable() {
    let (lex, _) = shipped_lexicon();
    let set = shipped_phrases(&lex);
    assert_eq!((set.len(), set.removed.len()), (KEPT, REMOVED));
    assert_eq!(SHIPPED_PHRASES.lines().filter(|l| !l.trim().is_empty()).count(), KEPT + REMOVED);
    assert_eq!(shipped_phrases(&lex), set);
}

#[test]
fn removed_exactly_the_phrases_with_unknown_words() {
    let (lex, _) = shipped_lexicon();
    let set = shipped_phrases(&lex);
    for p in &set.phrases {
        assert!(p.split(' ').all(|w| lex.contains_word(w)), "{p}");
        assert_eq!(p.trim(), p);
        assert!(p.bytes().all(|b| b.is_ascii_lowercase() || b == b' '));
        assert!(!p.contains("  "));
    }
    for p in &set.removed {
        assert!(p.split(' ').any(|w| !lex.contains_word(w)), "{p}");
    }
}

#[test]
fn normalises_and_filters() {
    let lex = Lexicon::from_counts([("the", 3), ("cat", 2), ("runs", 1)]).unwrap();
    let set = load_phrases("The  Cat\nxqzt runs\n\n", "inline", &lex).unwrap();
    assert_eq!(set.phrases, ["the cat"]);
    assert_eq!(set.removed, ["xqzt runs"]);
    assert!(load_phrases("xqzt\n", "inline", &lex).is_err());
}

#[test]
fn schedule_is_seeded_and_distinct() {
    let (lex, _) = shipped_lexicon();
    let set = shipped_phrases(&lex);
    let a = PhraseSchedule::new(set.len(), 42, false).take(&set, 10).unwrap();
    let b = PhraseSchedule::new(set.len(), 42, false).take(&set, 10).unwrap();
    assert_eq!(a, b);
    let mut d = a.clone();
    d.sort();
    d.dedup();
    assert_eq!(d.len(), 10);
    let tiny = load_phrases("the\nof\nand\n", "inline", &lex).unwrap();
    assert!(PhraseSchedule::new(tiny.len(), 1, false).take(&tiny, 10).is_err());
    assert_eq!(PhraseSchedule::new(tiny.len(), 1, true).take(&tiny, 10).unwrap().len(), 10);
}
