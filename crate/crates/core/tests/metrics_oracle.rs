use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thumbkey_core::metrics::*;
use thumbkey_core::KeyLabel;

/// Whether `b` is reachable from `a` within `budget` unit edits, by plain
/// recursion over the last characters (no table, no memo).
fn within(a: &[u8], b: &[u8], budget: usize) -> bool {
    if a.len().abs_diff(b.len()) > budget {
        return false;
    }
    match (a.split_last(), b.split_last()) {
        (None, _) | (_, None) => true,
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                return within(ra, rb, budget);
            }
            budget > 0 && (within(ra, rb, budget - 1) || within(ra, b, budget - 1) || within(a, rb, budget - 1))
        }
    }
}

/// Smallest budget that succeeds.
fn recursive_distance(a: &[u8], b: &[u8]) -> usize {
    (0..).find(|&k| within(a, b, k)).unwrap()
}

/// Random string over a small alphabet, biased toward a shared base so pairs
/// stay within a few edits and the recursion stays cheap.
fn near_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    let alphabet = b"abcde ";
    let n = rng.random_range(0..=20);
    let a: Vec<u8> = (0..n).map(|_| *alphabet.choose(rng).unwrap()).collect();
    let mut b = a.clone();
    for _ in 0..rng.random_range(0..=6) {
        match rng.random_range(0..3) {
            0 if !b.is_empty() => {
                let i = rng.random_range(0..b.len());
                b.remove(i);
            }
            1 if b.len() < 20 => {
                let i = rng.random_range(0..=b.len());
                b.insert(i, *alphabet.choose(rng).unwrap());
            }
            _ if !b.is_empty() => {
                let i = rng.random_range(0..b.len());
                b[i] = *alphabet.choose(rng).unwrap();
            }
            _ => {}
        }
    }
    (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap())
}

#[test]
fn msd_matches_recursive_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let (a, b) = near_pair(&mut rng);
        assert_eq!(msd(&a, &b), recursive_distance(a.as_bytes(), b.as_bytes()), "{a:?} {b:?}");
    }
    // Short unrelated strings exercise the full recursion.
    for _ in 0..200 {
        let a: String = (0..rng.random_range(0..8)).map(|_| rng.random_range(b'a'..=b'c') as char).collect();
        let b: String = (0..rng.random_range(0..8)).map(|_| rng.random_range(b'a'..=b'c') as char).collect();
        assert_eq!(msd(&a, &b), recursive_distance(a.as_bytes(), b.as_bytes()));
    }
}

#[test]
fn msd_is_a_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let word = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.random_range(0..=20)).map(|_| rng.random_range(b'a'..=b'd') as char).collect()
    };
    for _ in 0..500 {
        let (a, b, c) = (word(&mut rng), word(&mut rng), word(&mut rng));
        assert_eq!(msd(&a, &b), msd(&b, &a));
        assert_eq!(msd(&a, &a), 0);
        assert_eq!(msd(&a, &b) == 0, a == b);
        assert!(msd(&a, &c) <= msd(&a, &b) + msd(&b, &c));
    }
}

fn key_event(t_down: f64, t_up: f64, label: KeyLabel, delta: TextDelta) -> InputEvent {
    InputEvent { t_down, t_up, label, kind: InputKind::of(label), touch: None, delta }
}

/// A log that types `typed` one key at a time, optionally fixing `fixes`
/// characters with backspace, then submits.
fn typed_log(presented: &str, typed: &str, times: &[f64], kpd: f64) -> TrialLog {
    let mut events = Vec::new();
    let mut text = String::new();
    for (c, &t) in typed.chars().zip(times) {
        let (label, delta) = match c {
            '<' => (KeyLabel::Backspace, TextDelta { removed: usize::from(!text.is_empty()), inserted: String::new() }),
            ' ' => (KeyLabel::Space, TextDelta::insert(" ")),
            c => (KeyLabel::letter(c).unwrap(), TextDelta::insert(c.to_string())),
        };
        delta.apply(&mut text);
        events.push(key_event(t, t + kpd, label, delta));
    }
    let last = times.last().copied().unwrap_or(0.0) + 500.0;
    events.push(key_event(last, last + kpd, KeyLabel::Submit, TextDelta::default()));
    TrialLog { header: TrialHeader { presented: presented.into(), ..Default::default() }, events, transcribed: text }
}

#[test]
fn closed_form_instances() {
    let times: Vec<f64> = (0..7).map(|i| i as f64 * 1000.0).collect();
    let log = typed_log("abcdefg", "abcdefg", &times, 100.0);
    assert!((wpm(&log).unwrap() - 12.0).abs() < 1e-12);
    assert_eq!(uncorrected_error_rate(&log).unwrap(), 0.0);

    let log = typed_log("the cat", "the bat", &times, 100.0);
    assert!((uncorrected_error_rate(&log).unwrap() - 100.0 / 7.0).abs() < 1e-12);

    let times: Vec<f64> = (0..11).map(|i| i as f64 * 300.0).collect();
    let log = typed_log("the quick", "the quix<ck", &times, 139.0);
    assert_eq!(log.transcribed, "the quick");
    assert_eq!(backspace_count(&log), 1);
    assert!((corrected_error_rate(&log).unwrap() - 10.0).abs() < 1e-12);
    assert!((mean_kpd(&log).unwrap() - 139.0).abs() < 1e-12);
}

#[test]
fn iki_and_kpd_match_pairwise_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let n = rng.random_range(2..30);
        let mut t = 0.0;
        let mut times = Vec::new();
        for _ in 0..n {
            t += rng.random_range(0.0..900.0);
            times.push(t);
        }
        let typed: String = (0..n).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        let mut log = typed_log(&typed, &typed, &times, 0.0);
        for e in log.events.iter_mut() {
            e.t_up = e.t_down + rng.random_range(0.0..250.0);
        }
        let want_iki: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(iki_series(&log).unwrap(), want_iki);
        let want_kpd: Vec<f64> = log.events.iter().filter(|e| e.kind.is_key_input()).map(|e| e.t_up - e.t_down).collect();
        assert_eq!(kpd_series(&log).unwrap(), want_kpd);
        assert!((duration_ms(&log).unwrap() - (times[n - 1] - times[0])).abs() < 1e-9);
    }
}

#[test]
fn single_key_input_is_undefined() {
    let log = typed_log("a", "a", &[0.0], 50.0);
    assert!(wpm(&log).is_err());
    assert!(mean_iki(&log).is_err());
    assert_eq!(mean_kpd(&log).unwrap(), 50.0);
}

#[test]
fn jsonl_round_trip_preserves_logs() {
    let times: Vec<f64> = (0..9).map(|i| i as f64 * 311.7).collect();
    let logs = vec![
        typed_log("the cat", "thr<e cat", &times, 80.25),
        typed_log("a dog", "a dog", &times, 91.0),
    ];
    let text = trials_to_jsonl(&logs);
    let back = parse_trials(&text).unwrap();
    assert_eq!(back, logs);
    assert_eq!(trials_to_jsonl(&back), text);
}

#[test]
fn corrupt_record_names_line() {
    let times: Vec<f64> = (0..3).map(|i| i as f64 * 100.0).collect();
    let mut text = typed_log("abc", "abc", &times, 50.0).to_jsonl();
    text = text.replacen("\"record\":\"event\"", "\"record\":\"evnt\"", 1);
    match parse_trials(&text) {
        Err(MetricsError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn summary_statistics() {
    let times: Vec<f64> = (0..7).map(|i| i as f64 * 1000.0).collect();
    let mut a = MetricsReport::compute(&typed_log("abcdefg", "abcdefg", &times, 100.0)).unwrap();
    let mut b = a.clone();
    a.wpm = 10.0;
    b.wpm = 20.0;
    let s = summarize(&[("g".into(), a.clone()), ("g".into(), b), ("h".into(), a)]).unwrap();
    let g = s.group("g").unwrap().stat(Metric::Wpm);
    assert_eq!(g.mean, 15.0);
    assert!((g.sd - 50f64.sqrt()).abs() < 1e-12);
    let h = s.group("h").unwrap().stat(Metric::Wpm);
    assert!(!h.sd_defined && h.sd == 0.0);
    let table = s.to_table();
    for m in Metric::ALL {
        assert!(table.contains(m.title()));
    }
    assert_eq!(s.to_csv().lines().count(), 1 + 2 * 6);
}

proptest! {
    #[test]
    fn error_rates_are_bounded(
        presented in "[a-c ]{1,15}",
        transcribed in "[a-c ]{0,15}",
        backspaces in 0usize..10,
    ) {
        let mut events = Vec::new();
        let mut t = 0.0;
        for _ in 0..backspaces {
            events.push(key_event(t, t + 1.0, KeyLabel::Backspace, TextDelta::default()));
            t += 10.0;
        }
        for c in transcribed.chars() {
            let label = if c == ' ' { KeyLabel::Space } else { KeyLabel::letter(c).unwrap() };
            events.push(key_event(t, t + 1.0, label, TextDelta::insert(c.to_string())));
            t += 10.0;
        }
        events.push(key_event(t, t + 1.0, KeyLabel::Submit, TextDelta::default()));
        let log = TrialLog { header: TrialHeader { presented: presented.clone(), ..Default::default() }, events, transcribed };
        let uer = uncorrected_error_rate(&log).unwrap();
        let cer = corrected_error_rate(&log).unwrap();
        prop_assert!((0.0..=100.0).contains(&uer));
        prop_assert!((0.0..=100.0).contains(&cer));
        if backspaces == 0 {
            prop_assert_eq!(uer, cer);
        }
        if log.transcribed == presented && backspaces > 0 {
            prop_assert!(cer > uer);
        }
    }

    #[test]
    fn wpm_falls_as_duration_grows(len in 2usize..40, step in 50.0f64..900.0, extra in 1.0f64..5000.0) {
        let text: String = "abcdefghij".chars().cycle().take(len).collect();
        let fast: Vec<f64> = (0..len).map(|i| i as f64 * step).collect();
        let mut slow = fast.clone();
        *slow.last_mut().unwrap() += extra;
        let a = wpm(&typed_log(&text, &text, &fast, 10.0)).unwrap();
        let b = wpm(&typed_log(&text, &text, &slow, 10.0)).unwrap();
        prop_assert!(b < a);
    }
}
