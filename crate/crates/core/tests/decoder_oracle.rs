use std::cmp::Ordering;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thumbkey_core::decoder::{sequence_candidates, suggest, suggest_top_k};
use thumbkey_core::{
    build_layout, shipped_lexicon, BeamParams, Decoder, KeyClass, KeyboardLayout, LayoutOverrides, Lexicon, SpatialModel,
    TouchPoint,
};

fn layout(name: &str) -> KeyboardLayout {
    build_layout(name, &LayoutOverrides::default()).unwrap()
}

/// Per-letter Gaussian weights evaluated directly from the key centers.
fn direct_distribution(layout: &KeyboardLayout, sigma: f64, p: &TouchPoint) -> Vec<f64> {
    let weights: Vec<f64> = (b'a'..=b'z')
        .map(|c| {
            let k = layout.key_center(&(c as char).to_string()).unwrap();
            let d2 = (p.x - k.x).powi(2) + (p.y - k.y).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Scores every lexicon word long enough to cover the taps.
fn exhaustive_top2(layout: &KeyboardLayout, lexicon: &Lexicon, taps: &[TouchPoint]) -> Vec<(String, f64)> {
    let sigma = layout.column_pitch();
    let dists: Vec<Vec<f64>> = taps.iter().map(|t| direct_distribution(layout, sigma, t)).collect();
    let mut scored: Vec<(String, f64)> = lexicon
        .entries()
        .iter()
        .filter(|e| e.word.len() >= taps.len())
        .map(|e| {
            let spatial: f64 = e.word.bytes().zip(&dists).map(|(c, d)| d[(c - b'a') as usize]).product();
            (e.word.clone(), spatial * e.lm_prob)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(2);
    scored
}

fn random_lexicon(pool: &[&str], rng: &mut ChaCha8Rng) -> Lexicon {
    let words: Vec<&str> = pool.choose_multiple(rng, 200).copied().collect();
    // Small count range so equal language-model probabilities occur often.
    let rows: Vec<(&str, u64)> = words.iter().map(|w| (*w, rng.random_range(1..=20))).collect();
    Lexicon::from_counts(rows).unwrap()
}

fn noisy_taps(layout: &KeyboardLayout, word: &str, n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<TouchPoint> {
    word.chars()
        .take(n)
        .map(|c| {
            let k = layout.key_center(&c.to_string()).unwrap();
            k.offset(rng.random_range(-spread..=spread), rng.random_range(-spread..=spread))
        })
        .collect()
}

#[test]
fn wide_open_beam_matches_exhaustive_scoring() {
    let (shipped, _) = shipped_lexicon();
    let pool: Vec<&str> = shipped.entries().iter().map(|e| e.word.as_str()).filter(|w| w.len() >= 2).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let l = layout(if case % 2 == 0 { "enlarged" } else { "original" });
        let model = SpatialModel::new(&l);
        let lex = random_lexicon(&pool, &mut rng);
        let n = rng.random_range(2..=6);
        let taps = if case % 5 == 0 {
            (0..n).map(|_| TouchPoint::new(rng.random_range(-10.0..80.0), rng.random_range(-5.0..22.0))).collect()
        } else {
            let long: Vec<&str> = lex.entries().iter().map(|e| e.word.as_str()).filter(|w| w.len() >= n).collect();
            let target = long.choose(&mut rng).copied().unwrap_or("qwertyuiop");
            noisy_taps(&l, target, n, l.column_pitch(), &mut rng)
        };
        let got = suggest_top_k(&model, &lex, &taps, &BeamParams::wide_open(), 2);
        let want = exhaustive_top2(&l, &lex, &taps);
        let got_words: Vec<&str> = got.iter().map(|s| s.word.as_str()).collect();
        let want_words: Vec<&str> = want.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(got_words, want_words, "case {case}");
        for (g, (_, w)) in got.iter().zip(&want) {
            assert!((g.score - w).abs() <= 1e-12 * w.abs().max(1e-300), "case {case}: {} vs {w}", g.score);
        }
    }
}

#[test]
fn distribution_at_offset_matches_direct_density() {
    let l = layout("enlarged");
    let model = SpatialModel::new(&l);
    let p = l.key_center("t").unwrap().offset(2.0, 0.0);
    let got = model.spatial_probabilities(&p);
    let want = direct_distribution(&l, 8.0, &p);
    for i in 0..26 {
        assert!((got[i] - want[i]).abs() < 1e-12, "{}: {} vs {}", (b'a' + i as u8) as char, got[i], want[i]);
    }
}

#[test]
fn three_taps_wide_open_equals_full_enumeration() {
    let l = layout("enlarged");
    let model = SpatialModel::new(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let taps: Vec<TouchPoint> =
            (0..3).map(|_| TouchPoint::new(rng.random_range(-4.0..76.0), rng.random_range(-4.0..20.0))).collect();
        let dists: Vec<Vec<f64>> = taps.iter().map(|t| direct_distribution(&l, 8.0, t)).collect();
        let mut all = Vec::with_capacity(26 * 26 * 26);
        for a in 0..26 {
            for b in 0..26 {
                for c in 0..26 {
                    let s: String = [a, b, c].iter().map(|&i| (b'a' + i as u8) as char).collect();
                    all.push((s, dists[0][a] * dists[1][b] * dists[2][c]));
                }
            }
        }
        all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(&y.0)));
        let got = sequence_candidates(&model, &taps, &BeamParams::wide_open()).unwrap();
        assert_eq!(got.len(), all.len());
        // Compare the head exactly and the whole ranking up to float noise.
        for (g, (s, p)) in got.iter().zip(&all).take(200) {
            assert_eq!(&g.letters, s);
            assert!((g.prob - p).abs() < 1e-12);
        }
        for (g, (_, p)) in got.iter().zip(&all) {
            assert!((g.prob - p).abs() < 1e-12);
        }
    }
}

#[test]
fn literal_string_is_per_tap_nearest_letter() {
    let l = layout("original");
    let model = SpatialModel::new(&l);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let n = rng.random_range(1..10);
        let taps: Vec<TouchPoint> =
            (0..n).map(|_| TouchPoint::new(rng.random_range(-5.0..65.0), rng.random_range(-5.0..18.0))).collect();
        let want: String =
            taps.iter().map(|t| l.nearest_key(t, KeyClass::Letters).label.as_letter().unwrap()).collect();
        assert_eq!(model.literal_string(&taps), want);
    }
}

#[test]
fn shipped_lexicon_decodes_the() {
    let (lex, _) = shipped_lexicon();
    let l = layout("enlarged");
    let taps: Vec<TouchPoint> = ["t", "h", "e"].iter().map(|k| l.key_center(k).unwrap()).collect();
    let pair = Decoder::new(&l, Arc::new(lex)).suggest(&taps);
    assert_eq!(pair.first.unwrap().word, "the");
}

#[test]
fn zzz_gives_empty_pair_against_small_lexicon() {
    let lex = Lexicon::from_counts([("the", 5), ("cat", 3)]).unwrap();
    let l = layout("enlarged");
    let taps = vec![l.key_center("z").unwrap(); 3];
    assert!(suggest(&SpatialModel::new(&l), &lex, &taps, &BeamParams::default()).is_empty());
}

#[test]
fn default_beam_keeps_top_word_under_moderate_noise() {
    let (lex, _) = shipped_lexicon();
    let l = layout("enlarged");
    let model = SpatialModel::new(&l);
    let sigma = l.column_pitch() / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let words: Vec<&str> = lex.entries().iter().map(|e| e.word.as_str()).filter(|w| w.len() >= 2).collect();
    let trials = 2000;
    let mut agree = 0;
    for _ in 0..trials {
        let w = words.choose(&mut rng).unwrap();
        let n = rng.random_range(1..=w.len().min(6));
        let taps: Vec<TouchPoint> = w
            .chars()
            .take(n)
            .map(|c| {
                let k = l.key_center(&c.to_string()).unwrap();
                let dx: f64 = rng.sample(rand_distr::StandardNormal);
                let dy: f64 = rng.sample(rand_distr::StandardNormal);
                k.offset(dx * sigma, dy * sigma)
            })
            .collect();
        let pruned = suggest(&model, &lex, &taps, &BeamParams::default());
        let exact = suggest(&model, &lex, &taps, &BeamParams::wide_open());
        if pruned.first.as_ref().map(|s| &s.word) == exact.first.as_ref().map(|s| &s.word) {
            agree += 1;
        }
    }
    assert!(agree as f64 >= 0.99 * trials as f64, "{agree}/{trials}");
}

#[test]
fn decoding_is_deterministic() {
    let (lex, _) = shipped_lexicon();
    let l = layout("original");
    let dec = Decoder::new(&l, Arc::new(lex));
    let taps = vec![TouchPoint::new(25.1, 0.3), TouchPoint::new(31.0, 6.1), TouchPoint::new(13.4, -0.8)];
    assert_eq!(dec.suggest(&taps), dec.suggest(&taps));
    assert_eq!(dec.candidates(&taps).unwrap(), dec.candidates(&taps).unwrap());
}
