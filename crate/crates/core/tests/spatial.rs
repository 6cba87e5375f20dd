use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thumbkey_core::decoder::argmax_letter;
use thumbkey_core::{build_layout, KeyClass, KeyboardLayout, LayoutOverrides, SpatialModel, TouchPoint};

const POINTS: usize = 10_000;

fn layouts() -> Vec<KeyboardLayout> {
    ["original", "enlarged"].iter().map(|n| build_layout(n, &LayoutOverrides::default()).unwrap()).collect()
}

fn random_point(l: &KeyboardLayout, rng: &mut ChaCha8Rng) -> TouchPoint {
    let p = l.column_pitch();
    TouchPoint::new(rng.random_range(-p..10.0 * p), rng.random_range(-1.5 * p..3.0 * p))
}

#[test]
fn distributions_are_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for l in layouts() {
        let m = SpatialModel::new(&l);
        for _ in 0..POINTS {
            let d = m.spatial_probabilities(&random_point(&l, &mut rng));
            assert!(d.iter().all(|&v| v >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn argmax_agrees_with_nearest_letter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for l in layouts() {
        let m = SpatialModel::new(&l);
        let centers = l.letter_centers();
        for i in 0..POINTS {
            // Every fourth point sits exactly between two letters.
            let p = if i % 4 == 0 {
                let a = centers[rng.random_range(0..26)];
                let b = centers[rng.random_range(0..26)];
                a.midpoint(&b)
            } else {
                random_point(&l, &mut rng)
            };
            let nearest = l.nearest_key(&p, KeyClass::Letters).label.as_letter().unwrap();
            assert_eq!(argmax_letter(&m.spatial_probabilities(&p)), nearest, "{p:?}");
        }
    }
}

#[test]
fn midpoints_of_neighbours_split_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];
    for l in layouts() {
        let m = SpatialModel::new(&l);
        for _ in 0..POINTS {
            let row = rows.choose(&mut rng).unwrap().as_bytes();
            let i = rng.random_range(0..row.len() - 1);
            let (a, b) = (row[i], row[i + 1]);
            let ca = l.key_center(&(a as char).to_string()).unwrap();
            let cb = l.key_center(&(b as char).to_string()).unwrap();
            let d = m.spatial_probabilities(&ca.midpoint(&cb));
            let (pa, pb) = (d[(a - b'a') as usize], d[(b - b'a') as usize]);
            assert!((pa - pb).abs() <= 1e-12, "{} {}", a as char, b as char);
        }
    }
}

#[test]
fn common_scaling_leaves_distribution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for l in layouts() {
        let m = SpatialModel::new(&l);
        for _ in 0..POINTS {
            let factor = rng.random_range(0.25..4.0);
            let scaled = l.scaled(factor);
            let ms = SpatialModel::with_sigma(&scaled, m.sigma() * factor).unwrap();
            let p = random_point(&l, &mut rng);
            let a = m.spatial_probabilities(&p);
            let b = ms.spatial_probabilities(&p.scaled(factor));
            for i in 0..26 {
                assert!((a[i] - b[i]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn sigma_defaults_to_column_pitch() {
    for l in layouts() {
        assert_eq!(SpatialModel::new(&l).sigma(), l.column_pitch());
    }
}
