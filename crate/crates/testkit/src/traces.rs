//! Seeded synthetic traces.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::FocusSample;

/// Random per-subject focus series over `users`. Steps between samples are
/// 1..=700 ms so some exceed the 500 ms gap rule; runs are sticky so
/// multi-sample intervals are common.
pub fn random_focus_series(seed: u64, users: &[&str], samples_per_user: usize) -> BTreeMap<String, Vec<FocusSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for subject in users {
        let mut t = rng.random_range(0..200u64);
        let mut set: BTreeSet<String> = BTreeSet::new();
        let mut series = Vec::with_capacity(samples_per_user);
        for _ in 0..samples_per_user {
            if rng.random_bool(0.3) {
                set = users
                    .iter()
                    .filter(|u| *u != subject && rng.random_bool(0.5))
                    .map(|u| u.to_string())
                    .collect();
            }
            let mut s = set.clone();
            if s.is_empty() {
                s.insert("NONE".into());
            }
            if rng.random_bool(0.4) {
                s.insert("BOARD".into());
            }
            series.push((t, s));
            t += if rng.random_bool(0.03) {
                rng.random_range(501..900)
            } else {
                rng.random_range(1..120)
            };
        }
        out.insert(subject.to_string(), series);
    }
    out
}

/// A raw gaze sample: (user, t, origin, dir).
pub type RawSample = (String, u64, [f64; 3], [f64; 3]);

fn unit_toward(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    [d[0] / n, d[1] / n, d[2] / n]
}

/// Two users standing in front of the board plane z = 0 (normal +z), each
/// seeing the other reflected to z < 0. `episodes` times both look at each
/// other's reflection for 300..600 ms, separated by 400..900 ms looking at
/// the board. Sampled every 33 ms. Returns samples in time order.
pub fn planted_episodes(seed: u64, a: &str, b: &str, episodes: usize) -> Vec<RawSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head_a = [0.4, 1.6, 1.5];
    let head_b = [-0.4, 1.7, 1.2];
    let mirror = |p: [f64; 3]| [p[0], p[1], -p[2]];
    let mut windows = Vec::new();
    let mut t = 200u64;
    for _ in 0..episodes {
        let len = rng.random_range(300..600);
        windows.push((t, t + len));
        t += len + rng.random_range(400..900);
    }
    let end = t;
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let ts = k * 33;
        if ts > end {
            break;
        }
        let mutual = windows.iter().any(|(s, e)| ts >= *s && ts < *e);
        for (name, head, other) in [(a, head_a, head_b), (b, head_b, head_a)] {
            let target = if mutual {
                mirror(other)
            } else {
                [head[0] + 0.9, 0.5, 0.0]
            };
            out.push((name.to_string(), ts, head, unit_toward(head, target)));
        }
        k += 1;
    }
    out
}
