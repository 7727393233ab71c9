//! Slow, obviously-correct reference implementations. Nothing here shares
//! code with the production crates; inputs are plain numbers and strings.

pub mod traces;

use std::collections::{BTreeMap, BTreeSet};

/// Bit-at-a-time CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
pub fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            let lsb = crc & 1;
            crc >>= 1;
            if lsb == 1 {
                crc ^= 0xEDB8_8320;
            }
        }
    }
    !crc
}

/// Reference packet encoder from raw fields.
#[allow(clippy::too_many_arguments)]
pub fn encode_packet(
    scope: &str,
    label: &str,
    origin: &str,
    class: u8,
    seq: u32,
    tag: u8,
    count: u32,
    data: &[u8],
) -> Vec<u8> {
    let mut body = Vec::new();
    for s in [scope, label, origin] {
        body.push((s.len() >> 8) as u8);
        body.push(s.len() as u8);
        body.extend_from_slice(s.as_bytes());
    }
    body.push(class);
    body.extend_from_slice(&seq.to_be_bytes());
    body.push(tag);
    body.extend_from_slice(&count.to_be_bytes());
    body.extend_from_slice(data);
    let mut out = vec![0x4D, 0x42, 0x01];
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    let crc = crc32_bitwise(&body);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Forward ray/plane hit, solved as origin + t·dir with t from the
/// plane equation n·x = n·p0.
pub fn ray_plane(origin: [f64; 3], dir: [f64; 3], p0: [f64; 3], n: [f64; 3]) -> Option<[f64; 3]> {
    let denom = dot(n, dir);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = (dot(n, p0) - dot(n, origin)) / denom;
    if t < 0.0 {
        return None;
    }
    Some([origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]])
}

/// Angle between two vectors in degrees, via the arccosine of the cosine.
pub fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Row-major 4×4 product.
pub fn mat_mul_rows(a: [[f64; 4]; 4], b: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            for k in 0..4 {
                *v += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn mat_apply_rows(m: [[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|k| m[i][k] * v[k]).sum();
    }
    out
}

/// Expected visibility relation: (viewer, seen) pairs of a presenter-centred star.
pub fn star_pairs(presenter: &str, audience: &[&str]) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for a in audience {
        out.insert((presenter.to_string(), a.to_string()));
        out.insert((a.to_string(), presenter.to_string()));
    }
    out
}

/// One sample of a subject's focus: time and the set of target names
/// ("NONE" / "BOARD" included as plain strings).
pub type FocusSample = (u64, BTreeSet<String>);

/// Per-millisecond run-length intervals for one subject.
///
/// Each millisecond in [t_i, t_{i+1}) takes the targets of sample i, unless the
/// gap to the next sample exceeds `gap_ms`, in which case it is unsampled.
/// Maximal runs of a target become (target, start, end).
pub fn rle_intervals(series: &[FocusSample], gap_ms: u64) -> Vec<(String, u64, u64)> {
    let mut grid: Vec<(u64, Option<&BTreeSet<String>>)> = Vec::new();
    for w in series.windows(2) {
        let (t0, set) = (&w[0].0, &w[0].1);
        let t1 = w[1].0;
        let held = if t1 - t0 > gap_ms { None } else { Some(set) };
        for ms in *t0..t1 {
            grid.push((ms, held));
        }
    }
    let targets: BTreeSet<&String> = series.iter().flat_map(|(_, s)| s.iter()).collect();
    let mut out = Vec::new();
    for target in targets {
        let mut start: Option<u64> = None;
        let mut last = 0;
        for (ms, set) in &grid {
            let on = set.is_some_and(|s| s.contains(target));
            match (on, start) {
                (true, None) => start = Some(*ms),
                (false, Some(s)) => {
                    out.push((target.clone(), s, *ms));
                    start = None;
                }
                _ => {}
            }
            last = *ms;
        }
        if let Some(s) = start {
            out.push((target.clone(), s, last + 1));
        }
    }
    out.sort();
    out
}

/// Millisecond-grid mutual-focus scan.
///
/// `focus` holds (subject, target, start, end) half-open spans. Returns
/// (a, b, start, end) with a < b for every maximal run of milliseconds in
/// which a focuses b and b focuses a, keeping runs of at least `min_ms`.
pub fn mutual_focus_events(focus: &[(String, String, u64, u64)], min_ms: u64) -> Vec<(String, String, u64, u64)> {
    let mut cover: BTreeMap<(&str, &str), BTreeSet<u64>> = BTreeMap::new();
    for (s, t, a, b) in focus {
        let e = cover.entry((s.as_str(), t.as_str())).or_default();
        e.extend(*a..*b);
    }
    let mut out = Vec::new();
    for ((a, b), ms_ab) in &cover {
        if a >= b {
            continue;
        }
        let Some(ms_ba) = cover.get(&(*b, *a)) else { continue };
        let mut run: Option<(u64, u64)> = None;
        for ms in ms_ab.intersection(ms_ba) {
            run = match run {
                Some((s, e)) if e == *ms => Some((s, ms + 1)),
                Some((s, e)) => {
                    if e - s >= min_ms {
                        out.push((a.to_string(), b.to_string(), s, e));
                    }
                    Some((*ms, ms + 1))
                }
                None => Some((*ms, ms + 1)),
            };
        }
        if let Some((s, e)) = run {
            if e - s >= min_ms {
                out.push((a.to_string(), b.to_string(), s, e));
            }
        }
    }
    out.sort();
    out
}
