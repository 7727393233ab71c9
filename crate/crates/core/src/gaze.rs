//! Gaze analytics: board intersection, cone focus, focus intervals,
//! eye-contact events and summary metrics.
//!
//! Head positions are taken to be the gaze origins of each user's samples.
//! A subject sees every other participant mirrored across the board, so
//! focus is tested against the reflected head positions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_between, Vec3};
use crate::session::{BoardPlane, Role, SessionError, SessionState};

pub const DEFAULT_CONE_DEG: f64 = 10.0;
pub const DEFAULT_MIN_CONTACT_MS: u64 = 100;
/// A sampling gap longer than this closes every open interval.
pub const GAP_MS: u64 = 500;
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("samples for {user} not strictly increasing at t={t}")]
    UnsortedSamples { user: String, t: u64 },
    #[error("cone half-angle {0}° outside (0, 45)")]
    InvalidCone(f64),
    #[error("gaze direction of {user} at t={t} is not unit length")]
    NonUnitGaze { user: String, t: u64 },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("gaze log line {line}: {message}")]
    Log { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub user: String,
    pub t: u64,
    pub gaze_origin: Vec3,
    pub gaze_dir: Vec3,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FocusTarget {
    User(String),
    None,
    Board,
}

impl fmt::Display for FocusTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FocusTarget::User(u) => f.write_str(u),
            FocusTarget::None => f.write_str("NONE"),
            FocusTarget::Board => f.write_str("BOARD"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FocusInterval {
    pub subject: String,
    pub target: FocusTarget,
    pub t_start: u64,
    pub t_end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EyeContactEvent {
    /// Sorted pair.
    pub users: (String, String),
    pub t_start: u64,
    pub t_end: u64,
}

impl EyeContactEvent {
    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }
}

fn check_cone(cone_deg: f64) -> Result<f64, GazeError> {
    if cone_deg > 0.0 && cone_deg < 45.0 {
        Ok(cone_deg.to_radians())
    } else {
        Err(GazeError::InvalidCone(cone_deg))
    }
}

/// Forward intersection of the gaze ray with the board plane (unbounded).
pub fn intersect_board(s: &GazeSample, board: &BoardPlane) -> Option<Vec3> {
    board.intersect_ray(s.gaze_origin, s.gaze_dir)
}

/// Users whose head lies within `cone_deg` of the gaze ray.
pub fn classify_focus(s: &GazeSample, heads: &[(String, Vec3)], cone_deg: f64) -> BTreeSet<String> {
    let cone = cone_deg.to_radians();
    heads
        .iter()
        .filter(|(_, h)| {
            let to = *h - s.gaze_origin;
            to.norm() > 1e-12 && angle_between(s.gaze_dir, to) <= cone
        })
        .map(|(u, _)| u.clone())
        .collect()
}

fn by_user(samples: &[GazeSample]) -> Result<BTreeMap<&str, Vec<&GazeSample>>, GazeError> {
    let mut out: BTreeMap<&str, Vec<&GazeSample>> = BTreeMap::new();
    for s in samples {
        if (s.gaze_dir.norm() - 1.0).abs() > 1e-6 || !s.gaze_origin.is_finite() {
            return Err(GazeError::NonUnitGaze {
                user: s.user.clone(),
                t: s.t,
            });
        }
        let track = out.entry(&s.user).or_default();
        if track.last().is_some_and(|p| p.t >= s.t) {
            return Err(GazeError::UnsortedSamples {
                user: s.user.clone(),
                t: s.t,
            });
        }
        track.push(s);
    }
    Ok(out)
}

/// Latest head position at or before `t`.
fn head_at(track: &[&GazeSample], t: u64) -> Option<Vec3> {
    let n = track.partition_point(|s| s.t <= t);
    n.checked_sub(1).map(|i| track[i].gaze_origin)
}

/// One subject's focus sets over time.
pub type FocusSeries = Vec<(u64, BTreeSet<FocusTarget>)>;

/// Per-sample focus sets for one subject: (t, targets). Empty user focus
/// yields NONE; a board hit adds BOARD.
pub fn focus_series(
    samples: &[GazeSample],
    session: &SessionState,
    cone_deg: f64,
) -> Result<BTreeMap<String, FocusSeries>, GazeError> {
    check_cone(cone_deg)?;
    let tracks = by_user(samples)?;
    let mut out = BTreeMap::new();
    for (user, track) in &tracks {
        let candidates = session.visible_avatars(user)?;
        let mut series = Vec::with_capacity(track.len());
        for s in track {
            let heads: Vec<(String, Vec3)> = candidates
                .iter()
                .filter_map(|c| {
                    let h = head_at(tracks.get(c.as_str())?, s.t)?;
                    Some((c.clone(), session.board.reflect_point(h)))
                })
                .collect();
            let users = classify_focus(s, &heads, cone_deg);
            let mut set: BTreeSet<FocusTarget> = if users.is_empty() {
                [FocusTarget::None].into()
            } else {
                users.into_iter().map(FocusTarget::User).collect()
            };
            if intersect_board(s, &session.board).is_some() {
                set.insert(FocusTarget::Board);
            }
            series.push((s.t, set));
        }
        out.insert(user.to_string(), series);
    }
    Ok(out)
}

/// Run-length encodes one subject's per-sample focus sets, per target.
///
/// A run closes at the time of the first sample without the target, or at
/// the last sample before a gap over [`GAP_MS`] or the end of the stream.
/// Zero-length runs are dropped.
pub fn encode_runs(subject: &str, series: &[(u64, BTreeSet<FocusTarget>)]) -> Vec<FocusInterval> {
    let mut out = Vec::new();
    let mut open: BTreeMap<&FocusTarget, u64> = BTreeMap::new();
    let close = |target: &FocusTarget, start: u64, end: u64, out: &mut Vec<FocusInterval>| {
        if end > start {
            out.push(FocusInterval {
                subject: subject.to_owned(),
                target: target.clone(),
                t_start: start,
                t_end: end,
            });
        }
    };
    let mut prev_t: Option<u64> = None;
    for (t, set) in series {
        if let Some(p) = prev_t {
            if t - p > GAP_MS {
                for (target, start) in std::mem::take(&mut open) {
                    close(target, start, p, &mut out);
                }
            }
        }
        let ended: Vec<&FocusTarget> = open.keys().filter(|k| !set.contains(**k)).copied().collect();
        for target in ended {
            let start = open.remove(target).expect("key listed");
            close(target, start, *t, &mut out);
        }
        for target in set {
            open.entry(target).or_insert(*t);
        }
        prev_t = Some(*t);
    }
    if let Some(p) = prev_t {
        for (target, start) in open {
            close(target, start, p, &mut out);
        }
    }
    out.sort();
    out
}

pub fn build_intervals(
    samples: &[GazeSample],
    session: &SessionState,
    cone_deg: f64,
) -> Result<Vec<FocusInterval>, GazeError> {
    let series = focus_series(samples, session, cone_deg)?;
    Ok(series.iter().flat_map(|(user, s)| encode_runs(user, s)).collect())
}

/// Merges half-open spans into disjoint sorted spans; touching spans join.
fn union(mut spans: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    spans.sort();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (s, e) in spans {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn intersect(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if s < e {
            out.push((s, e));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    union(out)
}

/// Mutual-focus episodes lasting at least `min_duration_ms`.
pub fn detect_eye_contact(intervals: &[FocusInterval], min_duration_ms: u64) -> Vec<EyeContactEvent> {
    let mut focus: BTreeMap<(&str, &str), Vec<(u64, u64)>> = BTreeMap::new();
    for iv in intervals {
        if let FocusTarget::User(t) = &iv.target {
            if *t != iv.subject {
                focus.entry((&iv.subject, t)).or_default().push((iv.t_start, iv.t_end));
            }
        }
    }
    let mut out = Vec::new();
    for ((a, b), spans) in &focus {
        if a >= b {
            continue;
        }
        let Some(back) = focus.get(&(*b, *a)) else { continue };
        for (s, e) in intersect(&union(spans.clone()), &union(back.clone())) {
            if e - s >= min_duration_ms {
                out.push(EyeContactEvent {
                    users: (a.to_string(), b.to_string()),
                    t_start: s,
                    t_end: e,
                });
            }
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub samples: u64,
    pub eye_contact_count: u64,
    pub eye_contact_ms: u64,
    pub focus_shifts: u64,
    /// Target name (user, NONE, BOARD) to fraction of the session duration.
    pub focus_fraction: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub duration_ms: u64,
    pub eye_contact_events: u64,
    pub users: BTreeMap<String, UserMetrics>,
}

fn covered(spans: &[(u64, u64)]) -> u64 {
    union(spans.to_vec()).iter().map(|(s, e)| e - s).sum()
}

/// Counts changes of the focused target set (BOARD ignored) across
/// consecutive covered spans.
fn focus_shifts(ivs: &[&FocusInterval]) -> u64 {
    let ivs: Vec<&&FocusInterval> = ivs.iter().filter(|i| i.target != FocusTarget::Board).collect();
    let mut cuts: Vec<u64> = ivs.iter().flat_map(|i| [i.t_start, i.t_end]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut shifts = 0;
    let mut prev: Option<BTreeSet<&FocusTarget>> = None;
    for w in cuts.windows(2) {
        let set: BTreeSet<&FocusTarget> = ivs
            .iter()
            .filter(|i| i.t_start <= w[0] && w[1] <= i.t_end)
            .map(|i| &i.target)
            .collect();
        if set.is_empty() {
            continue;
        }
        if prev.as_ref().is_some_and(|p| *p != set) {
            shifts += 1;
        }
        prev = Some(set);
    }
    shifts
}

/// Per-user metrics. The NONE fraction is the share of the session not
/// covered by focus on any user, so unsampled time counts as NONE.
pub fn summarize(
    participants: &[String],
    intervals: &[FocusInterval],
    events: &[EyeContactEvent],
    duration_ms: u64,
) -> Metrics {
    let frac = |ms: u64| {
        if duration_ms == 0 {
            0.0
        } else {
            ms as f64 / duration_ms as f64
        }
    };
    let mut users = BTreeMap::new();
    for u in participants {
        let mine: Vec<&FocusInterval> = intervals.iter().filter(|i| &i.subject == u).collect();
        let mut m = UserMetrics::default();
        let mut by_target: BTreeMap<&FocusTarget, Vec<(u64, u64)>> = BTreeMap::new();
        for i in &mine {
            by_target.entry(&i.target).or_default().push((i.t_start, i.t_end));
        }
        for (t, spans) in &by_target {
            if **t != FocusTarget::None {
                m.focus_fraction.insert(t.to_string(), frac(covered(spans)));
            }
        }
        let user_spans: Vec<(u64, u64)> = mine
            .iter()
            .filter(|i| matches!(i.target, FocusTarget::User(_)))
            .map(|i| (i.t_start, i.t_end))
            .collect();
        let none = if duration_ms == 0 {
            1.0
        } else {
            1.0 - frac(covered(&user_spans).min(duration_ms))
        };
        m.focus_fraction.insert(FocusTarget::None.to_string(), none);
        m.focus_shifts = focus_shifts(&mine);
        for e in events.iter().filter(|e| &e.users.0 == u || &e.users.1 == u) {
            m.eye_contact_count += 1;
            m.eye_contact_ms += e.duration();
        }
        users.insert(u.clone(), m);
    }
    Metrics {
        duration_ms,
        eye_contact_events: events.len() as u64,
        users,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub cone_deg: f64,
    pub min_contact_ms: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            cone_deg: DEFAULT_CONE_DEG,
            min_contact_ms: DEFAULT_MIN_CONTACT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub intervals: Vec<FocusInterval>,
    pub events: Vec<EyeContactEvent>,
    pub metrics: Metrics,
}

/// The full pipeline: intervals, events, and metrics with per-user sample counts.
pub fn analyze(
    samples: &[GazeSample],
    session: &SessionState,
    duration_ms: u64,
    cfg: &AnalysisConfig,
) -> Result<Analysis, GazeError> {
    let intervals = build_intervals(samples, session, cfg.cone_deg)?;
    let events = detect_eye_contact(&intervals, cfg.min_contact_ms);
    let participants: Vec<String> = session.participants.keys().cloned().collect();
    let mut metrics = summarize(&participants, &intervals, &events, duration_ms);
    for s in samples {
        if let Some(m) = metrics.users.get_mut(&s.user) {
            m.samples += 1;
        }
    }
    Ok(Analysis {
        intervals,
        events,
        metrics,
    })
}

/// First record of a gaze log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub board: BoardPlane,
    pub roles: BTreeMap<String, Role>,
    pub duration_ms: u64,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

/// One line of a gaze log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Header(LogHeader),
    Sample(GazeSample),
    Annotation {
        t: u64,
        kind: String,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sketch: Option<u32>,
    },
    Interval(FocusInterval),
    Event(EyeContactEvent),
}

pub fn write_log<W: Write>(mut w: W, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parsed gaze log: header plus samples. Other records are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeLog {
    pub header: LogHeader,
    pub samples: Vec<GazeSample>,
}

impl GazeLog {
    pub fn read<R: BufRead>(r: R) -> Result<GazeLog, GazeError> {
        let mut header = None;
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let err = |message: String| GazeError::Log { line: i + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogRecord>(&line).map_err(|e| err(e.to_string()))? {
                LogRecord::Header(h) => {
                    if header.is_some() {
                        return Err(err("duplicate header".into()));
                    }
                    if h.version != LOG_VERSION {
                        return Err(err(format!("unsupported version {}", h.version)));
                    }
                    header = Some(h);
                }
                LogRecord::Sample(s) => samples.push(s),
                _ => {}
            }
        }
        let header = header.ok_or(GazeError::Log {
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(GazeLog { header, samples })
    }

    pub fn session(&self) -> Result<SessionState, GazeError> {
        let cfg = crate::session::SessionConfig {
            board: self.header.board.clone(),
            roles: self.header.roles.clone(),
            open_join: false,
        };
        Ok(SessionState::from_config(&cfg)?)
    }

    /// Samples in per-user time order.
    pub fn sorted_samples(&self) -> Vec<GazeSample> {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| (a.t, &a.user).cmp(&(b.t, &b.user)));
        s
    }

    /// Runs the pipeline with the settings recorded in the header.
    pub fn analyze(&self) -> Result<Analysis, GazeError> {
        self.analyze_with(&self.header.analysis)
    }

    pub fn analyze_with(&self, cfg: &AnalysisConfig) -> Result<Analysis, GazeError> {
        analyze(&self.sorted_samples(), &self.session()?, self.header.duration_ms, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(user: &str, t: u64, origin: Vec3, dir: Vec3) -> GazeSample {
        GazeSample {
            user: user.into(),
            t,
            gaze_origin: origin,
            gaze_dir: dir.normalized().unwrap(),
        }
    }

    fn iv(subject: &str, target: &str, s: u64, e: u64) -> FocusInterval {
        FocusInterval {
            subject: subject.into(),
            target: FocusTarget::User(target.into()),
            t_start: s,
            t_end: e,
        }
    }

    #[test]
    fn board_hits() {
        let b = BoardPlane::default();
        let s = sample("a", 0, Vec3::new(0.0, 0.0, 1.0), -Vec3::Z);
        assert_eq!(intersect_board(&s, &b), Some(Vec3::ZERO));
        let s = sample("a", 0, Vec3::new(1.0, 2.0, 2.0), -Vec3::Z);
        assert_eq!(intersect_board(&s, &b), Some(Vec3::new(1.0, 2.0, 0.0)));
        assert_eq!(intersect_board(&sample("a", 0, Vec3::Z, Vec3::X), &b), None);
        assert_eq!(intersect_board(&sample("a", 0, Vec3::Z, Vec3::Z), &b), None);
    }

    #[test]
    fn cone_examples() {
        let s = sample("a", 0, Vec3::ZERO, -Vec3::Z);
        let f = |p: Vec3| !classify_focus(&s, &[("b".into(), p)], DEFAULT_CONE_DEG).is_empty();
        assert!(f(Vec3::new(0.0, 0.0, -2.0)));
        assert!(!f(Vec3::new(2.0, 0.0, -2.0)));
        assert!(f(Vec3::new(0.17, 0.0, -1.0)));
        // atan(0.18) = 10.2°
        assert!(!f(Vec3::new(0.18, 0.0, -1.0)));
    }

    #[test]
    fn merge_and_none() {
        let on: BTreeSet<FocusTarget> = [FocusTarget::User("P".into())].into();
        let off: BTreeSet<FocusTarget> = [FocusTarget::None].into();
        let series: Vec<_> = (0..10).map(|i| (i * 100, on.clone())).collect();
        assert_eq!(encode_runs("A", &series), vec![iv("A", "P", 0, 900)]);

        let series: Vec<_> = (0..10)
            .map(|i| (i * 100, if i < 5 { on.clone() } else { off.clone() }))
            .collect();
        let got = encode_runs("A", &series);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], iv("A", "P", 0, 500));
        assert_eq!(
            got[1],
            FocusInterval {
                subject: "A".into(),
                target: FocusTarget::None,
                t_start: 500,
                t_end: 900
            }
        );
    }

    #[test]
    fn gap_closes_at_last_sample() {
        let on: BTreeSet<FocusTarget> = [FocusTarget::User("P".into())].into();
        let series = vec![(0, on.clone()), (100, on.clone()), (700, on.clone()), (800, on)];
        assert_eq!(
            encode_runs("A", &series),
            vec![iv("A", "P", 0, 100), iv("A", "P", 700, 800)]
        );
    }

    #[test]
    fn unsorted_rejected() {
        let mut s = SessionState::new(BoardPlane::default(), "P").unwrap();
        s.join("A", Role::Audience).unwrap();
        let samples = vec![sample("A", 10, Vec3::Z, -Vec3::Z), sample("A", 10, Vec3::Z, -Vec3::Z)];
        assert!(matches!(
            build_intervals(&samples, &s, 10.0),
            Err(GazeError::UnsortedSamples { .. })
        ));
        assert!(matches!(build_intervals(&[], &s, 45.0), Err(GazeError::InvalidCone(_))));
    }

    #[test]
    fn eye_contact_examples() {
        let ev = detect_eye_contact(&[iv("A", "B", 1000, 3000), iv("B", "A", 2500, 4000)], 100);
        assert_eq!(
            ev,
            vec![EyeContactEvent {
                users: ("A".into(), "B".into()),
                t_start: 2500,
                t_end: 3000
            }]
        );
        assert!(detect_eye_contact(&[iv("A", "B", 0, 1000), iv("B", "A", 1500, 2000)], 100).is_empty());
        assert!(detect_eye_contact(&[iv("A", "B", 0, 1050), iv("B", "A", 1000, 2000)], 100).is_empty());
        assert_eq!(
            detect_eye_contact(&[iv("A", "B", 0, 1100), iv("B", "A", 1000, 2000)], 100).len(),
            1
        );
    }

    #[test]
    fn summary_examples() {
        let users = vec!["A".to_string(), "B".to_string()];
        let m = summarize(&users, &[], &[], 10_000);
        assert_eq!(m.eye_contact_events, 0);
        for u in m.users.values() {
            assert_eq!(u.eye_contact_count, 0);
            assert_eq!(u.focus_fraction["NONE"], 1.0);
        }
        let ev = EyeContactEvent {
            users: ("A".into(), "B".into()),
            t_start: 1000,
            t_end: 1500,
        };
        let m = summarize(&users, &[], &[ev], 10_000);
        assert_eq!(m.users["A"].eye_contact_count, 1);
        assert_eq!(m.users["A"].eye_contact_ms, 500);
    }

    #[test]
    fn shifts_count_target_changes() {
        let none = |s, e| FocusInterval {
            subject: "A".into(),
            target: FocusTarget::None,
            t_start: s,
            t_end: e,
        };
        let ivs = [
            iv("A", "B", 0, 100),
            none(100, 200),
            iv("A", "B", 200, 300),
            iv("A", "C", 250, 400),
        ];
        let refs: Vec<&FocusInterval> = ivs.iter().collect();
        // B | NONE | B | B+C | C
        assert_eq!(focus_shifts(&refs), 4);
    }

    #[test]
    fn mirrored_heads_face_each_other() {
        // Presenter and audience both stand 1.5 m in front of the board; each
        // sees the other's mirror image straight ahead through the board.
        let mut s = SessionState::new(BoardPlane::default(), "P").unwrap();
        s.join("A", Role::Audience).unwrap();
        let samples = vec![
            sample("A", 0, Vec3::new(0.5, 1.6, 1.5), -Vec3::Z),
            sample("P", 0, Vec3::new(0.5, 1.6, 1.5), -Vec3::Z),
            sample("A", 200, Vec3::new(0.5, 1.6, 1.5), -Vec3::Z),
            sample("P", 200, Vec3::new(0.5, 1.6, 1.5), -Vec3::Z),
        ];
        let a = analyze(&samples, &s, 200, &AnalysisConfig::default()).unwrap();
        assert_eq!(a.events.len(), 1);
        assert_eq!(a.metrics.users["A"].samples, 2);
    }

    #[test]
    fn log_round_trip() {
        let mut roles = BTreeMap::new();
        roles.insert("P".to_string(), Role::Presenter);
        let header = LogHeader {
            version: LOG_VERSION,
            board: BoardPlane::default(),
            roles,
            duration_ms: 100,
            analysis: AnalysisConfig::default(),
        };
        let recs = vec![
            LogRecord::Header(header.clone()),
            LogRecord::Sample(sample("P", 0, Vec3::Z, -Vec3::Z)),
        ];
        let mut buf = Vec::new();
        write_log(&mut buf, &recs).unwrap();
        let log = GazeLog::read(buf.as_slice()).unwrap();
        assert_eq!(log.header, header);
        assert_eq!(log.samples.len(), 1);
        assert!(GazeLog::read(&b"{\"type\":\"sample\"}\n"[..]).is_err());
    }
}
