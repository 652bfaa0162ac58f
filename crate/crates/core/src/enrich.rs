//! Surrogate safety metrics and event annotation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_row, TrackLog, TRACK_HEADER};

/// Longitudinal state of a follower/leader pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairState {
    /// Bumper-to-bumper distance, meters.
    pub gap: f64,
    pub ego_speed: f64,
    pub lead_speed: f64,
}

impl PairState {
    pub fn new(gap: f64, ego_speed: f64, lead_speed: f64) -> Self {
        PairState {
            gap,
            ego_speed,
            lead_speed,
        }
    }

    pub fn closing_speed(&self) -> f64 {
        self.ego_speed - self.lead_speed
    }
}

/// Time to collision at constant speeds; `None` when not closing.
pub fn ttc(s: PairState) -> Option<f64> {
    let closing = s.closing_speed();
    (closing > 0.0).then(|| s.gap / closing)
}

/// Time headway; `None` for a stationary follower.
pub fn thw(s: PairState) -> Option<f64> {
    (s.ego_speed > 0.0).then(|| s.gap / s.ego_speed)
}

/// Time to brake: latest moment, at constant speeds, from which braking at
/// `a_max` still matches the lead's speed before contact (lead speed held
/// constant). `gap/closing - closing/(2 a_max)`, clamped at 0.
pub fn ttb(s: PairState, a_max: f64) -> Option<f64> {
    if !(a_max > 0.0) {
        return None;
    }
    let closing = s.closing_speed();
    (closing > 0.0).then(|| (s.gap / closing - closing / (2.0 * a_max)).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LaneChange,
    Danger,
    Custom(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub kind: EventKind,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

impl EventAnnotation {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Maximal index runs `(first, last, key)` over which `key` is `Some` and
/// constant.
fn runs<K: PartialEq + Copy>(n: usize, key: impl Fn(usize) -> Option<K>) -> Vec<(usize, usize, K)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let Some(k) = key(i) else {
            i += 1;
            continue;
        };
        let start = i;
        while i + 1 < n && key(i + 1) == Some(k) {
            i += 1;
        }
        out.push((start, i, k));
        i += 1;
    }
    out
}

/// Steering events: maximal stretches where `|yaw_rate|` stays above the
/// threshold (with one sign) for at least `min_duration` seconds.
pub fn detect_lane_changes(track: &TrackLog, yaw_rate_threshold: f64, min_duration: f64) -> Vec<EventAnnotation> {
    let s = &track.samples;
    runs(s.len(), |i| {
        let r = s[i].yaw_rate;
        (r.abs() > yaw_rate_threshold).then_some(r > 0.0)
    })
    .into_iter()
    .filter(|&(a, b, _)| s[b].t - s[a].t >= min_duration)
    .map(|(a, b, left)| {
        let peak = s[a..=b].iter().map(|x| x.yaw_rate.abs()).fold(0.0, f64::max);
        let mut attributes = BTreeMap::new();
        attributes.insert("direction".into(), serde_json::json!(if left { "left" } else { "right" }));
        attributes.insert("sign".into(), serde_json::json!(if left { 1 } else { -1 }));
        attributes.insert("peak_yaw_rate".into(), serde_json::json!(peak));
        attributes.insert("track_id".into(), serde_json::json!(track.track_id));
        EventAnnotation {
            kind: EventKind::LaneChange,
            t_start: s[a].t,
            t_end: s[b].t,
            attributes,
        }
    })
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneChangeConfig {
    pub yaw_rate_threshold: f64,
    pub min_duration: f64,
}

impl Default for LaneChangeConfig {
    fn default() -> Self {
        LaneChangeConfig {
            yaw_rate_threshold: 0.1,
            min_duration: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    /// Emit a danger event while TTC stays below this many seconds
    /// (default 1 s; `null` turns danger labeling off).
    pub ttc_danger: Option<f64>,
    /// Minimum duration of a danger event.
    pub min_duration: f64,
    /// Braking capability assumed for TTB.
    pub a_max: f64,
    /// Subtracted from the position difference to get the bumper gap.
    pub vehicle_length: f64,
    pub lane_change: Option<LaneChangeConfig>,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            ttc_danger: Some(1.0),
            min_duration: 0.0,
            a_max: 8.0,
            vehicle_length: 0.0,
            lane_change: Some(LaneChangeConfig::default()),
        }
    }
}

/// An ego log with its derived channels and events.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedScenario {
    pub ego: TrackLog,
    pub lead_id: String,
    pub gap: Vec<Option<f64>>,
    pub ttc: Vec<Option<f64>>,
    pub thw: Vec<Option<f64>>,
    pub ttb: Vec<Option<f64>>,
    pub events: Vec<EventAnnotation>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnrichError {
    #[error("logs {ego} and {lead} do not share timestamps (synchronize them first)")]
    UnalignedLogs { ego: String, lead: String },
}

/// Derives gap/TTC/THW/TTB for `ego` following `lead` and labels events.
/// Both logs must already be on the same clock.
pub fn annotate(ego: &TrackLog, lead: &TrackLog, config: &AnnotateConfig) -> Result<AnnotatedScenario, EnrichError> {
    let aligned = ego.samples.len() == lead.samples.len()
        && ego
            .samples
            .iter()
            .zip(&lead.samples)
            .all(|(a, b)| (a.t - b.t).abs() <= 1e-9 * (1.0 + a.t.abs()));
    if !aligned {
        return Err(EnrichError::UnalignedLogs {
            ego: ego.track_id.clone(),
            lead: lead.track_id.clone(),
        });
    }
    let n = ego.samples.len();
    let mut gap = Vec::with_capacity(n);
    let mut ttc_ch = Vec::with_capacity(n);
    let mut thw_ch = Vec::with_capacity(n);
    let mut ttb_ch = Vec::with_capacity(n);
    for (e, l) in ego.samples.iter().zip(&lead.samples) {
        let g = l.x - e.x - config.vehicle_length;
        if g.is_nan() || e.speed.is_nan() || l.speed.is_nan() {
            gap.push(None);
            ttc_ch.push(None);
            thw_ch.push(None);
            ttb_ch.push(None);
            continue;
        }
        let st = PairState::new(g.max(0.0), e.speed.max(0.0), l.speed.max(0.0));
        gap.push(Some(st.gap));
        ttc_ch.push(ttc(st));
        thw_ch.push(thw(st));
        ttb_ch.push(ttb(st, config.a_max));
    }

    let mut events = Vec::new();
    if let Some(limit) = config.ttc_danger {
        let s = &ego.samples;
        for (a, b, _) in runs(n, |i| ttc_ch[i].is_some_and(|v| v < limit).then_some(())) {
            if s[b].t - s[a].t < config.min_duration {
                continue;
            }
            let min_ttc = ttc_ch[a..=b].iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let mut attributes = BTreeMap::new();
            attributes.insert("min_ttc".into(), serde_json::json!(min_ttc));
            attributes.insert("ttc_danger".into(), serde_json::json!(limit));
            attributes.insert("track_id".into(), serde_json::json!(ego.track_id));
            attributes.insert("lead_id".into(), serde_json::json!(lead.track_id));
            events.push(EventAnnotation {
                kind: EventKind::Danger,
                t_start: s[a].t,
                t_end: s[b].t,
                attributes,
            });
        }
    }
    if let Some(lc) = &config.lane_change {
        events.extend(detect_lane_changes(ego, lc.yaw_rate_threshold, lc.min_duration));
    }
    events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.kind.cmp(&b.kind)));

    Ok(AnnotatedScenario {
        ego: ego.clone(),
        lead_id: lead.track_id.clone(),
        gap,
        ttc: ttc_ch,
        thw: thw_ch,
        ttb: ttb_ch,
        events,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Header of the enriched track CSV.
pub fn enriched_header() -> String {
    format!("{},ttc,thw,ttb", TRACK_HEADER.join(","))
}

impl AnnotatedScenario {
    /// Data rows of the enriched CSV (track columns plus `ttc,thw,ttb`).
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.ego.samples.iter().enumerate() {
            out.push_str(&format_row(&self.ego.track_id, s));
            out.push_str(&format!(",{},{},{}\n", cell(self.ttc[i]), cell(self.thw[i]), cell(self.ttb[i])));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", enriched_header(), self.csv_rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TimedSample;

    fn approx(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|x| (x - b).abs() < 1e-12)
    }

    #[test]
    fn ttc_cases() {
        assert!(approx(ttc(PairState::new(20.0, 20.0, 10.0)), 2.0));
        assert_eq!(ttc(PairState::new(20.0, 10.0, 10.0)), None);
        assert!(approx(ttc(PairState::new(0.0, 12.0, 10.0)), 0.0));
    }

    #[test]
    fn thw_cases() {
        assert!(approx(thw(PairState::new(20.0, 10.0, 3.0)), 2.0));
        assert_eq!(thw(PairState::new(20.0, 0.0, 3.0)), None);
        assert!(approx(thw(PairState::new(0.0, 10.0, 3.0)), 0.0));
    }

    #[test]
    fn ttb_cases() {
        assert!(approx(ttb(PairState::new(20.0, 20.0, 10.0), 5.0), 1.0));
        assert!(approx(ttb(PairState::new(1.0, 20.0, 10.0), 5.0), 0.0));
        assert_eq!(ttb(PairState::new(1.0, 10.0, 10.0), 5.0), None);
        assert_eq!(ttb(PairState::new(1.0, 20.0, 10.0), 0.0), None);
    }

    fn yaw_track(pulse_start: f64, pulse_len: f64, rate: f64) -> TrackLog {
        let samples = (0..100)
            .map(|i| {
                let t = i as f64 * 0.1;
                let on = t >= pulse_start - 1e-9 && t < pulse_start + pulse_len - 1e-9;
                TimedSample {
                    yaw_rate: if on { rate } else { 0.0 },
                    ..TimedSample::at(t)
                }
            })
            .collect();
        TrackLog::new("ego", samples).unwrap()
    }

    #[test]
    fn lane_change_pulse() {
        assert!(detect_lane_changes(&yaw_track(0.0, 0.0, 0.0), 0.1, 1.0).is_empty());
        let ev = detect_lane_changes(&yaw_track(2.0, 1.5, 0.2), 0.1, 1.0);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].t_start - 2.0).abs() < 1e-9);
        assert!((ev[0].t_end - 3.4).abs() < 1e-9);
        assert_eq!(ev[0].attributes["direction"], "left");
        assert!(detect_lane_changes(&yaw_track(2.0, 0.5, 0.2), 0.1, 1.0).is_empty());
        let right = detect_lane_changes(&yaw_track(2.0, 1.5, -0.2), 0.1, 1.0);
        assert_eq!(right[0].attributes["sign"], -1);
    }

    fn pair(gap: impl Fn(f64) -> f64, ego_v: f64, lead_v: f64) -> (TrackLog, TrackLog) {
        let ts: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let ego = ts
            .iter()
            .map(|&t| TimedSample {
                x: 0.0,
                speed: ego_v,
                ..TimedSample::at(t)
            })
            .collect();
        let lead = ts
            .iter()
            .map(|&t| TimedSample {
                x: gap(t),
                speed: lead_v,
                ..TimedSample::at(t)
            })
            .collect();
        (TrackLog::new("ego", ego).unwrap(), TrackLog::new("lead", lead).unwrap())
    }

    #[test]
    fn constant_gap_equal_speed_has_no_danger() {
        let (e, l) = pair(|_| 30.0, 20.0, 20.0);
        let cfg = AnnotateConfig {
            ttc_danger: Some(1.0),
            ..AnnotateConfig::default()
        };
        let a = annotate(&e, &l, &cfg).unwrap();
        assert!(a.ttc.iter().all(Option::is_none));
        assert!(a.events.is_empty());
        assert!(a.thw.iter().all(|v| approx(*v, 1.5)));
    }

    #[test]
    fn ttc_dip_makes_one_event() {
        // closing at 10 m/s; gap is 20 m except a 2 s stretch at 5 m (TTC 0.5 s)
        let (e, l) = pair(|t| if (2.0..4.0).contains(&t) { 5.0 } else { 20.0 }, 20.0, 10.0);
        let cfg = AnnotateConfig {
            ttc_danger: Some(1.0),
            min_duration: 1.0,
            ..AnnotateConfig::default()
        };
        let a = annotate(&e, &l, &cfg).unwrap();
        assert_eq!(a.events.len(), 1);
        assert_eq!(a.events[0].kind, EventKind::Danger);
        assert!((a.events[0].t_start - 2.0).abs() < 1e-9);
        assert_eq!(a.events[0].attributes["min_ttc"], 0.5);
        let off = AnnotateConfig {
            ttc_danger: None,
            ..AnnotateConfig::default()
        };
        let none = annotate(&e, &l, &off).unwrap();
        assert!(none.events.is_empty());
        assert_eq!(none.ttc.len(), 60);
    }

    #[test]
    fn unaligned_logs_rejected() {
        let (e, mut l) = pair(|_| 10.0, 1.0, 1.0);
        l.samples.pop();
        assert!(matches!(
            annotate(&e, &l, &AnnotateConfig::default()),
            Err(EnrichError::UnalignedLogs { .. })
        ));
    }

    #[test]
    fn csv_appends_columns() {
        let (e, l) = pair(|_| 20.0, 20.0, 10.0);
        let a = annotate(&e, &l, &AnnotateConfig::default()).unwrap();
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,track_id,x,y,speed,accel,yaw,yaw_rate,lane_id,ttc,thw,ttb");
        assert!(lines.next().unwrap().ends_with(",2,1,1.375"));
        let (e2, l2) = pair(|_| 20.0, 10.0, 10.0);
        let b = annotate(&e2, &l2, &AnnotateConfig::default()).unwrap();
        assert!(b.to_csv().lines().nth(1).unwrap().ends_with(",,2,"));
    }
}
