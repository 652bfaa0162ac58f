//! Track-log parsing and time synchronization.
//!
//! Missing channel values are stored as `NaN` (numeric channels) or `None`
//! (lane id) and written back as empty CSV cells.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{linear_at, NaturalCubicSpline};

pub const TRACK_HEADER: [&str; 9] = ["t", "track_id", "x", "y", "speed", "accel", "yaw", "yaw_rate", "lane_id"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub accel: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub lane_id: Option<i64>,
}

impl TimedSample {
    pub fn at(t: f64) -> Self {
        TimedSample {
            t,
            x: 0.0,
            y: 0.0,
            speed: 0.0,
            accel: 0.0,
            yaw: 0.0,
            yaw_rate: 0.0,
            lane_id: Some(0),
        }
    }

    pub fn get(&self, c: Channel) -> Option<f64> {
        let v = match c {
            Channel::X => self.x,
            Channel::Y => self.y,
            Channel::Speed => self.speed,
            Channel::Accel => self.accel,
            Channel::Yaw => self.yaw,
            Channel::YawRate => self.yaw_rate,
            Channel::LaneId => return self.lane_id.map(|l| l as f64),
        };
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, c: Channel, v: Option<f64>) {
        let v_num = v.unwrap_or(f64::NAN);
        match c {
            Channel::X => self.x = v_num,
            Channel::Y => self.y = v_num,
            Channel::Speed => self.speed = v_num,
            Channel::Accel => self.accel = v_num,
            Channel::Yaw => self.yaw = v_num,
            Channel::YawRate => self.yaw_rate = v_num,
            Channel::LaneId => self.lane_id = v.map(|x| x.round() as i64),
        }
    }

    /// Field-wise equality where two missing values compare equal.
    pub fn same_as(&self, other: &TimedSample) -> bool {
        self.t == other.t && Channel::ALL.iter().all(|&c| self.get(c) == other.get(c))
    }
}

/// Measured channels of a [`TimedSample`] (everything except `t`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Y,
    Speed,
    Accel,
    Yaw,
    YawRate,
    LaneId,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::X,
        Channel::Y,
        Channel::Speed,
        Channel::Accel,
        Channel::Yaw,
        Channel::YawRate,
        Channel::LaneId,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Speed => "speed",
            Channel::Accel => "accel",
            Channel::Yaw => "yaw",
            Channel::YawRate => "yaw_rate",
            Channel::LaneId => "lane_id",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| IngestError::UnknownChannel(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackLog {
    pub track_id: String,
    pub samples: Vec<TimedSample>,
    /// Nominal sampling rate, when known.
    pub rate_hz: Option<f64>,
}

impl TrackLog {
    pub fn new(track_id: &str, samples: Vec<TimedSample>) -> Result<Self, IngestError> {
        let log = TrackLog {
            track_id: track_id.to_string(),
            samples,
            rate_hz: None,
        };
        log.validate()?;
        Ok(log)
    }

    /// Non-empty, finite and strictly increasing timestamps.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.samples.is_empty() {
            return Err(IngestError::EmptyTrack(self.track_id.clone()));
        }
        if let Some(s) = self.samples.iter().find(|s| !s.t.is_finite()) {
            return Err(IngestError::NonFiniteTime {
                track: self.track_id.clone(),
                t: s.t,
            });
        }
        for w in self.samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(IngestError::DuplicateTimestamp {
                    track: self.track_id.clone(),
                    t: w[1].t,
                });
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Channel values with `NaN` for missing entries.
    pub fn channel(&self, c: Channel) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(c).unwrap_or(f64::NAN)).collect()
    }

    pub fn start(&self) -> f64 {
        self.samples.first().map_or(f64::NAN, |s| s.t)
    }

    pub fn end(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.t)
    }

    /// Median sample spacing in seconds.
    pub fn median_step(&self) -> Option<f64> {
        let mut d: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        if d.is_empty() {
            return None;
        }
        Some(median_in_place(&mut d))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("header is missing column {0:?}")]
    MissingColumn(String),
    #[error("malformed row at line {line}, column {column}: {reason}")]
    MalformedRow { line: u64, column: String, reason: String },
    #[error("track {track} has more than one sample at t={t}")]
    DuplicateTimestamp { track: String, t: f64 },
    #[error("track {track} has a non-finite timestamp {t}")]
    NonFiniteTime { track: String, t: f64 },
    #[error("track {0} is empty")]
    EmptyTrack(String),
    #[error("track {0} has fewer than two samples")]
    DegenerateTrack(String),
    #[error("tracks share no common time window")]
    NoOverlap,
    #[error("target rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("csv error: {0}")]
    Csv(String),
}

/// A rejected input row from lenient parsing.
#[derive(Clone, Debug, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub column: String,
    pub reason: String,
}

/// Output of [`parse_track_log_lenient`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedLogs {
    /// Tracks sorted by time; duplicate timestamps are kept for cleaning.
    pub tracks: Vec<TrackLog>,
    pub rejected: Vec<RowError>,
    pub rows_read: usize,
}

/// Wraps an angle into `(-pi, pi]`; values already in range are returned
/// unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() || (a > -PI && a <= PI) {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

struct Columns {
    idx: [usize; 9],
}

fn header_columns(headers: &csv::StringRecord) -> Result<Columns, IngestError> {
    let mut idx = [0usize; 9];
    for (slot, name) in TRACK_HEADER.iter().enumerate() {
        idx[slot] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }
    Ok(Columns { idx })
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, line: u64) -> Result<(String, TimedSample), RowError> {
    let cell = |slot: usize| rec.get(cols.idx[slot]).map(str::trim).unwrap_or("");
    let err = |slot: usize, reason: &str| RowError {
        line,
        column: TRACK_HEADER[slot].to_string(),
        reason: reason.to_string(),
    };
    let number = |slot: usize, required: bool| -> Result<f64, RowError> {
        let c = cell(slot);
        if c.is_empty() {
            return if required {
                Err(err(slot, "missing required value"))
            } else {
                Ok(f64::NAN)
            };
        }
        let v: f64 = c.parse().map_err(|_| err(slot, &format!("not a number: {c:?}")))?;
        if !v.is_finite() {
            return Err(err(slot, "value must be finite"));
        }
        Ok(v)
    };

    let t = number(0, true)?;
    let track = cell(1);
    if track.is_empty() {
        return Err(err(1, "missing track id"));
    }
    let speed = number(4, false)?;
    if speed < 0.0 {
        return Err(err(4, "speed must be non-negative"));
    }
    let lane = match cell(8) {
        "" => None,
        c => Some(c.parse::<i64>().map_err(|_| err(8, &format!("not an integer: {c:?}")))?),
    };
    Ok((
        track.to_string(),
        TimedSample {
            t,
            x: number(2, false)?,
            y: number(3, false)?,
            speed,
            accel: number(5, false)?,
            yaw: wrap_angle(number(6, false)?),
            yaw_rate: number(7, false)?,
            lane_id: lane,
        },
    ))
}

fn read_rows(text: &str) -> Result<(Vec<(u64, Result<(String, TimedSample), RowError>)>, usize), IngestError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    let cols = header_columns(&headers)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Csv(e.to_string()))?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, parse_row(&rec, &cols, line)));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let n = rows.len();
    Ok((rows, n))
}

fn group(rows: Vec<(String, TimedSample)>) -> Vec<TrackLog> {
    let mut by_track: BTreeMap<String, Vec<TimedSample>> = BTreeMap::new();
    for (id, s) in rows {
        by_track.entry(id).or_default().push(s);
    }
    by_track
        .into_iter()
        .map(|(id, mut samples)| {
            samples.sort_by(|a, b| a.t.total_cmp(&b.t));
            TrackLog {
                track_id: id,
                samples,
                rate_hz: None,
            }
        })
        .collect()
}

/// Parses a track CSV. Any malformed row or repeated `(track_id, t)` is an
/// error. Tracks come back ordered by id, samples by time.
pub fn parse_track_log(text: &str) -> Result<Vec<TrackLog>, IngestError> {
    let (rows, _) = read_rows(text)?;
    let mut good = Vec::with_capacity(rows.len());
    for (_, r) in rows {
        match r {
            Ok(x) => good.push(x),
            Err(e) => {
                return Err(IngestError::MalformedRow {
                    line: e.line,
                    column: e.column,
                    reason: e.reason,
                })
            }
        }
    }
    let tracks = group(good);
    for t in &tracks {
        t.validate()?;
    }
    Ok(tracks)
}

/// Like [`parse_track_log`] but skips malformed rows (reporting them) and
/// keeps duplicate timestamps so a cleaning pass can deal with them.
pub fn parse_track_log_lenient(text: &str) -> Result<ParsedLogs, IngestError> {
    let (rows, rows_read) = read_rows(text)?;
    let mut good = Vec::with_capacity(rows.len());
    let mut rejected = Vec::new();
    for (_, r) in rows {
        match r {
            Ok(x) => good.push(x),
            Err(e) => rejected.push(e),
        }
    }
    Ok(ParsedLogs {
        tracks: group(good),
        rejected,
        rows_read,
    })
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// One CSV data row (no trailing newline) for a sample.
pub fn format_row(track_id: &str, s: &TimedSample) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        fmt_num(s.t),
        track_id,
        fmt_num(s.x),
        fmt_num(s.y),
        fmt_num(s.speed),
        fmt_num(s.accel),
        fmt_num(s.yaw),
        fmt_num(s.yaw_rate),
        s.lane_id.map(|l| l.to_string()).unwrap_or_default()
    )
}

/// Serializes tracks in the track CSV format (LF line endings).
pub fn write_track_csv(tracks: &[TrackLog]) -> String {
    let mut out = TRACK_HEADER.join(",");
    out.push('\n');
    for tr in tracks {
        for s in &tr.samples {
            out.push_str(&format_row(&tr.track_id, s));
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMethod {
    Median,
    Spline,
}

impl FromStr for SyncMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(SyncMethod::Median),
            "spline" => Ok(SyncMethod::Spline),
            other => Err(format!("unknown sync method {other:?} (expected median or spline)")),
        }
    }
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the finite values, `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    median_in_place(&mut v)
}

/// Removes 2*pi jumps so the series is continuous; missing values pass through.
fn unwrap_angles(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &a in v {
        if a.is_nan() {
            out.push(a);
            continue;
        }
        if let Some(p) = prev {
            let d = a - p;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

/// Uniform grid `t_k = start + k / hz` covering `[start, end]`.
pub fn uniform_grid(start: f64, end: f64, hz: f64) -> Vec<f64> {
    let n = ((end - start) * hz + 1e-9).floor() as usize + 1;
    (0..n).map(|k| start + k as f64 / hz).collect()
}

fn resample_channel(times: &[f64], values: &[f64], grid: &[f64], hz: f64, method: SyncMethod) -> Vec<f64> {
    let (ts, vs): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, v)| !v.is_nan())
        .map(|(t, v)| (*t, *v))
        .unzip();
    if ts.is_empty() {
        return vec![f64::NAN; grid.len()];
    }
    match method {
        SyncMethod::Spline => match NaturalCubicSpline::new(&ts, &vs) {
            Some(s) => grid.iter().map(|&t| s.eval(t)).collect(),
            None => grid.iter().map(|&t| linear_at(&ts, &vs, t)).collect(),
        },
        SyncMethod::Median => {
            let half = 0.5 / hz;
            let eps = 1e-12 * (1.0 + half);
            grid.iter()
                .map(|&t| {
                    let lo = ts.partition_point(|&x| x < t - half - eps);
                    let hi = ts.partition_point(|&x| x <= t + half + eps);
                    if hi > lo {
                        let mut w = vs[lo..hi].to_vec();
                        median_in_place(&mut w)
                    } else {
                        linear_at(&ts, &vs, t)
                    }
                })
                .collect()
        }
    }
}

/// Nearest-sample value of the lane channel.
fn nearest_lane(track: &TrackLog, t: f64) -> Option<i64> {
    let s = &track.samples;
    let p = s.partition_point(|x| x.t < t);
    let cands = [p.checked_sub(1), (p < s.len()).then_some(p)];
    cands
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (s[a].t - t).abs().total_cmp(&(s[b].t - t).abs()))
        .and_then(|i| s[i].lane_id)
}

/// Resamples all tracks onto one uniform clock at `target_hz` over the window
/// they all cover.
pub fn synchronize(tracks: &[TrackLog], target_hz: f64, method: SyncMethod) -> Result<Vec<TrackLog>, IngestError> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(IngestError::InvalidRate(target_hz));
    }
    if tracks.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    for tr in tracks {
        if tr.samples.len() < 2 {
            return Err(IngestError::DegenerateTrack(tr.track_id.clone()));
        }
        tr.validate()?;
    }
    let start = tracks.iter().map(TrackLog::start).fold(f64::NEG_INFINITY, f64::max);
    let end = tracks.iter().map(TrackLog::end).fold(f64::INFINITY, f64::min);
    if start > end {
        return Err(IngestError::NoOverlap);
    }
    let grid = uniform_grid(start, end, target_hz);

    Ok(tracks
        .iter()
        .map(|tr| {
            let times = tr.times();
            let mut cols: BTreeMap<Channel, Vec<f64>> = BTreeMap::new();
            for c in Channel::ALL {
                if c == Channel::LaneId {
                    continue;
                }
                let mut raw = tr.channel(c);
                if c == Channel::Yaw {
                    raw = unwrap_angles(&raw);
                }
                let mut out = resample_channel(&times, &raw, &grid, target_hz, method);
                match c {
                    Channel::Yaw => out.iter_mut().for_each(|v| *v = wrap_angle(*v)),
                    Channel::Speed => out.iter_mut().for_each(|v| {
                        if *v < 0.0 {
                            *v = 0.0
                        }
                    }),
                    _ => {}
                }
                cols.insert(c, out);
            }
            let samples = grid
                .iter()
                .enumerate()
                .map(|(k, &t)| TimedSample {
                    t,
                    x: cols[&Channel::X][k],
                    y: cols[&Channel::Y][k],
                    speed: cols[&Channel::Speed][k],
                    accel: cols[&Channel::Accel][k],
                    yaw: cols[&Channel::Yaw][k],
                    yaw_rate: cols[&Channel::YawRate][k],
                    lane_id: nearest_lane(tr, t),
                })
                .collect();
            TrackLog {
                track_id: tr.track_id.clone(),
                samples,
                rate_hz: Some(target_hz),
            }
        })
        .collect())
}

/// Options for [`clock_offset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OffsetOptions {
    /// Correlation grid rate; defaults to the finer of the two median rates.
    pub grid_hz: Option<f64>,
    /// Largest lag searched, in seconds; defaults to half the shorter track.
    pub max_lag: Option<f64>,
}

impl Default for OffsetOptions {
    fn default() -> Self {
        OffsetOptions {
            grid_hz: None,
            max_lag: None,
        }
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 1e-300).then(|| sab / denom)
}

fn is_flat(v: &[f64]) -> bool {
    let finite: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    match finite.first() {
        None => true,
        Some(&f) => finite.iter().all(|&x| (x - f).abs() <= 1e-12 * (1.0 + f.abs())),
    }
}

/// Estimates how far `other`'s clock runs ahead of `reference`'s: the lag `L`
/// maximizing the normalized cross-correlation of `channel` between
/// `reference(t)` and `other(t + L)`. Subtract `L` from `other`'s timestamps
/// to align it. Ties go to the smallest `|L|`; a flat channel yields 0.
pub fn clock_offset(
    reference: &TrackLog,
    other: &TrackLog,
    channel: Channel,
    opts: OffsetOptions,
) -> Result<f64, IngestError> {
    for tr in [reference, other] {
        if tr.samples.len() < 2 {
            return Err(IngestError::DegenerateTrack(tr.track_id.clone()));
        }
    }
    let rv = reference.channel(channel);
    let ov = other.channel(channel);
    if is_flat(&rv) || is_flat(&ov) {
        log::warn!(
            "channel {channel} is flat in {} or {}; clock offset defaults to 0",
            reference.track_id,
            other.track_id
        );
        return Ok(0.0);
    }
    let step = match opts.grid_hz {
        Some(hz) if hz > 0.0 => 1.0 / hz,
        Some(hz) => return Err(IngestError::InvalidRate(hz)),
        None => reference
            .median_step()
            .unwrap_or(1.0)
            .min(other.median_step().unwrap_or(1.0)),
    };
    let r_dur = reference.end() - reference.start();
    let o_dur = other.end() - other.start();
    let max_lag = opts.max_lag.unwrap_or(0.5 * r_dur.min(o_dur)).max(0.0);

    let strip = |tr: &TrackLog, v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        tr.samples
            .iter()
            .zip(v)
            .filter(|(_, x)| !x.is_nan())
            .map(|(s, x)| (s.t, *x))
            .unzip()
    };
    let (rt, rvals) = strip(reference, &rv);
    let (ot, ovals) = strip(other, &ov);
    let grid = uniform_grid(reference.start(), reference.end(), 1.0 / step);
    let ref_on_grid: Vec<f64> = grid.iter().map(|&t| linear_at(&rt, &rvals, t)).collect();
    let min_overlap = 3usize.max(grid.len().min(((o_dur / step) as usize).max(1)) / 2);

    let max_k = (max_lag / step + 1e-9).floor() as i64;
    let mut lags = vec![0i64];
    for k in 1..=max_k {
        lags.push(k);
        lags.push(-k);
    }
    let (o_lo, o_hi) = (other.start(), other.end());
    let mut best: Option<(f64, f64)> = None;
    for k in lags {
        let lag = k as f64 * step;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, &t) in grid.iter().enumerate() {
            let u = t + lag;
            if u >= o_lo - 1e-12 && u <= o_hi + 1e-12 {
                a.push(ref_on_grid[i]);
                b.push(linear_at(&ot, &ovals, u));
            }
        }
        if a.len() < min_overlap {
            continue;
        }
        if let Some(score) = pearson(&a, &b) {
            if best.is_none_or(|(s, _)| score > s + 1e-12) {
                best = Some((score, lag));
            }
        }
    }
    best.map(|(_, lag)| lag).ok_or(IngestError::NoOverlap)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "t,track_id,x,y,speed,accel,yaw,yaw_rate,lane_id\n";

    fn track(id: &str, times: &[f64], f: impl Fn(f64) -> f64) -> TrackLog {
        let samples = times
            .iter()
            .map(|&t| TimedSample {
                speed: f(t).abs(),
                x: f(t),
                ..TimedSample::at(t)
            })
            .collect();
        TrackLog::new(id, samples).unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let text = format!("{HEADER}0.0,a,1,2,3,0,0,0,1\r\n0.1,a,1.5,2,3,0,0.1,0,1\r\n");
        let tracks = parse_track_log(&text).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].samples.len(), 2);
        assert_eq!(tracks[0].samples[1].x, 1.5);
    }

    #[test]
    fn malformed_speed_reports_line() {
        let text = format!("{HEADER}0.0,a,1,2,3,0,0,0,1\n0.1,a,1,2,fast,0,0,0,1\n");
        let err = parse_track_log(&text).unwrap_err();
        assert_eq!(
            err,
            IngestError::MalformedRow {
                line: 3,
                column: "speed".into(),
                reason: "not a number: \"fast\"".into()
            }
        );
        let lenient = parse_track_log_lenient(&text).unwrap();
        assert_eq!(lenient.rejected.len(), 1);
        assert_eq!(lenient.rows_read, 2);
        assert_eq!(lenient.tracks[0].samples.len(), 1);
    }

    #[test]
    fn duplicate_timestamp_and_empty_input() {
        let text = format!("{HEADER}0.0,a,1,2,3,0,0,0,1\n0.0,a,1,2,3,0,0,0,1\n");
        assert!(matches!(
            parse_track_log(&text),
            Err(IngestError::DuplicateTimestamp { ref track, t }) if track == "a" && t == 0.0
        ));
        assert_eq!(parse_track_log(HEADER), Err(IngestError::EmptyInput));
        assert_eq!(parse_track_log(""), Err(IngestError::EmptyInput));
        assert!(matches!(parse_track_log("t,x\n1,2\n"), Err(IngestError::MissingColumn(_))));
    }

    #[test]
    fn empty_cells_are_missing() {
        let text = format!("{HEADER}0.0,a,1,2,,0,0,0,\n");
        let tr = parse_track_log(&text).unwrap();
        assert!(tr[0].samples[0].speed.is_nan());
        assert_eq!(tr[0].samples[0].lane_id, None);
        let back = write_track_csv(&tr);
        assert_eq!(back, format!("{HEADER}0,a,1,2,,0,0,0,\n"));
    }

    #[test]
    fn yaw_is_wrapped() {
        assert_eq!(wrap_angle(1.0), 1.0);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn median_window() {
        assert_eq!(median(&[1.0, 2.0, 9.0]), 2.0);
        assert_eq!(median(&[1.0, f64::NAN, 3.0]), 2.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn spline_sync_reproduces_lines() {
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.13 + 0.01 * ((i * 7) % 5) as f64).collect();
        let tr = track("a", &times, |t| 2.0 * t + 1.0);
        let out = synchronize(&[tr], 10.0, SyncMethod::Spline).unwrap();
        for s in &out[0].samples {
            assert!((s.x - (2.0 * s.t + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn median_sync_takes_window_median() {
        let tr = TrackLog::new(
            "a",
            vec![
                TimedSample { x: 1.0, ..TimedSample::at(0.96) },
                TimedSample { x: 9.0, ..TimedSample::at(0.98) },
                TimedSample { x: 2.0, ..TimedSample::at(1.03) },
                TimedSample { x: 5.0, ..TimedSample::at(1.2) },
            ],
        )
        .unwrap();
        let out = synchronize(&[tr], 10.0, SyncMethod::Median).unwrap();
        // grid 0.96, 1.06, 1.16; window around 0.96 holds {1 (0.96), 9 (0.98)} -> 5
        assert_eq!(out[0].samples[0].x, 5.0);
        // window around 1.06 holds 1.03 only
        assert_eq!(out[0].samples[1].x, 2.0);
    }

    #[test]
    fn sync_errors() {
        let a = track("a", &[0.0, 1.0], |t| t);
        let b = track("b", &[2.0, 3.0], |t| t);
        assert_eq!(synchronize(&[a.clone(), b], 10.0, SyncMethod::Spline), Err(IngestError::NoOverlap));
        let single = TrackLog::new("c", vec![TimedSample::at(0.0)]).unwrap();
        assert_eq!(
            synchronize(&[a.clone(), single], 10.0, SyncMethod::Median),
            Err(IngestError::DegenerateTrack("c".into()))
        );
        assert_eq!(synchronize(&[a], 0.0, SyncMethod::Median), Err(IngestError::InvalidRate(0.0)));
    }

    #[test]
    fn clock_offset_self_and_flat() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let a = track("a", &times, |t| (1.3 * t).sin() + 0.3 * (3.1 * t).cos());
        assert_eq!(clock_offset(&a, &a, Channel::X, OffsetOptions::default()).unwrap(), 0.0);
        let flat = track("f", &times, |_| 4.0);
        assert_eq!(clock_offset(&a, &flat, Channel::X, OffsetOptions::default()).unwrap(), 0.0);
    }
}
