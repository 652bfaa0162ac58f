//! Rule-based cleaning of track logs, scored by reconstruction error.
//!
//! The reconstruction error of a repair strategy `g` over series
//! `X_1..X_n` is
//!
//! ```text
//! J = (1/n) * sum_i D(g(X_i), X_i)
//! ```
//!
//! where `D` is the (unrestricted) Damerau-Levenshtein distance. Numeric
//! channels are turned into symbol strings with a [`SymbolizationScheme`]
//! first; each `X_i` is one channel of one log.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Channel, TimedSample, TrackLog};
use crate::seed;

pub type Symbol = u32;

/// Symbol emitted for missing values.
pub const GAP_SYMBOL: Symbol = Symbol::MAX;

/// Default number of equal-width bins when symbolizing a channel.
pub const DEFAULT_BINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
}

/// One cleaning step. Rules run in the order given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CleaningRule {
    /// Drops rows that exactly repeat an earlier row. With `by_timestamp`,
    /// keeps only the first row for every timestamp.
    DropDuplicate {
        #[serde(default)]
        by_timestamp: bool,
    },
    /// Drops rows where the channel is missing.
    DropMissing { channel: String },
    /// Fills gaps by linear interpolation in time; edges copy the nearest
    /// present value.
    RepairInterpolate { channel: String },
    /// Fills gaps with a statistic of the present values.
    RepairStatistic { channel: String, statistic: Statistic },
    /// Clamps present values into `[lo, hi]`.
    ClampRange { channel: String, lo: f64, hi: f64 },
}

impl CleaningRule {
    pub fn channel_name(&self) -> Option<&str> {
        match self {
            CleaningRule::DropDuplicate { .. } => None,
            CleaningRule::DropMissing { channel }
            | CleaningRule::RepairInterpolate { channel }
            | CleaningRule::RepairStatistic { channel, .. }
            | CleaningRule::ClampRange { channel, .. } => Some(channel),
        }
    }

    fn check(&self) -> Result<Option<Channel>, CleanError> {
        if let CleaningRule::ClampRange { lo, hi, .. } = self {
            if !(lo <= hi) {
                return Err(CleanError::InvalidRule(format!("clamp_range needs lo <= hi, got [{lo}, {hi}]")));
            }
        }
        self.channel_name()
            .map(|c| c.parse::<Channel>().map_err(|_| CleanError::UnknownChannel(c.to_string())))
            .transpose()
    }
}

/// Parses a rules file: a JSON array of rule objects.
pub fn parse_rules(text: &str) -> Result<Vec<CleaningRule>, serde_json::Error> {
    serde_json::from_str(text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_out: usize,
    /// Values filled or clamped, per channel.
    pub repairs: BTreeMap<String, usize>,
    pub reconstruction_error: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CleanError {
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("track {track} still has several rows at t={t}; add a drop_duplicate rule")]
    DuplicateTimestamp { track: String, t: f64 },
    #[error("every row was removed from track {0}")]
    EmptyResult(String),
    #[error("sequence lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least one sequence pair is required")]
    EmptyInput,
    #[error("breakpoints must be finite and strictly increasing")]
    InvalidScheme,
}

/// Maps numeric values to symbols by bin membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolizationScheme {
    pub channel: String,
    pub breakpoints: Vec<f64>,
}

impl SymbolizationScheme {
    pub fn new(channel: &str, breakpoints: Vec<f64>) -> Result<Self, CleanError> {
        let ok = !breakpoints.is_empty()
            && breakpoints.iter().all(|b| b.is_finite())
            && breakpoints.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(CleanError::InvalidScheme);
        }
        Ok(SymbolizationScheme {
            channel: channel.to_string(),
            breakpoints,
        })
    }

    /// `bins` equal-width bins over `[lo, hi]`. A degenerate range gets two
    /// symbols split at `lo`.
    pub fn equal_width(channel: &str, lo: f64, hi: f64, bins: usize) -> Self {
        let breakpoints = if !(hi > lo) || bins < 2 {
            vec![if lo.is_finite() { lo } else { 0.0 }]
        } else {
            (1..bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
        };
        SymbolizationScheme {
            channel: channel.to_string(),
            breakpoints,
        }
    }

    /// Default scheme for a series: [`DEFAULT_BINS`] bins over its observed range.
    pub fn for_series(channel: &str, values: &[f64]) -> Self {
        let (lo, hi) = values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self::equal_width(channel, lo, hi, DEFAULT_BINS)
    }

    pub fn alphabet_size(&self) -> usize {
        self.breakpoints.len() + 1
    }
}

/// Symbol index of each value: the number of breakpoints strictly below it.
pub fn symbolize(series: &[f64], scheme: &SymbolizationScheme) -> Vec<Symbol> {
    series
        .iter()
        .map(|&v| {
            if v.is_nan() {
                GAP_SYMBOL
            } else {
                scheme.breakpoints.partition_point(|&b| b < v) as Symbol
            }
        })
        .collect()
}

/// Unrestricted Damerau-Levenshtein distance (insertions, deletions,
/// substitutions and adjacent transpositions, all unit cost). Unlike the
/// optimal-string-alignment variant this is a metric.
pub fn dl_distance<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let (la, lb) = (a.len(), b.len());
    if la == 0 {
        return lb;
    }
    if lb == 0 {
        return la;
    }
    let inf = la + lb;
    let w = lb + 2;
    let mut d = vec![0usize; (la + 2) * w];
    d[0] = inf;
    for i in 0..=la {
        d[(i + 1) * w] = inf;
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=lb {
        d[j + 1] = inf;
        d[w + j + 1] = j;
    }
    // last row (1-based) where each symbol of `a` was seen
    let mut last_row: HashMap<&T, usize> = HashMap::new();
    for i in 1..=la {
        let mut last_col = 0;
        for j in 1..=lb {
            let i1 = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let j1 = last_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_col = j;
                0
            } else {
                1
            };
            let sub = d[i * w + j] + cost;
            let ins = d[(i + 1) * w + j] + 1;
            let del = d[i * w + j + 1] + 1;
            let trans = d[i1 * w + j1] + (i - i1 - 1) + 1 + (j - j1 - 1);
            d[(i + 1) * w + j + 1] = sub.min(ins).min(del).min(trans);
        }
        last_row.insert(&a[i - 1], i);
    }
    d[(la + 1) * w + lb + 1]
}

/// Mean Damerau-Levenshtein distance between paired sequences.
pub fn reconstruction_error<T: Eq + Hash>(originals: &[Vec<T>], repaired: &[Vec<T>]) -> Result<f64, CleanError> {
    if originals.len() != repaired.len() {
        return Err(CleanError::LengthMismatch(originals.len(), repaired.len()));
    }
    if originals.is_empty() {
        return Err(CleanError::EmptyInput);
    }
    let total: usize = originals.iter().zip(repaired).map(|(o, r)| dl_distance(r, o)).sum();
    Ok(total as f64 / originals.len() as f64)
}

fn present(samples: &[TimedSample], c: Channel) -> Vec<(f64, f64)> {
    samples.iter().filter_map(|s| s.get(c).map(|v| (s.t, v))).collect()
}

fn apply(rule: &CleaningRule, channel: Option<Channel>, rows: &mut Vec<TimedSample>, repairs: &mut BTreeMap<String, usize>) {
    match (rule, channel) {
        (CleaningRule::DropDuplicate { by_timestamp }, _) => {
            let mut kept: Vec<TimedSample> = Vec::with_capacity(rows.len());
            let mut group_start = 0;
            for s in rows.drain(..) {
                if kept.last().is_none_or(|k| k.t != s.t) {
                    group_start = kept.len();
                }
                let dup = kept[group_start..]
                    .iter()
                    .any(|k| k.t == s.t && (*by_timestamp || k.same_as(&s)));
                if !dup {
                    kept.push(s);
                }
            }
            *rows = kept;
        }
        (CleaningRule::DropMissing { .. }, Some(c)) => rows.retain(|s| s.get(c).is_some()),
        (CleaningRule::RepairInterpolate { .. }, Some(c)) => {
            let known = present(rows, c);
            if known.is_empty() {
                return;
            }
            let (ts, vs): (Vec<f64>, Vec<f64>) = known.into_iter().unzip();
            let mut n = 0;
            for s in rows.iter_mut().filter(|s| s.get(c).is_none()) {
                s.set(c, Some(crate::interp::linear_at(&ts, &vs, s.t)));
                n += 1;
            }
            *repairs.entry(c.name().to_string()).or_default() += n;
        }
        (CleaningRule::RepairStatistic { statistic, .. }, Some(c)) => {
            let vs: Vec<f64> = present(rows, c).into_iter().map(|(_, v)| v).collect();
            if vs.is_empty() {
                return;
            }
            let fill = match statistic {
                Statistic::Mean => vs.iter().sum::<f64>() / vs.len() as f64,
                Statistic::Median => crate::ingest::median(&vs),
            };
            let mut n = 0;
            for s in rows.iter_mut().filter(|s| s.get(c).is_none()) {
                s.set(c, Some(fill));
                n += 1;
            }
            *repairs.entry(c.name().to_string()).or_default() += n;
        }
        (CleaningRule::ClampRange { lo, hi, .. }, Some(c)) => {
            let mut n = 0;
            for s in rows.iter_mut() {
                if let Some(v) = s.get(c) {
                    let clamped = v.clamp(*lo, *hi);
                    if clamped != v {
                        s.set(c, Some(clamped));
                        n += 1;
                    }
                }
            }
            *repairs.entry(c.name().to_string()).or_default() += n;
        }
        (_, None) => unreachable!("channel rules are checked before application"),
    }
}

/// Reconstruction error between two versions of a log, one term per channel,
/// each symbolized with the default scheme fitted to the original.
pub fn log_reconstruction_error(original: &TrackLog, cleaned: &TrackLog) -> f64 {
    let (orig, rep): (Vec<Vec<Symbol>>, Vec<Vec<Symbol>>) = Channel::ALL
        .iter()
        .map(|&c| {
            let o = original.channel(c);
            let scheme = SymbolizationScheme::for_series(c.name(), &o);
            (symbolize(&o, &scheme), symbolize(&cleaned.channel(c), &scheme))
        })
        .unzip();
    reconstruction_error(&orig, &rep).unwrap_or(0.0)
}

/// Applies the rules in order and reports every mutation.
pub fn clean(log: &TrackLog, rules: &[CleaningRule]) -> Result<(TrackLog, CleaningReport), CleanError> {
    let channels = rules.iter().map(CleaningRule::check).collect::<Result<Vec<_>, _>>()?;
    let mut rows = log.samples.clone();
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut repairs: BTreeMap<String, usize> = Channel::ALL.iter().map(|c| (c.name().to_string(), 0)).collect();
    for (rule, ch) in rules.iter().zip(channels) {
        apply(rule, ch, &mut rows, &mut repairs);
    }
    if rows.is_empty() {
        return Err(CleanError::EmptyResult(log.track_id.clone()));
    }
    if let Some(w) = rows.windows(2).find(|w| w[1].t <= w[0].t) {
        return Err(CleanError::DuplicateTimestamp {
            track: log.track_id.clone(),
            t: w[1].t,
        });
    }
    let out = TrackLog {
        track_id: log.track_id.clone(),
        samples: rows,
        rate_hz: log.rate_hz,
    };
    let report = CleaningReport {
        rows_in: log.samples.len(),
        rows_out: out.samples.len(),
        repairs,
        reconstruction_error: log_reconstruction_error(log, &out),
    };
    Ok((out, report))
}

/// Scores repair strategies on held-out data: blanks a random `fraction` of
/// `channel` in each (complete) log, repairs it with each strategy, and
/// returns `J` against the untouched channel, one term per log.
pub fn repair_benchmark(
    logs: &[TrackLog],
    channel: Channel,
    fraction: f64,
    seed: u64,
    strategies: &[CleaningRule],
) -> Result<Vec<(CleaningRule, f64)>, CleanError> {
    if logs.is_empty() {
        return Err(CleanError::EmptyInput);
    }
    let corrupted: Vec<TrackLog> = logs
        .iter()
        .enumerate()
        .map(|(i, log)| {
            let mut rng = seed::draw_rng(seed, i as u64);
            let n = log.samples.len();
            let k = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
            let mut out = log.clone();
            for idx in index::sample(&mut rng, n, k.min(n)) {
                out.samples[idx].set(channel, None);
            }
            out
        })
        .collect();
    let schemes: Vec<SymbolizationScheme> = logs
        .iter()
        .map(|l| SymbolizationScheme::for_series(channel.name(), &l.channel(channel)))
        .collect();
    let truth: Vec<Vec<Symbol>> = logs
        .iter()
        .zip(&schemes)
        .map(|(l, s)| symbolize(&l.channel(channel), s))
        .collect();

    strategies
        .iter()
        .map(|rule| {
            let repaired = corrupted
                .iter()
                .zip(&schemes)
                .map(|(l, s)| clean(l, std::slice::from_ref(rule)).map(|(c, _)| symbolize(&c.channel(channel), s)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((rule.clone(), reconstruction_error(&truth, &repaired)?))
        })
        .collect()
}
