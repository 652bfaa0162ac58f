//! Longitudinal cut-in / AEB simulator.
//!
//! The cut-in instant is time zero: the other vehicle is already in the ego
//! lane, `cutin_gap_0` ahead, moving at `cutin_speed` and braking at
//! `cutin_decel` until it stops. The ego vehicle holds its speed until the
//! time-to-collision first drops below `ttc_trigger`, then after
//! `actuation_delay` brakes at `min(max_decel, road_friction * g)`. The
//! trigger instant is located inside the step, like a collision.
//!
//! Accelerations are piecewise constant. Each step advances speed by
//! `a dt` and position by `v dt + a dt² / 2`. A vehicle that stops mid-step
//! stays stopped, and the brake onset may split a step. The gap is tracked
//! exactly between steps, so a collision inside a step is not missed.
//!
//! A run ends at the horizon, at a collision, once the ego has stopped, or
//! once the vehicles are opening and the lead no longer decelerates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::density::{kde_fit, Bandwidth, Kernel, ParamDensity};
use crate::generate::SamplingPlan;
use crate::ontology::Scenario;

pub const G: f64 = 9.81;
pub const TRACE_HEADER: &str = "t,ego_x,ego_v,ego_a,lead_x,lead_v,gap,ttc";

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("time step must lie in (0, 0.1], got {0}")]
    InvalidTimestep(f64),
    #[error("horizon must lie in (0, 120], got {0}")]
    InvalidHorizon(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("trace has no states")]
    EmptyTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutInScenario {
    pub ego_speed_0: f64,
    pub cutin_speed: f64,
    pub cutin_gap_0: f64,
    #[serde(default)]
    pub cutin_decel: f64,
    #[serde(default = "one")]
    pub road_friction: f64,
}

fn one() -> f64 {
    1.0
}

impl CutInScenario {
    fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("ego_speed_0", self.ego_speed_0),
            ("cutin_speed", self.cutin_speed),
            ("cutin_gap_0", self.cutin_gap_0),
            ("cutin_decel", self.cutin_decel),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidScenario(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.road_friction) {
            return Err(SimError::InvalidScenario(format!(
                "road_friction must lie in [0, 1], got {}",
                self.road_friction
            )));
        }
        Ok(())
    }

    /// Reads a concrete scenario with parameters `ego_speed`, `cutin_speed`,
    /// `cutin_gap` and optionally `cutin_decel` (default 0) and
    /// `road_friction` (default 1).
    pub fn from_scenario(s: &Scenario) -> Result<Self, SimError> {
        let need = |name: &str| {
            s.number(name)
                .ok_or_else(|| SimError::InvalidScenario(format!("missing numeric parameter {name}")))
        };
        let c = CutInScenario {
            ego_speed_0: need("ego_speed")?,
            cutin_speed: need("cutin_speed")?,
            cutin_gap_0: need("cutin_gap")?,
            cutin_decel: s.number("cutin_decel").unwrap_or(0.0),
            road_friction: s.number("road_friction").unwrap_or(1.0),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AebPolicy {
    /// Trigger threshold in seconds; 0 disables the AEB.
    pub ttc_trigger: f64,
    pub max_decel: f64,
    pub actuation_delay: f64,
}

impl Default for AebPolicy {
    fn default() -> Self {
        AebPolicy {
            ttc_trigger: 2.0,
            max_decel: 8.0,
            actuation_delay: 0.3,
        }
    }
}

impl AebPolicy {
    pub fn disabled() -> Self {
        AebPolicy {
            ttc_trigger: 0.0,
            ..AebPolicy::default()
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.ttc_trigger.is_finite() && self.ttc_trigger >= 0.0) {
            return Err(SimError::InvalidPolicy(format!("ttc_trigger must be >= 0, got {}", self.ttc_trigger)));
        }
        if !(self.max_decel.is_finite() && self.max_decel > 0.0) {
            return Err(SimError::InvalidPolicy(format!("max_decel must be > 0, got {}", self.max_decel)));
        }
        if !(self.actuation_delay.is_finite() && self.actuation_delay >= 0.0) {
            return Err(SimError::InvalidPolicy(format!(
                "actuation_delay must be >= 0, got {}",
                self.actuation_delay
            )));
        }
        Ok(())
    }

    /// Deceleration available to the ego vehicle on this road.
    pub fn brake_decel(&self, road_friction: f64) -> f64 {
        self.max_decel.min(road_friction * G)
    }
}

/// Time to collision, defined only while closing.
pub fn ttc_of(gap: f64, ego_v: f64, lead_v: f64) -> Option<f64> {
    (ego_v > lead_v).then(|| gap.max(0.0) / (ego_v - lead_v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub ego_x: f64,
    pub ego_v: f64,
    /// Ego acceleration in effect from `t` on.
    pub ego_a: f64,
    pub lead_x: f64,
    pub lead_v: f64,
    pub gap: f64,
    pub ttc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub states: Vec<SimState>,
    pub collision: bool,
    /// Minimum of the continuous-time gap; 0 when a collision ends the run.
    pub min_gap: f64,
    pub trigger_time: Option<f64>,
    pub brake_onset: Option<f64>,
    pub collision_time: Option<f64>,
}

impl SimTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for s in &self.states {
            let ttc = s.ttc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.t, s.ego_x, s.ego_v, s.ego_a, s.lead_x, s.lead_v, s.gap, ttc
            );
        }
        out
    }
}

/// Displacement and speed after `s` seconds from speed `v` under constant
/// acceleration `a`, stopping at zero speed.
fn kinematics(v: f64, a: f64, s: f64) -> (f64, f64) {
    if a < 0.0 {
        let stop = v / -a;
        if s >= stop {
            return (v * stop + 0.5 * a * stop * stop, 0.0);
        }
    }
    (v * s + 0.5 * a * s * s, (v + a * s).max(0.0))
}

#[derive(Clone, Copy)]
struct Bodies {
    ego_x: f64,
    ego_v: f64,
    lead_x: f64,
    lead_v: f64,
}

impl Bodies {
    fn gap(&self) -> f64 {
        self.lead_x - self.ego_x
    }

    fn after(&self, a_e: f64, a_l: f64, s: f64) -> Bodies {
        let (de, ve) = kinematics(self.ego_v, a_e, s);
        let (dl, vl) = kinematics(self.lead_v, a_l, s);
        Bodies {
            ego_x: self.ego_x + de,
            ego_v: ve,
            lead_x: self.lead_x + dl,
            lead_v: vl,
        }
    }

    /// Minimum gap over `[0, len]` and the offset where it occurs. The gap is
    /// piecewise quadratic with breaks at the stopping times, so the minimum
    /// is at an end, a stop, or where the speeds match.
    fn min_gap_over(&self, a_e: f64, a_l: f64, len: f64) -> (f64, f64) {
        let mut cands = [0.0, len, f64::NAN, f64::NAN, f64::NAN];
        if a_e < 0.0 {
            cands[2] = self.ego_v / -a_e;
        }
        if a_l < 0.0 {
            cands[3] = self.lead_v / -a_l;
        }
        if a_l != a_e {
            cands[4] = (self.ego_v - self.lead_v) / (a_l - a_e);
        }
        cands
            .into_iter()
            .filter(|s| s.is_finite() && (0.0..=len).contains(s))
            .map(|s| (self.after(a_e, a_l, s).gap(), s))
            .fold((f64::INFINITY, 0.0), |best, c| if c.0 < best.0 { c } else { best })
    }

    /// First offset in `[0, upto]` where the gap reaches zero, given that it
    /// is positive at 0 and non-positive at `upto`.
    fn contact(&self, a_e: f64, a_l: f64, upto: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, upto);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.after(a_e, a_l, mid).gap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        hi
    }

    /// Offset in `(0, len]` where TTC first drops below `trigger` while the
    /// ego cruises. `gap - trigger * closing` is concave until the lead
    /// stops and non-increasing after, so it crosses zero at most once and
    /// only if it is negative at the end.
    fn trigger_within(&self, a_l: f64, trigger: f64, len: f64) -> Option<f64> {
        let margin = |s: f64| {
            let b = self.after(0.0, a_l, s);
            b.gap() - trigger * (b.ego_v - b.lead_v)
        };
        if margin(len) >= 0.0 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, len);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if margin(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        Some(hi)
    }
}

/// Runs one scenario until the horizon, a collision, or the point where the
/// gap can no longer shrink.
pub fn simulate(s: &CutInScenario, p: &AebPolicy, dt: f64, horizon: f64) -> Result<SimTrace, SimError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(SimError::InvalidTimestep(dt));
    }
    if !(horizon > 0.0 && horizon <= 120.0) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    s.validate()?;
    p.validate()?;

    let brake = p.brake_decel(s.road_friction);
    let a_lead_nominal = -s.cutin_decel;
    let mut b = Bodies {
        ego_x: 0.0,
        ego_v: s.ego_speed_0,
        lead_x: s.cutin_gap_0,
        lead_v: s.cutin_speed,
    };
    let mut trigger_time = None;
    let mut onset: Option<f64> = None;
    let mut min_gap = b.gap();
    let mut states = Vec::new();
    let ego_a_at = |t: f64, onset: Option<f64>, v: f64| match onset {
        Some(o) if t >= o - 1e-9 && v > 0.0 => -brake,
        _ => 0.0,
    };
    let lead_a = |v: f64| if v > 0.0 { a_lead_nominal } else { 0.0 };

    let n_steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut t = 0.0;
    let mut k = 0usize;
    loop {
        let ttc = ttc_of(b.gap(), b.ego_v, b.lead_v);
        if trigger_time.is_none() && p.ttc_trigger > 0.0 && ttc.is_some_and(|v| v < p.ttc_trigger) {
            trigger_time = Some(t);
            onset = Some(t + p.actuation_delay);
        }
        states.push(SimState {
            t,
            ego_x: b.ego_x,
            ego_v: b.ego_v,
            ego_a: ego_a_at(t, onset, b.ego_v),
            lead_x: b.lead_x,
            lead_v: b.lead_v,
            gap: b.gap(),
            ttc,
        });

        // the lead never reverses, so a stopped ego ends every approach
        let ego_stopped = b.ego_v == 0.0;
        let opening_for_good = b.ego_v <= b.lead_v && (b.lead_v == 0.0 || s.cutin_decel == 0.0);
        if k >= n_steps || ego_stopped || opening_for_good {
            break;
        }

        let t_end = ((k + 1) as f64 * dt).min(horizon);
        if trigger_time.is_none() && p.ttc_trigger > 0.0 {
            if let Some(tau) = b.trigger_within(lead_a(b.lead_v), p.ttc_trigger, t_end - t) {
                trigger_time = Some(t + tau);
                onset = Some(t + tau + p.actuation_delay);
            }
        }
        let split = onset.filter(|&o| o > t + 1e-9 && o < t_end - 1e-9);
        let cuts = [t, split.unwrap_or(t_end), t_end];
        let pieces = if split.is_some() { 2 } else { 1 };
        for w in cuts[..=pieces].windows(2) {
            let (t0, len) = (w[0], w[1] - w[0]);
            let a_e = ego_a_at(t0, onset, b.ego_v);
            let a_l = lead_a(b.lead_v);
            // the ego never speeds up and the lead never reverses
            if b.gap() - b.ego_v * len >= min_gap {
                b = b.after(a_e, a_l, len);
                continue;
            }
            let (g_min, at) = b.min_gap_over(a_e, a_l, len);
            if g_min <= 0.0 {
                let tc = b.contact(a_e, a_l, at);
                let end = b.after(a_e, a_l, tc);
                let ego_v = end.ego_v;
                states.push(SimState {
                    t: t0 + tc,
                    ego_x: end.ego_x,
                    ego_v,
                    ego_a: ego_a_at(t0 + tc, onset, ego_v),
                    lead_x: end.lead_x,
                    lead_v: end.lead_v,
                    gap: 0.0,
                    ttc: ttc_of(0.0, ego_v, end.lead_v),
                });
                return Ok(SimTrace {
                    dt,
                    states,
                    collision: true,
                    min_gap: 0.0,
                    trigger_time,
                    brake_onset: onset,
                    collision_time: Some(t0 + tc),
                });
            }
            min_gap = min_gap.min(g_min);
            b = b.after(a_e, a_l, len);
        }
        t = t_end;
        k += 1;
    }
    Ok(SimTrace {
        dt,
        states,
        collision: false,
        min_gap,
        trigger_time,
        brake_onset: onset,
        collision_time: None,
    })
}

pub fn collision_indicator(trace: &SimTrace) -> u8 {
    u8::from(trace.collision)
}

/// Safety KPIs; `min_ttc` is `None` (JSON `"none"`) when the vehicles never
/// close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyKpi {
    pub indicator: u8,
    #[serde(serialize_with = "ser_ttc", deserialize_with = "de_ttc")]
    pub min_ttc: Option<f64>,
}

fn ser_ttc<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("none"),
    }
}

fn de_ttc<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(Some(x)),
        Raw::Text(t) if t == "none" => Ok(None),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"none\", got {t:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub safety: SafetyKpi,
    /// Max |ego acceleration|, m/s².
    pub comfort: f64,
    /// Max |jerk| from first differences of ego acceleration, m/s³.
    pub naturalness: f64,
    /// Integrated ego speed loss relative to the initial speed, m.
    pub economy: f64,
}

pub fn evaluate_kpis(trace: &SimTrace) -> Result<KpiReport, SimError> {
    let st = &trace.states;
    if st.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let min_ttc = st.iter().filter_map(|s| s.ttc).min_by(f64::total_cmp);
    let comfort = st.iter().map(|s| s.ego_a.abs()).fold(0.0, f64::max);
    let naturalness = st
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| ((w[1].ego_a - w[0].ego_a) / (w[1].t - w[0].t)).abs())
        .fold(0.0, f64::max);
    let v0 = st[0].ego_v;
    let economy = st
        .windows(2)
        .map(|w| 0.5 * ((v0 - w[0].ego_v) + (v0 - w[1].ego_v)) * (w[1].t - w[0].t))
        .sum();
    Ok(KpiReport {
        safety: SafetyKpi {
            indicator: collision_indicator(trace),
            min_ttc,
        },
        comfort,
        naturalness,
        economy,
    })
}

/// The shipped cut-in logical scenario (see `data/cutin_logical.json`).
pub fn cutin_logical() -> Scenario {
    Scenario::from_json(include_str!("../data/cutin_logical.json")).expect("shipped scenario is valid")
}

/// Mean and standard deviation of the synthetic naturalistic draws the
/// campaign densities are fitted to.
pub const NATURALISTIC: [(&str, f64, f64); 5] = [
    ("cutin_decel", 0.5, 0.3),
    ("cutin_gap", 30.0, 8.0),
    ("cutin_speed", 20.0, 3.0),
    ("ego_speed", 25.0, 3.0),
    ("road_friction", 0.8, 0.05),
];

/// Sampling plan over [`cutin_logical`] with Gaussian KDEs fitted to
/// `samples` seeded normal draws per parameter, using [`NATURALISTIC`].
pub fn cutin_plan(seed: u64, samples: usize, count: usize) -> SamplingPlan {
    cutin_plan_from(&NATURALISTIC, seed, samples, count)
}

/// As [`cutin_plan`] with caller-chosen `(name, mean, sd)` triples.
pub fn cutin_plan_from(naturalistic: &[(&str, f64, f64)], seed: u64, samples: usize, count: usize) -> SamplingPlan {
    use rand_distr::{Distribution, Normal};
    let logical = cutin_logical();
    let mut densities = BTreeMap::new();
    for &(name, mean, sd) in naturalistic {
        let mut rng = crate::seed::rng(crate::seed::stage_seed(seed, name));
        let dist = Normal::new(mean, sd).expect("positive sd");
        let xs: Vec<f64> = (0..samples).map(|_| dist.sample(&mut rng)).collect();
        let kde = kde_fit(&xs, Kernel::Gaussian, Bandwidth::Silverman).expect("finite samples");
        densities.insert(name.to_string(), ParamDensity::Kde(kde));
    }
    SamplingPlan::new(logical, densities, seed, count)
}
