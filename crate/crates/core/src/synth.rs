//! Seeded synthetic car-following logs for demos and end-to-end tests.
//!
//! Each episode has two tracks, `<episode>/ego` and `<episode>/lead`, on
//! different clocks (10 Hz and 8 Hz, the lead offset by 50 ms). Episodes come
//! from three regimes (cruise, urban, congested) so clustering has
//! structure. Sensor noise, dropped values, duplicated rows and occasional
//! ego lane changes are added.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{TimedSample, TrackLog};
use crate::seed;

pub const LANE_WIDTH: f64 = 3.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub episodes: usize,
    /// Seconds per episode.
    pub duration: f64,
    pub ego_hz: f64,
    pub lead_hz: f64,
    /// Probability that a value is dropped.
    pub missing_rate: f64,
    /// Probability that a row is written twice.
    pub duplicate_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            episodes: 60,
            duration: 20.0,
            ego_hz: 10.0,
            lead_hz: 8.0,
            missing_rate: 0.01,
            duplicate_rate: 0.005,
        }
    }
}

/// (lead speed, mean gap) per regime, m/s and m.
const REGIMES: [(&str, f64, f64); 3] = [("cruise", 30.0, 50.0), ("urban", 13.0, 18.0), ("congested", 5.0, 7.0)];

struct Episode {
    v0: f64,
    amp: f64,
    omega: f64,
    phase: f64,
    gap0: f64,
    gap_amp: f64,
    gap_omega: f64,
    lane_change_at: Option<f64>,
}

impl Episode {
    fn lead_x(&self, t: f64) -> f64 {
        self.gap0 + self.v0 * t - self.amp / self.omega * ((self.omega * t + self.phase).cos() - self.phase.cos())
    }

    fn lead_v(&self, t: f64) -> f64 {
        self.v0 + self.amp * (self.omega * t + self.phase).sin()
    }

    fn lead_a(&self, t: f64) -> f64 {
        self.amp * self.omega * (self.omega * t + self.phase).cos()
    }

    fn gap(&self, t: f64) -> f64 {
        self.gap0 + self.gap_amp * (self.gap_omega * t).sin()
    }

    fn ego_x(&self, t: f64) -> f64 {
        self.lead_x(t) - self.gap(t)
    }

    fn ego_v(&self, t: f64) -> f64 {
        self.lead_v(t) - self.gap_amp * self.gap_omega * (self.gap_omega * t).cos()
    }

    fn ego_a(&self, t: f64) -> f64 {
        self.lead_a(t) + self.gap_amp * self.gap_omega * self.gap_omega * (self.gap_omega * t).sin()
    }

    /// Lateral offset, lateral speed and its derivative during a 3 s
    /// smoothstep lane change.
    fn ego_y(&self, t: f64) -> (f64, f64, f64) {
        let Some(t0) = self.lane_change_at else {
            return (0.0, 0.0, 0.0);
        };
        let d = 3.0;
        let u = ((t - t0) / d).clamp(0.0, 1.0);
        if u <= 0.0 || u >= 1.0 {
            return (if u >= 1.0 { LANE_WIDTH } else { 0.0 }, 0.0, 0.0);
        }
        let y = LANE_WIDTH * u * u * (3.0 - 2.0 * u);
        let dy = LANE_WIDTH * 6.0 * u * (1.0 - u) / d;
        let ddy = LANE_WIDTH * 6.0 * (1.0 - 2.0 * u) / (d * d);
        (y, dy, ddy)
    }
}

fn sample_times(start: f64, duration: f64, hz: f64) -> Vec<f64> {
    let n = (duration * hz).floor() as usize;
    (0..=n).map(|k| start + k as f64 / hz).filter(|t| *t <= start + duration).collect()
}

/// Raw logs for `cfg.episodes` episodes, two tracks each. Tracks may hold
/// duplicated rows and missing values.
pub fn synthetic_corpus(cfg: &SynthConfig, seed_value: u64) -> Vec<TrackLog> {
    let mut rng = seed::rng(seed::stage_seed(seed_value, "synth"));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut tracks = Vec::with_capacity(cfg.episodes * 2);
    let width = cfg.episodes.saturating_sub(1).max(1).to_string().len();
    for e in 0..cfg.episodes {
        let (_, v_lead, gap_mean) = REGIMES[e % REGIMES.len()];
        let ep = Episode {
            v0: v_lead * rng.random_range(0.85..1.15),
            amp: v_lead * rng.random_range(0.02..0.08),
            omega: rng.random_range(0.2..0.6),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            gap0: gap_mean * rng.random_range(0.8..1.2),
            gap_amp: gap_mean * rng.random_range(0.02..0.1),
            gap_omega: rng.random_range(0.1..0.4),
            lane_change_at: (rng.random::<f64>() < 0.3).then(|| rng.random_range(2.0..(cfg.duration - 5.0).max(2.5))),
        };
        let id = format!("ep{e:0width$}");

        let mut ego = Vec::new();
        for t in sample_times(0.0, cfg.duration, cfg.ego_hz) {
            let v = ep.ego_v(t).max(0.0);
            let (y, dy, ddy) = ep.ego_y(t);
            let yaw = dy.atan2(v.max(0.1));
            let yaw_rate = (ddy * v - dy * ep.ego_a(t)) / (v * v + dy * dy).max(1e-6);
            ego.push(TimedSample {
                t,
                x: ep.ego_x(t) + 0.05 * noise.sample(&mut rng),
                y: y + 0.02 * noise.sample(&mut rng),
                speed: (v + 0.1 * noise.sample(&mut rng)).max(0.0),
                accel: ep.ego_a(t) + 0.05 * noise.sample(&mut rng),
                yaw: yaw + 0.002 * noise.sample(&mut rng),
                yaw_rate: yaw_rate + 0.005 * noise.sample(&mut rng),
                lane_id: Some(if y > LANE_WIDTH / 2.0 { 2 } else { 1 }),
            });
        }
        let mut lead = Vec::new();
        for t in sample_times(0.05, cfg.duration - 0.05, cfg.lead_hz) {
            lead.push(TimedSample {
                t,
                x: ep.lead_x(t) + 0.05 * noise.sample(&mut rng),
                y: 0.02 * noise.sample(&mut rng),
                speed: (ep.lead_v(t) + 0.1 * noise.sample(&mut rng)).max(0.0),
                accel: ep.lead_a(t) + 0.05 * noise.sample(&mut rng),
                yaw: 0.002 * noise.sample(&mut rng),
                yaw_rate: 0.005 * noise.sample(&mut rng),
                lane_id: Some(1),
            });
        }
        for (suffix, samples) in [("ego", ego), ("lead", lead)] {
            let mut rows = Vec::with_capacity(samples.len());
            let last = samples.len().saturating_sub(1);
            for (k, mut s) in samples.into_iter().enumerate() {
                // keep the first and last rows whole so every track spans
                // its full window
                if k != 0 && k != last && rng.random::<f64>() < cfg.missing_rate {
                    s.speed = f64::NAN;
                }
                if k != 0 && k != last && rng.random::<f64>() < cfg.missing_rate {
                    s.x = f64::NAN;
                }
                rows.push(s);
                if rng.random::<f64>() < cfg.duplicate_rate {
                    rows.push(s);
                }
            }
            tracks.push(TrackLog {
                track_id: format!("{id}/{suffix}"),
                samples: rows,
                rate_hz: None,
            });
        }
    }
    tracks
}
