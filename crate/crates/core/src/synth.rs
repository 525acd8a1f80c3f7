//! Synthetic signal and track generators with known ground truth.
//!
//! Used by tests and the acceptance suite; each generator records exactly
//! what it planted so the extractors can be checked against it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::labels::{ActivityLabel, TransportLabel};
use crate::signal::{AccelSample, AccelStream, LocationFix, LocationStream, MagnitudeSeries, EARTH_RADIUS_M};

pub const GRAVITY: f64 = 9.81;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A train of raised-cosine bumps, one per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitBurst {
    pub start_s: f64,
    pub cadence_hz: f64,
    pub n_bumps: usize,
    pub amplitude: f64,
}

impl GaitBurst {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.n_bumps as f64 / self.cadence_hz
    }
}

/// Fraction of the step period occupied by each bump.
pub const BUMP_DUTY: f64 = 0.6;

/// Magnitude series of gravity plus the given bursts and white noise.
pub fn gait_series(rate_hz: f64, duration_s: f64, bursts: &[GaitBurst], noise_std: f64, seed: u64) -> MagnitudeSeries {
    let n = (duration_s * rate_hz).round() as usize;
    let mut m = vec![GRAVITY; n];
    for b in bursts {
        let width = BUMP_DUTY / b.cadence_hz;
        for k in 0..b.n_bumps {
            let t0 = b.start_s + k as f64 / b.cadence_hz;
            let i0 = (t0 * rate_hz).ceil() as usize;
            let i1 = ((t0 + width) * rate_hz).floor() as usize;
            for (i, v) in m.iter_mut().enumerate().take(i1.min(n.saturating_sub(1)) + 1).skip(i0) {
                let phase = (i as f64 / rate_hz - t0) / width;
                *v += b.amplitude * 0.5 * (1.0 - (2.0 * PI * phase).cos());
            }
        }
    }
    if noise_std > 0.0 {
        let mut r = rng(seed);
        let normal = Normal::new(0.0, noise_std).expect("valid noise");
        for v in &mut m {
            *v += normal.sample(&mut r);
        }
    }
    MagnitudeSeries::uniform(0.0, rate_hz, m)
}

/// Wraps a magnitude series as a z-axis-only accelerometer stream.
pub fn stream_from_magnitude(series: &MagnitudeSeries) -> AccelStream {
    let samples = series
        .t()
        .iter()
        .zip(series.m())
        .map(|(&t, &m)| AccelSample::new(t, 0.0, 0.0, m))
        .collect();
    AccelStream::new(samples, series.rate_hz()).expect("generated stream is valid")
}

/// Ground truth for one planted stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedStay {
    pub lat: f64,
    pub lon: f64,
    pub arrival_t: f64,
    pub departure_t: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedTrack {
    pub stream: LocationStream,
    pub stays: Vec<PlantedStay>,
}

/// Offsets `(lat, lon)` by `(north_m, east_m)` on the local tangent plane.
pub fn offset(lat: f64, lon: f64, north_m: f64, east_m: f64) -> (f64, f64) {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * lat.to_radians().cos())).to_degrees();
    (lat + dlat, lon + dlon)
}

#[derive(Debug, Clone, Copy)]
pub struct TrackSpec {
    pub origin: (f64, f64),
    pub n_stays: usize,
    pub fix_interval_s: f64,
    pub jitter_m: f64,
    pub stay_s: (f64, f64),
    pub transit_m: (f64, f64),
    pub speed_kmh: (f64, f64),
}

impl Default for TrackSpec {
    fn default() -> Self {
        Self {
            origin: (51.5, -0.12),
            n_stays: 3,
            fix_interval_s: 10.0,
            jitter_m: 10.0,
            stay_s: (600.0, 3600.0),
            transit_m: (200.0, 3000.0),
            speed_kmh: (10.0, 50.0),
        }
    }
}

fn jitter(r: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let rho = radius * r.random::<f64>().sqrt();
    let theta = r.random::<f64>() * 2.0 * PI;
    (rho * theta.cos(), rho * theta.sin())
}

/// Stays with uniform-disc jitter joined by straight constant-speed transits.
pub fn planted_track(spec: &TrackSpec, seed: u64) -> PlantedTrack {
    let mut r = rng(seed);
    let mut fixes = Vec::new();
    let mut stays = Vec::new();
    let mut t = 0.0;
    let (mut lat, mut lon) = spec.origin;
    for s in 0..spec.n_stays {
        if s > 0 {
            let dist = r.random_range(spec.transit_m.0..=spec.transit_m.1);
            let heading = r.random::<f64>() * 2.0 * PI;
            let speed = r.random_range(spec.speed_kmh.0..=spec.speed_kmh.1) / 3.6;
            let duration = dist / speed;
            let (lat0, lon0) = (lat, lon);
            let steps = (duration / spec.fix_interval_s).floor() as usize;
            for k in 1..=steps {
                let d = speed * k as f64 * spec.fix_interval_s;
                let (a, b) = offset(lat0, lon0, d * heading.cos(), d * heading.sin());
                fixes.push(LocationFix { t: t + k as f64 * spec.fix_interval_s, lat: a, lon: b, speed_mps: Some(speed) });
            }
            t += duration;
            (lat, lon) = offset(lat0, lon0, dist * heading.cos(), dist * heading.sin());
            // continue on the fix grid
            t = (t / spec.fix_interval_s).ceil() * spec.fix_interval_s;
            if fixes.last().is_some_and(|f| f.t >= t) {
                t += spec.fix_interval_s;
            }
        }
        let dwell = r.random_range(spec.stay_s.0..=spec.stay_s.1);
        let n = (dwell / spec.fix_interval_s).floor() as usize + 1;
        let arrival = t;
        for k in 0..n {
            let (dn, de) = jitter(&mut r, spec.jitter_m);
            let (a, b) = offset(lat, lon, dn, de);
            fixes.push(LocationFix { t: arrival + k as f64 * spec.fix_interval_s, lat: a, lon: b, speed_mps: Some(0.0) });
        }
        let departure = arrival + (n - 1) as f64 * spec.fix_interval_s;
        stays.push(PlantedStay { lat, lon, arrival_t: arrival, departure_t: departure });
        t = departure;
    }
    PlantedTrack {
        stream: LocationStream::new(fixes).expect("generated fixes are ordered"),
        stays,
    }
}

/// Straight constant-speed track with no stops.
pub fn straight_track(origin: (f64, f64), speed_mps: f64, fix_interval_s: f64, n: usize) -> LocationStream {
    let fixes = (0..n)
        .map(|k| {
            let d = speed_mps * k as f64 * fix_interval_s;
            let (lat, lon) = offset(origin.0, origin.1, d, 0.0);
            LocationFix { t: k as f64 * fix_interval_s, lat, lon, speed_mps: Some(speed_mps) }
        })
        .collect();
    LocationStream::new(fixes).expect("ordered")
}

/// Per-subject sensor traits: calibration bias and movement style.
#[derive(Debug, Clone, Copy)]
pub struct SubjectTraits {
    pub bias: [f64; 3],
    pub cadence_scale: f64,
    pub intensity_scale: f64,
    pub posture_tilt_deg: f64,
    /// Broadband corrective sway while standing, m/s².
    pub balance: f64,
}

impl SubjectTraits {
    pub fn sample(seed: u64) -> Self {
        let mut r = rng(seed ^ 0x5eed_5eed);
        Self {
            bias: [
                r.random_range(-0.08..0.08),
                r.random_range(-0.08..0.08),
                r.random_range(-0.08..0.08),
            ],
            cadence_scale: r.random_range(0.9..1.1),
            intensity_scale: r.random_range(0.85..1.15),
            posture_tilt_deg: r.random_range(5.0..20.0),
            balance: r.random_range(0.04..0.08),
        }
    }
}

fn rotate_gravity(theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (th, ph) = (theta_deg.to_radians(), phi_deg.to_radians());
    [
        GRAVITY * th.sin() * ph.cos(),
        GRAVITY * th.cos(),
        GRAVITY * th.sin() * ph.sin(),
    ]
}

/// Chest-worn triaxial accelerometer for one activity, `duration_s` long,
/// sampled at `rate_hz` starting at `t0`.
///
/// Static postures differ only by trunk orientation against gravity, so
/// their magnitudes differ through the per-axis calibration bias alone.
pub fn activity_samples(
    activity: ActivityLabel,
    traits: &SubjectTraits,
    t0: f64,
    duration_s: f64,
    rate_hz: f64,
    r: &mut ChaCha8Rng,
) -> Vec<AccelSample> {
    use ActivityLabel::*;
    let n = (duration_s * rate_hz).round() as usize;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    // (cadence Hz, vertical amplitude, sway amplitude, sensor noise, orientation)
    let (cadence, amp, sway, sensor_noise, orient) = match activity {
        Lying => (0.0, 0.0, 0.01, 0.002, (90.0, 0.0)),
        Sitting => (0.0, 0.0, 0.015, 0.005, (traits.posture_tilt_deg, 0.0)),
        Standing => (0.0, 0.0, 0.03, 0.005, (2.0, 0.0)),
        Walking => (1.8, 3.5, 0.6, 0.15, (5.0, 0.0)),
        Running => (2.7, 11.0, 1.5, 0.3, (10.0, 0.0)),
        Cycling => (1.2, 1.2, 0.8, 0.25, (25.0, 0.0)),
        NordicWalking => (1.7, 4.5, 1.0, 0.2, (8.0, 0.0)),
        AscendingStairs => (1.5, 4.0, 0.5, 0.15, (10.0, 0.0)),
        DescendingStairs => (1.8, 5.5, 0.7, 0.2, (5.0, 0.0)),
        VacuumCleaning => (0.7, 1.5, 1.2, 0.2, (20.0, 30.0)),
        Ironing => (0.5, 0.5, 0.4, 0.1, (10.0, 10.0)),
        RopeJumping => (2.3, 16.0, 1.0, 0.4, (3.0, 0.0)),
    };
    // postural micro-motion along gravity: the magnitude sees it, unlike
    // horizontal sway; sitting and standing overlap across subjects
    let micro = match activity {
        Lying => 0.003,
        Sitting => 0.02,
        Standing => 0.026,
        _ => 0.0,
    } * traits.intensity_scale;
    // standing balance adds broadband corrections on top of breathing
    let balance = match activity {
        Standing => traits.balance,
        Sitting => 0.25 * traits.balance,
        _ => 0.0,
    };
    let tones: Vec<(f64, f64)> = (0..5).map(|_| (r.random_range(0.6..2.5), r.random::<f64>() * 2.0 * PI)).collect();
    let cadence = cadence * traits.cadence_scale;
    let amp = amp * traits.intensity_scale;
    let g = rotate_gravity(orient.0, orient.1);
    let sway_f = 0.25 + r.random::<f64>() * 0.2;
    let sway_phase = r.random::<f64>() * 2.0 * PI;
    let step_phase = r.random::<f64>();
    (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            let mut vertical = 0.0;
            if cadence > 0.0 {
                let phase = (t * cadence + step_phase).fract();
                if phase < BUMP_DUTY {
                    vertical = amp * 0.5 * (1.0 - (2.0 * PI * phase / BUMP_DUTY).cos()) - amp * BUMP_DUTY * 0.5;
                } else {
                    vertical = -amp * BUMP_DUTY * 0.5;
                }
            }
            let osc = (2.0 * PI * sway_f * t + sway_phase).sin();
            let sway_v = sway * osc;
            let corr: f64 = tones.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum::<f64>() / 5f64.sqrt();
            let m = 1.0 + (micro * osc + balance * corr) / GRAVITY;
            let ax = g[0] * m + traits.bias[0] + sway_v + sensor_noise * noise.sample(r);
            let ay = g[1] * m + traits.bias[1] + vertical + 0.3 * sway_v + sensor_noise * noise.sample(r);
            let az = g[2] * m + traits.bias[2] + 0.5 * sway_v + sensor_noise * noise.sample(r);
            AccelSample::new(t0 + t, ax, ay, az)
        })
        .collect()
}

/// One PAMAP2-format row with the given chest accelerometer reading; the
/// other IMUs repeat the chest values, the remaining channels are zero.
pub fn pamap2_row(ts: f64, activity_id: u32, acc: [f64; 3]) -> String {
    let mut cols: Vec<String> = Vec::with_capacity(54);
    cols.push(format!("{ts:.2}"));
    cols.push(activity_id.to_string());
    cols.push("NaN".into());
    for _ in 0..3 {
        cols.push("30.0".into());
        for v in acc {
            cols.push(format!("{v:.5}"));
        }
        for v in acc {
            cols.push(format!("{v:.5}"));
        }
        cols.extend(std::iter::repeat_n("0.0".to_string(), 10));
    }
    cols.join(" ")
}

/// A PAMAP2-format subject file: each activity performed for `per_activity_s`
/// with 10 s transient rests (activity 0) between them.
pub fn pamap2_subject_file(activities: &[ActivityLabel], per_activity_s: f64, seed: u64) -> String {
    let traits = SubjectTraits::sample(seed);
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut t = 5.0;
    let rate = 100.0;
    for &a in activities {
        for (id, dur, act) in [(0, 10.0, ActivityLabel::Standing), (a.pamap2_id(), per_activity_s, a)] {
            for s in activity_samples(act, &traits, t, dur, rate, &mut r) {
                rows.push(pamap2_row(s.t, id, [s.ax, s.ay, s.az]));
            }
            t += dur;
        }
    }
    rows.join("\n") + "\n"
}

/// Vibration profile of one transport mode as a triaxial accelerometer
/// stream from `t0`. Walking/running carry gait bumps, bikes pedal
/// cadence, vehicles low-frequency sway plus engine/rail vibration.
pub fn transport_samples(mode: TransportLabel, t0: f64, duration_s: f64, rate_hz: f64, r: &mut ChaCha8Rng) -> Vec<AccelSample> {
    let n = (duration_s * rate_hz).round() as usize;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let running = r.random::<f64>() < 0.3;
    let cadence = match mode {
        TransportLabel::WalkRun if running => r.random_range(2.5..3.0),
        TransportLabel::WalkRun => r.random_range(1.6..2.1),
        TransportLabel::Bike => r.random_range(1.0..1.5),
        _ => 0.0,
    };
    let amp = match mode {
        TransportLabel::WalkRun if running => r.random_range(8.0..12.0),
        TransportLabel::WalkRun => r.random_range(2.5..4.5),
        TransportLabel::Bike => r.random_range(0.6..1.2),
        _ => 0.0,
    };
    // (sway freq Hz, sway amp, vibration freq Hz, vibration amp, noise)
    let (sway_f, sway_a, vib_f, vib_a, noise_std) = match mode {
        TransportLabel::WalkRun => (0.3, 0.3, 0.0, 0.0, 0.2),
        TransportLabel::Bike => (0.2, 0.4, r.random_range(6.0..9.0), 0.5, 0.35),
        TransportLabel::Car => (r.random_range(0.1..0.3), 0.35, r.random_range(4.0..6.0), 0.12, 0.06),
        TransportLabel::Bus => (r.random_range(0.08..0.2), 0.5, r.random_range(2.5..4.0), 0.18, 0.08),
        TransportLabel::TrainSubway => (r.random_range(0.05..0.15), 0.2, r.random_range(7.0..9.5), 0.08, 0.04),
    };
    let p1 = r.random::<f64>();
    let p2 = r.random::<f64>() * 2.0 * PI;
    let p3 = r.random::<f64>() * 2.0 * PI;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            let mut vertical = 0.0;
            if cadence > 0.0 {
                let phase = (t * cadence + p1).fract();
                if phase < BUMP_DUTY {
                    vertical = amp * 0.5 * (1.0 - (2.0 * PI * phase / BUMP_DUTY).cos());
                }
            }
            let sway = sway_a * (2.0 * PI * sway_f * t + p2).sin();
            let vib = vib_a * (2.0 * PI * vib_f * t + p3).sin();
            AccelSample::new(
                t0 + t,
                sway + noise_std * noise.sample(r),
                GRAVITY + vertical + vib + noise_std * noise.sample(r),
                0.5 * sway + noise_std * noise.sample(r),
            )
        })
        .collect()
}
