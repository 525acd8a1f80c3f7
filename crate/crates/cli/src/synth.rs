//! Seeded toy inputs for every command, written under the output dir.

use clap::ValueEnum;
use indicators_core::ingest::{write_accel_csv, write_location_csv, PoiCategory};
use indicators_core::labels::{ActivityLabel, TransportLabel};
use indicators_core::mobility::{write_visits_csv, Visit};
use indicators_core::pipelines::write_timeline_csv;
use indicators_core::signal::{AccelSample, AccelStream, LabelTimeline, LocationFix, LocationStream, TimelineEntry};
use indicators_core::synth::{self as gen, GaitBurst, TrackSpec, GRAVITY};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::commands::Out;
use crate::config::Config;
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// gait.csv with 60 steps, gait_truth.json
    Gait,
    /// track.csv with 2–6 planted stays, track_truth.csv
    Track,
    /// pamap2/subject10{1,2,3}.dat
    Pamap2,
    /// transport/train/session_*/ and transport/session/
    Transport,
    /// user/accel/*.csv, user/location.csv, poi.csv
    User,
}

const PAMAP2_ACTIVITIES: [ActivityLabel; 6] = [
    ActivityLabel::Lying,
    ActivityLabel::Sitting,
    ActivityLabel::Standing,
    ActivityLabel::Walking,
    ActivityLabel::Running,
    ActivityLabel::Cycling,
];

const TRANSPORT_RATE_HZ: f64 = 25.0;

pub fn write(cfg: &Config, out: &Out, kind: Kind) -> Result<(), Failure> {
    let seed = cfg.seed;
    match kind {
        Kind::Gait => gait(out, seed),
        Kind::Track => track(out, seed),
        Kind::Pamap2 => {
            for k in 0..3u64 {
                let body = gen::pamap2_subject_file(&PAMAP2_ACTIVITIES, 60.0, seed.wrapping_mul(1000).wrapping_add(k));
                out.write(&format!("pamap2/subject10{}.dat", k + 1), body)?;
            }
            Ok(())
        }
        Kind::Transport => transport(out, seed),
        Kind::User => user(out, seed),
    }
}

fn gait(out: &Out, seed: u64) -> Result<(), Failure> {
    let mut r = gen::rng(seed);
    let mut bursts = Vec::new();
    let mut start = 3.0;
    for _ in 0..2 {
        let b = GaitBurst {
            start_s: start,
            cadence_hz: r.random_range(1.5..2.5),
            n_bumps: 30,
            amplitude: r.random_range(2.5..4.0),
        };
        start = b.end_s() + 5.0;
        bursts.push(b);
    }
    let series = gen::gait_series(100.0, 60.0, &bursts, 0.1, seed);
    write_accel_csv(&gen::stream_from_magnitude(&series), out.file("gait.csv")?)?;
    out.json("gait_truth.json", &serde_json::json!({ "count": 60 }))
}

fn track(out: &Out, seed: u64) -> Result<(), Failure> {
    let mut r = gen::rng(seed);
    let spec = TrackSpec {
        n_stays: r.random_range(2..=6),
        ..TrackSpec::default()
    };
    let t = gen::planted_track(&spec, seed);
    write_location_csv(&t.stream, out.file("track.csv")?)?;
    let truth: Vec<Visit> = t
        .stays
        .iter()
        .map(|s| Visit {
            lat: s.lat,
            lon: s.lon,
            arrival_t: s.arrival_t,
            departure_t: s.departure_t,
            member_indices: Vec::new(),
        })
        .collect();
    out.csv("track_truth.csv", |b| write_visits_csv(b, &truth))
}

fn still(t0: f64, duration_s: f64, r: &mut ChaCha8Rng) -> Vec<AccelSample> {
    let noise = Normal::new(0.0, 0.03).expect("valid");
    let n = (duration_s * TRANSPORT_RATE_HZ).round() as usize;
    (0..n)
        .map(|i| AccelSample::new(t0 + i as f64 / TRANSPORT_RATE_HZ, noise.sample(r), GRAVITY + noise.sample(r), noise.sample(r)))
        .collect()
}

fn speed_kmh(mode: TransportLabel) -> f64 {
    match mode {
        TransportLabel::WalkRun => 5.0,
        TransportLabel::Bike => 15.0,
        TransportLabel::Car => 40.0,
        TransportLabel::Bus => 25.0,
        TransportLabel::TrainSubway => 60.0,
    }
}

fn labels_csv(entries: Vec<TimelineEntry<TransportLabel>>) -> impl FnOnce(&mut Vec<u8>) -> indicators_core::Result<()> {
    move |b| write_timeline_csv(b, &LabelTimeline::new(entries)?)
}

fn transport(out: &Out, seed: u64) -> Result<(), Failure> {
    let mut r = gen::rng(seed);
    for k in 0..3 {
        let mut samples = Vec::new();
        let mut entries = Vec::new();
        let mut t = 0.0;
        for mode in TransportLabel::ALL {
            samples.extend(gen::transport_samples(mode, t, 180.0, TRANSPORT_RATE_HZ, &mut r));
            entries.push(TimelineEntry { t_start: t, t_end: t + 180.0, label: mode });
            t += 180.0;
        }
        let dir = format!("transport/train/session_{k}");
        write_accel_csv(&AccelStream::new(samples, TRANSPORT_RATE_HZ)?, out.file(&format!("{dir}/accel.csv"))?)?;
        out.csv(&format!("{dir}/labels.csv"), labels_csv(entries))?;
    }

    // stays joined by trips of known mode
    let modes = [TransportLabel::WalkRun, TransportLabel::Car, TransportLabel::Bus];
    let (stay_s, trip_s, fix_s) = (600.0, 360.0, 10.0);
    let jitter = Normal::new(0.0, 3.0).expect("valid");
    let (mut lat, mut lon) = (51.5, -0.12);
    let (mut fixes, mut samples, mut entries) = (Vec::new(), Vec::new(), Vec::new());
    let mut t = 0.0;
    for (k, &mode) in modes.iter().chain(std::iter::once(&modes[0])).enumerate() {
        for i in 0..(stay_s / fix_s) as usize {
            let (a, b) = gen::offset(lat, lon, jitter.sample(&mut r), jitter.sample(&mut r));
            fixes.push(LocationFix::new(t + i as f64 * fix_s, a, b, Some(0.0))?);
        }
        samples.extend(still(t, stay_s, &mut r));
        t += stay_s;
        if k == modes.len() {
            break;
        }
        let v = speed_kmh(mode) / 3.6;
        for i in 0..(trip_s / fix_s) as usize {
            let (a, b) = gen::offset(lat, lon, 0.0, v * i as f64 * fix_s);
            fixes.push(LocationFix::new(t + i as f64 * fix_s, a, b, Some(v))?);
        }
        samples.extend(gen::transport_samples(mode, t, trip_s, TRANSPORT_RATE_HZ, &mut r));
        entries.push(TimelineEntry { t_start: t, t_end: t + trip_s, label: mode });
        (lat, lon) = gen::offset(lat, lon, 0.0, v * trip_s);
        t += trip_s;
    }
    write_accel_csv(&AccelStream::new(samples, TRANSPORT_RATE_HZ)?, out.file("transport/session/accel.csv")?)?;
    write_location_csv(&LocationStream::new(fixes)?, out.file("transport/session/location.csv")?)?;
    out.csv("transport/session/labels.csv", labels_csv(entries))
}

/// Monday 2019-05-06 00:00 UTC.
const USER_DAY0: f64 = 1_557_100_800.0;

fn user(out: &Out, seed: u64) -> Result<(), Failure> {
    let mut r = gen::rng(seed);
    let home = (51.5, -0.12);
    let school = gen::offset(home.0, home.1, 1500.0, 0.0);
    let cafe = gen::offset(home.0, home.1, 1500.0, 800.0);
    let gym = gen::offset(home.0, home.1, -3000.0, 0.0);
    let poi = [(home, PoiCategory::Home), (school, PoiCategory::School), (cafe, PoiCategory::Cafe), (gym, PoiCategory::Gym)];
    let mut poi_csv = String::from("lat,lon,category\n");
    for ((lat, lon), c) in poi {
        poi_csv += &format!("{lat:.7},{lon:.7},{c}\n");
    }
    out.write("poi.csv", poi_csv)?;

    let fix_s = 30.0;
    let jitter = Normal::new(0.0, 4.0).expect("valid");
    let mut fixes = Vec::new();
    let stay = |fixes: &mut Vec<LocationFix>, at: (f64, f64), t0: f64, t1: f64, r: &mut ChaCha8Rng| -> Result<(), Failure> {
        let mut t = t0;
        while t < t1 {
            let (a, b) = gen::offset(at.0, at.1, jitter.sample(r), jitter.sample(r));
            fixes.push(LocationFix::new(t, a, b, Some(0.0))?);
            t += fix_s;
        }
        Ok(())
    };
    let travel = |fixes: &mut Vec<LocationFix>, from: (f64, f64), to: (f64, f64), t0: f64, t1: f64| -> Result<(), Failure> {
        let n = ((t1 - t0) / fix_s) as usize;
        for i in 0..n {
            let f = i as f64 / n as f64;
            fixes.push(LocationFix::new(t0 + i as f64 * fix_s, from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1), None)?);
        }
        Ok(())
    };
    let h = 3600.0;
    for d in 0..2 {
        let base = USER_DAY0 + d as f64 * 86_400.0;
        let after = if d == 0 { cafe } else { home };
        stay(&mut fixes, home, base + 7.0 * h, base + 7.75 * h, &mut r)?;
        travel(&mut fixes, home, school, base + 7.75 * h, base + 8.0 * h)?;
        stay(&mut fixes, school, base + 8.0 * h, base + 15.0 * h, &mut r)?;
        travel(&mut fixes, school, after, base + 15.0 * h, base + 15.25 * h)?;
        stay(&mut fixes, after, base + 15.25 * h, base + 16.25 * h, &mut r)?;
        if after != home {
            travel(&mut fixes, after, home, base + 16.25 * h, base + 16.5 * h)?;
            stay(&mut fixes, home, base + 16.5 * h, base + 17.5 * h, &mut r)?;
        }

        let bursts = [GaitBurst { start_s: 30.0, cadence_hz: r.random_range(1.6..2.2), n_bumps: 200 + 50 * d, amplitude: 3.0 }];
        let series = gen::gait_series(50.0, 600.0, &bursts, 0.1, seed.wrapping_add(d as u64));
        let t0 = base + 7.75 * h;
        let samples = series.t().iter().zip(series.m()).map(|(&t, &m)| AccelSample::new(t0 + t, 0.0, 0.0, m)).collect();
        write_accel_csv(&AccelStream::new(samples, 50.0)?, out.file(&format!("user/accel/session_{}.csv", d + 1))?)?;
    }
    write_location_csv(&LocationStream::new(fixes)?, out.file("user/location.csv")?)?;
    Ok(())
}
