//! Per-user behavioural profile: daily steps, activity counts, weekly
//! visits by place category and the after-school destination.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::Biquad;
use crate::ingest::{nearest_poi, PoiCategory, PoiEntry};
use crate::mobility::Visit;
use crate::signal::{resample, AccelStream, MagnitudeSeries, CANONICAL_RATE_HZ};

pub const COUNTS_BAND_HZ: (f64, f64) = (0.25, 2.5);
pub const DEFAULT_EPOCH_S: f64 = 60.0;
/// Counts per minute produced by a 1 Hz sinusoid of 1 m/s² amplitude.
pub const REFERENCE_COUNTS_PER_MIN: f64 = 1000.0;
pub const UNKNOWN: &str = "unknown";

/// Scale from integrated rectified band-pass output (m/s² · s) to counts.
///
/// A unit 1 Hz sine leaves the band-pass with gain `g`; its rectified
/// mean is `2g/π`, so one minute integrates to `60 · 2g/π`.
pub fn counts_scale(bp: &Biquad, fs: f64) -> f64 {
    let g = bp.gain_at(1.0, fs);
    REFERENCE_COUNTS_PER_MIN / (60.0 * 2.0 * g / std::f64::consts::PI)
}

/// Counts per full epoch of a uniform magnitude series.
pub fn activity_counts_series(series: &MagnitudeSeries, epoch_s: f64) -> Result<Vec<u64>> {
    if !(epoch_s > 0.0) {
        return Err(Error::param("epoch_s", "must be positive"));
    }
    let fs = series.rate_hz();
    let bp = Biquad::bandpass(COUNTS_BAND_HZ.0, COUNTS_BAND_HZ.1, fs)?;
    let y = bp.filter(series.m());
    let scale = counts_scale(&bp, fs);
    let per_epoch = (epoch_s * fs).round() as usize;
    Ok(y
        .chunks_exact(per_epoch.max(1))
        .map(|c| (c.iter().map(|v| v.abs()).sum::<f64>() / fs * scale).round() as u64)
        .collect())
}

/// Band-pass 0.25–2.5 Hz magnitude, rectify, integrate per full epoch.
pub fn activity_counts(stream: &AccelStream, epoch_s: f64) -> Result<Vec<u64>> {
    activity_counts_series(&resample(stream, CANONICAL_RATE_HZ)?, epoch_s)
}

/// Calendar date of a session-relative time, given the session's Unix
/// epoch and a fixed UTC offset.
pub fn local_date(epoch_s: f64, t: f64, utc_offset_s: i64) -> Result<NaiveDate> {
    let secs = (epoch_s + t).floor() as i64 + utc_offset_s;
    DateTime::from_timestamp(secs, 0)
        .map(|d| d.date_naive())
        .ok_or_else(|| Error::param("epoch_s", format!("{} is not a representable time", epoch_s + t)))
}

/// Mean over dates of each date's total steps.
pub fn daily_steps(sessions: &[(NaiveDate, u64)]) -> Result<f64> {
    if sessions.is_empty() {
        return Err(Error::Invalid("no sessions".into()));
    }
    let mut per_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for &(d, n) in sessions {
        *per_day.entry(d).or_default() += n;
    }
    Ok(per_day.values().sum::<u64>() as f64 / per_day.len() as f64)
}

pub fn visit_category(v: &Visit, poi: &[PoiEntry], radius_m: f64) -> Option<PoiCategory> {
    nearest_poi(poi, &v.centroid(), radius_m).map(|e| e.category)
}

fn category_key(c: Option<PoiCategory>) -> String {
    c.map_or_else(|| UNKNOWN.to_string(), |c| c.as_str().to_string())
}

/// Visits per week by category: `count × 7 / span_days`. Visits with no
/// POI within `radius_m` count as "unknown".
pub fn weekly_place_visits(visits: &[Visit], poi: &[PoiEntry], radius_m: f64, span_days: f64) -> Result<BTreeMap<String, f64>> {
    if !(span_days >= 1.0) {
        return Err(Error::param("span_days", "observation span must be at least one day"));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for v in visits {
        *counts.entry(category_key(visit_category(v, poi, radius_m))).or_default() += 1;
    }
    Ok(counts.into_iter().map(|(k, n)| (k, n as f64 * 7.0 / span_days)).collect())
}

/// Tally of the category visited next after each school visit, on the
/// same day. `date_of` maps a session time to its calendar date.
pub fn after_school_tally(visits: &[Visit], poi: &[PoiEntry], radius_m: f64, date_of: impl Fn(f64) -> Result<NaiveDate>) -> Result<BTreeMap<String, u64>> {
    let mut tally = BTreeMap::new();
    for pair in visits.windows(2) {
        if visit_category(&pair[0], poi, radius_m) != Some(PoiCategory::School) {
            continue;
        }
        if date_of(pair[0].departure_t)? != date_of(pair[1].arrival_t)? {
            continue;
        }
        *tally.entry(category_key(visit_category(&pair[1], poi, radius_m))).or_default() += 1;
    }
    Ok(tally)
}

/// Modal after-school category; ties go to the lexicographically smallest
/// name, no school departures give "unknown".
pub fn after_school_destination(tally: &BTreeMap<String, u64>) -> String {
    // BTreeMap iterates in name order, so the first maximum wins ties
    let mut best: Option<(&String, u64)> = None;
    for (k, &n) in tally {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((k, n));
        }
    }
    best.map_or_else(|| UNKNOWN.to_string(), |(k, _)| k.clone())
}

pub fn after_school_destinations(visits: &[Visit], poi: &[PoiEntry], radius_m: f64, date_of: impl Fn(f64) -> Result<NaiveDate>) -> Result<String> {
    Ok(after_school_destination(&after_school_tally(visits, poi, radius_m, date_of)?))
}

/// Destination groups used when reporting after-school destinations
/// across users.
pub fn destination_group(category: &str) -> &str {
    match category {
        "sports" | "gym" | "park" => "athletics/sports/recreational",
        "fast_food" | "restaurant" => "fast-food/take-away/restaurant",
        "food_retailer" => "food retailer",
        other => other,
    }
}

/// `destination,users` CSV over users' after-school destinations.
pub fn write_destination_table<W: Write>(out: W, destinations: &[String]) -> Result<()> {
    let mut groups: BTreeMap<&str, u64> = BTreeMap::new();
    for d in destinations {
        *groups.entry(destination_group(d)).or_default() += 1;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["destination", "users"])?;
    for (g, n) in groups {
        w.write_record([g, &n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One monitored session of a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub date: NaiveDate,
    pub steps: u64,
    pub epoch_counts: Vec<u64>,
    pub epoch_s: f64,
    pub monitored_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub monitored_hours_per_day: f64,
    pub daily_steps: f64,
    pub avg_activity_counts_per_min: f64,
    pub weekly_visits: BTreeMap<String, f64>,
}

fn category_row(key: &str) -> String {
    let plural = match key {
        "cafe" => "cafes",
        "food_retailer" => "food retailers",
        "fast_food" => "fast-food outlets",
        "restaurant" => "restaurants",
        "park" => "parks",
        "gym" => "gyms",
        "school" => "school",
        "home" => "home",
        "sports" => "sports facilities",
        "other" => "other places",
        _ => "unknown places",
    };
    format!("Weekly visits to {plural}")
}

impl Profile {
    /// Aggregates sessions and visits. The result does not depend on the
    /// order sessions are given in.
    pub fn build(sessions: &[SessionSummary], visits: &[Visit], poi: &[PoiEntry], radius_m: f64, span_days: f64) -> Result<Self> {
        let mut sorted: Vec<&SessionSummary> = sessions.iter().collect();
        sorted.sort_by(|a, b| {
            a.date
                .cmp(&b.date)
                .then(a.steps.cmp(&b.steps))
                .then(a.monitored_s.total_cmp(&b.monitored_s))
                .then(a.epoch_counts.cmp(&b.epoch_counts))
        });
        let steps: Vec<(NaiveDate, u64)> = sorted.iter().map(|s| (s.date, s.steps)).collect();
        let daily = daily_steps(&steps)?;
        let n_days = steps.iter().map(|s| s.0).collect::<std::collections::BTreeSet<_>>().len() as f64;

        let (mut counts, mut minutes) = (0.0, 0.0);
        for s in &sorted {
            counts += s.epoch_counts.iter().sum::<u64>() as f64;
            minutes += s.epoch_counts.len() as f64 * s.epoch_s / 60.0;
        }
        let monitored: f64 = sorted.iter().map(|s| s.monitored_s).sum();
        Ok(Self {
            monitored_hours_per_day: monitored / 3600.0 / n_days,
            daily_steps: daily,
            avg_activity_counts_per_min: if minutes > 0.0 { counts / minutes } else { 0.0 },
            weekly_visits: weekly_place_visits(visits, poi, radius_m, span_days)?,
        })
    }

    /// Rows keyed by their report names, e.g. "Daily steps".
    pub fn rows(&self) -> BTreeMap<String, f64> {
        let mut rows = BTreeMap::new();
        rows.insert("Average hours of daily monitoring".to_string(), self.monitored_hours_per_day);
        rows.insert("Daily steps".to_string(), self.daily_steps);
        rows.insert("Daily average activity counts per minute".to_string(), self.avg_activity_counts_per_min);
        for (k, v) in &self.weekly_visits {
            rows.insert(category_row(k), *v);
        }
        rows
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows())?)
    }
}
