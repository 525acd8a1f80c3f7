//! Stay detection with a move-ability-weighted DBSCAN, and trips between stays.
//!
//! Density of fix `i` is its count of neighbours within `eps_m` (itself
//! included) scaled by `1 − moveability` of the fixes within
//! `±window_s / 2` of it, so dwelling scores high and transit scores low.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{haversine, haversine_m, AccelStream, LocationFix, LocationStream, DEFAULT_GAP_THRESHOLD_S, EARTH_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub eps_m: f64,
    pub min_density: f64,
    pub min_stay_s: f64,
    pub split_gap_s: f64,
    pub moveability_window_s: f64,
    /// Fixes implying a faster jump from the previous kept fix are dropped.
    pub max_speed_mps: f64,
    pub min_trip_speed_kmh: f64,
    pub accel_gap_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            eps_m: 30.0,
            min_density: 5.0,
            min_stay_s: 300.0,
            split_gap_s: 600.0,
            moveability_window_s: 600.0,
            max_speed_mps: 70.0,
            min_trip_speed_kmh: 0.5,
            accel_gap_s: DEFAULT_GAP_THRESHOLD_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub lat: f64,
    pub lon: f64,
    pub arrival_t: f64,
    pub departure_t: f64,
    /// Indices into the input `LocationStream`.
    pub member_indices: Vec<usize>,
}

impl Visit {
    pub fn duration_s(&self) -> f64 {
        self.departure_t - self.arrival_t
    }

    pub fn centroid(&self) -> LocationFix {
        LocationFix::point(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    /// Index of the visit the trip leaves.
    pub start_visit: usize,
    pub end_visit: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub path_m: f64,
    pub avg_speed_kmh: f64,
    pub valid: bool,
}

/// Displacement over path length; 0 for a zero-length path.
pub fn moveability(track: &[LocationFix]) -> Result<f64> {
    if track.len() < 2 {
        return Err(Error::param("track", "move-ability needs at least two fixes"));
    }
    let path: f64 = track.windows(2).map(|w| haversine(&w[0], &w[1])).sum();
    if path <= 0.0 {
        return Ok(0.0);
    }
    let disp = haversine(&track[0], &track[track.len() - 1]);
    Ok((disp / path).clamp(0.0, 1.0))
}

/// Removes fixes that imply more than `max_speed_mps` from the previous
/// kept fix. Returns the kept indices.
pub fn drop_outliers(fixes: &[LocationFix], max_speed_mps: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::with_capacity(fixes.len());
    for (i, f) in fixes.iter().enumerate() {
        if let Some(&prev) = kept.last() {
            let p = &fixes[prev];
            let dt = f.t - p.t;
            if dt > 0.0 && haversine(p, f) / dt > max_speed_mps {
                continue;
            }
        }
        kept.push(i);
    }
    kept
}

/// Uniform grid over lat/lon whose cells are at least `eps_m` wide
/// everywhere in the data, so all neighbours of a fix lie in the
/// surrounding 3×3 cells.
struct Grid {
    lat_cell: f64,
    lon_cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(fixes: &[LocationFix], eps_m: f64) -> Self {
        let max_abs_lat = fixes.iter().map(|f| f.lat.abs()).fold(0.0, f64::max).min(89.0);
        let margin = 1.1;
        let lat_cell = (eps_m / EARTH_RADIUS_M).to_degrees() * margin;
        let lon_cell = (eps_m / (EARTH_RADIUS_M * max_abs_lat.to_radians().cos())).to_degrees() * margin;
        let mut grid = Self {
            lat_cell,
            lon_cell,
            cells: HashMap::new(),
        };
        for (i, f) in fixes.iter().enumerate() {
            let key = grid.key(f);
            grid.cells.entry(key).or_default().push(i);
        }
        grid
    }

    fn key(&self, f: &LocationFix) -> (i64, i64) {
        ((f.lat / self.lat_cell).floor() as i64, (f.lon / self.lon_cell).floor() as i64)
    }

    /// Indices within `eps_m` of fix `i`, ascending, including `i`.
    fn neighbours(&self, fixes: &[LocationFix], i: usize, eps_m: f64) -> Vec<usize> {
        let (a, b) = self.key(&fixes[i]);
        let mut out = Vec::new();
        for da in -1..=1 {
            for db in -1..=1 {
                if let Some(cell) = self.cells.get(&(a + da, b + db)) {
                    out.extend(cell.iter().copied().filter(|&j| haversine(&fixes[i], &fixes[j]) <= eps_m));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Prefix sums of path length for O(1) windowed move-ability.
struct PathIndex {
    cum: Vec<f64>,
}

impl PathIndex {
    fn new(fixes: &[LocationFix]) -> Self {
        let mut cum = Vec::with_capacity(fixes.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in fixes.windows(2) {
            acc += haversine(&w[0], &w[1]);
            cum.push(acc);
        }
        Self { cum }
    }

    fn moveability(&self, fixes: &[LocationFix], lo: usize, hi: usize) -> f64 {
        let path = self.cum[hi] - self.cum[lo];
        if hi <= lo || path <= 0.0 {
            return 0.0;
        }
        (haversine(&fixes[lo], &fixes[hi]) / path).clamp(0.0, 1.0)
    }
}

/// Index range of fixes within `±window_s / 2` of fix `i`.
fn time_window(fixes: &[LocationFix], i: usize, window_s: f64) -> (usize, usize) {
    let half = window_s / 2.0;
    let t = fixes[i].t;
    let lo = fixes[..i].partition_point(|f| f.t < t - half);
    let hi = i + fixes[i..].partition_point(|f| f.t <= t + half) - 1;
    (lo, hi)
}

fn densities_with(fixes: &[LocationFix], grid: &Grid, eps_m: f64, window_s: f64) -> Vec<f64> {
    let paths = PathIndex::new(fixes);
    (0..fixes.len())
        .map(|i| {
            let count = grid.neighbours(fixes, i, eps_m).len() as f64;
            let (lo, hi) = time_window(fixes, i, window_s);
            count * (1.0 - paths.moveability(fixes, lo, hi))
        })
        .collect()
}

/// Density of every fix.
pub fn densities(fixes: &[LocationFix], eps_m: f64, window_s: f64) -> Vec<f64> {
    let grid = Grid::new(fixes, eps_m);
    densities_with(fixes, &grid, eps_m, window_s)
}

pub fn point_density(stream: &LocationStream, i: usize, eps_m: f64, window_s: f64) -> Result<f64> {
    let fixes = stream.fixes();
    if i >= fixes.len() {
        return Err(Error::param("i", format!("index {i} out of range for {} fixes", fixes.len())));
    }
    let count = fixes.iter().filter(|f| haversine(&fixes[i], f) <= eps_m).count() as f64;
    let (lo, hi) = time_window(fixes, i, window_s);
    let mv = if hi > lo { moveability(&fixes[lo..=hi])? } else { 0.0 };
    Ok(count * (1.0 - mv))
}

/// DBSCAN labels: cores have density ≥ `min_density`; clusters are seeded
/// from cores in index order and a border fix joins the first cluster that
/// reaches it.
pub fn dbscan_clusters(fixes: &[LocationFix], density: &[f64], eps_m: f64, min_density: f64) -> Vec<Option<usize>> {
    let grid = Grid::new(fixes, eps_m);
    dbscan_with(fixes, &grid, density, eps_m, min_density)
}

fn dbscan_with(fixes: &[LocationFix], grid: &Grid, density: &[f64], eps_m: f64, min_density: f64) -> Vec<Option<usize>> {
    let n = fixes.len();
    let is_core = |i: usize| density[i] >= min_density;
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if label[seed].is_some() || !is_core(seed) {
            continue;
        }
        let id = next;
        next += 1;
        label[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for q in grid.neighbours(fixes, p, eps_m) {
                if label[q].is_none() {
                    label[q] = Some(id);
                    if is_core(q) {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    label
}

fn make_visit(fixes: &[LocationFix], kept: &[usize], members: &[usize]) -> Visit {
    let n = members.len() as f64;
    let lat = members.iter().map(|&k| fixes[k].lat).sum::<f64>() / n;
    let lon = members.iter().map(|&k| fixes[k].lon).sum::<f64>() / n;
    Visit {
        lat,
        lon,
        arrival_t: fixes[members[0]].t,
        departure_t: fixes[members[members.len() - 1]].t,
        member_indices: members.iter().map(|&k| kept[k]).collect(),
    }
}

pub fn detect_visits(stream: &LocationStream, cfg: &MobilityConfig) -> Vec<Visit> {
    let kept = drop_outliers(stream.fixes(), cfg.max_speed_mps);
    let fixes: Vec<LocationFix> = kept.iter().map(|&i| stream.fixes()[i]).collect();
    if fixes.is_empty() {
        return Vec::new();
    }
    let grid = Grid::new(&fixes, cfg.eps_m);
    let density = densities_with(&fixes, &grid, cfg.eps_m, cfg.moveability_window_s);
    let labels = dbscan_with(&fixes, &grid, &density, cfg.eps_m, cfg.min_density);

    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (k, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            members[*c].push(k);
        }
    }

    // split each cluster into temporally contiguous runs
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for m in members {
        let mut run: Vec<usize> = Vec::new();
        for k in m {
            if let Some(&last) = run.last() {
                if fixes[k].t - fixes[last].t > cfg.split_gap_s {
                    runs.push(std::mem::take(&mut run));
                }
            }
            run.push(k);
        }
        if !run.is_empty() {
            runs.push(run);
        }
    }
    runs.retain(|r| fixes[r[r.len() - 1]].t - fixes[r[0]].t >= cfg.min_stay_s);
    runs.sort_by(|a, b| fixes[a[0]].t.total_cmp(&fixes[b[0]].t).then(a[0].cmp(&b[0])));

    // runs from different clusters that overlap in time become one visit
    let mut merged: Vec<Vec<usize>> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some(prev) if fixes[r[0]].t <= fixes[*prev.last().expect("non-empty")].t => {
                prev.extend(r);
                prev.sort_unstable();
            }
            _ => merged.push(r),
        }
    }
    merged.iter().map(|m| make_visit(&fixes, &kept, m)).collect()
}

/// Path length over the fixes whose timestamps lie in `[t0, t1]`.
pub fn path_length_m(stream: &LocationStream, t0: f64, t1: f64) -> f64 {
    let fixes = stream.fixes();
    let lo = fixes.partition_point(|f| f.t < t0);
    let hi = fixes.partition_point(|f| f.t <= t1);
    if hi <= lo + 1 {
        return 0.0;
    }
    fixes[lo..hi].windows(2).map(|w| haversine(&w[0], &w[1])).sum()
}

/// One trip per consecutive visit pair, from departure to next arrival.
pub fn segment_trips(visits: &[Visit], loc: &LocationStream, accel: &AccelStream, cfg: &MobilityConfig) -> Vec<Trip> {
    visits
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (t_start, t_end) = (pair[0].departure_t, pair[1].arrival_t);
            let path_m = path_length_m(loc, t_start, t_end);
            let dur = t_end - t_start;
            let avg_speed_kmh = if dur > 0.0 { path_m / dur * 3.6 } else { 0.0 };
            let valid = dur > 0.0
                && avg_speed_kmh >= cfg.min_trip_speed_kmh
                && accel.covers_without_gap(t_start, t_end, cfg.accel_gap_s);
            Trip {
                start_visit: k,
                end_visit: k + 1,
                t_start,
                t_end,
                path_m,
                avg_speed_kmh,
                valid,
            }
        })
        .collect()
}

pub fn write_visits_csv<W: Write>(out: W, visits: &[Visit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arrival_t", "departure_t", "lat", "lon", "n_points"])?;
    for v in visits {
        w.write_record([
            format!("{:.3}", v.arrival_t),
            format!("{:.3}", v.departure_t),
            format!("{:.7}", v.lat),
            format!("{:.7}", v.lon),
            v.member_indices.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trips_csv<W: Write>(out: W, trips: &[Trip]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_start", "t_end", "avg_speed_kmh", "valid"])?;
    for t in trips {
        w.write_record([
            format!("{:.3}", t.t_start),
            format!("{:.3}", t.t_end),
            format!("{:.4}", t.avg_speed_kmh),
            t.valid.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Distance in metres between a visit centroid and a point.
pub fn centroid_distance_m(v: &Visit, lat: f64, lon: f64) -> f64 {
    haversine_m(v.lat, v.lon, lat, lon)
}
