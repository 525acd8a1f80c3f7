//! Loaders for the generic CSV contracts, PAMAP2 and SHL slices, and the
//! offline point-of-interest table.
//!
//! PAMAP2 `.dat` layout (space separated, 54 columns, 0-based):
//! column 0 timestamp (s), column 1 activity ID, column 2 heart rate,
//! then three 17-column IMU blocks starting at 3 (hand), 20 (chest) and
//! 37 (ankle). Within a block, offsets 1..=3 hold the ±16 g accelerometer
//! in m/s², which is the signal read here.
//!
//! SHL slice directory: `<Position>_Motion.txt` (column 0 time in ms,
//! columns 1..=3 accelerometer in m/s²), `Label.txt` (column 0 time in ms,
//! column 1 coarse mode 0..=8) and `<Position>_Location.txt` (column 0 time
//! in ms, columns 4 and 5 latitude and longitude). Files without the
//! position prefix are accepted as well.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityLabel, ShlMode, TransportLabel};
use crate::mobility::Visit;
use crate::signal::{haversine, AccelSample, AccelStream, LabelTimeline, LocationFix, LocationStream, TimelineEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledAccelStream<L> {
    pub stream: AccelStream,
    pub labels: LabelTimeline<L>,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("{field}: `{raw}` is not a number")))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

/// Median sampling rate implied by the timestamps; 1 Hz for a single sample.
fn estimate_rate(times: &[f64]) -> f64 {
    let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if dts.is_empty() {
        return 1.0;
    }
    dts.sort_by(f64::total_cmp);
    1.0 / dts[dts.len() / 2]
}

/// Reads the accelerometer CSV contract: header `t,ax,ay,az`.
pub fn load_accel_csv(path: impl AsRef<Path>) -> Result<AccelStream> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    check_header(path, rdr.headers()?, &["t", "ax", "ay", "az"])?;
    let mut samples: Vec<AccelSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(parse_err(path, line, format!("expected 4 columns, found {}", rec.len())));
        }
        let s = AccelSample::new(
            parse_f64(path, line, "t", &rec[0])?,
            parse_f64(path, line, "ax", &rec[1])?,
            parse_f64(path, line, "ay", &rec[2])?,
            parse_f64(path, line, "az", &rec[3])?,
        );
        if !(s.t.is_finite() && s.ax.is_finite() && s.ay.is_finite() && s.az.is_finite()) {
            return Err(parse_err(path, line, "non-finite value"));
        }
        if let Some(prev) = samples.last() {
            if s.t <= prev.t {
                return Err(parse_err(
                    path,
                    line,
                    format!("non-monotonic time: {} after {}", s.t, prev.t),
                ));
            }
        }
        samples.push(s);
    }
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    AccelStream::new(samples, estimate_rate(&times))
}

/// Writes the accelerometer CSV contract with six fractional digits.
pub fn write_accel_csv(stream: &AccelStream, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "t,ax,ay,az")?;
    for s in stream.samples() {
        writeln!(out, "{:.6},{:.6},{:.6},{:.6}", s.t, s.ax, s.ay, s.az)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the location CSV contract: header `t,lat,lon,speed` or `t,lat,lon`.
pub fn load_location_csv(path: impl AsRef<Path>) -> Result<LocationStream> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    let has_speed = header.len() == 4;
    if has_speed {
        check_header(path, &header, &["t", "lat", "lon", "speed"])?;
    } else {
        check_header(path, &header, &["t", "lat", "lon"])?;
    }
    let width = header.len();
    let mut fixes: Vec<LocationFix> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let t = parse_f64(path, line, "t", &rec[0])?;
        let lat = parse_f64(path, line, "lat", &rec[1])?;
        let lon = parse_f64(path, line, "lon", &rec[2])?;
        let speed = if has_speed && !rec[3].is_empty() {
            Some(parse_f64(path, line, "speed", &rec[3])?)
        } else {
            None
        };
        let fix = LocationFix::new(t, lat, lon, speed).map_err(|e| parse_err(path, line, e.to_string()))?;
        if let Some(prev) = fixes.last() {
            if fix.t <= prev.t {
                return Err(parse_err(
                    path,
                    line,
                    format!("non-monotonic time: {} after {}", fix.t, prev.t),
                ));
            }
        }
        fixes.push(fix);
    }
    LocationStream::new(fixes)
}

pub fn write_location_csv(stream: &LocationStream, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "t,lat,lon,speed")?;
    for f in stream.fixes() {
        match f.speed_mps {
            Some(v) => writeln!(out, "{:.3},{:.7},{:.7},{:.3}", f.t, f.lat, f.lon, v)?,
            None => writeln!(out, "{:.3},{:.7},{:.7},", f.t, f.lat, f.lon)?,
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImuPosition {
    Hand,
    #[default]
    Chest,
    Ankle,
}

impl ImuPosition {
    /// Column of the x-axis ±16 g accelerometer.
    fn accel_column(self) -> usize {
        match self {
            Self::Hand => 4,
            Self::Chest => 21,
            Self::Ankle => 38,
        }
    }
}

impl FromStr for ImuPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hand" => Ok(Self::Hand),
            "chest" => Ok(Self::Chest),
            "ankle" => Ok(Self::Ankle),
            other => Err(Error::Invalid(format!("unknown IMU position `{other}`"))),
        }
    }
}

const PAMAP2_COLUMNS: usize = 54;
const PAMAP2_RATE_HZ: f64 = 100.0;

/// Loads one PAMAP2 subject file. Rows whose chosen accelerometer reads
/// NaN are skipped; transient and optional-activity rows stay in the
/// stream but carry no label.
pub fn load_pamap2(path: impl AsRef<Path>, imu: ImuPosition) -> Result<LabeledAccelStream<ActivityLabel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let col = imu.accel_column();
    let mut raw: Vec<(f64, [f64; 3], Option<ActivityLabel>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < PAMAP2_COLUMNS {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {PAMAP2_COLUMNS} columns, found {}", fields.len()),
            ));
        }
        let ts = parse_f64(path, line_no, "timestamp", fields[0])?;
        let id = parse_f64(path, line_no, "activityID", fields[1])?;
        if !(id >= 0.0 && id.fract() == 0.0) {
            return Err(parse_err(path, line_no, format!("bad activity ID {id}")));
        }
        let label = ActivityLabel::from_pamap2_id(id as u32).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let acc = [
            parse_f64(path, line_no, "ax", fields[col])?,
            parse_f64(path, line_no, "ay", fields[col + 1])?,
            parse_f64(path, line_no, "az", fields[col + 2])?,
        ];
        if acc.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if let Some(prev) = raw.last() {
            if ts <= prev.0 {
                return Err(parse_err(path, line_no, format!("non-monotonic time: {ts} after {}", prev.0)));
            }
        }
        raw.push((ts, acc, label));
    }
    if raw.is_empty() {
        return Err(Error::EmptyStream);
    }
    let t0 = raw[0].0;
    let times: Vec<f64> = raw.iter().map(|r| r.0 - t0).collect();
    let samples = raw
        .iter()
        .zip(&times)
        .map(|(r, &t)| AccelSample::new(t, r.1[0], r.1[1], r.1[2]))
        .collect();
    let labels: Vec<Option<ActivityLabel>> = raw.iter().map(|r| r.2).collect();
    Ok(LabeledAccelStream {
        stream: AccelStream::new(samples, PAMAP2_RATE_HZ)?.with_epoch(t0),
        labels: LabelTimeline::from_sample_labels(&times, &labels),
    })
}

/// Default SHL phone position.
pub const SHL_DEFAULT_POSITION: &str = "Hand";

#[derive(Debug, Clone)]
pub struct ShlSlice {
    pub accel: AccelStream,
    pub location: LocationStream,
    pub labels: LabelTimeline<ShlMode>,
}

impl ShlSlice {
    /// Motion stream labelled with transport classes; still and
    /// unlabelled spans are left without a label.
    pub fn transport_stream(&self) -> Result<LabeledAccelStream<TransportLabel>> {
        let entries = self
            .labels
            .entries()
            .iter()
            .filter_map(|e| {
                e.label.transport().map(|label| TimelineEntry {
                    t_start: e.t_start,
                    t_end: e.t_end,
                    label,
                })
            })
            .collect();
        Ok(LabeledAccelStream {
            stream: self.accel.clone(),
            labels: LabelTimeline::new(entries)?,
        })
    }
}

fn find_shl_file(dir: &Path, position: &str, kind: &str) -> Option<PathBuf> {
    [format!("{position}_{kind}.txt"), format!("{kind}.txt")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

fn shl_rows(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let values = line
            .split_whitespace()
            .map(|f| parse_f64(path, line_no, "value", f))
            .collect::<Result<Vec<_>>>()?;
        rows.push((line_no, values));
    }
    Ok(rows)
}

pub fn load_shl_slice(dir: impl AsRef<Path>) -> Result<ShlSlice> {
    load_shl_slice_at(dir, SHL_DEFAULT_POSITION)
}

/// Loads motion, location and labels onto a common session clock whose
/// zero is the first motion sample.
pub fn load_shl_slice_at(dir: impl AsRef<Path>, position: &str) -> Result<ShlSlice> {
    let dir = dir.as_ref();
    let missing = |kind: &str| Error::Data {
        path: dir.to_path_buf(),
        message: format!("no {kind} file found"),
    };
    let motion_path = find_shl_file(dir, position, "Motion").ok_or_else(|| missing("Motion"))?;
    let label_path = find_shl_file(dir, position, "Label").ok_or_else(|| missing("Label"))?;
    let location_path = find_shl_file(dir, position, "Location").ok_or_else(|| missing("Location"))?;

    let mut motion: Vec<(f64, [f64; 3])> = Vec::new();
    for (line, row) in shl_rows(&motion_path)? {
        if row.len() < 4 {
            return Err(parse_err(&motion_path, line, "expected at least 4 columns"));
        }
        let acc = [row[1], row[2], row[3]];
        if !row[0].is_finite() || acc.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if motion.last().is_some_and(|p| row[0] <= p.0) {
            return Err(parse_err(&motion_path, line, "non-monotonic time"));
        }
        motion.push((row[0], acc));
    }
    if motion.is_empty() {
        return Err(Error::EmptyStream);
    }
    let t0_ms = motion[0].0;
    let to_s = |ms: f64| (ms - t0_ms) / 1000.0;
    let samples: Vec<AccelSample> = motion
        .iter()
        .map(|(ms, a)| AccelSample::new(to_s(*ms), a[0], a[1], a[2]))
        .collect();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let accel = AccelStream::new(samples, estimate_rate(&times))?.with_epoch(t0_ms / 1000.0);

    let mut label_times = Vec::new();
    let mut label_values = Vec::new();
    for (line, row) in shl_rows(&label_path)? {
        if row.len() < 2 {
            return Err(parse_err(&label_path, line, "expected at least 2 columns"));
        }
        let t = to_s(row[0]);
        if label_times.last().is_some_and(|&p| t <= p) {
            continue;
        }
        let code = row[1];
        if !(code >= 0.0 && code.fract() == 0.0) {
            return Err(parse_err(&label_path, line, format!("bad coarse label {code}")));
        }
        let mode = ShlMode::from_code(code as u32).map_err(|e| parse_err(&label_path, line, e.to_string()))?;
        label_times.push(t);
        label_values.push(mode);
    }
    if label_times.is_empty() {
        return Err(Error::Data {
            path: label_path,
            message: "no labels".into(),
        });
    }
    let start_diff = (label_times[0] - accel.t_first()).abs();
    let end_diff = (label_times[label_times.len() - 1] - accel.t_last()).abs();
    if start_diff > 1.0 || end_diff > 1.0 {
        return Err(Error::Data {
            path: dir.to_path_buf(),
            message: format!(
                "label and motion spans differ by {:.3} s at start and {:.3} s at end",
                start_diff, end_diff
            ),
        });
    }
    let labels = LabelTimeline::from_sample_labels(&label_times, &label_values);

    let mut fixes: Vec<LocationFix> = Vec::new();
    for (line, row) in shl_rows(&location_path)? {
        if row.len() < 6 {
            return Err(parse_err(&location_path, line, "expected at least 6 columns"));
        }
        let t = to_s(row[0]);
        if fixes.last().is_some_and(|p| t <= p.t) {
            continue;
        }
        let fix = LocationFix::new(t, row[4], row[5], None).map_err(|e| parse_err(&location_path, line, e.to_string()))?;
        fixes.push(fix);
    }

    Ok(ShlSlice {
        accel,
        location: LocationStream::new(fixes)?,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiCategory {
    Cafe,
    FoodRetailer,
    FastFood,
    Restaurant,
    Park,
    Gym,
    School,
    Home,
    Sports,
    Other,
}

impl PoiCategory {
    pub const ALL: [PoiCategory; 10] = [
        Self::Cafe,
        Self::FoodRetailer,
        Self::FastFood,
        Self::Restaurant,
        Self::Park,
        Self::Gym,
        Self::School,
        Self::Home,
        Self::Sports,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cafe => "cafe",
            Self::FoodRetailer => "food_retailer",
            Self::FastFood => "fast_food",
            Self::Restaurant => "restaurant",
            Self::Park => "park",
            Self::Gym => "gym",
            Self::School => "school",
            Self::Home => "home",
            Self::Sports => "sports",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for PoiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoiCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown POI category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoiEntry {
    pub lat: f64,
    pub lon: f64,
    pub category: PoiCategory,
}

/// Reads the POI CSV contract: header `lat,lon,category`.
pub fn load_poi_table(path: impl AsRef<Path>) -> Result<Vec<PoiEntry>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    check_header(path, rdr.headers()?, &["lat", "lon", "category"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 columns, found {}", rec.len())));
        }
        let lat = parse_f64(path, line, "lat", &rec[0])?;
        let lon = parse_f64(path, line, "lon", &rec[1])?;
        LocationFix::new(0.0, lat, lon, None).map_err(|e| parse_err(path, line, e.to_string()))?;
        let category = rec[2]
            .parse::<PoiCategory>()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(PoiEntry { lat, lon, category });
    }
    Ok(out)
}

/// Closest entry within `radius_m`; the first one listed wins exact ties.
pub fn nearest_poi<'a>(table: &'a [PoiEntry], point: &LocationFix, radius_m: f64) -> Option<&'a PoiEntry> {
    table
        .iter()
        .map(|e| (e, haversine(point, &LocationFix::point(e.lat, e.lon))))
        .filter(|(_, d)| *d <= radius_m)
        .fold(None, |best: Option<(&PoiEntry, f64)>, (e, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((e, d)),
        })
        .map(|(e, _)| e)
}

fn column(path: &Path, header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))
}

/// Reads visits written by `write_visits_csv`; only `arrival_t`,
/// `departure_t`, `lat` and `lon` are required.
pub fn load_visits_csv(path: impl AsRef<Path>) -> Result<Vec<Visit>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    let (ca, cd) = (column(path, &header, "arrival_t")?, column(path, &header, "departure_t")?);
    let (clat, clon) = (column(path, &header, "lat")?, column(path, &header, "lon")?);
    let mut visits = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |c: usize, name: &str| parse_f64(path, line, name, rec.get(c).unwrap_or(""));
        let (lat, lon) = (get(clat, "lat")?, get(clon, "lon")?);
        LocationFix::new(0.0, lat, lon, None).map_err(|e| parse_err(path, line, e.to_string()))?;
        visits.push(Visit {
            lat,
            lon,
            arrival_t: get(ca, "arrival_t")?,
            departure_t: get(cd, "departure_t")?,
            member_indices: Vec::new(),
        });
    }
    Ok(visits)
}

/// Reads a `t_start,t_end,label` timeline.
pub fn load_timeline_csv<L: FromStr<Err = Error>>(path: impl AsRef<Path>) -> Result<LabelTimeline<L>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    check_header(path, rdr.headers()?, &["t_start", "t_end", "label"])?;
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 columns, found {}", rec.len())));
        }
        entries.push(TimelineEntry {
            t_start: parse_f64(path, line, "t_start", &rec[0])?,
            t_end: parse_f64(path, line, "t_end", &rec[1])?,
            label: rec[2].parse().map_err(|e: Error| parse_err(path, line, e.to_string()))?,
        });
    }
    LabelTimeline::new(entries).map_err(|e| parse_err(path, 0, e.to_string()))
}
