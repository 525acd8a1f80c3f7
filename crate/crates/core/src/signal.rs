//! Time-series primitives shared by every extractor.
//!
//! Accelerometer streams are reduced to an orientation-free magnitude,
//! put on a uniform grid, and cut into fixed windows. Location fixes carry
//! WGS84 coordinates and are compared by great-circle distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal sampling rate every accelerometer stream is resampled to.
pub const CANONICAL_RATE_HZ: f64 = 100.0;

/// Any inter-sample interval longer than this is a data gap.
pub const DEFAULT_GAP_THRESHOLD_S: f64 = 1.0;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl AccelSample {
    pub fn new(t: f64, ax: f64, ay: f64, az: f64) -> Self {
        Self { t, ax, ay, az }
    }

    pub fn magnitude(&self) -> Result<f64> {
        magnitude(self.ax, self.ay, self.az)
    }
}

/// Triaxial accelerometer samples from one device session.
///
/// Timestamps are seconds relative to the session start; the absolute
/// wall-clock start, when known, is kept once in `epoch_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelStream {
    samples: Vec<AccelSample>,
    nominal_rate_hz: f64,
    epoch_s: Option<f64>,
}

impl AccelStream {
    pub fn new(samples: Vec<AccelSample>, nominal_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyStream);
        }
        if !(nominal_rate_hz.is_finite() && nominal_rate_hz > 0.0) {
            return Err(Error::param("nominal_rate_hz", "must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.t >= 0.0) {
                return Err(Error::CorruptSample(format!(
                    "sample {i}: timestamp {} is not a finite non-negative value",
                    s.t
                )));
            }
            if !(s.ax.is_finite() && s.ay.is_finite() && s.az.is_finite()) {
                return Err(Error::CorruptSample(format!(
                    "sample {i}: non-finite acceleration"
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::CorruptSample(format!(
                    "sample {i}: timestamp {} not after {}",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self {
            samples,
            nominal_rate_hz,
            epoch_s: None,
        })
    }

    pub fn with_epoch(mut self, epoch_s: f64) -> Self {
        self.epoch_s = Some(epoch_s);
        self
    }

    pub fn samples(&self) -> &[AccelSample] {
        &self.samples
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn epoch_s(&self) -> Option<f64> {
        self.epoch_s
    }

    pub fn t_first(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_last(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Intervals between consecutive samples longer than `threshold_s`.
    pub fn gaps(&self, threshold_s: f64) -> Vec<Gap> {
        self.samples
            .windows(2)
            .filter(|w| w[1].t - w[0].t > threshold_s)
            .map(|w| Gap {
                start: w[0].t,
                end: w[1].t,
            })
            .collect()
    }

    /// True when `[t_start, t_end]` lies inside the stream and contains no gap.
    pub fn covers_without_gap(&self, t_start: f64, t_end: f64, threshold_s: f64) -> bool {
        if t_start < self.t_first() || t_end > self.t_last() {
            return false;
        }
        !self
            .gaps(threshold_s)
            .iter()
            .any(|g| g.overlaps(t_start, t_end))
    }

    /// Samples with `t` in `[t_start, t_end]`, session times unchanged.
    pub fn slice_time(&self, t_start: f64, t_end: f64) -> Result<AccelStream> {
        let kept: Vec<AccelSample> = self
            .samples
            .iter()
            .filter(|s| s.t >= t_start && s.t <= t_end)
            .copied()
            .collect();
        let mut out = AccelStream::new(kept, self.nominal_rate_hz)?;
        out.epoch_s = self.epoch_s;
        Ok(out)
    }
}

/// A half-open hole in the data, `(start, end)` in session seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub start: f64,
    pub end: f64,
}

impl Gap {
    /// True when the open gap interval intersects `[a, b]`.
    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        self.start < b && self.end > a
    }
}

/// Uniformly sampled acceleration magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSeries {
    t: Vec<f64>,
    m: Vec<f64>,
    rate_hz: f64,
    gaps: Vec<Gap>,
}

impl MagnitudeSeries {
    /// Builds a gap-free series starting at `t0` from uniformly spaced values.
    pub fn uniform(t0: f64, rate_hz: f64, m: Vec<f64>) -> Self {
        let t = (0..m.len()).map(|k| t0 + k as f64 / rate_hz).collect();
        Self {
            t,
            m,
            rate_hz,
            gaps: Vec::new(),
        }
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Duration as sample count over rate, the span windows are cut from.
    pub fn duration_s(&self) -> f64 {
        self.m.len() as f64 / self.rate_hz
    }

    pub fn values(&self, w: &Window) -> &[f64] {
        &self.m[w.start..w.start + w.len]
    }

    /// Same timestamps and gaps with replaced values.
    pub fn with_values(&self, m: Vec<f64>) -> Self {
        assert_eq!(m.len(), self.m.len(), "value count must match timestamps");
        Self {
            t: self.t.clone(),
            m,
            rate_hz: self.rate_hz,
            gaps: self.gaps.clone(),
        }
    }

    /// Shifts every timestamp by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            t: self.t.iter().map(|t| t + dt).collect(),
            m: self.m.clone(),
            rate_hz: self.rate_hz,
            gaps: self
                .gaps
                .iter()
                .map(|g| Gap {
                    start: g.start + dt,
                    end: g.end + dt,
                })
                .collect(),
        }
    }
}

/// A fixed-length run of samples inside a [`MagnitudeSeries`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl Window {
    pub fn center(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationFix {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    pub speed_mps: Option<f64>,
}

impl LocationFix {
    pub fn new(t: f64, lat: f64, lon: f64, speed_mps: Option<f64>) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::Invalid(format!("timestamp {t} is not finite")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Invalid("latitude out of range".into()));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Invalid("longitude out of range".into()));
        }
        Ok(Self {
            t,
            lat,
            lon,
            speed_mps,
        })
    }

    /// A fix used only as a coordinate (time zero, no speed).
    pub fn point(lat: f64, lon: f64) -> Self {
        Self {
            t: 0.0,
            lat,
            lon,
            speed_mps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocationStream {
    fixes: Vec<LocationFix>,
}

impl LocationStream {
    pub fn new(fixes: Vec<LocationFix>) -> Result<Self> {
        for (i, w) in fixes.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::Invalid(format!(
                    "fix {}: timestamp {} not after {}",
                    i + 1,
                    w[1].t,
                    w[0].t
                )));
            }
        }
        Ok(Self { fixes })
    }

    pub fn fixes(&self) -> &[LocationFix] {
        &self.fixes
    }

    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry<L> {
    pub t_start: f64,
    pub t_end: f64,
    pub label: L,
}

impl<L> TimelineEntry<L> {
    pub fn center(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

/// Ordered, non-overlapping labelled intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTimeline<L> {
    entries: Vec<TimelineEntry<L>>,
}

impl<L> Default for LabelTimeline<L> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<L> LabelTimeline<L> {
    pub fn new(entries: Vec<TimelineEntry<L>>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.t_end > e.t_start) {
                return Err(Error::Invalid(format!(
                    "timeline entry {i}: end {} not after start {}",
                    e.t_end, e.t_start
                )));
            }
            if i > 0 && e.t_start < entries[i - 1].t_end {
                return Err(Error::Invalid(format!(
                    "timeline entry {i} overlaps its predecessor"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TimelineEntry<L>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &L> {
        self.entries.iter().map(|e| &e.label)
    }

    /// Label of the entry containing `t` (closed intervals).
    pub fn label_at(&self, t: f64) -> Option<&L> {
        let idx = self.entries.partition_point(|e| e.t_end < t);
        self.entries
            .get(idx)
            .filter(|e| e.t_start <= t && t <= e.t_end)
            .map(|e| &e.label)
    }

    pub fn map<M>(&self, mut f: impl FnMut(&L) -> M) -> LabelTimeline<M> {
        LabelTimeline {
            entries: self
                .entries
                .iter()
                .map(|e| TimelineEntry {
                    t_start: e.t_start,
                    t_end: e.t_end,
                    label: f(&e.label),
                })
                .collect(),
        }
    }

    pub fn into_entries(self) -> Vec<TimelineEntry<L>> {
        self.entries
    }
}

impl<L: PartialEq + Clone> LabelTimeline<L> {
    /// Collapses per-sample labels into runs. `None` marks unlabelled samples.
    /// A run spans its first to last sample time; single-sample runs vanish.
    pub fn from_sample_labels(times: &[f64], labels: &[Option<L>]) -> Self {
        debug_assert_eq!(times.len(), labels.len());
        let mut entries = Vec::new();
        let mut i = 0;
        while i < labels.len() {
            let Some(label) = &labels[i] else {
                i += 1;
                continue;
            };
            let mut j = i;
            while j + 1 < labels.len() && labels[j + 1].as_ref() == Some(label) {
                j += 1;
            }
            if times[j] > times[i] {
                entries.push(TimelineEntry {
                    t_start: times[i],
                    t_end: times[j],
                    label: label.clone(),
                });
            }
            i = j + 1;
        }
        Self { entries }
    }
}

/// Euclidean norm of a triaxial acceleration.
pub fn magnitude(ax: f64, ay: f64, az: f64) -> Result<f64> {
    if !(ax.is_finite() && ay.is_finite() && az.is_finite()) {
        return Err(Error::CorruptSample(format!(
            "non-finite acceleration ({ax}, {ay}, {az})"
        )));
    }
    Ok((ax * ax + ay * ay + az * az).sqrt())
}

pub fn resample(stream: &AccelStream, target_hz: f64) -> Result<MagnitudeSeries> {
    resample_with_gap(stream, target_hz, DEFAULT_GAP_THRESHOLD_S)
}

/// Magnitude per sample, linearly interpolated onto a uniform grid over
/// `[t_first, t_last]`. Grid points inside a gap hold the last value before
/// the gap and the gap is recorded on the series.
pub fn resample_with_gap(
    stream: &AccelStream,
    target_hz: f64,
    gap_threshold_s: f64,
) -> Result<MagnitudeSeries> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(Error::param("target_hz", "must be positive"));
    }
    let src_t: Vec<f64> = stream.samples().iter().map(|s| s.t).collect();
    let src_m = stream
        .samples()
        .iter()
        .map(AccelSample::magnitude)
        .collect::<Result<Vec<_>>>()?;

    let t0 = src_t[0];
    let span = src_t[src_t.len() - 1] - t0;
    let n = (span * target_hz + 1e-9).floor() as usize + 1;

    let mut t = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let tg = t0 + k as f64 / target_hz;
        while seg + 1 < src_t.len() && src_t[seg + 1] <= tg {
            seg += 1;
        }
        let value = if seg + 1 >= src_t.len() {
            src_m[src_m.len() - 1]
        } else {
            let (ta, tb) = (src_t[seg], src_t[seg + 1]);
            if tb - ta > gap_threshold_s {
                src_m[seg]
            } else {
                let frac = (tg - ta) / (tb - ta);
                src_m[seg] + frac * (src_m[seg + 1] - src_m[seg])
            }
        };
        t.push(tg);
        m.push(value);
    }

    Ok(MagnitudeSeries {
        t,
        m,
        rate_hz: target_hz,
        gaps: stream.gaps(gap_threshold_s),
    })
}

/// Overlapping fixed-length windows. Partial trailing windows and windows
/// touching a gap are dropped; a series shorter than one window yields none.
pub fn sliding_windows(series: &MagnitudeSeries, length_s: f64, step_s: f64) -> Result<Vec<Window>> {
    if !(step_s > 0.0 && step_s.is_finite()) {
        return Err(Error::param("step_s", "must be positive"));
    }
    if !(length_s >= step_s && length_s.is_finite()) {
        return Err(Error::param("length_s", "must be at least step_s"));
    }
    let rate = series.rate_hz();
    let win_n = (length_s * rate).round() as usize;
    let step_n = ((step_s * rate).round() as usize).max(1);
    let n = series.len();
    if win_n == 0 || n < win_n {
        return Ok(Vec::new());
    }
    let period = 1.0 / rate;
    let count = (n - win_n) / step_n + 1;
    let windows = (0..count)
        .map(|j| {
            let start = j * step_n;
            let t_start = series.t()[start];
            Window {
                start,
                len: win_n,
                t_start,
                t_end: t_start + win_n as f64 * period,
            }
        })
        .filter(|w| {
            let last = series.t()[w.start + w.len - 1];
            !series.gaps().iter().any(|g| g.overlaps(w.t_start, last))
        })
        .collect();
    Ok(windows)
}

/// Replaces every label with the most frequent label among entries whose
/// centres lie within `±window_s / 2` of its own centre. A tie that includes
/// the entry's own label keeps it; other ties go to the label seen first.
pub fn majority_vote<L: Clone + PartialEq>(
    timeline: &LabelTimeline<L>,
    window_s: f64,
) -> Result<LabelTimeline<L>> {
    if !(window_s > 0.0) {
        return Err(Error::param("window_s", "must be positive"));
    }
    let entries = timeline.entries();
    let centers: Vec<f64> = entries.iter().map(TimelineEntry::center).collect();
    let half = window_s / 2.0;
    let mut lo = 0;
    let mut hi = 0;
    let mut out = Vec::with_capacity(entries.len());
    let mut tally: Vec<(&L, usize)> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let c = centers[i];
        while centers[lo] < c - half {
            lo += 1;
        }
        while hi < entries.len() && centers[hi] <= c + half {
            hi += 1;
        }
        tally.clear();
        for other in &entries[lo..hi] {
            match tally.iter_mut().find(|(l, _)| **l == other.label) {
                Some(slot) => slot.1 += 1,
                None => tally.push((&other.label, 1)),
            }
        }
        let best = tally.iter().map(|(_, n)| *n).max().unwrap_or(0);
        let own = tally
            .iter()
            .find(|(l, _)| **l == e.label)
            .map_or(0, |(_, n)| *n);
        let label = if own == best {
            e.label.clone()
        } else {
            tally
                .iter()
                .find(|(_, n)| *n == best)
                .map(|(l, _)| (*l).clone())
                .unwrap_or_else(|| e.label.clone())
        };
        out.push(TimelineEntry {
            t_start: e.t_start,
            t_end: e.t_end,
            label,
        });
    }
    Ok(LabelTimeline { entries: out })
}

/// Great-circle distance in metres on a sphere of radius 6,371 km.
pub fn haversine(p1: &LocationFix, p2: &LocationFix) -> f64 {
    haversine_m(p1.lat, p1.lon, p2.lat, p2.lon)
}

pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream_from(points: &[(f64, f64)]) -> AccelStream {
        AccelStream::new(
            points
                .iter()
                .map(|&(t, m)| AccelSample::new(t, 0.0, 0.0, m))
                .collect(),
            100.0,
        )
        .unwrap()
    }

    fn timeline(labels: &[&'static str]) -> LabelTimeline<&'static str> {
        LabelTimeline::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| TimelineEntry {
                    t_start: i as f64,
                    t_end: i as f64 + 1.0,
                    label: *l,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(0.0, 0.0, 9.81).unwrap(), 9.81);
        assert_eq!(magnitude(3.0, 4.0, 0.0).unwrap(), 5.0);
        assert_eq!(magnitude(1.0, 2.0, 2.0).unwrap(), 3.0);
        assert!(matches!(
            magnitude(f64::NAN, 0.0, 0.0),
            Err(Error::CorruptSample(_))
        ));
        assert!(magnitude(0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn resample_interpolates_linearly() {
        let s = stream_from(&[(0.0, 1.0), (1.0, 3.0)]);
        let r = resample(&s, 4.0).unwrap();
        assert_eq!(r.m(), &[1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(r.t(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(r.gaps().is_empty());
    }

    #[test]
    fn resample_constant_stream() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.02, 9.81)).collect();
        let r = resample(&stream_from(&pts), 100.0).unwrap();
        assert_eq!(r.len(), 99);
        assert!(r.m().iter().all(|&m| (m - 9.81).abs() < 1e-12));
    }

    #[test]
    fn resample_flags_hole() {
        let mut pts: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64 * 0.01, 9.0)).collect();
        pts.extend((0..=100).map(|i| (6.0 + i as f64 * 0.01, 11.0)));
        let r = resample(&stream_from(&pts), 100.0).unwrap();
        assert_eq!(r.gaps().len(), 1);
        let g = r.gaps()[0];
        assert!((g.start - 1.0).abs() < 1e-9 && (g.end - 6.0).abs() < 1e-9);
        // values inside the hole are held, not interpolated
        let mid = r.t().iter().position(|&t| t >= 3.5).unwrap();
        assert_eq!(r.m()[mid], 9.0);
    }

    #[test]
    fn resample_rejects_bad_rate() {
        let s = stream_from(&[(0.0, 1.0), (1.0, 1.0)]);
        assert!(resample(&s, 0.0).is_err());
        assert!(resample(&s, -3.0).is_err());
        assert!(matches!(AccelStream::new(vec![], 100.0), Err(Error::EmptyStream)));
    }

    #[test]
    fn window_counts() {
        let ten = MagnitudeSeries::uniform(0.0, 100.0, vec![1.0; 1000]);
        let w = sliding_windows(&ten, 5.0, 1.0).unwrap();
        assert_eq!(w.len(), 6);
        let starts: Vec<f64> = w.iter().map(|w| w.t_start).collect();
        for (k, s) in starts.iter().enumerate() {
            assert!((s - k as f64).abs() < 1e-9);
        }
        let sixty = MagnitudeSeries::uniform(0.0, 100.0, vec![1.0; 6000]);
        assert_eq!(sliding_windows(&sixty, 60.0, 10.0).unwrap().len(), 1);
        let four = MagnitudeSeries::uniform(0.0, 100.0, vec![1.0; 400]);
        assert!(sliding_windows(&four, 5.0, 1.0).unwrap().is_empty());
        assert!(sliding_windows(&four, 1.0, 2.0).is_err());
    }

    #[test]
    fn windows_skip_gaps() {
        let mut pts: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64 * 0.01, 9.0)).collect();
        pts.extend((0..1000).map(|i| (15.0 + i as f64 * 0.01, 9.0)));
        let r = resample(&stream_from(&pts), 100.0).unwrap();
        let w = sliding_windows(&r, 5.0, 1.0).unwrap();
        assert!(w
            .iter()
            .all(|w| w.t_end <= 10.0 + 1e-9 || w.t_start >= 15.0 - 1e-9));
        assert_eq!(w.len(), 6 + 6);
    }

    #[test]
    fn vote_examples() {
        let out = majority_vote(&timeline(&["A", "A", "B", "A", "A"]), 10.0).unwrap();
        assert!(out.labels().all(|l| *l == "A"));
        let all_b = timeline(&["B"; 6]);
        assert_eq!(majority_vote(&all_b, 3.0).unwrap(), all_b);
        let tie = timeline(&["A", "B"]);
        assert_eq!(majority_vote(&tie, 10.0).unwrap(), tie);
        let empty: LabelTimeline<&str> = LabelTimeline::default();
        assert!(majority_vote(&empty, 60.0).unwrap().is_empty());
    }

    #[test]
    fn haversine_examples() {
        let a = LocationFix::point(0.0, 0.0);
        let b = LocationFix::point(1.0, 0.0);
        assert_eq!(haversine(&a, &a), 0.0);
        // R * pi / 180
        assert!((haversine(&a, &b) - 111_194.93).abs() < 1.0);
        assert!(LocationFix::new(0.0, 95.0, 0.0, None).is_err());
    }

    #[test]
    fn label_runs_from_samples() {
        let times: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let labels = vec![
            None,
            Some(1),
            Some(1),
            Some(2),
            Some(2),
            Some(2),
            None,
            Some(3),
        ];
        let tl = LabelTimeline::from_sample_labels(&times, &labels);
        assert_eq!(tl.len(), 2);
        assert_eq!(tl.label_at(1.5), Some(&1));
        assert_eq!(tl.label_at(4.0), Some(&2));
        assert_eq!(tl.label_at(6.0), None);
    }

    proptest! {
        #[test]
        fn magnitude_rotation_invariant(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, az in -50.0f64..50.0,
            yaw in 0.0f64..6.3, pitch in 0.0f64..6.3,
        ) {
            let m = magnitude(ax, ay, az).unwrap();
            let (x1, y1) = (ax * yaw.cos() - ay * yaw.sin(), ax * yaw.sin() + ay * yaw.cos());
            let (y2, z2) = (y1 * pitch.cos() - az * pitch.sin(), y1 * pitch.sin() + az * pitch.cos());
            let r = magnitude(x1, y2, z2).unwrap();
            prop_assert!((m - r).abs() <= 1e-9 * m.max(1e-12));
        }

        #[test]
        fn resample_idempotent_on_uniform(values in prop::collection::vec(0.0f64..30.0, 2..300)) {
            let s = AccelStream::new(
                values.iter().enumerate()
                    .map(|(i, &v)| AccelSample::new(i as f64 / 100.0, 0.0, 0.0, v))
                    .collect(),
                100.0,
            ).unwrap();
            let r = resample(&s, 100.0).unwrap();
            prop_assert_eq!(r.len(), values.len());
            for (a, b) in r.m().iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn window_count_formula(n in 1usize..3000, length in 1u32..20, step in 1u32..5) {
            let (length, step) = (length as f64, step as f64);
            prop_assume!(length >= step);
            let s = MagnitudeSeries::uniform(0.0, 100.0, vec![1.0; n]);
            let w = sliding_windows(&s, length, step).unwrap();
            let duration = n as f64 / 100.0;
            let expected = if duration < length { 0 } else { ((duration - length) / step + 1e-9).floor() as usize + 1 };
            prop_assert_eq!(w.len(), expected);
        }

        #[test]
        fn vote_never_invents_labels(labels in prop::collection::vec(0u8..4, 1..80), window in 1.0f64..40.0) {
            let tl = LabelTimeline::new(labels.iter().enumerate().map(|(i, &l)| TimelineEntry {
                t_start: i as f64, t_end: i as f64 + 1.0, label: l,
            }).collect()).unwrap();
            let out = majority_vote(&tl, window).unwrap();
            prop_assert_eq!(out.len(), tl.len());
            for l in out.labels() {
                prop_assert!(labels.contains(l));
            }
        }

        #[test]
        fn haversine_symmetric_and_triangle(
            la in -89.0f64..89.0, lo in -179.0f64..179.0,
            lb in -89.0f64..89.0, lob in -179.0f64..179.0,
            lc in -89.0f64..89.0, loc in -179.0f64..179.0,
        ) {
            let (a, b, c) = (LocationFix::point(la, lo), LocationFix::point(lb, lob), LocationFix::point(lc, loc));
            prop_assert_eq!(haversine(&a, &b), haversine(&b, &a));
            let ac = haversine(&a, &c);
            prop_assert!(ac <= (haversine(&a, &b) + haversine(&b, &c)) * (1.0 + 1e-6) + 1e-6);
        }
    }
}
