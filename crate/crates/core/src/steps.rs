//! Step counting for phone and watch placements.
//!
//! Phone: local maxima of the smoothed magnitude, filtered for periodicity
//! (1 to 3 Hz), per-foot similarity, and continuity (runs of at least 8).
//! Watch: a delayed low-pass replica of the magnitude arms segments; each
//! armed segment long enough counts one step.
//!
//! All interval arithmetic uses sample indices, so results are exactly
//! invariant to shifting the series in time.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::Biquad;
use crate::signal::MagnitudeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhoneStepConfig {
    pub smoothing_hz: f64,
    pub prominence: f64,
    pub prominence_window_s: f64,
    pub min_interval_s: f64,
    pub max_interval_s: f64,
    pub similarity_tol: f64,
    pub continuity_min: usize,
    pub continuity_gap_s: f64,
}

impl Default for PhoneStepConfig {
    fn default() -> Self {
        Self {
            smoothing_hz: 5.0,
            prominence: 0.8,
            prominence_window_s: 1.0,
            min_interval_s: 1.0 / 3.0,
            max_interval_s: 1.0,
            similarity_tol: 0.5,
            continuity_min: 8,
            continuity_gap_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatchStepConfig {
    pub cutoff_hz: f64,
    pub delay_s: f64,
    pub hysteresis_up: f64,
    pub hysteresis_down: f64,
    pub min_armed_s: f64,
    pub group_gap_s: f64,
}

impl Default for WatchStepConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 3.0,
            delay_s: 0.1,
            hysteresis_up: 0.5,
            hysteresis_down: 0.5,
            min_armed_s: 0.15,
            group_gap_s: 1.0,
        }
    }
}

/// A local maximum of the magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCandidate {
    pub t: f64,
    pub m: f64,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepGroup {
    pub start_t: f64,
    pub end_t: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepResult {
    pub count: usize,
    pub step_times: Vec<f64>,
    pub groups: Vec<StepGroup>,
}

fn seconds_between(a: &PeakCandidate, b: &PeakCandidate, rate_hz: f64) -> f64 {
    (b.index as f64 - a.index as f64) / rate_hz
}

/// Splits time-ordered peaks wherever consecutive peaks are more than
/// `gap_s` apart.
fn split_runs(peaks: &[PeakCandidate], rate_hz: f64, gap_s: f64) -> Vec<&[PeakCandidate]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=peaks.len() {
        if i == peaks.len() || seconds_between(&peaks[i - 1], &peaks[i], rate_hz) > gap_s {
            if i > start {
                runs.push(&peaks[start..i]);
            }
            start = i;
        }
    }
    runs
}

/// Maxima that exceed their neighbours and stand at least `prominence`
/// above the centred local mean over `window_s`. A flat top counts once,
/// at its middle sample.
pub fn detect_peaks(series: &MagnitudeSeries, prominence: f64, window_s: f64) -> Vec<PeakCandidate> {
    let m = series.m();
    let n = m.len();
    if n < 3 {
        return Vec::new();
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in m {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    let half = ((window_s * series.rate_hz()) / 2.0).round() as usize;
    let local_mean = |i: usize| {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        (prefix[hi] - prefix[lo]) / (hi - lo) as f64
    };

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if m[i] > m[i - 1] {
            let mut j = i;
            while j + 1 < n && m[j + 1] == m[i] {
                j += 1;
            }
            if j + 1 < n && m[j + 1] < m[i] {
                let apex = (i + j) / 2;
                if m[apex] - local_mean(apex) > prominence {
                    peaks.push(PeakCandidate {
                        t: series.t()[apex],
                        m: m[apex],
                        index: apex,
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Periodicity: peaks closer than `min_interval_s` to the last accepted
/// peak compete and the larger survives; a survivor is then kept when an
/// accepted neighbour lies within `max_interval_s`.
pub fn filter_periodicity(peaks: &[PeakCandidate], rate_hz: f64, cfg: &PhoneStepConfig) -> Vec<PeakCandidate> {
    let mut spaced: Vec<PeakCandidate> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match spaced.last_mut() {
            Some(last) if seconds_between(last, p, rate_hz) < cfg.min_interval_s => {
                if p.m > last.m {
                    *last = *p;
                }
            }
            _ => spaced.push(*p),
        }
    }
    let ok = |a: &PeakCandidate, b: &PeakCandidate| seconds_between(a, b, rate_hz) <= cfg.max_interval_s;
    (0..spaced.len())
        .filter(|&i| (i > 0 && ok(&spaced[i - 1], &spaced[i])) || (i + 1 < spaced.len() && ok(&spaced[i], &spaced[i + 1])))
        .map(|i| spaced[i])
        .collect()
}

/// Similarity: within each run, a peak is compared with the last accepted
/// peak of the same parity (alternate feet) and dropped when the two
/// magnitudes differ by more than `similarity_tol` of the larger.
pub fn filter_similarity(peaks: &[PeakCandidate], rate_hz: f64, cfg: &PhoneStepConfig) -> Vec<PeakCandidate> {
    let mut out = Vec::with_capacity(peaks.len());
    for run in split_runs(peaks, rate_hz, cfg.continuity_gap_s) {
        let mut last: [Option<f64>; 2] = [None, None];
        for (k, p) in run.iter().enumerate() {
            let parity = k % 2;
            let keep = match last[parity] {
                Some(prev) if k >= 2 => (p.m - prev).abs() <= cfg.similarity_tol * p.m.max(prev),
                _ => true,
            };
            if keep {
                last[parity] = Some(p.m);
                out.push(*p);
            }
        }
    }
    out
}

/// Continuity: runs split at gaps over `continuity_gap_s`; runs shorter
/// than `continuity_min` are discarded and the rest become steps.
pub fn filter_continuity(peaks: &[PeakCandidate], rate_hz: f64, cfg: &PhoneStepConfig) -> StepResult {
    let mut result = StepResult::default();
    for run in split_runs(peaks, rate_hz, cfg.continuity_gap_s) {
        if run.len() < cfg.continuity_min {
            continue;
        }
        result.groups.push(StepGroup {
            start_t: run[0].t,
            end_t: run[run.len() - 1].t,
            n_steps: run.len(),
        });
        result.step_times.extend(run.iter().map(|p| p.t));
    }
    result.count = result.step_times.len();
    result
}

/// Zero-phase low-pass smoothing applied before peak detection.
pub fn smooth(series: &MagnitudeSeries, cutoff_hz: f64) -> Result<MagnitudeSeries> {
    let lp = Biquad::lowpass(cutoff_hz, series.rate_hz())?;
    Ok(series.with_values(lp.filtfilt(series.m())))
}

pub fn count_steps_phone(series: &MagnitudeSeries, cfg: &PhoneStepConfig) -> Result<StepResult> {
    let rate = series.rate_hz();
    let smoothed = smooth(series, cfg.smoothing_hz)?;
    let peaks = detect_peaks(&smoothed, cfg.prominence, cfg.prominence_window_s);
    let periodic = filter_periodicity(&peaks, rate, cfg);
    let similar = filter_similarity(&periodic, rate, cfg);
    Ok(filter_continuity(&similar, rate, cfg))
}

/// Armed-segment step detector for wrist-worn devices.
pub fn count_steps_watch(series: &MagnitudeSeries, cfg: &WatchStepConfig) -> Result<StepResult> {
    let rate = series.rate_hz();
    let raw = series.m();
    let lp = Biquad::lowpass(cfg.cutoff_hz, rate)?.filter(raw);
    let delay = (cfg.delay_s * rate).round() as usize;
    let replica = |i: usize| lp[i.saturating_sub(delay)];
    let min_len = cfg.min_armed_s * rate;

    // Armed while raw stays above replica + up; after a segment the detector
    // re-arms only once raw has dropped below replica - down.
    enum State {
        Ready,
        Armed { start: usize, apex: usize },
        Spent,
    }
    let mut steps: Vec<usize> = Vec::new();
    let mut state = State::Ready;
    for i in 0..raw.len() {
        let above = raw[i] > replica(i) + cfg.hysteresis_up;
        state = match state {
            State::Ready if above => State::Armed { start: i, apex: i },
            State::Ready => State::Ready,
            State::Armed { start, apex } if above => State::Armed {
                start,
                apex: if raw[i] > raw[apex] { i } else { apex },
            },
            State::Armed { start, apex } => {
                if (i - start) as f64 >= min_len {
                    steps.push(apex);
                }
                State::Spent
            }
            State::Spent if raw[i] < replica(i) - cfg.hysteresis_down => State::Ready,
            State::Spent => State::Spent,
        };
    }
    if let State::Armed { start, apex } = state {
        if (raw.len() - start) as f64 >= min_len {
            steps.push(apex);
        }
    }

    let mut result = StepResult::default();
    let mut group_start = 0;
    for k in 1..=steps.len() {
        let split = k == steps.len() || (steps[k] - steps[k - 1]) as f64 / rate > cfg.group_gap_s;
        if split {
            if k > group_start {
                result.groups.push(StepGroup {
                    start_t: series.t()[steps[group_start]],
                    end_t: series.t()[steps[k - 1]],
                    n_steps: k - group_start,
                });
            }
            group_start = k;
        }
    }
    result.step_times = steps.iter().map(|&i| series.t()[i]).collect();
    result.count = steps.len();
    Ok(result)
}
