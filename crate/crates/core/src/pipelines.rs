//! End-to-end activity and transport classification, with a
//! leave-one-subject-out (LOSO) harness shared by both.

use std::fmt::Display;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ConfusionMatrix, VehicleClass, VehicleGrouping};
use crate::features::{extract_window, FeatureSchema, FeatureVector};
use crate::ingest::LabeledAccelStream;
use crate::labels::{ActivityLabel, TransportLabel};
use crate::mobility::Trip;
use crate::signal::{majority_vote, resample, sliding_windows, AccelStream, LabelTimeline, MagnitudeSeries, TimelineEntry, CANONICAL_RATE_HZ};
use crate::svm::{train_ovo, OvoSvmModel, SvmParams};

/// A closed label set usable as classifier output.
pub trait ClassLabel: Copy + Eq + Display + FromStr<Err = Error> + Send + Sync + 'static {
    fn all() -> &'static [Self];
}

impl ClassLabel for ActivityLabel {
    fn all() -> &'static [Self] {
        &ActivityLabel::ALL
    }
}

impl ClassLabel for TransportLabel {
    fn all() -> &'static [Self] {
        &TransportLabel::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingConfig {
    pub window_s: f64,
    pub step_s: f64,
    /// Majority-vote horizon over window predictions; `None` disables it.
    pub smoothing_s: Option<f64>,
    /// Minimum share of samples carrying the window's majority label.
    pub min_agreement: f64,
}

impl WindowingConfig {
    pub fn activity() -> Self {
        Self {
            window_s: 5.0,
            step_s: 1.0,
            smoothing_s: Some(60.0),
            min_agreement: 0.8,
        }
    }

    pub fn transport() -> Self {
        Self {
            window_s: 60.0,
            step_s: 10.0,
            smoothing_s: None,
            min_agreement: 0.8,
        }
    }
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self::activity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub t_start: f64,
    pub t_end: f64,
    pub features: FeatureVector,
}

impl WindowFeatures {
    pub fn center(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

/// Resamples `stream` to the canonical rate and featurises every gap-free
/// window.
pub fn featurize(stream: &AccelStream, cfg: &WindowingConfig, schema: &FeatureSchema) -> Result<(MagnitudeSeries, Vec<WindowFeatures>)> {
    let series = resample(stream, CANONICAL_RATE_HZ)?;
    let windows = sliding_windows(&series, cfg.window_s, cfg.step_s)?;
    let feats = windows
        .par_iter()
        .map(|w| {
            Ok(WindowFeatures {
                t_start: w.t_start,
                t_end: w.t_end,
                features: extract_window(&series, w, schema)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((series, feats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction<L> {
    pub t_start: f64,
    pub t_end: f64,
    pub label: L,
    pub margin: f64,
}

fn predict_windows<L: ClassLabel>(model: &OvoSvmModel, windows: &[WindowFeatures]) -> Result<Vec<WindowPrediction<L>>> {
    let classes: Vec<L> = model.classes.iter().map(|c| c.parse()).collect::<Result<_>>()?;
    windows
        .par_iter()
        .map(|w| {
            let p = model.predict(&w.features)?;
            Ok(WindowPrediction {
                t_start: w.t_start,
                t_end: w.t_end,
                label: classes[p.class],
                margin: p.margin(),
            })
        })
        .collect()
}

/// One timeline entry per window, `step_s` wide and centred on the window.
fn window_timeline<L: Clone>(preds: &[WindowPrediction<L>], step_s: f64) -> Result<LabelTimeline<L>> {
    LabelTimeline::new(
        preds
            .iter()
            .map(|p| {
                let c = 0.5 * (p.t_start + p.t_end);
                TimelineEntry {
                    t_start: c - step_s / 2.0,
                    t_end: c + step_s / 2.0,
                    label: p.label.clone(),
                }
            })
            .collect(),
    )
}

fn check_schema(model: &OvoSvmModel, schema: &FeatureSchema) -> Result<()> {
    if model.schema_id != schema.id {
        return Err(Error::SchemaMismatch {
            expected: schema.id.clone(),
            found: model.schema_id.clone(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityOutput {
    pub windows: Vec<WindowPrediction<ActivityLabel>>,
    /// Window labels after the majority vote.
    pub timeline: LabelTimeline<ActivityLabel>,
}

pub fn classify_activity_detailed(stream: &AccelStream, model: &OvoSvmModel, cfg: &WindowingConfig) -> Result<ActivityOutput> {
    let schema = FeatureSchema::by_id(&model.schema_id)?;
    check_schema(model, &FeatureSchema::activity())?;
    let (_, windows) = featurize(stream, cfg, &schema)?;
    let preds = predict_windows::<ActivityLabel>(model, &windows)?;
    let raw = window_timeline(&preds, cfg.step_s)?;
    let timeline = match cfg.smoothing_s {
        Some(h) => majority_vote(&raw, h)?,
        None => raw,
    };
    Ok(ActivityOutput { windows: preds, timeline })
}

/// Activity timeline: 5 s / 1 s windows, OvO prediction, 60 s majority vote.
/// A stream shorter than one window gives an empty timeline.
pub fn classify_activity(stream: &AccelStream, model: &OvoSvmModel, cfg: &WindowingConfig) -> Result<LabelTimeline<ActivityLabel>> {
    Ok(classify_activity_detailed(stream, model, cfg)?.timeline)
}

/// Majority per-sample label of a window, or `None` when fewer than
/// `min_agreement` of its samples carry it (unlabelled samples count
/// against agreement).
pub fn window_ground_truth<L: ClassLabel>(series: &MagnitudeSeries, labels: &LabelTimeline<L>, t_start: f64, t_end: f64, min_agreement: f64) -> Option<L> {
    let t = series.t();
    let lo = t.partition_point(|&x| x < t_start);
    let hi = t.partition_point(|&x| x < t_end);
    if hi <= lo {
        return None;
    }
    let mut tally: Vec<(L, usize)> = Vec::new();
    for &ts in &t[lo..hi] {
        if let Some(&l) = labels.label_at(ts) {
            match tally.iter_mut().find(|(x, _)| *x == l) {
                Some(slot) => slot.1 += 1,
                None => tally.push((l, 1)),
            }
        }
    }
    let (label, count) = tally.into_iter().fold(None, |best: Option<(L, usize)>, (l, n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((l, n)),
    })?;
    (count as f64 / (hi - lo) as f64 >= min_agreement).then_some(label)
}

/// Featurised windows of one subject with their ground truth (if any).
#[derive(Debug, Clone)]
pub struct SubjectWindows<L> {
    pub subject: String,
    pub windows: Vec<WindowFeatures>,
    pub truth: Vec<Option<L>>,
}

pub fn subject_windows<L: ClassLabel>(subject: &str, data: &LabeledAccelStream<L>, cfg: &WindowingConfig, schema: &FeatureSchema) -> Result<SubjectWindows<L>> {
    let (series, windows) = featurize(&data.stream, cfg, schema)?;
    let truth = windows
        .iter()
        .map(|w| window_ground_truth(&series, &data.labels, w.t_start, w.t_end, cfg.min_agreement))
        .collect();
    Ok(SubjectWindows {
        subject: subject.to_string(),
        windows,
        truth,
    })
}

/// Training rows with the subject each row came from.
#[derive(Debug, Clone)]
pub struct TrainingSet<L> {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<L>,
    pub provenance: Vec<String>,
}

impl<L: ClassLabel> TrainingSet<L> {
    pub fn from_subjects<'a>(subjects: impl IntoIterator<Item = &'a SubjectWindows<L>>) -> Self {
        let mut set = Self {
            rows: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
        };
        for s in subjects {
            for (w, t) in s.windows.iter().zip(&s.truth) {
                if let Some(l) = t {
                    set.rows.push(w.features.clone());
                    set.labels.push(*l);
                    set.provenance.push(s.subject.clone());
                }
            }
        }
        set
    }

    /// Classes present, in the label type's canonical order.
    pub fn classes(&self) -> Vec<L> {
        L::all().iter().copied().filter(|c| self.labels.contains(c)).collect()
    }

    pub fn train(&self, params: &SvmParams) -> Result<OvoSvmModel> {
        let classes: Vec<String> = self.classes().iter().map(ToString::to_string).collect();
        let labels: Vec<String> = self.labels.iter().map(ToString::to_string).collect();
        train_ovo(&self.rows, &labels, &classes, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_subject: String,
    pub training_subjects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub training_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub report: FoldReport,
    pub model: OvoSvmModel,
}

#[derive(Debug, Clone)]
pub struct LosoResult {
    pub folds: Vec<Fold>,
    pub pooled: ConfusionMatrix,
}

/// Evaluates `model` on one subject: predict every window, optionally
/// smooth, then score the windows that carry ground truth.
pub fn evaluate_subject<L: ClassLabel>(model: &OvoSvmModel, subject: &SubjectWindows<L>, cfg: &WindowingConfig, matrix: &mut ConfusionMatrix) -> Result<usize> {
    let preds = predict_windows::<L>(model, &subject.windows)?;
    let labels: Vec<L> = match cfg.smoothing_s {
        Some(h) => majority_vote(&window_timeline(&preds, cfg.step_s)?, h)?.labels().copied().collect(),
        None => preds.iter().map(|p| p.label).collect(),
    };
    let mut n = 0;
    for (pred, truth) in labels.iter().zip(&subject.truth) {
        if let Some(t) = truth {
            matrix.add(&t.to_string(), &pred.to_string())?;
            n += 1;
        }
    }
    Ok(n)
}

fn training_accuracy(model: &OvoSvmModel, set: &TrainingSet<impl ClassLabel>) -> Result<f64> {
    let correct = set
        .rows
        .par_iter()
        .zip(&set.labels)
        .map(|(r, l)| Ok(usize::from(model.predict_label(r)? == l.to_string())))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / set.rows.len().max(1) as f64)
}

/// Leave-one-subject-out over pre-featurised subjects. Subjects without
/// labelled windows are skipped with a warning.
pub fn loso<L: ClassLabel>(subjects: &[SubjectWindows<L>], cfg: &WindowingConfig, params: &SvmParams) -> Result<LosoResult> {
    if subjects.len() < 2 {
        return Err(Error::param("subjects", "leave-one-subject-out needs at least two subjects"));
    }
    let mut pooled = ConfusionMatrix::new(L::all());
    let mut folds = Vec::new();
    for (k, test) in subjects.iter().enumerate() {
        if test.truth.iter().all(Option::is_none) {
            log::warn!("subject {} has no labelled windows; fold skipped", test.subject);
            continue;
        }
        let train_set = TrainingSet::from_subjects(subjects.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, s)| s));
        debug_assert!(!train_set.provenance.contains(&test.subject));
        let model = train_set.train(params)?;
        let mut confusion = ConfusionMatrix::new(L::all());
        let n_test = evaluate_subject(&model, test, cfg, &mut confusion)?;
        pooled.merge(&confusion)?;
        let mut training_subjects: Vec<String> = train_set.provenance.clone();
        training_subjects.dedup();
        log::info!("fold {}: {} training rows, {n_test} test windows, accuracy {:.3}", test.subject, train_set.rows.len(), confusion.accuracy());
        folds.push(Fold {
            report: FoldReport {
                test_subject: test.subject.clone(),
                training_subjects,
                n_train: train_set.rows.len(),
                n_test,
                training_accuracy: training_accuracy(&model, &train_set)?,
                confusion,
            },
            model,
        });
    }
    Ok(LosoResult { folds, pooled })
}

pub fn train_activity_loso(dataset: &[(String, LabeledAccelStream<ActivityLabel>)], params: &SvmParams) -> Result<LosoResult> {
    let cfg = WindowingConfig::activity();
    let schema = FeatureSchema::activity();
    let subjects = dataset
        .iter()
        .map(|(id, data)| subject_windows(id, data, &cfg, &schema))
        .collect::<Result<Vec<_>>>()?;
    loso(&subjects, &cfg, params)
}

pub fn train_transport_loso(dataset: &[(String, LabeledAccelStream<TransportLabel>)], params: &SvmParams) -> Result<LosoResult> {
    let cfg = WindowingConfig::transport();
    let schema = FeatureSchema::transport();
    let subjects = dataset
        .iter()
        .map(|(id, data)| subject_windows(id, data, &cfg, &schema))
        .collect::<Result<Vec<_>>>()?;
    loso(&subjects, &cfg, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripLabel {
    pub label: TransportLabel,
    pub windows: Vec<WindowPrediction<TransportLabel>>,
}

/// Plurality over window labels; a tie goes to the tied label whose best
/// window has the largest margin.
pub fn plurality<L: Copy + Eq>(preds: &[WindowPrediction<L>]) -> Option<L> {
    let mut tally: Vec<(L, usize, f64)> = Vec::new();
    for p in preds {
        match tally.iter_mut().find(|(l, _, _)| *l == p.label) {
            Some(slot) => {
                slot.1 += 1;
                slot.2 = slot.2.max(p.margin);
            }
            None => tally.push((p.label, 1, p.margin)),
        }
    }
    tally
        .into_iter()
        .fold(None, |best: Option<(L, usize, f64)>, cand| match best {
            Some(b) if b.1 > cand.1 || (b.1 == cand.1 && b.2 >= cand.2) => Some(b),
            _ => Some(cand),
        })
        .map(|(l, _, _)| l)
}

pub fn classify_transport_detailed(trip: &Trip, accel: &AccelStream, model: &OvoSvmModel) -> Result<TripLabel> {
    classify_transport_with(trip, accel, model, &WindowingConfig::transport())
}

pub fn classify_transport_with(trip: &Trip, accel: &AccelStream, model: &OvoSvmModel, cfg: &WindowingConfig) -> Result<TripLabel> {
    let schema = FeatureSchema::transport();
    check_schema(model, &schema)?;
    if trip.t_end - trip.t_start < cfg.window_s {
        return Err(Error::Invalid("trip too short".into()));
    }
    let slice = accel.slice_time(trip.t_start, trip.t_end)?;
    let (_, windows) = featurize(&slice, cfg, &schema)?;
    let preds = predict_windows::<TransportLabel>(model, &windows)?;
    let label = plurality(&preds).ok_or_else(|| Error::Invalid("trip too short".into()))?;
    Ok(TripLabel { label, windows: preds })
}

/// Trip label: 60 s / 10 s windows over the trip, plurality vote.
pub fn classify_transport(trip: &Trip, accel: &AccelStream, model: &OvoSvmModel) -> Result<TransportLabel> {
    Ok(classify_transport_detailed(trip, accel, model)?.label)
}

pub fn to_vehicle_class(label: TransportLabel) -> VehicleClass {
    VehicleGrouping::default().class_of(label)
}

/// `t_start,t_end,label` rows.
pub fn write_timeline_csv<W: Write, L: Display>(out: W, timeline: &LabelTimeline<L>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_start", "t_end", "label"])?;
    for e in timeline.entries() {
        w.write_record([format!("{:.3}", e.t_start), format!("{:.3}", e.t_end), e.label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::AccelSample;
    use crate::svm::Kernel;

    fn constant_stream(seconds: f64, value: f64) -> AccelStream {
        let n = (seconds * 100.0) as usize;
        AccelStream::new((0..n).map(|i| AccelSample::new(i as f64 / 100.0, 0.0, 0.0, value)).collect(), 100.0).unwrap()
    }

    fn walking_stream(seconds: f64) -> AccelStream {
        let n = (seconds * 100.0) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 100.0;
                AccelSample::new(t, 0.0, 0.0, 9.81 + 3.0 * (2.0 * std::f64::consts::PI * 1.8 * t).sin())
            })
            .collect();
        AccelStream::new(samples, 100.0).unwrap()
    }

    /// Two-class toy: lying = still windows, walking = 1.8 Hz oscillation.
    fn toy_model() -> OvoSvmModel {
        let schema = FeatureSchema::activity();
        let cfg = WindowingConfig::activity();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (stream, label) in [(constant_stream(30.0, 9.81), "lying"), (walking_stream(30.0), "walking")] {
            let (_, w) = featurize(&stream, &cfg, &schema).unwrap();
            // perturb slightly so standardisation sees variance in each class
            for (k, wf) in w.into_iter().enumerate() {
                let mut f = wf.features;
                f.values[0] += 0.01 * (k % 3) as f64;
                rows.push(f);
                labels.push(label.to_string());
            }
        }
        train_ovo(&rows, &labels, &["lying".into(), "walking".into()], &SvmParams::default()).unwrap()
    }

    #[test]
    fn constant_stream_is_lying() {
        let model = toy_model();
        let tl = classify_activity(&constant_stream(180.0, 9.81), &model, &WindowingConfig::activity()).unwrap();
        assert!(!tl.is_empty());
        assert!(tl.labels().all(|l| *l == ActivityLabel::Lying));
    }

    #[test]
    fn window_count_and_empty_short_stream() {
        let model = toy_model();
        let out = classify_activity_detailed(&walking_stream(65.0), &model, &WindowingConfig::activity()).unwrap();
        assert_eq!(out.windows.len(), 61);
        assert_eq!(out.timeline.len(), 61);
        assert!(classify_activity(&walking_stream(4.0), &model, &WindowingConfig::activity()).unwrap().is_empty());
    }

    #[test]
    fn dissenting_window_smoothed_away() {
        let model = toy_model();
        let mut samples: Vec<AccelSample> = walking_stream(180.0).samples().to_vec();
        // 5 s of stillness in the middle
        for s in samples.iter_mut().filter(|s| s.t >= 90.0 && s.t < 95.0) {
            s.az = 9.81;
        }
        let stream = AccelStream::new(samples, 100.0).unwrap();
        let out = classify_activity_detailed(&stream, &model, &WindowingConfig::activity()).unwrap();
        assert!(out.windows.iter().any(|w| w.label == ActivityLabel::Lying));
        assert!(out.timeline.labels().all(|l| *l == ActivityLabel::Walking));
    }

    #[test]
    fn ground_truth_needs_agreement() {
        let series = MagnitudeSeries::uniform(0.0, 100.0, vec![9.81; 1000]);
        let labels = LabelTimeline::new(vec![
            TimelineEntry { t_start: 0.0, t_end: 4.2, label: ActivityLabel::Sitting },
            TimelineEntry { t_start: 4.21, t_end: 10.0, label: ActivityLabel::Standing },
        ])
        .unwrap();
        assert_eq!(window_ground_truth(&series, &labels, 0.0, 5.0, 0.8), Some(ActivityLabel::Sitting));
        assert_eq!(window_ground_truth(&series, &labels, 1.0, 6.0, 0.8), None);
        assert_eq!(window_ground_truth(&series, &labels, 5.0, 10.0, 0.8), Some(ActivityLabel::Standing));
    }

    fn pred(label: TransportLabel, margin: f64) -> WindowPrediction<TransportLabel> {
        WindowPrediction { t_start: 0.0, t_end: 60.0, label, margin }
    }

    #[test]
    fn trip_plurality() {
        use TransportLabel::*;
        assert_eq!(plurality(&vec![pred(Car, 1.0); 55]), Some(Car));
        let mut mixed = vec![pred(Car, 1.0); 30];
        mixed.extend(vec![pred(Bus, 5.0); 25]);
        assert_eq!(plurality(&mixed), Some(Car));
        let tie = vec![pred(Car, 1.0), pred(Bus, 2.0), pred(Car, 0.5), pred(Bus, 0.1)];
        assert_eq!(plurality(&tie), Some(Bus));
        assert_eq!(plurality::<TransportLabel>(&[]), None);
    }

    fn transport_model() -> OvoSvmModel {
        let schema = FeatureSchema::transport();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, label) in ["car", "bus"].iter().enumerate() {
            for j in 0..10 {
                let mut values = vec![0.0; schema.len()];
                values[0] = 9.81 + k as f64 * 5.0 + 0.01 * j as f64;
                values[1] = j as f64 * 0.01;
                rows.push(FeatureVector { values, schema_id: schema.id.clone() });
                labels.push(label.to_string());
            }
        }
        let params = SvmParams { kernel: crate::svm::KernelSpec::Linear, ..SvmParams::default() };
        let m = train_ovo(&rows, &labels, &["car".into(), "bus".into()], &params).unwrap();
        assert_eq!(m.pairwise[0].svm.kernel, Kernel::Linear);
        m
    }

    fn trip(t_start: f64, t_end: f64) -> Trip {
        Trip { start_visit: 0, end_visit: 1, t_start, t_end, path_m: 1000.0, avg_speed_kmh: 10.0, valid: true }
    }

    #[test]
    fn transport_windows_and_errors() {
        let model = transport_model();
        let accel = constant_stream(700.0, 9.81);
        let out = classify_transport_detailed(&trip(50.0, 650.0), &accel, &model).unwrap();
        assert_eq!(out.windows.len(), 55);
        assert_eq!(out.label, TransportLabel::Car);
        assert_eq!(classify_transport(&trip(50.0, 650.0), &accel, &model).unwrap(), out.label);
        let err = classify_transport(&trip(50.0, 80.0), &accel, &model).unwrap_err();
        assert!(err.to_string().contains("trip too short"));
    }

    #[test]
    fn vehicle_classes() {
        assert_eq!(to_vehicle_class(TransportLabel::Car), VehicleClass::Vehicle);
        assert_eq!(to_vehicle_class(TransportLabel::WalkRun), VehicleClass::NonVehicle);
        assert_eq!(to_vehicle_class(TransportLabel::Bike), VehicleClass::NonVehicle);
        assert_eq!(to_vehicle_class(TransportLabel::TrainSubway), VehicleClass::Vehicle);
    }
}
