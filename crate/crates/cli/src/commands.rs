use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use indicators_core::evaluation::{match_visits, step_error, vehicle_rollup, ConfusionMatrix, MatchReport, VehicleClass, VehicleReport};
use indicators_core::features::FeatureSchema;
use indicators_core::ingest::{
    load_accel_csv, load_location_csv, load_pamap2, load_poi_table, load_shl_slice_at, load_timeline_csv, load_visits_csv, LabeledAccelStream,
};
use indicators_core::labels::{ActivityLabel, TransportLabel};
use indicators_core::mobility::{detect_visits, segment_trips, write_visits_csv, Trip};
use indicators_core::pipelines::{
    classify_activity_detailed, classify_transport_with, evaluate_subject, loso, subject_windows, write_timeline_csv, ClassLabel, LosoResult,
    SubjectWindows, TrainingSet,
};
use indicators_core::profiles::{activity_counts, after_school_destination, after_school_tally, local_date, Profile, SessionSummary};
use indicators_core::signal::{resample, AccelStream, LabelTimeline, CANONICAL_RATE_HZ, DEFAULT_GAP_THRESHOLD_S};
use indicators_core::steps::{count_steps_phone, count_steps_watch, StepGroup};
use indicators_core::svm::OvoSvmModel;
use serde::Serialize;

use crate::config::Config;
use crate::{Device, Failure};

/// Output directory; every report is written through it.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: PathBuf) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    /// Path for `name`, creating its parent directories.
    pub fn file(&self, name: &str) -> Result<PathBuf, Failure> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
        let p = self.file(name)?;
        fs::write(&p, bytes).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    pub fn csv(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> indicators_core::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }
}

fn require_file(p: &Path) -> Result<(), Failure> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{}: no such file", p.display())))
    }
}

fn require_dir(p: &Path) -> Result<(), Failure> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{}: no such directory", p.display())))
    }
}

/// Directory entries matching `keep`, sorted by name.
fn sorted_entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, Failure> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| keep(p))
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem().or(p.file_name()).map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn load_model(p: &Path, schema: &FeatureSchema) -> Result<OvoSvmModel, Failure> {
    require_file(p)?;
    let m = OvoSvmModel::load(p)?;
    if m.schema_id != schema.id {
        return Err(Failure::Data(format!("{}: model uses feature schema `{}`, expected `{}`", p.display(), m.schema_id, schema.id)));
    }
    Ok(m)
}

#[derive(Serialize)]
struct StepsReport {
    device: Device,
    count: usize,
    groups: Vec<StepGroup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_error: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_error_pct: Option<f64>,
}

pub fn steps(cfg: &Config, out: &Out, input: &Path, device: Device, truth: Option<u64>) -> Result<(), Failure> {
    require_file(input)?;
    let series = resample(&load_accel_csv(input)?, CANONICAL_RATE_HZ)?;
    let res = match device {
        Device::Phone => count_steps_phone(&series, &cfg.phone())?,
        Device::Watch => count_steps_watch(&series, &cfg.watch())?,
    };
    let err = truth.map(|t| step_error(res.count as u64, t)).transpose()?;
    let report = StepsReport {
        device,
        count: res.count,
        groups: res.groups,
        truth,
        abs_error: err.map(|e| e.absolute),
        rel_error_pct: err.map(|e| e.relative_pct),
    };
    println!("{} steps", report.count);
    if let Some(e) = err {
        println!("absolute error {} steps, relative {:.2}%", e.absolute, e.relative_pct);
    }
    out.json("steps.json", &report)
}

fn load_activity_dataset(cfg: &Config, dir: &Path) -> Result<Vec<SubjectWindows<ActivityLabel>>, Failure> {
    require_dir(dir)?;
    let files = sorted_entries(dir, |p| p.is_file() && p.extension().is_some_and(|e| e == "dat"))?;
    if files.is_empty() {
        return Err(Failure::Usage(format!("{}: no PAMAP2 .dat files", dir.display())));
    }
    let wcfg = cfg.activity_windowing();
    let schema = FeatureSchema::activity();
    files
        .iter()
        .map(|f| {
            let data = load_pamap2(f, cfg.pamap2_imu)?;
            Ok(subject_windows(&stem(f), &data, &wcfg, &schema)?)
        })
        .collect()
}

#[derive(Serialize)]
struct LosoSummary<'a> {
    pooled_accuracy: f64,
    folds: Vec<&'a indicators_core::pipelines::FoldReport>,
}

fn write_loso(out: &Out, res: &LosoResult) -> Result<(), Failure> {
    for f in &res.folds {
        out.write(&format!("models/{}.json", f.report.test_subject), f.model.to_json()? + "\n")?;
    }
    out.csv("confusion.csv", |b| res.pooled.write_csv(b))?;
    out.json(
        "folds.json",
        &LosoSummary {
            pooled_accuracy: res.pooled.accuracy(),
            folds: res.folds.iter().map(|f| &f.report).collect(),
        },
    )?;
    println!("{} folds, pooled accuracy {:.4}", res.folds.len(), res.pooled.accuracy());
    Ok(())
}

fn train_all<L: ClassLabel>(subjects: &[SubjectWindows<L>], cfg: &Config) -> Result<OvoSvmModel, Failure> {
    let set = TrainingSet::from_subjects(subjects);
    if set.rows.is_empty() {
        return Err(Failure::Data("no labelled windows to train on".into()));
    }
    println!("trained on {} windows from {} subjects", set.rows.len(), subjects.len());
    Ok(set.train(&cfg.svm())?)
}

pub fn activity_train(cfg: &Config, out: &Out, dir: &Path, with_loso: bool) -> Result<(), Failure> {
    let subjects = load_activity_dataset(cfg, dir)?;
    if with_loso {
        write_loso(out, &loso(&subjects, &cfg.activity_windowing(), &cfg.svm())?)
    } else {
        out.write("activity_model.json", train_all(&subjects, cfg)?.to_json()? + "\n")
    }
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    n_windows: u64,
    per_class: Vec<ClassScore>,
}

#[derive(Serialize)]
struct ClassScore {
    class: String,
    precision: f64,
    recall: f64,
    support: u64,
}

fn class_scores(m: &ConfusionMatrix) -> Vec<ClassScore> {
    m.classes
        .iter()
        .enumerate()
        .map(|(i, c)| ClassScore {
            class: c.clone(),
            precision: m.precision(i),
            recall: m.recall(i),
            support: m.row_sum(i),
        })
        .collect()
}

fn write_class_scores(m: &ConfusionMatrix) -> impl FnOnce(&mut Vec<u8>) -> indicators_core::Result<()> + '_ {
    move |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["class", "precision", "recall", "support"])?;
        for s in class_scores(m) {
            w.write_record([s.class, format!("{:.4}", s.precision), format!("{:.4}", s.recall), s.support.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn activity_eval(cfg: &Config, out: &Out, dir: &Path, model: &Path) -> Result<(), Failure> {
    let model = load_model(model, &FeatureSchema::activity())?;
    let subjects = load_activity_dataset(cfg, dir)?;
    let mut m = ConfusionMatrix::new(ActivityLabel::all());
    for s in &subjects {
        evaluate_subject(&model, s, &cfg.activity_windowing(), &mut m)?;
    }
    out.csv("confusion.csv", |b| m.write_csv(b))?;
    println!("accuracy {:.4} over {} windows", m.accuracy(), m.total());
    out.json(
        "eval.json",
        &EvalReport {
            accuracy: m.accuracy(),
            n_windows: m.total(),
            per_class: class_scores(&m),
        },
    )
}

pub fn activity_classify(cfg: &Config, out: &Out, input: &Path, model: &Path) -> Result<(), Failure> {
    let model = load_model(model, &FeatureSchema::activity())?;
    require_file(input)?;
    let stream = load_accel_csv(input)?;
    let res = classify_activity_detailed(&stream, &model, &cfg.activity_windowing())?;
    println!("{} windows classified", res.windows.len());
    out.csv("activity_timeline.csv", |b| write_timeline_csv(b, &res.timeline))
}

pub fn visits(cfg: &Config, out: &Out, input: &Path, truth: Option<&Path>) -> Result<(), Failure> {
    require_file(input)?;
    let stream = load_location_csv(input)?;
    let found = detect_visits(&stream, &cfg.mobility());
    println!("{} visits", found.len());
    out.csv("visits.csv", |b| write_visits_csv(b, &found))?;
    if let Some(t) = truth {
        require_file(t)?;
        let reference = load_visits_csv(t)?;
        let report: MatchReport = match_visits(&found, &reference, cfg.visit_match_threshold_m);
        println!("{report}");
        out.json("match.json", &report)?;
    }
    Ok(())
}

/// A session directory: `accel.csv` plus `labels.csv`, or an SHL slice.
fn load_transport_session(cfg: &Config, dir: &Path) -> Result<LabeledAccelStream<TransportLabel>, Failure> {
    let accel = dir.join("accel.csv");
    if accel.is_file() {
        let labels = dir.join("labels.csv");
        require_file(&labels)?;
        Ok(LabeledAccelStream {
            stream: load_accel_csv(&accel)?,
            labels: load_timeline_csv(&labels)?,
        })
    } else {
        Ok(load_shl_slice_at(dir, &cfg.shl_position)?.transport_stream()?)
    }
}

pub fn transport_train(cfg: &Config, out: &Out, dir: &Path, with_loso: bool) -> Result<(), Failure> {
    require_dir(dir)?;
    let sessions = sorted_entries(dir, Path::is_dir)?;
    if sessions.is_empty() {
        return Err(Failure::Usage(format!("{}: no session directories", dir.display())));
    }
    let wcfg = cfg.transport_windowing();
    let schema = FeatureSchema::transport();
    let subjects = sessions
        .iter()
        .map(|d| Ok(subject_windows(&stem(d), &load_transport_session(cfg, d)?, &wcfg, &schema)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    if with_loso {
        let res = loso(&subjects, &wcfg, &cfg.svm())?;
        write_loso(out, &res)?;
        out.json("rollup.json", &vehicle_rollup(&res.pooled, &cfg.vehicle_grouping())?)
    } else {
        out.write("transport_model.json", train_all(&subjects, cfg)?.to_json()? + "\n")
    }
}

/// Label covering the largest share of `[t0, t1)`.
fn dominant_label<L: Copy + Ord>(timeline: &LabelTimeline<L>, t0: f64, t1: f64) -> Option<L> {
    let mut overlap: BTreeMap<L, f64> = BTreeMap::new();
    for e in timeline.entries() {
        let d = e.t_end.min(t1) - e.t_start.max(t0);
        if d > 0.0 {
            *overlap.entry(e.label).or_default() += d;
        }
    }
    overlap.into_iter().fold(None, |best: Option<(L, f64)>, (l, d)| match best {
        Some((_, bd)) if bd >= d => best,
        _ => Some((l, d)),
    }).map(|(l, _)| l)
}

#[derive(Serialize)]
struct TransportRollup {
    trips: usize,
    classified: usize,
    scored: usize,
    vehicle: VehicleReport,
}

pub fn transport_run(cfg: &Config, out: &Out, dir: &Path, model: &Path) -> Result<(), Failure> {
    let model = load_model(model, &FeatureSchema::transport())?;
    require_dir(dir)?;
    let (accel_p, loc_p, labels_p) = (dir.join("accel.csv"), dir.join("location.csv"), dir.join("labels.csv"));
    require_file(&accel_p)?;
    require_file(&loc_p)?;
    let accel = load_accel_csv(&accel_p)?;
    let loc = load_location_csv(&loc_p)?;
    let truth: Option<LabelTimeline<TransportLabel>> = labels_p.is_file().then(|| load_timeline_csv(&labels_p)).transpose()?;
    let mob = cfg.mobility();
    let visits = detect_visits(&loc, &mob);
    let trips: Vec<Trip> = segment_trips(&visits, &loc, &accel, &mob);
    out.csv("visits.csv", |b| write_visits_csv(b, &visits))?;

    let wcfg = cfg.transport_windowing();
    let grouping = cfg.vehicle_grouping();
    let mut matrix = ConfusionMatrix::new(TransportLabel::all());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trip", "t_start", "t_end", "path_m", "avg_speed_kmh", "label", "vehicle", "truth", "note"]).map_err(indicators_core::Error::from)?;
    let (mut classified, mut scored) = (0, 0);
    for (k, trip) in trips.iter().enumerate() {
        let (label, note) = if !trip.valid {
            (None, "skipped: invalid trip".to_string())
        } else {
            match classify_transport_with(trip, &accel, &model, &wcfg) {
                Ok(t) => (Some(t.label), String::new()),
                Err(e) => (None, format!("skipped: {e}")),
            }
        };
        if !note.is_empty() {
            eprintln!("note: trip {k}: {note}");
        }
        let actual = truth.as_ref().and_then(|tl| dominant_label(tl, trip.t_start, trip.t_end));
        if let Some(l) = label {
            classified += 1;
            if let Some(a) = actual {
                matrix.add(a.as_str(), l.as_str())?;
                scored += 1;
            }
        }
        w.write_record([
            k.to_string(),
            format!("{:.3}", trip.t_start),
            format!("{:.3}", trip.t_end),
            format!("{:.2}", trip.path_m),
            format!("{:.4}", trip.avg_speed_kmh),
            label.map_or_else(String::new, |l| l.to_string()),
            label.map_or_else(String::new, |l| match grouping.class_of(l) {
                VehicleClass::Vehicle => "vehicle".to_string(),
                VehicleClass::NonVehicle => "non_vehicle".to_string(),
            }),
            actual.map_or_else(String::new, |l| l.to_string()),
            note,
        ])
        .map_err(indicators_core::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Data(e.to_string()))?;
    out.write("trips.csv", bytes)?;
    println!("{} trips, {classified} classified", trips.len());
    if truth.is_some() {
        out.csv("per_class.csv", write_class_scores(&matrix))?;
        out.csv("confusion.csv", |b| matrix.write_csv(b))?;
        out.json(
            "rollup.json",
            &TransportRollup {
                trips: trips.len(),
                classified,
                scored,
                vehicle: vehicle_rollup(&matrix, &grouping)?,
            },
        )?;
    }
    Ok(())
}

/// Seconds of a stream not lying inside gaps.
fn monitored_s(s: &AccelStream) -> f64 {
    let gaps: f64 = s.gaps(DEFAULT_GAP_THRESHOLD_S).iter().map(|g| g.end - g.start).sum();
    (s.t_last() - s.t_first() - gaps).max(0.0)
}

pub fn profile(cfg: &Config, out: &Out, user_dir: &Path, poi_path: &Path) -> Result<(), Failure> {
    require_dir(user_dir)?;
    require_file(poi_path)?;
    let accel_dir = user_dir.join("accel");
    let files = if accel_dir.is_dir() {
        sorted_entries(&accel_dir, |p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))?
    } else {
        Vec::new()
    };
    if files.is_empty() {
        return Err(Failure::Usage(format!("{}: no sessions under accel/", user_dir.display())));
    }
    let poi = load_poi_table(poi_path)?;
    let day = |t: f64| local_date(0.0, t, cfg.utc_offset_s);

    let mut sessions = Vec::new();
    let mut days = BTreeSet::new();
    for f in &files {
        let stream = load_accel_csv(f)?;
        let series = resample(&stream, CANONICAL_RATE_HZ)?;
        let date = day(stream.t_first())?;
        days.insert(date);
        days.insert(day(stream.t_last())?);
        sessions.push(SessionSummary {
            date,
            steps: count_steps_phone(&series, &cfg.phone())?.count as u64,
            epoch_counts: activity_counts(&stream, cfg.counts_epoch_s)?,
            epoch_s: cfg.counts_epoch_s,
            monitored_s: monitored_s(&stream),
        });
    }

    let loc_p = user_dir.join("location.csv");
    let visits = if loc_p.is_file() {
        let loc = load_location_csv(&loc_p)?;
        if let (Some(a), Some(b)) = (loc.fixes().first(), loc.fixes().last()) {
            days.insert(day(a.t)?);
            days.insert(day(b.t)?);
        }
        detect_visits(&loc, &cfg.mobility())
    } else {
        log::warn!("{}: no location.csv; visit rows omitted", user_dir.display());
        Vec::new()
    };
    let (first, last) = (*days.first().expect("non-empty"), *days.last().expect("non-empty"));
    let span_days = ((last - first).num_days() + 1) as f64;

    let profile = Profile::build(&sessions, &visits, &poi, cfg.poi_radius_m, span_days)?;
    out.write("profile.json", profile.to_json()? + "\n")?;
    out.csv("visits.csv", |b| write_visits_csv(b, &visits))?;

    let tally = after_school_tally(&visits, &poi, cfg.poi_radius_m, day)?;
    let destination = after_school_destination(&tally);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["destination", "count"]).map_err(indicators_core::Error::from)?;
    for (k, n) in &tally {
        w.write_record([k.as_str(), &n.to_string()]).map_err(indicators_core::Error::from)?;
    }
    out.write("after_school_tally.csv", w.into_inner().map_err(|e| Failure::Data(e.to_string()))?)?;
    out.csv("after_school.csv", |b| indicators_core::profiles::write_destination_table(b, std::slice::from_ref(&destination)))?;
    println!("daily steps {:.1}, after-school destination {destination}", profile.daily_steps);
    Ok(())
}
