//! Step-count error, confusion matrices, visit matching and the
//! vehicle/non-vehicle roll-up.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::TransportLabel;
use crate::mobility::Visit;
use crate::signal::{haversine_m, LabelTimeline};

pub const VISIT_MATCH_THRESHOLD_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub absolute: u64,
    /// Percent of the true count.
    pub relative_pct: f64,
}

pub fn step_error(predicted: u64, truth: u64) -> Result<StepError> {
    if truth == 0 {
        return Err(Error::param("truth", "relative error needs a positive true count"));
    }
    let absolute = predicted.abs_diff(truth);
    Ok(StepError {
        absolute,
        relative_pct: 100.0 * absolute as f64 / truth as f64,
    })
}

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new<S: ToString>(classes: &[S]) -> Self {
        let k = classes.len();
        Self {
            classes: classes.iter().map(ToString::to_string).collect(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Invalid(format!("label `{label}` is not among the matrix classes")))
    }

    pub fn add(&mut self, actual: &str, predicted: &str) -> Result<()> {
        let (a, p) = (self.index_of(actual)?, self.index_of(predicted)?);
        self.counts[a][p] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Invalid("cannot merge matrices over different classes".into()));
        }
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes.len()).map(|c| self.counts[c][c]).sum();
        ratio(diag, self.total())
    }

    pub fn recall(&self, c: usize) -> f64 {
        ratio(self.counts[c][c], self.row_sum(c))
    }

    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.counts[c][c], self.col_sum(c))
    }

    /// Off-diagonal cells as `(actual, predicted, count)`, largest first;
    /// equal counts keep row-major order.
    pub fn off_diagonal_ranked(&self) -> Vec<(usize, usize, u64)> {
        let k = self.classes.len();
        let mut cells: Vec<(usize, usize, u64)> = (0..k)
            .flat_map(|a| (0..k).filter(move |&p| p != a).map(move |p| (a, p)))
            .map(|(a, p)| (a, p, self.counts[a][p]))
            .collect();
        cells.sort_by(|x, y| y.2.cmp(&x.2));
        cells
    }

    /// Square CSV with class names along the header row and first column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["actual\\predicted".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.classes.iter().map(String::len).max().unwrap_or(0).max(6);
        write!(f, "{:>width$}", "")?;
        for k in 0..self.classes.len() {
            write!(f, " {:>6}", k + 1)?;
        }
        writeln!(f, " {:>7}", "recall")?;
        for (k, name) in self.classes.iter().enumerate() {
            write!(f, "{name:>width$}")?;
            for v in &self.counts[k] {
                write!(f, " {v:>6}")?;
            }
            writeln!(f, " {:>7.3}", self.recall(k))?;
        }
        write!(f, "{:>width$}", "prec.")?;
        for k in 0..self.classes.len() {
            write!(f, " {:>6.3}", self.precision(k))?;
        }
        writeln!(f)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion over two timelines that share the same window grid.
pub fn confusion<L: fmt::Display>(pred: &LabelTimeline<L>, truth: &LabelTimeline<L>, classes: &[L]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "timelines are not aligned: {} predicted vs {} true entries",
            pred.len(),
            truth.len()
        )));
    }
    let mut m = ConfusionMatrix::new(classes);
    for (p, t) in pred.entries().iter().zip(truth.entries()) {
        if (p.t_start - t.t_start).abs() > 1e-9 || (p.t_end - t.t_end).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "timelines are not aligned at [{}, {}]",
                t.t_start, t.t_end
            )));
        }
        m.add(&t.label.to_string(), &p.label.to_string())?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn add(&self, other: &MatchReport) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

impl fmt::Display for MatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>4} {:>4} {:>4}  {:>9.2} {:>6.2} {:>8.2}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

/// Truth visits in order each take the closest still-unmatched predicted
/// visit within `threshold_m`. Returns the report and the matched
/// `(truth, predicted)` index pairs.
pub fn match_visits_detailed(pred: &[Visit], truth: &[Visit], threshold_m: f64) -> (MatchReport, Vec<(usize, usize)>) {
    let mut taken = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        let best = pred
            .iter()
            .enumerate()
            .filter(|(pi, _)| !taken[*pi])
            .map(|(pi, p)| (pi, haversine_m(t.lat, t.lon, p.lat, p.lon)))
            .filter(|&(_, d)| d <= threshold_m)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((pi, _)) = best {
            taken[pi] = true;
            pairs.push((ti, pi));
        }
    }
    let tp = pairs.len() as u64;
    (
        MatchReport::from_counts(tp, pred.len() as u64 - tp, truth.len() as u64 - tp),
        pairs,
    )
}

pub fn match_visits(pred: &[Visit], truth: &[Visit], threshold_m: f64) -> MatchReport {
    match_visits_detailed(pred, truth, threshold_m).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Vehicle,
    NonVehicle,
}

/// Which transport classes count as vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleGrouping {
    pub vehicle: Vec<TransportLabel>,
}

impl Default for VehicleGrouping {
    fn default() -> Self {
        Self {
            vehicle: vec![TransportLabel::Car, TransportLabel::Bus, TransportLabel::TrainSubway],
        }
    }
}

impl VehicleGrouping {
    pub fn class_of(&self, label: TransportLabel) -> VehicleClass {
        if self.vehicle.contains(&label) {
            VehicleClass::Vehicle
        } else {
            VehicleClass::NonVehicle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    pub report: MatchReport,
    pub tn: u64,
    pub accuracy: f64,
}

/// Collapses a transport confusion matrix to vehicle vs non-vehicle and
/// scores the vehicle class.
pub fn vehicle_rollup(matrix: &ConfusionMatrix, grouping: &VehicleGrouping) -> Result<VehicleReport> {
    let vehicle: Vec<bool> = matrix
        .classes
        .iter()
        .map(|c| c.parse::<TransportLabel>().map(|l| grouping.class_of(l) == VehicleClass::Vehicle))
        .collect::<Result<_>>()?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (a, row) in matrix.counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            match (vehicle[a], vehicle[p]) {
                (true, true) => tp += n,
                (false, true) => fp += n,
                (true, false) => fn_ += n,
                (false, false) => tn += n,
            }
        }
    }
    Ok(VehicleReport {
        report: MatchReport::from_counts(tp, fp, fn_),
        tn,
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    })
}
