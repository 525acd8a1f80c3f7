//! Soft-margin kernel SVM trained by SMO, and a one-vs-one wrapper.
//!
//! The binary solver minimises `½ αᵀQα − eᵀα` subject to `yᵀα = 0`,
//! `0 ≤ α ≤ C`, with `Q_ij = y_i y_j K(x_i, x_j)`. Working pairs are chosen
//! by maximal violation for `i` and second-order gain for `j`; the solver
//! is fully deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, StandardizationParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const TAU: f64 = 1e-12;
/// Above this many rows the kernel matrix is not materialised.
const DENSE_KERNEL_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice before training; `Rbf { gamma: None }` uses
/// `1 / (d · mean per-dimension variance)` of the training rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            kernel: KernelSpec::Rbf { gamma: None },
            tol: 1e-3,
            max_iter: None,
        }
    }
}

/// `1 / (d · mean per-dimension variance)`, or 1 for degenerate data.
pub fn auto_gamma(rows: &[Vec<f64>]) -> f64 {
    let Some(d) = rows.first().map(Vec::len) else {
        return 1.0;
    };
    if d == 0 {
        return 1.0;
    }
    let n = rows.len() as f64;
    let mut total_var = 0.0;
    for k in 0..d {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        total_var += rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
    }
    let mean_var = total_var / d as f64;
    if mean_var > 0.0 {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0
    }
}

pub fn resolve_kernel(spec: KernelSpec, rows: &[Vec<f64>]) -> Result<Kernel> {
    match spec {
        KernelSpec::Linear => Ok(Kernel::Linear),
        KernelSpec::Rbf { gamma: Some(g) } if g > 0.0 && g.is_finite() => Ok(Kernel::Rbf { gamma: g }),
        KernelSpec::Rbf { gamma: Some(g) } => Err(Error::param("gamma", format!("{g} must be positive"))),
        KernelSpec::Rbf { gamma: None } => Ok(Kernel::Rbf {
            gamma: auto_gamma(rows),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// ±1 per support vector.
    pub labels: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
}

impl BinarySvm {
    /// `Σ αᵢ yᵢ K(svᵢ, x) + bias`.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .zip(&self.labels)
            .map(|((sv, a), y)| a * y * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

enum KernelRows<'a> {
    Dense(Vec<f64>),
    Lazy {
        x: &'a [Vec<f64>],
        cache: Vec<(usize, Vec<f64>)>,
    },
}

struct QMatrix<'a> {
    n: usize,
    kernel: Kernel,
    y: &'a [f64],
    rows: KernelRows<'a>,
    diag: Vec<f64>,
}

impl<'a> QMatrix<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], kernel: Kernel) -> Self {
        Self::build(x, y, kernel, x.len() <= DENSE_KERNEL_LIMIT)
    }

    fn build(x: &'a [Vec<f64>], y: &'a [f64], kernel: Kernel, dense: bool) -> Self {
        let n = x.len();
        let diag = x.iter().map(|r| kernel.eval(r, r)).collect();
        let rows = if dense {
            let mut k = vec![0.0; n * n];
            k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for j in 0..n {
                    row[j] = y[i] * y[j] * kernel.eval(&x[i], &x[j]);
                }
            });
            KernelRows::Dense(k)
        } else {
            KernelRows::Lazy { x, cache: Vec::new() }
        };
        Self { n, kernel, y, rows, diag }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        let n = self.n;
        match &mut self.rows {
            KernelRows::Dense(k) => &k[i * n..(i + 1) * n],
            KernelRows::Lazy { x, cache } => {
                if let Some(pos) = cache.iter().position(|(idx, _)| *idx == i) {
                    let entry = cache.remove(pos);
                    cache.push(entry);
                } else {
                    let (kernel, y) = (self.kernel, self.y);
                    let xi = &x[i];
                    let row: Vec<f64> = x
                        .par_iter()
                        .enumerate()
                        .map(|(j, xj)| y[i] * y[j] * kernel.eval(xi, xj))
                        .collect();
                    // keep roughly 256 MB of rows
                    let cap = ((256usize << 20) / (8 * n)).max(2);
                    if cache.len() >= cap {
                        cache.remove(0);
                    }
                    cache.push((i, row));
                }
                &cache.last().expect("row just inserted").1
            }
        }
    }
}

/// Trains a binary SVM. Labels must be exactly ±1 and both classes present.
pub fn train_binary(x: &[Vec<f64>], y: &[f64], c: f64, kernel: Kernel, tol: f64, max_iter: Option<usize>) -> Result<BinarySvm> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Training(format!("{n} rows but {} labels", y.len())));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("C", format!("{c} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("{tol} must be positive")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Training("both classes must be present".into()));
    }
    if let Some(d) = x.first().map(Vec::len) {
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::Training("rows have differing dimension".into()));
        }
    }

    let mut q = QMatrix::new(x, y, kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = max_iter.unwrap_or_else(|| (100 * n).max(10_000_000));
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    while iter < max_iter {
        // i: maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let qi = q.row(i).to_vec();

        // j: best second-order gain in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let b = gmax + yg;
            if b > 0.0 {
                let a = q.diag[i] + q.diag[t] - 2.0 * y[i] * y[t] * qi[t];
                let a = if a > 0.0 { a } else { TAU };
                let obj = -(b * b) / a;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < tol {
            break;
        }
        iter += 1;

        let qj = q.row(j).to_vec();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = q.diag[i] + q.diag[j] + 2.0 * qi[j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = q.diag[i] + q.diag[j] - 2.0 * qi[j];
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }
    if iter >= max_iter {
        log::warn!("SMO stopped at the iteration limit ({max_iter}) before reaching tolerance {tol}");
    }

    // rho from free SVs, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let mut model = BinarySvm {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        labels: Vec::new(),
        bias: -rho,
        kernel,
        c,
    };
    for t in 0..n {
        if alpha[t] > 0.0 {
            model.support_vectors.push(x[t].clone());
            model.alphas.push(alpha[t]);
            model.labels.push(y[t]);
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub i: usize,
    pub j: usize,
    /// Positive decision values vote for class `i`.
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoSvmModel {
    pub format_version: u32,
    pub schema_id: String,
    pub classes: Vec<String>,
    pub standardization: StandardizationParams,
    pub pairwise: Vec<PairModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<usize>,
    /// Sum of |decision value| over the pairs each class won.
    pub strength: Vec<f64>,
}

impl Prediction {
    pub fn margin(&self) -> f64 {
        self.strength[self.class]
    }
}

/// Trains on rows that are already standardised; `labels[k]` indexes
/// `classes`.
pub fn train_ovo_rows(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, params: &SvmParams) -> Result<(Kernel, Vec<PairModel>)> {
    if n_classes < 2 {
        return Err(Error::Training("at least two classes are required".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Training(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (k, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or_else(|| Error::Training(format!("label index {l} out of range")))?
            .push(k);
    }
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Training(format!("class {empty} has no training rows")));
    }
    let kernel = resolve_kernel(params.kernel, rows)?;
    let pairs: Vec<(usize, usize)> = (0..n_classes)
        .flat_map(|i| ((i + 1)..n_classes).map(move |j| (i, j)))
        .collect();
    let models = pairs
        .par_iter()
        .map(|&(i, j)| {
            let idx: Vec<usize> = by_class[i].iter().chain(&by_class[j]).copied().collect();
            let x: Vec<Vec<f64>> = idx.iter().map(|&k| rows[k].clone()).collect();
            let y: Vec<f64> = idx.iter().map(|&k| if labels[k] == i { 1.0 } else { -1.0 }).collect();
            let svm = train_binary(&x, &y, params.c, kernel, params.tol, params.max_iter)?;
            Ok(PairModel { i, j, svm })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((kernel, models))
}

/// Fits standardisation on `rows`, then one binary SVM per class pair.
pub fn train_ovo<S: AsRef<str>>(rows: &[FeatureVector], labels: &[S], classes: &[String], params: &SvmParams) -> Result<OvoSvmModel> {
    if rows.len() != labels.len() {
        return Err(Error::Training(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    let std = StandardizationParams::fit(rows)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| std.apply(r).map(|v| v.values)).collect::<Result<_>>()?;
    let y: Vec<usize> = labels
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l.as_ref())
                .ok_or_else(|| Error::Training(format!("label `{}` is not among the classes", l.as_ref())))
        })
        .collect::<Result<_>>()?;
    let (_, pairwise) = train_ovo_rows(&x, &y, classes.len(), params)?;
    Ok(OvoSvmModel {
        format_version: MODEL_FORMAT_VERSION,
        schema_id: std.schema_id.clone(),
        classes: classes.to_vec(),
        standardization: std,
        pairwise,
    })
}

/// Pairwise vote over already-standardised `x`. Ties go to the largest
/// summed |decision value| over won pairs, then to the earlier class.
pub fn vote(pairwise: &[PairModel], n_classes: usize, x: &[f64]) -> Prediction {
    let mut votes = vec![0usize; n_classes];
    let mut strength = vec![0.0; n_classes];
    for p in pairwise {
        let dv = p.svm.decision_value(x);
        let winner = if dv > 0.0 { p.i } else { p.j };
        votes[winner] += 1;
        strength[winner] += dv.abs();
    }
    let mut best = 0;
    for k in 1..n_classes {
        if votes[k] > votes[best] || (votes[k] == votes[best] && strength[k] > strength[best]) {
            best = k;
        }
    }
    Prediction {
        class: best,
        votes,
        strength,
    }
}

impl OvoSvmModel {
    /// Prediction on an already-standardised vector.
    pub fn predict_ovo(&self, x: &[f64]) -> Prediction {
        vote(&self.pairwise, self.classes.len(), x)
    }

    /// Standardises a raw feature vector and predicts.
    pub fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        let z = self.standardization.apply(v)?;
        Ok(self.predict_ovo(&z.values))
    }

    pub fn predict_label(&self, v: &FeatureVector) -> Result<&str> {
        Ok(&self.classes[self.predict(v)?.class])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        let k = m.classes.len();
        if m.pairwise.len() != k * (k.saturating_sub(1)) / 2 {
            return Err(Error::Model(format!("{} pairwise models for {k} classes", m.pairwise.len())));
        }
        if m.standardization.mean.len() != m.standardization.std.len() {
            return Err(Error::Model("standardization mean/std lengths differ".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Json(j) => Error::Model(format!("{}: {j}", path.display())),
            other => other,
        })
    }
}
