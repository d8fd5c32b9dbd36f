//! Link-prediction metrics, threshold sweeps and phase timing.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{metric} needs both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { metric: &'static str, positives: usize, negatives: usize },
    #[error("{0} scores for {1} labels")]
    Length(usize, usize),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("all scores are equal; no threshold separates the classes")]
    Degenerate,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Length(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// ROC AUC by the rank-sum formula; tied scores share their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass { metric: "auc", positives: pos, negatives: neg });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision `Σ (R_k − R_{k−1}) P_k`, ranking by score descending
/// and breaking ties by index ascending.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 {
        return Err(MetricError::SingleClass { metric: "average precision", positives: 0, negatives: neg });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholded {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub confusion: Confusion,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

/// Metrics from a confusion matrix. Empty denominators give 0.
pub fn from_confusion(c: Confusion) -> Thresholded {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let accuracy = ratio(c.tp + c.tn, c.total());
    let [tp, fp, tn, fn_] = [c.tp, c.fp, c.tn, c.fn_].map(|v| v as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if denom == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / denom.sqrt() };
    Thresholded { precision, recall, f1, accuracy, mcc, confusion: c }
}

/// Predicts positive when `score >= t`.
pub fn thresholded_metrics(scores: &[f64], labels: &[bool], t: f64) -> Result<Thresholded, MetricError> {
    check(scores, labels)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(MetricError::Threshold(t));
    }
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= t, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(from_confusion(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    F1,
    Mcc,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f1" => Ok(Self::F1),
            "mcc" => Ok(Self::Mcc),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F1 => "f1",
            Self::Mcc => "mcc",
        })
    }
}

/// The grid `0.00, 0.01, ..., 1.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Grid threshold maximizing the objective; ties go to the threshold
/// nearest 0.5, then the lower one.
pub fn tune_threshold(scores: &[f64], labels: &[bool], grid: &[f64], objective: Objective) -> Result<f64, MetricError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass { metric: "threshold tuning", positives: pos, negatives: neg });
    }
    if scores.iter().all(|&s| s == scores[0]) {
        return Err(MetricError::Degenerate);
    }
    let mut best: Option<(f64, f64)> = None;
    for &t in grid {
        let m = thresholded_metrics(scores, labels, t)?;
        let value = match objective {
            Objective::F1 => m.f1,
            Objective::Mcc => m.mcc,
        };
        let better = match best {
            None => true,
            Some((bv, bt)) => value > bv || (value == bv && (t - 0.5).abs() < (bt - 0.5).abs()),
        };
        if better {
            best = Some((value, t));
        }
    }
    best.map(|(_, t)| t).ok_or(MetricError::Degenerate)
}

/// Runs `f` and returns its result with the elapsed wall-clock seconds.
pub fn timing<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub train_time_s: f64,
    pub infer_time_s: f64,
    pub epochs_run: usize,
}

impl EvalReport {
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self, MetricError> {
        let m = thresholded_metrics(scores, labels, threshold)?;
        Ok(Self {
            auc: auc(scores, labels)?,
            ap: average_precision(scores, labels)?,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            mcc: m.mcc,
            threshold,
            confusion: m.confusion,
            train_time_s: 0.0,
            infer_time_s: 0.0,
            epochs_run: 0,
        })
    }

    /// One row of the results table; see [`RESULTS_HEADER`].
    pub fn results_row(&self, model: &str, dataset: &str, seed: impl fmt::Display) -> String {
        format!(
            "{model},{dataset},{seed},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.2},{:.6},{:.6},{}",
            self.auc,
            self.ap,
            self.precision,
            self.recall,
            self.f1,
            self.accuracy,
            self.mcc,
            self.threshold,
            self.train_time_s,
            self.infer_time_s,
            self.epochs_run
        )
    }

    /// Field-wise mean of several reports; confusion counts are summed.
    pub fn mean(reports: &[EvalReport]) -> Option<EvalReport> {
        let n = reports.len() as f64;
        reports.first()?;
        let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut confusion = Confusion::default();
        for r in reports {
            confusion.tp += r.confusion.tp;
            confusion.fp += r.confusion.fp;
            confusion.tn += r.confusion.tn;
            confusion.fn_ += r.confusion.fn_;
        }
        Some(EvalReport {
            auc: avg(|r| r.auc),
            ap: avg(|r| r.ap),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            accuracy: avg(|r| r.accuracy),
            mcc: avg(|r| r.mcc),
            threshold: avg(|r| r.threshold),
            confusion,
            train_time_s: avg(|r| r.train_time_s),
            infer_time_s: avg(|r| r.infer_time_s),
            epochs_run: (reports.iter().map(|r| r.epochs_run).sum::<usize>() as f64 / n).round() as usize,
        })
    }
}

pub const RESULTS_HEADER: &str = "model,dataset,seed,auc,ap,precision,recall,f1,accuracy,mcc,threshold,train_s,infer_s,epochs";

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.confusion;
        write!(
            f,
            "auc={:.4} ap={:.4} precision={:.4} recall={:.4} f1={:.4} accuracy={:.4} mcc={:.4} threshold={:.2} \
             tp={} fp={} tn={} fn={} train_s={:.3} infer_s={:.4} epochs={}",
            self.auc,
            self.ap,
            self.precision,
            self.recall,
            self.f1,
            self.accuracy,
            self.mcc,
            self.threshold,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            self.train_time_s,
            self.infer_time_s,
            self.epochs_run
        )
    }
}
