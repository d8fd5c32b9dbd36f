//! Training configuration and bookkeeping shared by both link predictors.

use std::io::Write;
use std::rc::Rc;

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::graph::{normalized_adjacency, AttributedGraph};
use crate::metrics::{default_grid, MetricError, Objective};
use crate::nn::{AttentionEdges, NnError, Tensor};
use crate::sparse::SparseMatrix;
use crate::split::Pair;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: NnError },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("estimated cost {estimate:.0} exceeds the limit {limit:.0} (use --force to run anyway)")]
    TooCostly { estimate: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Training stops once this many consecutive epochs fail to improve the
    /// validation AUC and one more has run.
    pub patience: usize,
    /// KL weight; `None` means `1 / n_nodes`.
    pub kl_weight: Option<f64>,
    pub weight_decay: f64,
    pub seed: u64,
    pub hidden: usize,
    pub latent: usize,
    pub attention_dim: usize,
    /// Learnable per-node input embedding added to the projected features.
    pub node_embedding: bool,
    pub threshold_grid: Vec<f64>,
    pub objective: Objective,
    pub batch_size: usize,
    pub hops: usize,
    /// Use `Â` instead of raw neighbor sums in SEAL's layers.
    pub normalized: bool,
    pub max_label: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::vgae()
    }
}

const TRAIN_KEYS: &[&str] = &[
    "lr",
    "max_epochs",
    "patience",
    "kl_weight",
    "weight_decay",
    "seed",
    "hidden",
    "latent",
    "attention_dim",
    "node_embedding",
    "objective",
    "batch_size",
    "hops",
    "normalized",
    "max_label",
];

impl TrainConfig {
    pub fn vgae() -> Self {
        Self {
            lr: 0.03,
            max_epochs: 200,
            patience: 15,
            kl_weight: None,
            weight_decay: 0.0,
            seed: 1,
            hidden: 64,
            latent: 32,
            attention_dim: 8,
            node_embedding: true,
            threshold_grid: default_grid(),
            objective: Objective::F1,
            batch_size: 32,
            hops: 1,
            normalized: false,
            max_label: 6,
        }
    }

    pub fn seal() -> Self {
        Self { lr: 0.005, max_epochs: 60, patience: 8, weight_decay: 5e-4, hidden: 32, ..Self::vgae() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ConfigError::field("lr", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(ConfigError::field("max_epochs", "must be positive"));
        }
        if self.patience >= self.max_epochs {
            return Err(ConfigError::field("patience", "must be below max_epochs"));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("attention_dim", self.attention_dim),
            ("batch_size", self.batch_size),
            ("hops", self.hops),
        ] {
            if v == 0 {
                return Err(ConfigError::field(name, "must be positive"));
            }
        }
        if let Some(w) = self.kl_weight {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ConfigError::field("kl_weight", "must be nonnegative"));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(ConfigError::field("weight_decay", "must be nonnegative"));
        }
        if self.threshold_grid.is_empty() || self.threshold_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ConfigError::field("threshold_grid", "must be a nonempty subset of [0, 1]"));
        }
        Ok(())
    }

    /// Every key accepted by [`TrainConfig::apply`].
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("lr", self.lr);
        kv.set("max_epochs", self.max_epochs);
        kv.set("patience", self.patience);
        kv.set("kl_weight", self.kl_weight.map_or_else(|| "auto".to_string(), |w| w.to_string()));
        kv.set("weight_decay", self.weight_decay);
        kv.set("seed", self.seed);
        kv.set("hidden", self.hidden);
        kv.set("latent", self.latent);
        kv.set("attention_dim", self.attention_dim);
        kv.set("node_embedding", self.node_embedding);
        kv.set("objective", self.objective);
        kv.set("batch_size", self.batch_size);
        kv.set("hops", self.hops);
        kv.set("normalized", self.normalized);
        kv.set("max_label", self.max_label);
        kv
    }

    /// Overrides fields from `key = value` text on top of `self`.
    pub fn apply(mut self, kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.only(TRAIN_KEYS)?;
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = kv.parsed(stringify!($field))? {
                    self.$field = v;
                }
            )*};
        }
        take!(lr, max_epochs, patience, weight_decay, seed, hidden, latent, attention_dim, node_embedding);
        take!(batch_size, hops, normalized, max_label);
        if let Some(v) = kv.get("kl_weight") {
            self.kl_weight = match v {
                "auto" => None,
                _ => Some(v.parse().map_err(|_| ConfigError::field("kl_weight", format!("cannot parse {v:?}")))?),
            };
        }
        if let Some(v) = kv.get("objective") {
            self.objective = v.parse().map_err(|e: String| ConfigError::field("objective", e))?;
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss: f64,
    pub auc: f64,
    pub ap: f64,
}

pub const CURVE_HEADER: &str = "epoch,loss,auc,ap";

pub fn write_curve<W: Write>(curve: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in curve {
        writeln!(out, "{},{},{},{}", r.epoch, r.loss, r.auc, r.ap)?;
    }
    Ok(())
}

/// Early stopping on a score to maximize.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::NEG_INFINITY, best_epoch: 0, since_best: 0 }
    }

    /// Records the score of `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best > self.patience)
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Column-wise z-scores; constant columns become 0.
pub fn standardize(t: &Tensor) -> Tensor {
    let [rows, cols] = t.shape();
    let mut out = t.clone();
    if rows == 0 {
        return out;
    }
    for c in 0..cols {
        let mean = (0..rows).map(|r| t.get(r, c)).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (t.get(r, c) - mean).powi(2)).sum::<f64>() / rows as f64;
        let sd = var.sqrt();
        for r in 0..rows {
            out.set(r, c, if sd > 1e-12 { (t.get(r, c) - mean) / sd } else { 0.0 });
        }
    }
    out
}

/// Model inputs for one graph and one set of message edges.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub n_nodes: usize,
    /// Standardized node features.
    pub features: Tensor,
    /// Message edges in both directions, plus self-loops.
    pub attention: AttentionEdges,
    /// Standardized edge features aligned with `attention`, zero on self-loops.
    pub edge_feats: Tensor,
    pub a_hat: Rc<SparseMatrix>,
    pub message_edges: Vec<Pair>,
}

impl GraphInput {
    /// Edge features are standardized with statistics over every edge of
    /// `g`, so inputs built from different message sets share a scale.
    pub fn new(g: &AttributedGraph, message_edges: &[Pair]) -> Result<Self, ModelError> {
        let n = g.n_nodes();
        let node_rows: Vec<Vec<f64>> = g.nodes().iter().map(|v| v.features.clone()).collect();
        let features = if g.node_feature_width() == 0 {
            Tensor::zeros(n, 0)
        } else {
            standardize(&Tensor::from_rows(&node_rows)?)
        };

        let fe = g.edge_feature_width();
        let (mean, sd) = column_stats(g.edges().iter().map(|e| e.features.as_slice()), fe);
        let mut directed = Vec::with_capacity(2 * message_edges.len());
        let mut rows = Vec::with_capacity(2 * message_edges.len() * fe);
        for &(u, c) in message_edges {
            let e = g
                .edge_between(u, c)
                .ok_or_else(|| ModelError::Input(format!("message edge ({u}, {c}) is not in the graph")))?;
            let scaled: Vec<f64> = e
                .features
                .iter()
                .zip(mean.iter().zip(&sd))
                .map(|(v, (m, s))| if *s > 1e-12 { (v - m) / s } else { 0.0 })
                .collect();
            for pair in [(u, c), (c, u)] {
                directed.push(pair);
                rows.extend_from_slice(&scaled);
            }
        }
        let attention = AttentionEdges::new(n, &directed)?;
        let edge_feats = attention.pad_features(&Tensor::from_vec(directed.len(), fe, rows)?)?;
        let a_hat = Rc::new(normalized_adjacency(&g.with_edge_subset(message_edges)));
        Ok(Self { n_nodes: n, features, attention, edge_feats, a_hat, message_edges: message_edges.to_vec() })
    }

    pub fn feature_width(&self) -> usize {
        self.features.cols()
    }

    pub fn edge_width(&self) -> usize {
        self.edge_feats.cols()
    }

    pub fn check_pairs(&self, pairs: &[Pair]) -> Result<(), ModelError> {
        match pairs.iter().flat_map(|&(u, v)| [u, v]).find(|&i| i >= self.n_nodes) {
            Some(i) => Err(ModelError::Input(format!("node index {i} out of range (< {})", self.n_nodes))),
            None => Ok(()),
        }
    }
}

pub(crate) fn column_stats<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<&[f64]> = rows.collect();
    let n = rows.len().max(1) as f64;
    let mean: Vec<f64> = (0..width).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let sd = (0..width)
        .map(|c| (rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    (mean, sd)
}
