//! Offline replay of proactive next-cell decisions.
//!
//! At each true handover the UE's last measurement report before the
//! change supplies the candidate cells. A [`LinkScorer`] scores the UE
//! against each non-serving candidate and the best one above the decision
//! threshold is the prediction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use crate::graph::{AttributedGraph, NodeKind};
use crate::metrics::timing;
use crate::nn::{decode_probabilities, Tensor};
use crate::seal::{Seal, SealContext};
use crate::synth::{HandoverEvent, MobilitySample, MobilityTrace};
use crate::train::{GraphInput, ModelError};
use crate::vgae::Vgae;

pub const DEFAULT_PINGPONG_WINDOW_S: f64 = 5.0;
pub const EVENT_LOG_HEADER: &str = "t,ue,from,to,predicted,correct,latency_s";

/// Scores a UE against candidate cells at a handover instant.
pub trait LinkScorer {
    /// One score in `[0, 1]` per cell, or `None` when the UE is unknown to
    /// the model. Cells the model has never seen should score 0.
    fn score(&self, event: &HandoverEvent, cells: &[u64]) -> Result<Option<Vec<f64>>, ModelError>;
}

/// Scores 1 for the true target and 0 elsewhere.
pub struct OracleScorer;

impl LinkScorer for OracleScorer {
    fn score(&self, event: &HandoverEvent, cells: &[u64]) -> Result<Option<Vec<f64>>, ModelError> {
        Ok(Some(cells.iter().map(|&c| f64::from(u8::from(c == event.to_cell))).collect()))
    }
}

/// Inner-product scores from fixed node embeddings of a graph.
pub struct EmbeddingScorer<'g> {
    graph: &'g AttributedGraph,
    z: Tensor,
}

impl<'g> EmbeddingScorer<'g> {
    pub fn new(graph: &'g AttributedGraph, z: Tensor) -> Self {
        Self { graph, z }
    }

    /// Mean VGAE embeddings computed over every edge of `graph`.
    pub fn vgae(model: &Vgae, graph: &'g AttributedGraph) -> Result<Self, ModelError> {
        let input = GraphInput::new(graph, &graph.edge_pairs())?;
        Ok(Self::new(graph, model.embed(&input)?))
    }
}

impl LinkScorer for EmbeddingScorer<'_> {
    fn score(&self, event: &HandoverEvent, cells: &[u64]) -> Result<Option<Vec<f64>>, ModelError> {
        let Some(u) = self.graph.node_of_raw(NodeKind::Ue, event.ue) else {
            return Ok(None);
        };
        let nodes: Vec<Option<usize>> = cells.iter().map(|&c| self.graph.node_of_raw(NodeKind::Cell, c)).collect();
        let pairs: Vec<(usize, usize)> = nodes.iter().flatten().map(|&c| (u, c)).collect();
        let mut known = decode_probabilities(&self.z, &pairs)?.into_iter();
        Ok(Some(nodes.iter().map(|n| if n.is_some() { known.next().unwrap_or(0.0) } else { 0.0 }).collect()))
    }
}

/// SEAL scores on enclosing subgraphs of the full graph.
pub struct SealScorer<'g> {
    graph: &'g AttributedGraph,
    ctx: SealContext,
    model: &'g Seal,
}

impl<'g> SealScorer<'g> {
    pub fn new(model: &'g Seal, graph: &'g AttributedGraph) -> Result<Self, ModelError> {
        Ok(Self { graph, ctx: SealContext::new(graph, &graph.edge_pairs())?, model })
    }
}

impl LinkScorer for SealScorer<'_> {
    fn score(&self, event: &HandoverEvent, cells: &[u64]) -> Result<Option<Vec<f64>>, ModelError> {
        let Some(u) = self.graph.node_of_raw(NodeKind::Ue, event.ue) else {
            return Ok(None);
        };
        let nodes: Vec<Option<usize>> = cells.iter().map(|&c| self.graph.node_of_raw(NodeKind::Cell, c)).collect();
        let pairs: Vec<(usize, usize)> = nodes.iter().flatten().map(|&c| (u, c)).collect();
        let mut known = self.model.predict_links(&self.ctx, &pairs)?.into_iter();
        Ok(Some(nodes.iter().map(|n| if n.is_some() { known.next().unwrap_or(0.0) } else { 0.0 }).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    pub threshold: f64,
    pub pingpong_window_s: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { threshold: 0.5, pingpong_window_s: DEFAULT_PINGPONG_WINDOW_S }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ModelError::Input(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if !(self.pingpong_window_s > 0.0) {
            return Err(ModelError::Input(format!("ping-pong window {} must be positive", self.pingpong_window_s)));
        }
        Ok(())
    }
}

/// Outcome of one handover decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub event: HandoverEvent,
    pub predicted: Option<u64>,
    pub correct: bool,
    pub predictable: bool,
    pub pingpong: bool,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    /// Correct decisions over predictable events; 1.0 when there are none.
    pub next_cell_accuracy: f64,
    pub handover_count: usize,
    pub predictable_count: usize,
    pub unpredictable_count: usize,
    /// Predictions that send the UE back to the cell it left within the window.
    pub pingpong_count: usize,
    pub mean_decision_latency_s: f64,
    pub max_decision_latency_s: f64,
    pub no_events: bool,
    pub decisions: Vec<Decision>,
}

impl ReplayReport {
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{EVENT_LOG_HEADER}")?;
        for d in &self.decisions {
            let e = &d.event;
            let predicted = d.predicted.map(|c| c.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{},{:.9}", e.t, e.ue, e.from_cell, e.to_cell, predicted, d.correct, d.latency_s)?;
        }
        Ok(())
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy={:.6} handovers={} predictable={} unpredictable={} pingpong={} mean_latency_s={:.6} max_latency_s={:.6} no_events={}",
            self.next_cell_accuracy,
            self.handover_count,
            self.predictable_count,
            self.unpredictable_count,
            self.pingpong_count,
            self.mean_decision_latency_s,
            self.max_decision_latency_s,
            self.no_events
        )
    }
}

/// Replays `events` against the measurement reports in `trace`.
pub fn replay(
    trace: &MobilityTrace,
    events: &[HandoverEvent],
    scorer: &dyn LinkScorer,
    cfg: &ReplayConfig,
) -> Result<ReplayReport, ModelError> {
    cfg.validate()?;
    let mut by_ue: HashMap<u64, Vec<&MobilitySample>> = HashMap::new();
    for s in trace.samples() {
        by_ue.entry(s.ue).or_default().push(s);
    }
    // Per UE: time of the last handover and the cell it left.
    let mut last_change: HashMap<u64, (f64, u64)> = HashMap::new();
    let mut decisions = Vec::with_capacity(events.len());
    for e in events {
        let report = by_ue.get(&e.ue).and_then(|samples| {
            let idx = samples.partition_point(|s| s.t < e.t);
            idx.checked_sub(1).map(|i| samples[i])
        });
        let cells: Vec<u64> = report
            .map(|s| s.candidate_ids().filter(|&c| c != e.from_cell).collect())
            .unwrap_or_default();
        let (scores, latency_s) = timing(|| scorer.score(e, &cells));
        let scores = scores?;
        let predicted = scores.as_ref().and_then(|scores| {
            cells
                .iter()
                .zip(scores)
                .filter(|(_, &s)| s >= cfg.threshold)
                .fold(None, |best: Option<(u64, f64)>, (&c, &s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((c, s)),
                })
                .map(|(c, _)| c)
        });
        let pingpong = match (predicted, last_change.get(&e.ue)) {
            (Some(p), Some(&(t, left))) => p == left && e.t - t <= cfg.pingpong_window_s,
            _ => false,
        };
        last_change.insert(e.ue, (e.t, e.from_cell));
        decisions.push(Decision {
            event: *e,
            predicted,
            correct: predicted == Some(e.to_cell),
            predictable: scores.is_some(),
            pingpong,
            latency_s,
        });
    }
    let predictable: Vec<&Decision> = decisions.iter().filter(|d| d.predictable).collect();
    let correct = predictable.iter().filter(|d| d.correct).count();
    let latencies: Vec<f64> = predictable.iter().map(|d| d.latency_s).collect();
    Ok(ReplayReport {
        next_cell_accuracy: if predictable.is_empty() { 1.0 } else { correct as f64 / predictable.len() as f64 },
        handover_count: decisions.len(),
        predictable_count: predictable.len(),
        unpredictable_count: decisions.len() - predictable.len(),
        pingpong_count: decisions.iter().filter(|d| d.pingpong).count(),
        mean_decision_latency_s: if latencies.is_empty() { 0.0 } else { latencies.iter().sum::<f64>() / latencies.len() as f64 },
        max_decision_latency_s: latencies.iter().copied().fold(0.0, f64::max),
        no_events: decisions.is_empty(),
        decisions,
    })
}

fn majority_targets(history: &[HandoverEvent]) -> (HashMap<u64, u64>, Option<u64>) {
    let mut per_ue: HashMap<u64, BTreeMap<u64, usize>> = HashMap::new();
    let mut overall: BTreeMap<u64, usize> = BTreeMap::new();
    for e in history {
        *per_ue.entry(e.ue).or_default().entry(e.to_cell).or_default() += 1;
        *overall.entry(e.to_cell).or_default() += 1;
    }
    // Ties go to the smallest cell id.
    let top = |counts: &BTreeMap<u64, usize>| counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&c, _)| c);
    (per_ue.iter().filter_map(|(&ue, counts)| Some((ue, top(counts)?))).collect(), top(&overall))
}

/// Accuracy on `truth` of predicting each UE's most frequent target in
/// `history`, falling back to the most frequent target overall.
pub fn baseline_next_cell(history: &[HandoverEvent], truth: &[HandoverEvent]) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let (per_ue, overall) = majority_targets(history);
    let hits = truth.iter().filter(|e| per_ue.get(&e.ue).copied().or(overall) == Some(e.to_cell)).count();
    Some(hits as f64 / truth.len() as f64)
}
