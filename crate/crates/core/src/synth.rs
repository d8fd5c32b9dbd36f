//! Synthetic EM-like cellular scenarios.
//!
//! Cells sit on a hexagonal grid; UEs follow random-waypoint motion. RSRP
//! comes from log-distance path loss (exponent 3.5) plus spatially
//! correlated log-normal shadowing (σ = 4 dB). The serving cell follows the
//! strongest cell with a 3 dB hysteresis. The remaining radio metrics are
//! drawn from RSRP-conditioned distributions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::graph::{homogenize, AttributedGraph, RawEdge, RawNode};

pub const PATH_LOSS_EXPONENT: f64 = 3.5;
pub const SHADOWING_SIGMA_DB: f64 = 4.0;
pub const HYSTERESIS_DB: f64 = 3.0;
/// Shadowing decorrelation distance in meters.
pub const SHADOWING_DECORRELATION_M: f64 = 50.0;
/// Cells within this margin of the strongest one are reported as candidates.
pub const MEASUREMENT_WINDOW_DB: f64 = 6.0;
/// RSRP at the 10 m reference distance is `REFERENCE_RSRP_DBM - 35 dB`.
const REFERENCE_RSRP_DBM: f64 = -25.0;
const MIN_DISTANCE_M: f64 = 10.0;

pub const RSRP_RANGE: (f64, f64) = (-140.0, -40.0);
pub const RSRQ_RANGE: (f64, f64) = (-20.0, -3.0);
pub const MAX_MCS: f64 = 28.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("infeasible geometry: {0}")]
    Geometry(String),
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_cells: usize,
    pub n_ues: usize,
    /// Side of the square deployment area.
    pub area_m: f64,
    pub cell_spacing_m: f64,
    /// Inclusive UE speed range `(min, max)`.
    pub speed_mps: (f64, f64),
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub max_neighbors: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    /// EM-scale scenario: 31 cells and 70 UEs.
    fn default() -> Self {
        Self {
            n_cells: 31,
            n_ues: 70,
            area_m: 3200.0,
            cell_spacing_m: 500.0,
            speed_mps: (0.5, 1.5),
            duration_s: 600.0,
            sample_period_s: 1.0,
            max_neighbors: 6,
            rng_seed: 1,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "n_cells",
    "n_ues",
    "area_m",
    "cell_spacing_m",
    "speed_min_mps",
    "speed_max_mps",
    "duration_s",
    "sample_period_s",
    "max_neighbors",
    "rng_seed",
];

impl ScenarioConfig {
    /// EM-scale defaults with the given seed.
    pub fn em(seed: u64) -> Self {
        Self { rng_seed: seed, ..Self::default() }
    }

    /// A scenario with `factor` times the cells and UEs of [`ScenarioConfig::em`]
    /// at the same cell and UE density.
    pub fn scaled_em(factor: f64, seed: u64) -> Self {
        let base = Self::em(seed);
        Self {
            n_cells: ((base.n_cells as f64) * factor).round() as usize,
            n_ues: ((base.n_ues as f64) * factor).round() as usize,
            area_m: base.area_m * factor.sqrt(),
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::field(field, format!("must be positive, got {v}")))
            }
        };
        if self.n_cells < 2 {
            return Err(ConfigError::field("n_cells", "at least two cells are needed"));
        }
        if self.n_ues == 0 {
            return Err(ConfigError::field("n_ues", "must be positive"));
        }
        positive("area_m", self.area_m)?;
        positive("cell_spacing_m", self.cell_spacing_m)?;
        positive("duration_s", self.duration_s)?;
        positive("sample_period_s", self.sample_period_s)?;
        let (lo, hi) = self.speed_mps;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return Err(ConfigError::field("speed_min_mps", format!("invalid speed range {lo}..{hi}")));
        }
        let steps = self.duration_s / self.sample_period_s;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(ConfigError::field("sample_period_s", "must divide duration_s"));
        }
        if self.max_neighbors < 2 {
            return Err(ConfigError::field("max_neighbors", "must be at least 2"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_s / self.sample_period_s).round() as usize
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.only(CONFIG_KEYS)?;
        let d = Self::default();
        let cfg = Self {
            n_cells: kv.parsed("n_cells")?.unwrap_or(d.n_cells),
            n_ues: kv.parsed("n_ues")?.unwrap_or(d.n_ues),
            area_m: kv.parsed("area_m")?.unwrap_or(d.area_m),
            cell_spacing_m: kv.parsed("cell_spacing_m")?.unwrap_or(d.cell_spacing_m),
            speed_mps: (
                kv.parsed("speed_min_mps")?.unwrap_or(d.speed_mps.0),
                kv.parsed("speed_max_mps")?.unwrap_or(d.speed_mps.1),
            ),
            duration_s: kv.parsed("duration_s")?.unwrap_or(d.duration_s),
            sample_period_s: kv.parsed("sample_period_s")?.unwrap_or(d.sample_period_s),
            max_neighbors: kv.parsed("max_neighbors")?.unwrap_or(d.max_neighbors),
            rng_seed: kv.parsed("rng_seed")?.unwrap_or(d.rng_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("n_cells", self.n_cells);
        kv.set("n_ues", self.n_ues);
        kv.set("area_m", self.area_m);
        kv.set("cell_spacing_m", self.cell_spacing_m);
        kv.set("speed_min_mps", self.speed_mps.0);
        kv.set("speed_max_mps", self.speed_mps.1);
        kv.set("duration_s", self.duration_s);
        kv.set("sample_period_s", self.sample_period_s);
        kv.set("max_neighbors", self.max_neighbors);
        kv.set("rng_seed", self.rng_seed);
        kv
    }
}

/// The eight per-link radio metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioFeatureVector {
    pub rsrp_dbm: f64,
    pub rsrq_db: f64,
    pub transport_blocks: f64,
    pub available_rbs: f64,
    pub packet_size_bytes: f64,
    pub mcs_index: f64,
    pub sig_pw_ul_dbm: f64,
    pub sig_pw_dl_dbm: f64,
}

impl RadioFeatureVector {
    pub const WIDTH: usize = 8;
    pub const NAMES: [&'static str; 8] = ["rsrp", "rsrq", "tb", "arb", "pkt", "mcs", "ul", "dl"];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.rsrp_dbm,
            self.rsrq_db,
            self.transport_blocks,
            self.available_rbs,
            self.packet_size_bytes,
            self.mcs_index,
            self.sig_pw_ul_dbm,
            self.sig_pw_dl_dbm,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            rsrp_dbm: a[0],
            rsrq_db: a[1],
            transport_blocks: a[2],
            available_rbs: a[3],
            packet_size_bytes: a[4],
            mcs_index: a[5],
            sig_pw_ul_dbm: a[6],
            sig_pw_dl_dbm: a[7],
        }
    }

    /// Range invariants on RSRP, RSRQ, MCS and nonnegative counts.
    pub fn is_valid(&self) -> bool {
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        in_range(self.rsrp_dbm, RSRP_RANGE)
            && in_range(self.rsrq_db, RSRQ_RANGE)
            && in_range(self.mcs_index, (0.0, MAX_MCS))
            && self.transport_blocks >= 0.0
            && self.available_rbs >= 0.0
            && self.packet_size_bytes >= 0.0
            && self.to_array().iter().all(|v| v.is_finite())
    }

    /// Draws the RSRP-conditioned metrics for a link with the given RSRP.
    pub fn sample<R: Rng>(rsrp_dbm: f64, rng: &mut R) -> Self {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut noise = |sd: f64| sd * unit.sample(rng);
        let rsrp = rsrp_dbm.clamp(RSRP_RANGE.0, RSRP_RANGE.1);
        let quality = ((rsrp + 125.0) / 70.0).clamp(0.0, 1.0);
        let rsrq = (-19.0 + 15.0 * quality + noise(1.0)).clamp(RSRQ_RANGE.0, RSRQ_RANGE.1);
        let mcs = (MAX_MCS * quality + noise(2.0)).round().clamp(0.0, MAX_MCS);
        let rbs = (100.0 - 40.0 * (1.0 - quality) + noise(10.0)).round().clamp(0.0, 100.0);
        let tb = ((mcs + 1.0) * rbs / 20.0 + noise(3.0)).round().max(0.0);
        let pkt = (200.0 + 50.0 * mcs + noise(100.0)).round().max(0.0);
        let ul = (-40.0 + 0.8 * (-rsrp - 60.0) + noise(1.0)).clamp(-40.0, 23.0);
        let dl = rsrp + 27.8 + noise(0.5);
        Self {
            rsrp_dbm: rsrp,
            rsrq_db: rsrq,
            transport_blocks: tb,
            available_rbs: rbs,
            packet_size_bytes: pkt,
            mcs_index: mcs,
            sig_pw_ul_dbm: ul,
            sig_pw_dl_dbm: dl,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySample {
    pub t: f64,
    pub ue: u64,
    pub serving_cell: u64,
    /// Measured cells, strongest first; always contains the serving cell.
    pub candidates: Vec<(u64, RadioFeatureVector)>,
}

impl MobilitySample {
    pub fn candidate_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.candidates.iter().map(|(c, _)| *c)
    }
}

/// Samples ordered by `(t, ue)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MobilityTrace {
    samples: Vec<MobilitySample>,
}

/// One serving-cell change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandoverEvent {
    pub t: f64,
    pub ue: u64,
    pub from_cell: u64,
    pub to_cell: u64,
}

pub const TRACE_HEADER: &str = "t,ue,serving,cell,rsrp,rsrq,tb,arb,pkt,mcs,ul,dl";

impl MobilityTrace {
    /// Sorts the samples by `(t, ue)`; the sort is stable.
    pub fn from_samples(mut samples: Vec<MobilitySample>) -> Self {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.ue.cmp(&b.ue)));
        Self { samples }
    }

    pub fn samples(&self) -> &[MobilitySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ue_ids(&self) -> BTreeSet<u64> {
        self.samples.iter().map(|s| s.ue).collect()
    }

    pub fn cell_ids(&self) -> BTreeSet<u64> {
        self.samples.iter().flat_map(|s| s.candidate_ids()).collect()
    }

    /// `(samples with t < cut, samples with t >= cut)`.
    pub fn split_at_time(&self, cut: f64) -> (Self, Self) {
        let (head, tail): (Vec<_>, Vec<_>) = self.samples.iter().cloned().partition(|s| s.t < cut);
        (Self { samples: head }, Self { samples: tail })
    }

    /// The first sample of each UE only.
    pub fn first_per_ue(&self) -> Self {
        let mut seen = HashSet::new();
        Self { samples: self.samples.iter().filter(|s| seen.insert(s.ue)).cloned().collect() }
    }

    /// Time-ordered samples of a single UE.
    pub fn ue_samples(&self, ue: u64) -> Vec<&MobilitySample> {
        self.samples.iter().filter(|s| s.ue == ue).collect()
    }

    /// Writes one line per candidate per sample under [`TRACE_HEADER`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for s in &self.samples {
            for (cell, f) in &s.candidates {
                write!(out, "{},{},{},{}", s.t, s.ue, s.serving_cell, cell)?;
                for v in f.to_array() {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SynthError> {
        let mut samples: Vec<MobilitySample> = Vec::new();
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h?,
            None => String::new(),
        };
        if header.trim() != TRACE_HEADER {
            return Err(SynthError::Parse { line: 1, msg: format!("expected header {TRACE_HEADER}") });
        }
        for (i, line) in lines {
            let line = line?;
            let no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 12 {
                return Err(SynthError::Parse { line: no, msg: format!("expected 12 fields, got {}", fields.len()) });
            }
            let num = |k: usize| -> Result<f64, SynthError> {
                fields[k].trim().parse().map_err(|_| SynthError::Parse { line: no, msg: format!("bad number {:?}", fields[k]) })
            };
            let id = |k: usize| -> Result<u64, SynthError> {
                fields[k].trim().parse().map_err(|_| SynthError::Parse { line: no, msg: format!("bad id {:?}", fields[k]) })
            };
            let (t, ue, serving, cell) = (num(0)?, id(1)?, id(2)?, id(3)?);
            let mut feats = [0.0; 8];
            for (k, slot) in feats.iter_mut().enumerate() {
                *slot = num(4 + k)?;
            }
            let feature = RadioFeatureVector::from_array(feats);
            match samples.last_mut() {
                Some(s) if s.t == t && s.ue == ue => {
                    if s.serving_cell != serving {
                        return Err(SynthError::Parse { line: no, msg: "serving cell changes within a sample".into() });
                    }
                    s.candidates.push((cell, feature));
                }
                _ => samples.push(MobilitySample { t, ue, serving_cell: serving, candidates: vec![(cell, feature)] }),
            }
        }
        Ok(Self::from_samples(samples))
    }
}

/// Hexagonal-grid cell sites centred on the origin, nearest rings first.
pub fn hex_layout(n_cells: usize, spacing: f64) -> Vec<(f64, f64)> {
    let mut ring = 0i64;
    let mut points: Vec<(i64, f64, f64, f64)> = Vec::new();
    while points.len() < n_cells {
        let k = ring;
        for q in -k..=k {
            for r in (-k).max(-q - k)..=k.min(-q + k) {
                let dist = q.abs().max(r.abs()).max((q + r).abs());
                if dist != k {
                    continue;
                }
                let x = spacing * (q as f64 + r as f64 / 2.0);
                let y = spacing * (3f64.sqrt() / 2.0) * r as f64;
                points.push((k, y.atan2(x), x, y));
            }
        }
        ring += 1;
    }
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points.into_iter().take(n_cells).map(|(_, _, x, y)| (x, y)).collect()
}

/// Mean RSRP (without shadowing) at distance `d` meters.
pub fn path_loss_rsrp(d: f64) -> f64 {
    REFERENCE_RSRP_DBM - 10.0 * PATH_LOSS_EXPONENT * d.max(MIN_DISTANCE_M).log10()
}

fn ue_rng(seed: u64, ue: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ue + 1);
    rng
}

/// Generates a time-ordered mobility trace. Deterministic in `cfg.rng_seed`.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<MobilityTrace, SynthError> {
    cfg.validate()?;
    let cells = hex_layout(cfg.n_cells, cfg.cell_spacing_m);
    let half = cfg.area_m / 2.0;
    if let Some((x, y)) = cells.iter().find(|(x, y)| x.abs() > half || y.abs() > half) {
        return Err(SynthError::Geometry(format!(
            "cell site ({x:.0}, {y:.0}) lies outside the {} m area; reduce cell_spacing_m or n_cells",
            cfg.area_m
        )));
    }
    let per_ue: Vec<Vec<MobilitySample>> =
        (0..cfg.n_ues as u64).into_par_iter().map(|ue| simulate_ue(cfg, &cells, ue)).collect();
    Ok(MobilityTrace::from_samples(per_ue.into_iter().flatten().collect()))
}

fn simulate_ue(cfg: &ScenarioConfig, cells: &[(f64, f64)], ue: u64) -> Vec<MobilitySample> {
    let mut rng = ue_rng(cfg.rng_seed, ue);
    let half = cfg.area_m / 2.0;
    let shadow_dist = Normal::new(0.0, SHADOWING_SIGMA_DB).expect("sigma");
    let draw_point = |rng: &mut ChaCha8Rng| (rng.random_range(-half..=half), rng.random_range(-half..=half));
    let draw_speed = |rng: &mut ChaCha8Rng| {
        let (lo, hi) = cfg.speed_mps;
        if hi > lo { rng.random_range(lo..=hi) } else { lo }
    };

    let mut pos = draw_point(&mut rng);
    let mut waypoint = draw_point(&mut rng);
    let mut speed = draw_speed(&mut rng);
    let mut shadow: Vec<f64> = cells.iter().map(|_| shadow_dist.sample(&mut rng)).collect();
    let mut serving: Option<usize> = None;
    let mut out = Vec::with_capacity(cfg.n_steps());

    for step in 0..cfg.n_steps() {
        let t = step as f64 * cfg.sample_period_s;
        if step > 0 {
            let mut travel = speed * cfg.sample_period_s;
            let moved = travel;
            while travel > 0.0 {
                let (dx, dy) = (waypoint.0 - pos.0, waypoint.1 - pos.1);
                let dist = dx.hypot(dy);
                if dist <= travel {
                    pos = waypoint;
                    travel -= dist;
                    waypoint = draw_point(&mut rng);
                    speed = draw_speed(&mut rng);
                    if dist == 0.0 && travel == moved {
                        break;
                    }
                } else {
                    pos = (pos.0 + dx / dist * travel, pos.1 + dy / dist * travel);
                    travel = 0.0;
                }
            }
            if moved > 0.0 {
                let rho = (-moved / SHADOWING_DECORRELATION_M).exp();
                let innovation = (1.0 - rho * rho).sqrt();
                for s in shadow.iter_mut() {
                    *s = rho * *s + innovation * shadow_dist.sample(&mut rng);
                }
            }
        }

        let rsrp: Vec<f64> = cells
            .iter()
            .zip(&shadow)
            .map(|(&(cx, cy), s)| (path_loss_rsrp((pos.0 - cx).hypot(pos.1 - cy)) + s).clamp(RSRP_RANGE.0, RSRP_RANGE.1))
            .collect();
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| rsrp[b].total_cmp(&rsrp[a]).then(a.cmp(&b)));
        let best = order[0];
        let current = match serving {
            None => best,
            Some(s) if best != s && rsrp[best] >= rsrp[s] + HYSTERESIS_DB => best,
            Some(s) => s,
        };
        serving = Some(current);

        let in_window = order.iter().take_while(|&&c| rsrp[c] >= rsrp[best] - MEASUREMENT_WINDOW_DB).count();
        let count = in_window.clamp(2, cfg.max_neighbors);
        let mut chosen: Vec<usize> = order[..count].to_vec();
        if !chosen.contains(&current) {
            chosen[count - 1] = current;
            chosen.sort_by(|&a, &b| rsrp[b].total_cmp(&rsrp[a]).then(a.cmp(&b)));
        }
        let candidates = chosen
            .into_iter()
            .map(|c| (c as u64, RadioFeatureVector::sample(rsrp[c], &mut rng)))
            .collect();
        out.push(MobilitySample { t, ue, serving_cell: current as u64, candidates });
    }
    out
}

/// One edge per observed UE–cell pair, keeping the first observation.
///
/// Edge ids are the running line index of the trace, so the kept edge is
/// also the lowest-id one. Node features are the means of incident edge
/// features, giving UEs and cells the same 8-wide schema.
pub fn trace_to_graph(trace: &MobilityTrace) -> Result<AttributedGraph, SynthError> {
    if trace.is_empty() {
        return Err(SynthError::EmptyTrace);
    }
    let mut first: HashMap<(u64, u64), usize> = HashMap::new();
    let mut raw_edges: Vec<RawEdge> = Vec::new();
    let mut line = 0u64;
    for s in trace.samples() {
        for (cell, f) in &s.candidates {
            if let std::collections::hash_map::Entry::Vacant(slot) = first.entry((s.ue, *cell)) {
                slot.insert(raw_edges.len());
                raw_edges.push(RawEdge {
                    id: line,
                    ue: s.ue,
                    cell: *cell,
                    features: f.to_array().to_vec(),
                    timestamp: Some(s.t),
                });
            }
            line += 1;
        }
    }

    let mut sums: HashMap<(bool, u64), ([f64; 8], usize)> = HashMap::new();
    for e in &raw_edges {
        for key in [(true, e.ue), (false, e.cell)] {
            let acc = sums.entry(key).or_insert(([0.0; 8], 0));
            for (a, v) in acc.0.iter_mut().zip(&e.features) {
                *a += v;
            }
            acc.1 += 1;
        }
    }
    let mean_node = |is_ue: bool, id: u64| {
        let (sum, n) = sums[&(is_ue, id)];
        RawNode { id, features: sum.iter().map(|v| v / n as f64).collect() }
    };
    let ues: Vec<RawNode> = trace.ue_ids().into_iter().map(|id| mean_node(true, id)).collect();
    let cells: Vec<RawNode> = trace.cell_ids().into_iter().map(|id| mean_node(false, id)).collect();
    homogenize(&ues, &cells, &raw_edges).map_err(|e| SynthError::Geometry(e.to_string()))
}

/// Serving-cell changes per UE, ordered by `(t, ue)`.
pub fn ground_truth_next_cell(trace: &MobilityTrace) -> Vec<HandoverEvent> {
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut events = Vec::new();
    for s in trace.samples() {
        if let Some(prev) = last.insert(s.ue, s.serving_cell) {
            if prev != s.serving_cell {
                events.push(HandoverEvent { t: s.t, ue: s.ue, from_cell: prev, to_cell: s.serving_cell });
            }
        }
    }
    events
}

/// Raw tables shaped like the EM dataset: 70 UEs, 31 cells and 449,152
/// association records covering exactly 489 distinct UE–cell pairs. Each UE
/// is associated with the cells nearest to a random home position.
pub fn em_reference_tables(seed: u64) -> (Vec<RawNode>, Vec<RawNode>, Vec<RawEdge>) {
    const N_UE: usize = 70;
    const N_CELL: usize = 31;
    const N_RECORDS: usize = 449_152;
    const N_PAIRS: usize = 489;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = hex_layout(N_CELL, 500.0);
    let mut degrees: Vec<usize> = (0..N_UE).map(|_| rng.random_range(4..=10)).collect();
    let mut total: usize = degrees.iter().sum();
    while total != N_PAIRS {
        let i = rng.random_range(0..N_UE);
        if total < N_PAIRS && degrees[i] < 12 {
            degrees[i] += 1;
            total += 1;
        } else if total > N_PAIRS && degrees[i] > 2 {
            degrees[i] -= 1;
            total -= 1;
        }
    }

    let mut pairs: Vec<(u64, u64, f64)> = Vec::with_capacity(N_PAIRS);
    for (ue, &deg) in degrees.iter().enumerate() {
        let home = (rng.random_range(-1500.0..1500.0), rng.random_range(-1300.0..1300.0));
        let mut by_dist: Vec<(f64, usize)> =
            cells.iter().enumerate().map(|(c, &(x, y))| ((home.0 - x).hypot(home.1 - y), c)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, c) in by_dist.iter().take(deg) {
            pairs.push((ue as u64, c as u64, d));
        }
    }

    let mut assignment: Vec<usize> = (0..N_PAIRS).chain((N_PAIRS..N_RECORDS).map(|_| rng.random_range(0..N_PAIRS))).collect();
    assignment.shuffle(&mut rng);
    let shadow = Normal::new(0.0, SHADOWING_SIGMA_DB).expect("sigma");
    let edges = assignment
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let (ue, cell, d) = pairs[p];
            let rsrp = path_loss_rsrp(d) + shadow.sample(&mut rng);
            RawEdge {
                id: id as u64,
                ue,
                cell,
                features: RadioFeatureVector::sample(rsrp, &mut rng).to_array().to_vec(),
                timestamp: Some(id as f64 * 0.01),
            }
        })
        .collect();
    let ues = (0..N_UE as u64).map(|id| RawNode { id, features: Vec::new() }).collect();
    let cell_nodes = (0..N_CELL as u64).map(|id| RawNode { id, features: Vec::new() }).collect();
    (ues, cell_nodes, edges)
}

/// Graph built from [`em_reference_tables`].
pub fn em_reference_graph(seed: u64) -> AttributedGraph {
    let (ues, cells, edges) = em_reference_tables(seed);
    homogenize(&ues, &cells, &edges).expect("reference tables are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{density, NodeKind};

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig { n_ues: 8, duration_s: 120.0, rng_seed: seed, ..ScenarioConfig::default() }
    }

    fn feats() -> RadioFeatureVector {
        RadioFeatureVector::from_array([-90.0, -10.0, 10.0, 50.0, 500.0, 10.0, 0.0, -60.0])
    }

    fn sample(t: f64, ue: u64, serving: u64, cells: &[u64]) -> MobilitySample {
        MobilitySample { t, ue, serving_cell: serving, candidates: cells.iter().map(|&c| (c, feats())).collect() }
    }

    #[test]
    fn hex_layout_rings() {
        let l = hex_layout(7, 100.0);
        assert_eq!(l[0], (0.0, 0.0));
        for &(x, y) in &l[1..] {
            assert!((x.hypot(y) - 100.0).abs() < 1e-9);
        }
        assert_eq!(hex_layout(31, 1.0).len(), 31);
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = ScenarioConfig { sample_period_s: 7.0, ..ScenarioConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("sample_period_s"));
        let cfg = ScenarioConfig { n_ues: 0, ..ScenarioConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("n_ues"));
        let cfg = ScenarioConfig { speed_mps: (-1.0, 2.0), ..ScenarioConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn infeasible_geometry() {
        let cfg = ScenarioConfig { cell_spacing_m: 5000.0, ..small(1) };
        assert!(matches!(generate_scenario(&cfg), Err(SynthError::Geometry(_))));
    }

    #[test]
    fn config_key_values_roundtrip() {
        let cfg = ScenarioConfig { speed_mps: (0.0, 4.5), rng_seed: 99, ..ScenarioConfig::default() };
        assert_eq!(ScenarioConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
        let kv = KeyValues::parse("n_celss = 4").unwrap();
        assert!(ScenarioConfig::from_key_values(&kv).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_scenario(&small(5)).unwrap();
        let b = generate_scenario(&small(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scenario(&small(6)).unwrap());
    }

    #[test]
    fn samples_respect_invariants() {
        let cfg = small(3);
        let trace = generate_scenario(&cfg).unwrap();
        assert_eq!(trace.len(), cfg.n_ues * cfg.n_steps());
        for s in trace.samples() {
            assert!(s.candidates.len() >= 2 && s.candidates.len() <= cfg.max_neighbors);
            assert!(s.candidate_ids().any(|c| c == s.serving_cell));
            assert!(s.candidates.iter().all(|(_, f)| f.is_valid()));
        }
    }

    #[test]
    fn hysteresis_holds_between_samples() {
        let trace = generate_scenario(&small(11)).unwrap();
        for ue in trace.ue_ids() {
            let samples = trace.ue_samples(ue);
            for w in samples.windows(2) {
                if w[0].serving_cell != w[1].serving_cell {
                    let rsrp = |cell| w[1].candidates.iter().find(|(c, _)| *c == cell).map(|(_, f)| f.rsrp_dbm);
                    let new = rsrp(w[1].serving_cell).unwrap();
                    // The old serving cell is either measured and weaker by the
                    // margin, or no longer among the strongest candidates.
                    if let Some(old) = rsrp(w[0].serving_cell) {
                        assert!(new >= old + HYSTERESIS_DB - 1e-9, "{new} vs {old}");
                    }
                }
            }
        }
    }

    #[test]
    fn stationary_ues_never_hand_over() {
        let cfg = ScenarioConfig { speed_mps: (0.0, 0.0), ..small(2) };
        let trace = generate_scenario(&cfg).unwrap();
        for ue in trace.ue_ids() {
            let cells: HashSet<u64> = trace.ue_samples(ue).iter().map(|s| s.serving_cell).collect();
            assert_eq!(cells.len(), 1);
        }
        assert!(ground_truth_next_cell(&trace).is_empty());
    }

    #[test]
    fn csv_roundtrip() {
        let trace = generate_scenario(&ScenarioConfig { n_ues: 3, duration_s: 10.0, ..small(4) }).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(TRACE_HEADER));
        let back = MobilityTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = format!("{TRACE_HEADER}\n0,1,2,2,-90,-10,1,1,1,1,1,1\n0,1,2,x,-90,-10,1,1,1,1,1,1\n");
        match MobilityTrace::read_csv(text.as_bytes()) {
            Err(SynthError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stationary_single_ue_three_cells() {
        let trace = MobilityTrace::from_samples((0..5).map(|t| sample(t as f64, 0, 10, &[10, 11, 12])).collect());
        let g = trace_to_graph(&trace).unwrap();
        assert_eq!(g.n_nodes(), 4);
        assert_eq!(g.n_edges(), 3);
        assert_eq!(g.n_ue(), 1);
        assert_eq!(g.node_feature_width(), 8);
        // First observation kept: line ids 0, 1, 2.
        let ids: Vec<u64> = g.edges().iter().map(|e| e.edge_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn truncated_trace_graph_is_subset() {
        let trace = generate_scenario(&small(8)).unwrap();
        let full = trace_to_graph(&trace).unwrap();
        let part = trace_to_graph(&trace.first_per_ue()).unwrap();
        for e in part.edges() {
            let ue = part.nodes()[e.src].raw_id;
            let cell = part.nodes()[e.dst].raw_id;
            let (fu, fc) = (full.node_of_raw(NodeKind::Ue, ue).unwrap(), full.node_of_raw(NodeKind::Cell, cell).unwrap());
            assert!(full.has_edge(fu, fc));
        }
    }

    #[test]
    fn ground_truth_records_changes() {
        let trace = MobilityTrace::from_samples(vec![
            sample(0.0, 0, 1, &[1, 2]),
            sample(1.0, 0, 1, &[1, 2]),
            sample(2.0, 0, 2, &[2, 1]),
            sample(3.0, 0, 2, &[2, 1]),
            sample(4.0, 0, 2, &[2, 1]),
        ]);
        let events = ground_truth_next_cell(&trace);
        assert_eq!(events, vec![HandoverEvent { t: 2.0, ue: 0, from_cell: 1, to_cell: 2 }]);
    }

    #[test]
    fn ping_pong_path_gives_two_events() {
        let trace = MobilityTrace::from_samples(vec![
            sample(0.0, 0, 1, &[1, 2]),
            sample(1.0, 0, 2, &[2, 1]),
            sample(2.0, 0, 1, &[1, 2]),
        ]);
        assert_eq!(ground_truth_next_cell(&trace).len(), 2);
    }

    #[test]
    fn em_reference_dedup_and_density() {
        let (ues, cells, edges) = em_reference_tables(1);
        assert_eq!(edges.len(), 449_152);
        let g = homogenize(&ues, &cells, &edges).unwrap();
        assert_eq!(g.n_nodes(), 101);
        assert_eq!(g.n_edges(), 489);
        assert!((density(&g).unwrap() - 0.09683).abs() < 5e-6);
    }
}
