//! Structure-preserving positive split and leakage-free negative sampling.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::AttributedGraph;

pub type Pair = (usize, usize);

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const MIN_EDGES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("graph has {0} edges; at least {MIN_EDGES} are needed")]
    TooSmall(usize),
    #[error("invalid ratios {0:?}")]
    Ratios([f64; 3]),
    #[error("spanning forest needs {forest} training edges but the quota is {quota}")]
    Structure { forest: usize, quota: usize },
    #[error("need {needed} negatives but only {available} UE-cell non-edges exist (short by {})", needed - available)]
    Negatives { needed: usize, available: usize },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

/// Positive and negative `(ue, cell)` pairs per part. Pairs within each set
/// are sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitBundle {
    pub train_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    /// Edges visible to message passing; equal to `train_pos`.
    pub message_edges: Vec<Pair>,
}

impl SplitBundle {
    pub fn pos(&self, part: Part) -> &[Pair] {
        match part {
            Part::Train => &self.train_pos,
            Part::Val => &self.val_pos,
            Part::Test => &self.test_pos,
        }
    }

    pub fn neg(&self, part: Part) -> &[Pair] {
        match part {
            Part::Train => &self.train_neg,
            Part::Val => &self.val_neg,
            Part::Test => &self.test_neg,
        }
    }

    fn neg_mut(&mut self, part: Part) -> &mut Vec<Pair> {
        match part {
            Part::Train => &mut self.train_neg,
            Part::Val => &mut self.val_neg,
            Part::Test => &mut self.test_neg,
        }
    }

    fn pos_mut(&mut self, part: Part) -> &mut Vec<Pair> {
        match part {
            Part::Train => &mut self.train_pos,
            Part::Val => &mut self.val_pos,
            Part::Test => &mut self.test_pos,
        }
    }

    /// Positives followed by negatives with matching 1/0 labels.
    pub fn labeled(&self, part: Part) -> (Vec<Pair>, Vec<f64>) {
        let pos = self.pos(part);
        let neg = self.neg(part);
        let pairs = pos.iter().chain(neg).copied().collect();
        let labels = std::iter::repeat_n(1.0, pos.len()).chain(std::iter::repeat_n(0.0, neg.len())).collect();
        (pairs, labels)
    }

    /// `split,polarity,src,dst` rows under a header.
    pub fn write_manifest<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "split,polarity,src,dst")?;
        for part in Part::ALL {
            for (polarity, set) in [("pos", self.pos(part)), ("neg", self.neg(part))] {
                for (s, d) in set {
                    writeln!(out, "{},{polarity},{s},{d}", part.name())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_manifest<R: BufRead>(input: R) -> Result<Self, SplitError> {
        let err = |line: usize, msg: String| SplitError::Manifest { line, msg };
        let mut bundle = Self::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| err(i + 1, e.to_string()))?;
            if i == 0 {
                if line.trim() != "split,polarity,src,dst" {
                    return Err(err(1, "bad header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, got {}", f.len())));
            }
            let part = Part::ALL
                .into_iter()
                .find(|p| p.name() == f[0])
                .ok_or_else(|| err(i + 1, format!("unknown split {:?}", f[0])))?;
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(i + 1, format!("bad index {s:?}")));
            let pair = (idx(f[2])?, idx(f[3])?);
            match f[1] {
                "pos" => bundle.pos_mut(part).push(pair),
                "neg" => bundle.neg_mut(part).push(pair),
                other => return Err(err(i + 1, format!("unknown polarity {other:?}"))),
            }
        }
        bundle.message_edges = bundle.train_pos.clone();
        Ok(bundle)
    }
}

/// Largest-remainder apportionment of `n` items by `ratios`; ties in the
/// remainder go to the earlier part.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| n as f64 * r);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Partitions the positive edges. A spanning forest is placed in the
/// training set first so every non-isolated node keeps a training edge.
pub fn split(g: &AttributedGraph, ratios: [f64; 3], seed: u64) -> Result<SplitBundle, SplitError> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r >= 0.0) && (ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if !ok {
        return Err(SplitError::Ratios(ratios));
    }
    let mut edges = g.edge_pairs();
    if edges.len() < MIN_EDGES {
        return Err(SplitError::TooSmall(edges.len()));
    }
    let counts = apportion(edges.len(), ratios);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);

    let mut parent: Vec<usize> = (0..g.n_nodes()).collect();
    let (mut forest, mut rest) = (Vec::new(), Vec::new());
    for (u, v) in edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            forest.push((u, v));
        } else {
            rest.push((u, v));
        }
    }
    if forest.len() > counts[0] {
        return Err(SplitError::Structure { forest: forest.len(), quota: counts[0] });
    }
    rest.shuffle(&mut rng);
    let mut rest = rest.into_iter();
    let mut train = forest;
    train.extend(rest.by_ref().take(counts[0] - train.len()));
    let mut val: Vec<Pair> = rest.by_ref().take(counts[1]).collect();
    let mut test: Vec<Pair> = rest.collect();
    for set in [&mut train, &mut val, &mut test] {
        set.sort_unstable();
    }
    Ok(SplitBundle { message_edges: train.clone(), train_pos: train, val_pos: val, test_pos: test, ..Default::default() })
}

/// Draws one negative UE–cell pair per positive in each part, rejecting
/// every positive edge of the graph and every negative already drawn.
pub fn sample_negatives(g: &AttributedGraph, bundle: &SplitBundle, seed: u64) -> Result<SplitBundle, SplitError> {
    let positives: HashSet<Pair> = g.edge_pairs().into_iter().collect();
    let needed: usize = Part::ALL.iter().map(|&p| bundle.pos(p).len()).sum();
    let available = g.n_ue() * g.n_cell() - positives.len();
    if needed > available {
        return Err(SplitError::Negatives { needed, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_6761_7469_7665);
    let mut out = bundle.clone();
    let drawn: Vec<Pair> = if 2 * needed > available {
        let mut all: Vec<Pair> = g
            .ue_nodes()
            .flat_map(|u| g.cell_nodes().map(move |c| (u, c)))
            .filter(|p| !positives.contains(p))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(needed);
        all
    } else {
        let (ues, cells) = (g.ue_nodes(), g.cell_nodes());
        let mut seen = HashSet::with_capacity(needed);
        let mut drawn = Vec::with_capacity(needed);
        while drawn.len() < needed {
            let p = (rng.random_range(ues.clone()), rng.random_range(cells.clone()));
            if !positives.contains(&p) && seen.insert(p) {
                drawn.push(p);
            }
        }
        drawn
    };
    let mut drawn = drawn.into_iter();
    for part in Part::ALL {
        let n = bundle.pos(part).len();
        let set = out.neg_mut(part);
        *set = drawn.by_ref().take(n).collect();
        set.sort_unstable();
    }
    Ok(out)
}

/// [`split`] followed by [`sample_negatives`] with the same seed.
pub fn split_with_negatives(g: &AttributedGraph, ratios: [f64; 3], seed: u64) -> Result<SplitBundle, SplitError> {
    let bundle = split(g, ratios, seed)?;
    sample_negatives(g, &bundle, seed)
}

/// Checks every bundle invariant against `g`; returns the first violation.
pub fn check_hygiene(g: &AttributedGraph, b: &SplitBundle) -> Result<(), String> {
    let positives: HashSet<Pair> = g.edge_pairs().into_iter().collect();
    let mut seen: HashSet<Pair> = HashSet::new();
    for part in Part::ALL {
        if b.pos(part).len() != b.neg(part).len() {
            return Err(format!("{} has {} positives and {} negatives", part.name(), b.pos(part).len(), b.neg(part).len()));
        }
        for &p in b.pos(part).iter().chain(b.neg(part)) {
            if !seen.insert(p) {
                return Err(format!("pair {p:?} appears twice"));
            }
        }
        for &(u, c) in b.neg(part) {
            if positives.contains(&(u, c)) {
                return Err(format!("positive edge ({u}, {c}) sampled as a negative"));
            }
            if u >= g.n_ue() || c < g.n_ue() || c >= g.n_nodes() {
                return Err(format!("negative ({u}, {c}) is not a UE-cell pair"));
            }
        }
    }
    let union: HashSet<Pair> = Part::ALL.iter().flat_map(|&p| b.pos(p).iter().copied()).collect();
    if union != positives {
        return Err("positive splits do not cover the edge set exactly".into());
    }
    let covered: HashSet<usize> = b.train_pos.iter().flat_map(|&(u, c)| [u, c]).collect();
    if let Some(n) = (0..g.n_nodes()).find(|&n| g.degree(n) > 0 && !covered.contains(&n)) {
        return Err(format!("node {n} has no training edge"));
    }
    if b.message_edges != b.train_pos {
        return Err("message edges differ from training positives".into());
    }
    Ok(())
}
