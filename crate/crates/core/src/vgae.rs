//! Variational graph autoencoder with a GAT front end.
//!
//! One edge-aware GAT layer produces hidden states `H`; two linear GCN heads
//! on `Â` give `μ = ÂHW_μ` and `logstd = ÂHW_σ`. Training samples
//! `Z = μ + exp(logstd) ⊙ ε`; prediction uses `Z = μ`. Edges are decoded as
//! `σ(z_u · z_v)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::AttributedGraph;
use crate::metrics::{auc, average_precision, timing, tune_threshold};
use crate::nn::{
    adam_step, bce, gat_aggregate, gcn_propagate, inner_product_decode, kl_divergence, Bound, Checkpoint, ModelState,
    NnError, Tape, Tensor, Var,
};
use crate::split::{Pair, Part, SplitBundle};
use crate::train::{CurveRow, EarlyStopping, GraphInput, ModelError, TrainConfig};

pub const LOGSTD_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VgaeDims {
    pub n_nodes: usize,
    pub in_dim: usize,
    pub edge_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub attention_dim: usize,
    pub node_embedding: bool,
}

impl VgaeDims {
    pub fn new(input: &GraphInput, cfg: &TrainConfig) -> Self {
        Self {
            n_nodes: input.n_nodes,
            in_dim: input.feature_width(),
            edge_dim: input.edge_width(),
            hidden: cfg.hidden,
            latent: cfg.latent,
            attention_dim: cfg.attention_dim,
            node_embedding: cfg.node_embedding,
        }
    }
}

/// Parameter variables of one forward pass.
#[derive(Clone, Copy)]
pub struct VgaeVars<'t> {
    pub w: Var<'t>,
    pub w_e: Var<'t>,
    pub a: Var<'t>,
    pub emb: Option<Var<'t>>,
    pub w_mu: Var<'t>,
    pub w_logstd: Var<'t>,
}

impl<'t> VgaeVars<'t> {
    pub fn from_bound(b: &Bound<'t>, dims: &VgaeDims) -> Self {
        Self {
            w: b.get("gat.w"),
            w_e: b.get("gat.w_e"),
            a: b.get("gat.a"),
            emb: dims.node_embedding.then(|| b.get("gat.emb")),
            w_mu: b.get("mu.w"),
            w_logstd: b.get("logstd.w"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vgae {
    pub dims: VgaeDims,
    pub state: ModelState,
}

/// Output of one encoder pass.
pub struct Encoded<'t> {
    pub z: Var<'t>,
    pub mu: Var<'t>,
    pub logstd: Var<'t>,
}

/// `(H, μ, logstd)` before sampling.
pub fn encode_vars<'t>(tape: &'t Tape, p: &VgaeVars<'t>, input: &GraphInput) -> Result<(Var<'t>, Var<'t>), NnError> {
    let x = tape.constant(input.features.clone());
    let mut projected = x.matmul(p.w)?;
    if let Some(emb) = p.emb {
        projected = projected.add(emb)?;
    }
    let feats = tape.constant(input.edge_feats.clone());
    let (h, _) = gat_aggregate(projected, &input.attention, feats, p.w_e, p.a)?;
    let h = h.relu()?;
    let mu = gcn_propagate(h, &input.a_hat, p.w_mu)?;
    let logstd = gcn_propagate(h, &input.a_hat, p.w_logstd)?.clamp(-LOGSTD_CLAMP, LOGSTD_CLAMP)?;
    Ok((mu, logstd))
}

/// Encoder with optional reparameterized sampling; `noise` is `ε`.
pub fn encode_with<'t>(
    tape: &'t Tape,
    p: &VgaeVars<'t>,
    input: &GraphInput,
    noise: Option<&Tensor>,
) -> Result<Encoded<'t>, NnError> {
    let (mu, logstd) = encode_vars(tape, p, input)?;
    let z = match noise {
        Some(eps) => mu.add(logstd.exp()?.mul(tape.constant(eps.clone()))?)?,
        None => mu,
    };
    Ok(Encoded { z, mu, logstd })
}

/// `bce(σ(z_u·z_v), y) + kl_weight · KL`.
pub fn vgae_loss<'t>(
    tape: &'t Tape,
    p: &VgaeVars<'t>,
    input: &GraphInput,
    pairs: &[Pair],
    labels: &[f64],
    kl_weight: f64,
    noise: Option<&Tensor>,
) -> Result<Var<'t>, NnError> {
    let enc = encode_with(tape, p, input, noise)?;
    let recon = bce(tape, inner_product_decode(enc.z, pairs)?, labels)?;
    if kl_weight == 0.0 {
        return Ok(recon);
    }
    recon.add(kl_divergence(enc.mu, enc.logstd)?.scale(kl_weight)?)
}

/// Standard normal noise of the given shape.
pub fn standard_noise(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches")
}

impl Vgae {
    pub fn init(dims: VgaeDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ModelState::new();
        state.insert("gat.w", Tensor::glorot(dims.in_dim, dims.hidden, &mut rng));
        state.insert("gat.w_e", Tensor::glorot(dims.edge_dim, dims.attention_dim, &mut rng));
        state.insert("gat.a", Tensor::glorot(2 * dims.hidden + dims.attention_dim, 1, &mut rng));
        if dims.node_embedding {
            state.insert("gat.emb", Tensor::glorot(dims.n_nodes, dims.hidden, &mut rng));
        }
        state.insert("mu.w", Tensor::glorot(dims.hidden, dims.latent, &mut rng));
        state.insert("logstd.w", Tensor::glorot(dims.hidden, dims.latent, &mut rng));
        Self { dims, state }
    }

    fn check_input(&self, input: &GraphInput) -> Result<(), ModelError> {
        let d = &self.dims;
        if input.n_nodes != d.n_nodes || input.feature_width() != d.in_dim || input.edge_width() != d.edge_dim {
            return Err(ModelError::Input(format!(
                "graph has {} nodes / {} node features / {} edge features; model expects {} / {} / {}",
                input.n_nodes,
                input.feature_width(),
                input.edge_width(),
                d.n_nodes,
                d.in_dim,
                d.edge_dim
            )));
        }
        Ok(())
    }

    /// Returns `(Z, μ, logstd)`. With `sample`, `Z` draws `ε` from `seed`.
    pub fn encode(&self, input: &GraphInput, sample: bool, seed: u64) -> Result<(Tensor, Tensor, Tensor), ModelError> {
        self.check_input(input)?;
        let tape = Tape::new();
        let bound = self.state.bind_frozen(&tape);
        let vars = VgaeVars::from_bound(&bound, &self.dims);
        let noise = sample.then(|| standard_noise(self.dims.n_nodes, self.dims.latent, &mut ChaCha8Rng::seed_from_u64(seed)));
        let enc = encode_with(&tape, &vars, input, noise.as_ref())?;
        Ok(((*enc.z.value()).clone(), (*enc.mu.value()).clone(), (*enc.logstd.value()).clone()))
    }

    /// Mean embeddings `μ`.
    pub fn embed(&self, input: &GraphInput) -> Result<Tensor, ModelError> {
        Ok(self.encode(input, false, 0)?.1)
    }

    /// Link probabilities on the mean path.
    pub fn predict_links(&self, input: &GraphInput, pairs: &[Pair]) -> Result<Vec<f64>, ModelError> {
        input.check_pairs(pairs)?;
        let mu = self.embed(input)?;
        Ok(crate::nn::decode_probabilities(&mu, pairs)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let d = &self.dims;
        Checkpoint::new(self.state.clone())
            .with_meta("model", "vgae")
            .with_meta("n_nodes", d.n_nodes)
            .with_meta("in_dim", d.in_dim)
            .with_meta("edge_dim", d.edge_dim)
            .with_meta("hidden", d.hidden)
            .with_meta("latent", d.latent)
            .with_meta("attention_dim", d.attention_dim)
            .with_meta("node_embedding", d.node_embedding)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        if ck.meta("model")? != "vgae" {
            return Err(ModelError::Input(format!("checkpoint holds a {} model", ck.meta("model")?)));
        }
        let dims = VgaeDims {
            n_nodes: ck.meta_parsed("n_nodes")?,
            in_dim: ck.meta_parsed("in_dim")?,
            edge_dim: ck.meta_parsed("edge_dim")?,
            hidden: ck.meta_parsed("hidden")?,
            latent: ck.meta_parsed("latent")?,
            attention_dim: ck.meta_parsed("attention_dim")?,
            node_embedding: ck.meta_parsed("node_embedding")?,
        };
        let fresh = Self::init(dims, 0);
        for (name, p) in fresh.state.params() {
            let got = ck.state.get(name)?;
            if got.shape() != p.value.shape() {
                return Err(ModelError::Input(format!("parameter {name} has shape {:?}, expected {:?}", got.shape(), p.value.shape())));
            }
        }
        Ok(Self { dims, state: ck.state.clone() })
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub curve: Vec<CurveRow>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_auc: f64,
    pub threshold: f64,
    pub train_time_s: f64,
}

fn labels_bool(labels: &[f64]) -> Vec<bool> {
    labels.iter().map(|&l| l > 0.5).collect()
}

/// Full-batch training with early stopping on validation AUC. Returns the
/// best-on-validation parameters and a validation-tuned threshold.
pub fn train_vgae(g: &AttributedGraph, bundle: &SplitBundle, cfg: &TrainConfig) -> Result<TrainOutcome<Vgae>, ModelError> {
    cfg.validate()?;
    let (result, secs) = timing(|| train_inner(g, bundle, cfg));
    let mut out = result?;
    out.train_time_s = secs;
    Ok(out)
}

fn train_inner(g: &AttributedGraph, bundle: &SplitBundle, cfg: &TrainConfig) -> Result<TrainOutcome<Vgae>, ModelError> {
    let input = GraphInput::new(g, &bundle.message_edges)?;
    let (train_pairs, train_labels) = bundle.labeled(Part::Train);
    let (val_pairs, val_labels) = bundle.labeled(Part::Val);
    let val_bool = labels_bool(&val_labels);
    let kl_weight = cfg.kl_weight.unwrap_or(1.0 / g.n_nodes() as f64);

    let dims = VgaeDims::new(&input, cfg);
    let mut model = Vgae::init(dims, cfg.seed);
    let mut best = model.clone();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut curve = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let diverged = |source| ModelError::Diverged { epoch, source };
        let noise = standard_noise(dims.n_nodes, dims.latent, &mut noise_rng);
        let tape = Tape::new();
        let bound = model.state.bind(&tape);
        let vars = VgaeVars::from_bound(&bound, &dims);
        let loss = vgae_loss(&tape, &vars, &input, &train_pairs, &train_labels, kl_weight, Some(&noise)).map_err(diverged)?;
        let loss_value = loss.value().get(0, 0);
        let grads = tape.backward(loss).map_err(diverged)?;
        adam_step(&mut model.state, &bound.gradients(&grads), cfg.lr, cfg.weight_decay).map_err(diverged)?;

        let scores = model.predict_links(&input, &val_pairs).map_err(|e| match e {
            ModelError::Nn(source) => diverged(source),
            other => other,
        })?;
        let val_auc = auc(&scores, &val_bool)?;
        let val_ap = average_precision(&scores, &val_bool)?;
        curve.push(CurveRow { epoch, loss: loss_value, auc: val_auc, ap: val_ap });
        log::debug!("vgae epoch {epoch}: loss {loss_value:.4} val auc {val_auc:.4} ap {val_ap:.4}");
        let (improved, stop) = stopper.observe(epoch, val_auc);
        if improved {
            best = model.clone();
        }
        if stop {
            break;
        }
    }

    let scores = best.predict_links(&input, &val_pairs)?;
    let threshold = tune_threshold(&scores, &val_bool, &cfg.threshold_grid, cfg.objective).unwrap_or(0.5);
    Ok(TrainOutcome {
        model: best,
        epochs_run: curve.len(),
        curve,
        best_epoch: stopper.best_epoch(),
        best_val_auc: stopper.best(),
        threshold,
        train_time_s: 0.0,
    })
}
