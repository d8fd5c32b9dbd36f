//! Scalar training losses.

use super::{NnError, Tape, Tensor, Var};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

fn check_labels(op: &'static str, pred: &Var<'_>, labels: &[f64]) -> Result<(), NnError> {
    let [r, c] = pred.shape();
    if c != 1 || r != labels.len() {
        return Err(NnError::Shape { op, detail: format!("{r}x{c} predictions for {} labels", labels.len()) });
    }
    if r == 0 {
        return Err(NnError::Shape { op, detail: "no samples".into() });
    }
    Ok(())
}

/// `-mean(y ln p + (1 - y) ln(1 - p))` over an `m × 1` column of probabilities.
pub fn bce<'t>(tape: &'t Tape, pred: Var<'t>, labels: &[f64]) -> Result<Var<'t>, NnError> {
    check_labels("bce", &pred, labels)?;
    let p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let y = tape.constant(Tensor::column(labels.to_vec()));
    let not_y = tape.constant(Tensor::column(labels.iter().map(|y| 1.0 - y).collect()));
    let pos = y.mul(p.ln()?)?;
    let neg = not_y.mul(p.affine(-1.0, 1.0)?.ln()?)?;
    pos.add(neg)?.mean()?.scale(-1.0)
}

/// `-0.5 · mean over nodes of Σ_d (1 + 2 logstd - μ² - exp(2 logstd))`.
pub fn kl_divergence<'t>(mu: Var<'t>, logstd: Var<'t>) -> Result<Var<'t>, NnError> {
    if mu.shape() != logstd.shape() {
        let (a, b) = (mu.shape(), logstd.shape());
        return Err(NnError::Shape { op: "kl_divergence", detail: format!("mu {a:?} vs logstd {b:?}") });
    }
    let n = mu.shape()[0].max(1) as f64;
    let two_ls = logstd.scale(2.0)?;
    let inner = two_ls.affine(1.0, 1.0)?.sub(mu.mul(mu)?)?.sub(two_ls.exp()?)?;
    inner.sum()?.scale(-0.5 / n)
}

/// Two-class cross-entropy from a single logit per sample: the classes
/// carry logits `(0, z)`, so the loss is `mean(softplus(z) - y z)`.
pub fn cross_entropy<'t>(tape: &'t Tape, logits: Var<'t>, labels: &[f64]) -> Result<Var<'t>, NnError> {
    check_labels("cross_entropy", &logits, labels)?;
    let y = tape.constant(Tensor::column(labels.to_vec()));
    logits.softplus()?.sub(y.mul(logits)?)?.mean()
}

/// Sum of squared entries, for explicit L2 penalties.
pub fn squared_norm<'t>(x: Var<'t>) -> Result<Var<'t>, NnError> {
    x.mul(x)?.sum()
}
