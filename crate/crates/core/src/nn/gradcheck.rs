use super::{NnError, Tape, Tensor, Var};

/// Denominator floor so coordinates with vanishing gradients compare absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Maximum relative error between reverse-mode gradients of `f` at `theta`
/// and central differences `(f(θ + h) - f(θ - h)) / 2h`, taken over every
/// coordinate of every input tensor.
pub fn grad_check<F>(f: F, theta: &[Tensor], h: f64) -> Result<f64, NnError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NnError>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = theta.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };
    let eval = |point: &[Tensor]| -> Result<f64, NnError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = point.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().get(0, 0))
    };

    let mut point = theta.to_vec();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        for i in 0..theta[p].len() {
            let original = theta[p].data()[i];
            point[p].data_mut()[i] = original + h;
            let plus = eval(&point)?;
            point[p].data_mut()[i] = original - h;
            let minus = eval(&point)?;
            point[p].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
