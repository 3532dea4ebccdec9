use super::{LossKind, Network};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A model whose parameters can be addressed by flat index.
pub trait Parametric {
    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
}

/// Central differences of `loss` with respect to every parameter of `model`.
///
/// Parameters are perturbed in place and restored bit-exactly.
pub fn numeric_gradient<P, F>(model: &mut P, mut loss: F) -> Vec<f64>
where
    P: Parametric + ?Sized,
    F: FnMut(&P) -> f64,
{
    (0..model.num_params())
        .map(|i| {
            let orig = model.param(i);
            model.set_param(i, orig + FD_STEP);
            let up = loss(model);
            model.set_param(i, orig - FD_STEP);
            let down = loss(model);
            model.set_param(i, orig);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `max_i |a_i − n_i| / max(1e-8, |n_i|)`; 0 for empty inputs.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-8))
        .fold(0.0, f64::max)
}

/// Compare backpropagation against central differences for one example.
pub fn finite_diff_check(net: &Network, input: &[f64], target: &[f64], loss: LossKind) -> Result<f64> {
    let out = net.forward(input)?;
    let (_, grad_out) = loss.evaluate(&out, target)?;
    let analytic = net.backward(input, &grad_out)?.flat();
    let mut probe = net.clone();
    let numeric = numeric_gradient(&mut probe, |n| {
        let out = n.forward(input).expect("shape checked");
        loss.evaluate(&out, target).expect("shape checked").0
    });
    Ok(max_relative_error(&analytic, &numeric))
}
