use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::loss::sigmoid_bce;
use super::network::Network;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinates whose analytic and numeric values were both below
    /// `ABS_FLOOR`; counted as agreeing.
    pub negligible: usize,
}

/// Below this magnitude both derivatives count as zero.
pub const ABS_FLOOR: f64 = 1e-10;

fn batch_loss(net: &Network<f64>, input: &Tensor<f64>, labels: &[f64]) -> Result<f64> {
    let fwd = net.forward(input, false)?;
    let mut total = 0.0;
    for (&l, &y) in fwd.logits.iter().zip(labels) {
        total += sigmoid_bce(l, y)?.0;
    }
    Ok(total)
}

/// Compares exact parameter gradients of summed BCE with central
/// differences at random parameter coordinates until `coords` of them had
/// a non-negligible derivative (or `20 * coords` were drawn).
pub fn check_param_gradients(
    net: &Network<f64>,
    input: &Tensor<f64>,
    labels: &[f64],
    coords: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    let fwd = net.forward(input, true)?;
    if fwd.logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logits for {} labels",
            fwd.logits.len(),
            labels.len()
        )));
    }
    let d: Vec<f64> = fwd
        .logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| sigmoid_bce(l, y).map(|r| r.1))
        .collect::<Result<_>>()?;
    let grads = net.backward(&fwd, &d)?;
    let sizes: Vec<usize> = grads.params.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::Empty("network has no parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = net.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        negligible: 0,
    };
    while out.checked - out.negligible < coords && out.checked < 20 * coords {
        let mut k = rng.random_range(0..total);
        let mut p = 0;
        while k >= sizes[p] {
            k -= sizes[p];
            p += 1;
        }
        let analytic = grads.params[p].data()[k];
        let orig = probe.params()[p].data()[k];
        probe.params_mut()[p].data_mut()[k] = orig + step;
        let up = batch_loss(&probe, input, labels)?;
        probe.params_mut()[p].data_mut()[k] = orig - step;
        let down = batch_loss(&probe, input, labels)?;
        probe.params_mut()[p].data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        out.checked += 1;
        if analytic.abs() < ABS_FLOOR && numeric.abs() < ABS_FLOOR {
            out.negligible += 1;
            continue;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        out.max_rel_error = out.max_rel_error.max(rel);
    }
    Ok(out)
}
