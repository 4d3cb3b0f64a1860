//! Central finite-difference verification of [`Network::backward`] in 64-bit
//! precision.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{GradientTape, Mode, Network};
use super::tensor::Tensor;
use super::Result;

/// Scalar objective over the network output: returns the value and its
/// gradient with respect to the output.
pub type Objective<'a> = dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> + 'a;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `(name, relative error)` per parameter tensor, then `"input"`.
    pub entries: Vec<(String, f64)>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

/// Compares analytic gradients with central differences of step `step` for
/// every parameter tensor and the input. When `max_coords` is set, at most
/// that many coordinates per tensor are probed (chosen with `seed`).
///
/// Training mode is used with a generator reseeded from `seed` on every
/// evaluation, so dropout masks are identical across the perturbed passes.
pub fn check_gradients(
    net: &Network<f64>,
    x: &Tensor<f64>,
    objective: &Objective<'_>,
    step: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheck> {
    let eval = |n: &Network<f64>, input: &Tensor<f64>| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = n.forward(input, Mode::Train(&mut rng))?;
        Ok(objective(&y)?.0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = GradientTape::new();
    let y = net.forward_recorded(x, Mode::Train(&mut rng), &mut tape)?;
    let (_, dy) = objective(&y)?;
    let (grads, dx) = net.backward(&tape, &dy)?;

    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut coords = |len: usize| -> Vec<usize> {
        match max_coords {
            Some(m) if m < len => {
                let mut v = sample(&mut pick, len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        }
    };

    let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
    let mut entries = Vec::with_capacity(names.len() + 1);
    let mut probe = net.clone();
    for (pi, name) in names.iter().enumerate() {
        let idx = coords(grads[pi].len());
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = probe.params_mut()[pi].data()[i];
            probe.params_mut()[pi].data_mut()[i] = orig + step;
            let lp = eval(&probe, x)?;
            probe.params_mut()[pi].data_mut()[i] = orig - step;
            let lm = eval(&probe, x)?;
            probe.params_mut()[pi].data_mut()[i] = orig;
            numeric.push((lp - lm) / (2.0 * step));
        }
        let analytic: Vec<f64> = idx.iter().map(|&i| grads[pi].data()[i]).collect();
        entries.push((name.clone(), relative_error(&analytic, &numeric)));
    }

    let idx = coords(x.len());
    let mut numeric = Vec::with_capacity(idx.len());
    let mut xp = x.clone();
    for &i in &idx {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + step;
        let lp = eval(net, &xp)?;
        xp.data_mut()[i] = orig - step;
        let lm = eval(net, &xp)?;
        xp.data_mut()[i] = orig;
        numeric.push((lp - lm) / (2.0 * step));
    }
    let analytic: Vec<f64> = idx.iter().map(|&i| dx.data()[i]).collect();
    entries.push(("input".to_string(), relative_error(&analytic, &numeric)));
    Ok(GradCheck { entries })
}

/// Objective `Σ r ⊙ y` for a fixed probe `r`; its output gradient is `r`.
pub fn linear_probe(r: Tensor<f64>) -> impl Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
    move |y: &Tensor<f64>| {
        if y.shape() != r.shape() {
            return Err(super::AutonetError::ShapeMismatch {
                op: "linear_probe",
                expected: r.shape().to_vec(),
                got: y.shape().to_vec(),
            });
        }
        let v = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        Ok((v, r.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }
}
