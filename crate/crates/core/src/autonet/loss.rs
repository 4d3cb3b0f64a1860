//! Class-weighted cross-entropy for sigmoid (binary) and softmax heads.
//!
//! The loss is the batch mean of `w[y] * -ln(max(p[y], 1e-7))`, divided by the
//! batch size rather than by the sum of weights.

use super::activation::{sigmoid_scalar, softmax_row};
use super::tensor::{Scalar, Tensor};
use super::{AutonetError, Result};

pub const PROB_FLOOR: f64 = 1e-7;

fn check_targets<T: Scalar>(
    op: &'static str,
    pred: &Tensor<T>,
    target: &[usize],
    weights: &[T],
) -> Result<(usize, usize)> {
    let [n, width] = pred.dims(op)?;
    let classes = if width == 1 { 2 } else { width };
    if target.len() != n {
        return Err(AutonetError::ShapeMismatch {
            op,
            expected: vec![n],
            got: vec![target.len()],
        });
    }
    if weights.len() != classes {
        return Err(AutonetError::InvalidArgument(format!(
            "{op}: weight vector has {} entries for {classes} classes",
            weights.len()
        )));
    }
    if let Some(&bad) = target.iter().find(|&&y| y >= classes) {
        return Err(AutonetError::InvalidArgument(format!(
            "{op}: target {bad} out of range for {classes} classes"
        )));
    }
    Ok((n, width))
}

/// Weighted cross-entropy over predicted probabilities.
///
/// A `n×1` prediction is read as the sigmoid probability of class 1 and needs
/// a two-entry weight vector; a `n×C` prediction is a softmax row per sample.
pub fn weighted_cross_entropy<T: Scalar>(pred: &Tensor<T>, target: &[usize], weights: &[T]) -> Result<T> {
    let (n, width) = check_targets("weighted_cross_entropy", pred, target, weights)?;
    let floor = T::lit(PROB_FLOOR);
    let mut total = T::zero();
    for (i, &y) in target.iter().enumerate() {
        let p = if width == 1 {
            let p1 = pred.data()[i];
            if y == 1 {
                p1
            } else {
                T::one() - p1
            }
        } else {
            pred.data()[i * width + y]
        };
        total = total + weights[y] * -(p.max(floor)).ln();
    }
    Ok(total / T::lit(n as f64))
}

/// Loss, probabilities and the gradient of the loss with respect to the
/// pre-activation logits, for a sigmoid (`n×1`) or softmax (`n×C`) head.
pub struct LossOutput<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    pub dlogits: Tensor<T>,
}

pub fn weighted_cross_entropy_with_logits<T: Scalar>(
    logits: &Tensor<T>,
    target: &[usize],
    weights: &[T],
) -> Result<LossOutput<T>> {
    let (n, width) = check_targets("weighted_cross_entropy_with_logits", logits, target, weights)?;
    let floor = T::lit(PROB_FLOOR);
    let scale = T::one() / T::lit(n as f64);
    let mut probs = logits.clone();
    let mut dlogits = Tensor::zeros(logits.shape());
    let mut total = T::zero();
    if width == 1 {
        for (i, &y) in target.iter().enumerate() {
            let p = sigmoid_scalar(logits.data()[i]);
            probs.data_mut()[i] = p;
            let py = if y == 1 { p } else { T::one() - p };
            total = total + weights[y] * -(py.max(floor)).ln();
            if py > floor {
                let yv = if y == 1 { T::one() } else { T::zero() };
                dlogits.data_mut()[i] = weights[y] * (p - yv) * scale;
            }
        }
    } else {
        for (i, &y) in target.iter().enumerate() {
            let row = &mut probs.data_mut()[i * width..(i + 1) * width];
            softmax_row(row);
            let py = row[y];
            total = total + weights[y] * -(py.max(floor)).ln();
            if py > floor {
                let g = &mut dlogits.data_mut()[i * width..(i + 1) * width];
                for (j, (gj, &pj)) in g.iter_mut().zip(row.iter()).enumerate() {
                    let delta = if j == y { T::one() } else { T::zero() };
                    *gj = weights[y] * (pj - delta) * scale;
                }
            }
        }
    }
    Ok(LossOutput {
        loss: total * scale,
        probs,
        dlogits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_predictions_hit_the_floor() {
        let p = t(&[2, 3], &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let l = weighted_cross_entropy(&p, &[0, 2], &[1.0; 3]).unwrap();
        assert!(l <= 1e-6);
        let p = t(&[2, 1], &[1.0, 0.0]);
        assert!(weighted_cross_entropy(&p, &[1, 0], &[1.0, 1.0]).unwrap() <= 1e-6);
    }

    #[test]
    fn unit_weights_equal_plain_cross_entropy() {
        let p = t(&[3, 2], &[0.7, 0.3, 0.2, 0.8, 0.5, 0.5]);
        let y = [0, 1, 1];
        let plain = -(0.7f64.ln() + 0.8f64.ln() + 0.5f64.ln()) / 3.0;
        let l = weighted_cross_entropy(&p, &y, &[1.0, 1.0]).unwrap();
        assert!((l - plain).abs() < 1e-12);
    }

    #[test]
    fn weighted_mean_divides_by_batch() {
        let p = t(&[2, 2], &[0.6, 0.4, 0.1, 0.9]);
        let l1 = -(0.6f64).ln();
        let l = weighted_cross_entropy(&p, &[0, 1], &[2.0, 0.0]).unwrap();
        assert!((l - 2.0 * l1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn weight_length_must_match() {
        let p = t(&[1, 3], &[0.2, 0.3, 0.5]);
        assert!(weighted_cross_entropy(&p, &[0], &[1.0, 1.0]).is_err());
        let p = t(&[1, 1], &[0.2]);
        assert!(weighted_cross_entropy(&p, &[0], &[1.0]).is_err());
        assert!(weighted_cross_entropy(&p, &[0, 1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let z = t(&[3, 4], &[0.1, -2.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0, -0.5, 0.25, 2.0, -3.0]);
        let y = [2, 0, 3];
        let w = [0.5, 1.0, 2.0, 3.0];
        let out = weighted_cross_entropy_with_logits(&z, &y, &w).unwrap();
        let direct = weighted_cross_entropy(&out.probs, &y, &w).unwrap();
        assert!((out.loss - direct).abs() < 1e-12);

        let z = t(&[2, 1], &[0.3, -1.7]);
        let out = weighted_cross_entropy_with_logits(&z, &[1, 0], &[1.5, 0.5]).unwrap();
        let direct = weighted_cross_entropy(&out.probs, &[1, 0], &[1.5, 0.5]).unwrap();
        assert!((out.loss - direct).abs() < 1e-12);
    }

    #[test]
    fn logit_gradient_matches_central_differences() {
        let z = t(&[2, 3], &[0.4, -1.0, 2.0, 1.5, 0.0, -0.3]);
        let y = [1, 2];
        let w = [1.0, 3.0, 0.5];
        let g = weighted_cross_entropy_with_logits(&z, &y, &w).unwrap().dlogits;
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp.data_mut()[i] += 1e-6;
            let mut zm = z.clone();
            zm.data_mut()[i] -= 1e-6;
            let lp = weighted_cross_entropy_with_logits(&zp, &y, &w).unwrap().loss;
            let lm = weighted_cross_entropy_with_logits(&zm, &y, &w).unwrap().loss;
            let fd = (lp - lm) / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-8, "{i}: {fd} vs {}", g.data()[i]);
        }
    }
}
