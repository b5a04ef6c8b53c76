use super::NnError;
use crate::scalar::Scalar;

/// Probabilities below this are clipped before taking the log.
pub const PROB_EPSILON: f64 = 1e-7;

/// Mean over rows of `-Σ_k y_k · ln(max(p_k, 1e-7))`.
pub fn categorical_crossentropy<T: Scalar>(probs: &[Vec<T>], onehot: &[Vec<T>]) -> Result<T, NnError> {
    if probs.is_empty() || probs.len() != onehot.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} probability rows vs {} target rows",
            probs.len(),
            onehot.len()
        )));
    }
    let mut total = T::zero();
    for (p, y) in probs.iter().zip(onehot) {
        if p.len() != y.len() {
            return Err(NnError::ShapeMismatch(format!("row widths {} vs {}", p.len(), y.len())));
        }
        total += sample_loss(p, y);
    }
    Ok(total / T::lit(probs.len() as f64))
}

pub(crate) fn sample_loss<T: Scalar>(p: &[T], y: &[T]) -> T {
    let eps = T::lit(PROB_EPSILON);
    let mut l = T::zero();
    for (&pk, &yk) in p.iter().zip(y) {
        if yk != T::zero() {
            l -= yk * pk.max(eps).ln();
        }
    }
    l
}

/// Gradient of `scale · sample_loss(softmax(z), y)` with respect to the logits `z`.
pub(crate) fn softmax_xent_grad<T: Scalar>(p: &[T], y: &[T], scale: T) -> Vec<T> {
    let eps = T::lit(PROB_EPSILON);
    let dp: Vec<T> = p
        .iter()
        .zip(y)
        .map(|(&pk, &yk)| if pk > eps { -yk / pk } else { T::zero() })
        .collect();
    let dot: T = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
    p.iter().zip(&dp).map(|(&pj, &dj)| scale * pj * (dj - dot)).collect()
}

pub fn one_hot<T: Scalar>(class: usize, num_classes: usize) -> Vec<T> {
    (0..num_classes).map(|k| if k == class { T::one() } else { T::zero() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let perfect = categorical_crossentropy(&[vec![0.0f64, 1.0]], &[vec![0.0, 1.0]]).unwrap();
        assert!((0.0..=1.2e-7).contains(&perfect));
        let uniform = categorical_crossentropy(&[vec![0.5f64, 0.5]], &[vec![1.0, 0.0]]).unwrap();
        assert!((uniform - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((uniform - 0.693147).abs() < 1e-6);
        let both =
            categorical_crossentropy(&[vec![0.0f64, 1.0], vec![0.5, 0.5]], &[vec![0.0, 1.0], vec![0.0, 1.0]])
                .unwrap();
        assert!((both - 0.346574).abs() < 1e-6);
    }

    #[test]
    fn clipped_probabilities_bound_the_loss() {
        let l = categorical_crossentropy(&[vec![1.0f64, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert!((l + (1e-7f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(categorical_crossentropy::<f64>(&[vec![0.5, 0.5]], &[]).is_err());
        assert!(categorical_crossentropy(&[vec![0.5f64, 0.5]], &[vec![1.0]]).is_err());
    }
}
