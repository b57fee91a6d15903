use hadanet::Scalar;

use crate::error::{Result, TrainError};

/// Softmax cross-entropy averaged over the batch.
///
/// `logits` is `batch × classes` row-major. Returns the loss and
/// `(softmax − onehot) / batch`.
pub fn cross_entropy<S: Scalar>(logits: &[S], classes: usize, labels: &[usize]) -> Result<(S, Vec<S>)> {
    let batch = labels.len();
    if classes == 0 || logits.len() != batch * classes {
        return Err(TrainError::Config(format!(
            "{} logits for {batch} labels and {classes} classes",
            logits.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::LabelRange { label, classes });
    }
    let inv_batch = S::one() / S::from_count(batch.max(1));
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); logits.len()];
    for ((row, g), &label) in logits.chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            total += *gi;
        }
        loss += total.ln() - (row[label] - max);
        for gi in g.iter_mut() {
            *gi = *gi / total * inv_batch;
        }
        g[label] -= inv_batch;
    }
    Ok((loss * inv_batch, grad))
}

/// Index of the largest logit in every row.
pub fn argmax_rows<S: Scalar>(logits: &[S], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, S::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, _) = cross_entropy(&[0.5f64; 10], 10, &[3]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_give_small_loss() {
        let mut z = vec![0.0f64; 4];
        z[2] = 40.0;
        let (loss, grad) = cross_entropy(&z, 4, &[2]).unwrap();
        assert!(loss < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let z = [0.3f64, -1.2, 2.0, 0.7, 0.1, -0.4];
        let labels = [2, 0];
        let (_, grad) = cross_entropy(&z, 3, &labels).unwrap();
        let h = 1e-6;
        for i in 0..z.len() {
            let mut up = z;
            up[i] += h;
            let mut down = z;
            down[i] -= h;
            let fd = (cross_entropy(&up, 3, &labels).unwrap().0 - cross_entropy(&down, 3, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.0f32; 3], 3, &[3]),
            Err(TrainError::LabelRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn argmax_picks_first_maximum() {
        assert_eq!(argmax_rows(&[1.0f32, 3.0, 3.0, 0.0, -1.0, -2.0], 3), vec![1, 0]);
    }
}
