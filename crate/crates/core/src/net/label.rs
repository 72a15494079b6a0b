use crate::error::{Error, Result};

/// Recovers the training label from the last layer's weight gradient.
///
/// For a single example `∇W = g·xᵀ` with `g = softmax − onehot`, so in every
/// column the label's row is the only one whose sign differs from the rest.
/// Every informative column must agree on the same row.
pub fn label_from_fc_gradients(weight_grad: &[f64], num_classes: usize) -> Result<usize> {
    if num_classes < 3 {
        return Err(Error::AmbiguousLabel(format!(
            "sign rule needs at least 3 classes, got {num_classes}"
        )));
    }
    if weight_grad.is_empty() || !weight_grad.len().is_multiple_of(num_classes) {
        return Err(Error::AmbiguousLabel(format!(
            "gradient of length {} is not a {num_classes}-row matrix",
            weight_grad.len()
        )));
    }
    let cols = weight_grad.len() / num_classes;
    let scale = weight_grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::AmbiguousLabel("gradient is zero or non-finite".into()));
    }
    let mut found: Option<usize> = None;
    for col in 0..cols {
        let column = (0..num_classes).map(|r| weight_grad[r * cols + col]);
        if column.clone().any(|v| v == 0.0) || column.clone().all(|v| v.abs() < scale * 1e-12) {
            continue;
        }
        let negatives: Vec<usize> = column.clone().enumerate().filter(|(_, v)| *v < 0.0).map(|(r, _)| r).collect();
        let odd = match negatives.len() {
            1 => negatives[0],
            n if n == num_classes - 1 => (0..num_classes).find(|r| !negatives.contains(r)).expect("one positive row"),
            _ => return Err(Error::AmbiguousLabel(format!("column {col} has no unique odd-signed row"))),
        };
        match found {
            None => found = Some(odd),
            Some(prev) if prev != odd => {
                return Err(Error::AmbiguousLabel(format!(
                    "columns disagree on the label ({prev} vs {odd})"
                )))
            }
            _ => {}
        }
    }
    found.ok_or_else(|| Error::AmbiguousLabel("no informative column".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_is_ambiguous() {
        assert!(matches!(
            label_from_fc_gradients(&[0.0; 30], 10),
            Err(Error::AmbiguousLabel(_))
        ));
    }

    #[test]
    fn outer_product_with_mixed_sign_inputs() {
        let g = [0.1, -0.6, 0.2, 0.3];
        let x = [0.5, -0.25, 2.0];
        let m: Vec<f64> = g.iter().flat_map(|gi| x.iter().map(move |xi| gi * xi)).collect();
        assert_eq!(label_from_fc_gradients(&m, 4).unwrap(), 1);
    }

    #[test]
    fn sum_of_two_examples_is_rejected() {
        // two examples with different labels: rows 0 and 2 both negative
        let g = [-0.5, 0.2, -0.4, 0.7];
        let m: Vec<f64> = g
            .iter()
            .flat_map(|gi| [1.0, 0.5].into_iter().map(move |xi| gi * xi))
            .collect();
        assert!(label_from_fc_gradients(&m, 4).is_err());
    }
}
