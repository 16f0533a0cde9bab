use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-12;

/// `-ln(pred[target])` with the probability floored at [`LOG_FLOOR`].
pub fn cross_entropy_index(pred: &[f64], target: usize) -> f64 {
    -pred[target].max(LOG_FLOOR).ln()
}

/// Categorical cross-entropy against a one-hot target.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "prediction has {} classes, target {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().sum();
    if pred.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("prediction is not a distribution (sum {sum})")));
    }
    let hot: Vec<usize> = target
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect();
    match hot.as_slice() {
        [i] if target[*i] == 1.0 => Ok(cross_entropy_index(pred, *i)),
        _ => Err(Error::InvalidInput("target is not one-hot".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let u6 = [1.0 / 6.0; 6];
        let mut t = [0.0; 6];
        t[4] = 1.0;
        assert!((cross_entropy(&u6, &t).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&u6, &t).unwrap() - 1.7918).abs() < 1e-4);
        let u7 = [1.0 / 7.0; 7];
        let mut t = [0.0; 7];
        t[0] = 1.0;
        assert!((cross_entropy(&u7, &t).unwrap() - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn floor_and_errors() {
        assert!((cross_entropy(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 27.631021115928547).abs() < 1e-9);
        assert!(cross_entropy(&[0.5, 0.6], &[1.0, 0.0]).is_err());
        assert!(cross_entropy(&[0.5, 0.5], &[1.0, 1.0]).is_err());
        assert!(cross_entropy(&[0.5, 0.5], &[0.0, 0.0]).is_err());
        assert!(cross_entropy(&[1.0], &[1.0, 0.0]).is_err());
    }
}
