use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on `sigmoid(logit)`, returning `(loss, d loss / d logit)`.
///
/// Uses `max(l, 0) - l*y + ln(1 + e^{-|l|})`, which never overflows.
pub fn sigmoid_bce(logit: f64, label: f64) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(Error::NonFinite("sigmoid_bce logit".into()));
    }
    if label != 0.0 && label != 1.0 {
        return Err(Error::Invalid(format!("label must be 0 or 1, got {label}")));
    }
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    Ok((loss, sigmoid(logit) - label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let (l, g) = sigmoid_bce(0.0, 1.0).unwrap();
        assert_eq!(l, std::f64::consts::LN_2);
        assert_eq!(g, -0.5);
        assert!(sigmoid_bce(30.0, 1.0).unwrap().0 < 1e-12);
        // ln(1 + e^-2) evaluated independently
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((sigmoid_bce(-2.0, 0.0).unwrap().0 - expected).abs() < 1e-15);
        assert!((expected - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sigmoid_bce(f64::NAN, 1.0).is_err());
        assert!(sigmoid_bce(0.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_non_negative(l in -80.0f64..80.0, y in 0u8..2) {
            let (loss, g) = sigmoid_bce(l, y as f64).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert!(g.abs() <= 1.0);
        }

        #[test]
        fn zero_logit_is_ln2(y in 0u8..2) {
            prop_assert_eq!(sigmoid_bce(0.0, y as f64).unwrap().0, std::f64::consts::LN_2);
        }
    }
}
