//! Relative improvement metrics between the two healing methods.

use crate::error::{Error, Result};

fn finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("ratio operand".into()))
    }
}

/// Percentage increase of `drdrl_x` over `cl_x`.
pub fn increase_ratio(drdrl_x: f64, cl_x: f64) -> Result<f64> {
    finite(&[drdrl_x, cl_x])?;
    if cl_x == 0.0 {
        return Err(Error::UndefinedRatio("increase ratio with a zero baseline".into()));
    }
    Ok((drdrl_x - cl_x) / cl_x * 100.0)
}

/// Percentage decrease from `cl_x` to `drdrl_x`; negative when the
/// quantity grew.
pub fn decrease_ratio(cl_x: f64, drdrl_x: f64) -> Result<f64> {
    finite(&[drdrl_x, cl_x])?;
    if cl_x == 0.0 {
        return Err(Error::UndefinedRatio("decrease ratio with a zero baseline".into()));
    }
    Ok((cl_x - drdrl_x) / cl_x * 100.0)
}

/// Percentage of pairs adapted.
pub fn adaptability_ratio(adapted: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::UndefinedRatio("adaptability ratio over zero pairs".into()));
    }
    if adapted > total {
        return Err(Error::InvalidArgument(format!("{adapted} adapted out of {total} pairs")));
    }
    Ok(adapted as f64 * 100.0 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!((decrease_ratio(236.0, 185.0).unwrap() - 21.610169491525424).abs() < 1e-12);
        assert_eq!(decrease_ratio(100.0, 120.0).unwrap(), -20.0);
        assert_eq!(decrease_ratio(7.5, 7.5).unwrap(), 0.0);
        assert_eq!(increase_ratio(3.0, 3.0).unwrap(), 0.0);
        let ir = increase_ratio(-122.3, -123.7).unwrap();
        assert!((ir - (-122.3 + 123.7) / -123.7 * 100.0).abs() < 1e-12);
        assert!(matches!(increase_ratio(1.0, 0.0), Err(Error::UndefinedRatio(_))));
        assert!(matches!(decrease_ratio(0.0, 1.0), Err(Error::UndefinedRatio(_))));
        assert!(increase_ratio(f64::NAN, 1.0).is_err());
        assert_eq!(adaptability_ratio(0, 9).unwrap(), 0.0);
        assert_eq!(adaptability_ratio(9, 9).unwrap(), 100.0);
        assert!((adaptability_ratio(12, 54).unwrap() - 22.222222222222221).abs() < 1e-12);
        assert!(adaptability_ratio(0, 0).is_err());
        assert!(adaptability_ratio(3, 2).is_err());
    }

    proptest! {
        #[test]
        fn closed_forms(x in -1e6f64..1e6, y in -1e6f64..1e6) {
            prop_assume!(y.abs() > 1e-3);
            let ir = increase_ratio(x, y).unwrap();
            let dr = decrease_ratio(y, x).unwrap();
            prop_assert!((ir - 100.0 * (x - y) / y).abs() <= 1e-12 * ir.abs().max(1.0));
            prop_assert!((dr - 100.0 * (y - x) / y).abs() <= 1e-12 * dr.abs().max(1.0));
            prop_assert!((ir + dr).abs() <= 1e-12 * ir.abs().max(1.0));
        }

        #[test]
        fn ar_in_range(total in 1usize..10_000, frac in 0.0f64..=1.0) {
            let adapted = (frac * total as f64) as usize;
            let ar = adaptability_ratio(adapted, total).unwrap();
            prop_assert!((0.0..=100.0).contains(&ar));
            prop_assert!((ar - 100.0 * adapted as f64 / total as f64).abs() < 1e-12);
        }
    }
}
