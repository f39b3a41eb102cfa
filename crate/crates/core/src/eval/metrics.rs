use nalgebra::DVector;

use crate::error::{Error, Result};

/// Mean of `|x - x_hat|^2 / |x|^2` over samples.
pub fn nmse(estimates: &[DVector<f64>], truths: &[DVector<f64>]) -> Result<f64> {
    if truths.is_empty() {
        return Err(Error::config("NMSE over an empty set"));
    }
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "nmse sample count",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    let mut total = 0.0;
    for (d, (est, truth)) in estimates.iter().zip(truths).enumerate() {
        if est.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                context: "nmse vector length",
                expected: truth.len(),
                actual: est.len(),
            });
        }
        let power = truth.norm_squared();
        if power == 0.0 {
            return Err(Error::ZeroTruth(d));
        }
        total += (truth - est).norm_squared() / power;
    }
    Ok(total / truths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn examples() {
        let truths = vec![v(&[1.0, 0.0, 2.0]), v(&[0.0, -0.5, 0.0])];
        assert_eq!(nmse(&truths, &truths).unwrap(), 0.0);
        let zeros: Vec<_> = truths.iter().map(|t| t * 0.0).collect();
        assert_eq!(nmse(&zeros, &truths).unwrap(), 1.0);
        let doubled: Vec<_> = truths.iter().map(|t| t * 2.0).collect();
        assert_eq!(nmse(&doubled, &truths).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(nmse(&[], &[]), Err(Error::Config(_))));
        let t = vec![v(&[1.0]), v(&[0.0])];
        assert!(matches!(nmse(&t, &t), Err(Error::ZeroTruth(1))));
        assert!(matches!(nmse(&t[..1], &t), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn order_does_not_matter(
            rows in proptest::collection::vec(
                (proptest::collection::vec(0.1f64..2.0, 4), proptest::collection::vec(-2.0f64..2.0, 4)),
                1..12,
            ),
            rot in 0usize..12,
        ) {
            let truths: Vec<_> = rows.iter().map(|(t, _)| v(t)).collect();
            let ests: Vec<_> = rows.iter().map(|(_, e)| v(e)).collect();
            let a = nmse(&ests, &truths).unwrap();
            let k = rot % truths.len();
            let mut t2 = truths.clone();
            let mut e2 = ests.clone();
            t2.rotate_left(k);
            e2.rotate_left(k);
            t2.reverse();
            e2.reverse();
            let b = nmse(&e2, &t2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
