//! Shared numeric primitives: softmax and its inverse, Shannon entropy,
//! log-sum-exp, argmax, and the significant-digit rounding used to keep
//! serialized artifacts byte-stable.

use crate::error::{Error, Result};
use crate::types::{Categorical, Logits};

/// `ln Σ exp(zₖ)`, stabilized by subtracting the max before exponentiating.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}

/// `softmax(z)ₖ = exp(zₖ) / Σ exp(zⱼ)` with max-subtraction, so arbitrarily
/// large finite logits never overflow.
pub fn softmax(z: &Logits) -> Categorical {
    let zs = z.as_slice();
    let m = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = zs.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    // sum ≥ 1 because the max coordinate contributes exp(0) = 1, so every
    // quotient lands in [0, 1] and the result is a valid distribution.
    Categorical::new(exps.into_iter().map(|e| e / sum).collect())
        .expect("softmax of finite logits is a valid distribution")
}

/// Shannon entropy in nats, with the `0 · ln 0 = 0` convention.
pub fn entropy(y: &Categorical) -> f64 {
    y.as_slice()
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Element-wise `ln yₖ`: the canonical preimage of `y` under softmax (unique
/// up to an additive constant). Every coordinate must lie strictly inside
/// `(0, 1)`.
pub fn inverse_softmax(y: &Categorical) -> Result<Logits> {
    for (i, &p) in y.as_slice().iter().enumerate() {
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::Domain(format!(
                "inverse softmax needs coordinates strictly inside (0, 1); coordinate {i} = {p}"
            )));
        }
    }
    Logits::new(y.as_slice().iter().map(|&p| p.ln()).collect())
}

/// Index of the largest value; the first such index on exact ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Round to 9 significant decimal digits. All floats written to artifacts go
/// through this, so re-running a stage with the same seed reproduces files
/// byte for byte regardless of how the value was computed.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn round_sig9_vec(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| round_sig9(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL * b.abs().max(1.0)
    }

    #[test]
    fn softmax_matches_reference() {
        // mpmath: softmax([1, 2, 3])
        let z = Logits::new(vec![1.0, 2.0, 3.0]).unwrap();
        let y = softmax(&z);
        let want = [
            0.09003057317038046,
            0.24472847105479764,
            0.6652409557748219,
        ];
        for (got, want) in y.as_slice().iter().zip(want) {
            assert!(close(*got, want), "got {got}, want {want}");
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let z1 = Logits::new(vec![0.3, -1.2, 4.5]).unwrap();
        let z2 = Logits::new(vec![0.3 + 100.0, -1.2 + 100.0, 4.5 + 100.0]).unwrap();
        let y1 = softmax(&z1);
        let y2 = softmax(&z2);
        for (a, b) in y1.as_slice().iter().zip(y2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let z = Logits::new(vec![1e4, -1e4, 0.0]).unwrap();
        let y = softmax(&z);
        assert!((y.as_slice()[0] - 1.0).abs() < 1e-300);
        assert_eq!(y.argmax(), 0);
        let sum: f64 = y.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_reference() {
        // mpmath: H(0.7, 0.2, 0.1) in nats
        let y = Categorical::new(vec![0.7, 0.2, 0.1]).unwrap();
        assert!(close(entropy(&y), 0.8018185525433373));
    }

    #[test]
    fn entropy_bounds() {
        let onehot = Categorical::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(entropy(&onehot), 0.0);
        let u = Categorical::uniform(3).unwrap();
        assert!(close(entropy(&u), 3.0_f64.ln()));
    }

    #[test]
    fn inverse_softmax_matches_reference() {
        // mpmath: ln(0.5) = −ln 2, ln(0.3), ln(0.2)
        let y = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        let z = inverse_softmax(&y).unwrap();
        let want = [
            -std::f64::consts::LN_2,
            -1.2039728043259361,
            -1.6094379124341003,
        ];
        for (got, want) in z.as_slice().iter().zip(want) {
            assert!(close(*got, want), "got {got}, want {want}");
        }
    }

    #[test]
    fn inverse_softmax_rejects_boundary() {
        let y = Categorical::new(vec![1.0, 0.0]).unwrap();
        assert!(inverse_softmax(&y).is_err());
    }

    #[test]
    fn softmax_inverse_round_trip() {
        let y = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        let back = softmax(&inverse_softmax(&y).unwrap());
        for (a, b) in back.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_agrees_with_direct_computation() {
        let z: [f64; 3] = [0.1, 0.2, 0.3];
        let direct: f64 = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!(close(log_sum_exp(&z), direct));
        // And stays finite where the direct computation overflows.
        assert!(close(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2.0_f64.ln()));
    }

    #[test]
    #[allow(clippy::excessive_precision)] // the input must outrun 9 digits
    fn round_sig9_is_stable_and_close() {
        let x = 0.123456789123456789;
        let r = round_sig9(x);
        assert_eq!(r, 0.123456789);
        assert_eq!(round_sig9(r), r);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(-1.0 / 3.0), -0.333333333);
        let big = 6.0221407599e23;
        assert!(((round_sig9(big) - big) / big).abs() < 1e-9);
    }
}
