//! Applies the per-instance decision pipeline in its fixed order:
//! debias → renormalize → inverse softmax → temperature → entropy gate.

use crate::calibrate::{self, CalibrationConfig};
use crate::counterfactual::{debias, BiasCoefficients, PredictionTriple};
use crate::error::Result;
use crate::numeric::{entropy, inverse_softmax};
use crate::types::{Categorical, Decision};

/// Everything the pipeline needs beyond the model outputs themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub betas: BiasCoefficients,
    pub calibration: CalibrationConfig,
}

impl PipelineParams {
    /// No debiasing, T = 1, threshold at the entropy ceiling: the pipeline
    /// reduces to argmax-of-(re)normalized-prediction.
    pub fn identity(k: usize) -> Self {
        PipelineParams {
            betas: BiasCoefficients::ZERO,
            calibration: CalibrationConfig::identity(k),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        self.calibration.validate(k)
    }
}

/// Every intermediate the pipeline produces for one instance, kept for
/// artifact output and inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    /// `y′` straight after subtraction, before any clipping.
    pub debiased: Vec<f64>,
    /// Final calibrated distribution `ŷ`.
    pub y_hat: Categorical,
    /// `H(ŷ)` in nats.
    pub entropy: f64,
    pub decision: Decision,
    /// `max(ŷ)` — the confidence consumed by timeline construction.
    pub confidence: f64,
}

/// Run one instance through the fixed stage order.
pub fn apply(triple: &PredictionTriple, params: &PipelineParams) -> Result<PipelineOutcome> {
    let debiased = debias(triple, &params.betas);
    let normalized = calibrate::normalize(&debiased, params.calibration.eps)?;
    let z_prime = inverse_softmax(&normalized)?;
    let y_hat = calibrate::apply_temperature(&z_prime, params.calibration.temperature)?;
    let h = entropy(&y_hat);
    let decision = calibrate::abstain(&y_hat, params.calibration.entropy_threshold);
    let confidence = y_hat.max_prob();
    Ok(PipelineOutcome {
        debiased,
        y_hat,
        entropy: h,
        decision,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::softmax;
    use crate::types::Logits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_triple(rng: &mut ChaCha8Rng, k: usize) -> PredictionTriple {
        let mut draw = || {
            let z = Logits::new((0..k).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            softmax(&z)
        };
        let (full, trigger, empty) = (draw(), draw(), draw());
        PredictionTriple::new(full, trigger, empty).unwrap()
    }

    #[test]
    fn identity_params_reproduce_the_input_distribution() {
        // β = 0 and T = 1: ŷ must equal normalize(y) ≈ y within 1e-9.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let triple = random_triple(&mut rng, 3);
            let out = apply(&triple, &PipelineParams::identity(3)).unwrap();
            for (a, b) in out.y_hat.as_slice().iter().zip(triple.full.as_slice()) {
                assert!((a - b).abs() < 1e-9, "ŷ drifted from y: {a} vs {b}");
            }
            assert_eq!(out.decision, Decision::Predict(triple.full.argmax()));
            assert!((out.confidence - triple.full.max_prob()).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_decisions_equal_argmax_of_softmax() {
        // The end-to-end statement of the no-op configuration: feeding
        // y = softmax(z) through the identity pipeline decides argmax(z).
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let z = Logits::new((0..3).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
            let y = softmax(&z);
            let triple =
                PredictionTriple::new(y.clone(), y.clone(), Categorical::uniform(3).unwrap())
                    .unwrap();
            let out = apply(&triple, &PipelineParams::identity(3)).unwrap();
            assert_eq!(out.decision, Decision::Predict(crate::numeric::argmax(z.as_slice())));
        }
    }

    #[test]
    fn stage_order_is_observable() {
        // Debiasing pushes mass off the argmax; temperature then flattens;
        // the gate abstains. Checks the stages actually compose in order.
        let triple = PredictionTriple::new(
            Categorical::new(vec![0.5, 0.3, 0.2]).unwrap(),
            Categorical::new(vec![0.9, 0.05, 0.05]).unwrap(),
            Categorical::uniform(3).unwrap(),
        )
        .unwrap();
        let params = PipelineParams {
            betas: BiasCoefficients { beta1: 0.5, beta2: 0.0 },
            calibration: CalibrationConfig {
                eps: 1e-6,
                temperature: 4.0,
                entropy_threshold: 1.05,
                ece_bins: 10,
            },
        };
        let out = apply(&triple, &params).unwrap();
        // y′ = (0.05, 0.275, 0.175): debiasing flipped the winner to class 1.
        assert!((out.debiased[0] - 0.05).abs() < 1e-12);
        assert_eq!(out.y_hat.argmax(), 1);
        // T = 4 flattens ŷ enough that H crosses the 1.05-nat gate.
        assert!(out.entropy >= 1.05, "entropy {} should gate", out.entropy);
        assert_eq!(out.decision, Decision::Vague);
        assert!(out.confidence < 0.5);
    }

    #[test]
    fn vague_decision_on_high_entropy_only() {
        let sharp = PredictionTriple::new(
            Categorical::new(vec![0.97, 0.02, 0.01]).unwrap(),
            Categorical::uniform(3).unwrap(),
            Categorical::uniform(3).unwrap(),
        )
        .unwrap();
        let mut params = PipelineParams::identity(3);
        params.calibration.entropy_threshold = 0.9;
        let out = apply(&sharp, &params).unwrap();
        assert_eq!(out.decision, Decision::Predict(0));

        let diffuse = PredictionTriple::new(
            Categorical::new(vec![0.4, 0.35, 0.25]).unwrap(),
            Categorical::uniform(3).unwrap(),
            Categorical::uniform(3).unwrap(),
        )
        .unwrap();
        let out = apply(&diffuse, &params).unwrap();
        assert_eq!(out.decision, Decision::Vague);
    }

    #[test]
    fn debiased_vector_is_exposed_unclipped() {
        let triple = PredictionTriple::new(
            Categorical::new(vec![0.1, 0.9]).unwrap(),
            Categorical::new(vec![0.9, 0.1]).unwrap(),
            Categorical::uniform(2).unwrap(),
        )
        .unwrap();
        let params = PipelineParams {
            betas: BiasCoefficients { beta1: 1.0, beta2: 0.0 },
            calibration: CalibrationConfig::identity(2),
        };
        let out = apply(&triple, &params).unwrap();
        assert!(out.debiased[0] < 0.0, "raw y′ may leave [0,1]: {:?}", out.debiased);
        // …but ŷ is back on the simplex.
        let sum: f64 = out.y_hat.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
