//! Counterfactual debiasing: subtract the trigger-bias and label-bias
//! predictions from the full prediction, and grid-search the two subtraction
//! weights on a dev split.

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationConfig;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Metric, Scope};
use crate::pipeline::{self, PipelineParams};
use crate::types::{Categorical, Decision};

/// Subtraction weights: `beta1` scales the trigger-only prediction, `beta2`
/// the empty (label-prior) prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCoefficients {
    pub beta1: f64,
    pub beta2: f64,
}

impl BiasCoefficients {
    pub const ZERO: BiasCoefficients = BiasCoefficients { beta1: 0.0, beta2: 0.0 };

    fn norm_sq(&self) -> f64 {
        self.beta1 * self.beta1 + self.beta2 * self.beta2
    }
}

impl Default for BiasCoefficients {
    fn default() -> Self {
        BiasCoefficients::ZERO
    }
}

/// The three model outputs for one instance: full input, trigger-only view
/// (y̌), and the constant empty view (ȳ).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTriple {
    pub full: Categorical,
    pub trigger: Categorical,
    pub empty: Categorical,
}

impl PredictionTriple {
    pub fn new(full: Categorical, trigger: Categorical, empty: Categorical) -> Result<Self> {
        if trigger.len() != full.len() || empty.len() != full.len() {
            return Err(Error::DimensionMismatch {
                expected: full.len(),
                actual: trigger.len().max(empty.len()),
            });
        }
        Ok(PredictionTriple { full, trigger, empty })
    }

    pub fn k(&self) -> usize {
        self.full.len()
    }
}

/// `y′ = y − β₁·y̌ − β₂·ȳ`, element-wise, no clipping — the result may leave
/// `[0, 1]`; renormalization happens downstream.
pub fn debias(triple: &PredictionTriple, betas: &BiasCoefficients) -> Vec<f64> {
    triple
        .full
        .as_slice()
        .iter()
        .zip(triple.trigger.as_slice())
        .zip(triple.empty.as_slice())
        .map(|((&y, &yt), &ye)| y - betas.beta1 * yt - betas.beta2 * ye)
        .collect()
}

/// Grid-search settings for the β coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSearchConfig {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub metric: Metric,
    /// Score argmax decisions directly instead of post-abstention decisions.
    pub pre_abstention: bool,
}

impl Default for BetaSearchConfig {
    fn default() -> Self {
        BetaSearchConfig {
            lower: -1.0,
            upper: 1.0,
            step: 0.1,
            metric: Metric::MacroF1,
            pre_abstention: false,
        }
    }
}

impl BetaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() || !self.upper.is_finite() || self.lower > self.upper {
            return Err(Error::Config(format!(
                "beta bounds must satisfy lower ≤ upper, got ({}, {})",
                self.lower, self.upper
            )));
        }
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::Config(format!(
                "beta grid step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// The 1-D grid `{lower, lower+step, …}` clipped at `upper`, with values
    /// snapped to 9 decimals so exact grid points (0.0 in particular) come
    /// out bit-clean.
    pub fn axis(&self) -> Vec<f64> {
        let n = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let v = self.lower + i as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .collect()
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub betas: BiasCoefficients,
    pub score: f64,
}

/// Search result: the winning coefficients plus the full evaluated grid for
/// inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSearch {
    pub betas: BiasCoefficients,
    pub score: f64,
    pub grid: Vec<GridPoint>,
}

/// Exhaustively evaluate the β grid on a labeled dev set and return the
/// maximizer of the metric.
///
/// Each grid point runs the full downstream pipeline (debias → normalize →
/// inverse softmax → temperature → abstain) with the given calibration and
/// scores the resulting decisions; with `pre_abstention` the abstention gate
/// is bypassed and plain argmax decisions are scored. Abstained rows are
/// dropped from scoring, but committed predictions on abstention-gold rows
/// count against precision. Ties break toward the smallest `‖(β₁, β₂)‖`,
/// then lexicographically — so the do-nothing point wins when nothing beats
/// it.
pub fn search_betas(
    dev: &[(PredictionTriple, Option<usize>)],
    calibration: &CalibrationConfig,
    config: &BetaSearchConfig,
) -> Result<BetaSearch> {
    config.validate()?;
    if dev.is_empty() {
        return Err(Error::EmptyDataset("beta search"));
    }
    let k = dev[0].0.k();
    for (triple, gold) in dev {
        if triple.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: triple.k(),
            });
        }
        if let Some(g) = gold {
            if *g >= k {
                return Err(Error::Record(format!(
                    "gold index {g} out of range for {k}-class triple"
                )));
            }
        }
    }

    let axis = config.axis();
    let mut grid = Vec::with_capacity(axis.len() * axis.len());
    let mut best: Option<GridPoint> = None;
    for &beta1 in &axis {
        for &beta2 in &axis {
            let betas = BiasCoefficients { beta1, beta2 };
            let params = PipelineParams {
                betas,
                calibration: *calibration,
            };
            let mut matrix = ConfusionMatrix::new(k);
            for (triple, gold) in dev {
                let out = pipeline::apply(triple, &params)?;
                let decision = if config.pre_abstention {
                    Decision::Predict(out.y_hat.argmax())
                } else {
                    out.decision
                };
                matrix.record(*gold, &decision);
            }
            let point = GridPoint {
                betas,
                score: matrix.f1(config.metric, Scope::NonAbstained),
            };
            grid.push(point);
            let improves = match &best {
                None => true,
                Some(b) => {
                    point.score > b.score
                        || (point.score == b.score
                            && (point.betas.norm_sq() < b.betas.norm_sq()
                                || (point.betas.norm_sq() == b.betas.norm_sq()
                                    && (beta1, beta2)
                                        < (b.betas.beta1, b.betas.beta2))))
                }
            };
            if improves {
                best = Some(point);
            }
        }
    }
    let best = best.expect("grid is nonempty");
    Ok(BetaSearch {
        betas: best.betas,
        score: best.score,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::CalibrationConfig;

    fn cat(v: &[f64]) -> Categorical {
        Categorical::new(v.to_vec()).unwrap()
    }

    fn triple(full: &[f64], trig: &[f64], empty: &[f64]) -> PredictionTriple {
        PredictionTriple::new(cat(full), cat(trig), cat(empty)).unwrap()
    }

    #[test]
    fn debias_hand_computed_example() {
        let t = triple(&[0.6, 0.3, 0.1], &[0.5, 0.4, 0.1], &[0.8, 0.1, 0.1]);
        let betas = BiasCoefficients { beta1: -0.4, beta2: 0.6 };
        let y = debias(&t, &betas);
        let want = [0.6 + 0.2 - 0.48, 0.3 + 0.16 - 0.06, 0.1 + 0.04 - 0.06];
        for (got, want) in y.iter().zip(want) {
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }
        assert!((y[0] - 0.32).abs() < 1e-15);
        assert!((y[1] - 0.40).abs() < 1e-15);
        assert!((y[2] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn zero_betas_are_bitwise_identity() {
        let t = triple(&[0.6, 0.3, 0.1], &[0.5, 0.4, 0.1], &[0.8, 0.1, 0.1]);
        let y = debias(&t, &BiasCoefficients::ZERO);
        assert_eq!(y, t.full.as_slice());
    }

    #[test]
    fn identical_views_with_unit_beta_sum_cancel() {
        // Dyadic values so the cancellation is exact.
        let y = [0.5, 0.25, 0.25];
        let t = triple(&y, &y, &y);
        let out = debias(&t, &BiasCoefficients { beta1: 0.5, beta2: 0.5 });
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn debias_is_linear_in_each_argument() {
        let betas = BiasCoefficients { beta1: 0.3, beta2: -0.2 };
        let t1 = triple(&[0.6, 0.3, 0.1], &[0.5, 0.4, 0.1], &[0.8, 0.1, 0.1]);
        let t2 = triple(&[0.2, 0.5, 0.3], &[0.1, 0.6, 0.3], &[0.3, 0.3, 0.4]);
        let d1 = debias(&t1, &betas);
        let d2 = debias(&t2, &betas);
        // Mix the triples 50/50 — the debiased output must mix the same way.
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| 0.5 * x + 0.5 * y).collect()
        };
        let tm = PredictionTriple::new(
            cat(&mix(t1.full.as_slice(), t2.full.as_slice())),
            cat(&mix(t1.trigger.as_slice(), t2.trigger.as_slice())),
            cat(&mix(t1.empty.as_slice(), t2.empty.as_slice())),
        )
        .unwrap();
        let dm = debias(&tm, &betas);
        for i in 0..3 {
            assert!((dm[i] - (0.5 * d1[i] + 0.5 * d2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn default_grid_has_441_points() {
        let cfg = BetaSearchConfig::default();
        let axis = cfg.axis();
        assert_eq!(axis.len(), 21);
        assert_eq!(axis[0], -1.0);
        assert_eq!(axis[20], 1.0);
        assert!(axis.contains(&0.0), "0 must be an exact grid point");
        assert_eq!(axis[10], 0.0);
    }

    /// Dev set whose counterfactual views carry no information: score is
    /// constant over the grid, so the tie-break must return (0, 0).
    #[test]
    fn signal_free_views_tie_break_to_zero() {
        let dev: Vec<(PredictionTriple, Option<usize>)> = vec![
            (triple(&[0.8, 0.1, 0.1], &[1.0 / 3.0; 3], &[1.0 / 3.0; 3]), Some(0)),
            (triple(&[0.1, 0.8, 0.1], &[1.0 / 3.0; 3], &[1.0 / 3.0; 3]), Some(1)),
            (triple(&[0.1, 0.1, 0.8], &[1.0 / 3.0; 3], &[1.0 / 3.0; 3]), Some(2)),
        ];
        let result = search_betas(
            &dev,
            &CalibrationConfig::identity(3),
            &BetaSearchConfig {
                pre_abstention: true,
                ..BetaSearchConfig::default()
            },
        )
        .unwrap();
        assert_eq!(result.betas, BiasCoefficients::ZERO);
        assert_eq!(result.score, 1.0);
        assert_eq!(result.grid.len(), 441);
    }

    /// Planted trigger bias: the full prediction is dragged toward a wrong
    /// label that the trigger view exposes; subtracting it recovers gold.
    fn biased_dev() -> Vec<(PredictionTriple, Option<usize>)> {
        let mut dev = Vec::new();
        for gold in 0..3usize {
            for shift in 0..3usize {
                let wrong = (gold + 1) % 3;
                // Full leans 0.45/0.45 between gold and the biased label with
                // a small perturbation so rows are not all identical.
                let bump = 0.01 * shift as f64;
                let mut full = [0.1 / 3.0; 3];
                full[gold] += 0.45 + bump;
                full[wrong] += 0.45 - bump;
                let norm: f64 = full.iter().sum();
                let full: Vec<f64> = full.iter().map(|v| v / norm).collect();
                let mut trig = [0.1; 3];
                trig[wrong] = 0.8;
                dev.push((triple(&full, &trig, &[1.0 / 3.0; 3]), Some(gold)));
            }
        }
        dev
    }

    #[test]
    fn search_finds_grid_maximum_and_matches_exhaustive_oracle() {
        let dev = biased_dev();
        let calib = CalibrationConfig::identity(3);
        let cfg = BetaSearchConfig::default();
        let result = search_betas(&dev, &calib, &cfg).unwrap();

        // The do-nothing baseline is beatable here.
        let zero_score = result
            .grid
            .iter()
            .find(|p| p.betas == BiasCoefficients::ZERO)
            .unwrap()
            .score;
        assert!(
            result.score > zero_score,
            "debiasing should help: {} vs {zero_score}",
            result.score
        );
        assert!(result.betas.beta1 > 0.0, "trigger bias should be subtracted");

        // Exhaustive re-evaluation: the returned point is the grid max under
        // the documented tie-break.
        let mut oracle = result.grid[0];
        for p in &result.grid {
            let better = p.score > oracle.score
                || (p.score == oracle.score
                    && (p.betas.norm_sq() < oracle.betas.norm_sq()
                        || (p.betas.norm_sq() == oracle.betas.norm_sq()
                            && (p.betas.beta1, p.betas.beta2)
                                < (oracle.betas.beta1, oracle.betas.beta2))));
            if better {
                oracle = *p;
            }
        }
        assert_eq!(result.betas, oracle.betas);
        assert_eq!(result.score, oracle.score);
        // Bounds respected.
        assert!((-1.0..=1.0).contains(&result.betas.beta1));
        assert!((-1.0..=1.0).contains(&result.betas.beta2));
    }

    #[test]
    fn search_is_invariant_to_dev_ordering() {
        let mut dev = biased_dev();
        let calib = CalibrationConfig::identity(3);
        let cfg = BetaSearchConfig::default();
        let a = search_betas(&dev, &calib, &cfg).unwrap();
        dev.reverse();
        let b = search_betas(&dev, &calib, &cfg).unwrap();
        assert_eq!(a.betas, b.betas);
        assert_eq!(a.score, b.score);
    }

    #[test]
    fn search_validates_inputs() {
        assert!(search_betas(&[], &CalibrationConfig::identity(3), &BetaSearchConfig::default())
            .is_err());
        let dev = biased_dev();
        let bad = BetaSearchConfig {
            step: 0.0,
            ..BetaSearchConfig::default()
        };
        assert!(search_betas(&dev, &CalibrationConfig::identity(3), &bad).is_err());
        let rev = BetaSearchConfig {
            lower: 1.0,
            upper: -1.0,
            ..BetaSearchConfig::default()
        };
        assert!(search_betas(&dev, &CalibrationConfig::identity(3), &rev).is_err());
    }
}
