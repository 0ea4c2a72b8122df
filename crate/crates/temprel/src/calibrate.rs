//! Post-debias renormalization, temperature recalibration, reliability
//! diagnostics (ECE / NLL), and entropy-threshold abstention.

use crate::error::{Error, Result};
use crate::numeric::{entropy, log_sum_exp, softmax};
use crate::types::{Categorical, Decision, Logits};

/// Default clip value ε for [`normalize`].
pub const DEFAULT_EPS: f64 = 1e-6;
/// Default number of equal-width confidence bins.
pub const DEFAULT_ECE_BINS: usize = 10;
/// Default temperature search range (fitting runs on ln T inside these).
pub const TEMP_SEARCH_LO: f64 = 0.05;
pub const TEMP_SEARCH_HI: f64 = 20.0;
/// Golden-section tolerance on ln T.
const GOLDEN_TOL: f64 = 1e-4;

/// Knobs of the calibration stage, grouped because they travel together
/// through artifacts and the CLI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    /// Small positive clip value for renormalization (Eq.-8-style clipping).
    pub eps: f64,
    /// Temperature divisor applied to logits.
    pub temperature: f64,
    /// Entropy threshold τ in nats; entropy at or above τ abstains.
    pub entropy_threshold: f64,
    /// Number of reliability bins M.
    pub ece_bins: usize,
}

impl CalibrationConfig {
    /// Identity calibration for a K-class pipeline: no temperature change and
    /// a threshold at the entropy ceiling (abstains only on exactly-uniform
    /// output).
    pub fn identity(k: usize) -> Self {
        CalibrationConfig {
            eps: DEFAULT_EPS,
            temperature: 1.0,
            entropy_threshold: (k as f64).ln(),
            ece_bins: DEFAULT_ECE_BINS,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !self.eps.is_finite() || self.eps <= 0.0 || self.eps > 1e-3 {
            return Err(Error::Config(format!(
                "eps must lie in (0, 1e-3], got {}",
                self.eps
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be a positive real, got {}",
                self.temperature
            )));
        }
        // The ceiling check is slack by more than nine-significant-digit
        // rounding so that a threshold of exactly ln K survives a trip
        // through a JSON artifact.
        let ln_k = (k as f64).ln();
        if !self.entropy_threshold.is_finite()
            || self.entropy_threshold < 0.0
            || self.entropy_threshold > ln_k + 1e-7
        {
            return Err(Error::Config(format!(
                "entropy threshold must lie in [0, ln {k} = {ln_k:.6}], got {}",
                self.entropy_threshold
            )));
        }
        if self.ece_bins == 0 {
            return Err(Error::Config("ece_bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Clip a possibly-invalid score vector back onto the simplex: entries below
/// ε are raised to ε, entries above 1−ε lowered to 1−ε, then the vector is
/// divided by its sum.
///
/// The written rule replaces *negative* values; clipping the whole of
/// `[0, ε)` is the minimal strengthening that makes the output strictly
/// interior, which the ln-based inverse softmax downstream requires (its own
/// contract shows exact zeros being clipped the same way). Renormalization
/// preserves argmax. A degenerate all-clipped vector comes out uniform.
pub fn normalize(y_prime: &[f64], eps: f64) -> Result<Categorical> {
    if y_prime.len() < 2 {
        return Err(Error::Domain(format!(
            "normalize needs at least 2 coordinates, got {}",
            y_prime.len()
        )));
    }
    if !eps.is_finite() || eps <= 0.0 || eps > 1e-3 {
        return Err(Error::Config(format!("eps must lie in (0, 1e-3], got {eps}")));
    }
    if y_prime.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalize input"));
    }
    let clipped: Vec<f64> = y_prime
        .iter()
        .map(|&v| v.clamp(eps, 1.0 - eps))
        .collect();
    let sum: f64 = clipped.iter().sum();
    Categorical::new(clipped.into_iter().map(|v| v / sum).collect())
}

/// `ŷ = σ(z′ / T)`. Preserves argmax for every `T > 0`.
pub fn apply_temperature(z_prime: &Logits, t: f64) -> Result<Categorical> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!(
            "temperature must be a positive real, got {t}"
        )));
    }
    let scaled = Logits::new(z_prime.as_slice().iter().map(|&z| z / t).collect())?;
    Ok(softmax(&scaled))
}

/// Summed negative log-likelihood of the gold classes under `σ(z/T)`.
pub fn nll_at_temperature(logits: &[Logits], golds: &[usize], t: f64) -> Result<f64> {
    if logits.len() != golds.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            actual: golds.len(),
        });
    }
    let mut nll = 0.0;
    for (z, &g) in logits.iter().zip(golds) {
        if g >= z.len() {
            return Err(Error::Record(format!(
                "gold index {g} out of range for {}-class logits",
                z.len()
            )));
        }
        let scaled: Vec<f64> = z.as_slice().iter().map(|&v| v / t).collect();
        // ln σ(z/T)[g] = z_g/T − ln Σ exp(z/T)
        nll -= scaled[g] - log_sum_exp(&scaled);
    }
    Ok(nll)
}

/// Fit the temperature by golden-section search on `ln T` over the default
/// range, minimizing dev-set NLL. Guarantees the returned temperature is
/// never worse than `T = 1` on the same set.
pub fn fit_temperature(dev_logits: &[Logits], dev_labels: &[usize]) -> Result<f64> {
    fit_temperature_in(dev_logits, dev_labels, TEMP_SEARCH_LO, TEMP_SEARCH_HI)
}

pub fn fit_temperature_in(
    dev_logits: &[Logits],
    dev_labels: &[usize],
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if dev_logits.is_empty() {
        return Err(Error::EmptyDataset("temperature fitting"));
    }
    if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi <= lo {
        return Err(Error::Config(format!(
            "temperature bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let f = |u: f64| nll_at_temperature(dev_logits, dev_labels, u.exp());

    let invphi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a = lo.ln();
    let mut b = hi.ln();
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d)?;
        }
    }
    let t_star = ((a + b) / 2.0).exp();
    // Recalibration must never hurt relative to doing nothing.
    if nll_at_temperature(dev_logits, dev_labels, t_star)?
        > nll_at_temperature(dev_logits, dev_labels, 1.0)?
    {
        return Ok(1.0);
    }
    Ok(t_star)
}

/// One confidence bin of a reliability diagram. Empty bins keep zero means so
/// every report has exactly M rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub nll: f64,
}

/// Bin predictions by confidence (= max probability) into `M` equal-width
/// bins `((m−1)/M, m/M]` and compute the expected calibration error
/// `Σ (|B_m|/n) · |acc(B_m) − conf(B_m)|`, plus the summed NLL.
pub fn ece(predictions: &[(Categorical, usize)], bins: usize) -> Result<ReliabilityReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyDataset("reliability report"));
    }
    if bins == 0 {
        return Err(Error::Config("ece needs at least 1 bin".into()));
    }
    let m = bins;
    let mut count = vec![0usize; m];
    let mut conf_sum = vec![0.0f64; m];
    let mut acc_sum = vec![0.0f64; m];
    let mut nll = 0.0;
    for (y, gold) in predictions {
        if *gold >= y.len() {
            return Err(Error::Record(format!(
                "gold index {gold} out of range for {}-class prediction",
                y.len()
            )));
        }
        let conf = y.max_prob();
        // conf ∈ (0, 1] ⇒ ceil(conf·M) ∈ {1, …, M}.
        let idx = ((conf * m as f64).ceil() as usize).clamp(1, m) - 1;
        count[idx] += 1;
        conf_sum[idx] += conf;
        if y.argmax() == *gold {
            acc_sum[idx] += 1.0;
        }
        nll -= y.as_slice()[*gold].max(f64::MIN_POSITIVE).ln();
    }
    let n = predictions.len() as f64;
    let mut report_bins = Vec::with_capacity(m);
    let mut ece_val = 0.0;
    for i in 0..m {
        let (mean_conf, mean_acc) = if count[i] > 0 {
            (conf_sum[i] / count[i] as f64, acc_sum[i] / count[i] as f64)
        } else {
            (0.0, 0.0)
        };
        if count[i] > 0 {
            ece_val += (count[i] as f64 / n) * (mean_acc - mean_conf).abs();
        }
        report_bins.push(ReliabilityBin {
            lo: i as f64 / m as f64,
            hi: (i + 1) as f64 / m as f64,
            count: count[i],
            mean_confidence: mean_conf,
            mean_accuracy: mean_acc,
        });
    }
    Ok(ReliabilityReport {
        bins: report_bins,
        ece: ece_val,
        nll,
    })
}

/// Entropy-gated selective prediction: abstain when `H(ŷ) ≥ τ`, otherwise
/// commit to the argmax. The boundary case abstains (`≥`, not `>`): when the
/// uncertainty estimate sits exactly at the threshold the safe outcome wins.
pub fn abstain(y_hat: &Categorical, tau: f64) -> Decision {
    if entropy(y_hat) >= tau {
        Decision::Vague
    } else {
        Decision::Predict(y_hat.argmax())
    }
}

/// Result of threshold fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    pub tau: f64,
    /// Micro-F1 of the (K+1)-way decision at `tau` on the dev set.
    pub score: f64,
    /// True when the dev set had no abstention-labeled examples and `tau`
    /// fell back to ln K (never abstain).
    pub fell_back: bool,
}

/// Pick τ maximizing micro-F1 of the `(K+1)`-way decision (relation labels
/// plus abstention) over candidate thresholds: every distinct dev entropy,
/// plus 0 and ln K. Ties go to the smallest τ.
pub fn fit_threshold(dev: &[(Categorical, Option<usize>)]) -> Result<ThresholdFit> {
    if dev.is_empty() {
        return Err(Error::EmptyDataset("threshold fitting"));
    }
    let k = dev[0].0.len();
    for (y, gold) in dev {
        if y.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: y.len(),
            });
        }
        if let Some(g) = gold {
            if *g >= k {
                return Err(Error::Record(format!(
                    "gold index {g} out of range for {k}-class prediction"
                )));
            }
        }
    }
    let ln_k = (k as f64).ln();
    if dev.iter().all(|(_, gold)| gold.is_some()) {
        return Ok(ThresholdFit {
            tau: ln_k,
            score: score_threshold(dev, k, ln_k),
            fell_back: true,
        });
    }

    let mut candidates: Vec<f64> = dev.iter().map(|(y, _)| entropy(y)).collect();
    candidates.push(0.0);
    candidates.push(ln_k);
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("entropies are finite"));
    candidates.dedup();

    let mut best_tau = candidates[0];
    let mut best_score = score_threshold(dev, k, best_tau);
    for &tau in &candidates[1..] {
        let s = score_threshold(dev, k, tau);
        // Strict improvement only: equal scores keep the smaller τ.
        if s > best_score {
            best_score = s;
            best_tau = tau;
        }
    }
    Ok(ThresholdFit {
        tau: best_tau,
        score: best_score,
        fell_back: false,
    })
}

fn score_threshold(dev: &[(Categorical, Option<usize>)], k: usize, tau: f64) -> f64 {
    use crate::metrics::{ConfusionMatrix, Scope};
    let mut m = ConfusionMatrix::new(k);
    for (y, gold) in dev {
        m.record(*gold, &abstain(y, tau));
    }
    m.micro_f1(Scope::WithVague)
}
