//! Scalar training losses: cross-entropy, the skin-type confusion loss, and
//! the weighted total that combines them with the alignment term.

use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logs. Keeps degenerate
/// inputs bounded; a `clamped` flag reports when it fired.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability vector: entries in `[0, 1]` summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput {
                context: "probability vector",
            });
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidValue {
                    context: "probability vector",
                    message: format!("entry {i} is {p}, expected a value in [0, 1]"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue {
                context: "probability vector",
                message: format!("entries sum to {sum}, expected 1 within 1e-9"),
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A loss value together with a flag telling whether the probability floor
/// was applied anywhere inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedLoss {
    pub value: f64,
    pub clamped: bool,
}

/// Nonnegative weights of the auxiliary loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the confusion term.
    pub alpha: f64,
    /// Weight of the alignment term.
    pub beta_align: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta_align: 0.8,
        }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidValue {
                context: "loss weights",
                message: format!("alpha must be nonnegative, got {}", self.alpha),
            });
        }
        if !(self.beta_align.is_finite() && self.beta_align >= 0.0) {
            return Err(Error::InvalidValue {
                context: "loss weights",
                message: format!("beta_align must be nonnegative, got {}", self.beta_align),
            });
        }
        Ok(())
    }
}

/// Negative log-likelihood of the true class: `-ln p[true_index]`.
pub fn cross_entropy(p: &ProbabilityVector, true_index: usize) -> Result<ClampedLoss> {
    if true_index >= p.len() {
        return Err(Error::IndexOutOfRange {
            index: true_index,
            len: p.len(),
        });
    }
    let raw = p.probs()[true_index];
    let clamped = raw < PROB_FLOOR;
    let value = -raw.max(PROB_FLOOR).ln();
    Ok(ClampedLoss { value, clamped })
}

/// Confusion loss `-(1/N) sum_i ln p_i`, minimized (at `ln N`) by the
/// uniform vector; driving it down erases group information from the
/// sensitive branch.
pub fn confusion_loss(p_s: &ProbabilityVector) -> ClampedLoss {
    let n = p_s.len() as f64;
    let mut clamped = false;
    let mut total = 0.0;
    for &p in p_s.probs() {
        if p < PROB_FLOOR {
            clamped = true;
        }
        total += p.max(PROB_FLOOR).ln();
    }
    ClampedLoss {
        value: -total / n,
        clamped,
    }
}

/// Which parameter group a loss term is allowed to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Backbone, classifier head, and alignment parameters.
    Shared,
    /// Only the sensitive-attribute head.
    SensitiveBranchOnly,
}

/// One weighted term of the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub name: &'static str,
    /// The term's contribution after weighting.
    pub weighted_value: f64,
    pub param_group: ParamGroup,
}

/// The combined training loss with its per-term routing.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub terms: Vec<LossTerm>,
}

/// Combines `l_c + alpha * l_conf + l_s + beta_align * l_got`.
///
/// The sensitive-branch term is tagged [`ParamGroup::SensitiveBranchOnly`]
/// so a caller owning the network parameters can honor the optimization
/// split.
pub fn total_loss(
    l_c: f64,
    l_conf: f64,
    l_s: f64,
    l_got: f64,
    w: &LossWeights,
) -> Result<TotalLoss> {
    w.validate()?;
    for (name, value) in [
        ("classification", l_c),
        ("confusion", l_conf),
        ("sensitive", l_s),
        ("alignment", l_got),
    ] {
        if !value.is_finite() {
            return Err(Error::InvalidValue {
                context: "total loss",
                message: format!("{name} term is not finite ({value})"),
            });
        }
    }
    let terms = vec![
        LossTerm {
            name: "classification",
            weighted_value: l_c,
            param_group: ParamGroup::Shared,
        },
        LossTerm {
            name: "confusion",
            weighted_value: w.alpha * l_conf,
            param_group: ParamGroup::Shared,
        },
        LossTerm {
            name: "sensitive",
            weighted_value: l_s,
            param_group: ParamGroup::SensitiveBranchOnly,
        },
        LossTerm {
            name: "alignment",
            weighted_value: w.beta_align * l_got,
            param_group: ParamGroup::Shared,
        },
    ];
    let value = terms.iter().map(|t| t.weighted_value).sum();
    Ok(TotalLoss { value, terms })
}
