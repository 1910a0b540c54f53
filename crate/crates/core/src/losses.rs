//! Convex per-sample losses and their certified regularity constants.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dist_sq_raw, dot, ParamDomain, ParamVector};
use crate::privacy::PrivacyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossFamily {
    Quadratic,
    Logistic,
}

impl LossFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            LossFamily::Quadratic => "quadratic",
            LossFamily::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for LossFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(LossFamily::Quadratic),
            "logistic" => Ok(LossFamily::Logistic),
            other => Err(Error::invalid(format!(
                "unknown loss family `{other}` (expected quadratic or logistic)"
            ))),
        }
    }
}

/// `(curvature / 2)·‖θ − anchor‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    anchor: ParamVector,
    curvature: f64,
}

impl QuadraticLoss {
    pub fn anchor(&self) -> &ParamVector {
        &self.anchor
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }
}

/// `log(1 + exp(−label·⟨feature, θ⟩))` with `label ∈ {−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLoss {
    feature: ParamVector,
    label: f64,
}

impl LogisticLoss {
    pub fn feature(&self) -> &ParamVector {
        &self.feature
    }

    pub fn label(&self) -> f64 {
        self.label
    }
}

/// A convex loss with value and gradient access. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum LossFunction {
    Quadratic(QuadraticLoss),
    Logistic(LogisticLoss),
}

pub fn make_quadratic(
    anchor: ParamVector,
    curvature: f64,
    dom: &ParamDomain,
) -> Result<LossFunction> {
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(Error::invalid(format!(
            "curvature must be positive and finite, got {curvature}"
        )));
    }
    check_dim(dom.dim(), anchor.dim())?;
    if !dom.contains(&anchor) {
        return Err(Error::invalid("quadratic anchor lies outside the domain"));
    }
    Ok(LossFunction::Quadratic(QuadraticLoss { anchor, curvature }))
}

pub fn make_logistic(feature: ParamVector, label: f64) -> Result<LossFunction> {
    if label != 1.0 && label != -1.0 {
        return Err(Error::invalid(format!(
            "logistic label must be +1 or -1, got {label}"
        )));
    }
    Ok(LossFunction::Logistic(LogisticLoss { feature, label }))
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LossFunction {
    pub fn family(&self) -> LossFamily {
        match self {
            LossFunction::Quadratic(_) => LossFamily::Quadratic,
            LossFunction::Logistic(_) => LossFamily::Logistic,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LossFunction::Quadratic(q) => q.anchor.dim(),
            LossFunction::Logistic(l) => l.feature.dim(),
        }
    }

    pub fn value(&self, theta: &ParamVector) -> Result<f64> {
        check_dim(self.dim(), theta.dim())?;
        Ok(self.value_raw(theta.as_slice()))
    }

    pub fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        check_dim(self.dim(), theta.dim())?;
        let mut g = vec![0.0; theta.dim()];
        self.gradient_into(theta.as_slice(), &mut g);
        Ok(ParamVector::from_raw(g))
    }

    pub(crate) fn value_raw(&self, theta: &[f64]) -> f64 {
        match self {
            LossFunction::Quadratic(q) => {
                0.5 * q.curvature * dist_sq_raw(theta, q.anchor.as_slice())
            }
            LossFunction::Logistic(l) => softplus(-l.label * dot(l.feature.as_slice(), theta)),
        }
    }

    pub(crate) fn gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        match self {
            LossFunction::Quadratic(q) => {
                for ((o, t), a) in out.iter_mut().zip(theta).zip(q.anchor.as_slice()) {
                    *o = q.curvature * (t - a);
                }
            }
            LossFunction::Logistic(l) => {
                let margin = l.label * dot(l.feature.as_slice(), theta);
                let w = -l.label * sigmoid(-margin);
                for (o, x) in out.iter_mut().zip(l.feature.as_slice()) {
                    *o = w * x;
                }
            }
        }
    }
}

/// Certified constants of a loss family over a domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityProfile {
    pub lipschitz_g: f64,
    pub smoothness_beta: f64,
    pub growth_alpha: f64,
}

impl RegularityProfile {
    pub fn new(lipschitz_g: f64, smoothness_beta: f64, growth_alpha: f64) -> Result<Self> {
        for (name, v) in [
            ("lipschitz constant G", lipschitz_g),
            ("smoothness beta", smoothness_beta),
            ("growth alpha", growth_alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(RegularityProfile {
            lipschitz_g,
            smoothness_beta,
            growth_alpha,
        })
    }

    /// Curvature `a` on a domain of diameter `D`: `G = a·D`, `β = a`, `α = a`.
    pub fn quadratic(curvature: f64, dom: &ParamDomain) -> Result<Self> {
        if dom.diameter() == 0.0 {
            return Err(Error::invalid(
                "a zero-diameter domain has no positive Lipschitz constant",
            ));
        }
        Self::new(curvature * dom.diameter(), curvature, curvature)
    }

    /// Features bounded by `max_feature_norm`: `G = r`, `β = r²/4`; `α` is supplied.
    pub fn logistic(max_feature_norm: f64, growth_alpha: f64) -> Result<Self> {
        Self::new(
            max_feature_norm,
            max_feature_norm * max_feature_norm / 4.0,
            growth_alpha,
        )
    }
}

/// Largest smoothness constant compatible with the noisy-SGD analysis:
/// `(G/D)·min{√(m/2), ε·n / (2·√(2·d·ln(1/δ)))}`.
pub fn smoothness_bound(
    lipschitz_g: f64,
    dom: &ParamDomain,
    m: usize,
    privacy: &PrivacyParams,
    n: usize,
) -> Result<f64> {
    let diameter = dom.diameter();
    if diameter == 0.0 {
        return Err(Error::invalid(
            "smoothness constraint is undefined for a zero-diameter domain",
        ));
    }
    let d = dom.dim() as f64;
    let sample_term = (m as f64 / 2.0).sqrt();
    let privacy_term =
        privacy.epsilon() * n as f64 / (2.0 * (2.0 * d * privacy.log_inv_delta()).sqrt());
    Ok(lipschitz_g / diameter * sample_term.min(privacy_term))
}

pub fn certify_smoothness(
    profile: &RegularityProfile,
    dom: &ParamDomain,
    m: usize,
    privacy: &PrivacyParams,
    n: usize,
) -> Result<bool> {
    let bound = smoothness_bound(profile.lipschitz_g, dom, m, privacy, n)?;
    Ok(profile.smoothness_beta <= bound)
}

/// Max over coordinates of `|central difference − gradient| / max(1, |gradient|)`.
pub fn finite_diff_check(loss: &LossFunction, theta: &ParamVector, h: f64) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let grad = loss.gradient(theta)?;
    let mut probe = theta.as_slice().to_vec();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss.value_raw(&probe);
        probe[i] = orig - h;
        let down = loss.value_raw(&probe);
        probe[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
