//! Closed-form calibration of the within-task Gaussian mechanism.
//!
//! All logarithms are natural. The noisy-SGD plan uses the step budget
//! `n = ⌊min{m/8, ε²m²/(32·d·ln(1/δ))}⌋` (clamped to at least one step) and
//! per-coordinate noise variance `σ² = 8·n·G²·ln(1/δ) / (m²·ε²)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
    group_size: u32,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_group_size(epsilon, delta, 1)
    }

    pub fn with_group_size(epsilon: f64, delta: f64, group_size: u32) -> Result<Self> {
        let mut problems = Vec::new();
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            problems.push(format!(
                "epsilon must be positive and finite, got {epsilon}"
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            problems.push(format!("delta must lie in (0, 1), got {delta}"));
        }
        if group_size == 0 {
            problems.push("group size must be at least 1".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::invalid(problems.join("; ")));
        }
        Ok(PrivacyParams {
            epsilon,
            delta,
            group_size,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn group_size(&self) -> u32 {
        self.group_size
    }

    pub fn log_inv_delta(&self) -> f64 {
        (1.0 / self.delta).ln()
    }

    pub fn guarantee(&self) -> DpGuarantee {
        DpGuarantee {
            epsilon: self.epsilon,
            delta: self.delta,
        }
    }
}

/// An `(ε, δ)` pair as reported by the accounting helpers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpGuarantee {
    /// A guarantee with `δ ≥ 1` says nothing.
    pub fn is_vacuous(&self) -> bool {
        self.delta >= 1.0
    }
}

pub fn step_budget(m: usize, privacy: &PrivacyParams, d: usize) -> usize {
    let m = m as f64;
    let eps = privacy.epsilon;
    let by_samples = m / 8.0;
    let by_privacy = eps * eps * m * m / (32.0 * d as f64 * privacy.log_inv_delta());
    let n = by_samples.min(by_privacy).floor();
    if n >= 1.0 {
        n as usize
    } else {
        1
    }
}

pub fn noise_variance(n: usize, m: usize, lipschitz_g: f64, privacy: &PrivacyParams) -> f64 {
    let m = m as f64;
    let eps = privacy.epsilon;
    8.0 * n as f64 * lipschitz_g * lipschitz_g * privacy.log_inv_delta() / (m * m * eps * eps)
}

/// `(k·ε, k·e^{(k−1)ε}·δ)` for groups of `k = privacy.group_size()` records.
/// The result may be vacuous; check [`DpGuarantee::is_vacuous`].
pub fn group_dp(privacy: &PrivacyParams) -> DpGuarantee {
    let k = privacy.group_size as f64;
    DpGuarantee {
        epsilon: k * privacy.epsilon,
        delta: k * ((k - 1.0) * privacy.epsilon).exp() * privacy.delta,
    }
}

/// Basic sequential composition: sums of the ε's and δ's.
pub fn compose_sequential(budgets: &[DpGuarantee]) -> Result<DpGuarantee> {
    if budgets.is_empty() {
        return Err(Error::invalid("cannot compose an empty list of guarantees"));
    }
    Ok(budgets.iter().fold(
        DpGuarantee {
            epsilon: 0.0,
            delta: 0.0,
        },
        |acc, b| DpGuarantee {
            epsilon: acc.epsilon + b.epsilon,
            delta: acc.delta + b.delta,
        },
    ))
}

/// Isotropic Gaussian perturbation with a fixed per-coordinate variance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoise {
    variance: f64,
    normal: Option<Normal<f64>>,
}

impl GaussianNoise {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be finite and nonnegative, got {variance}"
            )));
        }
        let normal = if variance > 0.0 {
            Some(Normal::new(0.0, variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(GaussianNoise { variance, normal })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Adds one draw per coordinate. Zero variance consumes no randomness.
    pub fn perturb<R: Rng + ?Sized>(&self, v: &mut [f64], rng: &mut R) {
        if let Some(normal) = &self.normal {
            for x in v.iter_mut() {
                *x += normal.sample(rng);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.perturb(&mut v, rng);
        v
    }
}

/// The per-task noisy-SGD schedule: number of steps, step size, noise and clip bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisySgdPlan {
    steps_n: usize,
    step_size: f64,
    noise_variance: f64,
    clip_bound: f64,
}

impl NoisySgdPlan {
    /// Derives `n` and `σ²` from `(m, ε, δ, d, G)` and sets the step size to `γ/(G·√n)`.
    pub fn calibrate(
        m: usize,
        privacy: &PrivacyParams,
        d: usize,
        lipschitz_g: f64,
        gamma: f64,
    ) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid(
                "sample count and dimension must be positive",
            ));
        }
        if !(lipschitz_g > 0.0 && lipschitz_g.is_finite()) {
            return Err(Error::invalid(format!(
                "Lipschitz constant must be positive to calibrate a plan, got {lipschitz_g}"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let steps_n = step_budget(m, privacy, d);
        Ok(NoisySgdPlan {
            steps_n,
            step_size: gamma / (lipschitz_g * (steps_n as f64).sqrt()),
            noise_variance: noise_variance(steps_n, m, lipschitz_g, privacy),
            clip_bound: lipschitz_g,
        })
    }

    /// A plan with explicit values, bypassing calibration.
    pub fn custom(
        steps_n: usize,
        step_size: f64,
        noise_variance: f64,
        clip_bound: f64,
    ) -> Result<Self> {
        if steps_n == 0 {
            return Err(Error::invalid("a plan needs at least one step"));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::invalid("step size must be positive and finite"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid(
                "noise variance must be nonnegative and finite",
            ));
        }
        if !(clip_bound > 0.0 && clip_bound.is_finite()) {
            return Err(Error::invalid("clip bound must be positive and finite"));
        }
        Ok(NoisySgdPlan {
            steps_n,
            step_size,
            noise_variance,
            clip_bound,
        })
    }

    /// Same schedule with the noise variance replaced. Used for the non-private baseline.
    pub fn with_noise_variance(self, noise_variance: f64) -> Result<Self> {
        Self::custom(
            self.steps_n,
            self.step_size,
            noise_variance,
            self.clip_bound,
        )
    }

    pub fn steps_n(&self) -> usize {
        self.steps_n
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn p(eps: f64, delta: f64) -> PrivacyParams {
        PrivacyParams::new(eps, delta).unwrap()
    }

    #[test]
    fn step_budget_examples() {
        // min{100, 640000/(320·ln 1e5) ≈ 173.7}
        assert_eq!(step_budget(800, &p(1.0, 1e-5), 10), 100);
        // min{100, 0.0625·640000/(320·ln 1e5) ≈ 10.86}
        assert_eq!(step_budget(800, &p(0.25, 1e-5), 10), 10);
        assert_eq!(step_budget(8, &p(10.0, 0.1), 1), 1);
        assert_eq!(step_budget(3, &p(0.01, 0.5), 50), 1);
    }

    #[test]
    fn noise_variance_examples() {
        let s = noise_variance(100, 800, 1.0, &p(1.0, 1e-5));
        assert!((s - 800.0 * 1e5f64.ln() / 640000.0).abs() < 1e-16);
        assert!((s - 0.0143911).abs() < 1e-7);
        assert_eq!(noise_variance(100, 800, 0.0, &p(1.0, 1e-5)), 0.0);
        let s = noise_variance(1, 1, 1.0, &p(1.0, (-1f64).exp()));
        assert!((s - 8.0).abs() < 1e-14);
    }

    #[test]
    fn group_dp_examples() {
        let g = group_dp(&p(1.0, 1e-6));
        assert_eq!((g.epsilon, g.delta), (1.0, 1e-6));

        let g = group_dp(&PrivacyParams::with_group_size(0.5, 1e-6, 3).unwrap());
        assert_eq!(g.epsilon, 1.5);
        assert!((g.delta - 3.0 * 1f64.exp() * 1e-6).abs() < 1e-20);
        assert!((g.delta - 8.15485e-6).abs() < 1e-11);

        let g = group_dp(&PrivacyParams::with_group_size(1.0, 1e-6, 3).unwrap());
        assert_eq!(g.epsilon, 3.0);
        assert!((g.delta - 2.21671e-5).abs() < 1e-10);
        assert!(!g.is_vacuous());

        let g = group_dp(&PrivacyParams::with_group_size(2.0, 0.1, 5).unwrap());
        assert!(g.is_vacuous());
    }

    #[test]
    fn compose_examples() {
        let one = DpGuarantee {
            epsilon: 1.0,
            delta: 1e-5,
        };
        assert_eq!(compose_sequential(&[one]).unwrap(), one);
        let two = compose_sequential(&[one, one]).unwrap();
        assert_eq!((two.epsilon, two.delta), (2.0, 2e-5));
        let mixed = compose_sequential(&[
            DpGuarantee {
                epsilon: 0.5,
                delta: 0.0,
            },
            DpGuarantee {
                epsilon: 0.25,
                delta: 1e-6,
            },
        ])
        .unwrap();
        assert_eq!((mixed.epsilon, mixed.delta), (0.75, 1e-6));
        assert!(compose_sequential(&[]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 1e-5).is_err());
        assert!(PrivacyParams::new(1.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::with_group_size(1.0, 1e-5, 0).is_err());
    }

    #[test]
    fn plan_satisfies_its_own_formula() {
        let priv_ = p(1.0, 1e-5);
        let plan = NoisySgdPlan::calibrate(800, &priv_, 10, 1.0, 4.0).unwrap();
        assert_eq!(plan.steps_n(), 100);
        assert_eq!(
            plan.noise_variance(),
            8.0 * 100.0 * 1.0 * priv_.log_inv_delta() / (800.0 * 800.0 * 1.0)
        );
        assert_eq!(plan.step_size(), 4.0 / 10.0);
        assert_eq!(plan.clip_bound(), 1.0);
        assert!(NoisySgdPlan::calibrate(800, &priv_, 10, 0.0, 4.0).is_err());
        let quiet = plan.with_noise_variance(0.0).unwrap();
        assert_eq!(quiet.noise_variance(), 0.0);
        assert_eq!(quiet.steps_n(), plan.steps_n());
    }

    #[test]
    fn zero_variance_noise_consumes_no_randomness() {
        let mut a = ChaCha12Rng::seed_from_u64(1);
        let mut b = ChaCha12Rng::seed_from_u64(1);
        let z = GaussianNoise::new(0.0).unwrap();
        assert_eq!(z.sample(4, &mut a), vec![0.0; 4]);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        assert!(GaussianNoise::new(-1.0).is_err());
    }
}
