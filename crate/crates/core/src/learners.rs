//! Within-task learners.
//!
//! `ogd_run` is the non-private inference path whose averaged iterate stays on
//! the task owner's side. `noisy_sgd_run` is the (ε, δ)-DP path whose averaged
//! iterate is released to the meta-learner. Both average exactly the iterates
//! at which a gradient was evaluated: the starting point is included and the
//! point produced by the last update is not.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{add_assign, clip_in_place, dist_sq_raw, ParamDomain, ParamVector};
use crate::losses::LossFunction;
use crate::privacy::{GaussianNoise, NoisySgdPlan, PrivacyParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OgdConfig {
    step_size_eta: f64,
    num_steps: usize,
}

impl OgdConfig {
    pub fn new(step_size_eta: f64, num_steps: usize) -> Result<Self> {
        if !(step_size_eta > 0.0 && step_size_eta.is_finite()) {
            return Err(Error::invalid(format!(
                "OGD step size must be positive and finite, got {step_size_eta}"
            )));
        }
        if num_steps == 0 {
            return Err(Error::invalid("OGD needs at least one step"));
        }
        Ok(OgdConfig {
            step_size_eta,
            num_steps,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step_size_eta
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerOutput {
    pub averaged_iterate: ParamVector,
    pub final_iterate: ParamVector,
    /// The visited iterates `θ₁..θₙ`, when recording was requested.
    pub trajectory: Option<Vec<ParamVector>>,
}

impl LearnerOutput {
    /// Per-step squared distances from the recorded iterates to `reference`.
    pub fn squared_distances_to(&self, reference: &ParamVector) -> Option<Vec<f64>> {
        self.trajectory.as_ref().map(|iters| {
            iters
                .iter()
                .map(|x| dist_sq_raw(x.as_slice(), reference.as_slice()))
                .collect()
        })
    }
}

fn check_start(init: &ParamVector, dom: &ParamDomain) -> Result<()> {
    check_dim(dom.dim(), init.dim())?;
    if !dom.contains(init) {
        return Err(Error::invalid("starting point lies outside the domain"));
    }
    Ok(())
}

fn check_losses(losses: &[LossFunction], dim: usize) -> Result<()> {
    for l in losses {
        check_dim(dim, l.dim())?;
    }
    Ok(())
}

/// Projected online gradient descent over `losses` in order.
pub fn ogd_run(
    losses: &[LossFunction],
    init: &ParamVector,
    cfg: &OgdConfig,
    dom: &ParamDomain,
) -> Result<LearnerOutput> {
    ogd_run_with(losses, init, cfg, dom, false)
}

pub fn ogd_run_with(
    losses: &[LossFunction],
    init: &ParamVector,
    cfg: &OgdConfig,
    dom: &ParamDomain,
    record: bool,
) -> Result<LearnerOutput> {
    if losses.is_empty() {
        return Err(Error::invalid("OGD needs a nonempty loss sequence"));
    }
    if losses.len() < cfg.num_steps {
        return Err(Error::invalid(format!(
            "OGD configured for {} steps but only {} losses were given",
            cfg.num_steps,
            losses.len()
        )));
    }
    check_start(init, dom)?;
    check_losses(&losses[..cfg.num_steps], dom.dim())?;

    let d = dom.dim();
    let mut theta = init.as_slice().to_vec();
    let mut sum = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut trajectory = record.then(|| Vec::with_capacity(cfg.num_steps));
    for loss in &losses[..cfg.num_steps] {
        add_assign(&mut sum, &theta);
        if let Some(t) = trajectory.as_mut() {
            t.push(ParamVector::from_raw(theta.clone()));
        }
        loss.gradient_into(&theta, &mut grad);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.step_size_eta * g;
        }
        dom.project_in_place(&mut theta);
    }
    Ok(finish(sum, cfg.num_steps, theta, trajectory))
}

fn finish(
    mut sum: Vec<f64>,
    count: usize,
    last: Vec<f64>,
    trajectory: Option<Vec<ParamVector>>,
) -> LearnerOutput {
    let c = count as f64;
    sum.iter_mut().for_each(|x| *x /= c);
    LearnerOutput {
        averaged_iterate: ParamVector::from_raw(sum),
        final_iterate: ParamVector::from_raw(last),
        trajectory,
    }
}

/// How noisy SGD picks the loss evaluated at each step.
#[derive(Debug, Clone, Copy)]
pub enum SampleOrder<'a> {
    /// One index per step, uniform over the `m` losses, drawn from the run's stream.
    UniformWithReplacement,
    /// A fixed index sequence of at least `n` entries.
    Pinned(&'a [usize]),
}

/// Noisy projected SGD: clip each sampled gradient to the plan's bound, add
/// isotropic Gaussian noise, step, project.
pub fn noisy_sgd_run<R: Rng + ?Sized>(
    losses: &[LossFunction],
    init: &ParamVector,
    plan: &NoisySgdPlan,
    dom: &ParamDomain,
    rng: &mut R,
) -> Result<LearnerOutput> {
    noisy_sgd_run_with(
        losses,
        init,
        plan,
        dom,
        SampleOrder::UniformWithReplacement,
        false,
        rng,
    )
}

pub fn noisy_sgd_run_with<R: Rng + ?Sized>(
    losses: &[LossFunction],
    init: &ParamVector,
    plan: &NoisySgdPlan,
    dom: &ParamDomain,
    order: SampleOrder<'_>,
    record: bool,
    rng: &mut R,
) -> Result<LearnerOutput> {
    let m = losses.len();
    if m == 0 {
        return Err(Error::invalid("noisy SGD needs at least one loss"));
    }
    check_start(init, dom)?;
    check_losses(losses, dom.dim())?;
    let n = plan.steps_n();
    if let SampleOrder::Pinned(idx) = order {
        if idx.len() < n {
            return Err(Error::invalid(format!(
                "pinned sample order has {} entries, plan needs {n}",
                idx.len()
            )));
        }
        if let Some(bad) = idx[..n].iter().find(|&&i| i >= m) {
            return Err(Error::invalid(format!(
                "pinned sample index {bad} out of range for {m} losses"
            )));
        }
    }

    let noise = GaussianNoise::new(plan.noise_variance())?;
    let d = dom.dim();
    let step = plan.step_size();
    let mut theta = init.as_slice().to_vec();
    let mut sum = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut trajectory = record.then(|| Vec::with_capacity(n));
    for k in 0..n {
        add_assign(&mut sum, &theta);
        if let Some(t) = trajectory.as_mut() {
            t.push(ParamVector::from_raw(theta.clone()));
        }
        let i = match order {
            SampleOrder::UniformWithReplacement => rng.random_range(0..m),
            SampleOrder::Pinned(idx) => idx[k],
        };
        losses[i].gradient_into(&theta, &mut grad);
        clip_in_place(&mut grad, plan.clip_bound());
        noise.perturb(&mut grad, rng);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
        dom.project_in_place(&mut theta);
    }
    Ok(finish(sum, n, theta, trajectory))
}

/// Which sample-size term enters the noisy-SGD scale `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaVariant {
    /// `max{√(d·ln(1/δ))/(ε·m), 1/√m}`
    #[default]
    UnitSampleTerm,
    /// `max{√(d·ln(1/δ))/(ε·m), 1/(G·√m)}`
    LipschitzScaledSampleTerm,
}

impl GammaVariant {
    /// Config-file spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            GammaVariant::UnitSampleTerm => "lemma_a3",
            GammaVariant::LipschitzScaledSampleTerm => "theorem1",
        }
    }
}

impl std::str::FromStr for GammaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma_a3" => Ok(GammaVariant::UnitSampleTerm),
            "theorem1" => Ok(GammaVariant::LipschitzScaledSampleTerm),
            other => Err(Error::invalid(format!(
                "unknown gamma_variant `{other}` (expected lemma_a3 or theorem1)"
            ))),
        }
    }
}

/// Noisy-SGD scale `γ = (120·G/α)·max{√(d·ln(1/δ))/(ε·m), s}` with `s` set by `variant`.
pub fn meta_gamma(
    lipschitz_g: f64,
    alpha: f64,
    d: usize,
    m: usize,
    privacy: &PrivacyParams,
    variant: GammaVariant,
) -> f64 {
    let m = m as f64;
    let privacy_term = (d as f64 * privacy.log_inv_delta()).sqrt() / (privacy.epsilon() * m);
    let sample_term = match variant {
        GammaVariant::UnitSampleTerm => 1.0 / m.sqrt(),
        GammaVariant::LipschitzScaledSampleTerm => 1.0 / (lipschitz_g * m.sqrt()),
    };
    120.0 * lipschitz_g / alpha * privacy_term.max(sample_term)
}

/// OGD step size `(V + 1/(α·√m)) / (G·√m)`.
///
/// Used both at test time from the learned initialization and for the
/// training-time inference path. The form without the `1/G` factor is not
/// provided.
pub fn test_time_eta(similarity_v: f64, alpha: f64, lipschitz_g: f64, m: usize) -> f64 {
    let sqrt_m = (m as f64).sqrt();
    (similarity_v + 1.0 / (alpha * sqrt_m)) / (lipschitz_g * sqrt_m)
}
