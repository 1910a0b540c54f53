//! The meta-learner.
//!
//! Each task receives the current initialization `φ_t`, trains two learners
//! from it, and releases only the noisy-SGD average `θ̄_t`. The meta-learner
//! plays follow-the-leader on the surrogate losses `½‖θ̄_t − φ‖²`, which is the
//! running mean `φ_{t+1} = (1 − 1/t)·φ_t + θ̄_t/t`. The initialization handed to
//! new tasks is `φ̂ = (1/T)·Σ_{t≤T} φ_t`.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{add_assign, dist_sq, ParamDomain, ParamVector};
use crate::learners::{noisy_sgd_run, ogd_run, OgdConfig};
use crate::privacy::NoisySgdPlan;
use crate::seeding::{stream, Purpose};
use crate::task_env::TaskSource;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaState {
    phi_current: ParamVector,
    task_count: usize,
    phi_running_sum: ParamVector,
    theta_bar_running_sum: ParamVector,
}

impl MetaState {
    pub fn new(phi_init: ParamVector) -> Self {
        let d = phi_init.dim();
        MetaState {
            phi_current: phi_init,
            task_count: 0,
            phi_running_sum: ParamVector::zeros(d),
            theta_bar_running_sum: ParamVector::zeros(d),
        }
    }

    pub fn phi(&self) -> &ParamVector {
        &self.phi_current
    }

    /// Number of meta-updates applied so far.
    pub fn task_count(&self) -> usize {
        self.task_count
    }

    /// `Σ φ_s` over the initializations that were in force for each update.
    pub fn phi_running_sum(&self) -> &ParamVector {
        &self.phi_running_sum
    }

    pub fn theta_bar_running_sum(&self) -> &ParamVector {
        &self.theta_bar_running_sum
    }

    /// `φ̂`, the mean of `φ_1..φ_t`. Before any update this is `φ_1` itself.
    pub fn phi_hat(&self) -> ParamVector {
        if self.task_count == 0 {
            return self.phi_current.clone();
        }
        self.phi_running_sum.scaled(1.0 / self.task_count as f64)
    }
}

pub fn meta_step(state: &MetaState, theta_bar: &ParamVector) -> Result<MetaState> {
    check_dim(state.phi_current.dim(), theta_bar.dim())?;
    let t = (state.task_count + 1) as f64;
    let keep = 1.0 - 1.0 / t;
    let phi: Vec<f64> = state
        .phi_current
        .as_slice()
        .iter()
        .zip(theta_bar.as_slice())
        .map(|(p, b)| keep * p + b / t)
        .collect();
    let mut phi_sum = state.phi_running_sum.as_slice().to_vec();
    add_assign(&mut phi_sum, state.phi_current.as_slice());
    let mut bar_sum = state.theta_bar_running_sum.as_slice().to_vec();
    add_assign(&mut bar_sum, theta_bar.as_slice());
    Ok(MetaState {
        phi_current: ParamVector::from_raw(phi),
        task_count: state.task_count + 1,
        phi_running_sum: ParamVector::from_raw(phi_sum),
        theta_bar_running_sum: ParamVector::from_raw(bar_sum),
    })
}

/// One logical update with the mean of a batch of released parameters.
pub fn meta_step_batched(state: &MetaState, theta_bars: &[ParamVector]) -> Result<MetaState> {
    if theta_bars.is_empty() {
        return Err(Error::invalid("meta update needs a nonempty batch"));
    }
    let mean = ParamVector::mean(theta_bars)?;
    meta_step(state, &mean)
}

/// `½‖θ̄ − φ‖²`
pub fn surrogate_loss(phi: &ParamVector, theta_bar: &ParamVector) -> Result<f64> {
    Ok(0.5 * dist_sq(theta_bar, phi)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_index: usize,
    /// The initialization this task started from.
    pub phi: ParamVector,
    /// Released to the meta-learner.
    pub theta_bar: ParamVector,
    /// Kept by the task owner.
    pub theta_hat: ParamVector,
    pub theta_star: Option<ParamVector>,
    pub surrogate_loss: f64,
    pub excess_risk_hat: Option<f64>,
    pub excess_risk_bar: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetaTrainingConfig {
    pub tasks: usize,
    /// Inference-path OGD; its output never reaches the meta-learner.
    pub ogd: OgdConfig,
    pub plan: NoisySgdPlan,
    /// Defaults to the domain center.
    pub phi_init: Option<ParamVector>,
    /// Seeds the per-task noisy-SGD streams.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MetaTrainingOutcome {
    pub phi_hat: ParamVector,
    pub records: Vec<TaskRecord>,
    pub state: MetaState,
}

/// Runs `cfg.tasks` rounds of private meta-training over `source`.
pub fn run_meta_training<S: TaskSource + ?Sized>(
    source: &mut S,
    cfg: &MetaTrainingConfig,
) -> Result<MetaTrainingOutcome> {
    if cfg.tasks == 0 {
        return Err(Error::invalid("meta-training needs at least one task"));
    }
    let dom: ParamDomain = source.domain().clone();
    let phi_init = cfg.phi_init.clone().unwrap_or_else(|| dom.center().clone());
    check_dim(dom.dim(), phi_init.dim())?;
    if !dom.contains(&phi_init) {
        return Err(Error::invalid(
            "initial meta-parameter lies outside the domain",
        ));
    }

    let mut state = MetaState::new(phi_init);
    let mut records = Vec::with_capacity(cfg.tasks);
    for t in 0..cfg.tasks {
        let task = source.task(t)?;
        let phi = state.phi().clone();

        let theta_hat = ogd_run(&task.losses, &phi, &cfg.ogd, &dom)?.averaged_iterate;
        let mut rng = stream(cfg.seed, t as u64, Purpose::NoisySgd);
        let theta_bar =
            noisy_sgd_run(&task.losses, &phi, &cfg.plan, &dom, &mut rng)?.averaged_iterate;

        let surrogate = surrogate_loss(&phi, &theta_bar)?;
        state = meta_step(&state, &theta_bar)?;

        let truth = task.truth.as_ref();
        records.push(TaskRecord {
            task_index: t,
            excess_risk_hat: truth.and_then(|s| s.exact_gap(&theta_hat)),
            excess_risk_bar: truth.and_then(|s| s.exact_gap(&theta_bar)),
            theta_star: truth.map(|s| s.theta_star.clone()),
            phi,
            theta_bar,
            theta_hat,
            surrogate_loss: surrogate,
        });
    }
    Ok(MetaTrainingOutcome {
        phi_hat: state.phi_hat(),
        records,
        state,
    })
}
