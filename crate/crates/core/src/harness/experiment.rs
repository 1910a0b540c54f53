use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SweepAxis};
use super::output;
use crate::error::{Error, Result};
use crate::geometry::ParamVector;
use crate::learners::{meta_gamma, ogd_run, test_time_eta, GammaVariant, OgdConfig};
use crate::losses::{certify_smoothness, smoothness_bound};
use crate::meta::{run_meta_training, MetaTrainingConfig, MetaTrainingOutcome};
use crate::privacy::{compose_sequential, group_dp, DpGuarantee, NoisySgdPlan};
use crate::seeding::{derive_seed, Purpose};
use crate::task_env::{empirical_task_variance, Split, SyntheticEnvironment};

/// Everything derived from a config before any training happens.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub m: usize,
    pub d: usize,
    pub lipschitz_g: f64,
    pub smoothness_beta: f64,
    pub growth_alpha: f64,
    pub diameter: f64,
    pub steps_n: usize,
    pub noisy_step_size: f64,
    pub sigma_sq: f64,
    pub gamma: f64,
    pub gamma_variant: GammaVariant,
    /// OGD step size for both the training-time inference path and test time.
    pub eta: f64,
    pub smoothness_bound: f64,
    pub smoothness_certified: bool,
    pub per_task: DpGuarantee,
    pub group_size: u32,
    pub group: DpGuarantee,
    pub visits_per_task: u32,
    pub composed: DpGuarantee,
}

impl CalibrationRecord {
    pub fn plan(&self) -> Result<NoisySgdPlan> {
        NoisySgdPlan::custom(
            self.steps_n,
            self.noisy_step_size,
            self.sigma_sq,
            self.lipschitz_g,
        )
    }
}

impl fmt::Display for CalibrationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "m = {}", self.m)?;
        writeln!(f, "d = {}", self.d)?;
        writeln!(f, "lipschitz_g = {}", self.lipschitz_g)?;
        writeln!(f, "smoothness_beta = {}", self.smoothness_beta)?;
        writeln!(f, "growth_alpha = {}", self.growth_alpha)?;
        writeln!(f, "diameter = {}", self.diameter)?;
        writeln!(f, "n = {}", self.steps_n)?;
        writeln!(f, "noisy_sgd_step_size = {}", self.noisy_step_size)?;
        writeln!(f, "sigma_sq = {}", self.sigma_sq)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "gamma_variant = {}", self.gamma_variant.as_str())?;
        writeln!(f, "eta = {}", self.eta)?;
        writeln!(f, "smoothness_bound = {}", self.smoothness_bound)?;
        writeln!(f, "smoothness_certified = {}", self.smoothness_certified)?;
        writeln!(f, "epsilon = {}", self.per_task.epsilon)?;
        writeln!(f, "delta = {}", self.per_task.delta)?;
        writeln!(f, "group_size = {}", self.group_size)?;
        writeln!(f, "group_epsilon = {}", self.group.epsilon)?;
        writeln!(f, "group_delta = {}", self.group.delta)?;
        if self.group.is_vacuous() {
            writeln!(f, "# group guarantee is vacuous (delta >= 1)")?;
        }
        writeln!(f, "visits_per_task = {}", self.visits_per_task)?;
        writeln!(f, "composed_epsilon = {}", self.composed.epsilon)?;
        writeln!(f, "composed_delta = {}", self.composed.delta)
    }
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationRecord> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let privacy = cfg.privacy()?;
    let reg = cfg.regularity()?;
    let (m, d) = (cfg.samples_per_task, cfg.dim);
    let gamma = meta_gamma(
        reg.lipschitz_g,
        reg.growth_alpha,
        d,
        m,
        &privacy,
        cfg.gamma_variant,
    );
    let plan = NoisySgdPlan::calibrate(m, &privacy, d, reg.lipschitz_g, gamma)?;
    let per_task = privacy.guarantee();
    let visits = vec![per_task; cfg.visits_per_task as usize];
    Ok(CalibrationRecord {
        m,
        d,
        lipschitz_g: reg.lipschitz_g,
        smoothness_beta: reg.smoothness_beta,
        growth_alpha: reg.growth_alpha,
        diameter: dom.diameter(),
        steps_n: plan.steps_n(),
        noisy_step_size: plan.step_size(),
        sigma_sq: plan.noise_variance(),
        gamma,
        gamma_variant: cfg.gamma_variant,
        eta: test_time_eta(cfg.similarity_v, reg.growth_alpha, reg.lipschitz_g, m),
        smoothness_bound: smoothness_bound(reg.lipschitz_g, &dom, m, &privacy, plan.steps_n())?,
        smoothness_certified: certify_smoothness(&reg, &dom, m, &privacy, plan.steps_n())?,
        per_task,
        group_size: privacy.group_size(),
        group: group_dp(&privacy),
        visits_per_task: cfg.visits_per_task,
        composed: compose_sequential(&visits)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// OGD from the privately meta-learned initialization.
    Meta,
    /// OGD from the first meta-initialization, with no meta-learning.
    NoMeta,
    /// OGD from an initialization meta-learned without noise.
    NonprivateMeta,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Meta => "meta",
            Arm::NoMeta => "no_meta",
            Arm::NonprivateMeta => "nonprivate_meta",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s {
            "meta" => Some(Arm::Meta),
            "no_meta" => Some(Arm::NoMeta),
            "nonprivate_meta" => Some(Arm::NonprivateMeta),
            _ => None,
        }
    }
}

/// Mean, sample standard deviation and standard error of the mean.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    /// Excess population risk per evaluation task, by task index.
    pub excess: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub std_error: f64,
}

impl ArmSummary {
    pub fn new(arm: Arm, excess: Vec<f64>) -> Self {
        let (mean, std, std_error) = summarize(&excess);
        ArmSummary {
            arm,
            excess,
            mean,
            std,
            std_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub task_index: usize,
    pub surrogate_loss: f64,
    pub excess_risk_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub run_id: usize,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub calibration: CalibrationRecord,
    pub arms: Vec<ArmSummary>,
    pub train: Vec<TrainRow>,
    pub mean_surrogate_loss: f64,
    pub v_bar_sq_realized: f64,
    pub phi_init: ParamVector,
    pub phi_hat: ParamVector,
    pub warnings: Vec<String>,
    pub wall_clock_s: f64,
}

impl MetricsReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        if let Some(v) = self.axis_value {
            s.push_str(&format!("axis value {v}\n"));
        }
        s.push_str(&format!(
            "n = {}  sigma_sq = {:.6e}  gamma = {:.6}  eta = {:.6e}\n",
            self.calibration.steps_n,
            self.calibration.sigma_sq,
            self.calibration.gamma,
            self.calibration.eta
        ));
        s.push_str(&format!(
            "realized V_bar^2 = {:.6e}  mean surrogate loss = {:.6e}\n",
            self.v_bar_sq_realized, self.mean_surrogate_loss
        ));
        for a in &self.arms {
            s.push_str(&format!(
                "  {:<16} excess risk {:.6e} ± {:.2e} (std {:.3e}, {} tasks)\n",
                a.arm.as_str(),
                a.mean,
                a.std_error,
                a.std,
                a.excess.len()
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

fn meta_train(
    cfg: &ExperimentConfig,
    plan: NoisySgdPlan,
    eta: f64,
    env: &mut SyntheticEnvironment,
) -> Result<MetaTrainingOutcome> {
    let mcfg = MetaTrainingConfig {
        tasks: cfg.t_train,
        ogd: OgdConfig::new(eta, cfg.samples_per_task)?,
        plan,
        phi_init: Some(cfg.phi_init()?),
        seed: cfg.master_seed,
    };
    run_meta_training(env, &mcfg)
}

/// Meta-trains, evaluates every arm on the same evaluation tasks and returns the report.
/// Does not touch the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let started = Instant::now();
    let calibration = calibrate(cfg)?;
    let spec = cfg.env_spec()?;
    let dom = spec.domain().clone();
    let mut warnings = Vec::new();
    if !calibration.smoothness_certified {
        warnings.push(format!(
            "smoothness beta = {} exceeds the certified bound {:.6e}; privacy calibration still holds, the risk guarantee does not",
            calibration.smoothness_beta, calibration.smoothness_bound
        ));
    }
    if calibration.group.is_vacuous() {
        warnings.push(format!(
            "group guarantee for k = {} is vacuous (delta = {:.3e})",
            calibration.group_size, calibration.group.delta
        ));
    }

    let plan = calibration.plan()?;
    let mut train_env = SyntheticEnvironment::new(spec.clone(), cfg.master_seed, Split::Train);
    let private = meta_train(cfg, plan, calibration.eta, &mut train_env)?;
    let nonprivate = if cfg.baseline_nonprivate_meta {
        Some(meta_train(
            cfg,
            plan.with_noise_variance(0.0)?,
            calibration.eta,
            &mut train_env,
        )?)
    } else {
        None
    };

    let stars: Vec<ParamVector> = private
        .records
        .iter()
        .filter_map(|r| r.theta_star.clone())
        .collect();
    let v_bar_sq_realized = empirical_task_variance(&stars, spec.planted_center())?;
    let train: Vec<TrainRow> = private
        .records
        .iter()
        .map(|r| TrainRow {
            task_index: r.task_index,
            surrogate_loss: r.surrogate_loss,
            excess_risk_hat: r.excess_risk_hat,
        })
        .collect();
    let mean_surrogate_loss =
        train.iter().map(|r| r.surrogate_loss).sum::<f64>() / train.len() as f64;

    let phi_init = cfg.phi_init()?;
    let mut inits = vec![(Arm::Meta, private.phi_hat.clone())];
    if cfg.baseline_no_meta {
        inits.push((Arm::NoMeta, phi_init.clone()));
    }
    if let Some(np) = &nonprivate {
        inits.push((Arm::NonprivateMeta, np.phi_hat.clone()));
    }

    let eval_env = SyntheticEnvironment::new(spec, cfg.master_seed, Split::Eval);
    let ogd = OgdConfig::new(calibration.eta, cfg.samples_per_task)?;
    let mc = cfg.risk_mc_samples();
    let per_task: Vec<Vec<f64>> = (0..cfg.t_eval)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let task = eval_env.draw(e)?;
            let truth = task
                .truth
                .as_ref()
                .ok_or_else(|| Error::Invariant("synthetic task without ground truth".into()))?;
            inits
                .iter()
                .map(|(_, init)| {
                    let theta = ogd_run(&task.losses, init, &ogd, &dom)?.averaged_iterate;
                    Ok(truth.population_risk_gap(&theta, mc)?.value)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let arms: Vec<ArmSummary> = inits
        .iter()
        .enumerate()
        .map(|(k, (arm, _))| ArmSummary::new(*arm, per_task.iter().map(|row| row[k]).collect()))
        .collect();

    for a in &arms {
        if let Some((i, v)) = a
            .excess
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -1e-12)
        {
            return Err(Error::Invariant(format!(
                "arm {} task {i}: excess risk {v} is negative or not finite",
                a.arm.as_str()
            )));
        }
    }

    Ok(MetricsReport {
        run_id: 0,
        axis_value: None,
        seed: cfg.master_seed,
        calibration,
        arms,
        train,
        mean_surrogate_loss,
        v_bar_sq_realized,
        phi_init,
        phi_hat: private.phi_hat,
        warnings,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// [`execute`], then write the CSV and calibration sidecar to `cfg.output_path` if set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let report = execute(cfg)?;
    if let Some(path) = &cfg.output_path {
        output::write_outputs(path, std::slice::from_ref(&report))?;
    }
    Ok(report)
}

/// Config and seed used for the `index`-th value of a sweep.
pub fn sweep_point(
    base: &ExperimentConfig,
    axis: SweepAxis,
    index: usize,
    value: f64,
) -> Result<ExperimentConfig> {
    let mut cfg = base.with_axis(axis, value)?;
    cfg.master_seed = derive_seed(base.master_seed, index as u64, Purpose::SweepValue);
    Ok(cfg)
}

pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<MetricsReport>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "sweep values must be sorted strictly ascending",
        ));
    }
    let mut points = Vec::with_capacity(values.len());
    let mut problems = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match sweep_point(base, axis, i, v) {
            Ok(cfg) => {
                problems.extend(
                    cfg.violations()
                        .into_iter()
                        .map(|p| format!("{} = {v}: {p}", axis.as_str())),
                );
                points.push(cfg);
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut reports = Vec::with_capacity(points.len());
    for (i, (cfg, &v)) in points.iter().zip(values).enumerate() {
        let mut r = execute(cfg)?;
        r.run_id = i;
        r.axis_value = Some(v);
        reports.push(r);
    }
    if let Some(path) = &base.output_path {
        output::write_outputs(path, &reports)?;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let (mean, std, se) = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((se - std / 2.0).abs() < 1e-15);
        assert_eq!(summarize(&[7.0]), (7.0, 0.0, 0.0));
        assert!(summarize(&[]).0.is_nan());
    }

    #[test]
    fn arm_labels_round_trip() {
        for arm in [Arm::Meta, Arm::NoMeta, Arm::NonprivateMeta] {
            assert_eq!(Arm::parse(arm.as_str()), Some(arm));
        }
        assert_eq!(Arm::parse("train"), None);
    }

    #[test]
    fn calibration_examples() {
        let cfg: ExperimentConfig =
            "dim = 10\ndomain_radius = 0.5\nsamples_per_task = 800\ngroup_size = 3"
                .parse()
                .unwrap();
        let c = calibrate(&cfg).unwrap();
        assert_eq!(c.steps_n, 100);
        assert!((c.sigma_sq - 0.0143911).abs() < 1e-7);
        assert!((c.gamma - 4.24264).abs() < 1e-5);
        assert_eq!(c.group.epsilon, 3.0);
        assert_eq!(c.group.delta, 3.0 * 2f64.exp() * 1e-5);
        assert!(c.to_string().contains("group_delta"));
    }
}
