//! Synthetic meta-distribution over tasks.
//!
//! Task minimizers are drawn as `θ* = project(φ* + z)` with
//! `z ~ N(0, (V²/d)·I)`, so before projection `E‖θ* − φ*‖² = V²`. Projection
//! can only shrink the realized dispersion; the harness reports the realized
//! value next to the nominal `V`.
//!
//! Quadratic tasks sample anchors `project(θ* + w)` with `w ~ N(0, s²·I)`;
//! their population gap is available in closed form. Logistic tasks draw
//! features uniformly from a sphere and labels from the logistic model at
//! `θ*`; their gap is a Monte Carlo estimate.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dist_sq_raw, dot, norm, project, ParamDomain, ParamVector};
use crate::losses::{make_logistic, make_quadratic, sigmoid, softplus, LossFamily, LossFunction};
use crate::seeding::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyParams {
    Quadratic {
        curvature: f64,
        sample_noise_std: f64,
    },
    Logistic {
        feature_radius: f64,
    },
}

impl FamilyParams {
    pub fn family(&self) -> LossFamily {
        match self {
            FamilyParams::Quadratic { .. } => LossFamily::Quadratic,
            FamilyParams::Logistic { .. } => LossFamily::Logistic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    domain: ParamDomain,
    planted_center: ParamVector,
    similarity_v: f64,
    samples_per_task: usize,
    family: FamilyParams,
}

impl EnvSpec {
    pub fn new(
        domain: ParamDomain,
        planted_center: ParamVector,
        similarity_v: f64,
        samples_per_task: usize,
        family: FamilyParams,
    ) -> Result<Self> {
        let spec = EnvSpec {
            domain,
            planted_center,
            similarity_v,
            samples_per_task,
            family,
        };
        let problems = spec.violations();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Config(problems))
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.planted_center.dim() != self.domain.dim() {
            v.push(format!(
                "planted center has dimension {}, domain has {}",
                self.planted_center.dim(),
                self.domain.dim()
            ));
        } else if !self.domain.contains(&self.planted_center) {
            v.push("planted center lies outside the domain".into());
        }
        if !(self.similarity_v >= 0.0 && self.similarity_v.is_finite()) {
            v.push(format!(
                "similarity V must be nonnegative, got {}",
                self.similarity_v
            ));
        } else if self.similarity_v > self.domain.radius() {
            v.push(format!(
                "similarity V = {} exceeds the domain radius {}",
                self.similarity_v,
                self.domain.radius()
            ));
        }
        if self.samples_per_task == 0 {
            v.push("samples per task must be positive".into());
        }
        match self.family {
            FamilyParams::Quadratic {
                curvature,
                sample_noise_std,
            } => {
                if !(curvature > 0.0 && curvature.is_finite()) {
                    v.push(format!("curvature must be positive, got {curvature}"));
                }
                if !(sample_noise_std >= 0.0 && sample_noise_std.is_finite()) {
                    v.push(format!(
                        "sample noise std must be nonnegative, got {sample_noise_std}"
                    ));
                }
            }
            FamilyParams::Logistic { feature_radius } => {
                if !(feature_radius > 0.0 && feature_radius.is_finite()) {
                    v.push(format!(
                        "feature radius must be positive, got {feature_radius}"
                    ));
                }
            }
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn planted_center(&self) -> &ParamVector {
        &self.planted_center
    }

    pub fn similarity_v(&self) -> f64 {
        self.similarity_v
    }

    pub fn samples_per_task(&self) -> usize {
        self.samples_per_task
    }

    pub fn family(&self) -> FamilyParams {
        self.family
    }

    pub fn with_similarity(&self, v: f64) -> Result<Self> {
        Self::new(
            self.domain.clone(),
            self.planted_center.clone(),
            v,
            self.samples_per_task,
            self.family,
        )
    }

    pub fn with_samples_per_task(&self, m: usize) -> Result<Self> {
        Self::new(
            self.domain.clone(),
            self.planted_center.clone(),
            self.similarity_v,
            m,
            self.family,
        )
    }
}

/// One task distribution: its population minimizer and how to evaluate its risk.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub theta_star: ParamVector,
    pub family: FamilyParams,
    /// Seeds the Monte Carlo risk estimate of non-closed-form families.
    pub risk_seed: u64,
}

/// Excess population risk, with a standard error when it is an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskGap {
    pub value: f64,
    pub std_error: Option<f64>,
}

impl TaskSpec {
    /// `ℓ(θ) − ℓ(θ*)`; exact for quadratics, Monte Carlo for logistic tasks.
    pub fn population_risk_gap(
        &self,
        theta: &ParamVector,
        mc_samples: Option<usize>,
    ) -> Result<RiskGap> {
        check_dim(self.theta_star.dim(), theta.dim())?;
        match self.family {
            FamilyParams::Quadratic { curvature, .. } => Ok(RiskGap {
                value: 0.5 * curvature * dist_sq_raw(theta.as_slice(), self.theta_star.as_slice()),
                std_error: None,
            }),
            FamilyParams::Logistic { feature_radius } => {
                let samples = match mc_samples {
                    Some(s) if s >= 2 => s,
                    Some(_) => {
                        return Err(Error::invalid(
                            "logistic risk estimate needs at least two Monte Carlo samples",
                        ))
                    }
                    None => {
                        return Err(Error::invalid(
                            "logistic tasks have no closed-form risk; pass mc_samples",
                        ))
                    }
                };
                let mut rng = stream(self.risk_seed, 0, Purpose::RiskEstimate);
                let mut x = vec![0.0; theta.dim()];
                let (mut mean, mut m2) = (0.0f64, 0.0f64);
                for k in 0..samples {
                    sphere_point(&mut x, feature_radius, &mut rng);
                    let gap =
                        expected_logistic_gap(&x, theta.as_slice(), self.theta_star.as_slice());
                    let delta = gap - mean;
                    mean += delta / (k + 1) as f64;
                    m2 += delta * (gap - mean);
                }
                let var = m2 / (samples - 1) as f64;
                Ok(RiskGap {
                    value: mean,
                    std_error: Some((var / samples as f64).sqrt()),
                })
            }
        }
    }

    /// The quadratic gap, when it exists in closed form.
    pub fn exact_gap(&self, theta: &ParamVector) -> Option<f64> {
        match self.family {
            FamilyParams::Quadratic { .. } => {
                self.population_risk_gap(theta, None).ok().map(|g| g.value)
            }
            FamilyParams::Logistic { .. } => None,
        }
    }
}

pub fn population_risk_gap(
    task: &TaskSpec,
    theta: &ParamVector,
    mc_samples: Option<usize>,
) -> Result<RiskGap> {
    task.population_risk_gap(theta, mc_samples)
}

/// Label-averaged loss difference at one feature vector. Equals the KL
/// divergence between the two Bernoulli label laws, hence nonnegative.
fn expected_logistic_gap(x: &[f64], theta: &[f64], theta_star: &[f64]) -> f64 {
    let z = dot(x, theta);
    let zs = dot(x, theta_star);
    let p = sigmoid(zs);
    let pos = softplus(-z) - softplus(-zs);
    let neg = softplus(z) - softplus(zs);
    (p * pos + (1.0 - p) * neg).max(0.0)
}

fn sphere_point<R: Rng + ?Sized>(out: &mut [f64], radius: f64, rng: &mut R) {
    loop {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let n = norm(out);
        if n > 0.0 {
            let s = radius / n;
            out.iter_mut().for_each(|x| *x *= s);
            return;
        }
    }
}

pub fn sample_task<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> TaskSpec {
    let d = spec.dim();
    let mut theta = spec.planted_center.as_slice().to_vec();
    if spec.similarity_v > 0.0 {
        let std = spec.similarity_v / (d as f64).sqrt();
        for t in theta.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *t += std * z;
        }
        spec.domain.project_in_place(&mut theta);
    }
    TaskSpec {
        theta_star: ParamVector::from_raw(theta),
        family: spec.family,
        risk_seed: rng.next_u64(),
    }
}

pub fn generate_losses<R: Rng + ?Sized>(
    task: &TaskSpec,
    spec: &EnvSpec,
    rng: &mut R,
) -> Result<Vec<LossFunction>> {
    let d = spec.dim();
    let m = spec.samples_per_task;
    let star = task.theta_star.as_slice();
    match task.family {
        FamilyParams::Quadratic {
            curvature,
            sample_noise_std,
        } => {
            let noise =
                Normal::new(0.0, sample_noise_std).map_err(|e| Error::invalid(e.to_string()))?;
            (0..m)
                .map(|_| {
                    let mut anchor: Vec<f64> = star.to_vec();
                    if sample_noise_std > 0.0 {
                        anchor.iter_mut().for_each(|a| *a += noise.sample(rng));
                        spec.domain.project_in_place(&mut anchor);
                    }
                    make_quadratic(ParamVector::from_raw(anchor), curvature, &spec.domain)
                })
                .collect()
        }
        FamilyParams::Logistic { feature_radius } => {
            let mut x = vec![0.0; d];
            (0..m)
                .map(|_| {
                    sphere_point(&mut x, feature_radius, rng);
                    let p = sigmoid(dot(&x, star));
                    let label = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                    make_logistic(ParamVector::from_raw(x.clone()), label)
                })
                .collect()
        }
    }
}

/// `(1/T)·Σ ‖reference − θ*_t‖²`
pub fn empirical_task_variance(
    theta_stars: &[ParamVector],
    reference: &ParamVector,
) -> Result<f64> {
    if theta_stars.is_empty() {
        return Err(Error::invalid("task variance of an empty set"));
    }
    let mut total = 0.0;
    for t in theta_stars {
        check_dim(reference.dim(), t.dim())?;
        total += dist_sq_raw(t.as_slice(), reference.as_slice());
    }
    Ok(total / theta_stars.len() as f64)
}

/// Mean of the per-sample losses.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalRisk<'a>(pub &'a [LossFunction]);

impl EmpiricalRisk<'_> {
    pub fn value(&self, theta: &ParamVector) -> Result<f64> {
        if self.0.is_empty() {
            return Err(Error::invalid("empirical risk of no samples"));
        }
        let mut s = 0.0;
        for l in self.0 {
            s += l.value(theta)?;
        }
        Ok(s / self.0.len() as f64)
    }

    pub fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        if self.0.is_empty() {
            return Err(Error::invalid("empirical risk of no samples"));
        }
        let grads = self
            .0
            .iter()
            .map(|l| l.gradient(theta))
            .collect::<Result<Vec<_>>>()?;
        ParamVector::mean(grads.iter())
    }

    /// Minimizer over the domain when every sample is a quadratic of one curvature:
    /// the projected mean of the anchors.
    pub fn quadratic_minimizer(&self, dom: &ParamDomain) -> Option<ParamVector> {
        let mut curvature = None;
        let mut anchors = Vec::with_capacity(self.0.len());
        for l in self.0 {
            match l {
                LossFunction::Quadratic(q) => {
                    if *curvature.get_or_insert(q.curvature()) != q.curvature() {
                        return None;
                    }
                    anchors.push(q.anchor());
                }
                LossFunction::Logistic(_) => return None,
            }
        }
        let mean = ParamVector::mean(anchors).ok()?;
        project(&mean, dom).ok()
    }
}

/// A task handed to the learners: its samples and, for synthetic tasks, the truth.
#[derive(Debug, Clone)]
pub struct Task {
    pub losses: Vec<LossFunction>,
    pub truth: Option<TaskSpec>,
}

/// Anything that can hand out the `index`-th task of a sequence.
pub trait TaskSource {
    fn domain(&self) -> &ParamDomain;
    fn task(&mut self, index: usize) -> Result<Task>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Tasks drawn from an [`EnvSpec`]; task `i` depends only on `(seed, split, i)`.
#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    spec: EnvSpec,
    seed: u64,
    split: Split,
}

impl SyntheticEnvironment {
    pub fn new(spec: EnvSpec, seed: u64, split: Split) -> Self {
        SyntheticEnvironment { spec, seed, split }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn draw(&self, index: usize) -> Result<Task> {
        let (task_purpose, loss_purpose) = match self.split {
            Split::Train => (Purpose::TrainTask, Purpose::TrainLosses),
            Split::Eval => (Purpose::EvalTask, Purpose::EvalLosses),
        };
        let mut task_rng = stream(self.seed, index as u64, task_purpose);
        let spec = sample_task(&self.spec, &mut task_rng);
        let mut loss_rng = stream(self.seed, index as u64, loss_purpose);
        let losses = generate_losses(&spec, &self.spec, &mut loss_rng)?;
        Ok(Task {
            losses,
            truth: Some(spec),
        })
    }
}

impl TaskSource for SyntheticEnvironment {
    fn domain(&self) -> &ParamDomain {
        self.spec.domain()
    }

    fn task(&mut self, index: usize) -> Result<Task> {
        self.draw(index)
    }
}

/// A fixed, finite list of tasks.
#[derive(Debug, Clone)]
pub struct TaskList {
    domain: ParamDomain,
    tasks: Vec<Task>,
}

impl TaskList {
    pub fn new(domain: ParamDomain, tasks: Vec<Task>) -> Self {
        TaskList { domain, tasks }
    }
}

impl TaskSource for TaskList {
    fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    fn task(&mut self, index: usize) -> Result<Task> {
        self.tasks.get(index).cloned().ok_or_else(|| {
            Error::invalid(format!(
                "task list exhausted: requested task {index} of {}",
                self.tasks.len()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(x: &[f64]) -> ParamVector {
        ParamVector::new(x.to_vec()).unwrap()
    }

    fn quad_spec(d: usize, radius: f64, v: f64, m: usize, s: f64) -> EnvSpec {
        let dom = ParamDomain::ball(ParamVector::zeros(d), radius).unwrap();
        EnvSpec::new(
            dom,
            ParamVector::zeros(d),
            v,
            m,
            FamilyParams::Quadratic {
                curvature: 1.0,
                sample_noise_std: s,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_dispersion_returns_planted_center() {
        let dom = ParamDomain::unit_ball(3).unwrap();
        let spec = EnvSpec::new(
            dom,
            pv(&[0.1, 0.2, -0.3]),
            0.0,
            5,
            FamilyParams::Quadratic {
                curvature: 1.0,
                sample_noise_std: 0.1,
            },
        )
        .unwrap();
        let mut rng = stream(3, 0, Purpose::User);
        for _ in 0..20 {
            assert_eq!(
                sample_task(&spec, &mut rng).theta_star,
                pv(&[0.1, 0.2, -0.3])
            );
        }
    }

    #[test]
    fn dispersion_matches_v_squared() {
        // Radius 50 keeps projection inactive.
        let spec = quad_spec(4, 50.0, 1.0, 1, 0.0);
        let mut rng = stream(11, 0, Purpose::User);
        let n = 10_000;
        let stars: Vec<_> = (0..n)
            .map(|_| sample_task(&spec, &mut rng).theta_star)
            .collect();
        let v2 = empirical_task_variance(&stars, spec.planted_center()).unwrap();
        assert!((0.95..=1.05).contains(&v2), "mean squared dispersion {v2}");
    }

    #[test]
    fn noiseless_quadratic_samples_share_the_minimizer() {
        let spec = quad_spec(2, 1.0, 0.5, 6, 0.0);
        let env = SyntheticEnvironment::new(spec, 5, Split::Train);
        let task = env.draw(0).unwrap();
        let star = task.truth.as_ref().unwrap().theta_star.clone();
        for l in &task.losses {
            assert_eq!(l.gradient(&star).unwrap(), ParamVector::zeros(2));
        }
    }

    #[test]
    fn two_anchor_empirical_minimizer() {
        let dom = ParamDomain::ball(ParamVector::zeros(1), 5.0).unwrap();
        let losses = vec![
            make_quadratic(pv(&[0.0]), 1.0, &dom).unwrap(),
            make_quadratic(pv(&[2.0]), 1.0, &dom).unwrap(),
        ];
        let risk = EmpiricalRisk(&losses);
        assert_eq!(risk.quadratic_minimizer(&dom).unwrap(), pv(&[1.0]));
        assert_eq!(risk.gradient(&pv(&[1.0])).unwrap(), pv(&[0.0]));
    }

    #[test]
    fn empirical_gradient_is_mean_of_sample_gradients() {
        let spec = quad_spec(3, 1.0, 0.3, 7, 0.2);
        let task = SyntheticEnvironment::new(spec, 9, Split::Eval)
            .draw(2)
            .unwrap();
        let theta = pv(&[0.1, -0.4, 0.2]);
        let g = EmpiricalRisk(&task.losses).gradient(&theta).unwrap();
        let mut manual = [0.0; 3];
        for l in &task.losses {
            let gi = l.gradient(&theta).unwrap();
            for k in 0..3 {
                manual[k] += gi[k] / 7.0;
            }
        }
        for k in 0..3 {
            assert!((g[k] - manual[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn environment_is_deterministic() {
        let spec = quad_spec(3, 1.0, 0.3, 4, 0.2);
        let a = SyntheticEnvironment::new(spec.clone(), 1, Split::Train);
        let b = SyntheticEnvironment::new(spec.clone(), 1, Split::Train);
        let c = SyntheticEnvironment::new(spec, 1, Split::Eval);
        let (ta, tb, tc) = (a.draw(7).unwrap(), b.draw(7).unwrap(), c.draw(7).unwrap());
        assert_eq!(ta.losses, tb.losses);
        assert_eq!(ta.truth, tb.truth);
        assert_ne!(ta.truth, tc.truth);
    }

    #[test]
    fn quadratic_gap_examples() {
        let t = TaskSpec {
            theta_star: pv(&[0.0, 0.0]),
            family: FamilyParams::Quadratic {
                curvature: 2.0,
                sample_noise_std: 0.0,
            },
            risk_seed: 0,
        };
        assert_eq!(
            t.population_risk_gap(&pv(&[0.0, 0.0]), None).unwrap().value,
            0.0
        );
        assert_eq!(
            t.population_risk_gap(&pv(&[1.0, 1.0]), None).unwrap().value,
            2.0
        );
        let t = TaskSpec {
            theta_star: pv(&[0.0]),
            family: FamilyParams::Quadratic {
                curvature: 1.0,
                sample_noise_std: 0.3,
            },
            risk_seed: 0,
        };
        assert_eq!(
            t.population_risk_gap(&pv(&[0.5]), None).unwrap().value,
            0.125
        );
    }

    #[test]
    fn logistic_gap_needs_samples_and_is_nonnegative() {
        let t = TaskSpec {
            theta_star: pv(&[0.5, -0.5]),
            family: FamilyParams::Logistic {
                feature_radius: 2.0,
            },
            risk_seed: 17,
        };
        assert!(t.population_risk_gap(&pv(&[0.0, 0.0]), None).is_err());
        let at_star = t.population_risk_gap(&pv(&[0.5, -0.5]), Some(500)).unwrap();
        assert_eq!(at_star.value, 0.0);
        let off = t
            .population_risk_gap(&pv(&[-0.5, 0.5]), Some(2000))
            .unwrap();
        assert!(off.value > 0.0);
        assert!(off.std_error.unwrap() > 0.0);
        assert_eq!(t.exact_gap(&pv(&[0.0, 0.0])), None);
    }

    #[test]
    fn logistic_labels_follow_the_model() {
        let dom = ParamDomain::ball(ParamVector::zeros(1), 5.0).unwrap();
        let spec = EnvSpec::new(
            dom,
            pv(&[2.0]),
            0.0,
            20_000,
            FamilyParams::Logistic {
                feature_radius: 1.0,
            },
        )
        .unwrap();
        let task = SyntheticEnvironment::new(spec, 4, Split::Train)
            .draw(0)
            .unwrap();
        // In 1-D the feature is ±1; P(y = sign(x)) = σ(2).
        let agree = task
            .losses
            .iter()
            .filter(|l| match l {
                LossFunction::Logistic(l) => l.feature()[0] * l.label() > 0.0,
                _ => false,
            })
            .count() as f64
            / 20_000.0;
        assert!((agree - sigmoid(2.0)).abs() < 0.01, "agreement {agree}");
    }

    #[test]
    fn task_variance_examples() {
        let phi = pv(&[1.0, 1.0]);
        assert_eq!(
            empirical_task_variance(&[phi.clone(), phi.clone()], &phi).unwrap(),
            0.0
        );
        let v = empirical_task_variance(&[pv(&[2.0, 1.0]), pv(&[0.0, 1.0])], &phi).unwrap();
        assert_eq!(v, 1.0);
        let v = empirical_task_variance(&[phi.clone(), pv(&[4.0, 5.0])], &phi).unwrap();
        assert_eq!(v, 12.5);
        assert!(empirical_task_variance(&[], &phi).is_err());
    }

    #[test]
    fn spec_validation_collects_problems() {
        let dom = ParamDomain::unit_ball(2).unwrap();
        let err = EnvSpec::new(
            dom,
            pv(&[3.0, 0.0]),
            2.0,
            0,
            FamilyParams::Quadratic {
                curvature: -1.0,
                sample_noise_std: 0.0,
            },
        )
        .unwrap_err();
        match err {
            Error::Config(v) => assert_eq!(v.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finite_list_exhausts() {
        let dom = ParamDomain::unit_ball(1).unwrap();
        let mut list = TaskList::new(
            dom.clone(),
            vec![Task {
                losses: vec![],
                truth: None,
            }],
        );
        assert!(list.task(0).is_ok());
        assert!(list.task(1).is_err());
    }
}
