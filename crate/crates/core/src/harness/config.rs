//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, vectors are comma-separated
//! (a single number is broadcast to every coordinate). Unknown or repeated
//! keys are errors. Validation reports every violation at once.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{ParamDomain, ParamVector};
use crate::learners::GammaVariant;
use crate::losses::{LossFamily, RegularityProfile};
use crate::privacy::PrivacyParams;
use crate::task_env::{EnvSpec, FamilyParams};

/// A vector-valued setting before the dimension is known.
#[derive(Debug, Clone, PartialEq)]
pub enum Coords {
    Broadcast(f64),
    List(Vec<f64>),
}

impl Coords {
    fn resolve(&self, dim: usize, key: &str, problems: &mut Vec<String>) -> Option<ParamVector> {
        let v = match self {
            Coords::Broadcast(x) => vec![*x; dim],
            Coords::List(xs) if xs.len() == dim => xs.clone(),
            Coords::List(xs) => {
                problems.push(format!(
                    "{key}: expected {dim} coordinates, got {}",
                    xs.len()
                ));
                return None;
            }
        };
        match ParamVector::new(v) {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(format!("{key}: {e}"));
                None
            }
        }
    }
}

impl fmt::Display for Coords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coords::Broadcast(x) => write!(f, "{x}"),
            Coords::List(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub domain_radius: f64,
    pub domain_center: Coords,
    /// Defaults to the domain center.
    pub planted_center: Option<Coords>,
    /// First meta-initialization; defaults to the domain center.
    pub phi_init: Option<Coords>,
    pub similarity_v: f64,
    pub samples_per_task: usize,
    pub loss_family: LossFamily,
    pub curvature: f64,
    pub sample_noise_std: f64,
    pub feature_radius: f64,
    /// Required for logistic tasks; quadratic tasks use their curvature.
    pub growth_alpha: Option<f64>,
    pub mc_samples: usize,
    pub t_train: usize,
    pub t_eval: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub group_size: u32,
    pub visits_per_task: u32,
    pub gamma_variant: GammaVariant,
    pub master_seed: u64,
    pub baseline_no_meta: bool,
    pub baseline_nonprivate_meta: bool,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 5,
            domain_radius: 1.0,
            domain_center: Coords::Broadcast(0.0),
            planted_center: None,
            phi_init: None,
            similarity_v: 0.5,
            samples_per_task: 100,
            loss_family: LossFamily::Quadratic,
            curvature: 1.0,
            sample_noise_std: 0.5,
            feature_radius: 1.0,
            growth_alpha: None,
            mc_samples: 2000,
            t_train: 400,
            t_eval: 500,
            epsilon: 1.0,
            delta: 1e-5,
            group_size: 1,
            visits_per_task: 1,
            gamma_variant: GammaVariant::UnitSampleTerm,
            master_seed: 0,
            baseline_no_meta: true,
            baseline_nonprivate_meta: true,
            output_path: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "dim",
    "domain_radius",
    "domain_center",
    "planted_center",
    "phi_init",
    "similarity_v",
    "samples_per_task",
    "loss_family",
    "curvature",
    "sample_noise_std",
    "feature_radius",
    "growth_alpha",
    "mc_samples",
    "t_train",
    "t_eval",
    "epsilon",
    "delta",
    "group_size",
    "visits_per_task",
    "gamma_variant",
    "master_seed",
    "baseline_no_meta",
    "baseline_nonprivate_meta",
    "output_path",
];

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_coords(v: &str) -> std::result::Result<Coords, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let nums = parts
        .iter()
        .map(|p| parse_num::<f64>(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(if nums.len() == 1 {
        Coords::Broadcast(nums[0])
    } else {
        Coords::List(nums)
    })
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Sets one key using the config-file syntax for its value. Cross-field
    /// constraints are checked by [`validate`](Self::validate), not here.
    pub fn set_value(&mut self, key: &str, value: &str) -> Result<()> {
        self.set(key, value.trim())
            .map_err(|msg| Error::Config(vec![format!("{key}: {msg}")]))
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "dim" => self.dim = parse_num(value)?,
            "domain_radius" => self.domain_radius = parse_num(value)?,
            "domain_center" => self.domain_center = parse_coords(value)?,
            "planted_center" => self.planted_center = Some(parse_coords(value)?),
            "phi_init" => self.phi_init = Some(parse_coords(value)?),
            "similarity_v" => self.similarity_v = parse_num(value)?,
            "samples_per_task" => self.samples_per_task = parse_num(value)?,
            "loss_family" => self.loss_family = value.parse().map_err(|e: Error| e.to_string())?,
            "curvature" => self.curvature = parse_num(value)?,
            "sample_noise_std" => self.sample_noise_std = parse_num(value)?,
            "feature_radius" => self.feature_radius = parse_num(value)?,
            "growth_alpha" => self.growth_alpha = Some(parse_num(value)?),
            "mc_samples" => self.mc_samples = parse_num(value)?,
            "t_train" => self.t_train = parse_num(value)?,
            "t_eval" => self.t_eval = parse_num(value)?,
            "epsilon" => self.epsilon = parse_num(value)?,
            "delta" => self.delta = parse_num(value)?,
            "group_size" => self.group_size = parse_num(value)?,
            "visits_per_task" => self.visits_per_task = parse_num(value)?,
            "gamma_variant" => {
                self.gamma_variant = value.parse().map_err(|e: Error| e.to_string())?
            }
            "master_seed" => self.master_seed = parse_num(value)?,
            "baseline_no_meta" => self.baseline_no_meta = parse_bool(value)?,
            "baseline_nonprivate_meta" => self.baseline_nonprivate_meta = parse_bool(value)?,
            "output_path" => self.output_path = Some(PathBuf::from(value)),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every semantic problem with this configuration; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.dim == 0 {
            p.push("dim must be positive".into());
            return p;
        }
        if !(self.domain_radius > 0.0 && self.domain_radius.is_finite()) {
            p.push(format!(
                "domain_radius must be positive and finite, got {}",
                self.domain_radius
            ));
        }
        let center = self
            .domain_center
            .resolve(self.dim, "domain_center", &mut p);
        let domain = center.and_then(|c| ParamDomain::ball(c, self.domain_radius.max(0.0)).ok());
        let check_point = |coords: &Option<Coords>, key: &str, p: &mut Vec<String>| {
            if let Some(c) = coords {
                if let (Some(v), Some(dom)) = (c.resolve(self.dim, key, p), domain.as_ref()) {
                    if !dom.contains(&v) {
                        p.push(format!("{key} lies outside the domain"));
                    }
                }
            }
        };
        check_point(&self.planted_center, "planted_center", &mut p);
        check_point(&self.phi_init, "phi_init", &mut p);

        if !(self.similarity_v >= 0.0 && self.similarity_v.is_finite()) {
            p.push(format!(
                "similarity_v must be nonnegative, got {}",
                self.similarity_v
            ));
        } else if self.similarity_v > self.domain_radius {
            p.push(format!(
                "similarity_v = {} exceeds domain_radius = {}",
                self.similarity_v, self.domain_radius
            ));
        }
        if self.samples_per_task == 0 {
            p.push("samples_per_task must be positive".into());
        }
        if self.t_train == 0 {
            p.push("t_train must be at least 1".into());
        }
        if self.t_eval == 0 {
            p.push("t_eval must be at least 1".into());
        }
        if let Err(e) = PrivacyParams::with_group_size(self.epsilon, self.delta, self.group_size) {
            p.push(e.to_string());
        }
        if self.visits_per_task == 0 {
            p.push("visits_per_task must be at least 1".into());
        }
        match self.loss_family {
            LossFamily::Quadratic => {
                if !(self.curvature > 0.0 && self.curvature.is_finite()) {
                    p.push(format!(
                        "curvature must be positive, got {}",
                        self.curvature
                    ));
                }
                if !(self.sample_noise_std >= 0.0 && self.sample_noise_std.is_finite()) {
                    p.push(format!(
                        "sample_noise_std must be nonnegative, got {}",
                        self.sample_noise_std
                    ));
                }
                if let Some(a) = self.growth_alpha {
                    if a != self.curvature {
                        p.push(format!(
                            "growth_alpha = {a} conflicts with quadratic curvature {}; omit it",
                            self.curvature
                        ));
                    }
                }
            }
            LossFamily::Logistic => {
                if !(self.feature_radius > 0.0 && self.feature_radius.is_finite()) {
                    p.push(format!(
                        "feature_radius must be positive, got {}",
                        self.feature_radius
                    ));
                }
                match self.growth_alpha {
                    None => p.push("logistic tasks require growth_alpha".into()),
                    Some(a) if !(a > 0.0 && a.is_finite()) => {
                        p.push(format!("growth_alpha must be positive, got {a}"))
                    }
                    _ => {}
                }
                if self.mc_samples < 2 {
                    p.push("mc_samples must be at least 2 for logistic tasks".into());
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.violations();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    fn resolve(&self, coords: &Coords, key: &str) -> Result<ParamVector> {
        let mut p = Vec::new();
        coords
            .resolve(self.dim, key, &mut p)
            .ok_or(Error::Config(p))
    }

    pub fn domain(&self) -> Result<ParamDomain> {
        ParamDomain::ball(
            self.resolve(&self.domain_center, "domain_center")?,
            self.domain_radius,
        )
    }

    pub fn planted_center(&self) -> Result<ParamVector> {
        match &self.planted_center {
            Some(c) => self.resolve(c, "planted_center"),
            None => self.resolve(&self.domain_center, "domain_center"),
        }
    }

    pub fn phi_init(&self) -> Result<ParamVector> {
        match &self.phi_init {
            Some(c) => self.resolve(c, "phi_init"),
            None => self.resolve(&self.domain_center, "domain_center"),
        }
    }

    pub fn privacy(&self) -> Result<PrivacyParams> {
        PrivacyParams::with_group_size(self.epsilon, self.delta, self.group_size)
    }

    pub fn family_params(&self) -> FamilyParams {
        match self.loss_family {
            LossFamily::Quadratic => FamilyParams::Quadratic {
                curvature: self.curvature,
                sample_noise_std: self.sample_noise_std,
            },
            LossFamily::Logistic => FamilyParams::Logistic {
                feature_radius: self.feature_radius,
            },
        }
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        EnvSpec::new(
            self.domain()?,
            self.planted_center()?,
            self.similarity_v,
            self.samples_per_task,
            self.family_params(),
        )
    }

    pub fn regularity(&self) -> Result<RegularityProfile> {
        match self.loss_family {
            LossFamily::Quadratic => RegularityProfile::quadratic(self.curvature, &self.domain()?),
            LossFamily::Logistic => RegularityProfile::logistic(
                self.feature_radius,
                self.growth_alpha.ok_or_else(|| {
                    Error::Config(vec!["logistic tasks require growth_alpha".into()])
                })?,
            ),
        }
    }

    /// Monte Carlo sample count for risk estimates, when the family needs one.
    pub fn risk_mc_samples(&self) -> Option<usize> {
        match self.loss_family {
            LossFamily::Quadratic => None,
            LossFamily::Logistic => Some(self.mc_samples),
        }
    }

    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let as_count = |v: f64, name: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!(
                    "{name} sweep values must be positive integers, got {v}"
                )))
            }
        };
        match axis {
            SweepAxis::SimilarityV => cfg.similarity_v = value,
            SweepAxis::SamplesPerTask => cfg.samples_per_task = as_count(value, "m")?,
            SweepAxis::TasksTrain => cfg.t_train = as_count(value, "T_train")?,
            SweepAxis::Epsilon => cfg.epsilon = value,
        }
        Ok(cfg)
    }

    /// Serializes back to the config format; parsing the output yields `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("dim", self.dim.to_string());
        line("domain_radius", self.domain_radius.to_string());
        line("domain_center", self.domain_center.to_string());
        if let Some(c) = &self.planted_center {
            line("planted_center", c.to_string());
        }
        if let Some(c) = &self.phi_init {
            line("phi_init", c.to_string());
        }
        line("similarity_v", self.similarity_v.to_string());
        line("samples_per_task", self.samples_per_task.to_string());
        line("loss_family", self.loss_family.as_str().into());
        line("curvature", self.curvature.to_string());
        line("sample_noise_std", self.sample_noise_std.to_string());
        line("feature_radius", self.feature_radius.to_string());
        if let Some(a) = self.growth_alpha {
            line("growth_alpha", a.to_string());
        }
        line("mc_samples", self.mc_samples.to_string());
        line("t_train", self.t_train.to_string());
        line("t_eval", self.t_eval.to_string());
        line("epsilon", self.epsilon.to_string());
        line("delta", self.delta.to_string());
        line("group_size", self.group_size.to_string());
        line("visits_per_task", self.visits_per_task.to_string());
        line("gamma_variant", self.gamma_variant.as_str().into());
        line("master_seed", self.master_seed.to_string());
        line("baseline_no_meta", self.baseline_no_meta.to_string());
        line(
            "baseline_nonprivate_meta",
            self.baseline_nonprivate_meta.to_string(),
        );
        if let Some(p) = &self.output_path {
            line("output_path", p.display().to_string());
        }
        s
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                problems.push(format!("line {}: duplicate key `{key}`", lineno + 1));
                continue;
            }
            if let Err(msg) = cfg.set(key, value) {
                problems.push(format!("line {}: {key}: {msg}", lineno + 1));
            }
        }
        problems.extend(cfg.violations());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SimilarityV,
    SamplesPerTask,
    TasksTrain,
    Epsilon,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::SimilarityV => "V",
            SweepAxis::SamplesPerTask => "m",
            SweepAxis::TasksTrain => "T_train",
            SweepAxis::Epsilon => "epsilon",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" | "v" | "similarity_v" => Ok(SweepAxis::SimilarityV),
            "m" | "samples_per_task" => Ok(SweepAxis::SamplesPerTask),
            "T_train" | "t_train" | "T" => Ok(SweepAxis::TasksTrain),
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            other => Err(Error::invalid(format!(
                "unknown sweep axis `{other}` (expected V, m, T_train or epsilon)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file_with_comments() {
        let cfg: ExperimentConfig = "
            # environment
            dim = 3
            domain_radius = 2.0   # ball
            planted_center = 0.5, 0, 0
            similarity_v = 0.25
            gamma_variant = theorem1
            baseline_no_meta = false
        "
        .parse()
        .unwrap();
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.domain_radius, 2.0);
        assert_eq!(cfg.planted_center, Some(Coords::List(vec![0.5, 0.0, 0.0])));
        assert_eq!(cfg.gamma_variant, GammaVariant::LipschitzScaledSampleTerm);
        assert!(!cfg.baseline_no_meta);
        assert_eq!(cfg.planted_center().unwrap()[0], 0.5);
        assert_eq!(cfg.phi_init().unwrap(), ParamVector::zeros(3));
    }

    #[test]
    fn reports_every_violation() {
        let err = "
            dim = 2
            bogus = 1
            epsilon = -1
            similarity_v = 5
            t_eval = 0
            phi_init = 1,2,3
            t_eval = 3
        "
        .parse::<ExperimentConfig>()
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let Error::Config(list) = err else { panic!() };
        let joined = list.join("\n");
        for needle in [
            "bogus",
            "epsilon",
            "similarity_v",
            "t_eval must",
            "phi_init",
            "duplicate",
        ] {
            assert!(joined.contains(needle), "missing `{needle}` in:\n{joined}");
        }
    }

    #[test]
    fn logistic_requires_alpha() {
        let err = "loss_family = logistic"
            .parse::<ExperimentConfig>()
            .unwrap_err();
        assert!(err.to_string().contains("growth_alpha"));
        let ok: ExperimentConfig = "loss_family = logistic\ngrowth_alpha = 0.2"
            .parse()
            .unwrap();
        assert_eq!(ok.regularity().unwrap().growth_alpha, 0.2);
    }

    #[test]
    fn config_string_round_trips() {
        let cfg: ExperimentConfig = "
            dim = 2
            phi_init = 0.5,-0.25
            epsilon = 0.3
            output_path = /tmp/x.csv
        "
        .parse()
        .unwrap();
        let again: ExperimentConfig = cfg.to_config_string().parse().unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn single_key_updates() {
        let mut cfg = ExperimentConfig::default();
        cfg.set_value("epsilon", " 0.25 ").unwrap();
        cfg.set_value("phi_init", "0.1, 0.2, 0, 0, 0").unwrap();
        assert_eq!(cfg.epsilon, 0.25);
        assert!(cfg.validate().is_ok());
        assert!(matches!(cfg.set_value("nope", "1"), Err(Error::Config(_))));
        assert!(cfg.set_value("t_train", "many").is_err());
    }

    #[test]
    fn axis_overrides() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.with_axis(SweepAxis::TasksTrain, 50.0).unwrap().t_train,
            50
        );
        assert!(cfg.with_axis(SweepAxis::TasksTrain, 2.5).is_err());
        assert_eq!(cfg.with_axis(SweepAxis::Epsilon, 0.1).unwrap().epsilon, 0.1);
        assert_eq!(
            "T_train".parse::<SweepAxis>().unwrap(),
            SweepAxis::TasksTrain
        );
        assert!("x".parse::<SweepAxis>().is_err());
    }
}
