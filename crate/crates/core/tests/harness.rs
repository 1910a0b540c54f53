use dpmeta::harness::output::{sidecar_path, strip_wall_clock};
use dpmeta::harness::{self, parse_csv, to_csv, Arm, ExperimentConfig, SweepAxis};
use dpmeta::Error;

fn small() -> ExperimentConfig {
    "
    dim = 3
    planted_center = 0
    phi_init = 0.6, 0, 0
    similarity_v = 0.2
    samples_per_task = 60
    t_train = 40
    t_eval = 30
    master_seed = 7
    "
    .parse()
    .unwrap()
}

#[test]
fn csv_round_trips_every_number() {
    let mut cfg = small();
    cfg.epsilon = 0.7;
    let report = harness::execute(&cfg).unwrap();
    let runs = parse_csv(&to_csv(std::slice::from_ref(&report))).unwrap();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    let c = &report.calibration;
    assert_eq!(run.seed, report.seed);
    assert_eq!(run.axis_value, None);
    assert_eq!(run.steps_n, c.steps_n);
    assert_eq!(run.sigma_sq, c.sigma_sq);
    assert_eq!(run.gamma, c.gamma);
    assert_eq!(run.eta, c.eta);
    assert_eq!(run.epsilon, c.per_task.epsilon);
    assert_eq!(run.delta, c.per_task.delta);
    assert_eq!(run.v_bar_sq_realized, report.v_bar_sq_realized);
    assert_eq!(run.mean_surrogate_loss(), report.mean_surrogate_loss);
    let surrogate: Vec<f64> = report.train.iter().map(|t| t.surrogate_loss).collect();
    assert_eq!(run.train_surrogate, surrogate);
    for a in &report.arms {
        assert_eq!(run.arm_values(a.arm).unwrap(), a.excess.as_slice());
        assert_eq!(
            run.arm_summary(a.arm).unwrap(),
            (a.mean, a.std, a.std_error)
        );
    }
}

#[test]
fn calibration_reproduces_from_the_config() {
    let cfg = small();
    let report = harness::execute(&cfg).unwrap();
    let again = harness::calibrate(&cfg).unwrap();
    assert_eq!(report.calibration, again);
    let privacy = cfg.privacy().unwrap();
    assert_eq!(report.calibration.per_task, privacy.guarantee());
}

#[test]
fn group_and_composition_lines() {
    let mut cfg = small();
    cfg.group_size = 3;
    cfg.visits_per_task = 4;
    let c = harness::calibrate(&cfg).unwrap();
    assert_eq!(c.group.epsilon, 3.0 * cfg.epsilon);
    assert_eq!(c.group.delta, 3.0 * (2.0 * cfg.epsilon).exp() * cfg.delta);
    assert_eq!(
        c.composed,
        dpmeta::compose_sequential(&[c.per_task; 4]).unwrap()
    );
    let text = c.to_string();
    assert!(text.contains("group_epsilon = 3"), "{text}");
    assert!(text.contains("composed_epsilon = 4"), "{text}");
}

#[test]
fn first_budget_term_scales_inversely_with_epsilon() {
    // Large d and small m keep the privacy term of γ dominant.
    let mut cfg = small();
    cfg.dim = 40;
    cfg.phi_init = None;
    cfg.epsilon = 0.05;
    let g1 = harness::calibrate(&cfg).unwrap().gamma;
    cfg.epsilon = 0.5;
    let g2 = harness::calibrate(&cfg).unwrap().gamma;
    assert!((g2 / g1 - 0.1).abs() < 1e-12, "{g1} {g2}");
}

#[test]
fn eval_count_does_not_touch_training() {
    let a = harness::execute(&small()).unwrap();
    let mut cfg = small();
    cfg.t_eval = 5;
    let b = harness::execute(&cfg).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.phi_hat, b.phi_hat);
    // The shared eval tasks get identical results.
    for arm in [Arm::Meta, Arm::NoMeta, Arm::NonprivateMeta] {
        assert_eq!(
            &a.arm(arm).unwrap().excess[..5],
            b.arm(arm).unwrap().excess.as_slice()
        );
    }
}

#[test]
fn one_training_task_leaves_meta_equal_to_no_meta() {
    let mut cfg = small();
    cfg.t_train = 1;
    let r = harness::execute(&cfg).unwrap();
    assert_eq!(r.phi_hat, r.phi_init);
    assert_eq!(
        r.arm(Arm::Meta).unwrap().excess,
        r.arm(Arm::NoMeta).unwrap().excess
    );
}

#[test]
fn zero_training_tasks_rejected() {
    let mut cfg = small();
    cfg.t_train = 0;
    assert!(matches!(harness::execute(&cfg), Err(Error::Config(_))));
}

#[test]
fn identical_tasks_favour_meta_learning() {
    let mut cfg = small();
    cfg.similarity_v = 0.0;
    cfg.t_train = 200;
    cfg.t_eval = 100;
    let r = harness::execute(&cfg).unwrap();
    let meta = &r.arm(Arm::Meta).unwrap().excess;
    let base = &r.arm(Arm::NoMeta).unwrap().excess;
    let wins = meta.iter().zip(base).filter(|(m, b)| m <= b).count();
    assert!(wins * 100 >= 95 * meta.len(), "{wins} of {}", meta.len());
    assert!(r.arm(Arm::NonprivateMeta).unwrap().mean < r.arm(Arm::NoMeta).unwrap().mean);
}

#[test]
fn baselines_can_be_disabled() {
    let mut cfg = small();
    cfg.baseline_no_meta = false;
    cfg.baseline_nonprivate_meta = false;
    let r = harness::execute(&cfg).unwrap();
    assert_eq!(r.arms.len(), 1);
    assert_eq!(r.arms[0].arm, Arm::Meta);
}

#[test]
fn singleton_sweep_is_a_plain_run() {
    let cfg = small();
    let swept = harness::sweep(&cfg, SweepAxis::SimilarityV, &[0.2]).unwrap();
    let mut direct_cfg = harness::sweep_point(&cfg, SweepAxis::SimilarityV, 0, 0.2).unwrap();
    direct_cfg.output_path = None;
    let direct = harness::execute(&direct_cfg).unwrap();
    assert_eq!(swept.len(), 1);
    assert_eq!(swept[0].arms, direct.arms);
    assert_eq!(swept[0].train, direct.train);
    assert_eq!(swept[0].calibration, direct.calibration);
}

#[test]
fn sweep_rejects_unsorted_or_invalid_values() {
    let cfg = small();
    assert!(harness::sweep(&cfg, SweepAxis::Epsilon, &[]).is_err());
    assert!(harness::sweep(&cfg, SweepAxis::Epsilon, &[1.0, 0.5]).is_err());
    let err = harness::sweep(&cfg, SweepAxis::SimilarityV, &[0.5, 2.0, 3.0]).unwrap_err();
    let Error::Config(problems) = err else {
        panic!("{err}")
    };
    assert_eq!(problems.len(), 2, "{problems:?}");
}

#[test]
fn writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let mut cfg = small();
    cfg.output_path = Some(path.clone());
    let report = harness::run_experiment(&cfg).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        strip_wall_clock(&text),
        strip_wall_clock(&to_csv(std::slice::from_ref(&report)))
    );
    let side = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    assert_eq!(side, report.calibration.to_string());

    cfg.output_path = Some(dir.path().join("missing/out.csv"));
    let err = harness::run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn sweep_csv_groups_rows_by_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.t_train = 10;
    cfg.t_eval = 8;
    cfg.output_path = Some(dir.path().join("sweep.csv"));
    let reports = harness::sweep(&cfg, SweepAxis::SamplesPerTask, &[20.0, 80.0]).unwrap();
    let text = std::fs::read_to_string(cfg.output_path.as_ref().unwrap()).unwrap();
    let runs = parse_csv(&text).unwrap();
    assert_eq!(runs.len(), 2);
    for (run, rep) in runs.iter().zip(&reports) {
        assert_eq!(run.axis_value, rep.axis_value);
        assert_eq!(run.seed, rep.seed);
        assert_eq!(run.arm_values(Arm::Meta).unwrap().len(), 8);
    }
    assert_ne!(runs[0].seed, runs[1].seed);
    assert!(runs[0].eta > runs[1].eta);
}

#[test]
fn logistic_runs_end_to_end() {
    let mut cfg: ExperimentConfig = "
        dim = 3
        domain_radius = 2
        loss_family = logistic
        feature_radius = 1
        growth_alpha = 0.1
        similarity_v = 0.5
        samples_per_task = 80
        t_train = 15
        t_eval = 6
        mc_samples = 300
    "
    .parse()
    .unwrap();
    let r = harness::execute(&cfg).unwrap();
    for a in &r.arms {
        assert!(a.excess.iter().all(|&e| e >= 0.0 && e.is_finite()));
    }
    cfg.growth_alpha = None;
    assert!(harness::execute(&cfg).is_err());
}
