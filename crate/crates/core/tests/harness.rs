//! Grid runner and report persistence on small grids.

use std::fs;

use lnshift::harness::report::{parse_summary, read_results, write_report, CASES_FILE, SUMMARY_FILE};
use lnshift::harness::{case_pair, run_grid, GridConfig, SourceBundle, SweepSummary};
use lnshift::metrics::fsr_default;
use lnshift::nn::TrainConfig;

fn small_cfg() -> GridConfig {
    GridConfig {
        class_counts: vec![2, 4],
        mean_shift_scales: vec![0.0, 1.0, 2.0],
        var_shift_scales: vec![0.0, 2.0],
        train_fractions: vec![0.05, 0.5],
        samples_per_class: 60,
        pretrain: TrainConfig::new(0.05, 80, 42),
        finetune: TrainConfig::new(0.05, 60, 42),
        ..GridConfig::default()
    }
}

#[test]
fn schedule_independent() {
    let cfg = small_cfg();
    let (a, sa) = run_grid(&cfg, Some(1)).unwrap();
    let (b, sb) = run_grid(&cfg, Some(3)).unwrap();
    assert_eq!(a.len(), cfg.total_cases());
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(sa.overall_cases, a.len());
    for r in &a {
        assert!(r.improvement >= 0.0);
        assert_eq!(r.outcome_class.name() == "unchanged", r.accuracy_at_lambda.windows(2).all(|w| w[0] == w[1]) && r.baseline_accuracy != 0.0);
    }
}

#[test]
fn report_files_round_trip() {
    let cfg = small_cfg();
    let (results, summary) = run_grid(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(&results, &summary, &cfg.lambda_grid, dir.path()).unwrap();
    assert_eq!(written.len(), 5);

    let cases = fs::read_to_string(dir.path().join(CASES_FILE)).unwrap();
    assert_eq!(cases.lines().count(), summary.overall_cases + 1);
    assert!(cases.starts_with(
        "classes,mean_shift,var_shift,fraction,fsr,baseline_acc,best_lambda,best_acc,improvement,outcome_class,acc_lambda_0.0,acc_lambda_0.1,"
    ));
    assert!(cases.lines().next().unwrap().ends_with("acc_lambda_1.9,acc_lambda_2.0"));

    let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(parse_summary(&text).unwrap(), summary);

    let (back, lambdas) = read_results(dir.path()).unwrap();
    assert_eq!(lambdas, cfg.lambda_grid);
    for (r, b) in results.iter().zip(&back) {
        assert_eq!(r.coords, b.coords);
        assert_eq!(r.accuracy_at_lambda, b.accuracy_at_lambda);
        assert_eq!(r.fsr.to_bits(), b.fsr.to_bits());
        assert_eq!(r.ln_shift_total.to_bits(), b.ln_shift_total.to_bits());
    }
    assert_eq!(SweepSummary::from_results(&back), summary);

    let again = tempfile::tempdir().unwrap();
    write_report(&back, &SweepSummary::from_results(&back), &lambdas, again.path()).unwrap();
    for path in &written {
        let name = path.file_name().unwrap();
        assert_eq!(fs::read(path).unwrap(), fs::read(again.path().join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn unwritable_directory_names_path() {
    let cfg = GridConfig {
        class_counts: vec![2],
        mean_shift_scales: vec![0.0],
        var_shift_scales: vec![0.0],
        train_fractions: vec![0.5],
        samples_per_class: 20,
        pretrain: TrainConfig::new(0.05, 10, 42),
        finetune: TrainConfig::new(0.05, 10, 42),
        ..GridConfig::default()
    };
    let (results, summary) = run_grid(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out");
    let err = write_report(&results, &summary, &cfg.lambda_grid, &target).unwrap_err();
    assert!(err.to_string().contains(&target.display().to_string()), "{err}");
}

/// Train subset and full target estimate the same distribution, so FSR is
/// sampling noise around roughly 1.2 (the half-size subset is noisier).
#[test]
fn zero_shift_fsr_is_near_one() {
    for classes in [2usize, 4, 8] {
        let mut values = Vec::new();
        for seed in 0..10u64 {
            let cfg = GridConfig {
                class_counts: vec![classes],
                mean_shift_scales: vec![0.0],
                var_shift_scales: vec![0.0],
                train_fractions: vec![0.5],
                data_seed: seed,
                pretrain: TrainConfig::new(0.05, 1, 42),
                ..GridConfig::default()
            };
            let bundle = SourceBundle::build(classes, &cfg).unwrap();
            let pair = case_pair(&bundle.data, 0, &cfg.cases()[0], &cfg).unwrap();
            let full = pair.target_full();
            values.push(fsr_default(&pair.source.x, &pair.target_train.x, &full.x).unwrap().fsr);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((0.5..=1.5).contains(&mean), "{classes} classes: {values:?}");
        let inside = values.iter().filter(|v| (0.5..=1.5).contains(*v)).count();
        assert!(inside >= 9, "{classes} classes: {values:?}");
    }
}
