use unimf::evaluation::MetricReport;
use unimf::experiment::{run_experiment_on, Dataset, ExperimentConfig};
use unimf::factorization::TrainConfig;
use unimf::prediction::Strategy;
use unimf::splits::Scenario;
use unimf::{Error, ModelKind, RatingMatrix};

/// 30 users x 24 items with two taste blocks.
fn dataset() -> Dataset {
    let rows: Vec<Vec<u8>> = (0..30usize)
        .map(|u| {
            (0..24usize)
                .map(|i| {
                    if (u * 5 + i * 7) % 3 == 0 {
                        0
                    } else if (u < 15) == (i < 12) {
                        (4 + (u + i) % 2) as u8
                    } else {
                        (1 + (u * i) % 3) as u8
                    }
                })
                .collect()
        })
        .collect();
    Dataset::new(RatingMatrix::from_dense(&rows, 5).unwrap())
}

/// Equality that treats undefined precisions (`NaN`) as equal.
fn same(a: &MetricReport, b: &MetricReport) -> bool {
    let bits = |r: &MetricReport| {
        (
            r.mae.to_bits(),
            r.rmse.to_bits(),
            r.n_test,
            r.precision.iter().map(|(k, v)| (*k, v.to_bits())).collect::<Vec<_>>(),
        )
    };
    bits(a) == bits(b)
}

fn config(scenario: Scenario, model: ModelKind) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        model,
        k1: Some(4),
        k2: Some(3),
        lambda_grid: vec![1.0],
        gamma_grid: vec![1.0],
        runs: 1,
        train: TrainConfig {
            d: 3,
            max_iters: 40,
            init_scale: 0.1,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn degenerate_grid_gives_one_report() {
    let data = dataset();
    let out = run_experiment_on(&data, &config(Scenario::Personalized, ModelKind::Urmf)).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].runs.len(), 1);
    assert_eq!(out.best, vec![(Strategy::LatentFactor, 0)]);
    assert!(out.failures.is_empty());
}

#[test]
fn identical_cells_and_reruns_agree() {
    let data = dataset();
    let mut cfg = config(Scenario::Group, ModelKind::Ummmf);
    cfg.lambda_grid = vec![0.5, 0.5];
    cfg.runs = 2;
    cfg.strategies = vec![Strategy::LatentFactor, Strategy::MeanAggregation];
    let out = run_experiment_on(&data, &cfg).unwrap();
    assert_eq!(out.records.len(), 4);
    for s in [Strategy::LatentFactor, Strategy::MeanAggregation] {
        let recs: Vec<_> = out.records.iter().filter(|r| r.strategy == s).collect();
        assert!(same(&recs[0].mean, &recs[1].mean));
    }
    let again = run_experiment_on(&data, &cfg).unwrap();
    for (a, b) in out.records.iter().zip(&again.records) {
        assert!(same(&a.mean, &b.mean));
        assert!(a.runs.iter().zip(&b.runs).all(|(x, y)| x.seed == y.seed && same(&x.report, &y.report)));
    }
}

#[test]
fn averaged_metrics_recompute_from_runs() {
    let data = dataset();
    let mut cfg = config(Scenario::Package, ModelKind::Mmmf);
    cfg.runs = 3;
    cfg.lambda_grid = vec![0.3, 3.0];
    let out = run_experiment_on(&data, &cfg).unwrap();
    for rec in &out.records {
        assert_eq!(rec.model, "MMMF_A");
        let reports: Vec<MetricReport> = rec.runs.iter().map(|r| r.report.clone()).collect();
        assert!(same(&MetricReport::mean(&reports).unwrap(), &rec.mean));
        assert_eq!(rec.score, rec.mean.selection_score());
        assert_eq!(rec.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
    let best = out.best_for(Strategy::MeanAggregation).unwrap();
    assert!(out.records.iter().all(|r| r.score >= best.score));
}

#[test]
fn outputs_are_persisted() {
    let data = dataset();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Scenario::PackageToGroup, ModelKind::Urmf);
    cfg.k1 = Some(10);
    cfg.k2 = Some(8);
    cfg.out = Some(dir.path().to_path_buf());
    let out = run_experiment_on(&data, &cfg).unwrap();
    for f in ["results.csv", "grid.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let best = out.best_for(Strategy::LatentFactor).unwrap();
    assert_eq!(best.model_paths.len(), 1);
    let model = unimf::FactorModel::load(&best.model_paths[0]).unwrap();
    assert_eq!(model.kind, ModelKind::Urmf);
    let run_dir = best.model_paths[0].parent().unwrap();
    assert!(run_dir.join("predictions_latent.csv").exists());
    assert!(run_dir.join("metrics_latent.json").exists());
}

#[test]
fn all_failing_grid_reports_divergence() {
    let data = dataset();
    let mut cfg = config(Scenario::Personalized, ModelKind::Rmf);
    cfg.train.alpha = 1e300;
    match run_experiment_on(&data, &cfg) {
        Err(Error::Divergence { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.records.len())),
    }
}

#[test]
fn base_models_need_mean_aggregation_outside_personalized() {
    let data = dataset();
    let mut cfg = config(Scenario::Group, ModelKind::Rmf);
    cfg.strategies = vec![Strategy::LatentFactor];
    assert!(matches!(run_experiment_on(&data, &cfg), Err(Error::InvalidArgument(_))));
}
