//! One function per subcommand; each is a thin wrapper over the library.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use unimf::evaluation::{write_results_csv, ReportLabel, PRECISION_KS};
use unimf::experiment::{coarse_grid, parse_grid, prepare};
use unimf::prediction::{read_predictions_csv, write_predictions_csv};
use unimf::{
    Axis, Dataset, Error, ExperimentConfig, FactorModel, MetricReport, OrdinalAggregation, Partition,
    Prediction, Problem, RatingMatrix, Result, ScenarioSplit, TrainConfig,
};

use crate::{DataArgs, GridArgs, PredictArgs, SplitArgs, TrainArgs};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn dataset(args: &DataArgs) -> Result<Dataset> {
    Dataset::load(&args.dataset, args.format)
}

pub fn load(args: &DataArgs, out: Option<&Path>) -> Result<()> {
    let data = dataset(args)?;
    let y = data.ratings();
    let density = y.len() as f64 / (y.n_users() as f64 * y.n_items() as f64);
    println!(
        "users {}  items {}  ratings {}  levels {}  density {:.4}",
        y.n_users(),
        y.n_items(),
        y.len(),
        y.levels(),
        density
    );
    if let Some(out) = out {
        y.save_snapshot(out)?;
    }
    Ok(())
}

pub fn cluster(args: &DataArgs, axis: Axis, k: usize, seed: u64, out: &Path) -> Result<()> {
    let data = dataset(args)?;
    let partition = data.partition(axis, k, seed)?;
    let ids = match axis {
        Axis::Users => data.ratings().user_ids(),
        Axis::Items => data.ratings().item_ids(),
    };
    partition.save_csv(out, ids)?;
    let sizes = partition.sizes();
    println!(
        "{} {axis} in {} clusters (sizes {}..={})",
        partition.len(),
        partition.n_clusters(),
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
    Ok(())
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let data = dataset(&args.data)?;
    let mut cfg = ExperimentConfig {
        dataset: args.data.dataset.clone(),
        format: args.data.format,
        scenario: args.scenario,
        k1: args.k1,
        k2: args.k2,
        seed: args.seed,
        ..ExperimentConfig::default()
    };
    cfg.split.ratio = args.ratio;
    // a unified model needs both partitions, so both are computed and saved
    let prepared = prepare(&data, &cfg, args.seed)?;
    let split = &prepared.split;
    split.save(&args.out)?;
    let y = data.ratings();
    if let Some(g) = &split.groups {
        g.save_csv(args.out.join("groups.csv"), y.user_ids())?;
    }
    if let Some(p) = &split.packages {
        p.save_csv(args.out.join("packages.csv"), y.item_ids())?;
    }
    println!(
        "{}: {} training ratings, {} test cells",
        split.scenario,
        split.train.len(),
        split.test.len()
    );
    Ok(())
}

fn load_split(dir: &Path, y: &RatingMatrix) -> Result<ScenarioSplit> {
    let part = |name: &str, ids: &[u64]| -> Result<Option<Partition>> {
        let path = dir.join(name);
        if path.exists() {
            Partition::load_csv(&path, ids).map(Some)
        } else {
            Ok(None)
        }
    };
    let groups = part("groups.csv", y.user_ids())?;
    let packages = part("packages.csv", y.item_ids())?;
    ScenarioSplit::load(dir, y, groups, packages)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let data = dataset(&args.data)?;
    let split = load_split(&args.split, data.ratings())?;
    let unified = args.model.is_unified();
    let problem = Problem::new(
        args.model,
        &split.train,
        split.groups.as_ref().filter(|_| unified),
        split.packages.as_ref().filter(|_| unified),
        args.lambda,
        args.gamma,
    )?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        d: args.d.unwrap_or(defaults.d),
        lambda: args.lambda,
        gamma: args.gamma,
        alpha: args.alpha.unwrap_or(defaults.alpha),
        max_iters: args.iters.unwrap_or(defaults.max_iters),
        seed: args.seed,
        group_update: args.group_update.unwrap_or(defaults.group_update),
        ..defaults
    };
    let model = unimf::train(&problem, &cfg)?;
    model.save(&args.out)?;
    println!(
        "{}: {} accepted steps, objective {:.6} -> {:.6}",
        args.model,
        model.trajectory.len() - 1,
        model.trajectory[0],
        model.trajectory.last().expect("non-empty trajectory")
    );
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let data = dataset(&args.data)?;
    let y = data.ratings();
    let split = load_split(&args.split, y)?;
    let model = FactorModel::load(&args.model_file)?;
    let preds = unimf::predict_for_split(&model, &split, args.strategy, OrdinalAggregation::default())?;
    let f = File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    write_predictions_csv(BufWriter::new(f), split.scenario, &preds, y.user_ids(), y.item_ids())?;
    println!("{} predictions written to {}", preds.len(), args.out.display());
    Ok(())
}

fn print_report(report: &MetricReport) {
    print!("MAE {:.4}  RMSE {:.4}", report.mae, report.rmse);
    for k in PRECISION_KS {
        print!("  P@{k} {:.4}", report.precision_at(k));
    }
    println!("  (n = {})", report.n_test);
}

pub fn evaluate(path: &Path, relevance: f64, out: Option<&Path>) -> Result<()> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let rows = read_predictions_csv(f)?;
    if rows.is_empty() {
        return Err(Error::NoEligiblePairs(format!("{} holds no predictions", path.display())));
    }
    let scenario = rows[0].0;
    let preds: Vec<Prediction> = rows
        .iter()
        .map(|&(_, subject, object, truth, prediction)| Prediction {
            subject: subject as usize,
            object: object as usize,
            truth,
            prediction,
        })
        .collect();
    let report = MetricReport::evaluate(&preds, relevance)?;
    print_report(&report);
    if let Some(out) = out {
        let label = ReportLabel {
            model: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
            scenario: scenario.to_string(),
            strategy: String::new(),
            seed: None,
        };
        let f = File::create(out).map_err(|e| io_err(out, e))?;
        write_results_csv(BufWriter::new(f), &[(label, report)])?;
    }
    Ok(())
}

fn grid_config(args: &GridArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = args.format {
        cfg.format = v;
    }
    if let Some(v) = args.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = args.model {
        cfg.model = v;
    }
    if !args.strategy.is_empty() {
        cfg.strategies = args.strategy.clone();
    }
    if args.k1.is_some() {
        cfg.k1 = args.k1;
    }
    if args.k2.is_some() {
        cfg.k2 = args.k2;
    }
    match &args.lambda_grid {
        Some(g) => cfg.lambda_grid = parse_grid(g)?,
        None if args.coarse => cfg.lambda_grid = coarse_grid(),
        None => {}
    }
    match &args.gamma_grid {
        Some(g) => cfg.gamma_grid = parse_grid(g)?,
        None if args.coarse => cfg.gamma_grid = coarse_grid(),
        None => {}
    }
    if let Some(v) = args.d {
        cfg.train.d = v;
    }
    if let Some(v) = args.alpha {
        cfg.train.alpha = v;
    }
    if let Some(v) = args.iters {
        cfg.train.max_iters = v;
    }
    if let Some(v) = args.group_update {
        cfg.train.group_update = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.relevance_threshold {
        cfg.relevance = v;
    }
    if let Some(v) = args.error_unit {
        cfg.error_unit = v;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if args.save_models {
        cfg.save_models = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn grid(args: &GridArgs) -> Result<()> {
    let cfg = grid_config(args)?;
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let path = out.join("config.toml");
        fs::write(&path, cfg.to_toml()?).map_err(|e| io_err(&path, e))?;
    }
    let outcome = unimf::run_experiment(&cfg)?;
    if !outcome.failures.is_empty() {
        eprintln!("{} run(s) failed; see the log", outcome.failures.len());
    }
    for (strategy, i) in &outcome.best {
        let rec = &outcome.records[*i];
        println!(
            "{} {} ({strategy}): lambda {:.4} gamma {:.4} score {:.4}",
            rec.model, rec.scenario, rec.lambda, rec.gamma, rec.score
        );
        print_report(&rec.mean);
    }
    Ok(())
}
