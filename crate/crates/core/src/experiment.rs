//! Grid search over `(lambda, gamma)`: cluster, split, train, predict and
//! evaluate for every cell and run, then pick the cell with the lowest
//! selection score (see [`MetricReport::selection_score`]).

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_movielens, MovieLensFormat, RatingMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{write_results_csv, ErrorUnit, MetricReport, ReportLabel, DEFAULT_RELEVANCE};
use crate::factorization::{train, FactorModel, ModelKind, Problem, TrainConfig};
use crate::grouping::{build_affinity, spectral_partition, AffinityMatrix, Axis, Partition};
use crate::prediction::{predict_for_split, write_predictions_csv, OrdinalAggregation, Prediction, Strategy};
use crate::splits::{
    split_group, split_package, split_package_to_group, split_personalized, Fraction, P2gRules, Scenario,
    ScenarioSplit,
};

/// `10^(j/16)` for each `j`.
pub fn log_grid(js: impl IntoIterator<Item = u32>) -> Vec<f64> {
    js.into_iter().map(|j| 10f64.powf(j as f64 / 16.0)).collect()
}

/// `10^(j/16)` for `j = 0..=23`.
pub fn paper_grid() -> Vec<f64> {
    log_grid(0..=23)
}

/// Every fourth point of [`paper_grid`]: `j = 0, 4, ..., 20`.
pub fn coarse_grid() -> Vec<f64> {
    log_grid((0..=20).step_by(4))
}

/// `paper`, `coarse`, `baseline` (`j = 0..=30`) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let grid = match s.trim() {
        "paper" => paper_grid(),
        "coarse" => coarse_grid(),
        "baseline" => log_grid(0..=30),
        list => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad grid value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    check_grid(&grid, "grid")?;
    Ok(grid)
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("{what} value {v} must be finite and >= 0")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    /// Share of ratings kept for training in the personalized protocol.
    pub ratio: f64,
    /// Candidacy threshold of the group and package protocols.
    pub min_frac: Fraction,
    /// Most test items per group.
    pub max_items: usize,
    /// Most test users per package; unlimited when absent.
    pub max_package_users: Option<usize>,
    pub p2g: P2gRules,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            ratio: 0.7,
            min_frac: Fraction::new(1, 5).expect("valid"),
            max_items: 5,
            max_package_users: None,
            p2g: P2gRules::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: MovieLensFormat,
    pub scenario: Scenario,
    pub model: ModelKind,
    /// Prediction strategies evaluated on each trained model. Empty means
    /// latent factors for unified models and mean aggregation otherwise.
    pub strategies: Vec<Strategy>,
    /// User groups; defaults to 20, or `n / 8` for package-to-group.
    pub k1: Option<usize>,
    /// Item packages; defaults to 20, or `m / 4` for package-to-group.
    pub k2: Option<usize>,
    pub lambda_grid: Vec<f64>,
    /// Ignored by the base models.
    pub gamma_grid: Vec<f64>,
    pub train: TrainConfig,
    pub runs: usize,
    /// Run `r` uses seed `seed + r` for clustering, splitting and training.
    pub seed: u64,
    pub relevance: f64,
    pub ordinal_aggregation: OrdinalAggregation,
    pub error_unit: ErrorUnit,
    pub split: SplitSettings,
    pub workers: usize,
    pub out: Option<PathBuf>,
    /// Persist every trained model, not only the winners.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::from("u.data"),
            format: MovieLensFormat::Ml100k,
            scenario: Scenario::Personalized,
            model: ModelKind::Urmf,
            strategies: Vec::new(),
            k1: None,
            k2: None,
            lambda_grid: paper_grid(),
            gamma_grid: paper_grid(),
            train: TrainConfig::default(),
            runs: 3,
            seed: 0,
            relevance: DEFAULT_RELEVANCE,
            ordinal_aggregation: OrdinalAggregation::default(),
            error_unit: ErrorUnit::default(),
            split: SplitSettings::default(),
            workers: 1,
            out: None,
            save_models: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The strategies actually evaluated.
    pub fn effective_strategies(&self) -> Vec<Strategy> {
        if self.scenario == Scenario::Personalized {
            return vec![Strategy::LatentFactor];
        }
        if self.strategies.is_empty() {
            return vec![if self.model.is_unified() {
                Strategy::LatentFactor
            } else {
                Strategy::MeanAggregation
            }];
        }
        let mut out = Vec::new();
        for s in &self.strategies {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out
    }

    /// `(lambda, gamma)` cells, `lambda` outermost; base models get a
    /// single `gamma = 0`.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let gammas: &[f64] = if self.model.is_unified() { &self.gamma_grid } else { &[0.0] };
        self.lambda_grid
            .iter()
            .flat_map(|&l| gammas.iter().map(move |&g| (l, g)))
            .collect()
    }

    pub fn cluster_counts(&self, y: &RatingMatrix) -> (usize, usize) {
        let p2g = self.scenario == Scenario::PackageToGroup;
        let k1 = self.k1.unwrap_or(if p2g { y.n_users() / 8 } else { 20 });
        let k2 = self.k2.unwrap_or(if p2g { y.n_items() / 4 } else { 20 });
        (k1, k2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        check_grid(&self.lambda_grid, "lambda grid")?;
        if self.model.is_unified() {
            check_grid(&self.gamma_grid, "gamma grid")?;
        }
        if !self.relevance.is_finite() {
            return bad("relevance threshold must be finite".into());
        }
        if self.k1 == Some(0) || self.k2 == Some(0) {
            return bad("cluster counts must be positive".into());
        }
        if !self.model.is_unified() && self.effective_strategies().contains(&Strategy::LatentFactor) && self.scenario != Scenario::Personalized {
            return bad(format!(
                "{} has no group or package factors; use the mean strategy for {} recommendation",
                self.model, self.scenario
            ));
        }
        self.train.validate()
    }
}

/// The rating matrix plus lazily computed, shared clusterings.
pub struct Dataset {
    ratings: RatingMatrix,
    user_affinity: OnceLock<AffinityMatrix>,
    item_affinity: OnceLock<AffinityMatrix>,
    partitions: Mutex<HashMap<(Axis, usize, u64), Arc<Partition>>>,
}

impl Dataset {
    pub fn new(ratings: RatingMatrix) -> Self {
        Dataset {
            ratings,
            user_affinity: OnceLock::new(),
            item_affinity: OnceLock::new(),
            partitions: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: impl AsRef<Path>, format: MovieLensFormat) -> Result<Self> {
        Ok(Self::new(load_movielens(path, format)?))
    }

    pub fn ratings(&self) -> &RatingMatrix {
        &self.ratings
    }

    pub fn affinity(&self, axis: Axis) -> Result<&AffinityMatrix> {
        let cell = match axis {
            Axis::Users => &self.user_affinity,
            Axis::Items => &self.item_affinity,
        };
        if let Some(a) = cell.get() {
            return Ok(a);
        }
        let a = build_affinity(&self.ratings, axis)?;
        Ok(cell.get_or_init(|| a))
    }

    /// Spectral clustering of the full matrix along `axis`, memoized.
    pub fn partition(&self, axis: Axis, k: usize, seed: u64) -> Result<Arc<Partition>> {
        let key = (axis, k, seed);
        if let Some(p) = self.partitions.lock().expect("poisoned").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(spectral_partition(self.affinity(axis)?, k, seed)?);
        self.partitions.lock().expect("poisoned").insert(key, p.clone());
        Ok(p)
    }
}

/// Everything one run needs, shared by all grid cells.
pub struct Prepared {
    pub split: ScenarioSplit,
    pub groups: Option<Arc<Partition>>,
    pub packages: Option<Arc<Partition>>,
}

/// Clusters (when needed) and splits for one seed.
pub fn prepare(data: &Dataset, cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let y = data.ratings();
    let (k1, k2) = cfg.cluster_counts(y);
    let need_groups = cfg.model.is_unified() || cfg.scenario.subject_is_group();
    let need_packages = cfg.model.is_unified() || cfg.scenario.object_is_package();
    let groups = need_groups.then(|| data.partition(Axis::Users, k1, seed)).transpose()?;
    let packages = need_packages.then(|| data.partition(Axis::Items, k2, seed)).transpose()?;
    let s = &cfg.split;
    let mut split = match cfg.scenario {
        Scenario::Personalized => split_personalized(y, s.ratio, seed)?,
        Scenario::Group => split_group(y, groups.as_deref().expect("needed"), s.min_frac, s.max_items, seed)?,
        Scenario::Package => split_package(
            y,
            packages.as_deref().expect("needed"),
            s.min_frac,
            s.max_package_users,
            seed,
        )?,
        Scenario::PackageToGroup => split_package_to_group(
            y,
            groups.as_deref().expect("needed"),
            packages.as_deref().expect("needed"),
            s.p2g,
            seed,
        )?,
    };
    if split.test.is_empty() {
        return Err(Error::NoEligiblePairs(format!("{} split for seed {seed} has no test cells", cfg.scenario)));
    }
    if split.groups.is_none() {
        split.groups = groups.as_deref().cloned();
    }
    if split.packages.is_none() {
        split.packages = packages.as_deref().cloned();
    }
    Ok(Prepared { split, groups, packages })
}

/// Trains one model on a prepared run.
pub fn train_cell(prepared: &Prepared, cfg: &ExperimentConfig, lambda: f64, gamma: f64, seed: u64) -> Result<FactorModel> {
    let problem = Problem::new(
        cfg.model,
        &prepared.split.train,
        prepared.groups.as_deref(),
        prepared.packages.as_deref(),
        lambda,
        gamma,
    )?;
    let train_cfg = TrainConfig {
        lambda,
        gamma,
        seed,
        ..cfg.train
    };
    train(&problem, &train_cfg)
}

/// `URMF`, or `URMF_A` for mean aggregation outside the personalized
/// scenario.
pub fn model_label(kind: ModelKind, scenario: Scenario, strategy: Strategy) -> String {
    if scenario != Scenario::Personalized && strategy == Strategy::MeanAggregation {
        format!("{kind}_A")
    } else {
        kind.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub report: MetricReport,
}

/// All runs of one grid cell under one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub scenario: Scenario,
    pub strategy: Strategy,
    pub lambda: f64,
    pub gamma: f64,
    pub runs: Vec<SeedReport>,
    pub mean: MetricReport,
    pub score: f64,
    /// Training and evaluation time summed over runs.
    pub seconds: f64,
    pub model_paths: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
    pub message: String,
    pub divergence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    /// One per (complete cell, strategy), cells in grid order.
    pub records: Vec<RunRecord>,
    /// Index into `records` of the winner for each strategy.
    pub best: Vec<(Strategy, usize)>,
    pub failures: Vec<Failure>,
}

impl ExperimentOutcome {
    pub fn best_for(&self, strategy: Strategy) -> Option<&RunRecord> {
        self.best
            .iter()
            .find(|(s, _)| *s == strategy)
            .map(|&(_, i)| &self.records[i])
    }
}

struct JobResult {
    cell: usize,
    seed: u64,
    seconds: f64,
    outcome: Result<Vec<(Strategy, MetricReport, Vec<Prediction>)>>,
}

fn cell_dir(out: &Path, cell: usize, lambda: f64, gamma: f64) -> PathBuf {
    out.join("runs").join(format!("{cell:03}_lambda{lambda:.4}_gamma{gamma:.4}"))
}

/// Runs the whole grid. Cells whose runs fail are logged and skipped; the
/// experiment fails only when no cell completes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.dataset, cfg.format)?;
    run_experiment_on(&data, cfg)
}

/// [`run_experiment`] on an already loaded dataset (its clusterings are
/// reused across calls).
pub fn run_experiment_on(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let strategies = cfg.effective_strategies();
    let cells = cfg.cells();
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|r| cfg.seed + r).collect();
    info!(
        "{} {}: {} cells x {} runs",
        cfg.model,
        cfg.scenario,
        cells.len(),
        seeds.len()
    );

    let prepared: Vec<Prepared> = seeds.iter().map(|&s| prepare(data, cfg, s)).collect::<Result<_>>()?;
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds.len()).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start workers: {e}")))?;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let (lambda, gamma) = cells[c];
                let seed = seeds[r];
                let start = Instant::now();
                let outcome = run_job(&prepared[r], cfg, &strategies, c, lambda, gamma, seed, data);
                JobResult {
                    cell: c,
                    seed,
                    seconds: start.elapsed().as_secs_f64(),
                    outcome,
                }
            })
            .collect()
    });

    let mut failures = Vec::new();
    let mut per_cell: Vec<Vec<(u64, f64, Vec<(Strategy, MetricReport)>)>> = vec![Vec::new(); cells.len()];
    let mut failed_cell = vec![false; cells.len()];
    for job in results {
        let (lambda, gamma) = cells[job.cell];
        match job.outcome {
            Ok(reports) => per_cell[job.cell].push((
                job.seed,
                job.seconds,
                reports.into_iter().map(|(s, r, _)| (s, r)).collect(),
            )),
            Err(e) => {
                warn!("cell lambda={lambda} gamma={gamma} seed={}: {e}", job.seed);
                failed_cell[job.cell] = true;
                failures.push(Failure {
                    lambda,
                    gamma,
                    seed: job.seed,
                    divergence: matches!(e, Error::Divergence { .. }),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut records = Vec::new();
    for (c, runs) in per_cell.iter().enumerate() {
        if failed_cell[c] {
            continue;
        }
        let (lambda, gamma) = cells[c];
        let seconds = runs.iter().map(|r| r.1).sum();
        for (si, &strategy) in strategies.iter().enumerate() {
            let seed_reports: Vec<SeedReport> = runs
                .iter()
                .map(|(seed, _, reps)| SeedReport {
                    seed: *seed,
                    report: reps[si].1.clone(),
                })
                .collect();
            let reports: Vec<MetricReport> = seed_reports.iter().map(|s| s.report.clone()).collect();
            let mean = MetricReport::mean(&reports)?;
            records.push(RunRecord {
                model: model_label(cfg.model, cfg.scenario, strategy),
                scenario: cfg.scenario,
                strategy,
                lambda,
                gamma,
                runs: seed_reports,
                score: mean.selection_score(),
                mean,
                seconds,
                model_paths: Vec::new(),
            });
        }
    }

    if records.is_empty() {
        if let Some(f) = failures.first() {
            return Err(if failures.iter().all(|f| f.divergence) {
                Error::Divergence {
                    iteration: 0,
                    reason: format!("every grid cell diverged; first: {}", f.message),
                }
            } else {
                Error::InvalidArgument(format!("every grid cell failed; first: {}", f.message))
            });
        }
    }

    let best: Vec<(Strategy, usize)> = strategies
        .iter()
        .map(|&s| {
            let idx = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.strategy == s)
                .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("at least one record per strategy");
            (s, idx)
        })
        .collect();

    let mut outcome = ExperimentOutcome {
        config: cfg.clone(),
        records,
        best,
        failures,
    };
    if let Some(out) = &cfg.out {
        persist(&mut outcome, &prepared, &cells, out)?;
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn run_job(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
    cell: usize,
    lambda: f64,
    gamma: f64,
    seed: u64,
    data: &Dataset,
) -> Result<Vec<(Strategy, MetricReport, Vec<Prediction>)>> {
    let model = train_cell(prepared, cfg, lambda, gamma, seed)?;
    let mut out = Vec::new();
    for &s in strategies {
        let preds = predict_for_split(&model, &prepared.split, s, cfg.ordinal_aggregation)?;
        let report = MetricReport::for_split(&preds, &prepared.split, cfg.error_unit, cfg.relevance)?;
        out.push((s, report, preds));
    }
    if let Some(root) = &cfg.out {
        let dir = cell_dir(root, cell, lambda, gamma).join(seed.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let y = data.ratings();
        for (s, report, preds) in &out {
            let path = dir.join(format!("predictions_{}.csv", strategy_slug(*s)));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_predictions_csv(BufWriter::new(f), cfg.scenario, preds, y.user_ids(), y.item_ids())?;
            let path = dir.join(format!("metrics_{}.json", strategy_slug(*s)));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::to_writer_pretty(BufWriter::new(f), report)?;
        }
        if cfg.save_models {
            model.save(dir.join("model.json"))?;
        }
    }
    Ok(out)
}

fn strategy_slug(s: Strategy) -> &'static str {
    match s {
        Strategy::LatentFactor => "latent",
        Strategy::MeanAggregation => "mean",
    }
}

fn persist(outcome: &mut ExperimentOutcome, prepared: &[Prepared], cells: &[(f64, f64)], out: &Path) -> Result<()> {
    let cfg = outcome.config.clone();

    // winners' models: retrain (deterministic) unless already saved
    let mut winners: Vec<usize> = outcome.best.iter().map(|&(_, i)| i).collect();
    winners.sort_unstable();
    winners.dedup();
    for i in winners {
        let (lambda, gamma) = (outcome.records[i].lambda, outcome.records[i].gamma);
        let cell = cells
            .iter()
            .position(|&c| c == (lambda, gamma))
            .expect("record comes from a cell");
        let mut paths = Vec::new();
        for (r, run) in outcome.records[i].runs.clone().iter().enumerate() {
            let path = cell_dir(out, cell, lambda, gamma).join(run.seed.to_string()).join("model.json");
            if !cfg.save_models {
                train_cell(&prepared[r], &cfg, lambda, gamma, run.seed)?.save(&path)?;
            }
            paths.push(path);
        }
        for rec in outcome.records.iter_mut().filter(|r| r.lambda == lambda && r.gamma == gamma) {
            rec.model_paths = paths.clone();
        }
    }

    let mut rows = Vec::new();
    for &(_, i) in &outcome.best {
        let rec = &outcome.records[i];
        let label = |seed| ReportLabel {
            model: rec.model.clone(),
            scenario: rec.scenario.to_string(),
            strategy: rec.strategy.to_string(),
            seed,
        };
        for run in &rec.runs {
            rows.push((label(Some(run.seed)), run.report.clone()));
        }
        rows.push((label(None), rec.mean.clone()));
    }
    let path = out.join("results.csv");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_results_csv(BufWriter::new(f), &rows)?;

    let path = out.join("grid.csv");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(["model", "strategy", "lambda", "gamma", "score", "mae", "rmse", "p@1", "p@5", "seconds"])?;
    for r in &outcome.records {
        w.write_record([
            r.model.clone(),
            r.strategy.to_string(),
            r.lambda.to_string(),
            r.gamma.to_string(),
            r.score.to_string(),
            r.mean.mae.to_string(),
            r.mean.rmse.to_string(),
            r.mean.precision_at(1).to_string(),
            r.mean.precision_at(5).to_string(),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("summary.json");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), outcome)?;
    Ok(())
}
