//! Error and ranking metrics over batch predictions.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::Prediction;
use crate::splits::ScenarioSplit;

/// Cut-offs reported for Precision@k.
pub const PRECISION_KS: [usize; 9] = [1, 2, 3, 4, 5, 10, 20, 30, 40];
/// Ratings at or above this are relevant.
pub const DEFAULT_RELEVANCE: f64 = 4.0;

/// Mean absolute and root mean squared error.
pub fn mae_rmse(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    if pairs.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
        return Err(Error::InvalidArgument("non-finite truth or prediction".into()));
    }
    let n = pairs.len() as f64;
    let (abs, sq) = pairs.iter().fold((0.0, 0.0), |(a, s), (t, p)| {
        let e = p - t;
        (a + e.abs(), s + e * e)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

/// Mean over subjects of the fraction of relevant objects among the top `k`
/// by prediction. Ties rank the lower object index first; subjects with
/// fewer than `k` objects are left out at that `k`, and a `k` no subject
/// reaches yields `NaN`.
pub fn precision_at_k(
    per_subject: &BTreeMap<usize, Vec<(usize, f64, f64)>>,
    ks: &[usize],
    relevance: f64,
) -> Result<BTreeMap<usize, f64>> {
    if ks.contains(&0) {
        return Err(Error::InvalidArgument("precision cut-off must be positive".into()));
    }
    let mut sums = vec![(0.0f64, 0usize); ks.len()];
    for list in per_subject.values() {
        let mut ranked: Vec<&(usize, f64, f64)> = list.iter().collect();
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        for (slot, &k) in sums.iter_mut().zip(ks) {
            if ranked.len() < k {
                continue;
            }
            let hits = ranked[..k].iter().filter(|x| x.1 >= relevance).count();
            slot.0 += hits as f64 / k as f64;
            slot.1 += 1;
        }
    }
    Ok(ks
        .iter()
        .zip(sums)
        .map(|(&k, (s, c))| (k, if c == 0 { f64::NAN } else { s / c as f64 }))
        .collect())
}

/// Groups predictions by subject for [`precision_at_k`].
pub fn by_subject(predictions: &[Prediction]) -> BTreeMap<usize, Vec<(usize, f64, f64)>> {
    let mut map: BTreeMap<usize, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for p in predictions {
        map.entry(p.subject).or_default().push((p.object, p.truth, p.prediction));
    }
    map
}

/// What a group or package prediction is scored against.
///
/// A test cell of the group, package and package-to-group protocols holds
/// several removed ratings (one per member pair). `Member` compares the
/// cell's prediction with each of them; `Cell` compares it once with their
/// mean. Personalized cells hold one rating, so both agree there.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorUnit {
    #[default]
    Member,
    Cell,
}

impl std::str::FromStr for ErrorUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "member" => Ok(ErrorUnit::Member),
            "cell" => Ok(ErrorUnit::Cell),
            other => Err(Error::InvalidArgument(format!("unknown error unit {other:?}"))),
        }
    }
}

/// `(truth, prediction)` pairs for MAE/RMSE. `predictions` must be in the
/// order of `split.test`; cells without recorded member ratings (a split
/// read back from CSV) fall back to the cell truth.
pub fn error_pairs(predictions: &[Prediction], split: &ScenarioSplit, unit: ErrorUnit) -> Result<Vec<(f64, f64)>> {
    if predictions.len() != split.test.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} test cells",
            predictions.len(),
            split.test.len()
        )));
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    for (p, t) in predictions.iter().zip(&split.test) {
        if (p.subject, p.object) != (t.subject, t.object) {
            return Err(Error::DimensionMismatch("predictions out of test order".into()));
        }
        if unit == ErrorUnit::Member && !t.removed.is_empty() {
            pairs.extend(t.removed.iter().map(|r| (r.value as f64, p.prediction)));
        } else {
            pairs.push((t.truth, p.prediction));
        }
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    /// Keyed by cut-off; `NaN` when no subject has enough test objects.
    pub precision: BTreeMap<usize, f64>,
    pub n_test: usize,
}

impl MetricReport {
    /// Cell-level metrics from predictions alone.
    pub fn evaluate(predictions: &[Prediction], relevance: f64) -> Result<MetricReport> {
        let pairs: Vec<(f64, f64)> = predictions.iter().map(|p| (p.truth, p.prediction)).collect();
        Self::from_parts(&pairs, predictions, relevance)
    }

    /// Metrics for the test cells of `split`: errors per `unit`, precision
    /// ranked per subject against the cell truths.
    pub fn for_split(
        predictions: &[Prediction],
        split: &ScenarioSplit,
        unit: ErrorUnit,
        relevance: f64,
    ) -> Result<MetricReport> {
        let pairs = error_pairs(predictions, split, unit)?;
        Self::from_parts(&pairs, predictions, relevance)
    }

    fn from_parts(pairs: &[(f64, f64)], predictions: &[Prediction], relevance: f64) -> Result<MetricReport> {
        let (mae, rmse) = mae_rmse(pairs)?;
        let precision = precision_at_k(&by_subject(predictions), &PRECISION_KS, relevance)?;
        Ok(MetricReport {
            mae,
            rmse,
            precision,
            n_test: pairs.len(),
        })
    }

    pub fn precision_at(&self, k: usize) -> f64 {
        self.precision.get(&k).copied().unwrap_or(f64::NAN)
    }

    /// Mean of MAE, RMSE and `1 - P@k` for `k = 1..=5`, each weighted
    /// equally; missing precisions count as zero precision. Lower is better.
    pub fn selection_score(&self) -> f64 {
        let ranking: f64 = (1..=5)
            .map(|k| {
                let p = self.precision_at(k);
                1.0 - if p.is_nan() { 0.0 } else { p }
            })
            .sum::<f64>()
            / 5.0;
        (self.mae + self.rmse + ranking) / 3.0
    }

    /// Element-wise mean; precisions average over the reports where defined.
    pub fn mean(reports: &[MetricReport]) -> Result<MetricReport> {
        if reports.is_empty() {
            return Err(Error::InvalidArgument("no reports to average".into()));
        }
        let n = reports.len() as f64;
        let mut precision = BTreeMap::new();
        for k in reports[0].precision.keys() {
            let vals: Vec<f64> = reports
                .iter()
                .map(|r| r.precision_at(*k))
                .filter(|p| !p.is_nan())
                .collect();
            let mean = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            precision.insert(*k, mean);
        }
        Ok(MetricReport {
            mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
            rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
            precision,
            n_test: (reports.iter().map(|r| r.n_test).sum::<usize>() as f64 / n).round() as usize,
        })
    }
}

/// Identifies the row a report belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportLabel {
    pub model: String,
    pub scenario: String,
    pub strategy: String,
    /// `None` for averages over several seeds.
    pub seed: Option<u64>,
}

pub fn results_header() -> Vec<String> {
    let mut h: Vec<String> = ["model", "scenario", "strategy", "mae", "rmse"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(PRECISION_KS.iter().map(|k| format!("p@{k}")));
    h.push("n_test".into());
    h.push("seed".into());
    h
}

/// Writes `model,scenario,strategy,mae,rmse,p@1,...,p@40,n_test,seed`.
pub fn write_results_csv<W: Write>(out: W, rows: &[(ReportLabel, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(results_header())?;
    for (label, r) in rows {
        let mut rec = vec![
            label.model.clone(),
            label.scenario.clone(),
            label.strategy.clone(),
            r.mae.to_string(),
            r.rmse.to_string(),
        ];
        rec.extend(PRECISION_KS.iter().map(|&k| r.precision_at(k).to_string()));
        rec.push(r.n_test.to_string());
        rec.push(label.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(std::path::Path::new("<results>"), e))?;
    Ok(())
}
