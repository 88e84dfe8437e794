//! Rating predictions from a trained model for every scenario.
//!
//! `LatentFactor` reads the score straight off the factor matrices (user or
//! group factor against item or package factor). `MeanAggregation` averages
//! the personalized predictions of every (member user, member item) pair.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{dot, FactorModel};
use crate::grouping::Partition;
use crate::splits::{Scenario, ScenarioSplit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    LatentFactor,
    MeanAggregation,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "latentfactor" | "lf" | "latent" => Ok(Strategy::LatentFactor),
            "meanaggregation" | "mean" | "a" => Ok(Strategy::MeanAggregation),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::LatentFactor => "latent-factor",
            Strategy::MeanAggregation => "mean",
        })
    }
}

/// How mean aggregation combines ordinal (margin-model) predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrdinalAggregation {
    /// Average the decoded member ratings, round half up, clamp to `[1, L]`.
    #[default]
    Rounded,
    /// Average the decoded member ratings and keep the fraction.
    Fractional,
}

impl FromStr for OrdinalAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rounded" => Ok(OrdinalAggregation::Rounded),
            "fractional" => Ok(OrdinalAggregation::Fractional),
            other => Err(Error::InvalidArgument(format!("unknown ordinal aggregation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictionRequest {
    pub scenario: Scenario,
    pub strategy: Strategy,
    /// User index, or group index when the scenario's subject is a group.
    pub subject: usize,
    /// Item index, or package index when the scenario's object is a package.
    pub object: usize,
}

/// The partitions a request may refer to.
#[derive(Clone, Copy, Debug, Default)]
pub struct Clusters<'a> {
    pub groups: Option<&'a Partition>,
    pub packages: Option<&'a Partition>,
}

impl<'a> Clusters<'a> {
    fn members_of_subject(&self, req: &PredictionRequest) -> Result<Members<'a>> {
        if req.scenario.subject_is_group() {
            let g = self
                .groups
                .ok_or_else(|| Error::InvalidArgument("request needs a user grouping".into()))?;
            check_index(req.subject, g.n_clusters(), "group")?;
            Ok(Members::Many(g.members(req.subject)))
        } else {
            Ok(Members::One(req.subject))
        }
    }

    fn members_of_object(&self, req: &PredictionRequest) -> Result<Members<'a>> {
        if req.scenario.object_is_package() {
            let p = self
                .packages
                .ok_or_else(|| Error::InvalidArgument("request needs an item packaging".into()))?;
            check_index(req.object, p.n_clusters(), "package")?;
            Ok(Members::Many(p.members(req.object)))
        } else {
            Ok(Members::One(req.object))
        }
    }
}

enum Members<'a> {
    One(usize),
    Many(&'a [usize]),
}

impl Members<'_> {
    fn as_slice(&self) -> &[usize] {
        match self {
            Members::One(x) => std::slice::from_ref(x),
            Members::Many(xs) => xs,
        }
    }
}

fn check_index(index: usize, size: usize, what: &'static str) -> Result<()> {
    if index >= size {
        return Err(Error::IndexOutOfRange { what, index, size });
    }
    Ok(())
}

fn check_user_item(model: &FactorModel, user: usize, item: usize) -> Result<()> {
    check_index(user, model.dims.n_users, "user")?;
    check_index(item, model.dims.n_items, "item")
}

/// Real-valued score, unclamped.
pub fn predict_real(model: &FactorModel, req: &PredictionRequest, clusters: Clusters<'_>) -> Result<f64> {
    match req.strategy {
        Strategy::LatentFactor => {
            let (subject, object) = latent_pair(model, req)?;
            Ok(dot(subject, object))
        }
        Strategy::MeanAggregation => {
            let users = clusters.members_of_subject(req)?;
            let items = clusters.members_of_object(req)?;
            let (users, items) = (users.as_slice(), items.as_slice());
            let mut sum = 0.0;
            for &u in users {
                for &i in items {
                    check_user_item(model, u, i)?;
                    sum += dot(model.user_factor(u), model.item_factor(i));
                }
            }
            Ok(sum / (users.len() * items.len()) as f64)
        }
    }
}

fn latent_pair<'m>(model: &'m FactorModel, req: &PredictionRequest) -> Result<(&'m [f64], &'m [f64])> {
    let subject = if req.scenario.subject_is_group() {
        check_index(req.subject, model.dims.n_groups.max(group_rows(model)), "group")?;
        model.group_factor(req.subject)?
    } else {
        check_index(req.subject, model.dims.n_users, "user")?;
        model.user_factor(req.subject)
    };
    let object = if req.scenario.object_is_package() {
        check_index(req.object, model.dims.n_packages.max(package_rows(model)), "package")?;
        model.package_factor(req.object)?
    } else {
        check_index(req.object, model.dims.n_items, "item")?;
        model.item_factor(req.object)
    };
    Ok((subject, object))
}

fn group_rows(model: &FactorModel) -> usize {
    model.params.group.as_ref().map_or(0, |m| m.rows())
}

fn package_rows(model: &FactorModel) -> usize {
    model.params.package.as_ref().map_or(0, |m| m.rows())
}

/// `1 + #{r : score > thresholds[r]}`; the thresholds need not be sorted.
pub fn decode_ordinal(score: f64, thresholds: &[f64]) -> u8 {
    1 + thresholds.iter().filter(|&&t| score > t).count() as u8
}

/// Discrete rating in `[1, L]` from a margin model.
pub fn predict_ordinal(
    model: &FactorModel,
    req: &PredictionRequest,
    clusters: Clusters<'_>,
    aggregation: OrdinalAggregation,
) -> Result<f64> {
    if !model.kind.is_margin() {
        return Err(Error::MissingFactors("thresholds (not a margin model)"));
    }
    match req.strategy {
        Strategy::LatentFactor => {
            let (subject, object) = latent_pair(model, req)?;
            let theta = if req.scenario.subject_is_group() {
                model.group_thresholds(req.subject)?
            } else {
                model.user_thresholds(req.subject)?
            };
            Ok(decode_ordinal(dot(subject, object), theta) as f64)
        }
        Strategy::MeanAggregation => {
            let users = clusters.members_of_subject(req)?;
            let items = clusters.members_of_object(req)?;
            let (users, items) = (users.as_slice(), items.as_slice());
            let mut sum = 0u64;
            for &u in users {
                let theta = model.user_thresholds(u)?;
                for &i in items {
                    check_user_item(model, u, i)?;
                    let s = dot(model.user_factor(u), model.item_factor(i));
                    sum += decode_ordinal(s, theta) as u64;
                }
            }
            let mean = sum as f64 / (users.len() * items.len()) as f64;
            Ok(match aggregation {
                OrdinalAggregation::Fractional => mean,
                OrdinalAggregation::Rounded => (mean + 0.5).floor().clamp(1.0, model.levels() as f64),
            })
        }
    }
}

/// The value used for evaluation: decoded ratings for margin models,
/// scores clamped to `[1, L]` otherwise.
pub fn predict(
    model: &FactorModel,
    req: &PredictionRequest,
    clusters: Clusters<'_>,
    aggregation: OrdinalAggregation,
) -> Result<f64> {
    if model.kind.is_margin() {
        predict_ordinal(model, req, clusters, aggregation)
    } else {
        Ok(predict_real(model, req, clusters)?.clamp(1.0, model.levels() as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject: usize,
    pub object: usize,
    pub truth: f64,
    pub prediction: f64,
}

/// One prediction per test entry of `split`, using the split's partitions.
pub fn predict_for_split(
    model: &FactorModel,
    split: &ScenarioSplit,
    strategy: Strategy,
    aggregation: OrdinalAggregation,
) -> Result<Vec<Prediction>> {
    let clusters = Clusters {
        groups: split.groups.as_ref(),
        packages: split.packages.as_ref(),
    };
    split
        .test
        .iter()
        .map(|t| {
            let req = PredictionRequest {
                scenario: split.scenario,
                strategy,
                subject: t.subject,
                object: t.object,
            };
            Ok(Prediction {
                subject: t.subject,
                object: t.object,
                truth: t.truth,
                prediction: predict(model, &req, clusters, aggregation)?,
            })
        })
        .collect()
}

/// CSV with header `scenario,subject_id,object_id,truth,prediction`. Users
/// and items are written with their external ids, groups and packages with
/// their cluster index.
pub fn write_predictions_csv<W: Write>(
    out: W,
    scenario: Scenario,
    predictions: &[Prediction],
    user_ids: &[u64],
    item_ids: &[u64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "subject_id", "object_id", "truth", "prediction"])?;
    for p in predictions {
        let subject = if scenario.subject_is_group() {
            p.subject as u64
        } else {
            *user_ids.get(p.subject).ok_or(Error::IndexOutOfRange {
                what: "user",
                index: p.subject,
                size: user_ids.len(),
            })?
        };
        let object = if scenario.object_is_package() {
            p.object as u64
        } else {
            *item_ids.get(p.object).ok_or(Error::IndexOutOfRange {
                what: "item",
                index: p.object,
                size: item_ids.len(),
            })?
        };
        w.write_record([
            scenario.to_string(),
            subject.to_string(),
            object.to_string(),
            p.truth.to_string(),
            p.prediction.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<predictions>"), e))?;
    Ok(())
}

/// Reads rows written by [`write_predictions_csv`]. Subject and object ids
/// are returned as written (external ids or cluster indices).
pub fn read_predictions_csv<R: std::io::Read>(input: R) -> Result<Vec<(Scenario, u64, u64, f64, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let parse_err = |m: String| Error::Parse { line, message: m };
        if rec.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", rec.len())));
        }
        let scenario: Scenario = rec[0].parse()?;
        let subject = rec[1].parse().map_err(|e| parse_err(format!("subject_id: {e}")))?;
        let object = rec[2].parse().map_err(|e| parse_err(format!("object_id: {e}")))?;
        let truth: f64 = rec[3].parse().map_err(|e| parse_err(format!("truth: {e}")))?;
        let prediction: f64 = rec[4].parse().map_err(|e| parse_err(format!("prediction: {e}")))?;
        if !truth.is_finite() || !prediction.is_finite() {
            return Err(parse_err("non-finite value".into()));
        }
        rows.push((scenario, subject, object, truth, prediction));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{Dims, Matrix, ModelKind, Params, TrainConfig};

    fn model(kind: ModelKind, user: Vec<f64>, item: Vec<f64>, d: usize) -> FactorModel {
        let n_users = user.len() / d;
        let n_items = item.len() / d;
        let dims = Dims {
            n_users,
            n_items,
            n_groups: 1,
            n_packages: 1,
            levels: 5,
        };
        let cfg = TrainConfig {
            d,
            ..TrainConfig::default()
        };
        let mut params = Params::init(kind, dims, &cfg);
        params.user = Matrix::from_vec(n_users, d, user).unwrap();
        params.item = Matrix::from_vec(n_items, d, item).unwrap();
        FactorModel {
            kind,
            dims,
            config: cfg,
            params,
            trajectory: vec![],
        }
    }

    fn req(scenario: Scenario, strategy: Strategy, subject: usize, object: usize) -> PredictionRequest {
        PredictionRequest {
            scenario,
            strategy,
            subject,
            object,
        }
    }

    #[test]
    fn personalized_dot_product() {
        let m = model(ModelKind::Rmf, vec![1.0, 2.0], vec![3.0, -1.0], 2);
        let r = req(Scenario::Personalized, Strategy::LatentFactor, 0, 0);
        assert_eq!(predict_real(&m, &r, Clusters::default()).unwrap(), 1.0);
        // clamped for evaluation
        assert_eq!(predict(&m, &r, Clusters::default(), OrdinalAggregation::Rounded).unwrap(), 1.0);
    }

    #[test]
    fn mean_aggregation_enumerates_member_pairs() {
        let m = model(
            ModelKind::Urmf,
            vec![1.0, 0.0, 0.5, 2.0, -1.0, 1.0],
            vec![2.0, 1.0, 0.0, 3.0, 1.0, 1.0],
            2,
        );
        let groups = Partition::from_assignment(vec![0, 1, 0], 2).unwrap();
        let packages = Partition::from_assignment(vec![1, 0, 0], 2).unwrap();
        let cl = Clusters {
            groups: Some(&groups),
            packages: Some(&packages),
        };
        let got = predict_real(&m, &req(Scenario::PackageToGroup, Strategy::MeanAggregation, 0, 0), cl).unwrap();
        let mut brute = 0.0;
        for &u in &[0usize, 2] {
            for &i in &[1usize, 2] {
                brute += dot(m.user_factor(u), m.item_factor(i));
            }
        }
        assert!((got - brute / 4.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_aggregation_equals_personalized() {
        let m = model(ModelKind::Rmf, vec![1.0, 2.0, 0.3, -0.2], vec![3.0, -1.0, 0.5, 0.5], 2);
        let groups = Partition::singletons(2);
        let cl = Clusters {
            groups: Some(&groups),
            packages: None,
        };
        for u in 0..2 {
            for i in 0..2 {
                let a = predict_real(&m, &req(Scenario::Group, Strategy::MeanAggregation, u, i), cl).unwrap();
                let b = predict_real(&m, &req(Scenario::Personalized, Strategy::LatentFactor, u, i), cl).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn ordinal_decoding() {
        assert_eq!(decode_ordinal(0.7, &[-1.5, -0.5, 0.5, 1.5]), 4);
        assert_eq!(decode_ordinal(-9.0, &[-1.5, -0.5, 0.5, 1.5]), 1);
        assert_eq!(decode_ordinal(9.0, &[-1.5, -0.5, 0.5, 1.5]), 5);
        assert_eq!(decode_ordinal(0.0, &[0.5, -0.5]), 2);
    }

    #[test]
    fn ordinal_mean_rounds_half_up() {
        // scores 0.7 (-> 4) and 1.7 (-> 5): mean 4.5 rounds to 5
        let m = model(ModelKind::Mmmf, vec![0.7, 1.7], vec![1.0], 1);
        let groups = Partition::single_cluster(2);
        let cl = Clusters {
            groups: Some(&groups),
            packages: None,
        };
        let r = req(Scenario::Group, Strategy::MeanAggregation, 0, 0);
        assert_eq!(predict_ordinal(&m, &r, cl, OrdinalAggregation::Rounded).unwrap(), 5.0);
        assert_eq!(predict_ordinal(&m, &r, cl, OrdinalAggregation::Fractional).unwrap(), 4.5);
    }

    #[test]
    fn latent_group_query_needs_group_factors() {
        let m = model(ModelKind::Rmf, vec![1.0], vec![1.0], 1);
        let r = req(Scenario::Group, Strategy::LatentFactor, 0, 0);
        assert!(matches!(
            predict_real(&m, &r, Clusters::default()),
            Err(Error::MissingFactors(_))
        ));
        assert!(predict_ordinal(&m, &req(Scenario::Personalized, Strategy::LatentFactor, 0, 0), Clusters::default(), OrdinalAggregation::Rounded).is_err());
    }

    #[test]
    fn group_latent_uses_group_thresholds() {
        let mut m = model(ModelKind::Ummmf, vec![1.0], vec![1.0], 1);
        m.params.group = Some(Matrix::from_vec(1, 1, vec![0.7]).unwrap());
        m.params.group_thresholds = Some(Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let r = req(Scenario::Group, Strategy::LatentFactor, 0, 0);
        assert_eq!(predict_ordinal(&m, &r, Clusters::default(), OrdinalAggregation::Rounded).unwrap(), 1.0);
        let r = req(Scenario::Personalized, Strategy::LatentFactor, 0, 0);
        // default user thresholds [-1.5, -0.5, 0.5, 1.5], score 1.0 -> 4
        assert_eq!(predict_ordinal(&m, &r, Clusters::default(), OrdinalAggregation::Rounded).unwrap(), 4.0);
    }

    #[test]
    fn predictions_csv_round_trip() {
        let preds = vec![
            Prediction { subject: 0, object: 1, truth: 4.0, prediction: 3.25 },
            Prediction { subject: 1, object: 0, truth: 2.5, prediction: 1.0 },
        ];
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, Scenario::Personalized, &preds, &[10, 20], &[7, 8]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scenario,subject_id,object_id,truth,prediction\n"));
        let rows = read_predictions_csv(buf.as_slice()).unwrap();
        assert_eq!(rows[0], (Scenario::Personalized, 10, 8, 4.0, 3.25));
        assert_eq!(rows[1], (Scenario::Personalized, 20, 7, 2.5, 1.0));
    }
}
