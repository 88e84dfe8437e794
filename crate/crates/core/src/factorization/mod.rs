//! Latent factor models and their gradient-descent trainer.
//!
//! Four models share one parameter layout:
//!
//! | kind  | data term                    | group/package factors |
//! |-------|------------------------------|-----------------------|
//! | RMF   | squared error                | no                    |
//! | MMMF  | smooth hinge over thresholds | no                    |
//! | URMF  | squared error                | yes                   |
//! | UMMMF | smooth hinge over thresholds | yes, plus group thresholds |
//!
//! The unified kinds add `gamma / 2` times the squared distance between each
//! user (item) factor and the factor of its group (package), and for UMMMF
//! between each user's thresholds and its group's thresholds.

mod objective;
mod train;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::Partition;

pub use objective::{gradients, objective, Problem};
pub use train::{backtracking_step, train, StepControl, MAX_CONSECUTIVE_REJECTIONS, MIN_STEP};

/// Smooth hinge: `0` for `z >= 1`, `(1 - z)^2 / 2` on `(0, 1)`, `1/2 - z` below.
pub fn smooth_hinge(z: f64) -> f64 {
    if z >= 1.0 {
        0.0
    } else if z > 0.0 {
        0.5 * (1.0 - z) * (1.0 - z)
    } else {
        0.5 - z
    }
}

/// Derivative of [`smooth_hinge`].
pub fn smooth_hinge_grad(z: f64) -> f64 {
    if z >= 1.0 {
        0.0
    } else if z > 0.0 {
        z - 1.0
    } else {
        -1.0
    }
}

/// `+1` when threshold level `r` is at or above rating `y`, else `-1`.
pub fn threshold_sign(y: u8, r: u8, levels: u8) -> Result<f64> {
    if y == 0 || y > levels {
        return Err(Error::InvalidArgument(format!("rating {y} outside [1, {levels}]")));
    }
    if r == 0 || r >= levels {
        return Err(Error::InvalidArgument(format!(
            "threshold level {r} outside [1, {}]",
            levels - 1
        )));
    }
    Ok(if r >= y { 1.0 } else { -1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(alias = "RMF")]
    Rmf,
    #[serde(alias = "MMMF")]
    Mmmf,
    #[serde(alias = "URMF")]
    Urmf,
    #[serde(alias = "UMMMF")]
    Ummmf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rmf, ModelKind::Mmmf, ModelKind::Urmf, ModelKind::Ummmf];

    /// Learns group and package factors.
    pub fn is_unified(self) -> bool {
        matches!(self, ModelKind::Urmf | ModelKind::Ummmf)
    }

    /// Uses the ordinal smooth-hinge loss with thresholds.
    pub fn is_margin(self) -> bool {
        matches!(self, ModelKind::Mmmf | ModelKind::Ummmf)
    }

    /// The kind without group and package terms.
    pub fn base(self) -> ModelKind {
        match self {
            ModelKind::Rmf | ModelKind::Urmf => ModelKind::Rmf,
            ModelKind::Mmmf | ModelKind::Ummmf => ModelKind::Mmmf,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmf" => Ok(ModelKind::Rmf),
            "mmmf" => Ok(ModelKind::Mmmf),
            "urmf" => Ok(ModelKind::Urmf),
            "ummmf" => Ok(ModelKind::Ummmf),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rmf => "RMF",
            ModelKind::Mmmf => "MMMF",
            ModelKind::Urmf => "URMF",
            ModelKind::Ummmf => "UMMMF",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Latent dimension.
    pub d: usize,
    /// Weight of the Frobenius penalty on user and item factors.
    pub lambda: f64,
    /// Weight of the user-group / item-package deviation terms.
    pub gamma: f64,
    /// Initial (and maximum) step length.
    pub alpha: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Factors start i.i.d. uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub group_update: GroupUpdate,
}

/// How the unified models move group and package parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupUpdate {
    /// Gradient steps like every other parameter.
    Gradient,
    /// After each step, set every group (package) factor and threshold row
    /// to the mean of its members: the exact minimizer of the objective in
    /// those blocks. With one step length for all blocks, gradient steps on
    /// small groups are too short to track their members.
    #[default]
    Exact,
}

impl FromStr for GroupUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gradient" => Ok(GroupUpdate::Gradient),
            "exact" => Ok(GroupUpdate::Exact),
            other => Err(Error::InvalidArgument(format!("unknown group update {other:?}"))),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 100,
            lambda: 1.0,
            gamma: 1.0,
            alpha: 0.03,
            max_iters: 200,
            seed: 0,
            init_scale: 0.01,
            group_update: GroupUpdate::Exact,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d == 0 {
            return bad("latent dimension must be positive".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma {} must be finite and >= 0", self.gamma));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha {} must be finite and > 0", self.alpha));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!("init_scale {} must be finite and >= 0", self.init_scale));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = if scale > 0.0 {
            let dist = Uniform::new_inclusive(-scale, scale);
            (0..rows * cols).map(|_| dist.sample(rng)).collect()
        } else {
            vec![0.0; rows * cols]
        };
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for t in 0..4 {
            acc[t] += x[t] * y[t];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Every learnable matrix. Absent parts are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub user: Matrix,
    pub item: Matrix,
    pub group: Option<Matrix>,
    pub package: Option<Matrix>,
    /// `n_users x (L - 1)`
    pub thresholds: Option<Matrix>,
    /// `n_groups x (L - 1)`
    pub group_thresholds: Option<Matrix>,
}

impl Params {
    /// Random factors (users, items, groups, packages drawn in that order
    /// from one seeded stream) and evenly spaced centered thresholds.
    pub fn init(
        kind: ModelKind,
        dims: Dims,
        cfg: &TrainConfig,
    ) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let user = Matrix::uniform(dims.n_users, cfg.d, cfg.init_scale, &mut rng);
        let item = Matrix::uniform(dims.n_items, cfg.d, cfg.init_scale, &mut rng);
        let (group, package) = if kind.is_unified() {
            (
                Some(Matrix::uniform(dims.n_groups, cfg.d, cfg.init_scale, &mut rng)),
                Some(Matrix::uniform(dims.n_packages, cfg.d, cfg.init_scale, &mut rng)),
            )
        } else {
            (None, None)
        };
        let spaced = |rows: usize| {
            let cuts = dims.levels.saturating_sub(1) as usize;
            let mut m = Matrix::zeros(rows, cuts);
            for i in 0..rows {
                for (r, t) in m.row_mut(i).iter_mut().enumerate() {
                    *t = (r + 1) as f64 - dims.levels as f64 / 2.0;
                }
            }
            m
        };
        let thresholds = kind.is_margin().then(|| spaced(dims.n_users));
        let group_thresholds = (kind.is_margin() && kind.is_unified()).then(|| spaced(dims.n_groups));
        Params {
            user,
            item,
            group,
            package,
            thresholds,
            group_thresholds,
        }
    }

    fn parts(&self) -> impl Iterator<Item = &Matrix> + '_ {
        [Some(&self.user), Some(&self.item)]
            .into_iter()
            .chain([
                self.group.as_ref(),
                self.package.as_ref(),
                self.thresholds.as_ref(),
                self.group_thresholds.as_ref(),
            ])
            .flatten()
    }

    fn parts_mut(&mut self) -> impl Iterator<Item = &mut Matrix> + '_ {
        [Some(&mut self.user), Some(&mut self.item)]
            .into_iter()
            .chain([
                self.group.as_mut(),
                self.package.as_mut(),
                self.thresholds.as_mut(),
                self.group_thresholds.as_mut(),
            ])
            .flatten()
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Params {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        Params {
            user: z(&self.user),
            item: z(&self.item),
            group: self.group.as_ref().map(z),
            package: self.package.as_ref().map(z),
            thresholds: self.thresholds.as_ref().map(z),
            group_thresholds: self.group_thresholds.as_ref().map(z),
        }
    }

    /// `self + scale * other`; shapes must match.
    pub fn add_scaled(&self, other: &Params, scale: f64) -> Params {
        let mut out = self.clone();
        for (o, g) in out.parts_mut().zip(other.parts()) {
            debug_assert_eq!(o.data.len(), g.data.len());
            for (x, d) in o.data.iter_mut().zip(&g.data) {
                *x += scale * d;
            }
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.parts().map(Matrix::squared_norm).sum()
    }

    /// Sets each group and package row to the mean of its members' rows.
    pub fn center_groups(&mut self, groups: &Partition, packages: &Partition) {
        fn center(centers: &mut Matrix, members: &Matrix, part: &Partition) {
            for (c, list) in part.clusters().enumerate() {
                let row = centers.row_mut(c);
                row.fill(0.0);
                for &m in list {
                    for (x, y) in row.iter_mut().zip(members.row(m)) {
                        *x += y;
                    }
                }
                let inv = 1.0 / list.len() as f64;
                row.iter_mut().for_each(|x| *x *= inv);
            }
        }
        if let Some(g) = self.group.as_mut() {
            center(g, &self.user, groups);
        }
        if let Some(q) = self.package.as_mut() {
            center(q, &self.item, packages);
        }
        if let (Some(gt), Some(t)) = (self.group_thresholds.as_mut(), self.thresholds.as_ref()) {
            center(gt, t, groups);
        }
    }

    /// All values, part by part, in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        self.parts().flat_map(|m| m.data.iter().copied()).collect()
    }

    /// Mutable access to the `index`-th value of [`Params::flatten`].
    pub fn flat_mut(&mut self, mut index: usize) -> &mut f64 {
        for m in self.parts_mut() {
            if index < m.data.len() {
                return &mut m.data[index];
            }
            index -= m.data.len();
        }
        panic!("flat index out of range");
    }
}

/// Sizes a model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub n_packages: usize,
    pub levels: u8,
}

/// A trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub kind: ModelKind,
    pub dims: Dims,
    pub config: TrainConfig,
    pub params: Params,
    /// Training objective after each accepted step, starting from the
    /// initial point.
    pub trajectory: Vec<f64>,
}

impl FactorModel {
    pub fn levels(&self) -> u8 {
        self.dims.levels
    }

    pub fn user_factor(&self, user: usize) -> &[f64] {
        self.params.user.row(user)
    }

    pub fn item_factor(&self, item: usize) -> &[f64] {
        self.params.item.row(item)
    }

    pub fn group_factor(&self, group: usize) -> Result<&[f64]> {
        self.params
            .group
            .as_ref()
            .map(|m| m.row(group))
            .ok_or(Error::MissingFactors("group factors"))
    }

    pub fn package_factor(&self, package: usize) -> Result<&[f64]> {
        self.params
            .package
            .as_ref()
            .map(|m| m.row(package))
            .ok_or(Error::MissingFactors("package factors"))
    }

    pub fn user_thresholds(&self, user: usize) -> Result<&[f64]> {
        self.params
            .thresholds
            .as_ref()
            .map(|m| m.row(user))
            .ok_or(Error::MissingFactors("user thresholds"))
    }

    pub fn group_thresholds(&self, group: usize) -> Result<&[f64]> {
        self.params
            .group_thresholds
            .as_ref()
            .map(|m| m.row(group))
            .ok_or(Error::MissingFactors("group thresholds"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FactorModel> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_hinge_pieces() {
        assert_eq!(smooth_hinge(1.0), 0.0);
        assert_eq!(smooth_hinge(2.0), 0.0);
        assert_eq!(smooth_hinge(0.5), 0.125);
        assert_eq!(smooth_hinge(0.0), 0.5);
        assert_eq!(smooth_hinge(-1.0), 1.5);
    }

    #[test]
    fn smooth_hinge_derivative_matches_differences() {
        for &z in &[-2.0, -0.3, 0.2, 0.5, 0.9, 1.5] {
            let h = 1e-6;
            let fd = (smooth_hinge(z + h) - smooth_hinge(z - h)) / (2.0 * h);
            assert!((fd - smooth_hinge_grad(z)).abs() < 1e-8, "z = {z}");
        }
        // continuity of the value and slope at the joints
        for &z in &[0.0, 1.0] {
            let e = 1e-9;
            assert!((smooth_hinge(z - e) - smooth_hinge(z + e)).abs() < 1e-8);
            assert!((smooth_hinge_grad(z - e) - smooth_hinge_grad(z + e)).abs() < 1e-8);
        }
    }

    #[test]
    fn threshold_signs() {
        let t: Vec<f64> = (1..5).map(|r| threshold_sign(3, r, 5).unwrap()).collect();
        assert_eq!(t, vec![-1.0, -1.0, 1.0, 1.0]);
        assert!((1..5).all(|r| threshold_sign(1, r, 5).unwrap() == 1.0));
        assert!((1..5).all(|r| threshold_sign(5, r, 5).unwrap() == -1.0));
        assert!(threshold_sign(0, 1, 5).is_err());
        assert!(threshold_sign(3, 5, 5).is_err());
        assert!(threshold_sign(6, 1, 5).is_err());
    }

    #[test]
    fn init_shapes_and_thresholds() {
        let dims = Dims {
            n_users: 3,
            n_items: 4,
            n_groups: 2,
            n_packages: 1,
            levels: 5,
        };
        let cfg = TrainConfig {
            d: 2,
            ..TrainConfig::default()
        };
        let p = Params::init(ModelKind::Ummmf, dims, &cfg);
        assert_eq!(p.group.as_ref().unwrap().rows(), 2);
        assert_eq!(p.thresholds.as_ref().unwrap().row(1), &[-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(p.group_thresholds.as_ref().unwrap().rows(), 2);
        assert!(p.user.as_slice().iter().all(|x| x.abs() <= 0.01));

        let base = Params::init(ModelKind::Rmf, dims, &cfg);
        assert!(base.group.is_none() && base.thresholds.is_none());
        assert_eq!(base.user, p.user);
        assert_eq!(base.item, p.item);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { d: 0, ..Default::default() },
            TrainConfig { lambda: f64::NAN, ..Default::default() },
            TrainConfig { gamma: -1.0, ..Default::default() },
            TrainConfig { alpha: 0.0, ..Default::default() },
            TrainConfig { max_iters: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
