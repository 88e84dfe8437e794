use super::{dot, smooth_hinge, smooth_hinge_grad, Dims, ModelKind, Params};
use crate::data::RatingMatrix;
use crate::error::{Error, Result};
use crate::grouping::Partition;

/// Everything the objective depends on besides the parameters.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub kind: ModelKind,
    pub train: &'a RatingMatrix,
    pub groups: Option<&'a Partition>,
    pub packages: Option<&'a Partition>,
    pub lambda: f64,
    pub gamma: f64,
}

impl<'a> Problem<'a> {
    /// Checks that unified kinds have partitions covering every user and
    /// item. Base kinds ignore any partitions they are given.
    pub fn new(
        kind: ModelKind,
        train: &'a RatingMatrix,
        groups: Option<&'a Partition>,
        packages: Option<&'a Partition>,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self> {
        let (groups, packages) = if kind.is_unified() {
            let g = groups.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs a user grouping")))?;
            let p = packages.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs an item packaging")))?;
            g.check_covers(train.n_users(), "user grouping")?;
            p.check_covers(train.n_items(), "item packaging")?;
            (Some(g), Some(p))
        } else {
            (None, None)
        };
        if kind.is_margin() && train.levels() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{kind} needs at least two rating levels"
            )));
        }
        Ok(Problem {
            kind,
            train,
            groups,
            packages,
            lambda,
            gamma,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_users: self.train.n_users(),
            n_items: self.train.n_items(),
            n_groups: self.groups.map_or(0, Partition::n_clusters),
            n_packages: self.packages.map_or(0, Partition::n_clusters),
            levels: self.train.levels(),
        }
    }

    pub(crate) fn check_shapes(&self, p: &Params) -> Result<()> {
        let dims = self.dims();
        let d = p.user.cols();
        let mismatch = |what: &str| Err(Error::DimensionMismatch(format!("{what} do not fit the problem")));
        if p.user.rows() != dims.n_users || p.item.rows() != dims.n_items || p.item.cols() != d {
            return mismatch("user/item factors");
        }
        if self.kind.is_unified() {
            match (&p.group, &p.package) {
                (Some(g), Some(q))
                    if g.rows() == dims.n_groups && q.rows() == dims.n_packages && g.cols() == d && q.cols() == d => {}
                _ => return mismatch("group/package factors"),
            }
        }
        if self.kind.is_margin() {
            let cuts = dims.levels as usize - 1;
            match &p.thresholds {
                Some(t) if t.rows() == dims.n_users && t.cols() == cuts => {}
                _ => return mismatch("thresholds"),
            }
            if self.kind.is_unified() {
                match &p.group_thresholds {
                    Some(t) if t.rows() == dims.n_groups && t.cols() == cuts => {}
                    _ => return mismatch("group thresholds"),
                }
            }
        }
        Ok(())
    }
}

/// Training objective at `params`.
pub fn objective(problem: &Problem<'_>, params: &Params) -> Result<f64> {
    problem.check_shapes(params)?;
    Ok(evaluate(problem, params, None))
}

/// Gradient of [`objective`] with respect to every parameter.
pub fn gradients(problem: &Problem<'_>, params: &Params) -> Result<Params> {
    problem.check_shapes(params)?;
    let mut grad = params.zeros_like();
    evaluate(problem, params, Some(&mut grad));
    Ok(grad)
}

/// Objective and gradient in one pass; shapes must already be checked.
pub(crate) fn objective_and_gradient(problem: &Problem<'_>, params: &Params) -> (f64, Params) {
    let mut grad = params.zeros_like();
    let j = evaluate(problem, params, Some(&mut grad));
    (j, grad)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn evaluate(problem: &Problem<'_>, p: &Params, mut grad: Option<&mut Params>) -> f64 {
    let mut data_term = 0.0;

    for r in problem.train.entries() {
        let (i, j) = (r.user as usize, r.item as usize);
        let u = p.user.row(i);
        let v = p.item.row(j);
        let s = dot(u, v);
        // d(loss)/d(score)
        let ds = if problem.kind.is_margin() {
            let theta = p.thresholds.as_ref().expect("checked").row(i);
            let mut ds = 0.0;
            for (k, &t) in theta.iter().enumerate() {
                let sign = if k as u8 + 1 >= r.value { 1.0 } else { -1.0 };
                let z = sign * (t - s);
                data_term += smooth_hinge(z);
                if let Some(g) = grad.as_deref_mut() {
                    let h = smooth_hinge_grad(z);
                    if h != 0.0 {
                        g.thresholds.as_mut().expect("shaped").row_mut(i)[k] += h * sign;
                        ds -= h * sign;
                    }
                }
            }
            ds
        } else {
            let e = r.value as f64 - s;
            data_term += e * e;
            -2.0 * e
        };
        if let Some(g) = grad.as_deref_mut() {
            if ds != 0.0 {
                axpy(g.user.row_mut(i), ds, v);
                axpy(g.item.row_mut(j), ds, u);
            }
        }
    }

    let mut j = data_term + 0.5 * problem.lambda * (p.user.squared_norm() + p.item.squared_norm());
    if let Some(g) = grad.as_deref_mut() {
        axpy(g.user.as_mut_slice(), problem.lambda, p.user.as_slice());
        axpy(g.item.as_mut_slice(), problem.lambda, p.item.as_slice());
    }

    if problem.kind.is_unified() {
        let gamma = problem.gamma;
        let groups = problem.groups.expect("checked");
        let packages = problem.packages.expect("checked");
        let mut deviation = 0.0;

        let pull = |members: &super::Matrix,
                        centers: &super::Matrix,
                        part: &Partition,
                        grads: Option<(&mut super::Matrix, &mut super::Matrix)>| {
            let mut dev = 0.0;
            let mut grads = grads;
            for e in 0..members.rows() {
                let c = part.cluster_of(e);
                let (m, z) = (members.row(e), centers.row(c));
                dev += m.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                if let Some((gm, gc)) = grads.as_mut() {
                    let gm = gm.row_mut(e);
                    for t in 0..m.len() {
                        let diff = gamma * (m[t] - z[t]);
                        gm[t] += diff;
                        gc.row_mut(c)[t] -= diff;
                    }
                }
            }
            dev
        };

        match grad {
            Some(g) => {
                deviation += pull(
                    &p.user,
                    p.group.as_ref().expect("checked"),
                    groups,
                    Some((&mut g.user, g.group.as_mut().expect("shaped"))),
                );
                deviation += pull(
                    &p.item,
                    p.package.as_ref().expect("checked"),
                    packages,
                    Some((&mut g.item, g.package.as_mut().expect("shaped"))),
                );
                if problem.kind.is_margin() {
                    deviation += pull(
                        p.thresholds.as_ref().expect("checked"),
                        p.group_thresholds.as_ref().expect("checked"),
                        groups,
                        Some((
                            g.thresholds.as_mut().expect("shaped"),
                            g.group_thresholds.as_mut().expect("shaped"),
                        )),
                    );
                }
            }
            None => {
                deviation += pull(&p.user, p.group.as_ref().expect("checked"), groups, None);
                deviation += pull(&p.item, p.package.as_ref().expect("checked"), packages, None);
                if problem.kind.is_margin() {
                    deviation += pull(
                        p.thresholds.as_ref().expect("checked"),
                        p.group_thresholds.as_ref().expect("checked"),
                        groups,
                        None,
                    );
                }
            }
        }
        j += 0.5 * gamma * deviation;
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{Matrix, TrainConfig};
    use crate::fixtures::group_split_example;

    fn problem_parts() -> (RatingMatrix, Partition, Partition) {
        let (y, groups) = group_split_example();
        let packages = Partition::from_assignment(vec![0, 1, 0, 2, 1, 2], 3).unwrap();
        (y, groups, packages)
    }

    /// Literal transcription of the objective, one term at a time.
    fn oracle(pb: &Problem<'_>, p: &Params) -> f64 {
        let y = pb.train;
        let l = y.levels() as usize;
        let mut total = 0.0;
        for i in 0..y.n_users() {
            for j in 0..y.n_items() {
                let Some(v) = y.get(i, j) else { continue };
                let s: f64 = (0..p.user.cols()).map(|t| p.user.row(i)[t] * p.item.row(j)[t]).sum();
                if pb.kind.is_margin() {
                    for r in 1..l {
                        let t = if r >= v as usize { 1.0 } else { -1.0 };
                        let z = t * (p.thresholds.as_ref().unwrap().row(i)[r - 1] - s);
                        let h = if z >= 1.0 {
                            0.0
                        } else if z > 0.0 {
                            (1.0 - z).powi(2) / 2.0
                        } else {
                            0.5 - z
                        };
                        total += h;
                    }
                } else {
                    total += (v as f64 - s).powi(2);
                }
            }
        }
        let fro = |m: &Matrix| m.as_slice().iter().map(|x| x * x).sum::<f64>();
        total += pb.lambda / 2.0 * (fro(&p.user) + fro(&p.item));
        if pb.kind.is_unified() {
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            let g = pb.groups.unwrap();
            let q = pb.packages.unwrap();
            let mut dev = 0.0;
            for i in 0..y.n_users() {
                dev += dist(p.group.as_ref().unwrap().row(g.cluster_of(i)), p.user.row(i));
                if pb.kind.is_margin() {
                    dev += dist(
                        p.group_thresholds.as_ref().unwrap().row(g.cluster_of(i)),
                        p.thresholds.as_ref().unwrap().row(i),
                    );
                }
            }
            for j in 0..y.n_items() {
                dev += dist(p.package.as_ref().unwrap().row(q.cluster_of(j)), p.item.row(j));
            }
            total += pb.gamma / 2.0 * dev;
        }
        total
    }

    fn random_params(pb: &Problem<'_>, d: usize, seed: u64, scale: f64) -> Params {
        let cfg = TrainConfig {
            d,
            seed,
            init_scale: scale,
            ..TrainConfig::default()
        };
        let mut p = Params::init(pb.kind, pb.dims(), &cfg);
        // scramble thresholds so every hinge piece is exercised
        let mut k = seed as f64;
        for m in [p.thresholds.as_mut(), p.group_thresholds.as_mut()].into_iter().flatten() {
            for x in m.as_mut_slice() {
                k += 1.0;
                *x += 0.7 * (k * 1.3).sin();
            }
        }
        p
    }

    #[test]
    fn matches_term_by_term_oracle() {
        let (y, g, q) = problem_parts();
        for kind in ModelKind::ALL {
            let pb = Problem::new(kind, &y, Some(&g), Some(&q), 0.3, 0.7).unwrap();
            for seed in 0..5 {
                let p = random_params(&pb, 3, seed, 1.0);
                let a = objective(&pb, &p).unwrap();
                let b = oracle(&pb, &p);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{kind} seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn single_entry_examples() {
        let y = RatingMatrix::from_dense(&[[3u8]], 5).unwrap();
        let mut p = Params::init(
            ModelKind::Rmf,
            Dims {
                n_users: 1,
                n_items: 1,
                n_groups: 0,
                n_packages: 0,
                levels: 5,
            },
            &TrainConfig {
                d: 1,
                ..TrainConfig::default()
            },
        );
        p.user = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        p.item = Matrix::from_vec(1, 1, vec![2.5]).unwrap();
        // (3 - 2.5)^2 = 0.25, no penalty at lambda = 0
        let pb = Problem::new(ModelKind::Rmf, &y, None, None, 0.0, 0.0).unwrap();
        assert_eq!(objective(&pb, &p).unwrap(), 0.25);
        // lambda/2 (1 + 6.25) with lambda = 2
        let pb = Problem::new(ModelKind::Rmf, &y, None, None, 2.0, 0.0).unwrap();
        assert_eq!(objective(&pb, &p).unwrap(), 0.25 + 7.25);

        // margin loss: score 2.5, thresholds [-1.5, -0.5, 0.5, 1.5], rating 3
        // z = -(t1 - s) = 4 ; -(t2 - s) = 3 ; (t3 - s) = -2 ; (t4 - s) = -1
        p.thresholds = Some(Matrix::from_vec(1, 4, vec![-1.5, -0.5, 0.5, 1.5]).unwrap());
        let pb = Problem::new(ModelKind::Mmmf, &y, None, None, 0.0, 0.0).unwrap();
        assert_eq!(objective(&pb, &p).unwrap(), 2.5 + 1.5);
    }

    #[test]
    fn unified_requires_partitions() {
        let (y, g, _) = problem_parts();
        assert!(Problem::new(ModelKind::Urmf, &y, Some(&g), None, 1.0, 1.0).is_err());
        let short = Partition::single_cluster(3);
        assert!(Problem::new(ModelKind::Urmf, &y, Some(&short), Some(&g), 1.0, 1.0).is_err());
        assert!(Problem::new(ModelKind::Rmf, &y, None, None, 1.0, 1.0).is_ok());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (y, g, q) = problem_parts();
        let pb = Problem::new(ModelKind::Ummmf, &y, Some(&g), Some(&q), 1.0, 1.0).unwrap();
        let mut p = random_params(&pb, 2, 0, 0.5);
        p.group_thresholds = None;
        assert!(matches!(objective(&pb, &p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (y, g, q) = problem_parts();
        for kind in ModelKind::ALL {
            let pb = Problem::new(kind, &y, Some(&g), Some(&q), 0.4, 0.9).unwrap();
            for seed in 0..3 {
                let p = random_params(&pb, 3, seed, 0.8);
                let grad = gradients(&pb, &p).unwrap().flatten();
                let n = grad.len();
                for idx in 0..n {
                    let h = 1e-6;
                    let mut plus = p.clone();
                    *plus.flat_mut(idx) += h;
                    let mut minus = p.clone();
                    *minus.flat_mut(idx) -= h;
                    let fd = (oracle(&pb, &plus) - oracle(&pb, &minus)) / (2.0 * h);
                    let err = (fd - grad[idx]).abs();
                    assert!(
                        err <= 1e-5 * fd.abs().max(1.0),
                        "{kind} seed {seed} coord {idx}: analytic {} vs numeric {fd}",
                        grad[idx]
                    );
                }
            }
        }
    }
}
