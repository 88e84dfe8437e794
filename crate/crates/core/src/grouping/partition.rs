use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard, exhaustive assignment of `n` entities to `k` non-empty clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct Partition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    n_clusters: usize,
    assignment: Vec<usize>,
}

impl TryFrom<PartitionRepr> for Partition {
    type Error = Error;

    fn try_from(r: PartitionRepr) -> Result<Self> {
        Partition::from_assignment(r.assignment, r.n_clusters)
    }
}

impl From<Partition> for PartitionRepr {
    fn from(p: Partition) -> Self {
        PartitionRepr {
            n_clusters: p.n_clusters(),
            assignment: p.assignment,
        }
    }
}

impl Partition {
    pub fn from_assignment(assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); n_clusters];
        for (entity, &c) in assignment.iter().enumerate() {
            if c >= n_clusters {
                return Err(Error::IndexOutOfRange {
                    what: "cluster",
                    index: c,
                    size: n_clusters,
                });
            }
            members[c].push(entity);
        }
        if let Some(c) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
        }
        Ok(Partition {
            assignment,
            members,
        })
    }

    /// Every entity in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            members: (0..n).map(|e| vec![e]).collect(),
        }
    }

    /// All entities in one cluster. `n` must be positive.
    pub fn single_cluster(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            members: vec![(0..n).collect()],
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    /// Number of entities covered.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, entity: usize) -> usize {
        self.assignment[entity]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Members of `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.members.iter().map(Vec::as_slice)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Relabels clusters in order of their smallest member, so that two
    /// partitions equal up to relabeling compare equal.
    pub fn canonical(&self) -> Partition {
        let mut relabel = vec![usize::MAX; self.n_clusters()];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&c| {
                if relabel[c] == usize::MAX {
                    relabel[c] = next;
                    next += 1;
                }
                relabel[c]
            })
            .collect();
        Partition::from_assignment(assignment, self.n_clusters())
            .expect("relabeling preserves validity")
    }

    pub fn check_covers(&self, n: usize, what: &str) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what} partition covers {} entities, expected {n}",
                self.len()
            )))
        }
    }

    /// Writes `entity_id,cluster_id` rows with a header, using the given
    /// external ids for entities.
    pub fn write_csv<W: Write>(&self, out: W, entity_ids: &[u64]) -> Result<()> {
        if entity_ids.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} entities",
                entity_ids.len(),
                self.len()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity_id", "cluster_id"])?;
        for (e, &c) in self.assignment.iter().enumerate() {
            w.write_record([entity_ids[e].to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<partition csv>", e))?;
        Ok(())
    }

    /// Reads a partition CSV, mapping external ids back to dense indices.
    pub fn read_csv<R: Read>(input: R, entity_ids: &[u64]) -> Result<Partition> {
        let index: std::collections::HashMap<u64, usize> =
            entity_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut assignment = vec![usize::MAX; entity_ids.len()];
        let mut n_clusters = 0;
        let mut r = csv::Reader::from_reader(input);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let parse = |i: usize| -> Result<u64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: "expected entity_id,cluster_id".into(),
                    })
            };
            let id = parse(0)?;
            let cluster = parse(1)? as usize;
            let e = *index.get(&id).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown entity id {id}"),
            })?;
            if assignment[e] != usize::MAX {
                return Err(Error::Parse {
                    line,
                    message: format!("entity {id} listed twice"),
                });
            }
            assignment[e] = cluster;
            n_clusters = n_clusters.max(cluster + 1);
        }
        if let Some(e) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidArgument(format!(
                "entity {} missing from partition",
                entity_ids[e]
            )));
        }
        Partition::from_assignment(assignment, n_clusters)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, entity_ids: &[u64]) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f, entity_ids)
    }

    pub fn load_csv(path: impl AsRef<Path>, entity_ids: &[u64]) -> Result<Partition> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Partition::read_csv(f, entity_ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_and_assignment_agree() {
        let p = Partition::from_assignment(vec![1, 0, 1, 2], 3).unwrap();
        assert_eq!(p.members(1), &[0, 2]);
        for c in 0..p.n_clusters() {
            for &e in p.members(c) {
                assert_eq!(p.cluster_of(e), c);
            }
        }
        assert_eq!(p.sizes().iter().sum::<usize>(), p.len());
    }

    #[test]
    fn rejects_empty_clusters() {
        assert!(Partition::from_assignment(vec![0, 2], 3).is_err());
        assert!(Partition::from_assignment(vec![0, 3], 3).is_err());
    }

    #[test]
    fn canonical_relabels_by_first_member() {
        let p = Partition::from_assignment(vec![2, 0, 2, 1], 3).unwrap();
        assert_eq!(p.canonical().assignment(), &[0, 1, 0, 2]);
    }

    #[test]
    fn csv_round_trip() {
        let p = Partition::from_assignment(vec![1, 0, 1, 2], 3).unwrap();
        let ids = [10, 20, 30, 40];
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &ids).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("entity_id,cluster_id\n10,1\n"));
        assert_eq!(Partition::read_csv(buf.as_slice(), &ids).unwrap(), p);
    }
}
