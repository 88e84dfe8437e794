//! Sparse ordinal rating matrix and MovieLens ingestion.
//!
//! Entries are kept as a coordinate list sorted by `(user, item)`, with row
//! offsets into that list and a column permutation, so that full sweeps over
//! the observed set and per-user / per-item slices are all linear-time.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest rating accepted by the MovieLens loaders.
pub const MOVIELENS_MAX_RATING: u8 = 5;

/// One observed rating, in dense indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: u8,
}

/// On-disk layout of a MovieLens ratings file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MovieLensFormat {
    /// `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`
    #[serde(rename = "ml100k")]
    Ml100k,
    /// `ratings.dat`: `user::item::rating::timestamp`
    #[serde(rename = "ml1m")]
    Ml1m,
}

impl MovieLensFormat {
    fn separator(self) -> &'static str {
        match self {
            MovieLensFormat::Ml100k => "\t",
            MovieLensFormat::Ml1m => "::",
        }
    }
}

impl FromStr for MovieLensFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml100k" | "ml-100k" | "100k" => Ok(MovieLensFormat::Ml100k),
            "ml1m" | "ml-1m" | "1m" => Ok(MovieLensFormat::Ml1m),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format {other:?} (expected ml100k or ml1m)"
            ))),
        }
    }
}

impl fmt::Display for MovieLensFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MovieLensFormat::Ml100k => "ml100k",
            MovieLensFormat::Ml1m => "ml1m",
        })
    }
}

/// A rating as read from a file, before index remapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawRating {
    pub user_id: u64,
    pub item_id: u64,
    pub value: u8,
    pub line: usize,
}

/// Sparse `n_users x n_items` matrix of ordinal ratings in `1..=levels`.
///
/// Immutable after construction. Unobserved cells are simply absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingMatrix {
    n_users: usize,
    n_items: usize,
    levels: u8,
    /// Sorted by `(user, item)`.
    entries: Vec<Rating>,
    /// `entries[row_ptr[u]..row_ptr[u + 1]]` are the ratings of user `u`.
    row_ptr: Vec<usize>,
    /// Entry positions sorted by `(item, user)`.
    col_order: Vec<usize>,
    col_ptr: Vec<usize>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl RatingMatrix {
    /// Builds a matrix from dense-index triples. External ids default to
    /// `index + 1`.
    pub fn new(
        n_users: usize,
        n_items: usize,
        levels: u8,
        ratings: impl IntoIterator<Item = (usize, usize, u8)>,
    ) -> Result<Self> {
        let user_ids = (1..=n_users as u64).collect();
        let item_ids = (1..=n_items as u64).collect();
        Self::with_ids(user_ids, item_ids, levels, ratings)
    }

    /// Like [`RatingMatrix::new`] but with explicit external ids.
    pub fn with_ids(
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
        levels: u8,
        ratings: impl IntoIterator<Item = (usize, usize, u8)>,
    ) -> Result<Self> {
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        if n_users > u32::MAX as usize || n_items > u32::MAX as usize {
            return Err(Error::InvalidArgument("matrix too large".into()));
        }
        let mut entries = Vec::new();
        for (user, item, value) in ratings {
            if user >= n_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: user,
                    size: n_users,
                });
            }
            if item >= n_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: item,
                    size: n_items,
                });
            }
            if value == 0 || value > levels {
                return Err(Error::InvalidRating {
                    user: user_ids[user],
                    item: item_ids[item],
                    rating: value as i64,
                    max: levels,
                });
            }
            entries.push(Rating {
                user: user as u32,
                item: item as u32,
                value,
            });
        }
        entries.sort_unstable_by_key(|r| (r.user, r.item));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].user == w[1].user && w[0].item == w[1].item)
        {
            return Err(Error::DuplicateRating {
                user: user_ids[w[0].user as usize],
                item: item_ids[w[0].item as usize],
                first: w[0].value,
                second: w[1].value,
            });
        }
        Ok(Self::from_sorted(user_ids, item_ids, levels, entries))
    }

    /// Builds from a dense row-major table where `0` marks an unobserved cell.
    pub fn from_dense<R: AsRef<[u8]>>(rows: &[R], levels: u8) -> Result<Self> {
        let n_items = rows.first().map_or(0, |r| r.as_ref().len());
        let mut triples = Vec::new();
        for (u, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_items {
                return Err(Error::DimensionMismatch(format!(
                    "row {u} has {} columns, expected {n_items}",
                    row.len()
                )));
            }
            triples.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(i, &v)| (u, i, v)),
            );
        }
        Self::new(rows.len(), n_items, levels, triples)
    }

    fn from_sorted(
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
        levels: u8,
        entries: Vec<Rating>,
    ) -> Self {
        let n_users = user_ids.len();
        let n_items = item_ids.len();

        let mut row_ptr = vec![0usize; n_users + 1];
        let mut col_ptr = vec![0usize; n_items + 1];
        for r in &entries {
            row_ptr[r.user as usize + 1] += 1;
            col_ptr[r.item as usize + 1] += 1;
        }
        for u in 0..n_users {
            row_ptr[u + 1] += row_ptr[u];
        }
        for i in 0..n_items {
            col_ptr[i + 1] += col_ptr[i];
        }
        // entries are sorted by user, so a counting pass keeps users ascending
        // within each column.
        let mut next = col_ptr.clone();
        let mut col_order = vec![0usize; entries.len()];
        for (pos, r) in entries.iter().enumerate() {
            let slot = &mut next[r.item as usize];
            col_order[*slot] = pos;
            *slot += 1;
        }

        RatingMatrix {
            n_users,
            n_items,
            levels,
            entries,
            row_ptr,
            col_order,
            col_ptr,
            user_ids,
            item_ids,
        }
    }

    /// Remaps raw file ratings to dense indices. Ids are assigned in
    /// ascending external-id order; `levels` is the largest observed rating.
    pub fn from_raw(raw: &[RawRating]) -> Result<Self> {
        let mut user_ids: Vec<u64> = raw.iter().map(|r| r.user_id).collect();
        let mut item_ids: Vec<u64> = raw.iter().map(|r| r.item_id).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        item_ids.sort_unstable();
        item_ids.dedup();
        let levels = raw.iter().map(|r| r.value).max().unwrap_or(0);
        Self::from_raw_in(raw, user_ids, item_ids, levels)
    }

    /// Remaps raw ratings onto an existing id universe, e.g. a training
    /// snapshot that must line up with the full dataset's indices.
    pub fn from_raw_in(
        raw: &[RawRating],
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
        levels: u8,
    ) -> Result<Self> {
        let user_index: HashMap<u64, usize> =
            user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let item_index: HashMap<u64, usize> =
            item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut seen: HashMap<(u64, u64), u8> = HashMap::with_capacity(raw.len());
        let mut triples = Vec::with_capacity(raw.len());
        for r in raw {
            if let Some(&first) = seen.get(&(r.user_id, r.item_id)) {
                return Err(Error::DuplicateRating {
                    user: r.user_id,
                    item: r.item_id,
                    first,
                    second: r.value,
                });
            }
            seen.insert((r.user_id, r.item_id), r.value);
            let user = *user_index.get(&r.user_id).ok_or_else(|| Error::Parse {
                line: r.line,
                message: format!("unknown user id {}", r.user_id),
            })?;
            let item = *item_index.get(&r.item_id).ok_or_else(|| Error::Parse {
                line: r.line,
                message: format!("unknown item id {}", r.item_id),
            })?;
            triples.push((user, item, r.value));
        }
        Self::with_ids(user_ids, item_ids, levels, triples)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Maximum ordinal level `L`.
    pub fn levels(&self) -> u8 {
        self.levels
    }

    /// Number of observed entries, `|Ω|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All observed entries sorted by `(user, item)`.
    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Ratings of `user`, sorted by item. Panics if `user` is out of range.
    pub fn user_ratings(&self, user: usize) -> &[Rating] {
        &self.entries[self.row_ptr[user]..self.row_ptr[user + 1]]
    }

    /// Ratings of `item`, sorted by user. Panics if `item` is out of range.
    pub fn item_ratings(&self, item: usize) -> impl ExactSizeIterator<Item = &Rating> + '_ {
        self.col_order[self.col_ptr[item]..self.col_ptr[item + 1]]
            .iter()
            .map(move |&pos| &self.entries[pos])
    }

    pub fn user_count(&self, user: usize) -> usize {
        self.row_ptr[user + 1] - self.row_ptr[user]
    }

    pub fn item_count(&self, item: usize) -> usize {
        self.col_ptr[item + 1] - self.col_ptr[item]
    }

    /// Items rated by `user` (the set `O_i`), ascending.
    pub fn observed_items(&self, user: usize) -> Result<Vec<usize>> {
        self.check_user(user)?;
        Ok(self
            .user_ratings(user)
            .iter()
            .map(|r| r.item as usize)
            .collect())
    }

    /// Users who rated `item`, ascending.
    pub fn observed_users(&self, item: usize) -> Result<Vec<usize>> {
        self.check_item(item)?;
        Ok(self.item_ratings(item).map(|r| r.user as usize).collect())
    }

    /// Position of `(user, item)` in [`RatingMatrix::entries`], if observed.
    pub fn position(&self, user: usize, item: usize) -> Option<usize> {
        if user >= self.n_users {
            return None;
        }
        self.user_ratings(user)
            .binary_search_by_key(&(item as u32), |r| r.item)
            .ok()
            .map(|off| self.row_ptr[user] + off)
    }

    pub fn get(&self, user: usize, item: usize) -> Option<u8> {
        if user >= self.n_users {
            return None;
        }
        let row = self.user_ratings(user);
        row.binary_search_by_key(&(item as u32), |r| r.item)
            .ok()
            .map(|pos| row[pos].value)
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn check_user(&self, user: usize) -> Result<()> {
        if user < self.n_users {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                size: self.n_users,
            })
        }
    }

    pub fn check_item(&self, item: usize) -> Result<()> {
        if item < self.n_items {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                size: self.n_items,
            })
        }
    }

    /// Swaps the roles of users and items.
    pub fn transpose(&self) -> RatingMatrix {
        let entries = self
            .col_order
            .iter()
            .map(|&pos| {
                let r = self.entries[pos];
                Rating {
                    user: r.item,
                    item: r.user,
                    value: r.value,
                }
            })
            .collect();
        Self::from_sorted(
            self.item_ids.clone(),
            self.user_ids.clone(),
            self.levels,
            entries,
        )
    }

    /// Same shape and ids, keeping only entries for which `keep` holds.
    pub fn filter(&self, mut keep: impl FnMut(&Rating) -> bool) -> RatingMatrix {
        let entries = self.entries.iter().copied().filter(|r| keep(r)).collect();
        Self::from_sorted(
            self.user_ids.clone(),
            self.item_ids.clone(),
            self.levels,
            entries,
        )
    }

    /// Writes the entries in the tab-separated `u.data` layout, using
    /// external ids and a zero timestamp.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t0",
                self.user_ids[r.user as usize], self.item_ids[r.item as usize], r.value
            )?;
        }
        out.flush()
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_snapshot(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Parses MovieLens rating lines. Blank lines are skipped.
pub fn parse_ratings<R: BufRead>(reader: R, format: MovieLensFormat) -> Result<Vec<RawRating>> {
    let sep = format.separator();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields separated by {sep:?}, found {}", fields.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<i64> {
            fields[i].trim().parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad {name} {:?}", fields[i]),
            })
        };
        let user_id = field(0, "user id")?;
        let item_id = field(1, "item id")?;
        let rating = field(2, "rating")?;
        field(3, "timestamp")?;
        if user_id < 0 || item_id < 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "negative id".into(),
            });
        }
        if !(1..=MOVIELENS_MAX_RATING as i64).contains(&rating) {
            return Err(Error::InvalidRating {
                user: user_id as u64,
                item: item_id as u64,
                rating,
                max: MOVIELENS_MAX_RATING,
            });
        }
        out.push(RawRating {
            user_id: user_id as u64,
            item_id: item_id as u64,
            value: rating as u8,
            line: line_no,
        });
    }
    Ok(out)
}

pub fn read_ratings(path: impl AsRef<Path>, format: MovieLensFormat) -> Result<Vec<RawRating>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(BufReader::new(file), format)
}

/// Loads a MovieLens ratings file into a dense-indexed matrix.
pub fn load_movielens(path: impl AsRef<Path>, format: MovieLensFormat) -> Result<RatingMatrix> {
    RatingMatrix::from_raw(&read_ratings(path, format)?)
}

/// Loads a ratings file (typically a training snapshot) onto the index
/// universe of `like`.
pub fn load_movielens_like(
    path: impl AsRef<Path>,
    format: MovieLensFormat,
    like: &RatingMatrix,
) -> Result<RatingMatrix> {
    RatingMatrix::from_raw_in(
        &read_ratings(path, format)?,
        like.user_ids().to_vec(),
        like.item_ids().to_vec(),
        like.levels(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, f: MovieLensFormat) -> Result<RatingMatrix> {
        RatingMatrix::from_raw(&parse_ratings(s.as_bytes(), f)?)
    }

    #[test]
    fn parses_both_formats() {
        let a = parse("1\t10\t5\t881250949\n2\t10\t3\t1\n", MovieLensFormat::Ml100k).unwrap();
        let b = parse("1::10::5::978300760\n2::10::3::1\n", MovieLensFormat::Ml1m).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!((a.n_users(), a.n_items(), a.len(), a.levels()), (2, 1, 2, 5));
    }

    #[test]
    fn remaps_sparse_ids_densely() {
        let m = parse("7\t100\t4\t0\n3\t5\t2\t0\n7\t5\t1\t0\n", MovieLensFormat::Ml100k).unwrap();
        assert_eq!(m.user_ids(), &[3, 7]);
        assert_eq!(m.item_ids(), &[5, 100]);
        assert_eq!(m.get(1, 1), Some(4));
        assert_eq!(m.get(0, 0), Some(2));
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.levels(), 4);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse("1\t2\t3\t4\n1\t2\tx\t4\n", MovieLensFormat::Ml100k).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("1\t2\t3\n", MovieLensFormat::Ml100k).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_reports_both_values() {
        let err = parse("1\t2\t3\t4\n1\t2\t5\t4\n", MovieLensFormat::Ml100k).unwrap_err();
        match err {
            Error::DuplicateRating {
                user,
                item,
                first,
                second,
            } => assert_eq!((user, item, first, second), (1, 2, 3, 5)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rating_out_of_range() {
        for bad in ["0", "6", "-1"] {
            let line = format!("1\t2\t{bad}\t4\n");
            let err = parse(&line, MovieLensFormat::Ml100k).unwrap_err();
            assert!(matches!(err, Error::InvalidRating { .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn empty_file_gives_empty_matrix() {
        let m = parse("", MovieLensFormat::Ml100k).unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.len()), (0, 0, 0));
    }

    #[test]
    fn observed_items_edge_cases() {
        let m = RatingMatrix::from_dense(&[[3u8]], 5).unwrap();
        assert_eq!(m.observed_items(0).unwrap(), vec![0]);

        let m = RatingMatrix::from_dense(&[[0u8, 1], [0, 0]], 5).unwrap();
        assert!(m.observed_items(1).unwrap().is_empty());
        assert!(matches!(
            m.observed_items(2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn column_slices_and_transpose() {
        let m = RatingMatrix::from_dense(&[[1u8, 0, 2], [0, 3, 4], [5, 0, 0]], 5).unwrap();
        assert_eq!(m.observed_users(0).unwrap(), vec![0, 2]);
        assert_eq!(m.observed_users(2).unwrap(), vec![0, 1]);
        let t = m.transpose();
        assert_eq!((t.n_users(), t.n_items()), (3, 3));
        for r in m.entries() {
            assert_eq!(t.get(r.item as usize, r.user as usize), Some(r.value));
        }
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(
            RatingMatrix::new(2, 2, 5, [(0, 0, 1), (0, 0, 2)]),
            Err(Error::DuplicateRating { .. })
        ));
        assert!(matches!(
            RatingMatrix::new(2, 2, 5, [(2, 0, 1)]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            RatingMatrix::new(2, 2, 5, [(0, 0, 0)]),
            Err(Error::InvalidRating { .. })
        ));
    }
}
