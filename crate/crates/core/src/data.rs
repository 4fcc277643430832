//! Sparse rating storage, parsing and train/test/validation splitting.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rating as it appears in an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriple {
    pub user: String,
    pub item: String,
    pub score: f64,
}

/// A known rating with dense user and item indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub score: f64,
}

/// Bidirectional table between opaque external ids and dense indices.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn external(&self, dense: u32) -> Option<&str> {
        self.ids.get(dense as usize).map(String::as_str)
    }

    /// Returns the dense index of `id`, assigning the next free one on first sight.
    pub fn get_or_insert(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.ids.len() as u32;
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), idx);
        idx
    }
}

impl From<Vec<String>> for IdMap {
    fn from(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Self { ids, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.ids
    }
}

/// Compressed adjacency: for each row, a slice of `(neighbour, score)`.
#[derive(Debug, Clone)]
struct Adjacency {
    offsets: Vec<usize>,
    links: Vec<(u32, f64)>,
}

impl Adjacency {
    fn build(rows: usize, entries: &[Rating], key: impl Fn(&Rating) -> (u32, u32)) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for r in entries {
            counts[key(r).0 as usize + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut links = vec![(0u32, 0.0f64); entries.len()];
        for r in entries {
            let (row, other) = key(r);
            let slot = &mut cursor[row as usize];
            links[*slot] = (other, r.score);
            *slot += 1;
        }
        Self { offsets, links }
    }

    fn row(&self, row: usize) -> &[(u32, f64)] {
        &self.links[self.offsets[row]..self.offsets[row + 1]]
    }
}

/// Known ratings `K` with per-user (`K_u`) and per-item (`K_i`) views.
///
/// Immutable once built. The id tables are shared (`Arc`) between a parent
/// dataset and every split derived from it, so dense indices agree across
/// train, test and validation parts.
#[derive(Debug, Clone)]
pub struct RatingDataset {
    user_ids: Arc<IdMap>,
    item_ids: Arc<IdMap>,
    entries: Vec<Rating>,
    by_user: Adjacency,
    by_item: Adjacency,
}

impl RatingDataset {
    /// Builds a dataset over the given id tables. Fails on out-of-range
    /// indices, non-finite scores or duplicate `(user, item)` pairs.
    pub fn from_entries(
        user_ids: Arc<IdMap>,
        item_ids: Arc<IdMap>,
        entries: Vec<Rating>,
    ) -> Result<Self> {
        let (nu, ni) = (user_ids.len(), item_ids.len());
        let mut seen = HashSet::with_capacity(entries.len());
        for r in &entries {
            if r.user as usize >= nu || r.item as usize >= ni {
                return Err(Error::IndexOutOfRange(format!(
                    "rating ({}, {}) outside {}x{}",
                    r.user, r.item, nu, ni
                )));
            }
            if !r.score.is_finite() {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("non-finite score {}", r.score),
                });
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::DuplicatePair {
                    user: user_ids.external(r.user).unwrap_or_default().to_owned(),
                    item: item_ids.external(r.item).unwrap_or_default().to_owned(),
                    line: 0,
                });
            }
        }
        let by_user = Adjacency::build(nu, &entries, |r| (r.user, r.item));
        let by_item = Adjacency::build(ni, &entries, |r| (r.item, r.user));
        Ok(Self {
            user_ids,
            item_ids,
            entries,
            by_user,
            by_item,
        })
    }

    /// Builds a dataset from external-id triples, assigning dense indices in
    /// first-appearance order.
    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = RatingTriple>,
    {
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (n, t) in triples.into_iter().enumerate() {
            if !t.score.is_finite() {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: format!("non-finite score {}", t.score),
                });
            }
            let user = users.get_or_insert(&t.user);
            let item = items.get_or_insert(&t.item);
            if !seen.insert((user, item)) {
                return Err(Error::DuplicatePair {
                    user: t.user,
                    item: t.item,
                    line: n + 1,
                });
            }
            entries.push(Rating {
                user,
                item,
                score: t.score,
            });
        }
        if entries.is_empty() {
            return Err(Error::NoRatings);
        }
        Self::from_entries(Arc::new(users), Arc::new(items), entries)
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// `K_u`: the `(item, score)` pairs rated by user `u`.
    pub fn by_user(&self, u: usize) -> &[(u32, f64)] {
        self.by_user.row(u)
    }

    /// `K_i`: the `(user, score)` pairs that rated item `i`.
    pub fn by_item(&self, i: usize) -> &[(u32, f64)] {
        self.by_item.row(i)
    }

    pub fn user_ids(&self) -> &Arc<IdMap> {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &Arc<IdMap> {
        &self.item_ids
    }

    /// Fraction of the `|U| x |I|` matrix that is known.
    pub fn density(&self) -> f64 {
        density_of(self.len(), self.num_users(), self.num_items())
    }

    /// Sub-dataset over the given entry indices, sharing this dataset's id tables.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let entries = indices.iter().map(|&k| self.entries[k]).collect::<Vec<_>>();
        let by_user = Adjacency::build(self.num_users(), &entries, |r| (r.user, r.item));
        let by_item = Adjacency::build(self.num_items(), &entries, |r| (r.item, r.user));
        Self {
            user_ids: Arc::clone(&self.user_ids),
            item_ids: Arc::clone(&self.item_ids),
            entries,
            by_user,
            by_item,
        }
    }

    /// Maps external-id triples onto this dataset's index tables. Triples naming
    /// unknown users or items are rejected.
    pub fn reindex<I>(&self, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = RatingTriple>,
    {
        let mut entries = Vec::new();
        for (n, t) in triples.into_iter().enumerate() {
            let user = self.user_ids.get(&t.user).ok_or_else(|| {
                Error::IndexOutOfRange(format!("unknown user {:?} at line {}", t.user, n + 1))
            })?;
            let item = self.item_ids.get(&t.item).ok_or_else(|| {
                Error::IndexOutOfRange(format!("unknown item {:?} at line {}", t.item, n + 1))
            })?;
            entries.push(Rating {
                user,
                item,
                score: t.score,
            });
        }
        Self::from_entries(Arc::clone(&self.user_ids), Arc::clone(&self.item_ids), entries)
    }

    /// Writes the ratings back out with their external ids.
    pub fn write_to<W: Write>(&self, mut out: W, delimiter: &str) -> Result<()> {
        for r in &self.entries {
            let user = self.user_ids.external(r.user).unwrap_or_default();
            let item = self.item_ids.external(r.item).unwrap_or_default();
            writeln!(out, "{user}{delimiter}{item}{delimiter}{}", r.score)?;
        }
        Ok(())
    }
}

/// `entries / (users * items)`.
pub fn density_of(entries: usize, users: usize, items: usize) -> f64 {
    assert!(users > 0 && items > 0, "density of an empty matrix");
    entries as f64 / (users as f64 * items as f64)
}

/// Reads `user<delim>item<delim>score[<delim>...]` lines. Blank lines and
/// lines starting with `#` are skipped; extra fields are ignored.
pub fn read_triples<R: BufRead>(source: R, delimiter: &str) -> Result<Vec<RatingTriple>> {
    if delimiter.is_empty() {
        return Err(Error::Config("empty delimiter".into()));
    }
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = n + 1;
        let mut fields = line.split(delimiter);
        let (Some(user), Some(item), Some(score)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected user{delimiter}item{delimiter}score"),
            });
        };
        let score: f64 = score.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("invalid score {score:?}"),
        })?;
        if !score.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("non-finite score {score}"),
            });
        }
        out.push(RatingTriple {
            user: user.trim().to_owned(),
            item: item.trim().to_owned(),
            score,
        });
    }
    Ok(out)
}

/// Parses a rating stream into a dataset with dense first-appearance indices.
pub fn parse_ratings<R: BufRead>(source: R, delimiter: &str) -> Result<RatingDataset> {
    RatingDataset::from_triples(read_triples(source, delimiter)?)
}

/// Train / test / validation partition of one parent dataset.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub validation: RatingDataset,
    pub seed: u64,
    pub ratios: [f64; 3],
    parts: [Vec<usize>; 3],
}

/// The parts of a split the tuner may see. Validation is deliberately absent.
#[derive(Debug, Clone, Copy)]
pub struct TuningView<'a> {
    pub train: &'a RatingDataset,
    pub test: &'a RatingDataset,
}

impl DataSplit {
    pub fn tuning(&self) -> TuningView<'_> {
        TuningView {
            train: &self.train,
            test: &self.test,
        }
    }

    /// Parent entry indices of the train, test and validation parts.
    pub fn part_indices(&self) -> &[Vec<usize>; 3] {
        &self.parts
    }

    /// Checks that the three parts are pairwise disjoint in the parent.
    pub fn assert_disjoint(&self) -> Result<()> {
        let size = self.parts.iter().flatten().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; size];
        for &k in self.parts.iter().flatten() {
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::ShapeMismatch(format!(
                    "entry {k} appears in more than one split part"
                )));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            train: self.train.len(),
            test: self.test.len(),
            validation: self.validation.len(),
        }
    }
}

/// JSON summary of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

fn cut(ratio: f64, n: usize) -> usize {
    // Round-off slack so that e.g. 0.29 * 100 lands on 29.
    ((ratio * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Seeded shuffle of the entries, cut at `floor(r1 n)` and `floor((r1 + r2) n)`.
pub fn split_dataset(ds: &RatingDataset, ratios: [f64; 3], seed: u64) -> Result<DataSplit> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0)
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidRatios(ratios));
    }
    let n = ds.len();
    if n < 3 {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let a = cut(ratios[0], n);
    let b = cut(ratios[0] + ratios[1], n).max(a);
    let mut parts = [order[..a].to_vec(), order[a..b].to_vec(), order[b..].to_vec()];
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(DataSplit {
        train: ds.subset(&parts[0]),
        test: ds.subset(&parts[1]),
        validation: ds.subset(&parts[2]),
        seed,
        ratios,
        parts,
    })
}
