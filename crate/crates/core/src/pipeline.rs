//! Reading interaction files, building the user holdout split, and folding in
//! holdout users against a trained item matrix.
//!
//! Input files are delimited text (comma or tab, picked from the header line)
//! with a header naming at least `user_id` and `item_id`. Optional `label`
//! and `weight` columns default to 1; `timestamp` and any other columns are
//! ignored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Interaction, InteractionDataset};
use crate::error::{Error, Result};
use crate::linalg::{accumulate_outer_lower, axpy, cholesky_in_place, cholesky_solve_in_place, gramian, Gramian, Matrix};
use crate::model::{row_regularizer, SolverConfig};

/// Bijection between external ids and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    index: HashMap<String, usize>,
    ids: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.to_owned(), i);
        self.ids.push(id.to_owned());
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Writes `original_id<TAB>dense_index` lines with a header.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "original_id\tdense_index")?;
        for (i, id) in self.ids.iter().enumerate() {
            writeln!(out, "{id}\t{i}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| io_error(path, source))?;
        self.write_tsv(std::io::BufWriter::new(file))
            .map_err(|source| io_error(path, source))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Dense-indexed interactions plus the id maps used to build them.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInteractions {
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
    /// Rows dropped because their item was not in a frozen item map.
    pub skipped: usize,
}

impl LoadedInteractions {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn to_dataset(&self) -> Result<InteractionDataset> {
        InteractionDataset::new(self.num_users(), self.num_items(), &self.interactions)
    }
}

/// How item ids are resolved while reading.
#[derive(Debug)]
pub enum ItemIds<'a> {
    /// New ids get fresh indices.
    Grow(IdMap),
    /// Only known ids are accepted; rows with unknown items are skipped.
    Frozen(&'a IdMap),
}

pub fn load_interactions(path: &Path) -> Result<LoadedInteractions> {
    load_with_items(path, ItemIds::Grow(IdMap::new()))
}

pub fn load_with_items(path: &Path, items: ItemIds<'_>) -> Result<LoadedInteractions> {
    let file = File::open(path).map_err(|source| io_error(path, source))?;
    read_interactions(BufReader::new(file), &path.display().to_string(), items)
}

pub fn parse_interactions(text: &str) -> Result<LoadedInteractions> {
    read_interactions(text.as_bytes(), "<input>", ItemIds::Grow(IdMap::new()))
}

fn parse_error(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_owned(),
        line,
        message: message.into(),
    }
}

pub fn read_interactions<R: Read>(reader: R, source: &str, mut items: ItemIds<'_>) -> Result<LoadedInteractions> {
    let mut reader = BufReader::new(reader);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| parse_error(source, 1, e.to_string()))?;
    if header.trim().is_empty() {
        return Err(Error::structure(format!("{source}: empty file")));
    }
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };
    let columns: Vec<String> = header
        .trim_end_matches(['\r', '\n'])
        .split(delimiter as char)
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let find = |name: &str| columns.iter().position(|c| c == name);
    let user_col = find("user_id").ok_or_else(|| parse_error(source, 1, "header has no user_id column"))?;
    let item_col = find("item_id").ok_or_else(|| parse_error(source, 1, "header has no item_id column"))?;
    let label_col = find("label");
    let weight_col = find("weight");

    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut users = IdMap::new();
    let mut interactions = Vec::new();
    let mut skipped = 0;
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() + 1);
            parse_error(source, line, e.to_string())
        })?;
        // header is line 1 and was consumed before the csv reader started
        let line = record.position().map_or(0, |p| p.line() + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |col: usize, name: &str| {
            record
                .get(col)
                .filter(|f| !f.is_empty())
                .ok_or_else(|| parse_error(source, line, format!("missing {name}")))
        };
        let number = |col: Option<usize>, name: &str| -> Result<f64> {
            match col.and_then(|c| record.get(c)).filter(|f| !f.is_empty()) {
                None => Ok(1.0),
                Some(text) => text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(source, line, format!("bad {name} '{text}'"))),
            }
        };
        let user_id = field(user_col, "user_id")?;
        let item_id = field(item_col, "item_id")?;
        let label = number(label_col, "label")?;
        let weight = number(weight_col, "weight")?;
        if !(weight > 0.0) {
            return Err(parse_error(source, line, format!("weight must be positive (got {weight})")));
        }
        let item = match &mut items {
            ItemIds::Grow(map) => map.get_or_insert(item_id),
            ItemIds::Frozen(map) => match map.get(item_id) {
                Some(i) => i,
                None => {
                    skipped += 1;
                    continue;
                }
            },
        };
        let user = users.get_or_insert(user_id);
        interactions.push(Interaction {
            user,
            item,
            label,
            weight,
        });
    }
    if interactions.is_empty() {
        return Err(Error::structure(format!("{source}: no interactions")));
    }
    let items = match items {
        ItemIds::Grow(map) => map,
        ItemIds::Frozen(map) => map.clone(),
    };
    Ok(LoadedInteractions {
        interactions,
        users,
        items,
        skipped,
    })
}

/// An observation of a holdout user, indexed by training item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldEntry {
    pub item: usize,
    pub label: f64,
    pub weight: f64,
}

impl From<&Interaction> for FoldEntry {
    fn from(x: &Interaction) -> Self {
        Self {
            item: x.item,
            label: x.label,
            weight: x.weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutUser {
    /// Index of the user in the unsplit input (or the holdout id map).
    pub source_user: usize,
    pub input: Vec<FoldEntry>,
    pub target: Vec<FoldEntry>,
}

impl HoldoutUser {
    pub fn is_evaluated(&self) -> bool {
        !self.target.is_empty()
    }

    pub fn target_items(&self) -> Vec<usize> {
        self.target.iter().map(|e| e.item).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub train: InteractionDataset,
    /// Source index of each training user.
    pub train_users: Vec<usize>,
    pub holdout: Vec<HoldoutUser>,
}

impl HoldoutSplit {
    pub fn evaluated_users(&self) -> impl Iterator<Item = &HoldoutUser> {
        self.holdout.iter().filter(|u| u.is_evaluated())
    }

    /// Every interaction back in source user indices: training ones first,
    /// then each holdout user's input and target folds.
    pub fn recombine(&self) -> Vec<Interaction> {
        let mut out: Vec<Interaction> = self
            .train
            .interactions()
            .into_iter()
            .map(|x| Interaction {
                user: self.train_users[x.user],
                ..x
            })
            .collect();
        for h in &self.holdout {
            for e in h.input.iter().chain(&h.target) {
                out.push(Interaction {
                    user: h.source_user,
                    item: e.item,
                    label: e.label,
                    weight: e.weight,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    /// Fraction of users moved to the holdout set.
    pub holdout_users: f64,
    /// Fraction of each holdout user's interactions used as targets.
    pub target_fraction: f64,
    /// Holdout users with fewer interactions are not evaluated.
    pub min_interactions: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            holdout_users: 0.1,
            target_fraction: 0.2,
            min_interactions: 5,
            seed: 0,
        }
    }
}

/// Number of targets for a user with `n` interactions: `floor(n * fraction)`,
/// at least one.
pub fn target_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).clamp(1, n.max(1))
}

/// Holds out a random subset of users and splits each of their histories into
/// a random input fold and target fold.
pub fn split_holdout(
    interactions: &[Interaction],
    num_users: usize,
    num_items: usize,
    config: &SplitConfig,
) -> Result<HoldoutSplit> {
    for (name, v) in [
        ("holdout user fraction", config.holdout_users),
        ("target fraction", config.target_fraction),
    ] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::structure(format!("{name} must be in (0, 1), got {v}")));
        }
    }
    let mut per_user: Vec<Vec<Interaction>> = vec![Vec::new(); num_users];
    for x in interactions {
        if x.user >= num_users || x.item >= num_items {
            return Err(Error::structure(format!(
                "interaction ({}, {}) out of range",
                x.user, x.item
            )));
        }
        per_user[x.user].push(*x);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..num_users).collect();
    order.shuffle(&mut rng);
    let num_holdout = ((num_users as f64 * config.holdout_users).round() as usize).min(num_users);
    let mut is_holdout = vec![false; num_users];
    for &u in &order[..num_holdout] {
        is_holdout[u] = true;
    }

    let mut train_users = Vec::new();
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (u, mut xs) in per_user.into_iter().enumerate() {
        if !is_holdout[u] {
            let dense = train_users.len();
            train_users.push(u);
            train.extend(xs.into_iter().map(|x| Interaction { user: dense, ..x }));
            continue;
        }
        let n = xs.len();
        let targets = if n >= config.min_interactions {
            target_count(n, config.target_fraction)
        } else {
            0
        };
        xs.shuffle(&mut rng);
        let (target, input) = xs.split_at(targets);
        holdout.push(HoldoutUser {
            source_user: u,
            input: input.iter().map(FoldEntry::from).collect(),
            target: target.iter().map(FoldEntry::from).collect(),
        });
    }
    if !holdout.iter().any(HoldoutUser::is_evaluated) {
        return Err(Error::structure(format!(
            "no holdout user has at least {} interactions",
            config.min_interactions
        )));
    }
    let train = InteractionDataset::new(train_users.len(), num_items, &train)?;
    Ok(HoldoutSplit {
        train,
        train_users,
        holdout,
    })
}

/// The three files of a pre-split benchmark.
#[derive(Debug, Clone)]
pub struct PreSplitPaths<'a> {
    pub train: &'a Path,
    pub holdout_input: &'a Path,
    pub holdout_target: &'a Path,
}

/// Loads a pre-split benchmark. Holdout users share one id map across the
/// input and target files; holdout rows whose item never occurs in training
/// are skipped.
pub fn load_presplit(paths: &PreSplitPaths<'_>) -> Result<(HoldoutSplit, LoadedInteractions)> {
    let train = load_interactions(paths.train)?;
    let dataset = train.to_dataset()?;
    let input = load_with_items(paths.holdout_input, ItemIds::Frozen(&train.items))?;
    let target = load_with_items(paths.holdout_target, ItemIds::Frozen(&train.items))?;

    let mut holdout: Vec<HoldoutUser> = (0..input.num_users())
        .map(|u| HoldoutUser {
            source_user: u,
            input: Vec::new(),
            target: Vec::new(),
        })
        .collect();
    for x in &input.interactions {
        holdout[x.user].input.push(FoldEntry::from(x));
    }
    for x in &target.interactions {
        // users that only appear in the target file have no input fold
        let Some(u) = input.users.get(target.users.id(x.user)) else {
            continue;
        };
        holdout[u].target.push(FoldEntry::from(x));
    }
    if !holdout.iter().any(HoldoutUser::is_evaluated) {
        return Err(Error::structure("holdout files share no users with targets"));
    }
    let split = HoldoutSplit {
        train: dataset,
        train_users: (0..train.num_users()).collect(),
        holdout,
    };
    Ok((split, train))
}

/// Folds users into a trained item matrix by solving the regularized user
/// objective against fixed item factors.
pub struct UserProjector<'m> {
    items: &'m Matrix,
    gram: Gramian,
    config: SolverConfig,
}

impl<'m> UserProjector<'m> {
    pub fn new(items: &'m Matrix, config: &SolverConfig) -> Self {
        Self {
            items,
            gram: gramian(items),
            config: config.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.items.cols()
    }

    pub fn project(&self, input: &[FoldEntry]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut hessian = vec![0.0; d * d];
        self.project_into(input, &mut hessian)
    }

    pub(crate) fn project_into(&self, input: &[FoldEntry], hessian: &mut [f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let alpha0 = self.config.unobserved_weight;
        let reg = row_regularizer(&self.config, input.len(), self.items.rows());
        for (h, g) in hessian.iter_mut().zip(self.gram.matrix().as_slice()) {
            *h = alpha0 * g;
        }
        for a in 0..d {
            hessian[a * d + a] += reg;
        }
        let mut rhs = vec![0.0; d];
        for e in input {
            if e.item >= self.items.rows() {
                return Err(Error::structure(format!("item {} out of range", e.item)));
            }
            let h = self.items.row(e.item);
            axpy(e.weight * e.label, h, &mut rhs);
            accumulate_outer_lower(hessian, h, e.weight);
        }
        cholesky_in_place(hessian, d)?;
        cholesky_solve_in_place(hessian, d, &mut rhs);
        Ok(rhs)
    }
}

/// Embedding for an unseen user from its input fold.
pub fn project_user(items: &Matrix, input: &[FoldEntry], config: &SolverConfig) -> Result<Vec<f64>> {
    UserProjector::new(items, config).project(input)
}
