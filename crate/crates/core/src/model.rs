//! Model parameters, solver configuration and the full training objective.
//!
//! The objective for a factor model `(W, H)` over interactions `S` is
//!
//! ```text
//! L(W, H) = sum_{(u,i,y,a) in S} a (<w_u, h_i> - y)^2
//!         + alpha0 * sum_u sum_i <w_u, h_i>^2
//!         + sum_u lambda_u |w_u|^2 + sum_i lambda_i |h_i|^2
//! ```
//!
//! with the frequency-scaled regularizer
//! `lambda_u = lambda * (|S_u| + alpha0 * |I|)^nu` (and the mirror for items).
//! The all-pairs term is evaluated as `sum_u w_u^T G_I w_u` with the item
//! Gramian, never by enumerating pairs.
//!
//! The initialization scale `sigma / sqrt(d)` and the regularizer scaling are
//! reconstructions of the usual iALS tuning recipe; they are not derived here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{InteractionDataset, Side};
use crate::error::{Error, Result};
use crate::linalg::{dot, gramian, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// Full-vector alternating least squares.
    Ials,
    /// Scalar coordinate descent.
    Icd,
    /// Block (subvector) Newton steps of width `block_size`.
    IalsPlusPlus,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ials => "ials",
            SolverKind::Icd => "icd",
            SolverKind::IalsPlusPlus => "ialspp",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ials" => Ok(SolverKind::Ials),
            "icd" => Ok(SolverKind::Icd),
            "ialspp" | "ials++" => Ok(SolverKind::IalsPlusPlus),
            other => Err(Error::structure(format!(
                "unknown solver '{other}' (expected ials, icd or ialspp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dim: usize,
    pub block_size: usize,
    /// Weight `alpha0` of the all-pairs term.
    pub unobserved_weight: f64,
    pub reg: f64,
    /// Exponent `nu` of the frequency-scaled regularizer; 0 gives plain `reg`.
    pub reg_exponent: f64,
    /// `sigma`; entries are drawn with standard deviation `sigma / sqrt(dim)`.
    pub init_stddev: f64,
    pub epochs: usize,
    pub solver: SolverKind,
    /// Worker threads for row solves; 0 uses all available cores.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            block_size: 64,
            unobserved_weight: 0.1,
            reg: 0.003,
            reg_exponent: 1.0,
            init_stddev: 0.1,
            epochs: 16,
            solver: SolverKind::IalsPlusPlus,
            threads: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// MovieLens 20M hyperparameters.
    pub fn ml20m(dim: usize) -> Self {
        Self {
            dim,
            block_size: dim.min(64),
            unobserved_weight: 0.1,
            reg: 0.003,
            ..Self::default()
        }
    }

    /// Million Song Dataset hyperparameters.
    pub fn msd(dim: usize) -> Self {
        Self {
            dim,
            block_size: dim.min(64),
            unobserved_weight: 0.02,
            reg: 0.002,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::structure("dim must be positive"));
        }
        if self.block_size == 0 || self.block_size > self.dim {
            return Err(Error::structure(format!(
                "block_size must be in 1..={} (got {})",
                self.dim, self.block_size
            )));
        }
        if !(self.unobserved_weight >= 0.0) || !self.unobserved_weight.is_finite() {
            return Err(Error::structure("unobserved_weight must be finite and >= 0"));
        }
        if !(self.reg > 0.0) || !self.reg.is_finite() {
            return Err(Error::structure("reg must be finite and > 0"));
        }
        if !(self.reg_exponent >= 0.0) || !self.reg_exponent.is_finite() {
            return Err(Error::structure("reg_exponent must be finite and >= 0"));
        }
        if !(self.init_stddev > 0.0) || !self.init_stddev.is_finite() {
            return Err(Error::structure("init_stddev must be finite and > 0"));
        }
        Ok(())
    }

    /// Per-entry standard deviation of the initial factors.
    pub fn entry_stddev(&self) -> f64 {
        self.init_stddev / (self.dim as f64).sqrt()
    }
}

/// User and item embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub users: Matrix,
    pub items: Matrix,
}

impl FactorModel {
    pub fn new(users: Matrix, items: Matrix) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::structure(format!(
                "user dim {} != item dim {}",
                users.cols(),
                items.cols()
            )));
        }
        Ok(Self { users, items })
    }

    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            users: Matrix::zeros(num_users, dim),
            items: Matrix::zeros(num_items, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn num_users(&self) -> usize {
        self.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn side(&self, side: Side) -> &Matrix {
        match side {
            Side::Users => &self.users,
            Side::Items => &self.items,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Matrix {
        match side {
            Side::Users => &mut self.users,
            Side::Items => &mut self.items,
        }
    }

    /// `(updated, fixed)` matrices for a pass over `side`.
    pub fn split_mut(&mut self, side: Side) -> (&mut Matrix, &Matrix) {
        match side {
            Side::Users => (&mut self.users, &self.items),
            Side::Items => (&mut self.items, &self.users),
        }
    }

    #[inline]
    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }

    pub fn check_matches(&self, data: &InteractionDataset) -> Result<()> {
        if self.num_users() != data.num_users() || self.num_items() != data.num_items() {
            return Err(Error::structure(format!(
                "model is {}x{} but data has {} users and {} items",
                self.num_users(),
                self.num_items(),
                data.num_users(),
                data.num_items()
            )));
        }
        Ok(())
    }
}

/// Draws every factor entry from `Normal(0, (sigma / sqrt(d))^2)`. Users are
/// drawn first, then items, from one seeded stream.
pub fn init_model(config: &SolverConfig, num_users: usize, num_items: usize) -> Result<FactorModel> {
    config.validate()?;
    if num_users == 0 || num_items == 0 {
        return Err(Error::structure(format!(
            "cannot initialize a model with {num_users} users and {num_items} items"
        )));
    }
    let d = config.dim;
    let normal = Normal::new(0.0, config.entry_stddev())
        .map_err(|e| Error::structure(format!("bad init stddev: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * d).map(|_| normal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, d, data)
    };
    let users = draw(num_users);
    let items = draw(num_items);
    Ok(FactorModel { users, items })
}

/// Effective per-row regularizer `reg * (count + alpha0 * opposite)^nu`.
pub fn row_regularizer(config: &SolverConfig, count: usize, opposite_size: usize) -> f64 {
    if config.reg_exponent == 0.0 {
        return config.reg;
    }
    let freq = count as f64 + config.unobserved_weight * opposite_size as f64;
    config.reg * freq.powf(config.reg_exponent)
}

/// Precomputed regularizers for every user and item row.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizers {
    pub users: Vec<f64>,
    pub items: Vec<f64>,
}

impl Regularizers {
    pub fn new(data: &InteractionDataset, config: &SolverConfig) -> Self {
        let users = (0..data.num_users())
            .map(|u| row_regularizer(config, data.by_user().degree(u), data.num_items()))
            .collect();
        let items = (0..data.num_items())
            .map(|i| row_regularizer(config, data.by_item().degree(i), data.num_users()))
            .collect();
        Self { users, items }
    }

    pub fn side(&self, side: Side) -> &[f64] {
        match side {
            Side::Users => &self.users,
            Side::Items => &self.items,
        }
    }
}

/// Cached scores for every observed interaction, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCache {
    pub scores: Vec<f64>,
}

impl PredictionCache {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Largest relative deviation `|a - b| / max(1, |b|)` against `other`.
    pub fn max_relative_diff(&self, other: &PredictionCache) -> f64 {
        self.scores
            .iter()
            .zip(&other.scores)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

pub fn compute_predictions(model: &FactorModel, data: &InteractionDataset) -> Result<PredictionCache> {
    model.check_matches(data)?;
    let mut scores = vec![0.0; data.len()];
    refresh_predictions(model, data, &mut scores);
    Ok(PredictionCache { scores })
}

/// Recomputes `scores` in place, in parallel over users.
pub(crate) fn refresh_predictions(model: &FactorModel, data: &InteractionDataset, scores: &mut [f64]) {
    use rayon::prelude::*;
    let adj = data.by_user();
    let mut parts = split_by_offsets(scores, adj.offsets());
    parts.par_iter_mut().enumerate().for_each(|(u, part)| {
        let w = model.users.row(u);
        for (s, &i) in part.iter_mut().zip(adj.row(u).others) {
            *s = dot(w, model.items.row(i as usize));
        }
    });
}

/// Splits `data` into the consecutive slices delimited by a CSR offset array.
pub(crate) fn split_by_offsets<'a, T>(mut data: &'a mut [T], offsets: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let (head, tail) = data.split_at_mut(w[1] - w[0]);
        out.push(head);
        data = tail;
    }
    out
}

/// The three parts of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub observed: f64,
    pub unobserved: f64,
    pub regularization: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.observed + self.unobserved + self.regularization
    }
}

pub fn compute_loss(model: &FactorModel, data: &InteractionDataset, config: &SolverConfig) -> Result<f64> {
    Ok(loss_breakdown(model, data, config)?.total())
}

pub fn loss_breakdown(
    model: &FactorModel,
    data: &InteractionDataset,
    config: &SolverConfig,
) -> Result<LossBreakdown> {
    model.check_matches(data)?;
    let adj = data.by_user();
    let mut observed = 0.0;
    for u in 0..data.num_users() {
        let w = model.users.row(u);
        let row = adj.row(u);
        for n in 0..row.len() {
            let r = dot(w, model.items.row(row.others[n] as usize)) - row.labels[n];
            observed += row.weights[n] * r * r;
        }
    }

    let g = gramian(&model.items);
    let unobserved = config.unobserved_weight
        * model.users.iter_rows().map(|w| g.quadratic_form(w)).sum::<f64>();

    let regs = Regularizers::new(data, config);
    let regularization = weighted_sq_norms(&model.users, &regs.users)
        + weighted_sq_norms(&model.items, &regs.items);

    Ok(LossBreakdown {
        observed,
        unobserved,
        regularization,
    })
}

fn weighted_sq_norms(m: &Matrix, weights: &[f64]) -> f64 {
    m.iter_rows().zip(weights).map(|(r, &l)| l * dot(r, r)).sum()
}
