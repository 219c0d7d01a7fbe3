//! Training procedures: full-vector ALS, scalar coordinate descent and block
//! Newton ALS, plus the epoch driver that dispatches between them.
//!
//! All three alternate between users and items. Coordinate descent and the
//! block solver put the dimension (or block) loop outermost and run a user pass
//! followed by an item pass for each block before moving on.

mod block;
mod coordinate;
mod full;

use std::ops::Range;
use std::time::Instant;

use crate::dataset::{InteractionDataset, Side};
use crate::error::{Error, Result};
use crate::linalg::gramian;
use crate::model::{compute_loss, refresh_predictions, FactorModel, PredictionCache, Regularizers, SolverConfig, SolverKind};

pub use block::{block_system, BlockSystem};
pub use full::solve_side_full;

/// Contiguous, ascending blocks covering `0..dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Range<usize>>,
}

impl BlockPartition {
    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end)
    }
}

/// Splits `0..dim` into blocks of `block_size`; the last block takes the
/// remainder.
pub fn partition_dims(dim: usize, block_size: usize) -> Result<BlockPartition> {
    if block_size == 0 || block_size > dim {
        return Err(Error::structure(format!(
            "block size {block_size} must be in 1..={dim}"
        )));
    }
    let blocks = (0..dim)
        .step_by(block_size)
        .map(|lo| lo..(lo + block_size).min(dim))
        .collect();
    Ok(BlockPartition { blocks })
}

/// Wall-clock breakdown of one training epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochReport {
    pub epoch: usize,
    pub user_seconds: f64,
    pub item_seconds: f64,
    pub gramian_seconds: f64,
    pub prediction_seconds: f64,
    pub loss: Option<f64>,
}

impl EpochReport {
    pub fn solve_seconds(&self) -> f64 {
        self.user_seconds + self.item_seconds
    }

    pub fn train_seconds(&self) -> f64 {
        self.solve_seconds() + self.gramian_seconds + self.prediction_seconds
    }
}

/// Emitted after every side pass: `block` is the block (or coordinate) index;
/// full-vector ALS reports block 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassEvent {
    pub block: usize,
    pub side: Side,
}

pub type PassObserver<'o> = dyn FnMut(PassEvent, &FactorModel) + Send + 'o;

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn add_pass_time(report: &mut EpochReport, side: Side, secs: f64) {
    match side {
        Side::Users => report.user_seconds += secs,
        Side::Items => report.item_seconds += secs,
    }
}

/// One epoch of full-vector ALS: a user pass, then an item pass.
pub fn ials_epoch(
    model: &mut FactorModel,
    data: &InteractionDataset,
    config: &SolverConfig,
    observer: &mut PassObserver<'_>,
) -> Result<EpochReport> {
    model.check_matches(data)?;
    let regs = Regularizers::new(data, config);
    let mut report = EpochReport::default();
    for side in [Side::Users, Side::Items] {
        let t = Instant::now();
        let gram = gramian(model.side(side.opposite()));
        report.gramian_seconds += elapsed(t);

        let t = Instant::now();
        full::full_pass(model, data, &regs, config, side, &gram)?;
        add_pass_time(&mut report, side, elapsed(t));
        observer(PassEvent { block: 0, side }, model);
    }
    Ok(report)
}

/// One epoch of scalar coordinate descent. The cache is rebuilt first and is
/// consistent with the model on return.
pub fn icd_epoch(
    model: &mut FactorModel,
    data: &InteractionDataset,
    cache: &mut PredictionCache,
    config: &SolverConfig,
    observer: &mut PassObserver<'_>,
) -> Result<EpochReport> {
    check_cache(model, data, cache)?;
    let regs = Regularizers::new(data, config);
    let mut report = EpochReport::default();

    let t = Instant::now();
    refresh_predictions(model, data, &mut cache.scores);
    report.prediction_seconds += elapsed(t);

    for f in 0..model.dim() {
        for side in [Side::Users, Side::Items] {
            let t = Instant::now();
            let g = block::side_partial_gramian(model, side, f..f + 1);
            report.gramian_seconds += elapsed(t);

            let t = Instant::now();
            coordinate::coordinate_pass(model, data, &mut cache.scores, &regs, config, side, f, g.column(0))?;
            add_pass_time(&mut report, side, elapsed(t));
            observer(PassEvent { block: f, side }, model);
        }
    }
    Ok(report)
}

/// One epoch of block Newton ALS over `partition`. The cache is rebuilt
/// first and is consistent with the model on return.
pub fn ialspp_epoch(
    model: &mut FactorModel,
    data: &InteractionDataset,
    cache: &mut PredictionCache,
    config: &SolverConfig,
    partition: &BlockPartition,
    observer: &mut PassObserver<'_>,
) -> Result<EpochReport> {
    check_cache(model, data, cache)?;
    if partition.dim() != model.dim() {
        return Err(Error::structure(format!(
            "partition covers {} dimensions but the model has {}",
            partition.dim(),
            model.dim()
        )));
    }
    let regs = Regularizers::new(data, config);
    let mut report = EpochReport::default();

    let t = Instant::now();
    refresh_predictions(model, data, &mut cache.scores);
    report.prediction_seconds += elapsed(t);

    for (b, block) in partition.blocks().iter().enumerate() {
        for side in [Side::Users, Side::Items] {
            let t = Instant::now();
            let slab = block::side_partial_gramian(model, side, block.clone());
            report.gramian_seconds += elapsed(t);

            let t = Instant::now();
            block::block_pass(model, data, &mut cache.scores, &regs, config, side, block.clone(), &slab)?;
            add_pass_time(&mut report, side, elapsed(t));
            observer(PassEvent { block: b, side }, model);
        }
    }
    Ok(report)
}

fn check_cache(model: &FactorModel, data: &InteractionDataset, cache: &PredictionCache) -> Result<()> {
    model.check_matches(data)?;
    if cache.len() != data.len() {
        return Err(Error::structure(format!(
            "prediction cache has {} entries for {} interactions",
            cache.len(),
            data.len()
        )));
    }
    Ok(())
}

/// Epoch driver for one configured solver.
///
/// Owns the worker pool and, for the cached solvers, the prediction cache.
pub struct Trainer<'d> {
    data: &'d InteractionDataset,
    config: SolverConfig,
    partition: BlockPartition,
    cache: PredictionCache,
    pool: rayon::ThreadPool,
    epochs_run: usize,
    track_loss: bool,
}

impl<'d> Trainer<'d> {
    pub fn new(data: &'d InteractionDataset, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let partition = partition_dims(config.dim, config.block_size)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::structure(format!("cannot start worker pool: {e}")))?;
        let cache_len = match config.solver {
            SolverKind::Ials => 0,
            _ => data.len(),
        };
        Ok(Self {
            data,
            config,
            partition,
            cache: PredictionCache {
                scores: vec![0.0; cache_len],
            },
            pool,
            epochs_run: 0,
            track_loss: false,
        })
    }

    /// Evaluate the full loss after every epoch.
    pub fn track_loss(mut self, enabled: bool) -> Self {
        self.track_loss = enabled;
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// The maintained prediction cache (empty for full-vector ALS).
    pub fn cache(&self) -> &PredictionCache {
        &self.cache
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    pub fn run_epoch(&mut self, model: &mut FactorModel) -> Result<EpochReport> {
        self.run_epoch_observed(model, &mut |_, _| {})
    }

    pub fn run_epoch_observed(
        &mut self,
        model: &mut FactorModel,
        observer: &mut PassObserver<'_>,
    ) -> Result<EpochReport> {
        if model.dim() != self.config.dim {
            return Err(Error::structure(format!(
                "model dim {} does not match configured dim {}",
                model.dim(),
                self.config.dim
            )));
        }
        let Self {
            data,
            config,
            partition,
            cache,
            pool,
            ..
        } = self;
        let mut report = pool.install(|| match config.solver {
            SolverKind::Ials => ials_epoch(model, data, config, observer),
            SolverKind::Icd => icd_epoch(model, data, cache, config, observer),
            SolverKind::IalsPlusPlus => ialspp_epoch(model, data, cache, config, partition, observer),
        })?;
        report.epoch = self.epochs_run;
        self.epochs_run += 1;
        if self.track_loss {
            report.loss = Some(self.pool.install(|| compute_loss(model, self.data, &self.config))?);
        }
        log::debug!(
            "epoch {} ({}): {:.3}s train",
            report.epoch,
            self.config.solver,
            report.train_seconds()
        );
        Ok(report)
    }
}

/// Runs `config.epochs` epochs of the configured solver on `model`.
pub fn train(
    model: &mut FactorModel,
    data: &InteractionDataset,
    config: &SolverConfig,
) -> Result<Vec<EpochReport>> {
    model.check_matches(data)?;
    let mut trainer = Trainer::new(data, config.clone())?;
    (0..config.epochs).map(|_| trainer.run_epoch(model)).collect()
}
