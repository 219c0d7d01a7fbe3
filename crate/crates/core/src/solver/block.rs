//! Block (subvector) Newton passes.
//!
//! For a row `w` and a block `pi` of its coordinates, the objective restricted
//! to `w_pi` is quadratic, so one Newton step lands on its minimizer. Half of
//! the block gradient and Hessian are assembled from sufficient statistics:
//!
//! ```text
//! g = sum_S a (yhat - y) h_pi + alpha0 * w G[:, pi] + lambda_w * w_pi
//! H = sum_S a h_pi h_pi^T      + alpha0 * G[pi, pi] + lambda_w * I
//! ```
//!
//! where `G[:, pi]` is the partial Gramian of the fixed side and `yhat` comes
//! from the prediction cache. After the step `w_pi -= H^-1 g` the cached
//! predictions of the row move by `-<delta, h_pi>`.

use std::ops::Range;

use rayon::prelude::*;

use crate::dataset::{Adjacency, InteractionDataset, RowSlots, Side};
use crate::error::{Error, Result};
use crate::linalg::{
    accumulate_outer_lower_batch, axpy, cholesky_in_place, cholesky_solve_in_place, dot, mirror_lower,
    partial_gramian_range, Matrix, PartialGramian,
};
use crate::model::{split_by_offsets, FactorModel, Regularizers, SolverConfig};

/// Per-thread buffers for one block width.
pub(crate) struct BlockScratch {
    width: usize,
    hessian: Vec<f64>,
    gradient: Vec<f64>,
    preds: Vec<f64>,
}

impl BlockScratch {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            width,
            hessian: vec![0.0; width * width],
            gradient: vec![0.0; width],
            preds: Vec::new(),
        }
    }
}

/// Fills the lower triangle of `hessian` and all of `gradient` (both halved).
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_block_system(
    row: &[f64],
    slots: RowSlots<'_>,
    preds: &[f64],
    fixed: &Matrix,
    slab: &PartialGramian,
    block: Range<usize>,
    alpha0: f64,
    reg: f64,
    hessian: &mut [f64],
    gradient: &mut [f64],
) {
    let p = block.len();
    let lo = block.start;
    for j in 0..p {
        gradient[j] = alpha0 * dot(row, slab.column(j)) + reg * row[lo + j];
    }
    for a in 0..p {
        for b in 0..=a {
            hessian[a * p + b] = alpha0 * slab.restricted(a, b);
        }
        hessian[a * p + a] += reg;
    }
    let x = |n: usize| &fixed.row(slots.others[n] as usize)[block.clone()];
    for (n, &pred) in preds.iter().enumerate().take(slots.len()) {
        axpy(slots.weights[n] * (pred - slots.labels[n]), x(n), gradient);
    }
    accumulate_outer_lower_batch(hessian, slots.len(), |n| (x(n), slots.weights[n]));
}

/// Runs one Newton step on `row[block]`. Leaves the step in `scratch.gradient`.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    row: &mut [f64],
    slots: RowSlots<'_>,
    preds: &[f64],
    fixed: &Matrix,
    slab: &PartialGramian,
    block: Range<usize>,
    alpha0: f64,
    reg: f64,
    scratch: &mut BlockScratch,
) -> std::result::Result<(), crate::linalg::NotPositiveDefinite> {
    let p = scratch.width;
    assemble_block_system(
        row,
        slots,
        preds,
        fixed,
        slab,
        block.clone(),
        alpha0,
        reg,
        &mut scratch.hessian,
        &mut scratch.gradient,
    );
    cholesky_in_place(&mut scratch.hessian, p)?;
    cholesky_solve_in_place(&scratch.hessian, p, &mut scratch.gradient);
    for (w, d) in row[block].iter_mut().zip(&scratch.gradient) {
        *w -= d;
    }
    Ok(())
}

/// Updates `block` of every row on `side` and keeps `cache` consistent.
#[allow(clippy::too_many_arguments)]
pub(crate) fn block_pass(
    model: &mut FactorModel,
    data: &InteractionDataset,
    cache: &mut [f64],
    regs: &Regularizers,
    config: &SolverConfig,
    side: Side,
    block: Range<usize>,
    slab: &PartialGramian,
) -> Result<()> {
    let alpha0 = config.unobserved_weight;
    let p = block.len();
    let d = model.dim();
    let adj = data.adjacency(side);
    let row_regs = regs.side(side);
    let (updated, fixed) = model.split_mut(side);

    match side {
        Side::Users => {
            // Cache is user-major: each user owns a contiguous slice.
            let parts = split_by_offsets(cache, adj.offsets());
            updated
                .as_mut_slice()
                .par_chunks_exact_mut(d)
                .zip(parts)
                .enumerate()
                .try_for_each_init(
                    || BlockScratch::new(p),
                    |scratch, (u, (row, preds))| {
                        let slots = adj.row(u);
                        newton_step(
                            row,
                            slots,
                            preds,
                            fixed,
                            slab,
                            block.clone(),
                            alpha0,
                            row_regs[u],
                            scratch,
                        )
                        .map_err(|source| Error::RowSolve { side, row: u, source })?;
                        let delta = &scratch.gradient;
                        for (pred, &i) in preds.iter_mut().zip(slots.others) {
                            *pred -= dot(delta, &fixed.row(i as usize)[block.clone()]);
                        }
                        Ok(())
                    },
                )
        }
        Side::Items => {
            // Cache entries of an item are scattered; solve all items first,
            // then apply the deltas in a user-major sweep.
            let mut deltas = Matrix::zeros(adj.num_rows(), p);
            {
                let cache: &[f64] = cache;
                updated
                    .as_mut_slice()
                    .par_chunks_exact_mut(d)
                    .zip(deltas.as_mut_slice().par_chunks_exact_mut(p))
                    .enumerate()
                    .try_for_each_init(
                        || BlockScratch::new(p),
                        |scratch, (i, (row, delta))| {
                            let slots = adj.row(i);
                            let mut preds = std::mem::take(&mut scratch.preds);
                            preds.clear();
                            preds.extend(slots.entries.iter().map(|&k| cache[k]));
                            let res = newton_step(
                                row,
                                slots,
                                &preds,
                                fixed,
                                slab,
                                block.clone(),
                                alpha0,
                                row_regs[i],
                                scratch,
                            );
                            scratch.preds = preds;
                            res.map_err(|source| Error::RowSolve { side, row: i, source })?;
                            delta.copy_from_slice(&scratch.gradient);
                            Ok::<_, Error>(())
                        },
                    )?;
            }
            apply_item_deltas(cache, data.by_user(), fixed, &deltas, block);
            Ok(())
        }
    }
}

/// `cache[k] -= <delta_item(k), w_user(k)[block]>` over the user-major cache.
fn apply_item_deltas(
    cache: &mut [f64],
    by_user: &Adjacency,
    users: &Matrix,
    deltas: &Matrix,
    block: Range<usize>,
) {
    let parts = split_by_offsets(cache, by_user.offsets());
    parts.into_par_iter().enumerate().for_each(|(u, preds)| {
        let w = &users.row(u)[block.clone()];
        for (pred, &i) in preds.iter_mut().zip(by_user.row(u).others) {
            *pred -= dot(deltas.row(i as usize), w);
        }
    });
}

pub(crate) fn side_partial_gramian(model: &FactorModel, side: Side, block: Range<usize>) -> PartialGramian {
    partial_gramian_range(model.side(side.opposite()), block)
        .expect("partition blocks are validated against the model dimension")
}

/// Half the gradient and Hessian of the loss with respect to one row block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub gradient: Vec<f64>,
    pub hessian: Matrix,
}

impl BlockSystem {
    /// The Newton step `H^-1 g`.
    pub fn newton_step(&self) -> Result<Vec<f64>> {
        Ok(crate::linalg::spd_solve(&self.hessian, &self.gradient)?)
    }
}

/// Assembles the block system for `row` on `side` exactly as a solver pass
/// would, with predictions computed fresh from the model. Both parts are half
/// of the true derivatives of [`crate::model::compute_loss`].
pub fn block_system(
    model: &FactorModel,
    data: &InteractionDataset,
    config: &SolverConfig,
    side: Side,
    row: usize,
    block: Range<usize>,
) -> Result<BlockSystem> {
    model.check_matches(data)?;
    if block.is_empty() || block.end > model.dim() {
        return Err(Error::structure(format!(
            "block {block:?} invalid for dimension {}",
            model.dim()
        )));
    }
    if row >= data.num_rows(side) {
        return Err(Error::structure(format!("{side} row {row} out of range")));
    }
    let regs = Regularizers::new(data, config);
    let slab = side_partial_gramian(model, side, block.clone());
    let slots = data.adjacency(side).row(row);
    let this = model.side(side).row(row);
    let fixed = model.side(side.opposite());
    let preds: Vec<f64> = slots
        .others
        .iter()
        .map(|&o| dot(this, fixed.row(o as usize)))
        .collect();
    let p = block.len();
    let mut hessian = vec![0.0; p * p];
    let mut gradient = vec![0.0; p];
    assemble_block_system(
        this,
        slots,
        &preds,
        fixed,
        &slab,
        block,
        config.unobserved_weight,
        regs.side(side)[row],
        &mut hessian,
        &mut gradient,
    );
    mirror_lower(&mut hessian, p);
    Ok(BlockSystem {
        gradient,
        hessian: Matrix::from_vec(p, p, hessian),
    })
}
