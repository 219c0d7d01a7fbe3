//! Full-vector alternating least squares.
//!
//! With the opposite side fixed, each row is the solution of
//! `(sum_S a h h^T + alpha0 G + lambda_w I) w = sum_S a y h`.
//! No prediction cache is needed.

use rayon::prelude::*;

use crate::dataset::{InteractionDataset, Side};
use crate::error::{Error, Result};
use crate::linalg::{accumulate_outer_lower_batch, axpy, cholesky_in_place, cholesky_solve_in_place, Gramian};
use crate::model::{FactorModel, Regularizers, SolverConfig};

/// Replaces every row on `side` with its exact minimizer given the other side.
/// `gram` must be the Gramian of the fixed side.
pub(crate) fn full_pass(
    model: &mut FactorModel,
    data: &InteractionDataset,
    regs: &Regularizers,
    config: &SolverConfig,
    side: Side,
    gram: &Gramian,
) -> Result<()> {
    let d = model.dim();
    let alpha0 = config.unobserved_weight;
    let adj = data.adjacency(side);
    let row_regs = regs.side(side);
    let g = gram.matrix().as_slice();
    let (updated, fixed) = model.split_mut(side);

    updated
        .as_mut_slice()
        .par_chunks_exact_mut(d)
        .enumerate()
        .try_for_each_init(
            || vec![0.0; d * d],
            |hessian, (r, row)| {
                for (h, &gv) in hessian.iter_mut().zip(g) {
                    *h = alpha0 * gv;
                }
                for a in 0..d {
                    hessian[a * d + a] += row_regs[r];
                }
                row.fill(0.0);
                let slots = adj.row(r);
                let x = |n: usize| fixed.row(slots.others[n] as usize);
                for n in 0..slots.len() {
                    axpy(slots.weights[n] * slots.labels[n], x(n), row);
                }
                accumulate_outer_lower_batch(hessian, slots.len(), |n| (x(n), slots.weights[n]));
                cholesky_in_place(hessian, d).map_err(|source| Error::RowSolve { side, row: r, source })?;
                cholesky_solve_in_place(hessian, d, row);
                Ok(())
            },
        )
}

/// Solves every row on `side` in closed form against the fixed opposite side.
pub fn solve_side_full(
    model: &mut FactorModel,
    data: &InteractionDataset,
    config: &SolverConfig,
    side: Side,
) -> Result<()> {
    model.check_matches(data)?;
    let regs = Regularizers::new(data, config);
    let gram = crate::linalg::gramian(model.side(side.opposite()));
    full_pass(model, data, &regs, config, side, &gram)
}
