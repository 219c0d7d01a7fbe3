//! Scalar coordinate descent, one embedding dimension at a time.
//!
//! The optimal change of coordinate `f` of a row is
//!
//! ```text
//! delta = (sum_S a (yhat - y) h_f + alpha0 <w, g> + lambda_w w_f)
//!       / (sum_S a h_f^2          + alpha0 g_f    + lambda_w)
//! ```
//!
//! with `g = sum h_f h` (column `f` of the fixed-side Gramian). Written with
//! plain scalar arithmetic rather than as a width-1 block.

use rayon::prelude::*;

use crate::dataset::{Adjacency, InteractionDataset, Side};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{split_by_offsets, FactorModel, Regularizers, SolverConfig};

/// Updates coordinate `f` of every row on `side`. `g` is column `f` of the
/// Gramian of the fixed side.
#[allow(clippy::too_many_arguments)]
pub(crate) fn coordinate_pass(
    model: &mut FactorModel,
    data: &InteractionDataset,
    cache: &mut [f64],
    regs: &Regularizers,
    config: &SolverConfig,
    side: Side,
    f: usize,
    g: &[f64],
) -> Result<()> {
    let d = model.dim();
    let alpha0 = config.unobserved_weight;
    let adj = data.adjacency(side);
    let row_regs = regs.side(side);
    let (updated, fixed) = model.split_mut(side);
    let fixed_data = fixed.as_slice();

    let pass = ScalarPass {
        side,
        dim: f,
        adj,
        fixed: fixed_data,
        stride: d,
        g,
        alpha0,
        regs: row_regs,
    };

    match side {
        Side::Users => {
            let parts = split_by_offsets(cache, adj.offsets());
            updated
                .as_mut_slice()
                .par_chunks_exact_mut(d)
                .zip(parts)
                .enumerate()
                .try_for_each(|(u, (row, preds))| {
                    let delta = pass.step(u, row, |n| preds[n])?;
                    row[f] -= delta;
                    for (pred, &i) in preds.iter_mut().zip(adj.row(u).others) {
                        *pred -= delta * fixed_data[i as usize * d + f];
                    }
                    Ok(())
                })
        }
        Side::Items => {
            let mut deltas = vec![0.0; adj.num_rows()];
            {
                let cache: &[f64] = cache;
                updated
                    .as_mut_slice()
                    .par_chunks_exact_mut(d)
                    .zip(deltas.par_iter_mut())
                    .enumerate()
                    .try_for_each(|(i, (row, delta))| {
                        let entries = adj.row(i).entries;
                        *delta = pass.step(i, row, |n| cache[entries[n]])?;
                        row[f] -= *delta;
                        Ok::<_, Error>(())
                    })?;
            }
            let by_user = data.by_user();
            let parts = split_by_offsets(cache, by_user.offsets());
            parts.into_par_iter().enumerate().for_each(|(u, preds)| {
                let wf = fixed_data[u * d + f];
                for (pred, &i) in preds.iter_mut().zip(by_user.row(u).others) {
                    *pred -= deltas[i as usize] * wf;
                }
            });
            Ok(())
        }
    }
}

struct ScalarPass<'a> {
    side: Side,
    dim: usize,
    adj: &'a Adjacency,
    fixed: &'a [f64],
    stride: usize,
    g: &'a [f64],
    alpha0: f64,
    regs: &'a [f64],
}

impl ScalarPass<'_> {
    /// Newton step for coordinate `dim` of `row`; `pred(n)` is the cached
    /// prediction of the row's `n`-th observation.
    #[inline]
    fn step(&self, row: usize, values: &[f64], pred: impl Fn(usize) -> f64) -> Result<f64> {
        let f = self.dim;
        let reg = self.regs[row];
        let slots = self.adj.row(row);
        let mut grad = self.alpha0 * dot(values, self.g) + reg * values[f];
        let mut curv = self.alpha0 * self.g[f] + reg;
        for n in 0..slots.len() {
            let x = self.fixed[slots.others[n] as usize * self.stride + f];
            let w = slots.weights[n];
            grad += w * (pred(n) - slots.labels[n]) * x;
            curv += w * x * x;
        }
        if !(curv > 0.0) {
            return Err(Error::Curvature {
                side: self.side,
                row,
                dim: f,
                value: curv,
            });
        }
        Ok(grad / curv)
    }
}
