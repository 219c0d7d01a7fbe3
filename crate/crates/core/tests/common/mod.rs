#![allow(dead_code)]

use std::collections::BTreeSet;

use ialspp::{init_model, FactorModel, Interaction, InteractionDataset, SolverConfig, SolverKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub data: InteractionDataset,
    pub config: SolverConfig,
    pub model: FactorModel,
}

impl Instance {
    pub fn with_solver(&self, solver: SolverKind, block_size: usize) -> SolverConfig {
        SolverConfig {
            solver,
            block_size,
            ..self.config.clone()
        }
    }
}

/// Random instance with |U|, |I| <= 50, |S| <= 500 and d from {2, 4, 8}.
/// Labels and weights are random so the explicit-weight paths are exercised.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(3..=50);
    let items = rng.gen_range(3..=50);
    let dim = [2, 4, 8][rng.gen_range(0..3)];
    let target = rng.gen_range(1..=500usize.min(users * items));
    let mut pairs = BTreeSet::new();
    while pairs.len() < target {
        pairs.insert((rng.gen_range(0..users), rng.gen_range(0..items)));
    }
    let xs: Vec<Interaction> = pairs
        .into_iter()
        .map(|(user, item)| Interaction {
            user,
            item,
            label: rng.gen_range(0.5..2.0),
            weight: rng.gen_range(0.5..2.0),
        })
        .collect();
    let data = InteractionDataset::new(users, items, &xs).unwrap();
    let config = SolverConfig {
        dim,
        block_size: dim,
        unobserved_weight: rng.gen_range(0.05..0.5),
        reg: rng.gen_range(0.01..0.1),
        reg_exponent: [0.0, 0.5, 1.0][rng.gen_range(0..3)],
        init_stddev: 1.0,
        epochs: 1,
        seed,
        ..SolverConfig::default()
    };
    let model = init_model(&config, users, items).unwrap();
    Instance { data, config, model }
}

/// `max |a - b| / max(max |b|, 1e-300)` over two models.
pub fn relative_model_diff(a: &FactorModel, b: &FactorModel) -> f64 {
    let num = a.users.max_abs_diff(&b.users).max(a.items.max_abs_diff(&b.items));
    let den = b.users.max_abs().max(b.items.max_abs()).max(1e-300);
    num / den
}

pub fn abs_model_diff(a: &FactorModel, b: &FactorModel) -> f64 {
    a.users.max_abs_diff(&b.users).max(a.items.max_abs_diff(&b.items))
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
