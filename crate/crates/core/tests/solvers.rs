mod common;

use common::{abs_model_diff, random_instance, relative_model_diff};
use ialspp::linalg::{dot, spd_solve};
use ialspp::solver::{block_system, ialspp_epoch, icd_epoch, ials_epoch, solve_side_full};
use ialspp::synthetic::{low_rank_labels, SyntheticConfig};
use ialspp::*;

fn no_observer() -> impl FnMut(solver::PassEvent, &FactorModel) + Send {
    |_, _| {}
}

#[test]
fn block_width_one_matches_coordinate_descent() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let cfg = inst.with_solver(SolverKind::Icd, 1);
        let mut a = inst.model.clone();
        let mut b = inst.model.clone();
        let mut cache = compute_predictions(&a, &inst.data).unwrap();
        icd_epoch(&mut a, &inst.data, &mut cache, &cfg, &mut no_observer()).unwrap();
        let mut cache = compute_predictions(&b, &inst.data).unwrap();
        let partition = partition_dims(cfg.dim, 1).unwrap();
        ialspp_epoch(&mut b, &inst.data, &mut cache, &cfg, &partition, &mut no_observer()).unwrap();
        assert!(abs_model_diff(&a, &b) < 1e-10, "seed {seed}");
    }
}

#[test]
fn full_block_matches_full_solve() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let cfg = inst.with_solver(SolverKind::Ials, inst.config.dim);
        let mut a = inst.model.clone();
        let mut b = inst.model.clone();
        ials_epoch(&mut a, &inst.data, &cfg, &mut no_observer()).unwrap();
        let mut cache = compute_predictions(&b, &inst.data).unwrap();
        let partition = partition_dims(cfg.dim, cfg.dim).unwrap();
        ialspp_epoch(&mut b, &inst.data, &mut cache, &cfg, &partition, &mut no_observer()).unwrap();
        assert!(relative_model_diff(&b, &a) < 1e-6, "seed {seed}");
    }
}

#[test]
fn scalar_normal_equation() {
    let data = InteractionDataset::new(1, 2, &[Interaction::implicit(0, 0)]).unwrap();
    let cfg = SolverConfig {
        dim: 1,
        block_size: 1,
        unobserved_weight: 0.1,
        reg: 0.01,
        reg_exponent: 0.0,
        ..SolverConfig::default()
    };
    let mut model = FactorModel::new(Matrix::zeros(1, 1), Matrix::from_rows(&[vec![2.0], vec![1.0]])).unwrap();
    solve_side_full(&mut model, &data, &cfg, Side::Users).unwrap();
    assert!((model.users[(0, 0)] - 2.0 / 4.51).abs() < 1e-15);
    assert!((model.users[(0, 0)] - 0.44346).abs() < 1e-5);
}

#[test]
fn full_solve_matches_dense_least_squares() {
    // Stack the objective of one row as an ordinary least-squares problem
    // over all items and solve its normal equations directly.
    let xs = [(0, 0, 1.0, 2.0), (0, 3, 0.5, 1.0), (1, 1, 1.0, 1.0), (2, 0, 2.0, 0.5), (2, 2, 1.0, 3.0)];
    let xs: Vec<Interaction> = xs
        .iter()
        .map(|&(user, item, label, weight)| Interaction { user, item, label, weight })
        .collect();
    let data = InteractionDataset::new(3, 4, &xs).unwrap();
    let cfg = SolverConfig {
        dim: 2,
        block_size: 2,
        unobserved_weight: 0.3,
        reg: 0.05,
        reg_exponent: 1.0,
        init_stddev: 1.0,
        seed: 4,
        ..SolverConfig::default()
    };
    let mut model = init_model(&cfg, 3, 4).unwrap();
    let items = model.items.clone();
    solve_side_full(&mut model, &data, &cfg, Side::Users).unwrap();

    for u in 0..3 {
        let count = xs.iter().filter(|x| x.user == u).count();
        let lambda = cfg.reg * (count as f64 + cfg.unobserved_weight * 4.0);
        // rows sqrt(c) * h with targets sqrt(c) * t, where observed pairs
        // carry both the observed and the unobserved term
        let mut a = Matrix::zeros(2, 2);
        let mut b = vec![0.0; 2];
        for i in 0..4 {
            let h = items.row(i);
            let mut terms = vec![(cfg.unobserved_weight, 0.0)];
            if let Some(x) = xs.iter().find(|x| x.user == u && x.item == i) {
                terms.push((x.weight, x.label));
            }
            for (c, t) in terms {
                for r in 0..2 {
                    b[r] += c * t * h[r];
                    for s in 0..2 {
                        a[(r, s)] += c * h[r] * h[s];
                    }
                }
            }
        }
        for r in 0..2 {
            a[(r, r)] += lambda;
        }
        let expected = spd_solve(&a, &b).unwrap();
        for (got, want) in model.users.row(u).iter().zip(&expected) {
            assert!((got - want).abs() < 1e-8 * want.abs().max(1.0));
        }
    }
}

#[test]
fn every_pass_descends() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        for (solver, block) in [
            (SolverKind::Ials, inst.config.dim),
            (SolverKind::Icd, 1),
            (SolverKind::IalsPlusPlus, 1),
            (SolverKind::IalsPlusPlus, inst.config.dim.div_ceil(2)),
        ] {
            let cfg = inst.with_solver(solver, block);
            let mut model = inst.model.clone();
            let mut trainer = Trainer::new(&inst.data, cfg.clone()).unwrap();
            let mut losses = vec![compute_loss(&model, &inst.data, &cfg).unwrap()];
            for _ in 0..4 {
                trainer
                    .run_epoch_observed(&mut model, &mut |_, m: &FactorModel| {
                        losses.push(compute_loss(m, &inst.data, &cfg).unwrap());
                    })
                    .unwrap();
            }
            for w in losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{solver} |pi|={block} seed {seed}: {w:?}");
            }
        }
    }
}

#[test]
fn maintained_cache_matches_recomputation() {
    for seed in 0..5 {
        let inst = random_instance(seed);
        for (solver, block) in [(SolverKind::Icd, 1), (SolverKind::IalsPlusPlus, 3.min(inst.config.dim))] {
            let cfg = inst.with_solver(solver, block);
            let mut model = inst.model.clone();
            let mut trainer = Trainer::new(&inst.data, cfg).unwrap();
            for _ in 0..3 {
                trainer.run_epoch(&mut model).unwrap();
                let fresh = compute_predictions(&model, &inst.data).unwrap();
                assert!(trainer.cache().max_relative_diff(&fresh) < 1e-5);
            }
        }
    }
}

#[test]
fn block_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let inst = random_instance(100 + seed);
        let (model, data, cfg) = (&inst.model, &inst.data, &inst.config);
        let d = cfg.dim;
        let block = d / 2..d;
        for side in [Side::Users, Side::Items] {
            let sys = block_system(model, data, cfg, side, 1, block.clone()).unwrap();
            let eps = 1e-5;
            for (j, f) in block.clone().enumerate() {
                let mut plus = model.clone();
                plus.side_mut(side)[(1, f)] += eps;
                let mut minus = model.clone();
                minus.side_mut(side)[(1, f)] -= eps;
                let fd = (compute_loss(&plus, data, cfg).unwrap() - compute_loss(&minus, data, cfg).unwrap()) / (2.0 * eps);
                let analytic = 2.0 * sys.gradient[j];
                assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "{fd} vs {analytic}");
            }
        }
    }
}

#[test]
fn newton_step_minimizes_the_block() {
    let inst = random_instance(7);
    let d = inst.config.dim;
    let sys = block_system(&inst.model, &inst.data, &inst.config, Side::Users, 0, 0..d).unwrap();
    let step = sys.newton_step().unwrap();
    let mut moved = inst.model.clone();
    for (w, s) in moved.users.row_mut(0).iter_mut().zip(&step) {
        *w -= s;
    }
    let after = block_system(&moved, &inst.data, &inst.config, Side::Users, 0, 0..d).unwrap();
    let scale = sys.gradient.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    assert!(after.gradient.iter().all(|g| g.abs() < 1e-10 * scale));
    assert!(dot(&step, &sys.gradient) > 0.0);
}

#[test]
fn recovers_noiseless_low_rank_labels() {
    let gen = SyntheticConfig {
        users: 100,
        items: 60,
        per_user: 30,
        rank: 2,
        noise: 0.0,
        seed: 11,
    };
    let xs = low_rank_labels(&gen).unwrap();
    let data = InteractionDataset::new(gen.users, gen.items, &xs).unwrap();
    for (solver, block) in [(SolverKind::Ials, 2), (SolverKind::Icd, 1), (SolverKind::IalsPlusPlus, 1)] {
        let cfg = SolverConfig {
            dim: 2,
            block_size: block,
            solver,
            unobserved_weight: 0.0,
            reg: 1e-6,
            reg_exponent: 0.0,
            init_stddev: 1.0,
            epochs: 16,
            seed: 2,
            ..SolverConfig::default()
        };
        let mut model = init_model(&cfg, gen.users, gen.items).unwrap();
        train(&mut model, &data, &cfg).unwrap();
        let mse = xs.iter().map(|x| (model.score(x.user, x.item) - x.label).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mse.sqrt() < 1e-3, "{solver}: rmse {}", mse.sqrt());
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let inst = random_instance(21);
    for (solver, block) in [(SolverKind::Ials, inst.config.dim), (SolverKind::Icd, 1), (SolverKind::IalsPlusPlus, 1)] {
        let run = |threads: usize| {
            let cfg = SolverConfig {
                threads,
                epochs: 3,
                ..inst.with_solver(solver, block)
            };
            let mut model = inst.model.clone();
            train(&mut model, &inst.data, &cfg).unwrap();
            model
        };
        assert_eq!(run(1), run(4));
    }
}

#[test]
fn rejects_mismatched_model() {
    let inst = random_instance(3);
    let mut wrong = FactorModel::zeros(inst.data.num_users() + 1, inst.data.num_items(), inst.config.dim);
    assert!(train(&mut wrong, &inst.data, &inst.config).is_err());
    let bad = SolverConfig {
        block_size: inst.config.dim + 1,
        ..inst.config.clone()
    };
    assert!(Trainer::new(&inst.data, bad).is_err());
}
