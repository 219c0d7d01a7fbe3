use std::time::Instant;

use ialspp::metrics::{evaluate_holdout, EvalConfig};
use ialspp::pipeline::{load_interactions, load_presplit, split_holdout, HoldoutSplit, PreSplitPaths};
use ialspp::synthetic::implicit_feedback;
use ialspp::{init_model, SolverConfig, Trainer};

use crate::config::{DataSource, ExperimentConfig};
use crate::records::{EpochRecord, Record, RunHeader};
use crate::Result;

pub fn load_split(config: &ExperimentConfig) -> Result<HoldoutSplit> {
    let split = match &config.data {
        DataSource::Synthetic(gen) => {
            let xs = implicit_feedback(gen)?;
            split_holdout(&xs, gen.users, gen.items, &config.split)?
        }
        DataSource::Files {
            train,
            holdout: Some((input, target)),
        } => {
            load_presplit(&PreSplitPaths {
                train,
                holdout_input: input,
                holdout_target: target,
            })?
            .0
        }
        DataSource::Files { train, holdout: None } => {
            let loaded = load_interactions(train)?;
            split_holdout(&loaded.interactions, loaded.num_users(), loaded.num_items(), &config.split)?
        }
    };
    Ok(split)
}

/// Runs every configuration of the sweep `repeats` times, handing each record
/// to `sink` as soon as it is complete. Repeat `r` seeds its model with
/// `seed + r`.
pub fn run_experiment(config: &ExperimentConfig, sink: &mut dyn FnMut(&Record) -> Result<()>) -> Result<()> {
    let runs = config.runs()?;
    let split = load_split(config)?;
    let train = &split.train;
    let eval_users = split.evaluated_users().count();
    log::info!(
        "{} users, {} items, {} interactions; {eval_users} holdout users",
        train.num_users(),
        train.num_items(),
        train.len()
    );
    let eval = EvalConfig::default();

    for run in &runs {
        for repeat in 0..config.repeats {
            let cfg = SolverConfig {
                seed: run.seed.wrapping_add(repeat as u64),
                ..run.clone()
            };
            log::info!("{} dim={} block_size={} repeat={repeat}", cfg.solver, cfg.dim, cfg.block_size);
            sink(&Record::Run(RunHeader {
                solver: cfg.solver.name().to_string(),
                dim: cfg.dim,
                block_size: cfg.block_size,
                repeat,
                alpha0: cfg.unobserved_weight,
                reg: cfg.reg,
                reg_exp: cfg.reg_exponent,
                stddev: cfg.init_stddev,
                epochs: cfg.epochs,
                eval_every: config.eval_every,
                threads: cfg.threads,
                seed: cfg.seed,
                num_users: train.num_users(),
                num_items: train.num_items(),
                num_interactions: train.len(),
                eval_users,
            }))?;

            let mut model = init_model(&cfg, train.num_users(), train.num_items())?;
            let mut trainer = Trainer::new(train, cfg.clone())?.track_loss(config.track_loss);
            for epoch in 1..=cfg.epochs {
                let report = trainer.run_epoch(&mut model)?;
                let mut record = EpochRecord {
                    solver: cfg.solver.name().to_string(),
                    dim: cfg.dim,
                    block_size: cfg.block_size,
                    repeat,
                    epoch,
                    train_seconds: report.train_seconds(),
                    gramian_seconds: report.gramian_seconds,
                    solve_seconds: report.solve_seconds(),
                    cache_seconds: report.prediction_seconds,
                    eval_seconds: 0.0,
                    recall_at_20: None,
                    recall_at_50: None,
                    ndcg_at_100: None,
                    loss: report.loss,
                };
                if epoch % config.eval_every == 0 || epoch == cfg.epochs {
                    let t = Instant::now();
                    let m = evaluate_holdout(&model.items, &split, &cfg, &eval)?;
                    record.eval_seconds = t.elapsed().as_secs_f64();
                    record.recall_at_20 = m.recall(20);
                    record.recall_at_50 = m.recall(50);
                    record.ndcg_at_100 = m.ndcg(100);
                }
                log::info!(
                    "epoch {epoch}: train {:.3}s ndcg@100 {}",
                    record.train_seconds,
                    record.ndcg_at_100.map_or("-".into(), |v| format!("{v:.4}"))
                );
                sink(&Record::Epoch(record))?;
            }
        }
    }
    Ok(())
}
