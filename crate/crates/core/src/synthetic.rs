//! Synthetic workloads with a known low-rank structure.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use crate::dataset::Interaction;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub per_user: usize,
    pub rank: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 || self.rank == 0 {
            return Err(Error::structure("synthetic users, items and rank must be positive"));
        }
        if self.per_user == 0 || self.per_user > self.items {
            return Err(Error::structure(format!(
                "per_user must be in 1..={} (got {})",
                self.items, self.per_user
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::structure("noise must be >= 0"));
        }
        Ok(())
    }
}

impl std::str::FromStr for SyntheticConfig {
    type Err = Error;

    /// Parses `users,items,per_user,rank,noise[,seed]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(5..=6).contains(&parts.len()) {
            return Err(Error::structure(format!(
                "expected users,items,per_user,rank,noise[,seed], got '{s}'"
            )));
        }
        let int = |i: usize| {
            parts[i]
                .parse::<usize>()
                .map_err(|e| Error::structure(format!("bad synthetic field '{}': {e}", parts[i])))
        };
        let noise = parts[4]
            .parse::<f64>()
            .map_err(|e| Error::structure(format!("bad synthetic noise '{}': {e}", parts[4])))?;
        let seed = if parts.len() == 6 { int(5)? as u64 } else { 0 };
        let cfg = SyntheticConfig {
            users: int(0)?,
            items: int(1)?,
            per_user: int(2)?,
            rank: int(3)?,
            noise,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn gaussian_factors(rng: &mut ChaCha8Rng, rows: usize, rank: usize) -> Matrix {
    let scale = 1.0 / (rank as f64).sqrt();
    let data = (0..rows * rank)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>();
    Matrix::from_vec(rows, rank, data)
}

/// Real-valued labels `y = <p_u, q_i> + noise * eps` on `per_user` distinct
/// random items per user, from a rank-`rank` ground truth.
pub fn low_rank_labels(cfg: &SyntheticConfig) -> Result<Vec<Interaction>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let users = gaussian_factors(&mut rng, cfg.users, cfg.rank);
    let items = gaussian_factors(&mut rng, cfg.items, cfg.rank);
    let mut out = Vec::with_capacity(cfg.users * cfg.per_user);
    for u in 0..cfg.users {
        let mut chosen = sample(&mut rng, cfg.items, cfg.per_user).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let eps: f64 = StandardNormal.sample(&mut rng);
            out.push(Interaction {
                user: u,
                item: i,
                label: dot(users.row(u), items.row(i)) + cfg.noise * eps,
                weight: 1.0,
            });
        }
    }
    Ok(out)
}

/// Implicit observations (`y = a = 1`). Each user consumes the `per_user`
/// items with the highest `affinity + noise * Gumbel` score, where affinity is
/// a rank-`rank` preference plus a skewed item popularity. With noise > 0
/// this samples items without replacement from a softmax over affinities.
pub fn implicit_feedback(cfg: &SyntheticConfig) -> Result<Vec<Interaction>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let users = gaussian_factors(&mut rng, cfg.users, cfg.rank);
    let items = gaussian_factors(&mut rng, cfg.items, cfg.rank);
    let popularity: Vec<f64> = (0..cfg.items).map(|_| 0.5 * rng.gen::<f64>().ln()).collect();
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel parameters");

    let mut out = Vec::with_capacity(cfg.users * cfg.per_user);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(cfg.items);
    for u in 0..cfg.users {
        scored.clear();
        for (i, &pop) in popularity.iter().enumerate() {
            let noise: f64 = gumbel.sample(&mut rng);
            let affinity = 3.0 * dot(users.row(u), items.row(i)) + pop;
            scored.push((affinity + cfg.noise * noise, i));
        }
        let k = cfg.per_user;
        scored.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = scored[..k].iter().map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| Interaction::implicit(u, i)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flag_value() {
        let c: SyntheticConfig = "100, 50, 10, 4, 0.5".parse().unwrap();
        assert_eq!((c.users, c.items, c.per_user, c.rank, c.noise, c.seed), (100, 50, 10, 4, 0.5, 0));
        let c: SyntheticConfig = "10,5,2,1,0,7".parse().unwrap();
        assert_eq!(c.seed, 7);
        assert!("10,5,6,1,0".parse::<SyntheticConfig>().is_err());
        assert!("10,5".parse::<SyntheticConfig>().is_err());
    }

    #[test]
    fn implicit_shape() {
        let cfg = SyntheticConfig {
            users: 20,
            items: 30,
            per_user: 5,
            rank: 3,
            noise: 1.0,
            seed: 1,
        };
        let xs = implicit_feedback(&cfg).unwrap();
        assert_eq!(xs.len(), 100);
        for u in 0..20 {
            let mut items: Vec<usize> = xs.iter().filter(|x| x.user == u).map(|x| x.item).collect();
            items.dedup();
            assert_eq!(items.len(), 5);
        }
        assert_eq!(xs, implicit_feedback(&cfg).unwrap());
    }

    #[test]
    fn noiseless_labels_are_low_rank() {
        let cfg = SyntheticConfig {
            users: 6,
            items: 8,
            per_user: 8,
            rank: 2,
            noise: 0.0,
            seed: 3,
        };
        let xs = low_rank_labels(&cfg).unwrap();
        // a full rank-2 matrix: every 3x3 minor vanishes
        let y = |u: usize, i: usize| xs[u * 8 + i].label;
        let det3 = |r: [usize; 3], c: [usize; 3]| {
            let m = |a: usize, b: usize| y(r[a], c[b]);
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        };
        assert!(det3([0, 2, 4], [1, 3, 7]).abs() < 1e-12);
        assert!(det3([1, 3, 5], [0, 2, 6]).abs() < 1e-12);
    }
}
