use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ialspp::pipeline::SplitConfig;
use ialspp::synthetic::SyntheticConfig;
use ialspp::{SolverConfig, SolverKind};

use crate::{Error, Result};

/// A block size in a sweep; `Full` stands for the embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSize {
    Fixed(usize),
    Full,
}

impl BlockSize {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            BlockSize::Fixed(b) => b,
            BlockSize::Full => dim,
        }
    }
}

impl FromStr for BlockSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "d" | "full" => Ok(BlockSize::Full),
            t => t
                .parse::<usize>()
                .ok()
                .filter(|&b| b > 0)
                .map(BlockSize::Fixed)
                .ok_or_else(|| format!("block size must be a positive integer or 'd', got '{s}'")),
        }
    }
}

impl fmt::Display for BlockSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSize::Fixed(b) => write!(f, "{b}"),
            BlockSize::Full => f.write_str("d"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Training file plus optional pre-split holdout files. Without them the
    /// training file itself is split by `ExperimentConfig::split`.
    Files {
        train: PathBuf,
        holdout: Option<(PathBuf, PathBuf)>,
    },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Template for every run; `dim` and `block_size` come from the sweep lists.
    pub solver: SolverConfig,
    pub dims: Vec<usize>,
    pub block_sizes: Vec<BlockSize>,
    pub eval_every: usize,
    pub repeats: usize,
    pub track_loss: bool,
    pub split: SplitConfig,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        let solver = SolverConfig::default();
        Self {
            data,
            dims: vec![solver.dim],
            block_sizes: vec![BlockSize::Fixed(solver.block_size)],
            solver,
            eval_every: 1,
            repeats: 1,
            track_loss: false,
            split: SplitConfig::default(),
        }
    }

    /// The (dim, block_size) pairs to run, in sweep order. The block size is
    /// pinned to 1 for `icd` and to `dim` for `ials`; duplicates are dropped
    /// and blocks wider than the dimension are skipped.
    pub fn runs(&self) -> Result<Vec<SolverConfig>> {
        if self.dims.is_empty() || self.block_sizes.is_empty() {
            return Err(Error::Config("dim and block_size lists must be nonempty".into()));
        }
        if self.eval_every == 0 || self.repeats == 0 {
            return Err(Error::Config("eval_every and repeats must be positive".into()));
        }
        let mut out: Vec<SolverConfig> = Vec::new();
        for &dim in &self.dims {
            for &b in &self.block_sizes {
                let block_size = match self.solver.solver {
                    SolverKind::Icd => 1,
                    SolverKind::Ials => dim,
                    SolverKind::IalsPlusPlus => b.resolve(dim),
                };
                if block_size > dim {
                    log::warn!("skipping block_size {block_size} > dim {dim}");
                    continue;
                }
                let cfg = SolverConfig {
                    dim,
                    block_size,
                    ..self.solver.clone()
                };
                cfg.validate()?;
                if !out.iter().any(|c| c.dim == dim && c.block_size == block_size) {
                    out.push(cfg);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no valid (dim, block_size) combination".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> DataSource {
        DataSource::Synthetic("10,10,3,2,1".parse().unwrap())
    }

    #[test]
    fn block_size_parsing() {
        assert_eq!("d".parse::<BlockSize>(), Ok(BlockSize::Full));
        assert_eq!("16".parse::<BlockSize>(), Ok(BlockSize::Fixed(16)));
        assert!("0".parse::<BlockSize>().is_err());
        assert!("x".parse::<BlockSize>().is_err());
        assert_eq!(BlockSize::Full.resolve(32), 32);
    }

    #[test]
    fn sweep_is_cartesian() {
        let mut cfg = ExperimentConfig::new(synthetic());
        cfg.dims = vec![8, 16];
        cfg.block_sizes = vec![BlockSize::Fixed(1), BlockSize::Fixed(16), BlockSize::Full];
        let runs: Vec<(usize, usize)> = cfg.runs().unwrap().iter().map(|c| (c.dim, c.block_size)).collect();
        assert_eq!(runs, vec![(8, 1), (8, 8), (16, 1), (16, 16)]);
    }

    #[test]
    fn fixed_solvers_ignore_block_list() {
        let mut cfg = ExperimentConfig::new(synthetic());
        cfg.dims = vec![8];
        cfg.block_sizes = vec![BlockSize::Fixed(1), BlockSize::Fixed(4)];
        cfg.solver.solver = SolverKind::Ials;
        assert_eq!(cfg.runs().unwrap().len(), 1);
        assert_eq!(cfg.runs().unwrap()[0].block_size, 8);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let mut cfg = ExperimentConfig::new(synthetic());
        cfg.dims.clear();
        assert!(cfg.runs().is_err());
    }
}
