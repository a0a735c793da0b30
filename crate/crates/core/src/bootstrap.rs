//! Stationary block bootstrap over whole panel rows.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::market::PricePanel;
use crate::{Error, Result};

pub const DEFAULT_BLOCK_LENGTH: f64 = 22.0;
pub const DEFAULT_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    /// Mean block length `L`; lengths are geometric with `p = 1/L`.
    pub expected_block_length: f64,
    pub seed: u64,
    /// Output length; defaults to the source length.
    pub resample_length: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, expected_block_length: DEFAULT_BLOCK_LENGTH, seed: 0, resample_length: None }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples < 1 {
            return Err(Error::InvalidParameter("n_resamples must be >= 1".into()));
        }
        if !(self.expected_block_length >= 1.0 && self.expected_block_length.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "expected block length must be >= 1, got {}",
                self.expected_block_length
            )));
        }
        if self.resample_length == Some(0) {
            return Err(Error::InvalidParameter("resample length must be positive".into()));
        }
        Ok(())
    }
}

/// One block: `len` consecutive source rows from `start`, wrapping circularly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct StationaryBootstrap {
    config: BootstrapConfig,
    geometric: Geometric,
}

impl StationaryBootstrap {
    pub fn new(config: BootstrapConfig) -> Result<Self> {
        config.validate()?;
        let geometric = Geometric::new(1.0 / config.expected_block_length)
            .map_err(|e| Error::InvalidParameter(alloc::format!("{e}")))?;
        Ok(Self { config, geometric })
    }

    pub fn config(&self) -> &BootstrapConfig {
        &self.config
    }

    /// Generator for resample `index`: the configured seed with its own stream,
    /// so any resample can be drawn independently of the others.
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    fn next_block(&self, rng: &mut ChaCha8Rng, n: usize) -> Block {
        Block { start: rng.random_range(0..n), len: 1 + self.geometric.sample(rng) as usize }
    }

    /// Blocks covering `out_len` rows for a source of `n` rows; the last is
    /// truncated.
    pub fn blocks(&self, n: usize, out_len: usize, index: usize) -> Result<Vec<Block>> {
        if n < 2 {
            return Err(Error::TooShort { needed: 2, got: n });
        }
        let mut rng = self.rng(index);
        let mut out = Vec::new();
        let mut filled = 0;
        while filled < out_len {
            let mut b = self.next_block(&mut rng, n);
            b.len = b.len.min(out_len - filled);
            filled += b.len;
            out.push(b);
        }
        Ok(out)
    }

    /// `count` untruncated block lengths drawn from resample stream `index`.
    pub fn block_lengths(&self, count: usize, index: usize) -> Vec<usize> {
        let mut rng = self.rng(index);
        (0..count).map(|_| self.next_block(&mut rng, 2).len).collect()
    }

    /// Source row indices for resample `index` of an `n`-row series.
    pub fn indices(&self, n: usize, index: usize) -> Result<Vec<usize>> {
        let out_len = self.config.resample_length.unwrap_or(n);
        let blocks = self.blocks(n, out_len, index)?;
        Ok(blocks.iter().flat_map(|b| (0..b.len).map(move |k| (b.start + k) % n)).collect())
    }

    /// Resamples the fully defined rows of `panel`.
    pub fn resample_panel(&self, panel: &PricePanel, index: usize) -> Result<PricePanel> {
        let rows = panel.defined_rows();
        let idx = self.indices(rows.len(), index)?;
        let picked: Vec<usize> = idx.iter().map(|i| rows[*i]).collect();
        Ok(panel.resampled(&picked))
    }
}
