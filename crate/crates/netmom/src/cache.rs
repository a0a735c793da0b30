//! Panel cache: aligned prices and contract metadata as JSON with a content
//! checksum. Derived quantities are rebuilt on load.

use std::fs;
use std::path::Path;

use netmom_core::market::{ContractSpec, PricePanel};
use netmom_core::{Date, Matrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{AppError, AppResult};

pub const CACHE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelPayload {
    pub dates: Vec<Date>,
    pub markets: Vec<ContractSpec>,
    /// Row-major, one entry per date.
    pub prices: Vec<Vec<f64>>,
}

impl PanelPayload {
    pub fn from_panel(panel: &PricePanel) -> Self {
        Self {
            dates: panel.dates.clone(),
            markets: panel.markets.clone(),
            prices: (0..panel.n_dates()).map(|t| panel.prices.row(t).to_vec()).collect(),
        }
    }

    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("payload serializes")))
    }

    pub fn into_panel(self, vol_span: usize) -> netmom_core::Result<PricePanel> {
        let (rows, cols) = (self.prices.len(), self.markets.len());
        let flat: Vec<f64> = self.prices.into_iter().flatten().collect();
        if flat.len() != rows * cols {
            return Err(netmom_core::Error::DimensionMismatch(format!("cache holds {} prices for {rows}x{cols}", flat.len())));
        }
        PricePanel::with_span(self.dates, self.markets, Matrix::from_vec(rows, cols, flat), vol_span)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCache {
    pub format: u32,
    pub version: String,
    pub checksum: String,
    pub panel: PanelPayload,
}

/// Writes the cache and returns its checksum.
pub fn write_cache(path: &Path, panel: &PricePanel) -> AppResult<String> {
    let payload = PanelPayload::from_panel(panel);
    let checksum = payload.checksum();
    let cache = PanelCache {
        format: CACHE_FORMAT,
        version: crate::VERSION.to_string(),
        checksum: checksum.clone(),
        panel: payload,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    }
    let json = serde_json::to_vec(&cache).expect("cache serializes");
    fs::write(path, json).map_err(AppError::io(path))?;
    Ok(checksum)
}

/// Reads a cache, verifying format and checksum, and returns the panel with
/// the checksum.
pub fn read_cache(path: &Path, vol_span: usize) -> AppResult<(PricePanel, String)> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    let cache: PanelCache = serde_json::from_slice(&bytes)
        .map_err(|e| AppError::Data(format!("{}: not a panel cache: {e}", path.display())))?;
    if cache.format != CACHE_FORMAT {
        return Err(AppError::Data(format!("{}: cache format {} unsupported", path.display(), cache.format)));
    }
    let actual = cache.panel.checksum();
    if actual != cache.checksum {
        return Err(AppError::Data(format!("{}: checksum mismatch, cache is corrupt", path.display())));
    }
    let panel = cache.panel.into_panel(vol_span).map_err(AppError::core(path.display().to_string()))?;
    Ok((panel, actual))
}
