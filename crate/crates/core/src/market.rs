//! Market data: contract metadata, Panama backadjustment, calendar alignment,
//! price deltas, EWM volatility and volatility scaling.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Date, Error, Matrix, Result, EPS_VOL};

/// Span of the exponentially weighted volatility estimate, in trading days.
pub const VOL_SPAN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Sector {
    Ags,
    Energy,
    Equity,
    Metals,
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ags" | "agriculture" => Ok(Sector::Ags),
            "energy" => Ok(Sector::Energy),
            "equity" | "equities" => Ok(Sector::Equity),
            "metals" => Ok(Sector::Metals),
            other => Err(Error::InvalidParameter(format!("unknown sector {other:?}"))),
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sector::Ags => "Ags",
            Sector::Energy => "Energy",
            Sector::Equity => "Equity",
            Sector::Metals => "Metals",
        })
    }
}

/// A per-market quantity that is either constant or observed on dates.
///
/// Dated series are forward-filled: the value on a date is the last
/// observation on or before it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RateSeries {
    Constant(f64),
    Dated(Vec<(Date, f64)>),
}

impl RateSeries {
    pub fn value_on(&self, date: Date) -> Option<f64> {
        match self {
            RateSeries::Constant(v) => Some(*v),
            RateSeries::Dated(obs) => {
                let idx = obs.partition_point(|(d, _)| *d <= date);
                (idx > 0).then(|| obs[idx - 1].1)
            }
        }
    }

    fn all_positive(&self) -> bool {
        match self {
            RateSeries::Constant(v) => v.is_finite() && *v > 0.0,
            RateSeries::Dated(obs) => obs.iter().all(|(_, v)| v.is_finite() && *v > 0.0),
        }
    }
}

/// Static description of one futures market.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractSpec {
    pub market_id: String,
    /// Currency value of a one-point price move for one lot.
    pub point_value: RateSeries,
    /// Local currency to USD.
    pub fx_rate: RateSeries,
    /// Spread basis in price points, halved again when costing a trade.
    pub half_spread: f64,
    pub sector: Sector,
}

impl ContractSpec {
    /// A USD-denominated market with constant point value.
    pub fn simple(market_id: &str, point_value: f64, half_spread: f64, sector: Sector) -> Self {
        Self {
            market_id: market_id.to_string(),
            point_value: RateSeries::Constant(point_value),
            fx_rate: RateSeries::Constant(1.0),
            half_spread,
            sector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.point_value.all_positive() {
            return Err(Error::InvalidParameter(format!("{}: point value must be > 0", self.market_id)));
        }
        if !self.fx_rate.all_positive() {
            return Err(Error::InvalidParameter(format!("{}: fx rate must be > 0", self.market_id)));
        }
        if !(self.half_spread >= 0.0 && self.half_spread.is_finite()) {
            return Err(Error::InvalidParameter(format!("{}: half spread must be >= 0", self.market_id)));
        }
        Ok(())
    }
}

/// Settlement prices of one individual contract.
#[derive(Debug, Clone, PartialEq)]
pub struct RawContractSeries {
    pub market_id: String,
    pub contract_id: String,
    pub dates: Vec<Date>,
    pub prices: Vec<f64>,
    /// Date on which the next contract takes over. `None` for the front (latest) contract.
    pub roll_date: Option<Date>,
}

impl RawContractSeries {
    fn price_on(&self, date: Date) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.prices[i])
    }

    fn validate(&self) -> Result<()> {
        if self.dates.len() != self.prices.len() {
            return Err(Error::LengthMismatch { left: self.dates.len(), right: self.prices.len() });
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::NonAscendingDates { series: self.contract_id.clone(), date: w[1] });
            }
        }
        if self.prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("contract price"));
        }
        Ok(())
    }
}

/// Stitches contracts (ordered by expiry) into one continuous series with the
/// backward Panama method.
///
/// Contract `c` supplies the prices after the previous roll up to and
/// including its own roll date. At each roll the gap `next − current` is
/// measured and every earlier segment is shifted by the sum of the gaps that
/// follow it, so the latest contract is left unadjusted.
pub fn backadjust(contracts: &[RawContractSeries]) -> Result<(Vec<Date>, Vec<f64>)> {
    for c in contracts {
        c.validate()?;
    }
    let Some(last) = contracts.len().checked_sub(1) else {
        return Ok((Vec::new(), Vec::new()));
    };

    // gaps[c] = price of c+1 minus price of c, both on c's roll date.
    let mut gaps = vec![0.0; contracts.len()];
    for c in 0..last {
        let cur = &contracts[c];
        let roll = cur.roll_date.or_else(|| cur.dates.last().copied()).ok_or_else(|| {
            Error::InvalidParameter(format!("contract {} has no prices", cur.contract_id))
        })?;
        let missing = |contract: &RawContractSeries| Error::MissingRollPrice {
            contract: contract.contract_id.clone(),
            date: roll,
        };
        let p_cur = cur.price_on(roll).ok_or_else(|| missing(cur))?;
        let p_next = contracts[c + 1].price_on(roll).ok_or_else(|| missing(&contracts[c + 1]))?;
        gaps[c] = p_next - p_cur;
    }

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut prev_roll: Option<Date> = None;
    for (c, contract) in contracts.iter().enumerate() {
        let shift: f64 = gaps[c..].iter().sum();
        let until = if c == last { None } else { contract.roll_date.or(contract.dates.last().copied()) };
        for (d, p) in contract.dates.iter().zip(&contract.prices) {
            if prev_roll.is_some_and(|r| *d <= r) {
                continue;
            }
            if until.is_some_and(|u| *d > u) {
                break;
            }
            dates.push(*d);
            prices.push(p + shift);
        }
        prev_roll = until;
    }
    Ok((dates, prices))
}

/// A continuous (already backadjusted) price series of one market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub market_id: String,
    pub dates: Vec<Date>,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CalendarPolicy {
    /// Keep only dates on which every market has a price.
    #[default]
    Intersection,
    /// Keep every date from the latest market start on, forward-filling gaps.
    Union,
}

/// Aligns several market series on one calendar. Returns the dates and a
/// `T × M` price matrix with columns in input order.
pub fn align(series: &[MarketSeries], policy: CalendarPolicy) -> Result<(Vec<Date>, Matrix)> {
    for s in series {
        if s.dates.len() != s.prices.len() {
            return Err(Error::LengthMismatch { left: s.dates.len(), right: s.prices.len() });
        }
        for w in s.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::NonAscendingDates { series: s.market_id.clone(), date: w[1] });
            }
        }
        if s.prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("price"));
        }
    }
    if series.is_empty() {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }

    let calendar: Vec<Date> = match policy {
        CalendarPolicy::Intersection => {
            let mut common: BTreeSet<Date> = series[0].dates.iter().copied().collect();
            for s in &series[1..] {
                let other: BTreeSet<Date> = s.dates.iter().copied().collect();
                common = common.intersection(&other).copied().collect();
            }
            common.into_iter().collect()
        }
        CalendarPolicy::Union => {
            let start = series.iter().filter_map(|s| s.dates.first().copied()).max();
            let all: BTreeSet<Date> = series.iter().flat_map(|s| s.dates.iter().copied()).collect();
            all.into_iter().filter(|d| start.is_some_and(|st| *d >= st)).collect()
        }
    };

    let mut prices = Matrix::zeros(calendar.len(), series.len());
    for (m, s) in series.iter().enumerate() {
        let mut k = 0;
        let mut last = f64::NAN;
        for (t, d) in calendar.iter().enumerate() {
            while k < s.dates.len() && s.dates[k] <= *d {
                last = s.prices[k];
                k += 1;
            }
            prices[(t, m)] = last;
        }
    }
    Ok((calendar, prices))
}

/// First differences of each column; row 0 is undefined.
pub fn price_deltas(prices: &Matrix) -> Matrix {
    let mut out = Matrix::undefined(prices.rows(), prices.cols());
    for t in 1..prices.rows() {
        for m in 0..prices.cols() {
            out[(t, m)] = prices[(t, m)] - prices[(t - 1, m)];
        }
    }
    out
}

/// Exponentially weighted moving standard deviation of one series, with
/// smoothing `2 / (span + 1)`, exact finite-sample weights and no small-sample
/// correction, `NaN` until `min_periods` defined observations have been seen.
///
/// Undefined (`NaN`) inputs leave the state untouched and yield `NaN`.
pub fn ewm_std_series(values: &[f64], span: usize, min_periods: usize) -> Vec<f64> {
    let alpha = 2.0 / (span as f64 + 1.0);
    let decay = 1.0 - alpha;
    let mut out = vec![f64::NAN; values.len()];
    let mut seen = 0usize;
    let (mut mean, mut var) = (0.0, 0.0);
    let mut old_w = 0.0;
    for (t, &x) in values.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        if seen == 0 {
            mean = x;
            var = 0.0;
            old_w = 1.0;
        } else {
            old_w *= decay;
            let old_mean = mean;
            mean = (old_w * old_mean + x) / (old_w + 1.0);
            let dm = old_mean - mean;
            let dx = x - mean;
            var = (old_w * (var + dm * dm) + dx * dx) / (old_w + 1.0);
            old_w += 1.0;
        }
        seen += 1;
        if seen >= min_periods.max(2) {
            out[t] = libm::sqrt(var.max(0.0));
        }
    }
    out
}

/// Column-wise [`ewm_std_series`] with `min_periods = span`.
pub fn ewm_std(deltas: &Matrix, span: usize) -> Matrix {
    let mut out = Matrix::undefined(deltas.rows(), deltas.cols());
    for m in 0..deltas.cols() {
        out.set_column(m, &ewm_std_series(&deltas.column_vec(m), span, span));
    }
    out
}

/// Volatility-scaled deltas and their running sum.
///
/// `Δ̃ = Δ / σ` where both are defined and `σ > EPS_VOL`; elsewhere `NaN`.
/// Dates with a defined delta but a vanishing volatility are logged and
/// returned in the third element as `(row, column)`. The scaled price is the
/// cumulative sum of defined scaled deltas and is `NaN` on undefined rows.
pub fn vol_scale(deltas: &Matrix, vol: &Matrix) -> (Matrix, Matrix, Vec<(usize, usize)>) {
    let (rows, cols) = (deltas.rows(), deltas.cols());
    let mut scaled = Matrix::undefined(rows, cols);
    let mut cum = Matrix::undefined(rows, cols);
    let mut excluded = Vec::new();
    for m in 0..cols {
        let mut running: Option<f64> = None;
        for t in 0..rows {
            let (d, s) = (deltas[(t, m)], vol[(t, m)]);
            if d.is_nan() || s.is_nan() {
                continue;
            }
            if s <= EPS_VOL {
                log::warn!("market column {m}, row {t}: volatility {s:e} below floor, date excluded");
                excluded.push((t, m));
                continue;
            }
            let x = d / s;
            scaled[(t, m)] = x;
            let next = running.unwrap_or(0.0) + x;
            running = Some(next);
            cum[(t, m)] = next;
        }
    }
    (scaled, cum, excluded)
}

/// Aligned `T × M` panel of backadjusted prices and everything derived from them.
///
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<Date>,
    pub markets: Vec<ContractSpec>,
    pub prices: Matrix,
    pub deltas: Matrix,
    pub vol22: Matrix,
    pub scaled_deltas: Matrix,
    pub scaled_prices: Matrix,
    /// Point value per date and market, resolved from the contract specs.
    pub point_values: Matrix,
    /// FX rate per date and market, resolved from the contract specs.
    pub fx_rates: Matrix,
}

impl PricePanel {
    /// Builds a panel from aligned prices using the default 22-day volatility span.
    pub fn new(dates: Vec<Date>, markets: Vec<ContractSpec>, prices: Matrix) -> Result<Self> {
        Self::with_span(dates, markets, prices, VOL_SPAN)
    }

    pub fn with_span(
        dates: Vec<Date>,
        markets: Vec<ContractSpec>,
        prices: Matrix,
        vol_span: usize,
    ) -> Result<Self> {
        if vol_span < 2 {
            return Err(Error::InvalidParameter("volatility span must be >= 2".to_string()));
        }
        if prices.rows() != dates.len() || prices.cols() != markets.len() {
            return Err(Error::DimensionMismatch(format!(
                "prices are {}x{}, expected {}x{}",
                prices.rows(),
                prices.cols(),
                dates.len(),
                markets.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::NonAscendingDates { series: "panel".to_string(), date: w[1] });
            }
        }
        for spec in &markets {
            spec.validate()?;
        }
        let (point_values, fx_rates) = resolve_rates(&dates, &markets)?;
        let deltas = price_deltas(&prices);
        let vol22 = ewm_std(&deltas, vol_span);
        let (scaled_deltas, scaled_prices, _) = vol_scale(&deltas, &vol22);
        Ok(Self { dates, markets, prices, deltas, vol22, scaled_deltas, scaled_prices, point_values, fx_rates })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_markets(&self) -> usize {
        self.markets.len()
    }

    pub fn market_index(&self, id: &str) -> Option<usize> {
        self.markets.iter().position(|m| m.market_id == id)
    }

    /// True when every market has a defined scaled delta on row `t`.
    pub fn row_defined(&self, t: usize) -> bool {
        self.scaled_deltas.row(t).iter().all(|x| !x.is_nan())
    }

    /// Index of the first row on which all markets have a defined scaled delta.
    pub fn first_defined_row(&self) -> Option<usize> {
        (0..self.n_dates()).find(|&t| self.row_defined(t))
    }

    /// Rows on which every market is fully defined; the bootstrap draws from these.
    pub fn defined_rows(&self) -> Vec<usize> {
        (0..self.n_dates()).filter(|&t| self.row_defined(t)).collect()
    }

    /// Builds a panel whose row `k` carries the deltas, volatility, scaled
    /// delta, point value and fx rate of source row `rows[k]`.
    ///
    /// Prices are rebuilt as the source's price just before the first
    /// defined row plus the cumulative resampled deltas, and scaled prices as
    /// the cumulative resampled scaled deltas. Dates follow the source calendar
    /// from its first defined row, extended by weekdays if needed.
    pub fn resampled(&self, rows: &[usize]) -> Self {
        let start = self.first_defined_row().unwrap_or(0);
        let mut dates: Vec<Date> = self.dates[start..].iter().take(rows.len()).copied().collect();
        while dates.len() < rows.len() {
            let next = dates.last().map(|d| d.next_weekday()).unwrap_or(Date::new(2000, 1, 3).unwrap());
            dates.push(next);
        }
        let deltas = self.deltas.select_rows(rows);
        let vol22 = self.vol22.select_rows(rows);
        let scaled_deltas = self.scaled_deltas.select_rows(rows);
        let point_values = self.point_values.select_rows(rows);
        let fx_rates = self.fx_rates.select_rows(rows);
        let m = self.n_markets();
        let mut prices = Matrix::zeros(rows.len(), m);
        let mut scaled_prices = Matrix::zeros(rows.len(), m);
        for j in 0..m {
            let base = if start > 0 { self.prices[(start - 1, j)] } else { self.prices[(0, j)] };
            let (mut p, mut sp) = (base, 0.0);
            for k in 0..rows.len() {
                p += deltas[(k, j)];
                sp += scaled_deltas[(k, j)];
                prices[(k, j)] = p;
                scaled_prices[(k, j)] = sp;
            }
        }
        Self {
            dates,
            markets: self.markets.clone(),
            prices,
            deltas,
            vol22,
            scaled_deltas,
            scaled_prices,
            point_values,
            fx_rates,
        }
    }
}

fn resolve_rates(dates: &[Date], markets: &[ContractSpec]) -> Result<(Matrix, Matrix)> {
    let mut pv = Matrix::zeros(dates.len(), markets.len());
    let mut fx = Matrix::zeros(dates.len(), markets.len());
    for (m, spec) in markets.iter().enumerate() {
        for (t, d) in dates.iter().enumerate() {
            pv[(t, m)] = spec.point_value.value_on(*d).ok_or_else(|| {
                Error::InvalidParameter(format!("{}: no point value on or before {d}", spec.market_id))
            })?;
            fx[(t, m)] = spec.fx_rate.value_on(*d).ok_or_else(|| {
                Error::InvalidParameter(format!("{}: no fx rate on or before {d}", spec.market_id))
            })?;
        }
    }
    Ok((pv, fx))
}
