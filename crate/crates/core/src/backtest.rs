//! PnL accounting and performance statistics.
//!
//! Timing: a position computed on row `t` trades on `t + 1` and earns on
//! `t + 2`. Costs on row `t` are charged for the change `X[t] − X[t−1]`,
//! with `X[−1] = 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Date, Error, Matrix, Result, TRADING_DAYS};

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Per-market gross USD pnl: `r[t] = X[t−2] · Δ[t] · F[t] · E[t]`.
/// Rows 0 and 1 carry no pnl.
pub fn gross_pnl(positions: &Matrix, deltas: &Matrix, point_values: &Matrix, fx: &Matrix) -> Result<Matrix> {
    let (t_len, m) = (positions.rows(), positions.cols());
    check_shape("deltas", deltas, t_len, m)?;
    check_shape("point values", point_values, t_len, m)?;
    check_shape("fx rates", fx, t_len, m)?;
    let mut out = Matrix::zeros(t_len, m);
    for t in 2..t_len {
        for j in 0..m {
            let x = positions[(t - 2, j)];
            if x != 0.0 {
                out[(t, j)] = x * deltas[(t, j)] * point_values[(t, j)] * fx[(t, j)];
            }
        }
    }
    Ok(out)
}

/// Per-market USD cost: `c[t] = |X[t] − X[t−1]| · (s/2) · F[t] · E[t]`.
pub fn transaction_costs(positions: &Matrix, spreads: &[f64], point_values: &Matrix, fx: &Matrix) -> Result<Matrix> {
    let (t_len, m) = (positions.rows(), positions.cols());
    if spreads.len() != m {
        return Err(Error::DimensionMismatch(alloc::format!("{} spreads for {m} markets", spreads.len())));
    }
    if let Some(s) = spreads.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidParameter(alloc::format!("negative spread {s}")));
    }
    check_shape("point values", point_values, t_len, m)?;
    check_shape("fx rates", fx, t_len, m)?;
    let mut out = Matrix::zeros(t_len, m);
    for t in 0..t_len {
        for j in 0..m {
            let prev = if t == 0 { 0.0 } else { positions[(t - 1, j)] };
            let traded = libm::fabs(positions[(t, j)] - prev);
            if traded != 0.0 {
                out[(t, j)] = traded * spreads[j] / 2.0 * point_values[(t, j)] * fx[(t, j)];
            }
        }
    }
    Ok(out)
}

/// Per-market net pnl and portfolio return `Σ_m net / Γ`.
pub fn net_pnl(gross: &Matrix, cost: &Matrix, gamma: f64) -> Result<(Matrix, Vec<f64>)> {
    check_shape("cost", cost, gross.rows(), gross.cols())?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("notional must be positive, got {gamma}")));
    }
    let mut net = gross.clone();
    for t in 0..gross.rows() {
        for j in 0..gross.cols() {
            net[(t, j)] -= cost[(t, j)];
        }
    }
    let returns = net.row_sums().into_iter().map(|s| s / gamma).collect();
    Ok((net, returns))
}

/// Gross, cost and net pnl of a portfolio over a calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PnlFrame {
    pub dates: Vec<Date>,
    pub gross: Matrix,
    pub cost: Matrix,
    pub net: Matrix,
    pub gamma: f64,
    /// Net portfolio return per date.
    pub returns: Vec<f64>,
}

impl PnlFrame {
    pub fn new(dates: Vec<Date>, gross: Matrix, cost: Matrix, gamma: f64) -> Result<Self> {
        if dates.len() != gross.rows() {
            return Err(Error::LengthMismatch { left: dates.len(), right: gross.rows() });
        }
        let (net, returns) = net_pnl(&gross, &cost, gamma)?;
        Ok(Self { dates, gross, cost, net, gamma, returns })
    }

    /// Runs gross and cost accounting for `positions`.
    pub fn from_positions(
        dates: Vec<Date>,
        positions: &Matrix,
        deltas: &Matrix,
        point_values: &Matrix,
        fx: &Matrix,
        spreads: &[f64],
        gamma: f64,
    ) -> Result<Self> {
        let gross = gross_pnl(positions, deltas, point_values, fx)?;
        let cost = transaction_costs(positions, spreads, point_values, fx)?;
        Self::new(dates, gross, cost, gamma)
    }

    pub fn gross_returns(&self) -> Vec<f64> {
        self.gross.row_sums().into_iter().map(|s| s / self.gamma).collect()
    }

    pub fn cost_returns(&self) -> Vec<f64> {
        self.cost.row_sums().into_iter().map(|s| s / self.gamma).collect()
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
            gross: self.gross.slice_rows(start, end),
            cost: self.cost.slice_rows(start, end),
            net: self.net.slice_rows(start, end),
            gamma: self.gamma,
            returns: self.returns[start..end].to_vec(),
        }
    }

    pub fn report(&self) -> Result<PerformanceReport> {
        performance_with_costs(&self.dates, &self.gross_returns(), &self.cost_returns())
    }
}

/// Annualised performance statistics. Ratios that divide by zero are `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerformanceReport {
    pub n_days: usize,
    pub gross_return: f64,
    pub net_return: f64,
    pub transaction_cost: f64,
    pub vol: f64,
    pub sharpe: Option<f64>,
    pub downside_deviation: f64,
    pub mdd: f64,
    pub sortino: Option<f64>,
    pub calmar: Option<f64>,
    /// Skewness of calendar-month returns.
    pub skewness: Option<f64>,
    pub hit_rate: f64,
    pub avg_profit_over_avg_loss: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(x);
    libm::sqrt(x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() - 1) as f64)
}

/// Adjusted Fisher–Pearson skewness `G1`. `None` below three points or for
/// zero dispersion.
pub fn skewness(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mu = mean(x);
    let m2 = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    let m3 = x.iter().map(|v| (v - mu) * (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    if !(m2 > 1e-300) || m2 <= 1e-24 * mu * mu {
        return None;
    }
    let g1 = m3 / libm::pow(m2, 1.5);
    let nf = n as f64;
    Some(libm::sqrt(nf * (nf - 1.0)) / (nf - 2.0) * g1)
}

/// Largest peak-to-trough fall of the cumulative return curve, which starts at 0.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let (mut level, mut peak, mut mdd) = (0.0f64, 0.0f64, 0.0f64);
    for r in returns {
        level += r;
        peak = peak.max(level);
        mdd = mdd.max(peak - level);
    }
    mdd
}

/// Sums returns by calendar month.
pub fn monthly_returns(dates: &[Date], returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut key = None;
    for (d, r) in dates.iter().zip(returns) {
        if key == Some(d.month_key()) {
            *out.last_mut().unwrap() += r;
        } else {
            key = Some(d.month_key());
            out.push(*r);
        }
    }
    out
}

/// Metrics for a net return series.
pub fn performance_metrics(dates: &[Date], returns: &[f64]) -> Result<PerformanceReport> {
    performance_with_costs(dates, returns, &vec![0.0; returns.len()])
}

/// Metrics where net return is `gross − cost` per day.
pub fn performance_with_costs(dates: &[Date], gross: &[f64], cost: &[f64]) -> Result<PerformanceReport> {
    let n = gross.len();
    if cost.len() != n {
        return Err(Error::LengthMismatch { left: n, right: cost.len() });
    }
    if dates.len() != n {
        return Err(Error::LengthMismatch { left: dates.len(), right: n });
    }
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if gross.iter().chain(cost).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("returns"));
    }
    let net: Vec<f64> = gross.iter().zip(cost).map(|(g, c)| g - c).collect();
    let net_return = mean(&net) * TRADING_DAYS;
    let vol = sample_std(&net) * libm::sqrt(TRADING_DAYS);
    let downside = libm::sqrt(net.iter().map(|r| r.min(0.0) * r.min(0.0)).sum::<f64>() / n as f64)
        * libm::sqrt(TRADING_DAYS);
    let mdd = max_drawdown(&net);
    let wins: Vec<f64> = net.iter().copied().filter(|r| *r > 0.0).collect();
    let losses: Vec<f64> = net.iter().copied().filter(|r| *r < 0.0).collect();
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    Ok(PerformanceReport {
        n_days: n,
        gross_return: mean(gross) * TRADING_DAYS,
        net_return,
        transaction_cost: mean(cost) * TRADING_DAYS,
        vol,
        sharpe: ratio(net_return, vol),
        downside_deviation: downside,
        mdd,
        sortino: ratio(net_return, downside),
        calmar: ratio(net_return, mdd),
        skewness: skewness(&monthly_returns(dates, &net)),
        hit_rate: wins.len() as f64 / n as f64,
        avg_profit_over_avg_loss: if wins.is_empty() || losses.is_empty() {
            None
        } else {
            Some(mean(&wins) / libm::fabs(mean(&losses)))
        },
    })
}

/// Long and short halves of a portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct LongShortSplit {
    pub long_returns: Vec<f64>,
    pub short_returns: Vec<f64>,
    /// `None` when no market-day was attributed to the side.
    pub long: Option<PerformanceReport>,
    pub short: Option<PerformanceReport>,
}

/// Attributes each market-day's pnl to the side of the position that earned
/// it, `X[t−2]`. When that is zero the day's pnl is pure cost and follows
/// `X[t−1]`, then `X[t]`, so long plus short equals total net exactly.
pub fn long_short_split(positions: &Matrix, frame: &PnlFrame) -> Result<LongShortSplit> {
    let (t_len, m) = (frame.gross.rows(), frame.gross.cols());
    check_shape("positions", positions, t_len, m)?;
    let mut gross = [vec![0.0; t_len], vec![0.0; t_len]];
    let mut cost = [vec![0.0; t_len], vec![0.0; t_len]];
    let mut used = [false, false];
    for t in 0..t_len {
        for j in 0..m {
            let key = [2usize, 1, 0]
                .iter()
                .filter(|&&lag| t >= lag)
                .map(|&lag| positions[(t - lag, j)])
                .find(|x| *x != 0.0);
            let side = match key {
                Some(x) if x > 0.0 => 0,
                Some(_) => 1,
                None => continue,
            };
            used[side] = true;
            gross[side][t] += frame.gross[(t, j)] / frame.gamma;
            cost[side][t] += frame.cost[(t, j)] / frame.gamma;
        }
    }
    let side_report = |s: usize| -> Result<Option<PerformanceReport>> {
        if used[s] {
            performance_with_costs(&frame.dates, &gross[s], &cost[s]).map(Some)
        } else {
            Ok(None)
        }
    };
    let net = |s: usize| gross[s].iter().zip(&cost[s]).map(|(g, c)| g - c).collect::<Vec<f64>>();
    Ok(LongShortSplit { long_returns: net(0), short_returns: net(1), long: side_report(0)?, short: side_report(1)? })
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa > 0.0 && sbb > 0.0 {
        Some((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diversification {
    pub correlation: Option<f64>,
    pub sign_agreement: f64,
    /// Annualised mean of `a − b` over opposing days.
    pub opposing_day_gain: Option<f64>,
    pub opposing_days: usize,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Compares two models run on the same panel. A day is opposing when the
/// positions that earned it, two rows earlier, have opposite nonzero signs
/// in at least one market.
pub fn diversification(
    returns_a: &[f64],
    returns_b: &[f64],
    positions_a: &Matrix,
    positions_b: &Matrix,
) -> Result<Diversification> {
    let t_len = returns_a.len();
    if returns_b.len() != t_len {
        return Err(Error::LengthMismatch { left: t_len, right: returns_b.len() });
    }
    check_shape("positions a", positions_a, t_len, positions_a.cols())?;
    check_shape("positions b", positions_b, t_len, positions_a.cols())?;
    let cells = positions_a.as_slice().len();
    let agree = positions_a.as_slice().iter().zip(positions_b.as_slice()).filter(|(a, b)| sign(**a) == sign(**b)).count();
    let mut diffs = Vec::new();
    for t in 2..t_len {
        let opposing = positions_a
            .row(t - 2)
            .iter()
            .zip(positions_b.row(t - 2))
            .any(|(a, b)| sign(*a) * sign(*b) == -1);
        if opposing {
            diffs.push(returns_a[t] - returns_b[t]);
        }
    }
    Ok(Diversification {
        correlation: pearson(returns_a, returns_b),
        sign_agreement: if cells == 0 { 1.0 } else { agree as f64 / cells as f64 },
        opposing_day_gain: if diffs.is_empty() { None } else { Some(mean(&diffs) * TRADING_DAYS) },
        opposing_days: diffs.len(),
    })
}

/// One day, one and two weeks, one, two, three and six months, one year.
pub const SKEW_HORIZONS: [usize; 8] = [1, 5, 10, 21, 42, 63, 126, 252];

/// Skewness of overlapping `h`-day return sums for each horizon.
pub fn horizon_skewness(returns: &[f64], horizons: &[usize]) -> Vec<(usize, Option<f64>)> {
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || returns.len() < h {
                return (h, None);
            }
            let mut sums = Vec::with_capacity(returns.len() - h + 1);
            let mut acc: f64 = returns[..h].iter().sum();
            sums.push(acc);
            for t in h..returns.len() {
                acc += returns[t] - returns[t - h];
                sums.push(acc);
            }
            (h, skewness(&sums))
        })
        .collect()
}
