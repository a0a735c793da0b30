//! CSV readers for prices and contract metadata, and the panel they build.
//!
//! Price files have the header `date,market,price` with optional
//! `contract,roll` columns. Without them each market is taken to be an
//! already continuous series. With them every `(market, contract)` group is
//! one individual contract, stitched with Panama backadjustment; `roll` is the
//! date on which the next contract takes over (empty for the front contract).
//!
//! The contract file has the header `market,point_value,fx,half_spread,sector`.
//! `point_value` and `fx` are either numbers or paths to `date,rate` files,
//! relative to the contract file.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use netmom_core::market::{
    align, backadjust, CalendarPolicy, ContractSpec, MarketSeries, PricePanel, RateSeries, RawContractSeries,
    Sector,
};
use netmom_core::{Date, Matrix};

use crate::error::{AppError, AppResult};

struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> AppResult<Self> {
        let file = File::open(path).map_err(AppError::io(path))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file);
        let parse_err = |line: u64, message: String| AppError::Parse { path: path.to_path_buf(), line, message };
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let columns: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.to_ascii_lowercase(), i)).collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(parse_err(1, format!("missing column {col:?}")));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Self { path: path.to_path_buf(), columns, rows })
    }

    fn err(&self, line: u64, message: impl Into<String>) -> AppError {
        AppError::Parse { path: self.path.clone(), line, message: message.into() }
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.columns.get(col).and_then(|i| rec.get(*i)).filter(|s| !s.is_empty())
    }

    fn required<'r>(&self, line: u64, rec: &'r csv::StringRecord, col: &str) -> AppResult<&'r str> {
        self.field(rec, col).ok_or_else(|| self.err(line, format!("empty {col}")))
    }

    fn date(&self, line: u64, s: &str) -> AppResult<Date> {
        s.parse().map_err(|_| self.err(line, format!("malformed date {s:?}")))
    }

    fn number(&self, line: u64, col: &str, s: &str) -> AppResult<f64> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("non-numeric {col} {s:?}"))),
        }
    }
}

struct PriceRow {
    line: u64,
    date: Date,
    price: f64,
    contract: Option<String>,
    roll: Option<Date>,
}

fn read_prices(path: &Path, markets: &mut Vec<(String, Vec<(PathBuf, PriceRow)>)>) -> AppResult<()> {
    let table = Table::read(path, &["date", "market", "price"])?;
    let mut index: HashMap<String, usize> = markets.iter().enumerate().map(|(i, (m, _))| (m.clone(), i)).collect();
    for (line, rec) in &table.rows {
        let line = *line;
        let date = table.date(line, table.required(line, rec, "date")?)?;
        let market = table.required(line, rec, "market")?.to_string();
        let price = table.number(line, "price", table.required(line, rec, "price")?)?;
        let contract = table.field(rec, "contract").map(str::to_string);
        let roll = table.field(rec, "roll").map(|s| table.date(line, s)).transpose()?;
        let slot = *index.entry(market.clone()).or_insert_with(|| {
            markets.push((market, Vec::new()));
            markets.len() - 1
        });
        markets[slot].1.push((path.to_path_buf(), PriceRow { line, date, price, contract, roll }));
    }
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: String) -> AppError {
    AppError::Parse { path: path.to_path_buf(), line, message }
}

fn ascending(market: &str, rows: &[&(PathBuf, PriceRow)]) -> AppResult<()> {
    for w in rows.windows(2) {
        if w[1].1.date <= w[0].1.date {
            let (path, row) = w[1];
            return Err(parse_err(path, row.line, format!("{market}: date {} not after {}", row.date, w[0].1.date)));
        }
    }
    Ok(())
}

fn continuous_series(market: &str, rows: &[(PathBuf, PriceRow)]) -> AppResult<MarketSeries> {
    let with_contract = rows.iter().filter(|(_, r)| r.contract.is_some()).count();
    if with_contract == 0 {
        let refs: Vec<&(PathBuf, PriceRow)> = rows.iter().collect();
        ascending(market, &refs)?;
        return Ok(MarketSeries {
            market_id: market.to_string(),
            dates: rows.iter().map(|(_, r)| r.date).collect(),
            prices: rows.iter().map(|(_, r)| r.price).collect(),
        });
    }
    if with_contract != rows.len() {
        let (path, row) = rows.iter().find(|(_, r)| r.contract.is_none()).unwrap();
        return Err(parse_err(path, row.line, format!("{market}: contract column empty while other rows set it")));
    }

    let mut groups: Vec<(String, Vec<&(PathBuf, PriceRow)>)> = Vec::new();
    for entry in rows {
        let id = entry.1.contract.as_deref().unwrap();
        match groups.iter_mut().find(|(c, _)| c == id) {
            Some((_, g)) => g.push(entry),
            None => groups.push((id.to_string(), vec![entry])),
        }
    }
    let mut contracts = Vec::with_capacity(groups.len());
    for (id, g) in &groups {
        ascending(&format!("{market}/{id}"), g)?;
        let mut roll = None;
        for (path, r) in g {
            match (roll, r.roll) {
                (Some(a), Some(b)) if a != b => {
                    return Err(parse_err(path, r.line, format!("{market}/{id}: roll date {b} conflicts with {a}")))
                }
                (None, Some(b)) => roll = Some(b),
                _ => {}
            }
        }
        contracts.push(RawContractSeries {
            market_id: market.to_string(),
            contract_id: id.clone(),
            dates: g.iter().map(|(_, r)| r.date).collect(),
            prices: g.iter().map(|(_, r)| r.price).collect(),
            roll_date: roll,
        });
    }
    // expiry order: by roll date, the front contract (no roll) last
    contracts.sort_by_key(|c| (c.roll_date.is_none(), c.roll_date, c.dates.first().copied()));
    if contracts.iter().filter(|c| c.roll_date.is_none()).count() > 1 {
        return Err(AppError::Data(format!("{market}: more than one contract without a roll date")));
    }
    let (dates, prices) = backadjust(&contracts).map_err(AppError::core(format!("backadjusting {market}")))?;
    Ok(MarketSeries { market_id: market.to_string(), dates, prices })
}

/// Reads price files into one continuous series per market, in order of
/// first appearance.
pub fn load_market_series(paths: &[PathBuf]) -> AppResult<Vec<MarketSeries>> {
    let mut markets = Vec::new();
    for p in paths {
        read_prices(p, &mut markets)?;
    }
    markets.iter().map(|(m, rows)| continuous_series(m, rows)).collect()
}

fn rate_series(table: &Table, line: u64, col: &str, value: &str) -> AppResult<RateSeries> {
    if let Ok(v) = value.parse::<f64>() {
        if !(v.is_finite() && v > 0.0) {
            return Err(table.err(line, format!("{col} must be positive, got {value}")));
        }
        return Ok(RateSeries::Constant(v));
    }
    let path = table.path.parent().unwrap_or(Path::new(".")).join(value);
    let rates = Table::read(&path, &["date", "rate"])?;
    let mut obs = Vec::with_capacity(rates.rows.len());
    for (l, rec) in &rates.rows {
        let d = rates.date(*l, rates.required(*l, rec, "date")?)?;
        let r = rates.number(*l, "rate", rates.required(*l, rec, "rate")?)?;
        if r <= 0.0 {
            return Err(rates.err(*l, format!("rate must be positive, got {r}")));
        }
        if obs.last().is_some_and(|(prev, _)| d <= *prev) {
            return Err(rates.err(*l, format!("date {d} not ascending")));
        }
        obs.push((d, r));
    }
    if obs.is_empty() {
        return Err(rates.err(1, "no observations"));
    }
    Ok(RateSeries::Dated(obs))
}

pub fn load_contract_specs(path: &Path) -> AppResult<Vec<ContractSpec>> {
    let table = Table::read(path, &["market", "point_value", "fx", "half_spread", "sector"])?;
    let mut specs: Vec<ContractSpec> = Vec::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let market = table.required(line, rec, "market")?.to_string();
        if specs.iter().any(|s| s.market_id == market) {
            return Err(table.err(line, format!("duplicate market {market:?}")));
        }
        let point_value = rate_series(&table, line, "point_value", table.required(line, rec, "point_value")?)?;
        let fx_rate = rate_series(&table, line, "fx", table.required(line, rec, "fx")?)?;
        let half_spread = table.number(line, "half_spread", table.required(line, rec, "half_spread")?)?;
        if half_spread < 0.0 {
            return Err(table.err(line, format!("half_spread must be >= 0, got {half_spread}")));
        }
        let sector: Sector =
            table.required(line, rec, "sector")?.parse().map_err(|e: netmom_core::Error| table.err(line, e.to_string()))?;
        specs.push(ContractSpec { market_id: market, point_value, fx_rate, half_spread, sector });
    }
    Ok(specs)
}

/// Aligned panel of every priced market. Columns follow the contract file;
/// markets without prices are skipped.
pub fn load_panel(
    price_files: &[PathBuf],
    contract_file: &Path,
    policy: CalendarPolicy,
    vol_span: usize,
) -> AppResult<PricePanel> {
    let specs = load_contract_specs(contract_file)?;
    let series = load_market_series(price_files)?;
    for s in &series {
        if !specs.iter().any(|c| c.market_id == s.market_id) {
            return Err(AppError::Core {
                context: contract_file.display().to_string(),
                source: netmom_core::Error::UnknownMarket(s.market_id.clone()),
            });
        }
    }
    let mut ordered = Vec::new();
    let mut markets = Vec::new();
    for spec in specs {
        match series.iter().find(|s| s.market_id == spec.market_id) {
            Some(s) => {
                ordered.push(s.clone());
                markets.push(spec);
            }
            None => log::warn!("market {} has no prices and is skipped", spec.market_id),
        }
    }
    if ordered.is_empty() {
        return Err(AppError::Data("no markets with prices".into()));
    }
    let (dates, prices) = align(&ordered, policy).map_err(AppError::core("aligning markets"))?;
    if dates.len() < 2 {
        return Err(AppError::Data(format!("aligned calendar has {} dates", dates.len())));
    }
    PricePanel::with_span(dates, markets, prices, vol_span).map_err(AppError::core("building panel"))
}

/// Writes continuous prices as `date,market,price`.
pub fn write_prices(path: &Path, dates: &[Date], markets: &[String], prices: &Matrix) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| AppError::Data(format!("{}: {e}", path.display()));
    w.write_record(["date", "market", "price"]).map_err(wrap)?;
    for (m, id) in markets.iter().enumerate() {
        for (t, d) in dates.iter().enumerate() {
            w.write_record([d.to_string(), id.clone(), format!("{}", prices[(t, m)])]).map_err(wrap)?;
        }
    }
    w.flush().map_err(AppError::io(path))
}

/// Writes a contract file; dated series are not supported here.
pub fn write_contracts(path: &Path, specs: &[ContractSpec]) -> AppResult<()> {
    let mut f = File::create(path).map_err(AppError::io(path))?;
    let mut out = String::from("market,point_value,fx,half_spread,sector\n");
    for s in specs {
        let value = |r: &RateSeries| match r {
            RateSeries::Constant(v) => Ok(format!("{v}")),
            RateSeries::Dated(_) => Err(AppError::Data(format!("{}: dated series cannot be inlined", s.market_id))),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.market_id,
            value(&s.point_value)?,
            value(&s.fx_rate)?,
            s.half_spread,
            s.sector
        ));
    }
    f.write_all(out.as_bytes()).map_err(AppError::io(path))
}
