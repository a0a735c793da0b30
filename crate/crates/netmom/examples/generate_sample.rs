//! Writes synthetic prices for the markets in `<dir>/contracts.csv`.
//!
//! Within each sector the first listed market leads the others by one day.
//! The crude oil market is written as individual quarterly contracts with
//! roll dates to exercise backadjustment; every other market is continuous.
//!
//! ```text
//! cargo run --release -p netmom --example generate_sample -- crates/netmom/sample [n_dates] [seed]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use netmom::data::{load_contract_specs, write_prices};
use netmom_core::date::weekday_calendar;
use netmom_core::{Date, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const CONTRACT_MARKET: &str = "future_cl1_comdty";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "crates/netmom/sample".into()));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(11);

    let specs = load_contract_specs(&dir.join("contracts.csv"))?;
    let m = specs.len();
    let dates = weekday_calendar(Date::new(2015, 1, 5).expect("valid date"), n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let mut leader_of = vec![None; m];
    let mut first_in_sector = BTreeMap::new();
    for (j, s) in specs.iter().enumerate() {
        match first_in_sector.get(&s.sector) {
            Some(&l) => leader_of[j] = Some(l),
            None => {
                first_in_sector.insert(s.sector, j);
            }
        }
    }

    // persistent drift plus noise, followers pick up yesterday's leader move
    let mut shocks = Matrix::zeros(n, m);
    let mut trend = vec![0.0; m];
    for t in 0..n {
        for j in 0..m {
            trend[j] = 0.99 * trend[j] + 0.15 * normal();
            shocks[(t, j)] = 0.1 * trend[j] + normal();
        }
        for j in 0..m {
            if let (Some(l), true) = (leader_of[j], t > 0) {
                shocks[(t, j)] = 0.6 * shocks[(t - 1, l)] + 0.6 * shocks[(t, j)];
            }
        }
    }
    let mut prices = Matrix::zeros(n, m);
    for j in 0..m {
        let level = 1000.0 * (1 + j % 7) as f64;
        let step = 0.01 * level;
        let mut p = level;
        for t in 0..n {
            p += step * shocks[(t, j)];
            prices[(t, j)] = p;
        }
    }

    let ids: Vec<String> = specs.iter().map(|s| s.market_id.clone()).collect();
    let cl = ids.iter().position(|id| id == CONTRACT_MARKET);
    let continuous: Vec<usize> = (0..m).filter(|j| Some(*j) != cl).collect();
    let mut cont = Matrix::zeros(n, continuous.len());
    for (k, &j) in continuous.iter().enumerate() {
        cont.set_column(k, &prices.column_vec(j));
    }
    let cont_ids: Vec<String> = continuous.iter().map(|j| ids[*j].clone()).collect();
    write_prices(&dir.join("prices.csv"), &dates, &cont_ids, &cont)?;

    if let Some(j) = cl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut out = String::from("date,market,price,contract,roll\n");
        let roll_every = 63;
        let mut start = 0;
        let mut k = 0;
        while start < n - 1 {
            let roll = (start + roll_every).min(n - 1);
            let front = roll == n - 1;
            let contango: f64 = rng.random_range(-2.0..2.0);
            let name = format!("CL{k:02}");
            let roll_field = if front { String::new() } else { dates[roll].to_string() };
            let end = if front { n - 1 } else { roll };
            for t in start..=end {
                writeln!(out, "{},{CONTRACT_MARKET},{},{name},{roll_field}", dates[t], prices[(t, j)] + contango)?;
            }
            start = roll;
            k += 1;
        }
        std::fs::write(dir.join("prices_cl_contracts.csv"), out)?;
    }
    println!("wrote {n} dates for {m} markets to {}", dir.display());
    Ok(())
}
