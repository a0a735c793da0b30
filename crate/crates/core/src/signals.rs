//! Trend oscillators, network momentum features and position sizing.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Date, Error, Matrix, Result, TRADING_DAYS};

/// Oscillator speeds `k`.
pub const SPEEDS: [u32; 6] = [1, 2, 3, 4, 5, 6];
/// Ratio between the slow and fast smoothing horizons.
pub const DEFAULT_SLOW_RATIO: f64 = 3.0;
/// Response function width.
pub const DEFAULT_LAMBDA: f64 = core::f64::consts::SQRT_2;
/// Annual portfolio volatility target.
pub const DEFAULT_SIGMA_TARGET: f64 = 0.10;

/// Exponentially weighted moving average with smoothing weight `alpha` on the
/// newest value, seeded at the first defined value. `NaN` inputs produce `NaN`
/// and leave the state unchanged.
pub fn ewma(series: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; series.len()];
    let mut state: Option<f64> = None;
    for (t, &x) in series.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        let s = match state {
            None => x,
            Some(prev) => prev + alpha * (x - prev),
        };
        state = Some(s);
        out[t] = s;
    }
    out
}

/// Fast minus slow EWMA of a volatility-scaled price, with smoothing
/// weights `2^-k` and `1 / (slow_ratio · 2^k)`.
pub fn oscillator(scaled_price: &[f64], k: u32, slow_ratio: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("speed must be >= 1".into()));
    }
    if !(slow_ratio > 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("slow ratio must be > 1, got {slow_ratio}")));
    }
    let scale = libm::ldexp(1.0, k as i32);
    let fast = ewma(scaled_price, 1.0 / scale);
    let slow = ewma(scaled_price, 1.0 / (slow_ratio * scale));
    Ok(fast.iter().zip(&slow).map(|(f, s)| f - s).collect())
}

/// Oscillators for every market and speed.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorSet {
    pub speeds: Vec<u32>,
    pub slow_ratio: f64,
    /// One `T × M` matrix per speed.
    pub values: Vec<Matrix>,
}

impl OscillatorSet {
    pub fn compute(scaled_prices: &Matrix, speeds: &[u32], slow_ratio: f64) -> Result<Self> {
        let mut values = Vec::with_capacity(speeds.len());
        for &k in speeds {
            let mut mat = Matrix::undefined(scaled_prices.rows(), scaled_prices.cols());
            for m in 0..scaled_prices.cols() {
                mat.set_column(m, &oscillator(&scaled_prices.column_vec(m), k, slow_ratio)?);
            }
            values.push(mat);
        }
        Ok(Self { speeds: speeds.to_vec(), slow_ratio, values })
    }

    /// `M × K` feature matrix on row `t`.
    pub fn at(&self, t: usize) -> Matrix {
        let m = self.values.first().map_or(0, |v| v.cols());
        let mut out = Matrix::zeros(m, self.speeds.len());
        for (k, v) in self.values.iter().enumerate() {
            for j in 0..m {
                out[(j, k)] = v[(t, j)];
            }
        }
        out
    }
}

/// Network momentum: each market's feature is the edge-weighted sum of its
/// neighbours' features, `R̃ = Ã · R`.
pub fn network_feature(features: &Matrix, network: &Matrix) -> Result<Matrix> {
    if !network.is_square() || network.cols() != features.rows() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "network is {}x{}, features have {} markets",
            network.rows(),
            network.cols(),
            features.rows()
        )));
    }
    Ok(network.matmul(features))
}

/// `(1 + 2λ²)^{3/4}`: makes `r(X)` unit-variance for standard normal `X`.
pub fn response_constant(lambda: f64) -> f64 {
    libm::pow(1.0 + 2.0 * lambda * lambda, 0.75)
}

/// Reverting sigmoid `c_λ · x · exp(−λ² x² / 2)`.
pub fn response(x: f64, lambda: f64) -> f64 {
    response_constant(lambda) * x * libm::exp(-lambda * lambda * x * x / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositionParams {
    /// Notional AUM in USD.
    pub gamma: f64,
    pub sigma_target: f64,
    pub lambda: f64,
}

impl Default for PositionParams {
    fn default() -> Self {
        Self { gamma: 100_000_000.0, sigma_target: DEFAULT_SIGMA_TARGET, lambda: DEFAULT_LAMBDA }
    }
}

/// Desired positions in lots for one date.
///
/// `features` is `M × K`. Markets whose volatility or any feature is
/// undefined get a zero position.
pub fn position_signal(
    features: &Matrix,
    vol: &[f64],
    point_value: &[f64],
    fx: &[f64],
    params: &PositionParams,
) -> Result<Vec<f64>> {
    let (m, k) = (features.rows(), features.cols());
    if k == 0 {
        return Err(Error::InvalidParameter("at least one speed is required".into()));
    }
    if vol.len() != m || point_value.len() != m || fx.len() != m {
        return Err(Error::DimensionMismatch("risk inputs do not match market count".into()));
    }
    let daily_risk = params.gamma * params.sigma_target / libm::sqrt(TRADING_DAYS);
    let mut out = vec![0.0; m];
    for j in 0..m {
        let row = features.row(j);
        if vol[j].is_nan() || row.iter().any(|f| f.is_nan()) {
            continue;
        }
        if !(vol[j] > 0.0 && point_value[j] > 0.0 && fx[j] > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "market column {j}: non-positive risk denominator"
            )));
        }
        let signal = row.iter().map(|f| response(*f, params.lambda)).sum::<f64>() / k as f64;
        out[j] = signal / m as f64 / (point_value[j] * fx[j] * vol[j]) * daily_risk;
    }
    Ok(out)
}

/// Features and resulting positions of one date.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub date: Date,
    /// `M × K`.
    pub features: Matrix,
    pub positions: Vec<f64>,
    pub gamma: f64,
    pub sigma_target: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn oscillator_constant_is_zero() {
        let p = vec![4.0; 50];
        for k in SPEEDS {
            assert!(oscillator(&p, k, 3.0).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn oscillator_positive_on_ramp() {
        let p: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        for k in SPEEDS {
            let r = oscillator(&p, k, 3.0).unwrap();
            assert!(r[1..].iter().all(|v| *v > 0.0), "k={k}");
        }
    }

    #[test]
    fn faster_speed_reverts_sooner_after_step() {
        let mut p = vec![0.0; 20];
        p.extend(vec![1.0; 2000]);
        // Rows from the step until the oscillator falls below half its peak.
        let half_life = |k| {
            let r = oscillator(&p, k, 3.0).unwrap();
            let (peak_at, peak) = r.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
            r[peak_at..].iter().position(|v| *v < peak / 2.0).unwrap() + peak_at - 20
        };
        let lives: Vec<usize> = SPEEDS.iter().map(|k| half_life(*k)).collect();
        assert!(lives.windows(2).all(|w| w[0] < w[1]), "{lives:?}");
    }

    #[test]
    fn oscillator_rejects_bad_params() {
        assert!(oscillator(&[1.0], 0, 3.0).is_err());
        assert!(oscillator(&[1.0], 1, 1.0).is_err());
    }

    #[test]
    fn network_feature_examples() {
        let r = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let swap = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let nf = network_feature(&r, &swap).unwrap();
        assert_eq!(nf.row(0), r.row(1));
        assert_eq!(nf.row(1), r.row(0));
        assert_eq!(network_feature(&r, &Matrix::zeros(2, 2)).unwrap(), Matrix::zeros(2, 2));
        assert_eq!(network_feature(&r.scale(2.5), &swap).unwrap(), nf.scale(2.5));
        assert!(network_feature(&r, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn response_shape() {
        let l = DEFAULT_LAMBDA;
        assert_eq!(response(0.0, l), 0.0);
        assert_eq!(response(-0.3, l), -response(0.3, l));
        let peak = 1.0 / l;
        assert!(response(peak, l) > response(peak - 1e-4, l));
        assert!(response(peak, l) > response(peak + 1e-4, l));
        assert_relative_eq!(response_constant(l), libm::pow(5.0, 0.75), max_relative = 1e-15);
    }

    #[test]
    fn position_examples() {
        let p = PositionParams::default();
        let feats = Matrix::from_rows(&[[0.3, -0.1], [0.5, 0.2]]);
        let vol = [2.0, 1.0];
        let pv = [10.0, 50.0];
        let fx = [1.0, 1.2];
        let x = position_signal(&feats, &vol, &pv, &fx, &p).unwrap();
        let zero = position_signal(&Matrix::zeros(2, 2), &vol, &pv, &fx, &p).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        let double = PositionParams { gamma: 2.0 * p.gamma, ..p };
        let x2 = position_signal(&feats, &vol, &pv, &fx, &double).unwrap();
        assert_relative_eq!(x2[0], 2.0 * x[0], max_relative = 1e-15);
        let xv = position_signal(&feats, &[4.0, 1.0], &pv, &fx, &p).unwrap();
        assert_relative_eq!(xv[0], 0.5 * x[0], max_relative = 1e-15);
        assert_eq!(xv[1], x[1]);

        // Hand evaluation for market 0.
        let sig = (response(0.3, p.lambda) + response(-0.1, p.lambda)) / 2.0;
        let want = sig / 2.0 / (10.0 * 1.0 * 2.0) * p.gamma * 0.10 / 252f64.sqrt();
        assert_relative_eq!(x[0], want, max_relative = 1e-14);
    }

    #[test]
    fn position_undefined_and_errors() {
        let p = PositionParams::default();
        let feats = Matrix::from_rows(&[[f64::NAN], [0.5]]);
        let x = position_signal(&feats, &[1.0, f64::NAN], &[1.0, 1.0], &[1.0, 1.0], &p).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        let feats = Matrix::from_rows(&[[0.5]]);
        assert!(position_signal(&feats, &[0.0], &[1.0], &[1.0], &p).is_err());
        assert!(position_signal(&feats, &[1.0], &[-1.0], &[1.0], &p).is_err());
    }
}
