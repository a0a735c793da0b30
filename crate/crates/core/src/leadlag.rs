//! Pairwise lead-lag detection.
//!
//! Two families of detectors are provided:
//!
//! * the discrete Lévy area of the two-dimensional path formed by a pair of
//!   return series, whose sign says which coordinate moves first;
//! * dynamic time warping (classical, derivative, shape and shape-derivative
//!   variants), from whose optimal warping path the lag is read off as the
//!   most frequent index offset `j − i`.
//!
//! Scores are assembled into skew-symmetric lead-lag matrices where a positive
//! entry `(i, j)` means market `i` leads market `j`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Date, Error, Matrix, Result, EPS_VOL};

/// Lead-lag detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Detector {
    Levy,
    Dtw,
    Ddtw,
    Sdtw,
    Sddtw,
}

impl Detector {
    pub const ALL: [Detector; 5] =
        [Detector::Dtw, Detector::Ddtw, Detector::Sdtw, Detector::Sddtw, Detector::Levy];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Levy => "LEVY",
            Detector::Dtw => "DTW",
            Detector::Ddtw => "DDTW",
            Detector::Sdtw => "SDTW",
            Detector::Sddtw => "SDDTW",
        }
    }

    pub fn uses_shape_descriptors(self) -> bool {
        matches!(self, Detector::Sdtw | Detector::Sddtw)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("unknown detector {s:?}")))
    }
}

/// Discrete Lévy area between two series viewed as the coordinates of a path.
///
/// The sum runs over every step `s = 1..n` (0-based), and the chord closing
/// the path from its last point back to its first is included, so the result
/// equals the signed (shoelace) area of the closed polyline. Positive when
/// moves in `x` are followed by moves in the same direction in `y`.
pub fn levy_area(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("levy_area input"));
    }
    let mut sum = 0.0;
    for s in 1..n {
        sum += -x[s] * y[s - 1] + y[s] * x[s - 1];
    }
    let (a, b) = (0, n - 1);
    sum += x[a] * (y[a] - y[b]) + y[a] * (x[b] - x[a]);
    Ok(0.5 * sum)
}

/// Z-normalisation with the population standard deviation.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    if !sd.is_finite() || sd <= EPS_VOL {
        return Err(Error::ZeroVariance);
    }
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Local derivative estimate: the mean of the left slope and the centred
/// slope at each interior point, with the end points copying their neighbours.
pub fn derivative_transform(x: &[f64]) -> Result<Vec<f64>> {
    let m = x.len();
    if m < 3 {
        return Err(Error::TooShort { needed: 3, got: m });
    }
    let mut out = vec![0.0; m];
    for n in 1..m - 1 {
        out[n] = ((x[n] - x[n - 1]) + (x[n + 1] - x[n - 1]) / 2.0) / 2.0;
    }
    out[0] = out[1];
    out[m - 1] = out[m - 2];
    Ok(out)
}

/// One descriptor of length `l` per point of a base series, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptors {
    pub base_length: usize,
    pub descriptor_length: usize,
    pub vectors: Vec<f64>,
}

impl ShapeDescriptors {
    pub fn vector(&self, i: usize) -> &[f64] {
        let l = self.descriptor_length;
        &self.vectors[i * l..(i + 1) * l]
    }
}

/// Descriptor `i` holds the `l` values centred on point `i`, with values past
/// either end replicated from the edge. With `derivative` set, each window is
/// passed through [`derivative_transform`].
pub fn shape_descriptors(x: &[f64], l: usize, derivative: bool) -> Result<ShapeDescriptors> {
    if l < 3 || l % 2 == 0 {
        return Err(Error::InvalidDescriptorLength(l));
    }
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let half = (l / 2) as isize;
    let last = x.len() as isize - 1;
    let mut vectors = Vec::with_capacity(x.len() * l);
    let mut window = vec![0.0; l];
    for i in 0..x.len() as isize {
        for (k, slot) in window.iter_mut().enumerate() {
            let idx = (i - half + k as isize).clamp(0, last);
            *slot = x[idx as usize];
        }
        if derivative {
            vectors.extend(derivative_transform(&window)?);
        } else {
            vectors.extend_from_slice(&window);
        }
    }
    Ok(ShapeDescriptors { base_length: x.len(), descriptor_length: l, vectors })
}

/// An optimal alignment between two sequences. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpingPath {
    /// Checks the boundary, monotonicity, step-size and length constraints
    /// for sequences of lengths `m` and `n`.
    pub fn is_valid(&self, m: usize, n: usize) -> bool {
        let p = &self.pairs;
        if p.first() != Some(&(0, 0)) || p.last() != Some(&(m - 1, n - 1)) {
            return false;
        }
        if p.len() < m.max(n) || p.len() > m + n - 1 {
            return false;
        }
        p.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        })
    }

    /// Offsets `j − i` along the path.
    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        self.pairs.iter().map(|&(i, j)| j as i64 - i as i64)
    }
}

#[inline]
fn local_cost(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return libm::fabs(a[0] - b[0]);
    }
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Row-major accumulated cost matrix.
fn accumulate(m: usize, n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut acc = vec![0.0f64; m * n];
    let mut left = 0.0;
    for (j, cell) in acc[..n].iter_mut().enumerate() {
        left += cost(0, j);
        *cell = left;
    }
    for i in 1..m {
        let (done, rest) = acc.split_at_mut(i * n);
        let prev = &done[(i - 1) * n..];
        let cur = &mut rest[..n];
        let mut left = prev[0] + cost(i, 0);
        cur[0] = left;
        for j in 1..n {
            left = prev[j - 1].min(prev[j]).min(left) + cost(i, j);
            cur[j] = left;
        }
    }
    acc
}

/// Dependent multidimensional DTW with Euclidean local cost.
///
/// `a` and `b` are row-major sequences of `dim`-dimensional points. Among
/// equal-cost predecessors the backtrack prefers the diagonal step, then a
/// step in `a` only, then a step in `b` only.
pub fn dtw_align(a: &[f64], b: &[f64], dim: usize) -> Result<WarpingPath> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::DimensionMismatch(alloc::format!(
            "sequence lengths {} and {} are not multiples of dimension {dim}",
            a.len(),
            b.len()
        )));
    }
    let (m, n) = (a.len() / dim, b.len() / dim);
    if m == 0 || n == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dtw input"));
    }
    let acc = if dim == 1 {
        accumulate(m, n, |i, j| libm::fabs(a[i] - b[j]))
    } else {
        accumulate(m, n, |i, j| local_cost(&a[i * dim..(i + 1) * dim], &b[j * dim..(j + 1) * dim]))
    };

    let mut pairs = Vec::with_capacity(m + n);
    let (mut i, mut j) = (m - 1, n - 1);
    pairs.push((i, j));
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc[(i - 1) * n + j - 1];
            let up = acc[(i - 1) * n + j];
            let left = acc[i * n + j - 1];
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(WarpingPath { pairs, cost: acc[m * n - 1] })
}

/// Most frequent offset `j − i` along a warping path.
///
/// Ties go to the smallest absolute lag, then to the negative one.
pub fn warp_lag(path: &WarpingPath) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for d in path.offsets() {
        *counts.entry(d).or_default() += 1;
    }
    counts
        .into_iter()
        .min_by(|(la, ca), (lb, cb)| cb.cmp(ca).then(la.abs().cmp(&lb.abs())).then(la.cmp(lb)))
        .map_or(0, |(lag, _)| lag)
}

/// Lead-lag score of one ordered pair of already standardised windows.
/// Positive means `x` leads `y`.
pub fn pair_score(x: &[f64], y: &[f64], detector: Detector, descriptor_len: usize) -> Result<f64> {
    match detector {
        Detector::Levy => levy_area(x, y),
        Detector::Dtw => Ok(warp_lag(&dtw_align(x, y, 1)?) as f64),
        Detector::Ddtw => {
            let (dx, dy) = (derivative_transform(x)?, derivative_transform(y)?);
            Ok(warp_lag(&dtw_align(&dx, &dy, 1)?) as f64)
        }
        Detector::Sdtw | Detector::Sddtw => {
            let deriv = detector == Detector::Sddtw;
            let sx = shape_descriptors(x, descriptor_len, deriv)?;
            let sy = shape_descriptors(y, descriptor_len, deriv)?;
            Ok(warp_lag(&dtw_align(&sx.vectors, &sy.vectors, descriptor_len)?) as f64)
        }
    }
}

/// Scores the pair in an order fixed by the window values rather than by
/// column position, so the matrix does not depend on market order even where
/// the alignment tie-breaks are direction dependent.
fn oriented_score(x: &[f64], y: &[f64], detector: Detector, descriptor_len: usize) -> Result<f64> {
    let swapped = x.iter().zip(y).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()) == Some(core::cmp::Ordering::Greater);
    if swapped {
        Ok(-pair_score(y, x, detector, descriptor_len)?)
    } else {
        pair_score(x, y, detector, descriptor_len)
    }
}

/// Skew-symmetric matrix of pairwise scores for one date and lookback.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadLagMatrix {
    /// Row of the panel the window ends on.
    pub row: usize,
    pub date: Option<Date>,
    pub lookback: usize,
    pub detector: Detector,
    pub values: Matrix,
}

/// Builds the lead-lag matrix from the `lookback` rows of `scaled_deltas`
/// ending at row `t` (inclusive).
///
/// Each market's window is standardised once. A market whose window is
/// constant contributes zero scores (logged); if no pair can be scored the
/// call fails.
pub fn leadlag_matrix(
    scaled_deltas: &Matrix,
    t: usize,
    lookback: usize,
    detector: Detector,
    descriptor_len: usize,
) -> Result<LeadLagMatrix> {
    let m = scaled_deltas.cols();
    if lookback < 3 {
        return Err(Error::InvalidParameter(alloc::format!("lookback must be >= 3, got {lookback}")));
    }
    if t >= scaled_deltas.rows() || t + 1 < lookback {
        return Err(Error::InsufficientHistory { row: t, needed: lookback });
    }
    let start = t + 1 - lookback;
    let mut windows: Vec<Option<Vec<f64>>> = Vec::with_capacity(m);
    for j in 0..m {
        let w: Vec<f64> = (start..=t).map(|r| scaled_deltas[(r, j)]).collect();
        if w.iter().any(|v| v.is_nan()) {
            return Err(Error::InsufficientHistory { row: t, needed: lookback });
        }
        match standardize(&w) {
            Ok(s) => windows.push(Some(s)),
            Err(Error::ZeroVariance) => {
                log::warn!("row {t}: market column {j} has a constant window, pairs skipped");
                windows.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if m >= 2 && windows.iter().filter(|w| w.is_some()).count() < 2 {
        return Err(Error::ZeroVariance);
    }
    let mut values = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            if let (Some(x), Some(y)) = (&windows[i], &windows[j]) {
                let s = oriented_score(x, y, detector, descriptor_len)?;
                values[(i, j)] = s;
                values[(j, i)] = -s;
            }
        }
    }
    Ok(LeadLagMatrix { row: t, date: None, lookback, detector, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn levy_examples() {
        let x = [0.0, 1.0, 0.0];
        let y = [0.0, 0.0, 1.0];
        assert_eq!(levy_area(&x, &y).unwrap(), 0.5);
        assert_eq!(levy_area(&y, &x).unwrap(), -0.5);
        assert_eq!(levy_area(&x, &x).unwrap(), 0.0);
        assert!(matches!(levy_area(&x, &y[..2]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(levy_area(&x[..1], &y[..1]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn standardize_population_convention() {
        // mean 2, population sd sqrt(2/3)
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(z[0], -1.0 / sd, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[2], 1.0 / sd, epsilon = 1e-15);
        let again = standardize(&z).unwrap();
        for (a, b) in z.iter().zip(&again) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(standardize(&[4.0; 5]), Err(Error::ZeroVariance));
    }

    #[test]
    fn derivative_examples() {
        let d = derivative_transform(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(d, vec![1.25, 1.25, 1.25]);
        let ramp: Vec<f64> = (0..8).map(|i| 3.0 * i as f64 - 1.0).collect();
        assert!(derivative_transform(&ramp).unwrap().iter().all(|v| (*v - 3.0).abs() < 1e-12));
        assert!(derivative_transform(&[2.0; 6]).unwrap().iter().all(|v| *v == 0.0));
        assert!(derivative_transform(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn shape_descriptor_examples() {
        let s = shape_descriptors(&[1.0, 2.0, 3.0], 3, false).unwrap();
        assert_eq!(s.vector(0), &[1.0, 1.0, 2.0]);
        assert_eq!(s.vector(1), &[1.0, 2.0, 3.0]);
        assert_eq!(s.vector(2), &[2.0, 3.0, 3.0]);
        assert_eq!(shape_descriptors(&[1.0], 1, false), Err(Error::InvalidDescriptorLength(1)));
        assert_eq!(shape_descriptors(&[1.0], 4, false), Err(Error::InvalidDescriptorLength(4)));
        let c = shape_descriptors(&[7.0; 5], 5, false).unwrap();
        assert!(c.vectors.iter().all(|v| *v == 7.0));
        let cd = shape_descriptors(&[7.0; 5], 5, true).unwrap();
        assert!(cd.vectors.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dtw_identity_and_example() {
        let a = [1.0, 5.0, 2.0, 8.0];
        let p = dtw_align(&a, &a, 1).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);

        let p = dtw_align(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (1, 2), (2, 3)]);
        assert!(p.is_valid(3, 4));
    }

    #[test]
    fn dtw_dimension_mismatch() {
        assert!(matches!(dtw_align(&[1.0, 2.0, 3.0], &[1.0, 2.0], 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn warp_lag_examples() {
        let p = dtw_align(&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(p.offsets().collect::<Vec<_>>(), vec![0, 1, 1, 1, 0]);
        assert_eq!(warp_lag(&p), 1);

        let diag = WarpingPath { pairs: vec![(0, 0), (1, 1), (2, 2)], cost: 0.0 };
        assert_eq!(warp_lag(&diag), 0);
        // offsets {0, 0, 1, 1}: tie resolved to the smaller magnitude
        let tie = WarpingPath { pairs: vec![(0, 0), (1, 1), (1, 2), (2, 3)], cost: 0.0 };
        assert_eq!(warp_lag(&tie), 0);
        // offsets {-1, -1, 1, 1}: tie between opposite signs → negative
        let pm = WarpingPath { pairs: vec![(1, 0), (2, 1), (3, 4), (4, 5)], cost: 0.0 };
        assert_eq!(warp_lag(&pm), -1);
    }

    #[test]
    fn ddtw_ignores_level() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 50.0).collect();
        let (dx, dy) = (derivative_transform(&x).unwrap(), derivative_transform(&y).unwrap());
        assert_eq!(dtw_align(&dx, &dy, 1).unwrap().cost, 0.0);
    }

    #[test]
    fn leadlag_matrix_shift_by_one() {
        // Market 1 is market 0 delayed one day.
        let base: Vec<f64> = (0..40).map(|i| (((i * 7919) % 23) as f64 - 11.0) / 5.0).collect();
        let mut rows = Vec::new();
        for t in 1..40 {
            rows.push([base[t], base[t - 1]]);
        }
        let sd = Matrix::from_rows(&rows);
        for det in [Detector::Dtw, Detector::Sdtw, Detector::Levy] {
            let ll = leadlag_matrix(&sd, 38, 20, det, 3).unwrap();
            assert!(ll.values[(0, 1)] > 0.0, "{det}: {:?}", ll.values);
            assert_eq!(ll.values[(0, 1)], -ll.values[(1, 0)]);
            assert_eq!(ll.values[(0, 0)], 0.0);
        }
        let ll = leadlag_matrix(&sd, 38, 20, Detector::Dtw, 3).unwrap();
        assert_eq!(ll.values[(0, 1)], 1.0);
    }

    #[test]
    fn leadlag_matrix_errors() {
        let sd = Matrix::from_rows(&[[f64::NAN, 1.0], [1.0, 2.0], [2.0, 1.0], [0.0, 3.0]]);
        assert!(matches!(
            leadlag_matrix(&sd, 3, 4, Detector::Levy, 3),
            Err(Error::InsufficientHistory { .. })
        ));
        let flat = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(leadlag_matrix(&flat, 2, 3, Detector::Levy, 3), Err(Error::ZeroVariance));
    }
}
