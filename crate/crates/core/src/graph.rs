//! Sparse graph learning on lead-lag matrices.
//!
//! Rows of the signal matrix are node features. The learned adjacency `A`
//! minimises
//!
//! ```text
//! tr(Xᵀ (D − A) X) − α · 1ᵀ log(A 1) + β · ‖A‖²_F
//! ```
//!
//! over symmetric, non-negative, zero-diagonal matrices, with `D = diag(A 1)`.
//! The trace term equals `Σ_{i<j} A_ij ‖x_i − x_j‖²`, so the problem is solved
//! over the upper-triangular edge vector `w`, which makes symmetry and the
//! zero diagonal hold by construction and leaves only `w ≥ 0` to project on.
//!
//! The solver is a projected Newton method: edges held at zero take a scaled
//! gradient step, the others a Newton step, followed by an Armijo backtracking
//! search along the projected arc. The objective never increases between
//! iterates and every iterate keeps all degrees positive.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Edge weights below this are set to exactly zero after convergence.
pub const EDGE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphHyperParams {
    /// Log-barrier weight, `> 0`.
    pub alpha: f64,
    /// Frobenius weight, `>= 0`.
    pub beta: f64,
    pub max_iters: usize,
    /// Bound on both the relative KKT residual and the relative step.
    pub tol: f64,
}

impl Default for GraphHyperParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, max_iters: 20_000, tol: 1e-7 }
    }
}

impl GraphHyperParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("max_iters and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Final relative KKT residual.
    pub residual: f64,
    pub objective: f64,
    /// Objective after every accepted iterate (index 0 is the starting point),
    /// recorded only when requested.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedGraph {
    pub adjacency: Matrix,
    pub diagnostics: SolverDiagnostics,
}

/// Upper-triangular edge list `(i, j)`, `i < j`, in row-major order.
pub fn edge_list(m: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            e.push((i, j));
        }
    }
    e
}

/// `‖x_i − x_j‖²` for every edge of [`edge_list`].
pub fn pairwise_sq_distances(signal: &Matrix) -> Vec<f64> {
    edge_list(signal.rows())
        .into_iter()
        .map(|(i, j)| signal.row(i).iter().zip(signal.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect()
}

/// Objective evaluated directly on a full adjacency matrix via the trace form.
/// `+∞` when some degree is not positive.
pub fn graph_objective(adjacency: &Matrix, signal: &Matrix, alpha: f64, beta: f64) -> f64 {
    let m = adjacency.rows();
    let degrees = adjacency.row_sums();
    if degrees.iter().any(|d| *d <= 0.0) {
        return f64::INFINITY;
    }
    // Laplacian L = D − A, trace(Xᵀ L X) = Σ_k x_kᵀ L x_k over columns k.
    let mut trace = 0.0;
    for k in 0..signal.cols() {
        for i in 0..m {
            let mut lx = degrees[i] * signal[(i, k)];
            for j in 0..m {
                lx -= adjacency[(i, j)] * signal[(j, k)];
            }
            trace += signal[(i, k)] * lx;
        }
    }
    let barrier: f64 = degrees.iter().map(|d| libm::log(*d)).sum();
    let frob: f64 = adjacency.as_slice().iter().map(|a| a * a).sum();
    trace - alpha * barrier + beta * frob
}

/// Closed-form optimal edge weight of a two-node graph with squared row
/// distance `z`: `(−z + √(z² + 32αβ)) / 8β`, evaluated in the rationalised
/// form `4α / (z + √(z² + 32αβ))`, which avoids cancellation and covers `β = 0`.
pub fn two_node_weight(z: f64, alpha: f64, beta: f64) -> f64 {
    4.0 * alpha / (z + libm::sqrt(z * z + 32.0 * alpha * beta))
}

struct Problem<'a> {
    edges: &'a [(usize, usize)],
    z: &'a [f64],
    alpha: f64,
    beta: f64,
}

impl Problem<'_> {
    fn degrees(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|d| *d = 0.0);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            out[i] += w[k];
            out[j] += w[k];
        }
    }

    fn objective(&self, w: &[f64], deg: &[f64]) -> f64 {
        if deg.iter().any(|d| !(*d > 0.0)) {
            return f64::INFINITY;
        }
        let mut f = 0.0;
        for k in 0..w.len() {
            f += self.z[k] * w[k] + 2.0 * self.beta * w[k] * w[k];
        }
        f - self.alpha * deg.iter().map(|d| libm::log(*d)).sum::<f64>()
    }

    /// `f(w_new) − f(w)` evaluated term by term, accurate to the size of the
    /// change rather than the size of `f`.
    fn objective_change(&self, w: &[f64], deg: &[f64], w_new: &[f64], deg_new: &[f64]) -> f64 {
        if deg_new.iter().any(|d| !(*d > 0.0)) {
            return f64::INFINITY;
        }
        let mut df = 0.0;
        for k in 0..w.len() {
            let d = w_new[k] - w[k];
            df += (self.z[k] + 2.0 * self.beta * (w_new[k] + w[k])) * d;
        }
        for (d0, d1) in deg.iter().zip(deg_new) {
            df -= self.alpha * libm::log1p((d1 - d0) / d0);
        }
        df
    }

    fn gradient(&self, w: &[f64], deg: &[f64], g: &mut [f64]) {
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            g[k] = self.z[k] + 4.0 * self.beta * w[k] - self.alpha * (1.0 / deg[i] + 1.0 / deg[j]);
        }
    }

    /// Direction for one projected Newton step. On free edges it solves
    /// `H_FF d = −g_F` with `H = 4β I + Bᵀ diag(α/d²) B` (`B` the node-edge
    /// incidence) through the `m × m` Woodbury system; pinned edges get a
    /// diagonally scaled gradient step.
    fn newton_direction(
        &self,
        w: &[f64],
        deg: &[f64],
        g: &[f64],
        free: &mut [bool],
        work: &mut NewtonWork,
        dir: &mut [f64],
    ) {
        let m = deg.len();
        let curv: Vec<f64> = deg.iter().map(|d| self.alpha / (d * d)).collect();
        let c = (4.0 * self.beta).max(1e-10 * curv.iter().fold(0.0, |a: f64, b| a.max(*b)));
        let diag = |k: usize| {
            let (i, j) = self.edges[k];
            c + curv[i] + curv[j]
        };
        // Edges within a scaled-gradient step of zero, pushed outward, are pinned.
        let gap = (0..w.len()).map(|k| libm::fabs(w[k] - (w[k] - g[k] / diag(k)).max(0.0))).fold(0.0, f64::max);
        for k in 0..w.len() {
            free[k] = !(w[k] <= gap && g[k] > 0.0);
        }
        // (c · diag(d²/α) + B_F B_Fᵀ) y = B_F g_F
        let sys = &mut work.sys;
        let rhs = &mut work.rhs;
        sys.iter_mut().for_each(|v| *v = 0.0);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            sys[i * m + i] = c / curv[i];
        }
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if !free[k] {
                continue;
            }
            sys[i * m + i] += 1.0;
            sys[j * m + j] += 1.0;
            sys[i * m + j] += 1.0;
            sys[j * m + i] += 1.0;
            rhs[i] += g[k];
            rhs[j] += g[k];
        }
        let solved = cholesky_solve(sys, rhs, m);
        let mut descent = 0.0;
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            dir[k] = if !free[k] {
                -g[k] / diag(k)
            } else if solved {
                -(g[k] - rhs[i] - rhs[j]) / c
            } else {
                -g[k] / diag(k)
            };
            if free[k] {
                descent += g[k] * dir[k];
            }
        }
        if !(descent < 0.0) {
            for k in 0..dir.len() {
                if free[k] {
                    dir[k] = -g[k] / diag(k);
                }
            }
        }
    }

    /// Largest per-edge KKT violation, each relative to the magnitude of the
    /// terms making up that edge's gradient.
    fn kkt_residual(&self, w: &[f64], deg: &[f64], g: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            let scale = self.z[k] + 4.0 * self.beta * w[k] + self.alpha * (1.0 / deg[i] + 1.0 / deg[j]);
            let viol = if w[k] > 0.0 { libm::fabs(g[k]) } else { (-g[k]).max(0.0) };
            r = r.max(viol / scale.max(f64::MIN_POSITIVE));
        }
        r
    }
}

struct NewtonWork {
    sys: Vec<f64>,
    rhs: Vec<f64>,
}

impl NewtonWork {
    fn new(m: usize) -> Self {
        Self { sys: vec![0.0; m * m], rhs: vec![0.0; m] }
    }
}

/// In-place Cholesky solve of the symmetric positive definite `a x = b`;
/// `b` receives `x`. Returns false if `a` is not numerically positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    true
}

/// Learns the adjacency matrix for one signal matrix (rows are nodes).
pub fn learn_graph(signal: &Matrix, params: &GraphHyperParams) -> Result<LearnedGraph> {
    solve(signal, params, false)
}

/// As [`learn_graph`], also recording the objective after every iterate.
pub fn learn_graph_traced(signal: &Matrix, params: &GraphHyperParams) -> Result<LearnedGraph> {
    solve(signal, params, true)
}

fn solve(signal: &Matrix, params: &GraphHyperParams, record: bool) -> Result<LearnedGraph> {
    params.validate()?;
    let m = signal.rows();
    if m < 2 {
        return Err(Error::TooShort { needed: 2, got: m });
    }
    if signal.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("graph signal"));
    }
    let edges = edge_list(m);
    let z = pairwise_sq_distances(signal);
    let prob = Problem { edges: &edges, z: &z, alpha: params.alpha, beta: params.beta };
    let ne = edges.len();

    // Start from the per-edge two-node optimum; it is positive on every edge.
    let mut w: Vec<f64> = z
        .iter()
        .map(|&zk| {
            let a = two_node_weight(zk, params.alpha, params.beta);
            if a.is_finite() && a > 0.0 { a } else { 1.0 }
        })
        .collect();
    let mut deg = vec![0.0; m];
    prob.degrees(&w, &mut deg);
    let mut f = prob.objective(&w, &deg);
    let mut g = vec![0.0; ne];
    prob.gradient(&w, &deg, &mut g);

    let mut trace = Vec::new();
    if record {
        trace.push(f);
    }

    let mut w_new = vec![0.0; ne];
    let mut deg_new = vec![0.0; m];
    let mut dir = vec![0.0; ne];
    let mut free = vec![true; ne];
    let mut newton = NewtonWork::new(m);
    let mut residual = prob.kkt_residual(&w, &deg, &g);
    let mut iterations = 0;
    let mut rel_change = f64::INFINITY;

    while iterations < params.max_iters {
        if residual <= params.tol && rel_change <= params.tol {
            break;
        }
        iterations += 1;

        prob.newton_direction(&w, &deg, &g, &mut free, &mut newton, &mut dir);

        let mut accepted = false;
        let mut f_new = f;
        let mut s = 1.0;
        for _ in 0..100 {
            for k in 0..ne {
                w_new[k] = (w[k] + s * dir[k]).max(0.0);
            }
            prob.degrees(&w_new, &mut deg_new);
            let df = prob.objective_change(&w, &deg, &w_new, &deg_new);
            let lin: f64 = (0..ne).map(|k| g[k] * (w_new[k] - w[k])).sum();
            if df.is_finite() && df <= 1e-4 * lin && df <= 0.0 {
                f_new = prob.objective(&w_new, &deg_new);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // No representable decrease left: the residual decides whether
            // this is the optimum.
            break;
        }

        let (mut wmax, mut smax) = (0.0f64, 0.0f64);
        for k in 0..ne {
            wmax = wmax.max(w_new[k]);
            smax = smax.max(libm::fabs(w_new[k] - w[k]));
        }
        rel_change = smax / wmax.max(1e-300);

        core::mem::swap(&mut w, &mut w_new);
        core::mem::swap(&mut deg, &mut deg_new);
        f = f_new;
        prob.gradient(&w, &deg, &mut g);
        if record {
            trace.push(f);
        }
        residual = prob.kkt_residual(&w, &deg, &g);
    }

    if residual > params.tol {
        return Err(Error::NonConvergence { iterations, residual });
    }

    for v in w.iter_mut() {
        if *v < EDGE_FLOOR {
            *v = 0.0;
        }
    }
    let mut adjacency = Matrix::zeros(m, m);
    for (k, &(i, j)) in edges.iter().enumerate() {
        adjacency[(i, j)] = w[k];
        adjacency[(j, i)] = w[k];
    }
    prob.degrees(&w, &mut deg);
    if let Some(node) = deg.iter().position(|d| !(*d > EDGE_FLOOR)) {
        return Err(Error::IsolatedNode(node));
    }
    let objective = prob.objective(&w, &deg);
    log::debug!("graph solve: {iterations} iterations, residual {residual:e}, objective {objective}");
    Ok(LearnedGraph {
        adjacency,
        diagnostics: SolverDiagnostics { iterations, residual, objective, trace },
    })
}

/// Symmetric degree normalisation `D^{-1/2} A D^{-1/2}`.
pub fn normalize_graph(adjacency: &Matrix) -> Result<Matrix> {
    let deg = adjacency.row_sums();
    if let Some(node) = deg.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::IsolatedNode(node));
    }
    let m = adjacency.rows();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = adjacency[(i, j)] / libm::sqrt(deg[i] * deg[j]);
        }
    }
    Ok(out)
}

/// Normalised network momentum matrix for one date.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrix {
    pub row: usize,
    /// Normalised adjacency.
    pub values: Matrix,
    /// Ensemble-averaged adjacency before normalisation.
    pub raw: Matrix,
    /// Row sums of `raw`.
    pub degrees: Vec<f64>,
}

/// Averages the adjacency learned from each signal matrix, then normalises.
/// With a single signal this is plain learn-then-normalise.
pub fn ensemble_network(signals: &[&Matrix], params: &GraphHyperParams) -> Result<NetworkMatrix> {
    let Some(first) = signals.first() else {
        return Err(Error::InvalidParameter("ensemble needs at least one lead-lag matrix".into()));
    };
    let m = first.rows();
    let mut sum = Matrix::zeros(m, m);
    for s in signals {
        if s.rows() != m {
            return Err(Error::DimensionMismatch(alloc::format!(
                "lead-lag matrices have {} and {} markets",
                m,
                s.rows()
            )));
        }
        sum = sum.add(&learn_graph(s, params)?.adjacency);
    }
    let raw = sum.scale(1.0 / signals.len() as f64);
    let values = normalize_graph(&raw)?;
    let degrees = raw.row_sums();
    Ok(NetworkMatrix { row: 0, values, raw, degrees })
}
