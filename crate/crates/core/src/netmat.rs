//! Connectivity matrices and the linear algebra the global-dynamics
//! arguments rest on.
//!
//! A connectivity matrix `L` is quasi-positive, irreducible and has zero
//! column sums: `L[i][j]` (for `i != j`) is the rate of movement from patch
//! `j` to patch `i`, and `L[i][i]` is minus the total rate of leaving patch
//! `i`. Such a matrix has a one-dimensional kernel spanned by a positive
//! vector `alpha` (the Perron vector), and `theta = 1 / alpha` turns
//! `x -> sum theta_i L_ij x_i x_j` into a negative semidefinite form that
//! vanishes exactly on multiples of `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-sum tolerance used by [`ConnectivityMatrix::new`].
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

/// Entries smaller than this in magnitude are structural zeros of the graph.
pub const STRUCTURAL_ZERO: f64 = 1e-15;

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from `n * n` row-major entries.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::BadShape {
                rows: n,
                cols: if n == 0 { data.len() } else { data.len() / n },
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::BadShape {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::from_row_major(n, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "vector length must match matrix size");
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + diag(diag)`.
    pub fn plus_diagonal(&self, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), self.n);
        let mut m = self.clone();
        for (i, d) in diag.iter().enumerate() {
            m.data[i * self.n + i] += d;
        }
        m
    }

    /// `self * diag(weights)`: column `j` scaled by `weights[j]`.
    pub fn scale_columns(&self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.n);
        let mut m = self.clone();
        for row in m.data.chunks_mut(self.n) {
            for (v, w) in row.iter_mut().zip(weights) {
                *v *= w;
            }
        }
        m
    }

    fn first_negative_off_diagonal(&self) -> Option<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| (i, j, self.get(i, j)))
            .find(|&(_, _, v)| v < 0.0)
    }
}

/// Validated quasi-positive, irreducible matrix with zero column sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityMatrix(SquareMatrix);

impl ConnectivityMatrix {
    /// Validates with [`DEFAULT_VALIDATION_TOL`].
    pub fn new(raw: SquareMatrix) -> Result<Self> {
        validate_connectivity(raw, DEFAULT_VALIDATION_TOL)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.mul_vec_into(x, out)
    }

    pub fn inf_norm(&self) -> f64 {
        self.0.inf_norm()
    }
}

/// Checks assumption (A1) and returns the validated matrix.
///
/// Off-diagonal entries below [`STRUCTURAL_ZERO`] in magnitude are set to
/// zero. Column sums within `tol` of zero are absorbed into the diagonal so
/// that the returned matrix has column sums that vanish to rounding.
pub fn validate_connectivity(raw: SquareMatrix, tol: f64) -> Result<ConnectivityMatrix> {
    let n = raw.n;
    if n < 2 {
        return Err(Error::BadShape { rows: n, cols: n });
    }
    let mut m = raw;
    for i in 0..n {
        for j in 0..n {
            let v = m.get(i, j);
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
            if i != j && v.abs() < STRUCTURAL_ZERO {
                m.set(i, j, 0.0);
            }
        }
    }
    if let Some((row, col, value)) = m.first_negative_off_diagonal() {
        return Err(Error::NegativeOffDiagonal { row, col, value });
    }
    for (col, sum) in m.col_sums().into_iter().enumerate() {
        if sum.abs() > tol {
            return Err(Error::ColumnSumNonzero { col, sum });
        }
    }
    for j in 0..n {
        let outflow: f64 = (0..n).filter(|&i| i != j).map(|i| m.get(i, j)).sum();
        m.set(j, j, -outflow);
    }
    if let Some(unreachable) = first_unreachable(&m) {
        return Err(Error::Reducible { unreachable });
    }
    Ok(ConnectivityMatrix(m))
}

/// Breadth-first search from node 0 over the positivity pattern, forward and
/// on the transposed graph. Returns a node missed by either search.
fn first_unreachable(m: &SquareMatrix) -> Option<usize> {
    let n = m.n;
    let edge = |from: usize, to: usize| from != to && m.get(to, from) > 0.0;
    for transposed in [false, true] {
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let linked = if transposed { edge(v, u) } else { edge(u, v) };
                if linked && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Some(missing);
        }
    }
    None
}

/// Strongly connected components of the positivity pattern (Kosaraju).
fn strong_components(m: &SquareMatrix) -> Vec<Vec<usize>> {
    let n = m.n;
    let adj = |u: usize, v: usize| u != v && m.get(v, u).abs() >= STRUCTURAL_ZERO;

    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        // iterative post-order DFS
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(v) = (*next..n).find(|&v| adj(u, v) && !seen[v]) {
                *next = v + 1;
                seen[v] = true;
                stack.push((v, 0));
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }

    let mut component = vec![usize::MAX; n];
    let mut components = Vec::new();
    for &root in order.iter().rev() {
        if component[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        component[root] = id;
        let mut k = 0;
        while k < members.len() {
            let u = members[k];
            for v in 0..n {
                if adj(v, u) && component[v] == usize::MAX {
                    component[v] = id;
                    members.push(v);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Positive kernel vector of `L` normalized to unit sum, with its
/// reciprocal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronPair {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
}

impl PerronPair {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::MAX, f64::min)
    }
}

/// Stopping rules for the shifted power iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSettings {
    /// Absolute tolerance on the spectral bound (Collatz-Wielandt bracket width).
    pub tol: f64,
    /// Relative residual target `||L alpha||_inf / ||L||_inf` for Perron vectors.
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            residual_tol: 1e-12,
            max_iterations: 2_000_000,
        }
    }
}

/// Perron vector of a validated connectivity matrix.
pub fn perron_vector(l: &ConnectivityMatrix) -> Result<PerronPair> {
    perron_vector_with(l, &PowerSettings::default())
}

/// Shifted power iteration on `L + cI`, `c = 1 + max |L_ii|`.
///
/// The shifted matrix is nonnegative with a positive diagonal, hence
/// primitive, and its dominant eigenvector is the kernel vector of `L`.
pub fn perron_vector_with(l: &ConnectivityMatrix, settings: &PowerSettings) -> Result<PerronPair> {
    let m = l.matrix();
    let n = m.n;
    let shift = 1.0 + (0..n).map(|i| m.get(i, i).abs()).fold(0.0, f64::max);
    let target = settings.residual_tol * m.inf_norm();

    let mut x = vec![1.0 / n as f64; n];
    let mut lx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut best = (f64::INFINITY, x.clone());
    let mut since_improved = 0usize;
    for _ in 0..settings.max_iterations {
        m.mul_vec_into(&x, &mut lx);
        residual = lx.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if residual < best.0 {
            best = (residual, x.clone());
            since_improved = 0;
        } else {
            since_improved += 1;
        }
        // keep polishing until rounding noise stops further progress
        if best.0 <= target && (residual == 0.0 || since_improved >= 8) {
            return Ok(pair_from(best.1));
        }
        let mut total = 0.0;
        for (xi, li) in x.iter_mut().zip(&lx) {
            *xi += li / shift;
            total += *xi;
        }
        for xi in x.iter_mut() {
            *xi /= total;
        }
    }
    if best.0 <= target {
        return Ok(pair_from(best.1));
    }
    Err(Error::ConvergenceFailure {
        iterations: settings.max_iterations,
        residual: residual.min(best.0),
    })
}

fn pair_from(alpha: Vec<f64>) -> PerronPair {
    let theta = alpha.iter().map(|a| 1.0 / a).collect();
    PerronPair { alpha, theta }
}

/// True iff every row sum matches the corresponding column sum within `tol`.
pub fn is_line_sum_symmetric(m: &SquareMatrix, tol: f64) -> bool {
    line_sum_violation(m, tol).is_none()
}

fn line_sum_violation(m: &SquareMatrix, tol: f64) -> Option<(usize, f64, f64)> {
    m.row_sums()
        .into_iter()
        .zip(m.col_sums())
        .enumerate()
        .find(|(_, (r, c))| (r - c).abs() > tol)
        .map(|(i, (r, c))| (i, r, c))
}

/// `sum_ij L_ij X_i X_j` for a line-sum symmetric `L`.
pub fn quadratic_form(l: &ConnectivityMatrix, x: &[f64]) -> Result<f64> {
    check_len(l.n(), x.len())?;
    let tol = 1e-9 * l.inf_norm().max(1.0);
    if let Some((row, row_sum, col_sum)) = line_sum_violation(l.matrix(), tol) {
        return Err(Error::NotLineSumSymmetric {
            row,
            row_sum,
            col_sum,
        });
    }
    let lx = l.mul_vec(x);
    Ok(x.iter().zip(&lx).map(|(a, b)| a * b).sum())
}

/// `sum_ij theta_i L_ij X_i X_j`.
///
/// Evaluated through the line-sum symmetric matrix `L diag(alpha)` as
/// `-1/2 sum_{i != j} L_ij alpha_j (X_i/alpha_i - X_j/alpha_j)^2`, which is
/// nonpositive term by term and vanishes exactly when `X / alpha` is constant.
///
/// # Panics
/// If `x` or `pair` do not match the size of `l`.
pub fn weighted_quadratic_form(l: &ConnectivityMatrix, pair: &PerronPair, x: &[f64]) -> f64 {
    let n = l.n();
    assert_eq!(x.len(), n, "vector length must match matrix size");
    assert_eq!(pair.n(), n, "Perron pair must match matrix size");
    let y: Vec<f64> = x.iter().zip(&pair.theta).map(|(a, b)| a * b).collect();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = y[i] - y[j];
                acc += l.get(i, j) * pair.alpha[j] * d * d;
            }
        }
    }
    -0.5 * acc
}

/// Scale-free test for `x = c * alpha`: all ratios `x_i / alpha_i` lie
/// within `1e-8 (1 + max ratio)` of their median.
pub fn is_multiple_of_alpha(pair: &PerronPair, x: &[f64]) -> bool {
    assert_eq!(x.len(), pair.n());
    let mut ratios: Vec<f64> = x.iter().zip(&pair.theta).map(|(a, b)| a * b).collect();
    let scale = ratios.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ratios.sort_by(f64::total_cmp);
    let k = ratios.len();
    let median = if k % 2 == 1 {
        ratios[k / 2]
    } else {
        0.5 * (ratios[k / 2 - 1] + ratios[k / 2])
    };
    ratios
        .iter()
        .all(|q| (q - median).abs() <= 1e-8 * (1.0 + scale))
}

/// Dominant eigenpair of an irreducible quasi-positive matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronRoot {
    /// The spectral bound `s(A)`.
    pub value: f64,
    /// Positive right eigenvector, unit sum.
    pub right: Vec<f64>,
}

/// Spectral bound and right Perron vector of an irreducible quasi-positive
/// matrix by shifted power iteration. Stops once the Collatz-Wielandt
/// bracket `[min (Bx)_i/x_i, max (Bx)_i/x_i]` is narrower than `settings.tol`.
pub fn perron_root(a: &SquareMatrix, settings: &PowerSettings) -> Result<PerronRoot> {
    let n = a.n;
    if n == 1 {
        return Ok(PerronRoot {
            value: a.get(0, 0),
            right: vec![1.0],
        });
    }
    let shift = 1.0 + (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    // rounding floor for the bracket width
    let tol = settings
        .tol
        .max(64.0 * f64::EPSILON * shift * n as f64);

    let mut x = vec![1.0 / n as f64; n];
    let mut ax = vec![0.0; n];
    let mut width = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        a.mul_vec_into(&x, &mut ax);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (xi, ai) in x.iter().zip(&ax) {
            let q = ai / xi;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        width = hi - lo;
        if width <= tol {
            return Ok(PerronRoot {
                value: 0.5 * (lo + hi),
                right: x,
            });
        }
        let mut total = 0.0;
        for (xi, ai) in x.iter_mut().zip(&ax) {
            *xi += ai / shift;
            total += *xi;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::ConvergenceFailure {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        for xi in x.iter_mut() {
            *xi /= total;
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: settings.max_iterations,
        residual: width,
    })
}

/// `s(A) = max Re(lambda)` over the spectrum of `A`.
///
/// With `quasi_positive` set the matrix is split into strongly connected
/// blocks and each block's Perron root is found by shifted power iteration.
/// Otherwise the eigenvalues come from a real Schur decomposition.
pub fn spectral_bound(a: &SquareMatrix, quasi_positive: bool) -> Result<f64> {
    spectral_bound_with(a, quasi_positive, &PowerSettings::default())
}

pub fn spectral_bound_with(
    a: &SquareMatrix,
    quasi_positive: bool,
    settings: &PowerSettings,
) -> Result<f64> {
    for i in 0..a.n {
        for j in 0..a.n {
            if !a.get(i, j).is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    if !quasi_positive {
        return Ok(schur_spectral_bound(a));
    }
    if let Some((row, col, value)) = a.first_negative_off_diagonal() {
        return Err(Error::NotQuasiPositive { row, col, value });
    }
    let mut bound = f64::NEG_INFINITY;
    for block in strong_components(a) {
        let k = block.len();
        let mut sub = SquareMatrix::zeros(k);
        for (bi, &i) in block.iter().enumerate() {
            for (bj, &j) in block.iter().enumerate() {
                sub.set(bi, bj, a.get(i, j));
            }
        }
        bound = bound.max(perron_root(&sub, settings)?.value);
    }
    Ok(bound)
}

fn schur_spectral_bound(a: &SquareMatrix) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(a.n, a.n, &a.data);
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
