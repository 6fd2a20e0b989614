//! Gaussian similarity kernels over candidate batches and diverse-subset
//! selection: greedy MAP inference where each marginal log-det gain reduces
//! to the squared pivot of an incrementally extended Cholesky factor, plus
//! the exhaustive determinant oracle used to test it.

use thiserror::Error;

/// Candidates whose squared pivot falls at or below this are frozen out of
/// the greedy selection; the pivot divides the candidate update, so letting
/// it approach zero would blow up the factor.
pub const PIVOT_STOP_TOLERANCE: f64 = 1e-10;

/// Exhaustive search is exponential; refuse instances it cannot finish.
pub const ORACLE_MAX_N: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("feature vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("feature vector {index} contains a non-finite entry")]
    NonFiniteFeature { index: usize },
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("jitter must be non-negative and finite, got {0}")]
    InvalidJitter(f64),
    #[error("matrix must be square, symmetric, and finite")]
    MalformedMatrix,
    #[error("subset size must be at least 1")]
    ZeroSubsetSize,
    #[error("subset size {0} exceeds candidate count {1}")]
    SubsetTooLarge(usize, usize),
    #[error("kernel not positive definite")]
    NotPositiveDefinite,
    #[error("oracle limited to small N (got {0}, max {1})")]
    OracleTooLarge(usize, usize),
    #[error("no selections made")]
    EmptySelection,
}

/// One candidate's representation; all vectors in a batch share a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Symmetric similarity matrix over a candidate batch. Built from features it
/// has unit-plus-jitter diagonal, off-diagonal entries in [0, 1], and is
/// positive definite whenever jitter > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
    jitter: f64,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Wrap an explicit matrix (tests, benchmarks, non-Gaussian kernels).
    /// Requires square, exactly symmetric, finite entries.
    pub fn from_entries(rows: &[Vec<f64>]) -> Result<Self, KernelError> {
        let n = rows.len();
        if n == 0 {
            return Err(KernelError::EmptyBatch);
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(KernelError::MalformedMatrix);
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = rows[i][j];
                if !v.is_finite() || v != rows[j][i] {
                    return Err(KernelError::MalformedMatrix);
                }
                entries[i * n + j] = v;
            }
        }
        Ok(KernelMatrix {
            n,
            entries,
            jitter: 0.0,
        })
    }

    /// Rescale entries by per-candidate quality scores: L[i][j] = q_i K[i][j] q_j.
    /// Used by the optional quality-weighted selection mode; the result is no
    /// longer a pure similarity kernel.
    pub fn quality_weighted(&self, quality: &[f64]) -> Result<Self, KernelError> {
        if quality.len() != self.n || quality.iter().any(|q| !q.is_finite() || *q <= 0.0) {
            return Err(KernelError::MalformedMatrix);
        }
        let mut entries = self.entries.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                entries[i * self.n + j] *= quality[i] * quality[j];
            }
        }
        Ok(KernelMatrix {
            n: self.n,
            entries,
            jitter: self.jitter,
        })
    }

    /// Dense submatrix for the given index list (order preserved).
    pub fn submatrix(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| indices.iter().map(|&j| self.get(i, j)).collect())
            .collect()
    }
}

/// Gaussian kernel over a feature batch:
/// K[i][j] = exp(-||f_i - f_j||^2 / (2 sigma^2)), diagonal 1 + jitter.
/// The upper triangle is computed once and mirrored, so symmetry is exact.
pub fn build_kernel(
    features: &[FeatureVector],
    bandwidth: f64,
    jitter: f64,
) -> Result<KernelMatrix, KernelError> {
    if features.is_empty() {
        return Err(KernelError::EmptyBatch);
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(KernelError::InvalidBandwidth(bandwidth));
    }
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(KernelError::InvalidJitter(jitter));
    }
    let dim = features[0].len();
    for (index, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(KernelError::DimensionMismatch {
                index,
                got: f.len(),
                expected: dim,
            });
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFiniteFeature { index });
        }
    }
    let n = features.len();
    let inv_two_sigma_sq = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0 + jitter;
        for j in (i + 1)..n {
            let d2 = squared_distance(features[i].values(), features[j].values());
            let k = (-d2 * inv_two_sigma_sq).exp();
            entries[i * n + j] = k;
            entries[j * n + i] = k;
        }
    }
    Ok(KernelMatrix {
        n,
        entries,
        jitter,
    })
}

/// Incremental greedy-selection state. Holds the ordered selection, the rows
/// of the lower-triangular factor V with K_Y = V V^T, and for every remaining
/// candidate j its cross row C_j and squared pivot d_j^2, maintained by
/// e_j = (K[i][j] - C_i . C_j) / d_i and d_j'^2 = d_j^2 - e_j^2 after each
/// selection of i.
#[derive(Debug, Clone)]
pub struct GreedyState<'a> {
    kernel: &'a KernelMatrix,
    selected: Vec<usize>,
    factor_rows: Vec<Vec<f64>>,
    cross_rows: Vec<Vec<f64>>,
    pivot_sq: Vec<f64>,
    alive: Vec<bool>,
}

impl<'a> GreedyState<'a> {
    /// Initialize marginals: d_j^2 = K[j][j]. Errors when no first pivot is
    /// positive, i.e. the kernel fails the positive-definiteness check on the
    /// very first selection.
    pub fn new(kernel: &'a KernelMatrix) -> Result<Self, KernelError> {
        let n = kernel.n();
        let pivot_sq: Vec<f64> = (0..n).map(|j| kernel.get(j, j)).collect();
        if !pivot_sq
            .iter()
            .any(|&d| d.is_finite() && d > PIVOT_STOP_TOLERANCE)
        {
            return Err(KernelError::NotPositiveDefinite);
        }
        let alive = pivot_sq
            .iter()
            .map(|&d| d > PIVOT_STOP_TOLERANCE)
            .collect();
        Ok(GreedyState {
            kernel,
            selected: Vec::new(),
            factor_rows: Vec::new(),
            cross_rows: vec![Vec::new(); n],
            pivot_sq,
            alive,
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Current squared pivot d_j^2 of candidate j: the marginal determinant
    /// gain det(K_{Y+j}) / det(K_Y).
    pub fn pivot_sq(&self, j: usize) -> f64 {
        self.pivot_sq[j]
    }

    pub fn is_selectable(&self, j: usize) -> bool {
        self.alive[j]
    }

    /// Select the candidate maximizing log(d_j^2) (ties to the lowest index),
    /// extend the factor, and update every remaining candidate's cross row
    /// and pivot. Returns None when all remaining pivots have fallen to the
    /// stop tolerance.
    pub fn select_next(&mut self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..self.kernel.n() {
            if !self.alive[j] {
                continue;
            }
            match best {
                Some(b) if self.pivot_sq[j] <= self.pivot_sq[b] => {}
                _ => best = Some(j),
            }
        }
        let chosen = best?;
        let pivot = self.pivot_sq[chosen].sqrt();
        let chosen_row = std::mem::take(&mut self.cross_rows[chosen]);
        self.alive[chosen] = false;

        for j in 0..self.kernel.n() {
            if !self.alive[j] {
                continue;
            }
            let cross: f64 = chosen_row
                .iter()
                .zip(&self.cross_rows[j])
                .map(|(a, b)| a * b)
                .sum();
            let e = (self.kernel.get(chosen, j) - cross) / pivot;
            self.cross_rows[j].push(e);
            self.pivot_sq[j] -= e * e;
            if self.pivot_sq[j] <= PIVOT_STOP_TOLERANCE {
                self.alive[j] = false;
            }
        }

        let mut factor_row = chosen_row;
        factor_row.push(pivot);
        self.factor_rows.push(factor_row);
        self.selected.push(chosen);
        Some(chosen)
    }

    /// V V^T for the current factor; equals the selected submatrix K_Y up to
    /// accumulated rounding. Errors if nothing has been selected.
    pub fn reconstruct(&self) -> Result<Vec<Vec<f64>>, KernelError> {
        let k = self.selected.len();
        if k == 0 {
            return Err(KernelError::EmptySelection);
        }
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let row_i = &self.factor_rows[i];
                let row_j = &self.factor_rows[j];
                let m = row_i.len().min(row_j.len());
                out[i][j] = (0..m).map(|t| row_i[t] * row_j[t]).sum();
            }
        }
        Ok(out)
    }
}

/// Greedy MAP subset selection: repeatedly take the candidate with the
/// largest marginal gain until `subset_size` items are chosen or every
/// remaining pivot is exhausted. Returns indices in selection order.
pub fn greedy_map_select(
    kernel: &KernelMatrix,
    subset_size: usize,
) -> Result<Vec<usize>, KernelError> {
    if subset_size == 0 {
        return Err(KernelError::ZeroSubsetSize);
    }
    let mut state = GreedyState::new(kernel)?;
    let target = subset_size.min(kernel.n());
    while state.selected().len() < target {
        if state.select_next().is_none() {
            break;
        }
    }
    Ok(state.selected().to_vec())
}

/// Determinant by Gaussian elimination with partial pivoting. Kept free of
/// any Cholesky machinery so it can serve as the independent route in
/// equivalence tests.
pub fn determinant(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    if n == 0 {
        return 1.0;
    }
    let mut m: Vec<Vec<f64>> = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot_row][col] == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            m.swap(pivot_row, col);
            det = -det;
        }
        det *= m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                let sub = factor * m[col][k];
                m[row][k] -= sub;
            }
        }
    }
    det
}

/// Exhaustive MAP oracle: the size-M subset maximizing det(K_Y), found by
/// enumerating subsets in lexicographic order (ties keep the first, i.e.
/// lexicographically smallest, maximizer). Returns a sorted index set.
pub fn brute_force_map(
    kernel: &KernelMatrix,
    subset_size: usize,
) -> Result<Vec<usize>, KernelError> {
    let n = kernel.n();
    if n > ORACLE_MAX_N {
        return Err(KernelError::OracleTooLarge(n, ORACLE_MAX_N));
    }
    if subset_size == 0 {
        return Err(KernelError::ZeroSubsetSize);
    }
    if subset_size > n {
        return Err(KernelError::SubsetTooLarge(subset_size, n));
    }
    let mut best_subset: Option<Vec<usize>> = None;
    let mut best_det = f64::NEG_INFINITY;
    let mut subset: Vec<usize> = (0..subset_size).collect();
    loop {
        let det = determinant(&kernel.submatrix(&subset));
        if det > best_det {
            best_det = det;
            best_subset = Some(subset.clone());
        }
        // next lexicographic combination
        let mut i = subset_size;
        loop {
            if i == 0 {
                return Ok(best_subset.unwrap());
            }
            i -= 1;
            if subset[i] != i + n - subset_size {
                break;
            }
        }
        subset[i] += 1;
        for k in (i + 1)..subset_size {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// Synthetic instances with a planted, verified-unique best subset; used by
/// the selection benchmarks and equivalence tests.
pub mod synthetic {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub struct PlantedInstance {
        pub kernel: KernelMatrix,
        /// The verified best size-M subset, sorted.
        pub best: Vec<usize>,
        /// Relative determinant margin of best over runner-up.
        pub margin: f64,
    }

    /// Build an N-candidate instance whose unique best size-M subset is M
    /// "anchor" points at moderate mutual similarity; the remaining points
    /// sit between an anchor and the centroid, so swapping any of them in
    /// strictly raises similarity and lowers the determinant. One anchor is
    /// pinned at index 0: the unit-plus-jitter diagonal ties every initial
    /// marginal gain, so greedy's first pick is always index 0 and can only
    /// recover the planted subset when that index belongs to it. Instances
    /// are regenerated until the best subset's determinant exceeds the
    /// runner-up by at least 10%, verified by the exhaustive oracle.
    pub fn planted_instance(n: usize, m: usize, seed: u64) -> PlantedInstance {
        assert!(m >= 2 && m <= n && n <= ORACLE_MAX_N);
        for attempt in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt * 0x9e37_79b9));
            let scale = 0.7_f64.sqrt();
            let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
            for i in 0..m {
                let mut p = vec![0.0; m];
                p[i] = scale;
                points.push(p);
            }
            for t in 0..(n - m) {
                let anchor = t % m;
                let pull: f64 = rng.gen_range(0.18..0.30);
                let mut p = vec![0.0; m];
                p[anchor] = scale * (1.0 - pull);
                points.push(p);
            }
            // shuffle candidate order, keeping one anchor at index 0
            let mut order: Vec<usize> = (0..n).collect();
            for i in (2..n).rev() {
                let j = rng.gen_range(1..=i);
                order.swap(i, j);
            }
            let features: Vec<FeatureVector> = order
                .iter()
                .map(|&i| FeatureVector::new(points[i].clone()))
                .collect();
            let kernel = build_kernel(&features, 1.0, 1e-6).expect("planted features are valid");

            let best = brute_force_map(&kernel, m).expect("within oracle guard");
            let best_det = determinant(&kernel.submatrix(&best));
            let runner_up = second_best_det(&kernel, m, &best);
            if best_det >= 1.1 * runner_up {
                return PlantedInstance {
                    kernel,
                    best,
                    margin: best_det / runner_up - 1.0,
                };
            }
        }
        panic!("failed to plant a well-separated instance (n={n}, m={m}, seed={seed})");
    }

    fn second_best_det(kernel: &KernelMatrix, m: usize, best: &[usize]) -> f64 {
        let n = kernel.n();
        let mut subset: Vec<usize> = (0..m).collect();
        let mut second = f64::NEG_INFINITY;
        loop {
            if subset != best {
                let det = determinant(&kernel.submatrix(&subset));
                if det > second {
                    second = det;
                }
            }
            let mut i = m;
            loop {
                if i == 0 {
                    return second;
                }
                i -= 1;
                if subset[i] != i + n - m {
                    break;
                }
            }
            subset[i] += 1;
            for k in (i + 1)..m {
                subset[k] = subset[k - 1] + 1;
            }
        }
    }
}
