//! Gram matrices, tolerant reduced row echelon form, and null-space tools.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type DenseMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NullspaceError {
    #[error("reduced row echelon form is the identity; only the trivial solution exists")]
    IdentityMatrix,
    #[error("singular value decomposition did not converge")]
    SvdFailure,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Returns `AᵀA`, optionally after scaling every column of `A` to unit
/// Euclidean norm, together with the column scales used (1 for zero or
/// unscaled columns).
pub fn gram(values: &DenseMatrix, normalize: bool) -> (DenseMatrix, Vec<f64>) {
    let scales: Vec<f64> = if normalize {
        values
            .column_iter()
            .map(|c| {
                let norm = c.norm();
                if norm > 0.0 {
                    norm
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; values.ncols()]
    };
    let mut scaled = values.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(&scales) {
        if *s != 1.0 {
            col /= *s;
        }
    }
    let g = scaled.tr_mul(&scaled);
    // Symmetrize exactly.
    let g = (&g + g.transpose()) * 0.5;
    (g, scales)
}

/// Result of a tolerant Gauss–Jordan reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct RrefOutcome {
    pub r: DenseMatrix,
    pub pivot_columns: Vec<usize>,
    pub tolerance_used: f64,
}

impl RrefOutcome {
    pub fn rank(&self) -> usize {
        self.pivot_columns.len()
    }

    /// True when every column is a pivot column (square input of full rank).
    pub fn is_identity(&self) -> bool {
        self.r.nrows() == self.r.ncols() && self.rank() == self.r.ncols()
    }

    pub fn free_columns(&self) -> Vec<usize> {
        let mut pivots = self.pivot_columns.iter().peekable();
        (0..self.r.ncols())
            .filter(|c| {
                if pivots.peek() == Some(&c) {
                    pivots.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

/// Default zero threshold: `max(rows, cols) · ε · ‖A‖∞`.
pub fn default_rref_tolerance(a: &DenseMatrix) -> f64 {
    let inf_norm = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON * inf_norm
}

/// Zero threshold for the Gram matrix of a library sampled on `samples`
/// grid rows: each entry of `AᵀA` carries up to `samples · ε` relative
/// rounding from its inner product, so the threshold grows with the grid.
pub fn gram_rref_tolerance(g: &DenseMatrix, samples: usize) -> f64 {
    default_rref_tolerance(g) * (samples as f64 / g.nrows().max(g.ncols()) as f64).max(1.0)
}

/// Reduced row echelon form by Gauss–Jordan elimination with partial
/// pivoting. A column whose remaining entries are all at or below the
/// tolerance is zeroed and skipped; afterwards any entry at or below the
/// tolerance is set to exactly zero.
pub fn rref(a: &DenseMatrix, tolerance: Option<f64>) -> RrefOutcome {
    let tol = tolerance.unwrap_or_else(|| default_rref_tolerance(a));
    let (rows, cols) = a.shape();
    let mut r = a.clone();
    let mut pivots = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < rows && j < cols {
        let (mut best, mut best_row) = (0.0, i);
        for k in i..rows {
            let v = r[(k, j)].abs();
            if v > best {
                best = v;
                best_row = k;
            }
        }
        if best <= tol {
            for k in i..rows {
                r[(k, j)] = 0.0;
            }
            j += 1;
            continue;
        }
        pivots.push(j);
        r.swap_rows(i, best_row);
        let p = r[(i, j)];
        for c in j..cols {
            r[(i, c)] /= p;
        }
        r[(i, j)] = 1.0;
        for k in 0..rows {
            if k == i {
                continue;
            }
            let factor = r[(k, j)];
            if factor != 0.0 {
                for c in j..cols {
                    r[(k, c)] -= factor * r[(i, c)];
                }
                r[(k, j)] = 0.0;
            }
        }
        i += 1;
        j += 1;
    }
    for v in r.iter_mut() {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    RrefOutcome {
        r,
        pivot_columns: pivots,
        tolerance_used: tol,
    }
}

/// Columns whose coefficient is forced to zero: some row of R has exactly
/// one nonzero entry, and it lies in that column.
pub fn forced_zero_columns(outcome: &RrefOutcome) -> Vec<usize> {
    let mut cols: Vec<usize> = outcome
        .r
        .row_iter()
        .filter_map(|row| {
            let mut nz = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
            match (nz.next(), nz.next()) {
                (Some((c, _)), None) => Some(c),
                _ => None,
            }
        })
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub free: usize,
    pub coefficient: f64,
}

/// `ξ_basic = Σ coefficient · ξ_free`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicExpression {
    pub basic: usize,
    pub terms: Vec<LinearTerm>,
}

/// Basic coefficients written in terms of the free ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralSolution {
    pub pivot_indices: Vec<usize>,
    pub free_indices: Vec<usize>,
    pub expressions: Vec<BasicExpression>,
}

impl GeneralSolution {
    pub fn dim(&self) -> usize {
        self.pivot_indices.len() + self.free_indices.len()
    }

    /// One vector per free index: that free coefficient set to 1, the other
    /// free ones to 0, basic ones back-substituted.
    pub fn basis_vectors(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        self.free_indices
            .iter()
            .map(|&f| {
                let mut v = vec![0.0; n];
                v[f] = 1.0;
                for expr in &self.expressions {
                    v[expr.basic] = expr
                        .terms
                        .iter()
                        .filter(|t| t.free == f)
                        .map(|t| t.coefficient)
                        .sum();
                }
                v
            })
            .collect()
    }

    /// Re-expresses the solution in unscaled coefficients, where the scaled
    /// coefficient of column j equals `scales[j]` times the unscaled one.
    pub fn unscaled(&self, scales: &[f64]) -> GeneralSolution {
        let expressions = self
            .expressions
            .iter()
            .map(|e| BasicExpression {
                basic: e.basic,
                terms: e
                    .terms
                    .iter()
                    .map(|t| LinearTerm {
                        free: t.free,
                        coefficient: t.coefficient * scales[t.free] / scales[e.basic],
                    })
                    .collect(),
            })
            .collect();
        GeneralSolution {
            pivot_indices: self.pivot_indices.clone(),
            free_indices: self.free_indices.clone(),
            expressions,
        }
    }
}

/// Reads the general solution of `R ξ = 0` off a reduced matrix.
pub fn general_solution(outcome: &RrefOutcome) -> Result<GeneralSolution, NullspaceError> {
    if outcome.is_identity() {
        return Err(NullspaceError::IdentityMatrix);
    }
    let free_indices = outcome.free_columns();
    let expressions = outcome
        .pivot_columns
        .iter()
        .enumerate()
        .map(|(row, &basic)| BasicExpression {
            basic,
            terms: free_indices
                .iter()
                .filter(|&&f| f > basic && outcome.r[(row, f)] != 0.0)
                .map(|&f| LinearTerm {
                    free: f,
                    coefficient: -outcome.r[(row, f)],
                })
                .collect(),
        })
        .collect();
    Ok(GeneralSolution {
        pivot_indices: outcome.pivot_columns.clone(),
        free_indices,
        expressions,
    })
}

/// Orthonormal null-space basis from the SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdNullSpace {
    /// N×d, orthonormal columns.
    pub basis: DenseMatrix,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

impl SvdNullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn svd_of(a: &DenseMatrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, NullspaceError> {
    SVD::try_new(a.clone(), true, true, f64::EPSILON, 0).ok_or(NullspaceError::SvdFailure)
}

/// Right singular vectors of `values` whose singular values are at or
/// below `tolerance` (default `max(rows, cols) · ε · σ_max`).
pub fn nullspace_svd(
    values: &DenseMatrix,
    tolerance: Option<f64>,
) -> Result<SvdNullSpace, NullspaceError> {
    let (rows, cols) = values.shape();
    if cols == 0 {
        return Ok(SvdNullSpace {
            basis: DenseMatrix::zeros(0, 0),
            singular_values: Vec::new(),
            tolerance: tolerance.unwrap_or(0.0),
        });
    }
    // Wide matrices are padded with zero rows so V is square.
    let padded;
    let a = if rows < cols {
        padded = values.clone().resize_vertically(cols, 0.0);
        &padded
    } else {
        values
    };
    let svd = svd_of(a)?;
    let v_t = svd.v_t.as_ref().ok_or(NullspaceError::SvdFailure)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let tol = tolerance.unwrap_or(rows.max(cols) as f64 * f64::EPSILON * sigma_max);
    let null: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut basis = DenseMatrix::zeros(cols, null.len());
    for (k, &i) in null.iter().enumerate() {
        for c in 0..cols {
            basis[(c, k)] = v_t[(i, c)];
        }
    }
    Ok(SvdNullSpace {
        basis,
        singular_values: sigma,
        tolerance: tol,
    })
}

/// Orthonormal basis for the column span of `basis`.
fn orthonormalize(basis: &DenseMatrix) -> Result<DenseMatrix, NullspaceError> {
    if basis.ncols() == 0 || basis.nrows() == 0 {
        return Ok(DenseMatrix::zeros(basis.nrows(), 0));
    }
    let svd = svd_of(basis)?;
    let u = svd.u.as_ref().ok_or(NullspaceError::SvdFailure)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = basis.nrows().max(basis.ncols()) as f64 * f64::EPSILON * sigma_max;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    Ok(u.select_columns(&keep))
}

fn spectral_norm(a: &DenseMatrix) -> Result<f64, NullspaceError> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let svd =
        SVD::try_new(a.clone(), false, false, f64::EPSILON, 0).ok_or(NullspaceError::SvdFailure)?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Sine of the largest principal angle between two column spans.
///
/// Computed as the larger of `‖(I − P_B) Q_A‖₂` and `‖(I − P_A) Q_B‖₂`, so
/// it is symmetric, 0 exactly for equal spans, and 1 whenever the spans
/// have different dimensions.
pub fn subspace_distance(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64, NullspaceError> {
    if a.nrows() != b.nrows() {
        return Err(NullspaceError::DimensionMismatch(format!(
            "ambient dimensions {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let residual = |q: &DenseMatrix, onto: &DenseMatrix| -> Result<f64, NullspaceError> {
        if q.ncols() == 0 {
            return Ok(0.0);
        }
        if onto.ncols() == 0 {
            return Ok(1.0);
        }
        let proj = onto * (onto.transpose() * q);
        spectral_norm(&(q - proj))
    };
    let d = residual(&qa, &qb)?.max(residual(&qb, &qa)?);
    Ok(d.clamp(0.0, 1.0))
}

/// Stacks vectors as the columns of an N×k matrix.
pub fn columns_to_matrix(vectors: &[Vec<f64>], n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, vectors.len());
    for (k, v) in vectors.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            m[(i, k)] = *x;
        }
    }
    m
}
