//! Eigenmode basis of the cell covariance: full symmetric decomposition,
//! descending sort, sign canonicalization and truncation to the kept modes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::klpipe::covariance::CovarianceMatrix;

/// How many leading modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepSpec {
    Fraction(f64),
    Count(usize),
}

impl Default for KeepSpec {
    fn default() -> Self {
        // One third: the survey keeps ~2000 of ~6000 modes.
        KeepSpec::Fraction(1.0 / 3.0)
    }
}

impl KeepSpec {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let m = match *self {
            KeepSpec::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Domain("keep fraction must lie in (0, 1]".into()));
                }
                (f * n as f64).ceil() as usize
            }
            KeepSpec::Count(c) => c,
        };
        if m == 0 || m > n {
            return Err(Error::Domain(format!("kept mode count {m} outside 1..={n}")));
        }
        Ok(m)
    }
}

/// Sorted eigensystem with the retained mode set.
#[derive(Debug, Clone)]
pub struct KlBasis {
    /// Eigenvalues, non-increasing.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, ordered like the eigenvalues.
    pub vectors: DMatrix<f64>,
    /// Column indices of the kept modes, in rank order.
    pub kept: Vec<usize>,
}

impl KlBasis {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    /// n x m matrix of the kept columns.
    pub fn kept_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, self.kept.len());
        for (j, &col) in self.kept.iter().enumerate() {
            out.set_column(j, &self.vectors.column(col));
        }
        out
    }
}

/// Orthonormality and residual diagnostics against the source matrix.
#[derive(Debug, Clone, Copy)]
pub struct BasisDiagnostics {
    /// max |B^T B - I|.
    pub max_orthonormality_dev: f64,
    /// max_i ||C b_i - l_i b_i|| / (|l_i| ||b_i||).
    pub max_relative_residual: f64,
    /// max |sum_i l_i b_i b_i^T - C|.
    pub max_reconstruction_dev: f64,
}

impl KlBasis {
    pub fn diagnostics(&self, c: &DMatrix<f64>) -> BasisDiagnostics {
        let n = self.dim();
        let btb = self.vectors.transpose() * &self.vectors;
        let mut ortho: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((btb[(i, j)] - target).abs());
            }
        }
        let cb = c * &self.vectors;
        let mut resid: f64 = 0.0;
        for j in 0..n {
            let l = self.eigenvalues[j];
            let mut num = 0.0;
            for i in 0..n {
                let r = cb[(i, j)] - l * self.vectors[(i, j)];
                num += r * r;
            }
            let denom = l.abs().max(1e-300);
            resid = resid.max(num.sqrt() / denom);
        }
        let mut recon = &self.vectors * DMatrix::from_diagonal(&self.eigenvalues);
        recon *= self.vectors.transpose();
        let mut rec_dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                rec_dev = rec_dev.max((recon[(i, j)] - c[(i, j)]).abs());
            }
        }
        BasisDiagnostics {
            max_orthonormality_dev: ortho,
            max_relative_residual: resid,
            max_reconstruction_dev: rec_dev,
        }
    }
}

/// Full symmetric eigendecomposition sorted by decreasing eigenvalue, with
/// the leading `keep` modes retained.
pub fn kl_decompose(c: &CovarianceMatrix, keep: KeepSpec) -> Result<KlBasis> {
    let basis = decompose_matrix(&c.matrix)?;
    let m = keep.resolve(basis.dim())?;
    Ok(KlBasis { kept: (0..m).collect(), ..basis })
}

/// Decompose an arbitrary symmetric matrix (no truncation applied).
pub fn decompose_matrix(m: &DMatrix<f64>) -> Result<KlBasis> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Domain("eigendecomposition needs a square matrix".into()));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 4096 * n.max(8)).ok_or_else(|| {
        Error::Eigen(format!("symmetric QL iteration stalled on a {n}x{n} matrix"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut eigenvalues = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (rank, &src) in order.iter().enumerate() {
        eigenvalues[rank] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Canonical sign: the largest-magnitude component is positive.
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(rank, &col);
    }
    Ok(KlBasis { eigenvalues, vectors, kept: (0..n).collect() })
}

/// Project a data vector onto the kept modes: y = B^T x.
pub fn kl_project(x: &DVector<f64>, basis: &KlBasis) -> Result<DVector<f64>> {
    if x.len() != basis.dim() {
        return Err(Error::Domain(format!(
            "projection dimension mismatch: x has {}, basis has {}",
            x.len(),
            basis.dim()
        )));
    }
    Ok(basis.kept_matrix().transpose() * x)
}

/// Projection onto every mode (no truncation).
pub fn kl_project_full(x: &DVector<f64>, basis: &KlBasis) -> Result<DVector<f64>> {
    if x.len() != basis.dim() {
        return Err(Error::Domain("projection dimension mismatch".into()));
    }
    Ok(basis.vectors.transpose() * x)
}
