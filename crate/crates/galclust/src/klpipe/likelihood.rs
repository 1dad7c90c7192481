//! Gaussian likelihood in the truncated eigenmode subspace, scanned over a
//! (sigma8, gamma) grid.
//!
//! ln L = -1/2 y^T C'^-1 y - 1/2 ln|C'| with y the projected data vector
//! and C' = B^T C(params) B the model covariance in the kept subspace
//! (additive constant dropped). The basis B is built once from the fiducial
//! covariance and reused across the grid. Because the spectrum amplitude is
//! fixed by sigma8 and the anisotropy boost is a scalar, the node
//! covariance factorizes as C' = sigma8^2 boost * P(gamma) + N', so the
//! expensive unit-amplitude shape projection P(gamma) is cached per gamma.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cosmomodel::{kaiser_boost, Spectrum, SpectrumParams};
use crate::error::{Error, Result};
use crate::klpipe::basis::KlBasis;
use crate::klpipe::counts::OverdensityVector;
use crate::klpipe::covariance::CellXi;
use crate::klpipe::lattice::CellLattice;

/// Gaussian log-likelihood -1/2 y^T C^-1 y - 1/2 ln|C| via Cholesky.
pub fn gaussian_lnl(y: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if y.len() != c.nrows() || c.nrows() != c.ncols() {
        return Err(Error::Domain("likelihood dimension mismatch".into()));
    }
    let chol = Cholesky::new(c.clone()).ok_or_else(|| {
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for i in 0..c.nrows() {
            dmin = dmin.min(c[(i, i)]);
            dmax = dmax.max(c[(i, i)]);
        }
        Error::Singular(format!(
            "covariance not positive definite (diag range {dmin:.3e}..{dmax:.3e}, n = {})",
            c.nrows()
        ))
    })?;
    let l = chol.l_dirty();
    let mut ln_det = 0.0;
    for i in 0..c.nrows() {
        ln_det += l[(i, i)].ln();
    }
    ln_det *= 2.0;
    let alpha = chol.solve(y);
    Ok(-0.5 * y.dot(&alpha) - 0.5 * ln_det)
}

/// Everything the likelihood needs for one survey region: lattice,
/// overdensities, the fiducial basis, and the fixed model parameters
/// (n_s, beta, bias; sigma8 and gamma vary on the grid).
#[derive(Debug, Clone)]
pub struct KlDataset {
    pub lattice: CellLattice,
    pub odv: OverdensityVector,
    pub basis: KlBasis,
    pub fixed: SpectrumParams,
    distances: DMatrix<f64>,
    b_kept: DMatrix<f64>,
    y: DVector<f64>,
    n_prime: DMatrix<f64>,
    r_max: f64,
}

impl KlDataset {
    pub fn new(
        lattice: CellLattice,
        odv: OverdensityVector,
        basis: KlBasis,
        fixed: SpectrumParams,
    ) -> Result<Self> {
        if basis.dim() != odv.len() {
            return Err(Error::Domain(format!(
                "basis dimension {} does not match data vector {}",
                basis.dim(),
                odv.len()
            )));
        }
        let n = odv.len();
        let mut distances = DMatrix::zeros(n, n);
        let mut r_max: f64 = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                let d = lattice.pair_distance(odv.cells[a], odv.cells[b]);
                distances[(a, b)] = d;
                distances[(b, a)] = d;
                r_max = r_max.max(d);
            }
        }
        let r_max = (r_max * 1.02).max(4.0 * lattice.radius);
        let b_kept = basis.kept_matrix();
        let y = b_kept.transpose() * &odv.x;
        let mut scaled = b_kept.clone();
        for i in 0..n {
            let s = odv.shot[i];
            for j in 0..scaled.ncols() {
                scaled[(i, j)] *= s;
            }
        }
        let n_prime = b_kept.transpose() * scaled;
        Ok(KlDataset { lattice, odv, basis, fixed, distances, b_kept, y, n_prime, r_max })
    }

    pub fn projected_data(&self) -> &DVector<f64> {
        &self.y
    }

    /// Swap in a different data vector over the same cells (systematics
    /// injection reuses geometry and basis).
    pub fn with_data(&self, x: &DVector<f64>) -> Result<Self> {
        if x.len() != self.odv.len() {
            return Err(Error::Domain("replacement data vector has wrong length".into()));
        }
        let mut out = self.clone();
        out.odv.x = x.clone();
        out.y = out.b_kept.transpose() * x;
        Ok(out)
    }

    /// Unit-amplitude signal shape: cell-windowed xi at sigma8 = 1 for the
    /// given shape parameters, over the surviving-cell separations.
    fn unit_shape(&self, gamma: f64, n_s: f64) -> Result<DMatrix<f64>> {
        let params = SpectrumParams { sigma8: 1.0, gamma, n_s, beta: 0.0, bias: 1.0 };
        let spectrum = Spectrum::new(params)?;
        let xi = CellXi::build(&spectrum, self.lattice.radius, self.r_max)?;
        let n = self.odv.len();
        let mut s = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = xi.value(self.distances[(a, b)])?;
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        Ok(s)
    }

    /// B^T S1(gamma) B over the kept modes.
    pub fn projected_shape(&self, gamma: f64) -> Result<DMatrix<f64>> {
        let s1 = self.unit_shape(gamma, self.fixed.n_s)?;
        let sb = &s1 * &self.b_kept;
        Ok(self.b_kept.transpose() * sb)
    }

    fn node_lnl(&self, shape: &DMatrix<f64>, sigma8: f64, gamma: f64) -> Result<f64> {
        let params = SpectrumParams { sigma8, gamma, ..self.fixed };
        params.validate()?;
        let amp = sigma8 * sigma8 * kaiser_boost(&params);
        let mut c = shape * amp;
        c += &self.n_prime;
        gaussian_lnl(&self.y, &c)
    }
}

/// Subspace log-likelihood at one parameter point (honest rebuild of the
/// model covariance, projected onto the kept modes).
pub fn log_likelihood(dataset: &KlDataset, params: &SpectrumParams) -> Result<f64> {
    params.validate()?;
    let shape = dataset.projected_shape(params.gamma)?;
    dataset.node_lnl(&shape, params.sigma8, params.gamma)
}

/// Full-space evaluation with the unprojected data vector; the oracle for
/// the truncation-consistency check.
pub fn full_log_likelihood(dataset: &KlDataset, params: &SpectrumParams) -> Result<f64> {
    params.validate()?;
    let s1 = dataset.unit_shape(params.gamma, dataset.fixed.n_s)?;
    let amp = params.sigma8 * params.sigma8 * kaiser_boost(params);
    let mut c = s1 * amp;
    for i in 0..dataset.odv.len() {
        c[(i, i)] += dataset.odv.shot[i];
    }
    gaussian_lnl(&dataset.odv.x, &c)
}

/// Rectangular parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid2 {
    pub sigma8: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParamGrid2 {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("sigma8", &self.sigma8), ("gamma", &self.gamma)] {
            if axis.is_empty() {
                return Err(Error::Config(format!("{name} axis is empty")));
            }
            if !axis.windows(2).all(|w| w[1] > w[0]) || axis[0] <= 0.0 {
                return Err(Error::Config(format!("{name} axis must be positive increasing")));
            }
        }
        Ok(())
    }

    pub fn linear(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

/// ln L over the grid with peak, parabolic refinement and the Fisher matrix
/// at the peak.
#[derive(Debug, Clone)]
pub struct LikelihoodSurface {
    pub sigma8: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major over (sigma8 index, gamma index).
    pub lnl: Vec<f64>,
    pub peak: (usize, usize),
    pub peak_lnl: f64,
    pub boundary_peak: bool,
    /// Parabolic sub-grid refinement of the peak (equals the node on a
    /// boundary or degenerate axis).
    pub refined_peak: (f64, f64),
    /// Negative Hessian of ln L at the peak node from central differences;
    /// None when an axis has a single node.
    pub fisher: Option<[[f64; 2]; 2]>,
    /// 1-sigma intervals from the inverse Fisher diagonal, when positive
    /// definite.
    pub sigma_1d: Option<[f64; 2]>,
}

impl LikelihoodSurface {
    pub fn lnl_at(&self, is: usize, ig: usize) -> f64 {
        self.lnl[is * self.gamma.len() + ig]
    }

    pub fn peak_params(&self) -> (f64, f64) {
        (self.sigma8[self.peak.0], self.gamma[self.peak.1])
    }
}

fn parabolic_refine(axis: &[f64], line: &[f64], p: usize) -> f64 {
    if p == 0 || p + 1 >= axis.len() {
        return axis[p];
    }
    let (l0, l1, l2) = (line[p - 1], line[p], line[p + 1]);
    let denom = l0 - 2.0 * l1 + l2;
    if !(denom < 0.0) {
        return axis[p];
    }
    let delta = (0.5 * (l0 - l2) / denom).clamp(-1.0, 1.0);
    let h = 0.5 * (axis[p + 1] - axis[p - 1]);
    axis[p] + delta * h
}

/// Evaluate the combined log-likelihood of several independent regions at
/// every grid node (ln L adds across regions). Node evaluations are
/// order-independent; per-gamma shape projections are computed once.
pub fn likelihood_grid(datasets: &[KlDataset], grid: &ParamGrid2) -> Result<LikelihoodSurface> {
    grid.validate()?;
    if datasets.is_empty() {
        return Err(Error::Domain("likelihood grid needs at least one dataset".into()));
    }
    // Shape projections for every (dataset, gamma) pair, in parallel.
    let pairs: Vec<(usize, f64)> = (0..datasets.len())
        .flat_map(|di| grid.gamma.iter().map(move |&g| (di, g)))
        .collect();
    let shapes: Vec<Result<DMatrix<f64>>> = pairs
        .par_iter()
        .map(|&(di, g)| datasets[di].projected_shape(g))
        .collect();
    let mut caches: Vec<HashMap<u64, DMatrix<f64>>> = vec![HashMap::new(); datasets.len()];
    for ((di, g), shape) in pairs.into_iter().zip(shapes) {
        caches[di].insert(g.to_bits(), shape?);
    }

    let n_s8 = grid.sigma8.len();
    let n_g = grid.gamma.len();
    let lnl: Vec<Result<f64>> = (0..n_s8 * n_g)
        .into_par_iter()
        .map(|node| {
            let s8 = grid.sigma8[node / n_g];
            let g = grid.gamma[node % n_g];
            let mut total = 0.0;
            for (di, ds) in datasets.iter().enumerate() {
                let shape = &caches[di][&g.to_bits()];
                total += ds.node_lnl(shape, s8, g)?;
            }
            Ok(total)
        })
        .collect();
    let lnl: Vec<f64> = lnl.into_iter().collect::<Result<_>>()?;

    let mut peak_idx = 0;
    for (i, &v) in lnl.iter().enumerate() {
        if v > lnl[peak_idx] {
            peak_idx = i;
        }
    }
    let peak = (peak_idx / n_g, peak_idx % n_g);
    let boundary_peak = (n_s8 > 1 && (peak.0 == 0 || peak.0 == n_s8 - 1))
        || (n_g > 1 && (peak.1 == 0 || peak.1 == n_g - 1));

    let s8_line: Vec<f64> = (0..n_s8).map(|i| lnl[i * n_g + peak.1]).collect();
    let g_line: Vec<f64> = (0..n_g).map(|j| lnl[peak.0 * n_g + j]).collect();
    let refined_peak = (
        parabolic_refine(&grid.sigma8, &s8_line, peak.0),
        parabolic_refine(&grid.gamma, &g_line, peak.1),
    );

    // Fisher matrix at the peak node: central differences with steps of 2%
    // of the local grid spacing.
    let mut fisher = None;
    let mut sigma_1d = None;
    if n_s8 >= 2 && n_g >= 2 {
        let (s8_0, g_0) = (grid.sigma8[peak.0], grid.gamma[peak.1]);
        let hs = 0.02 * mean_spacing(&grid.sigma8);
        let hg = 0.02 * mean_spacing(&grid.gamma);
        let mut eval = |s8: f64, g: f64| -> Result<f64> {
            let key = g.to_bits();
            let mut total = 0.0;
            for (di, ds) in datasets.iter().enumerate() {
                if !caches[di].contains_key(&key) {
                    let shape = ds.projected_shape(g)?;
                    caches[di].insert(key, shape);
                }
                total += ds.node_lnl(&caches[di][&key], s8, g)?;
            }
            Ok(total)
        };
        let f00 = lnl[peak_idx];
        let fpp = eval(s8_0 + hs, g_0)?;
        let fmm = eval(s8_0 - hs, g_0)?;
        let gpp = eval(s8_0, g_0 + hg)?;
        let gmm = eval(s8_0, g_0 - hg)?;
        let cpp = eval(s8_0 + hs, g_0 + hg)?;
        let cpm = eval(s8_0 + hs, g_0 - hg)?;
        let cmp = eval(s8_0 - hs, g_0 + hg)?;
        let cmm = eval(s8_0 - hs, g_0 - hg)?;
        let h_ss = (fpp - 2.0 * f00 + fmm) / (hs * hs);
        let h_gg = (gpp - 2.0 * f00 + gmm) / (hg * hg);
        let h_sg = (cpp - cpm - cmp + cmm) / (4.0 * hs * hg);
        let f = [[-h_ss, -h_sg], [-h_sg, -h_gg]];
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        if f[0][0] > 0.0 && det > 0.0 {
            sigma_1d = Some([(f[1][1] / det).sqrt(), (f[0][0] / det).sqrt()]);
        }
        fisher = Some(f);
    }

    let peak_lnl = lnl[peak_idx];
    Ok(LikelihoodSurface {
        sigma8: grid.sigma8.clone(),
        gamma: grid.gamma.clone(),
        lnl,
        peak,
        peak_lnl,
        boundary_peak,
        refined_peak,
        fisher,
        sigma_1d,
    })
}

fn mean_spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        return 0.05 * axis[0].abs().max(1e-3);
    }
    (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
}
