//! Cell counting and the overdensity data vector.
//!
//! Three counts per cell: n_obs (galaxies inside the sphere), n_full
//! (expected count for perfect sky coverage and the known radial
//! selection) and n_sel (same, with the actual coverage). The random
//! catalog must be unthinned with weights carrying the angular
//! completeness, so n_full follows from forcing weights to one. The common
//! proportionality is fixed by matching the total expected count to the
//! total observed count.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::catalog::{Catalog, SelectionFunction};
use crate::cosmomodel::background::Background;
use crate::error::{Error, Result};
use crate::klpipe::lattice::{CellIndex, CellLattice};
use crate::mocks::record_position;

#[derive(Debug, Clone)]
pub struct CellCounts {
    pub n_obs: Vec<f64>,
    pub n_full: Vec<f64>,
    pub n_sel: Vec<f64>,
    /// Cells with no randoms: coverage unconstrained, completeness 0.
    pub unconstrained: Vec<bool>,
    /// Records without a redshift cannot be placed in 3D.
    pub skipped_no_redshift: usize,
    /// Proportionality between random counts and expected galaxy counts.
    pub kappa: f64,
}

impl CellCounts {
    pub fn len(&self) -> usize {
        self.n_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_obs.is_empty()
    }

    pub fn completeness(&self, i: usize) -> f64 {
        if self.unconstrained[i] || self.n_full[i] <= 0.0 {
            0.0
        } else {
            (self.n_sel[i] / self.n_full[i]).clamp(0.0, 1.0)
        }
    }
}

/// Per-cell accumulation of a catalog: (count, weight sum) per cell, in
/// fixed chunk order so the result does not depend on the worker count.
fn accumulate(
    catalog: &Catalog,
    lattice: &CellLattice,
    index: &CellIndex,
    bg: &Background,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let n = lattice.len();
    let records = catalog.records();
    let chunk = 8192;
    let n_chunks = records.len().div_ceil(chunk).max(1);
    let partials: Vec<Result<(Vec<f64>, Vec<f64>, usize)>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(records.len());
            let mut cnt = vec![0.0; n];
            let mut wsum = vec![0.0; n];
            let mut skipped = 0usize;
            for rec in &records[lo..hi] {
                match record_position(rec, bg)? {
                    Some(p) => {
                        if let Some(cell) = index.cell_of(lattice, &p) {
                            cnt[cell] += 1.0;
                            wsum[cell] += rec.weight;
                        }
                    }
                    None => skipped += 1,
                }
            }
            Ok((cnt, wsum, skipped))
        })
        .collect();
    let mut cnt = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    let mut skipped = 0usize;
    for part in partials {
        let (c, w, s) = part?;
        for i in 0..n {
            cnt[i] += c[i];
            wsum[i] += w[i];
        }
        skipped += s;
    }
    Ok((cnt, wsum, skipped))
}

/// Count galaxies and randoms into lattice cells and form the three-count
/// scheme. `randoms` must cover the region densely (>= ~50x the galaxy
/// density) and carry completeness weights without thinning.
pub fn count_cells(
    catalog: &Catalog,
    randoms: &Catalog,
    lattice: &CellLattice,
    selection: &SelectionFunction,
    bg: &Background,
) -> Result<CellCounts> {
    if lattice.is_empty() {
        return Err(Error::Empty("lattice has no cells".into()));
    }
    if randoms.len() < catalog.len() {
        return Err(Error::Domain(format!(
            "random catalog ({}) sparser than the data ({}); need a dense unthinned random sample",
            randoms.len(),
            catalog.len()
        )));
    }
    let index = CellIndex::build(lattice);
    let (gal_cnt, _gal_w, skipped) = accumulate(catalog, lattice, &index, bg)?;
    let (rnd_cnt, rnd_w, _) = accumulate(randoms, lattice, &index, bg)?;

    let n = lattice.len();
    let mut phi = vec![0.0; n];
    for i in 0..n {
        let d = lattice.center_distance(i);
        phi[i] = selection.phi_at(d)?;
    }
    let mut sel_raw = vec![0.0; n];
    let mut full_raw = vec![0.0; n];
    let mut unconstrained = vec![false; n];
    for i in 0..n {
        if rnd_cnt[i] <= 0.0 {
            unconstrained[i] = true;
            continue;
        }
        sel_raw[i] = rnd_w[i] * phi[i];
        full_raw[i] = rnd_cnt[i] * phi[i];
    }
    let total_obs: f64 = gal_cnt.iter().sum();
    let total_sel: f64 = sel_raw.iter().sum();
    if total_sel <= 0.0 {
        return Err(Error::Empty("no selected coverage: all cells unconstrained or phi = 0".into()));
    }
    let kappa = total_obs / total_sel;
    let n_sel: Vec<f64> = sel_raw.iter().map(|v| kappa * v).collect();
    let n_full: Vec<f64> = full_raw.iter().map(|v| kappa * v).collect();
    Ok(CellCounts {
        n_obs: gal_cnt,
        n_full,
        n_sel,
        unconstrained,
        skipped_no_redshift: skipped,
        kappa,
    })
}

/// Overdensity data vector over the surviving cells.
#[derive(Debug, Clone)]
pub struct OverdensityVector {
    /// x_i = n_obs / n_sel - 1 per surviving cell.
    pub x: DVector<f64>,
    /// Shot-noise variance 1 / n_sel per surviving cell.
    pub shot: DVector<f64>,
    /// Indices into the lattice.
    pub cells: Vec<usize>,
}

impl OverdensityVector {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Keep cells with completeness >= threshold and form x and the shot-noise
/// term. Rejecting low-completeness cells avoids large inversion factors
/// from incomplete coverage.
pub fn overdensities(counts: &CellCounts, threshold: f64) -> Result<OverdensityVector> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Domain("completeness threshold must lie in (0, 1]".into()));
    }
    let mut x = Vec::new();
    let mut shot = Vec::new();
    let mut cells = Vec::new();
    for i in 0..counts.len() {
        let c = counts.completeness(i);
        if c < threshold || counts.n_sel[i] <= 0.0 {
            continue;
        }
        x.push(counts.n_obs[i] / counts.n_sel[i] - 1.0);
        shot.push(1.0 / counts.n_sel[i]);
        cells.push(i);
    }
    if cells.is_empty() {
        return Err(Error::Empty("no cells survive the completeness threshold".into()));
    }
    Ok(OverdensityVector {
        x: DVector::from_vec(x),
        shot: DVector::from_vec(shot),
        cells,
    })
}
