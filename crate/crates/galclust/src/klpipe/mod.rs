//! Karhunen-Loeve likelihood engine: spherical cells on a dense-packed
//! hexagonal lattice, galaxy counts with three-count completeness handling,
//! fiducial covariance synthesis from the model correlation function,
//! eigenmode truncation, and a Gaussian likelihood over a (sigma8, gamma)
//! parameter grid with Fisher errors at the peak.

mod basis;
mod counts;
mod covariance;
mod lattice;
mod likelihood;

pub use basis::{
    decompose_matrix, kl_decompose, kl_project, kl_project_full, BasisDiagnostics, KeepSpec,
    KlBasis,
};
pub use counts::{count_cells, overdensities, CellCounts, OverdensityVector};
pub use covariance::{build_covariance, CellXi, CovarianceMatrix};
pub use lattice::{build_lattice, CellIndex, CellLattice, RadiusSpec};
pub use likelihood::{
    full_log_likelihood, gaussian_lnl, likelihood_grid, log_likelihood, KlDataset,
    LikelihoodSurface, ParamGrid2,
};
