//! Desk-scale galaxy clustering statistics.
//!
//! The crate bundles two estimation pipelines and the mock-generation
//! machinery needed to validate them end to end without external data:
//!
//! * [`angcorr`] — the N log N angular two-point correlation engine:
//!   galaxies and survey masks are rasterized onto a fine per-stripe grid,
//!   windowed pair counts (DD, DR, RR) are computed by FFT convolution, the
//!   Landy-Szalay estimator is formed per lag, the flat-field streak along
//!   the scan direction is censored, and azimuthal averages are combined
//!   across stripes.
//! * [`klpipe`] — the Karhunen-Loeve likelihood engine: spherical cells on a
//!   dense-packed hexagonal lattice, three-count completeness handling,
//!   fiducial cell covariance synthesis, eigenmode truncation, and a
//!   Gaussian likelihood scanned over a (sigma8, gamma) grid with Fisher
//!   errors at the peak.
//! * [`systematics`] — photometric zero-point error machinery: magnitude
//!   shifts per (stripe, camcol) are propagated through the selection
//!   function into modulated data vectors, accumulated into an ensemble
//!   systematics covariance, and used to reject systematics-dominated
//!   eigenmodes from the likelihood basis.
//! * [`catalog`], [`cosmomodel`], [`mocks`] — the file-backed catalog store
//!   with masks and predicate subsamples, the fiducial power-spectrum /
//!   correlation-function model, and seeded mock generators (Gaussian and
//!   lognormal random fields, Poisson sampling, random catalogs, zero-point
//!   tables).
//!
//! Units: distances in Mpc/h, sky positions in degrees, small angular scales
//! (cell sizes, mask radii, correlation lags) in arcmin, magnitudes in mag.
//!
//! The `galclust` binary drives batch runs (`mock`, `angcorr`, `kl`, `sys`);
//! the `examples/` directory shows each capability as a small program.

pub mod angcorr;
pub mod catalog;
pub mod config;
pub mod cosmomodel;
pub mod driver;
pub mod error;
pub mod fourier;
pub mod geometry;
pub mod io;
pub mod klpipe;
pub mod mocks;
pub mod numerics;
pub mod systematics;

pub use error::{Error, Result};
