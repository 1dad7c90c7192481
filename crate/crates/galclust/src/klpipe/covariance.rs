//! Fiducial cell covariance: C = S + N with S_ij the cell-window-smoothed
//! model correlation at the center separation (times the linear
//! redshift-space boost) and N the diagonal shot-noise matrix.
//!
//! The smoothing uses the spherical top-hat pair window at the cell radius
//! inside the Fourier transform, which is exactly the double volume average
//! of xi over two spheres; the full 6D integral never has to be done per
//! matrix element.

use nalgebra::{DMatrix, DVector};

use crate::cosmomodel::{kaiser_boost, xi_from_power, Spectrum, SpectrumParams, XiOptions};
use crate::error::{Error, Result};
use crate::klpipe::counts::OverdensityVector;
use crate::klpipe::lattice::CellLattice;
use crate::numerics::Interp1;

/// Cell-window-smoothed correlation table; entry at r = 0 is the smoothed
/// variance.
#[derive(Debug, Clone)]
pub struct CellXi {
    table: Interp1,
}

impl CellXi {
    /// Build from a normalized spectrum for cells of the given radius,
    /// tabulated out to `r_max`.
    pub fn build(spectrum: &Spectrum, cell_radius: f64, r_max: f64) -> Result<Self> {
        if !(cell_radius > 0.0) || !(r_max > cell_radius) {
            return Err(Error::Domain("cell xi needs 0 < radius < r_max".into()));
        }
        let mut grid = vec![0.0];
        grid.extend(crate::cosmomodel::log_r_grid(cell_radius / 50.0, r_max, 512));
        let opts = XiOptions { window_radius: Some(cell_radius), ..Default::default() };
        let xi = xi_from_power(spectrum, &grid[1..], &opts)?;
        // r = 0 knot: smoothed variance (j0(0) = 1 path through the same
        // quadrature, represented by evaluating at a tiny radius).
        let var = xi_from_power(spectrum, &[cell_radius * 1e-6, cell_radius * 2e-6], &opts)?
            .xi()[0];
        let mut xs = vec![0.0];
        xs.extend_from_slice(xi.r());
        let mut ys = vec![var];
        ys.extend_from_slice(xi.xi());
        Ok(CellXi { table: Interp1::new(xs, ys)? })
    }

    /// Table-backed constructor (tests, pure-noise cases).
    pub fn from_table(r: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        Ok(CellXi { table: Interp1::new(r, xi)? })
    }

    pub fn r_max(&self) -> f64 {
        self.table.x_max()
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        if r > self.table.x_max() {
            return Err(Error::XiRange { r, max: self.table.x_max() });
        }
        Ok(self.table.value_clamped(r))
    }
}

/// Covariance over surviving cells, kept in its signal + noise split.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    /// C = S + diag(noise).
    pub matrix: DMatrix<f64>,
    pub signal: DMatrix<f64>,
    pub noise: DVector<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// S_ij = boost * xi_cell(|c_i - c_j|), N = diag(shot); exact symmetry by
/// construction. Fails if the xi table does not reach the maximum cell
/// separation.
pub fn build_covariance(
    lattice: &CellLattice,
    odv: &OverdensityVector,
    params: &SpectrumParams,
    xi: &CellXi,
) -> Result<CovarianceMatrix> {
    params.validate()?;
    let n = odv.len();
    let boost = kaiser_boost(params);
    let mut signal = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let d = lattice.pair_distance(odv.cells[a], odv.cells[b]);
            let v = boost * xi.value(d)?;
            signal[(a, b)] = v;
            signal[(b, a)] = v;
        }
    }
    let mut matrix = signal.clone();
    for i in 0..n {
        matrix[(i, i)] += odv.shot[i];
    }
    Ok(CovarianceMatrix { matrix, signal, noise: odv.shot.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurveyRegion;
    use crate::klpipe::lattice::{build_lattice, RadiusSpec};
    use rand::Rng;
    use rand::SeedableRng;

    fn toy_odv(cells: Vec<usize>, shot: f64) -> OverdensityVector {
        let n = cells.len();
        OverdensityVector {
            x: DVector::zeros(n),
            shot: DVector::from_element(n, shot),
            cells,
        }
    }

    #[test]
    fn zero_signal_gives_pure_noise() {
        let region = SurveyRegion::Box { lo: [0.0; 3], hi: [20.0; 3] };
        let lat = build_lattice(&region, RadiusSpec::Fixed(3.0), 0).unwrap();
        let odv = toy_odv((0..lat.len()).collect(), 0.04);
        let xi = CellXi::from_table(vec![0.0, 100.0], vec![0.0, 0.0]).unwrap();
        let c = build_covariance(&lat, &odv, &SpectrumParams::default(), &xi).unwrap();
        for a in 0..c.dim() {
            for b in 0..c.dim() {
                let expect = if a == b { 0.04 } else { 0.0 };
                assert_eq!(c.matrix[(a, b)], expect);
            }
        }
    }

    #[test]
    fn compact_support_decorrelates_distant_cells() {
        let region = SurveyRegion::Box { lo: [0.0; 3], hi: [60.0, 12.0, 12.0] };
        let lat = build_lattice(&region, RadiusSpec::Fixed(3.0), 0).unwrap();
        let odv = toy_odv((0..lat.len()).collect(), 0.01);
        // xi vanishes beyond 10 Mpc/h but the table extends to 100.
        let xi = CellXi::from_table(
            vec![0.0, 5.0, 10.0, 100.0],
            vec![0.5, 0.1, 0.0, 0.0],
        )
        .unwrap();
        let c = build_covariance(&lat, &odv, &SpectrumParams::default(), &xi).unwrap();
        let mut checked = false;
        for a in 0..c.dim() {
            for b in (a + 1)..c.dim() {
                if lat.pair_distance(odv.cells[a], odv.cells[b]) > 10.0 {
                    assert_eq!(c.matrix[(a, b)], 0.0);
                    checked = true;
                }
            }
        }
        assert!(checked);
        // Range overflow is an error.
        let small = CellXi::from_table(vec![0.0, 5.0], vec![0.5, 0.0]).unwrap();
        assert!(matches!(
            build_covariance(&lat, &odv, &SpectrumParams::default(), &small),
            Err(Error::XiRange { .. })
        ));
    }

    #[test]
    fn matches_monte_carlo_volume_integral() {
        // S_ij for separated spheres equals the double volume average of
        // the raw xi over the two cells.
        let params = SpectrumParams::default();
        let spectrum = Spectrum::new(params).unwrap();
        let radius = 8.0;
        let xi_cell = CellXi::build(&spectrum, radius, 200.0).unwrap();
        let raw = crate::cosmomodel::xi_from_pk(
            &spectrum,
            &crate::cosmomodel::log_r_grid(0.05, 200.0, 640),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut sample_in_sphere = |c: [f64; 3]| -> [f64; 3] {
            loop {
                let v = [
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ];
                if v[0] * v[0] + v[1] * v[1] + v[2] * v[2] <= 1.0 {
                    return [c[0] + radius * v[0], c[1] + radius * v[1], c[2] + radius * v[2]];
                }
            }
        };
        for sep in [20.0, 34.0] {
            let c1 = [0.0, 0.0, 0.0];
            let c2 = [sep, 0.0, 0.0];
            let k = 400_000;
            let mut acc = 0.0;
            for _ in 0..k {
                let p1 = sample_in_sphere(c1);
                let p2 = sample_in_sphere(c2);
                let d = ((p1[0] - p2[0]).powi(2) + (p1[1] - p2[1]).powi(2) + (p1[2] - p2[2]).powi(2))
                    .sqrt();
                acc += raw.value_or_zero(d);
            }
            let mc = acc / k as f64;
            let model = xi_cell.value(sep).unwrap();
            assert!(
                (model - mc).abs() <= 0.05 * mc.abs(),
                "sep {sep}: window {model} vs MC {mc}"
            );
        }
    }
}
