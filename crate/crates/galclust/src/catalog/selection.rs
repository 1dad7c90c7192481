//! Radial selection function: the probability that a galaxy at comoving
//! distance d enters the flux-limited sample, its cumulative radial CDF for
//! drawing mock distances, and the logarithmic derivative with respect to a
//! magnitude zero-point shift (the modulation coefficient of zero-point
//! errors).
//!
//! The analytic default models the luminosity function as a Gaussian in
//! absolute magnitude with width `sigma_mag`, so
//! `phi(d) = Phi((-5/sigma_mag) log10(d/d_half))` with `d_half` the distance
//! where half the population passes the flux limit. A magnitude shift dm
//! moves the argument by `-dm/sigma_mag`, which gives
//! `dln(phi)/dm = -pdf(x)/(sigma_mag Phi(x))`: small nearby, amplified
//! steeply toward the survey edge.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_pdf, Interp1};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluxLimitedModel {
    /// Gaussian luminosity-function width in magnitudes.
    pub sigma_mag: f64,
    /// Distance at which the selection probability is 1/2, Mpc/h.
    pub d_half: f64,
}

impl Default for FluxLimitedModel {
    fn default() -> Self {
        FluxLimitedModel { sigma_mag: 0.3, d_half: 1800.0 }
    }
}

impl FluxLimitedModel {
    fn argument(&self, d: f64) -> f64 {
        -(5.0 / self.sigma_mag) * (d / self.d_half).log10()
    }

    /// Selection probability at distance d under a magnitude zero-point
    /// shift dm (positive dm pushes objects below the flux limit).
    pub fn phi_shifted(&self, d: f64, dm: f64) -> f64 {
        normal_cdf(self.argument(d) - dm / self.sigma_mag)
    }

    pub fn phi(&self, d: f64) -> f64 {
        self.phi_shifted(d, 0.0)
    }

    /// d ln(phi) / d m at dm = 0 (negative; magnitude grows with depth).
    pub fn dlnphi_dm(&self, d: f64) -> f64 {
        let x = self.argument(d);
        -normal_pdf(x) / (self.sigma_mag * normal_cdf(x))
    }

    /// Tabulate on a linear distance grid.
    pub fn tabulate(&self, d_min: f64, d_max: f64, rows: usize) -> Result<SelectionFunction> {
        if !(d_min > 0.0) || d_max <= d_min || rows < 2 {
            return Err(Error::Config("selection table needs 0 < d_min < d_max, rows >= 2".into()));
        }
        let dist: Vec<f64> = (0..rows)
            .map(|i| d_min + (d_max - d_min) * i as f64 / (rows - 1) as f64)
            .collect();
        let phi: Vec<f64> = dist.iter().map(|&d| self.phi(d)).collect();
        let dln: Vec<f64> = dist.iter().map(|&d| self.dlnphi_dm(d)).collect();
        // Cumulative radial CDF: Int phi s^2 ds, trapezoid on the table grid.
        let mut cum = vec![0.0; rows];
        for i in 1..rows {
            let a = phi[i - 1] * dist[i - 1] * dist[i - 1];
            let b = phi[i] * dist[i] * dist[i];
            cum[i] = cum[i - 1] + 0.5 * (a + b) * (dist[i] - dist[i - 1]);
        }
        let total = cum[rows - 1];
        if total > 0.0 {
            for c in cum.iter_mut() {
                *c /= total;
            }
        }
        SelectionFunction::from_columns(dist, phi, cum, dln)
    }
}

/// Tabulated selection function with linear interpolation; exact at knots,
/// monotone between knots for the cumulative column.
#[derive(Debug, Clone)]
pub struct SelectionFunction {
    dist: Vec<f64>,
    phi: Vec<f64>,
    phi_cum: Vec<f64>,
    dlnphi_dm: Vec<f64>,
    phi_i: Interp1,
    cum_i: Interp1,
    dln_i: Interp1,
}

impl SelectionFunction {
    pub fn from_columns(
        dist: Vec<f64>,
        phi: Vec<f64>,
        phi_cum: Vec<f64>,
        dlnphi_dm: Vec<f64>,
    ) -> Result<Self> {
        if phi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain("phi must lie in [0,1]".into()));
        }
        if phi_cum.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("phi_cum must be monotone non-decreasing".into()));
        }
        let phi_i = Interp1::new(dist.clone(), phi.clone())?;
        let cum_i = Interp1::new(dist.clone(), phi_cum.clone())?;
        let dln_i = Interp1::new(dist.clone(), dlnphi_dm.clone())?;
        Ok(SelectionFunction { dist, phi, phi_cum, dlnphi_dm, phi_i, cum_i, dln_i })
    }

    /// Analytic default tabulated over the default survey depth.
    pub fn default_table() -> Self {
        FluxLimitedModel::default()
            .tabulate(20.0, 2400.0, 600)
            .expect("default selection table")
    }

    pub fn d_min(&self) -> f64 {
        self.dist[0]
    }

    pub fn d_max(&self) -> f64 {
        *self.dist.last().unwrap()
    }

    pub fn rows(&self) -> usize {
        self.dist.len()
    }

    pub fn columns(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.dist, &self.phi, &self.phi_cum, &self.dlnphi_dm)
    }

    pub fn phi_at(&self, d: f64) -> Result<f64> {
        self.phi_i.value(d)
    }

    pub fn cum_at(&self, d: f64) -> Result<f64> {
        self.cum_i.value(d)
    }

    pub fn dlnphi_dm_at(&self, d: f64) -> Result<f64> {
        self.dln_i.value(d)
    }

    pub fn covers(&self, d: f64) -> bool {
        self.phi_i.in_range(d)
    }

    /// Draw a distance from the radial CDF by bisection on the cumulative
    /// column; u in [0,1).
    pub fn sample_distance(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (self.d_min(), self.d_max());
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cum_i.value_clamped(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Text format: header `dist,phi,phi_cum,dlnphi_dm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("dist,phi,phi_cum,dlnphi_dm\n");
        for i in 0..self.dist.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.dist[i], self.phi[i], self.phi_cum[i], self.dlnphi_dm[i]
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { path: path.into(), line: 1, message: "empty file".into() })?
            .1;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        for want in ["dist", "phi", "phi_cum", "dlnphi_dm"] {
            if !cols.contains(&want) {
                return Err(Error::MissingColumn(want.into()));
            }
        }
        let idx = |name: &str| cols.iter().position(|c| *c == name).unwrap();
        let (i_d, i_p, i_c, i_m) = (idx("dist"), idx("phi"), idx("phi_cum"), idx("dlnphi_dm"));
        let (mut d, mut p, mut c, mut m) = (vec![], vec![], vec![], vec![]);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let parse = |i: usize| -> Result<f64> {
                parts
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.into(),
                        line: lineno + 1,
                        message: "bad selection row".into(),
                    })
            };
            d.push(parse(i_d)?);
            p.push(parse(i_p)?);
            c.push(parse(i_c)?);
            m.push(parse(i_m)?);
        }
        SelectionFunction::from_columns(d, p, c, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn analytic_derivative_matches_finite_difference() {
        let model = FluxLimitedModel::default();
        let sf = model.tabulate(100.0, 2400.0, 200).unwrap();
        let (dist, _, _, dln) = sf.columns();
        let h = 3e-5;
        for (i, &d) in dist.iter().enumerate() {
            let fd = (model.phi_shifted(d, h).ln() - model.phi_shifted(d, -h).ln()) / (2.0 * h);
            // 1e-6 relative where the coefficient is resolved; the absolute
            // floor covers rows where ln(phi ~ 1) sits at f64 cancellation.
            assert!(
                (dln[i] - fd).abs() <= 1e-6 * fd.abs() + 1e-10,
                "row {i} (d = {d}): {} vs fd {fd}",
                dln[i]
            );
        }
    }

    #[test]
    fn table_invariants_hold() {
        let sf = SelectionFunction::default_table();
        let (dist, phi, cum, dln) = sf.columns();
        assert!(phi.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(cum.windows(2).all(|w| w[1] >= w[0]));
        // Interpolation exact at knots.
        for i in [0, dist.len() / 2, dist.len() - 1] {
            assert_eq!(sf.phi_at(dist[i]).unwrap(), phi[i]);
            assert_eq!(sf.cum_at(dist[i]).unwrap(), cum[i]);
            assert_eq!(sf.dlnphi_dm_at(dist[i]).unwrap(), dln[i]);
        }
        // Monotone between knots for the cumulative column.
        for i in 0..dist.len() - 1 {
            let mid = 0.5 * (dist[i] + dist[i + 1]);
            let v = sf.cum_at(mid).unwrap();
            assert!(v >= cum[i] - 1e-15 && v <= cum[i + 1] + 1e-15);
        }
    }

    #[test]
    fn modulation_grows_toward_edge() {
        let sf = SelectionFunction::default_table();
        let (dist, _, _, dln) = sf.columns();
        // |dlnphi_dm| monotone beyond the selection peak (phi < 1 zone).
        let first = dist.iter().position(|&d| sf.phi_at(d).unwrap() < 0.999).unwrap();
        for i in first..dist.len() - 1 {
            assert!(dln[i + 1].abs() >= dln[i].abs() - 1e-12);
        }
        // Amplification window at the default survey edge.
        let edge = sf.dlnphi_dm_at(2400.0).unwrap().abs();
        assert!((5.0..=10.0).contains(&edge), "edge amplification {edge}");
    }

    #[test]
    fn file_roundtrip_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sel.csv");
        let sf = SelectionFunction::default_table();
        sf.save(&path).unwrap();
        let back = SelectionFunction::load(&path).unwrap();
        assert_eq!(back.rows(), sf.rows());
        assert_eq!(back.phi_at(500.0).unwrap(), sf.phi_at(500.0).unwrap());

        std::fs::write(&path, "dist,phi,phi_cum\n1,1,0\n2,1,1\n").unwrap();
        assert!(matches!(SelectionFunction::load(&path), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn sampled_distances_follow_cdf() {
        let sf = SelectionFunction::default_table();
        let d = sf.sample_distance(0.5);
        assert_relative_eq!(sf.cum_at(d).unwrap(), 0.5, epsilon = 1e-6);
    }
}
