//! Fixed flat background for the redshift-to-comoving-distance mapping used
//! when placing catalog records in 3D. The conversion is a configured
//! constant of the artifact, not a fitted quantity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::simpson;

/// Hubble distance c/H0 in Mpc/h.
pub const HUBBLE_DISTANCE: f64 = 2997.92458;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Background {
    pub omega_m: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background { omega_m: 0.3 }
    }
}

impl Background {
    fn e(&self, z: f64) -> f64 {
        (self.omega_m * (1.0 + z).powi(3) + (1.0 - self.omega_m)).sqrt()
    }

    /// Comoving distance in Mpc/h.
    pub fn comoving_distance(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::Domain(format!("redshift must be >= 0, got {z}")));
        }
        if z == 0.0 {
            return Ok(0.0);
        }
        let n = ((z * 400.0).ceil() as usize).clamp(64, 8192);
        Ok(HUBBLE_DISTANCE * simpson(|x| 1.0 / self.e(x), 0.0, z, n))
    }

    /// Inverse mapping by Newton iteration; d in Mpc/h.
    pub fn redshift_at(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
        }
        if d == 0.0 {
            return Ok(0.0);
        }
        let mut z = d / HUBBLE_DISTANCE; // first-order seed
        for _ in 0..64 {
            let f = self.comoving_distance(z)? - d;
            let df = HUBBLE_DISTANCE / self.e(z);
            let step = f / df;
            z -= step;
            if z < 0.0 {
                z = 0.0;
            }
            if step.abs() < 1e-12 * (1.0 + z) {
                return Ok(z);
            }
        }
        Err(Error::Quadrature(format!("redshift inversion stalled at d = {d}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_z_is_hubble_law() {
        let bg = Background::default();
        let d = bg.comoving_distance(0.01).unwrap();
        assert_relative_eq!(d, 0.01 * HUBBLE_DISTANCE, max_relative = 2e-2);
    }

    #[test]
    fn roundtrip_is_exact() {
        let bg = Background::default();
        for &z in &[0.01, 0.1, 0.5, 1.2] {
            let d = bg.comoving_distance(z).unwrap();
            let z2 = bg.redshift_at(d).unwrap();
            assert_relative_eq!(z2, z, max_relative = 1e-9);
        }
    }

    #[test]
    fn matter_only_closed_form() {
        // For omega_m = 1: D = 2 c/H0 (1 - 1/sqrt(1+z)).
        let bg = Background { omega_m: 1.0 };
        let z = 0.8;
        let expect = 2.0 * HUBBLE_DISTANCE * (1.0 - 1.0 / (1.0f64 + z).sqrt());
        assert_relative_eq!(bg.comoving_distance(z).unwrap(), expect, max_relative = 1e-7);
    }
}
