//! Survey geometry: idealized stripe layout, spherical helpers, survey
//! regions for the spatial analysis, and angular completeness maps.
//!
//! Stripes are declination bands of fixed width stacked from `dec0`, each
//! spanning `[ra_min, ra_max)`. Within a stripe the tangent-plane "stripe
//! coordinates" are `x` along the scan direction (RA, scaled by cos of the
//! stripe center declination) and `y` across the scan (Dec offset from the
//! stripe center), both in degrees. Each stripe is split across the scan
//! into `camcols` camera columns and along the scan into field tiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEG: f64 = std::f64::consts::PI / 180.0;
pub const ARCMIN: f64 = DEG / 60.0;

/// Great-circle separation in radians, haversine form (stable at small
/// angles). Inputs in degrees.
pub fn angular_separation(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let d1 = dec1 * DEG;
    let d2 = dec2 * DEG;
    let sdd = (0.5 * (d2 - d1)).sin();
    let sdr = (0.5 * (ra2 - ra1) * DEG).sin();
    let h = sdd * sdd + d1.cos() * d2.cos() * sdr * sdr;
    2.0 * h.sqrt().min(1.0).asin()
}

/// Unit vector for (ra, dec) in degrees.
pub fn unit_vector(ra: f64, dec: f64) -> [f64; 3] {
    let (sr, cr) = (ra * DEG).sin_cos();
    let (sd, cd) = (dec * DEG).sin_cos();
    [cd * cr, cd * sr, sd]
}

/// Inverse of [`unit_vector`] scaled by a radial distance: returns
/// (ra deg in [0,360), dec deg, r).
pub fn sky_of_point(p: [f64; 3]) -> (f64, f64, f64) {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let dec = (p[2] / r).clamp(-1.0, 1.0).asin() / DEG;
    let mut ra = p[1].atan2(p[0]) / DEG;
    if ra < 0.0 {
        ra += 360.0;
    }
    (ra, dec, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeLayout {
    /// Id of the first stripe.
    pub stripe0: i32,
    pub n_stripes: u32,
    /// Stripe width across the scan, degrees.
    pub width_deg: f64,
    /// Southern edge of the first stripe, degrees.
    pub dec0_deg: f64,
    pub ra_min_deg: f64,
    pub ra_max_deg: f64,
    /// Camera columns per stripe.
    pub camcols: u8,
    /// Field tile length along the scan, arcmin.
    pub field_arcmin: f64,
}

impl Default for StripeLayout {
    fn default() -> Self {
        StripeLayout {
            stripe0: 0,
            n_stripes: 10,
            width_deg: 2.5,
            dec0_deg: -12.5,
            ra_min_deg: 0.0,
            ra_max_deg: 20.0,
            camcols: 12,
            field_arcmin: 10.0,
        }
    }
}

impl StripeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.n_stripes == 0 || self.width_deg <= 0.0 {
            return Err(Error::Config("layout needs stripes of positive width".into()));
        }
        if self.ra_max_deg <= self.ra_min_deg {
            return Err(Error::Config("layout RA range is empty".into()));
        }
        if self.camcols == 0 || self.camcols > 12 {
            return Err(Error::Config("camcols must be in 1..=12".into()));
        }
        if self.field_arcmin <= 0.0 {
            return Err(Error::Config("field length must be positive".into()));
        }
        let dec_hi = self.dec0_deg + self.n_stripes as f64 * self.width_deg;
        if self.dec0_deg < -90.0 || dec_hi > 90.0 {
            return Err(Error::Config("layout exceeds declination range".into()));
        }
        Ok(())
    }

    pub fn stripe_ids(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.n_stripes as i32).map(|i| self.stripe0 + i)
    }

    /// Declination band `[lo, hi)` of a stripe.
    pub fn stripe_bounds(&self, stripe: i32) -> Result<(f64, f64)> {
        let i = stripe - self.stripe0;
        if i < 0 || i >= self.n_stripes as i32 {
            return Err(Error::Domain(format!("stripe {stripe} not in layout")));
        }
        let lo = self.dec0_deg + i as f64 * self.width_deg;
        Ok((lo, lo + self.width_deg))
    }

    pub fn stripe_center_dec(&self, stripe: i32) -> Result<f64> {
        let (lo, hi) = self.stripe_bounds(stripe)?;
        Ok(0.5 * (lo + hi))
    }

    /// Stripe containing a declination, if any.
    pub fn stripe_of(&self, dec: f64) -> Option<i32> {
        let i = ((dec - self.dec0_deg) / self.width_deg).floor();
        if i < 0.0 || i >= self.n_stripes as f64 {
            return None;
        }
        Some(self.stripe0 + i as i32)
    }

    pub fn contains(&self, ra: f64, dec: f64) -> bool {
        ra >= self.ra_min_deg && ra < self.ra_max_deg && self.stripe_of(dec).is_some()
    }

    /// Tangent-plane stripe coordinates (x along scan, y across), degrees.
    pub fn stripe_coords(&self, stripe: i32, ra: f64, dec: f64) -> Result<(f64, f64)> {
        let c = self.stripe_center_dec(stripe)?;
        let x = (ra - self.ra_min_deg) * (c * DEG).cos();
        let y = dec - c;
        Ok((x, y))
    }

    /// Along-scan extent of a stripe in degrees of tangent-plane x.
    pub fn scan_length_deg(&self, stripe: i32) -> Result<f64> {
        let c = self.stripe_center_dec(stripe)?;
        Ok((self.ra_max_deg - self.ra_min_deg) * (c * DEG).cos())
    }

    /// Camcol (1-based) from the across-scan coordinate.
    pub fn camcol_of(&self, y_deg: f64) -> u8 {
        let w = self.width_deg;
        let f = ((y_deg + 0.5 * w) / w * self.camcols as f64).floor();
        (f as i64).clamp(0, self.camcols as i64 - 1) as u8 + 1
    }

    /// Declination band `[lo, hi)` of one camcol within a stripe.
    pub fn camcol_bounds(&self, stripe: i32, camcol: u8) -> Result<(f64, f64)> {
        if camcol == 0 || camcol > self.camcols {
            return Err(Error::Domain(format!("camcol {camcol} outside layout")));
        }
        let (lo, _) = self.stripe_bounds(stripe)?;
        let h = self.width_deg / self.camcols as f64;
        let b = lo + (camcol - 1) as f64 * h;
        Ok((b, b + h))
    }

    pub fn field_of(&self, x_deg: f64) -> i32 {
        (x_deg * 60.0 / self.field_arcmin).floor() as i32
    }

    /// (stripe, camcol, field) for a sky position inside the layout.
    pub fn assign(&self, ra: f64, dec: f64) -> Option<(i32, u8, i32)> {
        if ra < self.ra_min_deg || ra >= self.ra_max_deg {
            return None;
        }
        let stripe = self.stripe_of(dec)?;
        let (x, y) = self.stripe_coords(stripe, ra, dec).ok()?;
        Some((stripe, self.camcol_of(y), self.field_of(x)))
    }

    /// Solid angle of one stripe, steradians.
    pub fn stripe_area_sr(&self, stripe: i32) -> Result<f64> {
        let (lo, hi) = self.stripe_bounds(stripe)?;
        let dra = (self.ra_max_deg - self.ra_min_deg) * DEG;
        Ok(dra * ((hi * DEG).sin() - (lo * DEG).sin()))
    }
}

/// Survey volume for the spatial (KL) analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurveyRegion {
    /// Axis-aligned comoving box, for tests and packing checks.
    Box { lo: [f64; 3], hi: [f64; 3] },
    /// Spherical wedge: RA/Dec ranges (degrees) and a comoving distance
    /// shell (Mpc/h). The observer sits at the origin.
    Wedge {
        ra_deg: [f64; 2],
        dec_deg: [f64; 2],
        dist: [f64; 2],
    },
}

impl SurveyRegion {
    pub fn validate(&self) -> Result<()> {
        match self {
            SurveyRegion::Box { lo, hi } => {
                if (0..3).any(|i| hi[i] <= lo[i]) {
                    return Err(Error::Config("degenerate box region".into()));
                }
            }
            SurveyRegion::Wedge { ra_deg, dec_deg, dist } => {
                if ra_deg[1] <= ra_deg[0] || dec_deg[1] <= dec_deg[0] || dist[1] <= dist[0] {
                    return Err(Error::Config("degenerate wedge region".into()));
                }
                if dist[0] < 0.0 || dec_deg[0] < -90.0 || dec_deg[1] > 90.0 {
                    return Err(Error::Config("wedge outside valid ranges".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            SurveyRegion::Box { lo, hi } => (0..3).all(|i| p[i] >= lo[i] && p[i] < hi[i]),
            SurveyRegion::Wedge { ra_deg, dec_deg, dist } => {
                let (ra, dec, r) = sky_of_point(p);
                r >= dist[0]
                    && r < dist[1]
                    && dec >= dec_deg[0]
                    && dec < dec_deg[1]
                    && ra >= ra_deg[0]
                    && ra < ra_deg[1]
            }
        }
    }

    /// Cartesian axis-aligned bounding box.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            SurveyRegion::Box { lo, hi } => (*lo, *hi),
            SurveyRegion::Wedge { ra_deg, dec_deg, dist } => {
                // Sample the wedge boundary densely; adequate for lattice
                // seeding which only needs an enclosing box.
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                let n = 24;
                for i in 0..=n {
                    let ra = ra_deg[0] + (ra_deg[1] - ra_deg[0]) * i as f64 / n as f64;
                    for j in 0..=n {
                        let dec = dec_deg[0] + (dec_deg[1] - dec_deg[0]) * j as f64 / n as f64;
                        let u = unit_vector(ra, dec);
                        for &r in &[dist[0], dist[1]] {
                            for a in 0..3 {
                                lo[a] = lo[a].min(u[a] * r);
                                hi[a] = hi[a].max(u[a] * r);
                            }
                        }
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            SurveyRegion::Box { lo, hi } => (0..3).map(|i| hi[i] - lo[i]).product(),
            SurveyRegion::Wedge { ra_deg, dec_deg, dist } => {
                let omega = (ra_deg[1] - ra_deg[0])
                    * DEG
                    * ((dec_deg[1] * DEG).sin() - (dec_deg[0] * DEG).sin());
                omega / 3.0 * (dist[1].powi(3) - dist[0].powi(3))
            }
        }
    }
}

/// Piecewise-constant angular completeness map: the first matching
/// rectangle wins, otherwise `default` applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMap {
    #[serde(default)]
    pub zones: Vec<WeightZone>,
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightZone {
    pub ra_deg: [f64; 2],
    pub dec_deg: [f64; 2],
    pub weight: f64,
}

impl Default for WeightMap {
    fn default() -> Self {
        WeightMap { zones: Vec::new(), default: 1.0 }
    }
}

impl WeightMap {
    pub fn uniform(w: f64) -> Self {
        WeightMap { zones: Vec::new(), default: w }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        if !ok(self.default) || self.zones.iter().any(|z| !ok(z.weight)) {
            return Err(Error::Config("weights must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn weight_at(&self, ra: f64, dec: f64) -> f64 {
        for z in &self.zones {
            if ra >= z.ra_deg[0] && ra < z.ra_deg[1] && dec >= z.dec_deg[0] && dec < z.dec_deg[1] {
                return z.weight;
            }
        }
        self.default
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn separation_matches_known_cases() {
        assert_relative_eq!(angular_separation(0.0, 0.0, 90.0, 0.0), 90.0 * DEG, epsilon = 1e-12);
        assert_relative_eq!(angular_separation(10.0, -90.0, 30.0, 90.0), 180.0 * DEG, epsilon = 1e-12);
        // Small-angle stability: 1 arcsec apart in RA at the equator.
        let s = angular_separation(0.0, 0.0, 1.0 / 3600.0, 0.0);
        assert_relative_eq!(s, DEG / 3600.0, epsilon = 1e-15);
    }

    #[test]
    fn sky_roundtrip() {
        let p = unit_vector(123.4, -25.6);
        let (ra, dec, r) = sky_of_point([p[0] * 7.0, p[1] * 7.0, p[2] * 7.0]);
        assert_relative_eq!(ra, 123.4, epsilon = 1e-10);
        assert_relative_eq!(dec, -25.6, epsilon = 1e-10);
        assert_relative_eq!(r, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn layout_assignment_is_consistent() {
        let l = StripeLayout::default();
        l.validate().unwrap();
        let (stripe, camcol, field) = l.assign(5.0, 0.1).unwrap();
        assert_eq!(stripe, l.stripe_of(0.1).unwrap());
        assert!((1..=12).contains(&camcol));
        assert!(field >= 0);
        // Bottom edge of the stripe is camcol 1, top edge camcol 12.
        let (lo, hi) = l.stripe_bounds(stripe).unwrap();
        assert_eq!(l.assign(5.0, lo + 1e-9).unwrap().1, 1);
        assert_eq!(l.assign(5.0, hi - 1e-9).unwrap().1, 12);
        assert!(l.assign(25.0, 0.1).is_none());
        assert!(l.assign(5.0, 80.0).is_none());
    }

    #[test]
    fn camcol_bounds_partition_stripe() {
        let l = StripeLayout::default();
        let (lo, hi) = l.stripe_bounds(3).unwrap();
        let mut edge = lo;
        for c in 1..=12u8 {
            let (a, b) = l.camcol_bounds(3, c).unwrap();
            assert_relative_eq!(a, edge, epsilon = 1e-12);
            edge = b;
        }
        assert_relative_eq!(edge, hi, epsilon = 1e-12);
    }

    #[test]
    fn wedge_volume_and_membership() {
        let w = SurveyRegion::Wedge {
            ra_deg: [0.0, 90.0],
            dec_deg: [0.0, 90.0],
            dist: [0.0, 1.0],
        };
        w.validate().unwrap();
        // One octant of the unit ball.
        assert_relative_eq!(w.volume(), 4.0 / 3.0 * std::f64::consts::PI / 8.0, epsilon = 1e-12);
        assert!(w.contains(unit_vector(45.0, 45.0).map(|v| v * 0.5)));
        assert!(!w.contains(unit_vector(45.0, -5.0).map(|v| v * 0.5)));
    }

    #[test]
    fn weight_map_zones() {
        let m = WeightMap {
            zones: vec![WeightZone { ra_deg: [0.0, 1.0], dec_deg: [0.0, 1.0], weight: 0.25 }],
            default: 1.0,
        };
        assert_eq!(m.weight_at(0.5, 0.5), 0.25);
        assert_eq!(m.weight_at(1.5, 0.5), 1.0);
    }
}
