//! Fixed-depth declination-band / RA-bin grid index for cone searches.
//! The index only narrows the candidate set; membership is always decided
//! by the exact great-circle test, so results match a linear scan.

use std::collections::HashMap;

use crate::catalog::GalaxyRecord;
use crate::geometry::DEG;

const BAND_DEG: f64 = 1.0;
const RA_BIN_DEG: f64 = 1.0;
const N_BANDS: i32 = 180;
const N_RA: i32 = 360;

#[derive(Debug, Clone, Default)]
pub(crate) struct SkyIndex {
    buckets: HashMap<(i32, i32), Vec<u32>>,
}

fn band_of(dec: f64) -> i32 {
    (((dec + 90.0) / BAND_DEG).floor() as i32).clamp(0, N_BANDS - 1)
}

fn ra_bin_of(ra: f64) -> i32 {
    ((ra.rem_euclid(360.0) / RA_BIN_DEG).floor() as i32).clamp(0, N_RA - 1)
}

impl SkyIndex {
    pub fn build(records: &[GalaxyRecord]) -> Self {
        let mut buckets: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            buckets
                .entry((band_of(r.dec), ra_bin_of(r.ra)))
                .or_default()
                .push(i as u32);
        }
        SkyIndex { buckets }
    }

    /// Visit a superset of the records within `radius_rad` of the center.
    pub fn for_candidates<F: FnMut(&GalaxyRecord)>(
        &self,
        records: &[GalaxyRecord],
        ra: f64,
        dec: f64,
        radius_rad: f64,
        mut visit: F,
    ) {
        let radius_deg = radius_rad / DEG;
        let band_lo = band_of((dec - radius_deg).max(-90.0));
        let band_hi = band_of((dec + radius_deg).min(90.0));
        let sin_r = radius_rad.min(std::f64::consts::PI).sin().abs();
        for band in band_lo..=band_hi {
            // Most permissive cos(dec) within the band decides the RA window.
            let b0 = -90.0 + band as f64 * BAND_DEG;
            let b1 = b0 + BAND_DEG;
            let max_abs = b0.abs().max(b1.abs());
            let min_cos = (max_abs * DEG).cos().max(0.0);
            let full_circle = min_cos <= sin_r || radius_deg >= 180.0;
            let half_width_bins = if full_circle {
                N_RA
            } else {
                ((sin_r / min_cos).asin() / DEG / RA_BIN_DEG).ceil() as i32 + 1
            };
            let center_bin = ra_bin_of(ra);
            let (lo, hi) = if half_width_bins * 2 + 1 >= N_RA {
                (0, N_RA - 1)
            } else {
                (center_bin - half_width_bins, center_bin + half_width_bins)
            };
            for raw in lo..=hi {
                let bin = raw.rem_euclid(N_RA);
                if let Some(ids) = self.buckets.get(&(band, bin)) {
                    for &i in ids {
                        visit(&records[i as usize]);
                    }
                }
            }
        }
    }
}
