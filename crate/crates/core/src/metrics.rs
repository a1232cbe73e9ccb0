//! Point-spread measurements on reconstructed images: lateral profiles,
//! -6 dB mainlobe width, peak-to-noise SNR and peak sidelobe level.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::ImagingGrid;

/// One image row in dB, normalized so its maximum is exactly 0 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralProfile {
    pub values_db: Vec<f64>,
    /// Lateral sample spacing (m).
    pub spacing: f64,
    /// Lateral coordinate of the first sample (m).
    pub start: f64,
    /// Depth of the row (m).
    pub depth: f64,
}

impl LateralProfile {
    pub fn new(values_db: Vec<f64>, spacing: f64, start: f64, depth: f64) -> Result<Self> {
        if values_db.is_empty() || values_db.iter().any(|v| v.is_nan()) {
            return Err(Error::Measurement(
                "profile must be non-empty and free of NaN".into(),
            ));
        }
        let max = values_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Measurement("profile has no finite maximum".into()));
        }
        Ok(Self {
            values_db: values_db.into_iter().map(|v| v - max).collect(),
            spacing,
            start,
            depth,
        })
    }

    pub fn lateral(&self, i: usize) -> f64 {
        self.start + i as f64 * self.spacing
    }

    fn peak(&self) -> Result<usize> {
        let peak = self
            .values_db
            .iter()
            .position(|&v| v == 0.0)
            .expect("normalized profile contains 0 dB");
        if peak == 0 || peak + 1 == self.values_db.len() {
            return Err(Error::Measurement("profile peak lies on the edge".into()));
        }
        Ok(peak)
    }
}

/// Row of `db_image` nearest to `depth`, renormalized to a 0 dB maximum.
pub fn lateral_profile(
    db_image: &Array2<f64>,
    grid: &ImagingGrid,
    depth: f64,
) -> Result<LateralProfile> {
    let row = grid.nearest_row(depth)?;
    if row >= db_image.nrows() || db_image.ncols() != grid.num_cols() {
        return Err(Error::Domain("image does not match the grid".into()));
    }
    LateralProfile::new(
        db_image.row(row).to_vec(),
        grid.spacing(),
        grid.lateral(0),
        grid.axial(row),
    )
}

const HALF_MAX_DB: f64 = -6.0;

/// Width between the -6 dB crossings either side of the peak, with each
/// crossing interpolated linearly in dB.
pub fn fwhm_minus6db(profile: &LateralProfile) -> Result<f64> {
    let v = &profile.values_db;
    let peak = profile.peak()?;
    let crossing = |inner: usize, outer: usize| -> f64 {
        let (xi, xo) = (profile.lateral(inner), profile.lateral(outer));
        let frac = (v[inner] - HALF_MAX_DB) / (v[inner] - v[outer]);
        xi + frac * (xo - xi)
    };
    let mut left = peak;
    while left > 0 && v[left - 1] >= HALF_MAX_DB {
        left -= 1;
    }
    if left == 0 {
        return Err(Error::Measurement(
            "no -6 dB crossing left of the peak".into(),
        ));
    }
    let mut right = peak;
    while right + 1 < v.len() && v[right + 1] >= HALF_MAX_DB {
        right += 1;
    }
    if right + 1 == v.len() {
        return Err(Error::Measurement(
            "no -6 dB crossing right of the peak".into(),
        ));
    }
    Ok(crossing(right, right + 1) - crossing(left, left - 1))
}

/// Highest level outside the mainlobe, relative to the peak. `-inf` when
/// nothing lies outside.
///
/// The mainlobe runs from the peak through the -6 dB crossings and on to the
/// first local minimum beyond each, so ripple on top of a split mainlobe is
/// not reported as a sidelobe.
pub fn sidelobe_level(profile: &LateralProfile) -> Result<f64> {
    let v = &profile.values_db;
    let peak = profile.peak()?;
    let mut left = peak;
    while left > 0 && (v[left] >= HALF_MAX_DB || v[left - 1] <= v[left]) {
        left -= 1;
    }
    let mut right = peak;
    while right + 1 < v.len() && (v[right] >= HALF_MAX_DB || v[right + 1] <= v[right]) {
        right += 1;
    }
    Ok(v[..left]
        .iter()
        .chain(&v[right + 1..])
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Axis-aligned region in image coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub lateral: (f64, f64),
    pub axial: (f64, f64),
}

impl Roi {
    pub fn centered(lateral: f64, depth: f64, width: f64, height: f64) -> Self {
        Self {
            lateral: (lateral - width / 2.0, lateral + width / 2.0),
            axial: (depth - height / 2.0, depth + height / 2.0),
        }
    }

    /// Inclusive pixel index ranges `(rows, cols)` covered by the region.
    fn pixels(&self, grid: &ImagingGrid) -> Result<((usize, usize), (usize, usize))> {
        let tol = 1e-9 * grid.spacing();
        let cols: Vec<usize> = (0..grid.num_cols())
            .filter(|&c| {
                let x = grid.lateral(c);
                x >= self.lateral.0 - tol && x <= self.lateral.1 + tol
            })
            .collect();
        let rows: Vec<usize> = (0..grid.num_rows())
            .filter(|&r| {
                let z = grid.axial(r);
                z >= self.axial.0 - tol && z <= self.axial.1 + tol
            })
            .collect();
        match (rows.first(), rows.last(), cols.first(), cols.last()) {
            (Some(&r0), Some(&r1), Some(&c0), Some(&c1)) => Ok(((r0, r1), (c0, c1))),
            _ => Err(Error::Domain(format!("region {self:?} covers no pixels"))),
        }
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// `20 log10(peak in signal_roi / std in noise_roi)` on a pre-log envelope image.
pub fn snr_db(
    envelope: &Array2<f64>,
    grid: &ImagingGrid,
    signal_roi: &Roi,
    noise_roi: &Roi,
) -> Result<f64> {
    if envelope.dim() != (grid.num_rows(), grid.num_cols()) {
        return Err(Error::Domain(
            "envelope image does not match the grid".into(),
        ));
    }
    let (sr, sc) = signal_roi.pixels(grid)?;
    let (nr, nc) = noise_roi.pixels(grid)?;
    if overlaps(sr, nr) && overlaps(sc, nc) {
        return Err(Error::Domain("signal and noise regions overlap".into()));
    }
    let peak = (sr.0..=sr.1)
        .flat_map(|r| (sc.0..=sc.1).map(move |c| (r, c)))
        .map(|p| envelope[p])
        .fold(f64::NEG_INFINITY, f64::max);
    let noise: Vec<f64> = (nr.0..=nr.1)
        .flat_map(|r| (nc.0..=nc.1).map(move |c| (r, c)))
        .map(|p| envelope[p])
        .collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / noise.len() as f64;
    let std = var.sqrt();
    let scale = noise.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // rounding in the mean leaves ~1e-17 relative spread on constant regions
    if !(std > 1e-12 * scale) {
        return Err(Error::Domain(
            "noise region has zero standard deviation".into(),
        ));
    }
    Ok(20.0 * (peak / std).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(values: Vec<f64>, spacing: f64) -> LateralProfile {
        let n = values.len();
        LateralProfile::new(values, spacing, -(n as f64 - 1.0) / 2.0 * spacing, 0.0).unwrap()
    }

    #[test]
    fn triangle_fwhm() {
        // 0 dB at center falling linearly to -12 dB at +-1 mm, sampled every 0.1 mm
        let values: Vec<f64> = (-10..=10)
            .map(|k| -12.0 * (k as f64).abs() / 10.0)
            .collect();
        let w = fwhm_minus6db(&profile(values, 0.1e-3)).unwrap();
        assert!((w - 1.0e-3).abs() < 1e-12, "{w}");
    }

    #[test]
    fn gaussian_fwhm() {
        let sigma = 1e-3;
        let dx = 0.01e-3;
        let values: Vec<f64> = (-600..=600)
            .map(|k| {
                let x = k as f64 * dx;
                20.0 * (-(x * x) / (2.0 * sigma * sigma)).exp().log10()
            })
            .collect();
        let w = fwhm_minus6db(&profile(values, dx)).unwrap();
        // -6 dB sits a hair above half amplitude (-6.02 dB)
        assert!((w - 2.3548e-3).abs() < 0.005 * 2.3548e-3, "{w}");
    }

    #[test]
    fn fwhm_ignores_constant_offset_and_needs_crossings() {
        let values: Vec<f64> = (-10..=10)
            .map(|k| -12.0 * (k as f64).abs() / 10.0)
            .collect();
        let a = fwhm_minus6db(&profile(values.clone(), 0.1e-3)).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + 17.5).collect();
        let b = fwhm_minus6db(&profile(shifted, 0.1e-3)).unwrap();
        assert!((a - b).abs() < 1e-15);
        let wide = profile(vec![-1.0, -0.5, 0.0, -0.5, -1.0], 1e-3);
        assert!(matches!(fwhm_minus6db(&wide), Err(Error::Measurement(_))));
        let edge = profile(vec![0.0, -10.0, -20.0], 1e-3);
        assert!(fwhm_minus6db(&edge).is_err());
    }

    #[test]
    fn sidelobe_examples() {
        let p = profile(
            vec![-50.0, -31.0, -45.0, -20.0, 0.0, -20.0, -60.0, -40.0, -70.0],
            1e-3,
        );
        assert_eq!(sidelobe_level(&p).unwrap(), -31.0);
        let mono = profile(vec![-30.0, -20.0, -10.0, 0.0, -10.0, -20.0], 1e-3);
        assert_eq!(sidelobe_level(&mono).unwrap(), f64::NEG_INFINITY);
        let mirrored = profile(p.values_db.iter().rev().copied().collect(), 1e-3);
        assert_eq!(sidelobe_level(&mirrored).unwrap(), -31.0);
        assert!(sidelobe_level(&profile(vec![0.0, -3.0, -9.0], 1e-3)).is_err());
    }

    #[test]
    fn split_mainlobe_top_is_not_a_sidelobe() {
        let p = profile(
            vec![
                -40.0, -29.0, -45.0, -7.0, 0.0, -0.6, -0.1, -7.0, -36.0, -33.0, -50.0,
            ],
            1e-3,
        );
        assert_eq!(sidelobe_level(&p).unwrap(), -29.0);
    }

    #[test]
    fn profile_extraction() {
        let grid = ImagingGrid::new(2e-3, 0.0, 1e-3, 0.5e-3).unwrap();
        let img = Array2::from_shape_fn((3, 5), |(r, c)| -(r as f64) - (c as f64 - 2.0).abs());
        let p = lateral_profile(&img, &grid, 0.6e-3).unwrap();
        assert_eq!(p.values_db, vec![-2.0, -1.0, 0.0, -1.0, -2.0]);
        assert!((p.depth - 0.5e-3).abs() < 1e-15);
        let flat = Array2::from_elem((3, 5), -7.0);
        assert!(lateral_profile(&flat, &grid, 0.0)
            .unwrap()
            .values_db
            .iter()
            .all(|&v| v == 0.0));
        assert!(lateral_profile(&img, &grid, 5e-3).is_err());
    }

    #[test]
    fn snr_example_and_scale_invariance() {
        let grid = ImagingGrid::new(10e-3, 0.0, 4e-3, 0.5e-3).unwrap();
        let mut img = Array2::zeros((grid.num_rows(), grid.num_cols()));
        // 5 x 4 noise pixels alternating 0.49 / 0.51: population std exactly 0.01
        let noise_roi = Roi::centered(3e-3, 1.75e-3, 2e-3, 1.5e-3);
        let ((r0, r1), (c0, c1)) = noise_roi.pixels(&grid).unwrap();
        assert_eq!((r1 - r0 + 1) * (c1 - c0 + 1), 20);
        let mut flip = false;
        for r in r0..=r1 {
            for c in c0..=c1 {
                img[[r, c]] = if flip { 0.51 } else { 0.49 };
                flip = !flip;
            }
        }
        let signal_roi = Roi::centered(-3e-3, 2e-3, 2e-3, 2e-3);
        img[[4, grid.nearest_col(-3e-3)]] = 1.0;
        let snr = snr_db(&img, &grid, &signal_roi, &noise_roi).unwrap();
        assert!((snr - 40.0).abs() < 1e-9, "{snr}");
        let doubled = img.mapv(|v| 2.0 * v);
        assert!((snr_db(&doubled, &grid, &signal_roi, &noise_roi).unwrap() - snr).abs() < 1e-12);
        assert!(snr_db(&img, &grid, &signal_roi, &signal_roi).is_err());
        let flat = Array2::from_elem(img.dim(), 0.3);
        assert!(snr_db(&flat, &grid, &signal_roi, &noise_roi).is_err());
    }
}
