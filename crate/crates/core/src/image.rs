//! Beamformed images sampled along scanlines at the acquisition rate, and
//! their conversion onto the display grid.

use ndarray::Array2;

use crate::config::BeamformConfig;
use crate::dsp::{BandPass, Envelope};
use crate::error::Result;
use crate::geometry::{AcquisitionParams, ImagingGrid};
use crate::par;

/// Axial sampling of a scanline: one sample per acquisition period, so sample
/// `k` sits at depth `axial_start + k * c / fs` and adjacent samples are
/// exactly `1 / fs` apart in time. Lines extend [`RfLayout::MARGIN`] samples
/// beyond the grid at both ends so filtering edge effects stay off the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfLayout {
    pub axial_start: f64,
    /// Depth step `c / fs` (m).
    pub step: f64,
    pub len: usize,
}

impl RfLayout {
    pub const MARGIN: usize = 64;

    pub fn for_grid(grid: &ImagingGrid, acq: &AcquisitionParams) -> Self {
        let step = acq.sound_speed / acq.sampling_rate;
        let span = grid.axial(grid.num_rows() - 1) - grid.axial_start();
        let len = ((span / step) + 1e-9).ceil() as usize + 1 + 2 * Self::MARGIN;
        Self {
            axial_start: grid.axial_start() - Self::MARGIN as f64 * step,
            step,
            len,
        }
    }

    pub fn depth(&self, k: usize) -> f64 {
        self.axial_start + k as f64 * self.step
    }
}

/// Beamformed amplitudes, one column per grid column, `layout.len` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RfImage {
    pub data: Array2<f64>,
    pub layout: RfLayout,
    pub grid: ImagingGrid,
}

impl RfImage {
    pub fn from_columns(columns: Vec<Vec<f64>>, layout: RfLayout, grid: ImagingGrid) -> Self {
        let cols = columns.len();
        let mut data = Array2::zeros((layout.len, cols));
        for (c, col) in columns.into_iter().enumerate() {
            assert_eq!(col.len(), layout.len, "scanline length mismatch");
            for (r, v) in col.into_iter().enumerate() {
                data[[r, c]] = v;
            }
        }
        Self { data, layout, grid }
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.data.column(c).to_vec()
    }

    /// Envelope of every scanline.
    pub fn envelope(&self) -> Result<RfImage> {
        let detector = Envelope::new(self.layout.len)?;
        let cols = par::map_range(self.data.ncols(), |c| detector.apply(&self.column(c)));
        Ok(Self::from_columns(cols, self.layout, self.grid))
    }

    /// Envelope detection followed by resampling onto the grid.
    pub fn envelope_on_grid(&self) -> Result<Array2<f64>> {
        Ok(self.envelope()?.to_grid())
    }

    /// Linear interpolation in depth onto the grid rows.
    pub fn to_grid(&self) -> Array2<f64> {
        let rows = self.grid.num_rows();
        let cols = self.data.ncols();
        let last = self.layout.len - 1;
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            let lead = (self.grid.axial_start() - self.layout.axial_start) / self.layout.step;
            let pos =
                lead.round() + (self.grid.axial(r) - self.grid.axial_start()) / self.layout.step;
            let pos = pos.clamp(0.0, last as f64);
            let i0 = (pos.floor() as usize).min(last);
            let frac = pos - i0 as f64;
            let a = self.data[[i0, c]];
            if frac == 0.0 || i0 == last {
                a
            } else {
                a + frac * (self.data[[i0 + 1, c]] - a)
            }
        })
    }
}

/// Band-pass filter for scanlines of `layout`, or `None` when disabled.
pub(crate) fn line_filter(
    config: &BeamformConfig,
    layout: &RfLayout,
    fs: f64,
) -> Result<Option<BandPass>> {
    if !config.bandpass {
        return Ok(None);
    }
    BandPass::new(layout.len, fs, config.band, config.tukey_alpha).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_covers_grid() {
        let grid = ImagingGrid::new(20e-3, 0.0, 50e-3, 0.2e-3).unwrap();
        let layout = RfLayout::for_grid(&grid, &AcquisitionParams::default());
        assert!((layout.step - 30.8e-6).abs() < 1e-12);
        let m = RfLayout::MARGIN;
        assert!((layout.depth(m) - 0.0).abs() < 1e-12);
        assert!(layout.depth(layout.len - 1 - m) >= 50e-3 - 1e-12);
        assert!(layout.depth(layout.len - 2 - m) < 50e-3);
    }

    #[test]
    fn to_grid_interpolates_linear_profiles_exactly() {
        let grid = ImagingGrid::new(1e-3, 10e-3, 12e-3, 0.1e-3).unwrap();
        let layout = RfLayout::for_grid(&grid, &AcquisitionParams::default());
        let cols: Vec<Vec<f64>> = (0..grid.num_cols())
            .map(|c| {
                (0..layout.len)
                    .map(|k| layout.depth(k) * 1e3 + c as f64)
                    .collect()
            })
            .collect();
        let img = RfImage::from_columns(cols, layout, grid).to_grid();
        for r in 0..grid.num_rows() {
            for c in 0..grid.num_cols() {
                let expect = grid.axial(r) * 1e3 + c as f64;
                assert!((img[[r, c]] - expect).abs() < 1e-9);
            }
        }
    }
}
