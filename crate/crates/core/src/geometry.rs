//! Array, acquisition and imaging-grid geometry shared by every beamformer.

use ndarray::Array2;

use crate::error::{domain, Result};

/// A point in the imaging plane: `lateral` along the array, `axial` in depth (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub lateral: f64,
    pub axial: f64,
}

impl Point {
    pub const fn new(lateral: f64, axial: f64) -> Self {
        Self { lateral, axial }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.lateral - other.lateral).hypot(self.axial - other.axial)
    }
}

/// Uniform linear array centered on the lateral origin, elements on the `axial = 0` line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_elements: usize,
    pitch: f64,
}

impl ArrayGeometry {
    /// Default pitch (m). Gives a 19.05 mm aperture for 128 elements.
    pub const DEFAULT_PITCH: f64 = 0.15e-3;

    pub fn new(num_elements: usize, pitch: f64) -> Result<Self> {
        if num_elements < 2 {
            return domain(format!(
                "array needs at least 2 elements, got {num_elements}"
            ));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return domain(format!("pitch must be positive, got {pitch}"));
        }
        Ok(Self {
            num_elements,
            pitch,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Total span between the outermost element centers.
    pub fn aperture(&self) -> f64 {
        (self.num_elements - 1) as f64 * self.pitch
    }

    pub fn element_position(&self, index: usize) -> Result<Point> {
        if index >= self.num_elements {
            return domain(format!(
                "element index {index} out of range for {} elements",
                self.num_elements
            ));
        }
        Ok(self.position_unchecked(index))
    }

    pub(crate) fn position_unchecked(&self, index: usize) -> Point {
        let center = (self.num_elements as f64 - 1.0) / 2.0;
        Point::new((index as f64 - center) * self.pitch, 0.0)
    }

    /// Lateral coordinates of all elements, in index order.
    pub fn element_laterals(&self) -> Vec<f64> {
        (0..self.num_elements)
            .map(|i| self.position_unchecked(i).lateral)
            .collect()
    }
}

/// Free-function form of [`ArrayGeometry::element_position`].
pub fn element_position(index: usize, geometry: &ArrayGeometry) -> Result<Point> {
    geometry.element_position(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionParams {
    /// Sampling rate (Hz).
    pub sampling_rate: f64,
    /// Speed of sound (m/s).
    pub sound_speed: f64,
    /// Samples recorded per channel.
    pub num_samples: usize,
}

impl AcquisitionParams {
    pub fn new(sampling_rate: f64, sound_speed: f64, num_samples: usize) -> Result<Self> {
        if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
            return domain(format!(
                "sampling rate must be positive, got {sampling_rate}"
            ));
        }
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return domain(format!("sound speed must be positive, got {sound_speed}"));
        }
        if num_samples == 0 {
            return domain("record must hold at least one sample");
        }
        Ok(Self {
            sampling_rate,
            sound_speed,
            num_samples,
        })
    }
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self {
            sampling_rate: 50e6,
            sound_speed: 1540.0,
            num_samples: 2048,
        }
    }
}

/// Received pressure traces, one row per element (element-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataSet {
    samples: Array2<f64>,
    acq: AcquisitionParams,
    geometry: ArrayGeometry,
}

impl ChannelDataSet {
    pub fn new(
        samples: Array2<f64>,
        acq: AcquisitionParams,
        geometry: ArrayGeometry,
    ) -> Result<Self> {
        let (m, t) = samples.dim();
        if m != geometry.num_elements() || t != acq.num_samples {
            return domain(format!(
                "channel matrix is {m}x{t}, expected {}x{}",
                geometry.num_elements(),
                acq.num_samples
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return domain("channel data contains non-finite samples");
        }
        Ok(Self {
            samples,
            acq,
            geometry,
        })
    }

    pub fn zeros(acq: AcquisitionParams, geometry: ArrayGeometry) -> Self {
        Self {
            samples: Array2::zeros((geometry.num_elements(), acq.num_samples)),
            acq,
            geometry,
        }
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn acq(&self) -> &AcquisitionParams {
        &self.acq
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.num_elements()
    }

    pub fn num_samples(&self) -> usize {
        self.acq.num_samples
    }

    /// Trace of element `index`.
    pub fn channel(&self, index: usize) -> &[f64] {
        let t = self.acq.num_samples;
        &self.samples.as_slice().expect("standard layout")[index * t..(index + 1) * t]
    }

    /// Applies `f` to every sample; used by scaling and noise injection.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.mapv(f),
            acq: self.acq,
            geometry: self.geometry,
        }
    }
}

/// Rectangular pixel lattice centered laterally on the array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingGrid {
    lateral_extent: f64,
    axial_start: f64,
    axial_end: f64,
    spacing: f64,
}

impl ImagingGrid {
    pub const FINE_SPACING: f64 = 0.1e-3;
    pub const COARSE_SPACING: f64 = 0.2e-3;

    pub fn new(
        lateral_extent: f64,
        axial_start: f64,
        axial_end: f64,
        spacing: f64,
    ) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return domain(format!("grid spacing must be positive, got {spacing}"));
        }
        if !(axial_start >= 0.0) {
            return domain(format!(
                "axial start must be non-negative, got {axial_start}"
            ));
        }
        if !(axial_end >= axial_start) || !(lateral_extent >= 0.0) {
            return domain("grid extents must be non-negative");
        }
        Ok(Self {
            lateral_extent,
            axial_start,
            axial_end,
            spacing,
        })
    }

    /// 20 mm wide, 0 to 50 mm deep, at the given spacing.
    pub fn paper_region(spacing: f64) -> Result<Self> {
        Self::new(20e-3, 0.0, 50e-3, spacing)
    }

    pub fn lateral_extent(&self) -> f64 {
        self.lateral_extent
    }

    pub fn axial_start(&self) -> f64 {
        self.axial_start
    }

    pub fn axial_end(&self) -> f64 {
        self.axial_end
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    fn count(extent: f64, spacing: f64) -> usize {
        // tolerate representation error in extent/spacing ratios such as 20/0.1
        ((extent / spacing) + 1e-9).floor() as usize + 1
    }

    pub fn num_cols(&self) -> usize {
        Self::count(self.lateral_extent, self.spacing)
    }

    pub fn num_rows(&self) -> usize {
        Self::count(self.axial_end - self.axial_start, self.spacing)
    }

    pub fn lateral(&self, col: usize) -> f64 {
        -self.lateral_extent / 2.0 + col as f64 * self.spacing
    }

    pub fn axial(&self, row: usize) -> f64 {
        self.axial_start + row as f64 * self.spacing
    }

    pub fn pixel_position(&self, row: usize, col: usize) -> Result<Point> {
        if row >= self.num_rows() || col >= self.num_cols() {
            return domain(format!(
                "pixel ({row}, {col}) outside {}x{} grid",
                self.num_rows(),
                self.num_cols()
            ));
        }
        Ok(Point::new(self.lateral(col), self.axial(row)))
    }

    /// Row whose depth is nearest to `depth`.
    pub fn nearest_row(&self, depth: f64) -> Result<usize> {
        let last = self.axial(self.num_rows() - 1);
        if !(depth >= self.axial_start - self.spacing / 2.0 && depth <= last + self.spacing / 2.0) {
            return domain(format!("depth {depth} m outside the imaging grid"));
        }
        let row = ((depth - self.axial_start) / self.spacing).round() as usize;
        Ok(row.min(self.num_rows() - 1))
    }

    /// Column whose lateral position is nearest to `lateral`, clamped to the grid.
    pub fn nearest_col(&self, lateral: f64) -> usize {
        let c = ((lateral + self.lateral_extent / 2.0) / self.spacing).round();
        c.clamp(0.0, (self.num_cols() - 1) as f64) as usize
    }
}

/// Free-function form of [`ImagingGrid::pixel_position`].
pub fn pixel_position(row: usize, col: usize, grid: &ImagingGrid) -> Result<Point> {
    grid.pixel_position(row, col)
}
