//! Dynamic-focus delays and fractional-delay sample extraction.

use ndarray::Array2;

use crate::config::Interpolation;
use crate::geometry::{ChannelDataSet, Point};

/// One-way time of flight from `pixel` to `element`.
pub fn propagation_delay(pixel: &Point, element: &Point, sound_speed: f64) -> f64 {
    pixel.distance(element) / sound_speed
}

/// Sample at fractional index `index`; taps outside the record read as zero.
#[inline]
pub fn sample_at_index(channel: &[f64], index: f64, interp: Interpolation) -> f64 {
    let len = channel.len() as isize;
    let tap = |i: isize| {
        if i >= 0 && i < len {
            channel[i as usize]
        } else {
            0.0
        }
    };
    match interp {
        Interpolation::Linear => {
            let floor = index.floor();
            let frac = index - floor;
            let i0 = floor as isize;
            let a = tap(i0);
            if frac == 0.0 {
                a
            } else {
                a + frac * (tap(i0 + 1) - a)
            }
        }
        Interpolation::Nearest => tap(index.round() as isize),
    }
}

/// Linearly interpolated sample at `time` seconds.
pub fn sample_at(channel: &[f64], time: f64, fs: f64) -> f64 {
    sample_at_index(channel, time * fs, Interpolation::Linear)
}

/// Delay-aligned element values `x_i(k - Δ_i)` for one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSnapshot {
    pub values: Vec<f64>,
}

impl AlignedSnapshot {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Aligned snapshots at temporal offsets `-K..=K`; column `K` is the focal sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    pub values: Array2<f64>,
}

impl AlignedWindow {
    pub fn half_width(&self) -> usize {
        self.values.ncols() / 2
    }

    pub fn center(&self) -> AlignedSnapshot {
        AlignedSnapshot {
            values: self.values.column(self.half_width()).to_vec(),
        }
    }
}

/// Fractional sample index of the focal delay for every element.
pub(crate) fn focal_indices(channels: &ChannelDataSet, pixel: &Point, out: &mut [f64]) {
    let acq = channels.acq();
    let scale = acq.sampling_rate / acq.sound_speed;
    let geometry = channels.geometry();
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = geometry.position_unchecked(i).distance(pixel) * scale;
    }
}

pub fn aligned_snapshot(channels: &ChannelDataSet, pixel: &Point) -> AlignedSnapshot {
    aligned_snapshot_with(channels, pixel, Interpolation::Linear)
}

pub fn aligned_snapshot_with(
    channels: &ChannelDataSet,
    pixel: &Point,
    interp: Interpolation,
) -> AlignedSnapshot {
    let mut idx = vec![0.0; channels.num_elements()];
    focal_indices(channels, pixel, &mut idx);
    AlignedSnapshot {
        values: idx
            .iter()
            .enumerate()
            .map(|(i, &t)| sample_at_index(channels.channel(i), t, interp))
            .collect(),
    }
}

pub fn aligned_window(
    channels: &ChannelDataSet,
    pixel: &Point,
    half_width: usize,
) -> AlignedWindow {
    aligned_window_with(channels, pixel, half_width, Interpolation::Linear)
}

pub fn aligned_window_with(
    channels: &ChannelDataSet,
    pixel: &Point,
    half_width: usize,
    interp: Interpolation,
) -> AlignedWindow {
    let m = channels.num_elements();
    let cols = 2 * half_width + 1;
    let mut idx = vec![0.0; m];
    focal_indices(channels, pixel, &mut idx);
    let mut values = Array2::zeros((m, cols));
    fill_window(
        channels,
        &idx,
        half_width,
        interp,
        values.as_slice_mut().unwrap(),
    );
    AlignedWindow { values }
}

/// Writes the `M x (2K+1)` window (row-major, one row per element) for the
/// given focal indices into `out`.
pub(crate) fn fill_window(
    channels: &ChannelDataSet,
    focal: &[f64],
    half_width: usize,
    interp: Interpolation,
    out: &mut [f64],
) {
    let cols = 2 * half_width + 1;
    let k = half_width as f64;
    for (i, &t) in focal.iter().enumerate() {
        let ch = channels.channel(i);
        let row = &mut out[i * cols..(i + 1) * cols];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = sample_at_index(ch, t + j as f64 - k, interp);
        }
    }
}
