//! Signal conditioning: Tukey-windowed FFT band-pass, analytic-signal envelope
//! and log compression.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::Band;
use crate::error::{domain, Error, Result};

/// Tukey taper evaluated at normalized position `x` in `[0, 1]`.
pub fn tukey_weight(x: f64, alpha: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if alpha <= 0.0 {
        return 1.0;
    }
    let half = alpha / 2.0;
    if x < half {
        0.5 * (1.0 + (PI * (x / half - 1.0)).cos())
    } else if x <= 1.0 - half {
        1.0
    } else {
        0.5 * (1.0 + (PI * ((x - 1.0) / half + 1.0)).cos())
    }
}

/// Length-`n` Tukey window. `alpha = 0` is rectangular, `alpha = 1` is Hann.
pub fn tukey_window(n: usize, alpha: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("window length must be at least 1");
    }
    if !(0.0..=1.0).contains(&alpha) {
        return domain(format!("tukey alpha {alpha} outside [0, 1]"));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|i| tukey_weight(i as f64 / last, alpha))
        .collect())
}

/// Reusable zero-phase band-pass for lines of a fixed length.
///
/// Positive-frequency bins inside `[lo, hi]` are weighted by a Tukey taper
/// spanning the band; all other bins are zeroed. Negative bins get the same
/// weight so real input stays real.
pub struct BandPass {
    len: usize,
    weights: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl BandPass {
    pub fn new(len: usize, fs: f64, band: Band, alpha: f64) -> Result<Self> {
        if len == 0 {
            return domain("band-pass needs a non-empty line");
        }
        if !(band.lo > 0.0 && band.lo < band.hi && band.hi < fs / 2.0) {
            return domain(format!(
                "band [{}, {}] Hz outside (0, {}) Hz",
                band.lo,
                band.hi,
                fs / 2.0
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return domain(format!("tukey alpha {alpha} outside [0, 1]"));
        }
        let width = band.hi - band.lo;
        let weights = (0..len)
            .map(|k| {
                // bin k and bin len-k share one physical frequency
                let bin = k.min(len - k);
                let f = bin as f64 * fs / len as f64;
                if f < band.lo || f > band.hi {
                    0.0
                } else {
                    tukey_weight((f - band.lo) / width, alpha)
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            weights,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Spectral weight applied to bin `k`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, line: &mut [f64]) {
        assert_eq!(
            line.len(),
            self.len,
            "line length does not match the filter"
        );
        let mut buf: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.weights) {
            *b *= *w;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        for (out, b) in line.iter_mut().zip(&buf) {
            *out = b.re * scale;
        }
    }
}

pub fn bandpass(line: &[f64], fs: f64, band: Band, alpha: f64) -> Result<Vec<f64>> {
    let filter = BandPass::new(line.len(), fs, band, alpha)?;
    let mut out = line.to_vec();
    filter.apply(&mut out);
    Ok(out)
}

/// Analytic-signal envelope detector for lines of a fixed length.
pub struct Envelope {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Envelope {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return domain("envelope needs at least 2 samples");
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn apply(&self, line: &[f64]) -> Vec<f64> {
        assert_eq!(
            line.len(),
            self.len,
            "line length does not match the detector"
        );
        let n = self.len;
        let mut buf: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        // DC and (for even n) Nyquist keep unit weight; positive bins double.
        let half = n / 2;
        for (k, b) in buf.iter_mut().enumerate() {
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                continue;
            }
            if k < n.div_ceil(2) {
                *b *= 2.0;
            } else {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|b| b.norm() * scale).collect()
    }
}

pub fn envelope(line: &[f64]) -> Result<Vec<f64>> {
    Ok(Envelope::new(line.len())?.apply(line))
}

/// `20 log10(v / max)` per pixel, clamped below at `-dynamic_range`.
pub fn log_compress(image: &Array2<f64>, dynamic_range: f64) -> Result<Array2<f64>> {
    if !(dynamic_range > 0.0) {
        return domain(format!("dynamic range {dynamic_range} must be positive"));
    }
    let max = image.iter().copied().fold(0.0_f64, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::Domain(
            "log compression needs a strictly positive finite maximum".into(),
        ));
    }
    Ok(image.mapv(|v| {
        if v >= max {
            0.0
        } else if v <= 0.0 {
            -dynamic_range
        } else {
            (20.0 * (v / max).log10()).max(-dynamic_range)
        }
    }))
}
