//! Minimum-variance machinery: spatially smoothed and temporally averaged
//! covariance, diagonal loading, distortionless weights, and the eigenspace
//! projection that turns MV into EIBMV.

use ndarray::Array2;

use crate::config::{BeamformConfig, Method};
use crate::delay::{fill_window, focal_indices, AlignedWindow};
use crate::error::{domain, Error, Result};
use crate::geometry::{ChannelDataSet, ImagingGrid, Point};
use crate::image::{line_filter, RfImage, RfLayout};
use crate::linalg::{cholesky_solve_in_place, SymmetricSolver};
use crate::par;

/// Smoothed `L x L` sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: Array2<f64>,
    /// `M_ch - L + 1`.
    pub num_subarrays: usize,
}

/// Eigenvalues in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

fn check_subarray(len: usize, channels: usize) -> Result<()> {
    if len == 0 || len > channels {
        return domain(format!("subarray length {len} outside [1, {channels}]"));
    }
    Ok(())
}

/// Covariance of a row-major `channels x cols` window into `out` (`len x len`).
/// Returns the trace.
fn covariance_into(
    window: &[f64],
    channels: usize,
    cols: usize,
    len: usize,
    band: &mut Vec<f64>,
    out: &mut [f64],
) -> f64 {
    let nsub = channels - len + 1;
    // band[d * channels + i] = sum_n x[i][n] x[i+d][n], for lags d < len
    band.clear();
    band.resize(len * channels, 0.0);
    for d in 0..len {
        for i in 0..channels - d {
            let a = &window[i * cols..(i + 1) * cols];
            let b = &window[(i + d) * cols..(i + d + 1) * cols];
            band[d * channels + i] = a.iter().zip(b).map(|(x, y)| x * y).sum();
        }
    }
    let norm = 1.0 / (cols * nsub) as f64;
    let mut trace = 0.0;
    for d in 0..len {
        let lag = &band[d * channels..d * channels + channels - d];
        for p in 0..len - d {
            let v = lag[p..p + nsub].iter().sum::<f64>() * norm;
            out[p * len + p + d] = v;
            out[(p + d) * len + p] = v;
            if d == 0 {
                trace += v;
            }
        }
    }
    trace
}

pub fn estimate_covariance(
    window: &AlignedWindow,
    subarray_length: usize,
) -> Result<CovarianceEstimate> {
    let (channels, cols) = window.values.dim();
    check_subarray(subarray_length, channels)?;
    let data: Vec<f64> = window.values.iter().copied().collect();
    let mut out = vec![0.0; subarray_length * subarray_length];
    covariance_into(
        &data,
        channels,
        cols,
        subarray_length,
        &mut Vec::new(),
        &mut out,
    );
    Ok(CovarianceEstimate {
        matrix: Array2::from_shape_vec((subarray_length, subarray_length), out).expect("square"),
        num_subarrays: channels - subarray_length + 1,
    })
}

/// `R + delta * trace(R) * I`.
pub fn diagonal_load(cov: &CovarianceEstimate, delta: f64) -> Array2<f64> {
    let eps = delta * cov.matrix.diag().sum();
    let mut out = cov.matrix.clone();
    out.diag_mut().mapv_inplace(|v| v + eps);
    out
}

/// Distortionless minimum-variance weights `R^-1 1 / (1^T R^-1 1)`.
pub fn mv_weights(r_loaded: &Array2<f64>) -> Result<Vec<f64>> {
    let n = r_loaded.nrows();
    if r_loaded.ncols() != n {
        return domain("covariance must be square");
    }
    let mut a: Vec<f64> = r_loaded.iter().copied().collect();
    let mut w = vec![1.0; n];
    solve_weights(&mut a, n, &mut w)?;
    Ok(w)
}

fn solve_weights(a: &mut [f64], n: usize, w: &mut [f64]) -> Result<()> {
    w.iter_mut().for_each(|v| *v = 1.0);
    cholesky_solve_in_place(a, n, w)?;
    let gain: f64 = w.iter().sum();
    if !(gain.is_finite() && gain != 0.0) {
        return Err(Error::Numerical("MV normalization is zero".into()));
    }
    w.iter_mut().for_each(|v| *v /= gain);
    Ok(())
}

/// Full symmetric eigendecomposition, eigenvalues descending.
pub fn sym_eig(r: &Array2<f64>) -> Result<EigenPair> {
    let n = r.nrows();
    if r.ncols() != n {
        return domain("eigendecomposition needs a square matrix");
    }
    let scale = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in i + 1..n {
            if (r[[i, j]] - r[[j, i]]).abs() > 1e-12 * scale {
                return domain(format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    let mut a: Vec<f64> = r.iter().copied().collect();
    let mut solver = SymmetricSolver::new();
    solver.factor(&mut a, n)?;
    let raw = solver.eigenvectors();
    let mut order: Vec<usize> = (0..n).collect();
    let values = solver.eigenvalues();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&raw.column(src));
    }
    Ok(EigenPair {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
    })
}

/// Projects `w` onto the eigenvectors with eigenvalue at least `sigma * lambda_max`
/// (the principal eigenvector is always retained).
pub fn eibmv_project(w: &[f64], eig: &EigenPair, sigma: f64) -> Vec<f64> {
    let n = w.len();
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let mut out = vec![0.0; n];
    for (i, &lambda) in eig.values.iter().enumerate() {
        if i > 0 && lambda < sigma * lmax {
            continue;
        }
        let e = eig.vectors.column(i);
        let coord: f64 = e.iter().zip(w).map(|(a, b)| a * b).sum();
        for (o, ei) in out.iter_mut().zip(e.iter()) {
            *o += coord * ei;
        }
    }
    out
}

/// Applies `w` to every length-`L` subarray of `x` and averages.
pub fn subarray_output(w: &[f64], x: &[f64], subarray_length: usize) -> Result<f64> {
    check_subarray(subarray_length, x.len())?;
    if w.len() != subarray_length {
        return domain(format!(
            "weight length {} does not match subarray length {subarray_length}",
            w.len()
        ));
    }
    Ok(subarray_output_unchecked(w, x))
}

#[inline]
fn subarray_output_unchecked(w: &[f64], x: &[f64]) -> f64 {
    let len = w.len();
    let nsub = x.len() - len + 1;
    let mut acc = 0.0;
    for l in 0..nsub {
        acc += w
            .iter()
            .zip(&x[l..l + len])
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    acc / nsub as f64
}

/// Per-worker scratch for the per-pixel adaptive chain.
#[derive(Default)]
pub(crate) struct AdaptiveKernel {
    band: Vec<f64>,
    cov: Vec<f64>,
    weights: Vec<f64>,
    solver: SymmetricSolver,
}

impl AdaptiveKernel {
    /// Runs covariance, loading, MV and (when `sigma` is given) the
    /// eigenspace projection on a `channels x cols` window, then applies the
    /// weights to `center`. An all-zero window yields 0.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn output(
        &mut self,
        window: &[f64],
        channels: usize,
        cols: usize,
        center: &[f64],
        len: usize,
        delta: f64,
        sigma: Option<f64>,
    ) -> Result<f64> {
        self.cov.clear();
        self.cov.resize(len * len, 0.0);
        let trace = covariance_into(window, channels, cols, len, &mut self.band, &mut self.cov);
        if trace == 0.0 {
            return Ok(0.0);
        }
        let eps = delta * trace;
        for i in 0..len {
            self.cov[i * len + i] += eps;
        }
        let loaded = self.cov.clone();
        self.weights.clear();
        self.weights.resize(len, 1.0);
        solve_weights(&mut self.cov, len, &mut self.weights)?;
        if let Some(sigma) = sigma {
            self.cov.copy_from_slice(&loaded);
            self.solver.factor(&mut self.cov, len)?;
            self.solver.project_dominant(&mut self.weights, sigma);
        }
        Ok(subarray_output_unchecked(&self.weights, center))
    }
}

pub(crate) fn check_adaptive(config: &BeamformConfig, channels: usize) -> Result<()> {
    check_subarray(config.subarray_length, channels)?;
    if !(0.0..=1.0).contains(&config.subspace_threshold) {
        return domain(format!(
            "sigma {} outside [0, 1]",
            config.subspace_threshold
        ));
    }
    if !(config.loading_factor > 0.0) {
        return domain(format!(
            "loading factor {} must be positive",
            config.loading_factor
        ));
    }
    Ok(())
}

/// MV or EIBMV image, band-passed per scanline.
pub fn image_adaptive(
    channels: &ChannelDataSet,
    grid: &ImagingGrid,
    config: &BeamformConfig,
) -> Result<RfImage> {
    let sigma = match config.method {
        Method::Mv => None,
        Method::Eibmv => Some(config.subspace_threshold),
        other => return domain(format!("image_adaptive cannot run {other}")),
    };
    let m = channels.num_elements();
    check_adaptive(config, m)?;
    let layout = RfLayout::for_grid(grid, channels.acq());
    let filter = line_filter(config, &layout, channels.acq().sampling_rate)?;
    let half = config.temporal_half_width;
    let cols = 2 * half + 1;

    let columns: Vec<Result<Vec<f64>>> =
        par::map_range_with(grid.num_cols(), AdaptiveKernel::default, |kernel, c| {
            let lateral = grid.lateral(c);
            let mut focal = vec![0.0; m];
            let mut window = vec![0.0; m * cols];
            let mut center = vec![0.0; m];
            let mut line = vec![0.0; layout.len];
            for (k, out) in line.iter_mut().enumerate() {
                focal_indices(channels, &Point::new(lateral, layout.depth(k)), &mut focal);
                fill_window(channels, &focal, half, config.interpolation, &mut window);
                for (i, v) in center.iter_mut().enumerate() {
                    *v = window[i * cols + half];
                }
                *out = kernel.output(
                    &window,
                    m,
                    cols,
                    &center,
                    config.subarray_length,
                    config.loading_factor,
                    sigma,
                )?;
            }
            if let Some(f) = &filter {
                f.apply(&mut line);
            }
            Ok(line)
        });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RfImage::from_columns(columns, layout, *grid))
}
