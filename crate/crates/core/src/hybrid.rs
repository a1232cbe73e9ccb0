//! EIBMV-DMAS: the factorized DMAS rows of each scanline are treated as
//! `M - 1` synthetic channels. Each row is band-passed along time and by
//! default divided by its pair count, then the eigenspace MV chain replaces
//! the uniform sum over rows.

use ndarray::Array2;

use crate::adaptive::{check_adaptive, AdaptiveKernel};
use crate::classic::{fill_terms, for_each_snapshot};
use crate::config::{BeamformConfig, DmasSqrtMode, Interpolation, Method, TermNormalization};
use crate::dsp::BandPass;
use crate::error::{domain, Result};
use crate::geometry::{ChannelDataSet, ImagingGrid};
use crate::image::{RfImage, RfLayout};
use crate::par;

/// `(M - 1) x N` matrix whose row `i` is the `i`-th factorized DMAS row along
/// scanline `scanline`, sampled at every axial sample of the scanline.
pub fn term_lines(
    channels: &ChannelDataSet,
    scanline: usize,
    grid: &ImagingGrid,
    mode: DmasSqrtMode,
) -> Result<Array2<f64>> {
    if scanline >= grid.num_cols() {
        return domain(format!(
            "scanline {scanline} outside the {}-column grid",
            grid.num_cols()
        ));
    }
    if channels.num_elements() < 2 {
        return domain("EIBMV-DMAS needs at least 2 channels");
    }
    let layout = RfLayout::for_grid(grid, channels.acq());
    Ok(terms_for_line(
        channels,
        grid.lateral(scanline),
        &layout,
        mode,
        Interpolation::Linear,
    ))
}

fn terms_for_line(
    channels: &ChannelDataSet,
    lateral: f64,
    layout: &RfLayout,
    mode: DmasSqrtMode,
    interp: Interpolation,
) -> Array2<f64> {
    let rows = channels.num_elements() - 1;
    let mut terms = Array2::zeros((rows, layout.len));
    let mut scratch = vec![0.0; rows];
    for_each_snapshot(channels, lateral, layout, interp, |k, x| {
        fill_terms(x, mode, &mut scratch);
        for (i, &v) in scratch.iter().enumerate() {
            terms[[i, k]] = v;
        }
    });
    terms
}

/// Band-passes each term row, applies `config.term_normalization`, then
/// combines the rows at every sample with the EIBMV chain, using `M - 1` as
/// the channel count.
pub fn eibmv_dmas_line(terms: &Array2<f64>, config: &BeamformConfig, fs: f64) -> Result<Vec<f64>> {
    let (rows, len) = terms.dim();
    check_adaptive(config, rows)?;
    let mut filtered = terms.as_standard_layout().into_owned();
    if config.bandpass && len > 0 {
        let filter = BandPass::new(len, fs, config.band, config.tukey_alpha)?;
        for mut row in filtered.rows_mut() {
            filter.apply(row.as_slice_mut().expect("standard layout"));
        }
    }
    normalize_terms(&mut filtered, config.term_normalization);
    combine_terms(&filtered, config, &mut AdaptiveKernel::default())
}

fn normalize_terms(terms: &mut Array2<f64>, mode: TermNormalization) {
    if mode == TermNormalization::PairMean {
        let rows = terms.nrows();
        for (i, mut row) in terms.rows_mut().into_iter().enumerate() {
            row /= (rows - i) as f64;
        }
    }
}

fn combine_terms(
    filtered: &Array2<f64>,
    config: &BeamformConfig,
    kernel: &mut AdaptiveKernel,
) -> Result<Vec<f64>> {
    let (rows, len) = filtered.dim();
    let half = config.temporal_half_width;
    let cols = 2 * half + 1;
    let data = filtered.as_slice().expect("standard layout");
    let mut window = vec![0.0; rows * cols];
    let mut center = vec![0.0; rows];
    let mut out = vec![0.0; len];
    for (k, slot) in out.iter_mut().enumerate() {
        for i in 0..rows {
            let row = &data[i * len..(i + 1) * len];
            for j in 0..cols {
                let t = k as isize + j as isize - half as isize;
                window[i * cols + j] = if t >= 0 && (t as usize) < len {
                    row[t as usize]
                } else {
                    0.0
                };
            }
            center[i] = row[k];
        }
        *slot = kernel.output(
            &window,
            rows,
            cols,
            &center,
            config.subarray_length,
            config.loading_factor,
            Some(config.subspace_threshold),
        )?;
    }
    Ok(out)
}

/// EIBMV-DMAS image. Filtering happens per term; the combined line is not
/// filtered again.
pub fn image_eibmv_dmas(
    channels: &ChannelDataSet,
    grid: &ImagingGrid,
    config: &BeamformConfig,
) -> Result<RfImage> {
    if config.method != Method::EibmvDmas {
        return domain(format!("image_eibmv_dmas cannot run {}", config.method));
    }
    let m = channels.num_elements();
    if m < 2 {
        return domain("EIBMV-DMAS needs at least 2 channels");
    }
    check_adaptive(config, m - 1)?;
    let layout = RfLayout::for_grid(grid, channels.acq());
    let fs = channels.acq().sampling_rate;
    let filter = if config.bandpass {
        Some(BandPass::new(
            layout.len,
            fs,
            config.band,
            config.tukey_alpha,
        )?)
    } else {
        None
    };
    let columns: Vec<Result<Vec<f64>>> =
        par::map_range_with(grid.num_cols(), AdaptiveKernel::default, |kernel, c| {
            let mut terms = terms_for_line(
                channels,
                grid.lateral(c),
                &layout,
                config.dmas_sqrt_mode,
                config.interpolation,
            );
            if let Some(f) = &filter {
                for mut row in terms.rows_mut() {
                    f.apply(row.as_slice_mut().expect("standard layout"));
                }
            }
            normalize_terms(&mut terms, config.term_normalization);
            combine_terms(&terms, config, kernel)
        });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RfImage::from_columns(columns, layout, *grid))
}
