//! Delay-and-sum and delay-multiply-and-sum, including the factorized DMAS
//! rows consumed by the hybrid beamformer.

use crate::config::{BeamformConfig, DmasSqrtMode, Method};
use crate::delay::{focal_indices, sample_at_index, AlignedSnapshot};
use crate::error::{domain, Result};
use crate::geometry::{ChannelDataSet, ImagingGrid, Point};
use crate::image::{line_filter, RfImage, RfLayout};
use crate::par;

/// Plain sum of the aligned values.
pub fn das(snapshot: &AlignedSnapshot) -> f64 {
    das_values(&snapshot.values)
}

#[inline]
pub(crate) fn das_values(x: &[f64]) -> f64 {
    x.iter().sum()
}

/// `sign(a b) sqrt|a b|`, the dimension-restoring pair product.
#[inline]
pub fn signed_root_product(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p == 0.0 {
        0.0
    } else {
        p.signum() * p.abs().sqrt()
    }
}

/// Row `i` of the factorized expansion, for `i = 0..M-1`.
pub fn dmas_terms(snapshot: &AlignedSnapshot) -> Result<Vec<f64>> {
    dmas_terms_with(snapshot, DmasSqrtMode::Pairwise)
}

pub fn dmas_terms_with(snapshot: &AlignedSnapshot, mode: DmasSqrtMode) -> Result<Vec<f64>> {
    let x = &snapshot.values;
    if x.len() < 2 {
        return domain(format!("DMAS needs at least 2 channels, got {}", x.len()));
    }
    let mut out = vec![0.0; x.len() - 1];
    fill_terms(x, mode, &mut out);
    Ok(out)
}

/// Writes the `M - 1` factorized rows of `x` into `out`. Pairs are visited in
/// ascending `i`, then ascending `j`.
#[inline]
pub(crate) fn fill_terms(x: &[f64], mode: DmasSqrtMode, out: &mut [f64]) {
    match mode {
        DmasSqrtMode::Pairwise => {
            for (i, slot) in out.iter_mut().enumerate() {
                let xi = x[i];
                let mut acc = 0.0;
                for &xj in &x[i + 1..] {
                    acc += signed_root_product(xi, xj);
                }
                *slot = acc;
            }
        }
        DmasSqrtMode::RowProduct => {
            let mut tail = 0.0;
            for i in (0..out.len()).rev() {
                tail += x[i + 1];
                out[i] = signed_root_product(x[i], tail);
            }
        }
    }
}

/// Sum over unordered pairs of `sign(x_i x_j) sqrt|x_i x_j|`, accumulated
/// row by row so it equals the sum of [`dmas_terms`] bit for bit.
pub fn dmas(snapshot: &AlignedSnapshot) -> Result<f64> {
    Ok(dmas_terms(snapshot)?.iter().sum())
}

#[inline]
fn dmas_values(x: &[f64], scratch: &mut [f64]) -> f64 {
    fill_terms(x, DmasSqrtMode::Pairwise, scratch);
    scratch.iter().sum()
}

/// Residual between the factorized and the pairwise square-root-free forms,
/// `|sum_i x_i (sum_{j>i} x_j) - sum_{i<j} x_i x_j|`.
pub fn expansion_identity_check(snapshot: &AlignedSnapshot) -> f64 {
    let x = &snapshot.values;
    let n = x.len();
    let mut factorized = 0.0;
    let mut tail: f64 = x.iter().sum();
    for &xi in x.iter().take(n.saturating_sub(1)) {
        tail -= xi;
        factorized += xi * tail;
    }
    let mut pairwise = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pairwise += x[i] * x[j];
        }
    }
    (factorized - pairwise).abs()
}

/// Tolerance that [`expansion_identity_check`] must meet: `1e-9 (sum |x_i|)^2`.
pub fn expansion_tolerance(snapshot: &AlignedSnapshot) -> f64 {
    let s: f64 = snapshot.values.iter().map(|v| v.abs()).sum();
    1e-9 * s * s
}

/// Computes the aligned snapshot of every sample on a scanline and hands it to `f`.
pub(crate) fn for_each_snapshot(
    channels: &ChannelDataSet,
    lateral: f64,
    layout: &RfLayout,
    interp: crate::config::Interpolation,
    mut f: impl FnMut(usize, &[f64]),
) {
    let m = channels.num_elements();
    let mut idx = vec![0.0; m];
    let mut snap = vec![0.0; m];
    for k in 0..layout.len {
        focal_indices(channels, &Point::new(lateral, layout.depth(k)), &mut idx);
        for (i, (slot, &t)) in snap.iter_mut().zip(&idx).enumerate() {
            *slot = sample_at_index(channels.channel(i), t, interp);
        }
        f(k, &snap);
    }
}

/// DAS or DMAS image, band-passed per scanline.
pub fn image_classic(
    channels: &ChannelDataSet,
    grid: &ImagingGrid,
    config: &BeamformConfig,
) -> Result<RfImage> {
    if !matches!(config.method, Method::Das | Method::Dmas) {
        return domain(format!("image_classic cannot run {}", config.method));
    }
    if config.method == Method::Dmas && channels.num_elements() < 2 {
        return domain("DMAS needs at least 2 channels");
    }
    let layout = RfLayout::for_grid(grid, channels.acq());
    let filter = line_filter(config, &layout, channels.acq().sampling_rate)?;
    let m = channels.num_elements();
    let method = config.method;
    let columns = par::map_range(grid.num_cols(), |c| {
        let mut line = vec![0.0; layout.len];
        let mut scratch = vec![0.0; m.saturating_sub(1)];
        for_each_snapshot(
            channels,
            grid.lateral(c),
            &layout,
            config.interpolation,
            |k, x| {
                line[k] = match method {
                    Method::Das => das_values(x),
                    _ => dmas_values(x, &mut scratch),
                };
            },
        );
        if let Some(f) = &filter {
            f.apply(&mut line);
        }
        line
    });
    Ok(RfImage::from_columns(columns, layout, *grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(v: &[f64]) -> AlignedSnapshot {
        AlignedSnapshot { values: v.to_vec() }
    }

    #[test]
    fn das_examples() {
        assert_eq!(das(&snap(&[1.0, 2.0, 3.0, 4.0])), 10.0);
        assert_eq!(das(&snap(&[0.0; 5])), 0.0);
        assert_eq!(das(&snap(&[1.0, -1.0])), 0.0);
    }

    #[test]
    fn dmas_examples() {
        let expect = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0f64]
            .iter()
            .map(|v| v.sqrt())
            .sum::<f64>();
        assert!((dmas(&snap(&[1.0, 2.0, 3.0, 4.0])).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 13.8883).abs() < 1e-4);
        assert_eq!(dmas(&snap(&[1.0, -1.0])).unwrap(), -1.0);
        for m in 2..20 {
            let c = 0.7;
            let v = dmas(&snap(&vec![c; m])).unwrap();
            let expect = (m * (m - 1) / 2) as f64 * c;
            assert!((v - expect).abs() < 1e-12 * expect);
        }
        assert!(dmas(&snap(&[1.0])).is_err());
    }

    #[test]
    fn dmas_terms_examples() {
        let t = dmas_terms(&snap(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        let expect = [
            2f64.sqrt() + 3f64.sqrt() + 2.0,
            6f64.sqrt() + 8f64.sqrt(),
            12f64.sqrt(),
        ];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(
            (t[0] - 5.1463).abs() < 1e-4
                && (t[1] - 5.2779).abs() < 1e-4
                && (t[2] - 3.4641).abs() < 1e-4
        );
        let t = dmas_terms(&snap(&[0.5, 0.5, 0.5])).unwrap();
        assert_eq!(t, vec![1.0, 0.5]);
        let t = dmas_terms(&snap(&[0.0, 3.0, -2.0])).unwrap();
        assert_eq!(t[0], 0.0);
        assert!(dmas_terms(&snap(&[2.0])).is_err());
    }

    #[test]
    fn row_product_mode() {
        let t = dmas_terms_with(&snap(&[1.0, 2.0, 3.0, 4.0]), DmasSqrtMode::RowProduct).unwrap();
        assert!((t[0] - 9f64.sqrt()).abs() < 1e-12);
        assert!((t[1] - 14f64.sqrt()).abs() < 1e-12);
        assert!((t[2] - 12f64.sqrt()).abs() < 1e-12);
        let t = dmas_terms_with(&snap(&[-1.0, 2.0]), DmasSqrtMode::RowProduct).unwrap();
        assert_eq!(t, vec![-2f64.sqrt()]);
    }

    #[test]
    fn expansion_identity_examples() {
        assert_eq!(expansion_identity_check(&snap(&[1.0, 2.0, 3.0])), 0.0);
        assert_eq!(expansion_identity_check(&snap(&[0.0; 6])), 0.0);
    }

    #[test]
    fn dmas_scaling_ignores_sign() {
        let x = [0.3, -1.2, 2.2, 0.9, -0.4];
        let base = dmas(&snap(&x)).unwrap();
        for alpha in [2.0, -2.0, 0.25, -3.5] {
            let y: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let v = dmas(&snap(&y)).unwrap();
            assert!((v - alpha.abs() * base).abs() < 1e-12 * v.abs().max(1.0));
        }
    }
}
