use ndarray::Array2;

use super::{IntensityMap, RegionOfInterest};
use crate::error::{config_err, Error, Result};

/// Pearson correlation coefficient of two images over the samples of `roi`.
pub fn pearson_correlation(a: &IntensityMap, b: &IntensityMap, roi: &RegionOfInterest) -> Result<f64> {
    a.grid().check_congruent(b.grid(), "pearson correlation")?;
    let idx = roi.samples(a.grid())?;
    let (va, vb) = (a.values(), b.values());
    let n = idx.len() as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for &(r, c) in &idx {
        ma += va[[r, c]];
        mb += vb[[r, c]];
    }
    ma /= n;
    mb /= n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(r, c) in &idx {
        let da = va[[r, c]] - ma;
        let db = vb[[r, c]] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "constant image inside the region of interest ({} vs {})",
            a.label(),
            b.label()
        )));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Standard deviation over mean within `roi`.
pub fn speckle_contrast(image: &IntensityMap, roi: &RegionOfInterest) -> Result<f64> {
    let idx = roi.samples(image.grid())?;
    let v = image.values();
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&(r, c)| v[[r, c]]).sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::ZeroMean);
    }
    let var = idx
        .iter()
        .map(|&(r, c)| {
            let d = v[[r, c]] - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var.sqrt() / mean)
}

/// Weighted elementwise sum of congruent images.
pub fn incoherent_sum(patterns: &[&IntensityMap], weights: &[f64]) -> Result<IntensityMap> {
    if patterns.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: patterns.len(),
            got: weights.len(),
        });
    }
    let first = patterns
        .first()
        .ok_or_else(|| config_err("patterns", "at least one pattern is required"))?;
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(config_err("weights", "must be finite and non-negative"));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(config_err("weights", "at least one weight must be positive"));
    }
    let grid = *first.grid();
    let mut acc = Array2::<f64>::zeros((grid.rows, grid.cols));
    for (p, &w) in patterns.iter().zip(weights) {
        grid.check_congruent(p.grid(), "incoherent sum")?;
        if w > 0.0 {
            acc.scaled_add(w, p.values());
        }
    }
    IntensityMap::new(grid, acc, format!("incoherent sum of {} patterns", patterns.len()))
}
