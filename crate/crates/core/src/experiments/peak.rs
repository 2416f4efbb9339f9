use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of points (split between both ends) used for the baseline.
pub const DEFAULT_WINDOW: f64 = 0.2;
/// Deviations below this are numerical noise regardless of the baseline spread.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub position: f64,
    /// Full width at half deviation.
    pub width: f64,
    /// `|deviation| / normalizer`, clamped to `[0, 1]`.
    pub contrast: f64,
    /// Median of the outer window.
    pub baseline: f64,
    /// Signed extremum minus baseline.
    pub deviation: f64,
    pub absolute_contrast: f64,
    pub index: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Locates the dominant extremum of `curve` sampled on `grid`.
///
/// `normalizer` is the deviation of an ideal reference curve; without one
/// the full Pauli range 2 is used.
pub fn find_peak(grid: &[f64], curve: &[f64], baseline_window: f64, normalizer: Option<f64>) -> Result<PeakReport> {
    let n = curve.len();
    if n < 8 {
        return Err(Error::invalid("curve", format!("needs at least 8 points, got {n}")));
    }
    if grid.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grid.len(),
        });
    }
    if !(baseline_window > 0.0 && baseline_window <= 1.0) {
        return Err(Error::invalid("baseline_window", "must lie in (0, 1]"));
    }
    let k = ((n as f64 * baseline_window / 2.0).round() as usize).clamp(1, n / 2);
    let mut outer: Vec<f64> = curve[..k].iter().chain(&curve[n - k..]).copied().collect();
    let baseline = median(&mut outer);
    let mut spread: Vec<f64> = outer.iter().map(|x| (x - baseline).abs()).collect();
    let noise = 1.4826 * median(&mut spread);
    let threshold = (5.0 * noise).max(ABSOLUTE_FLOOR);

    let mut idx = 0;
    let mut best = -1.0;
    for (i, &y) in curve.iter().enumerate() {
        let d = (y - baseline).abs();
        if d > best {
            best = d;
            idx = i;
        }
    }
    if !(best >= threshold) {
        return Err(Error::NoPeak {
            deviation: best.max(0.0),
            threshold,
        });
    }
    let deviation = curve[idx] - baseline;

    let mut position = grid[idx];
    if idx > 0 && idx + 1 < n {
        let (x0, x1, x2) = (grid[idx - 1], grid[idx], grid[idx + 1]);
        let (y0, y1, y2) = (curve[idx - 1], curve[idx], curve[idx + 1]);
        let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        if den != 0.0 {
            let v = x1 - 0.5 * num / den;
            if v.is_finite() {
                position = v.clamp(x0.min(x2), x0.max(x2));
            }
        }
    }

    // half-deviation crossings on each side; the grid edge bounds the width
    let half = 0.5 * deviation;
    let above = |i: usize| (curve[i] - baseline - half) * deviation.signum() > 0.0;
    let cross = |i: usize, j: usize| {
        let (di, dj) = (curve[i] - baseline - half, curve[j] - baseline - half);
        let t = di / (di - dj);
        grid[i] + t * (grid[j] - grid[i])
    };
    let mut left = grid[0];
    let mut i = idx;
    while i > 0 {
        if !above(i - 1) {
            left = cross(i, i - 1);
            break;
        }
        i -= 1;
    }
    let mut right = grid[n - 1];
    let mut i = idx;
    while i + 1 < n {
        if !above(i + 1) {
            right = cross(i, i + 1);
            break;
        }
        i += 1;
    }
    let width = (right - left).abs();

    let norm = normalizer.filter(|v| *v > 0.0).unwrap_or(2.0);
    Ok(PeakReport {
        position,
        width,
        contrast: (deviation.abs() / norm).clamp(0.0, 1.0),
        baseline,
        deviation,
        absolute_contrast: deviation.abs(),
        index: idx,
    })
}

/// `|deviation|` or 0 when no peak stands out.
pub fn deviation_or_zero(grid: &[f64], curve: &[f64], window: f64) -> Result<f64> {
    match find_peak(grid, curve, window, None) {
        Ok(p) => Ok(p.absolute_contrast),
        Err(Error::NoPeak { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}
