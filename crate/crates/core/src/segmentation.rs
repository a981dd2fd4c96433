//! End-to-end tooth separation, overlay rendering and ground-truth scoring.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{round_half_up, GrayImage, RgbImage};
use crate::phantom::{Mask, PhantomTruth};
use crate::preprocess::preprocess_pipeline;
use crate::projection::find_valleys;
use crate::rotation::{apply_mode, estimate_rotation, Segment};

pub use crate::config::SegmentationConfig;

/// Separator colour in overlays.
pub const OVERLAY_COLOR: [u8; 3] = [0, 0, 255];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSummary {
    /// Tilt applied to the separators, in degrees.
    pub mean_degrees: f64,
    /// Per-trace estimates on the unrotated image.
    pub per_set_degrees: Vec<f64>,
    pub sets_used: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    pub rotation: RotationSummary,
    /// Sorted left to right by midpoint.
    pub separators: Vec<Segment>,
    /// Valley columns in the working image (the de-rotated one in
    /// image-rotate mode).
    pub valley_columns: Vec<usize>,
    pub tooth_count: usize,
    /// Wall-clock time per stage. Empty unless timing was requested, so that
    /// repeated runs serialize identically.
    #[serde(default)]
    pub timing_ms: BTreeMap<String, f64>,
}

/// Preprocess, detect valleys, estimate tilt and build separators.
///
/// Stage timings are recorded only when `timing` is set.
pub fn segment_timed(
    img: &GrayImage,
    cfg: &SegmentationConfig,
    timing: bool,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    let mut timing_ms = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing_ms: &mut BTreeMap<String, f64>| {
        if timing {
            timing_ms.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        }
        clock = Instant::now();
    };

    let pre = preprocess_pipeline(img, &cfg.preprocess)?;
    lap("preprocess", &mut timing_ms);
    let valleys = find_valleys(&pre, &cfg.valleys)?;
    lap("projection", &mut timing_ms);
    let est = estimate_rotation(&pre, &cfg.trace)?;
    lap("rotation", &mut timing_ms);
    let outcome = apply_mode(&pre, &valleys, &est, cfg.mode, &cfg.mode_params())?;
    lap("separation", &mut timing_ms);

    let mut separators = outcome.separators;
    separators.sort_by(|a, b| a.midpoint().0.total_cmp(&b.midpoint().0));
    Ok(SegmentationResult {
        width: img.width(),
        height: img.height(),
        rotation: RotationSummary {
            mean_degrees: outcome.estimate.mean_degrees,
            per_set_degrees: outcome.estimate.degrees,
            sets_used: outcome.estimate.sets_used,
            iterations: outcome.iterations,
        },
        tooth_count: separators.len() + 1,
        separators,
        valley_columns: outcome.valleys.positions,
        timing_ms,
    })
}

pub fn segment(img: &GrayImage, cfg: &SegmentationConfig) -> Result<SegmentationResult> {
    segment_timed(img, cfg, false)
}

/// Integer points of the segment from `(x0, y0)` to `(x1, y1)`, inclusive.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Draws each separator two pixels wide over a grey copy of `img`. Pixels
/// falling outside the image are dropped.
pub fn render_overlay(img: &GrayImage, separators: &[Segment]) -> RgbImage {
    let mut out = RgbImage::from_gray(img);
    let (w, h) = (img.width() as i64, img.height() as i64);
    for s in separators {
        let r = |v: f64| round_half_up(v.clamp(-1e9, 1e9)) as i64;
        let (x0, y0, x1, y1) = (r(s.x0), r(s.y0), r(s.x1), r(s.y1));
        let steep = (y1 - y0).abs() >= (x1 - x0).abs();
        for (x, y) in bresenham(x0, y0, x1, y1) {
            let second = if steep { (x + 1, y) } else { (x, y + 1) };
            for (px, py) in [(x, y), second] {
                if (0..w).contains(&px) && (0..h).contains(&py) {
                    out.set(px as usize, py as usize, OVERLAY_COLOR);
                }
            }
        }
    }
    out
}

/// Whether `sep` stays inside `gap` over the middle half of the gap's rows.
pub fn separator_in_gap(sep: &Segment, gap: &Mask) -> bool {
    let Some((r0, r1)) = gap.row_extent() else {
        return false;
    };
    let q = (r1 - r0) / 4;
    (r0 + q..=r1 - q).all(|y| {
        let x = round_half_up(sep.x_at(y as f64)) as i64;
        gap.contains(x, y as i64)
    })
}

/// Counts correctly separated teeth. A gap is hit when some separator stays
/// inside it (see [`separator_in_gap`]); a tooth is correct when every gap
/// bounding it is hit. Returns `(correct, total)`.
pub fn count_correct(res: &SegmentationResult, truth: &PhantomTruth) -> Result<(usize, usize)> {
    if (res.width, res.height) != (truth.width(), truth.height()) {
        return Err(Error::param(format!(
            "result is {}x{} but ground truth is {}x{}",
            res.width,
            res.height,
            truth.width(),
            truth.height()
        )));
    }
    let teeth = truth.tooth_count();
    let hit: Vec<bool> = truth
        .gap_masks
        .iter()
        .map(|g| res.separators.iter().any(|s| separator_in_gap(s, g)))
        .collect();
    let correct = (0..teeth)
        .filter(|&k| (k == 0 || hit[k - 1]) && (k + 1 == teeth || hit[k]))
        .count();
    Ok((correct, teeth))
}
