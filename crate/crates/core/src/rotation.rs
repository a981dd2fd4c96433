//! Tilt estimation from bright root-canal fillings.
//!
//! Row maxima of the middle third of the (pre-processed) film are linked
//! row by row into traces; each trace is fitted with a least-squares line
//! `col = a + m·row` and the tilt is the mean of `atan(m)` over all traces.
//! The estimate is then used either to tilt the separator lines (line-rotate)
//! or to de-rotate the image and project again (image-rotate).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{
    center, middle_band, rotate, rotate_point, Band, GrayImage, MAX_ROTATION_DEGREES,
};
use crate::projection::{find_valleys, ValleyParams, ValleySet};

/// Tuning for peak picking and trace linking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Minimum peak prominence as a fraction of the row's dynamic range.
    pub prominence_fraction: f64,
    /// Largest column jump between consecutive points of a trace.
    /// `f64::INFINITY` links every maximum to its nearest trace.
    pub gating_distance: f64,
    /// Traces shorter than this fraction of the band height are dropped.
    pub min_trace_fraction: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            prominence_fraction: 0.10,
            gating_distance: 3.0,
            min_trace_fraction: 0.5,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prominence_fraction > 0.0 && self.prominence_fraction < 1.0) {
            return Err(Error::param("prominence_fraction must lie in (0, 1)"));
        }
        if !(self.gating_distance >= 0.0) {
            return Err(Error::param("gating_distance must be non-negative"));
        }
        if !(self.min_trace_fraction > 0.0 && self.min_trace_fraction <= 1.0) {
            return Err(Error::param("min_trace_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Prominence of the peak whose plateau spans `start..=end`: its height
/// above the higher of the two lowest points reached before the signal
/// climbs above the peak on either side (or hits the end of the row).
fn prominence(values: &[f64], start: usize, end: usize) -> f64 {
    let peak = values[start];
    let mut left_min = peak;
    for &v in values[..start].iter().rev() {
        if v > peak {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    for &v in &values[end + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Prominent local maxima of a 1D signal, reported at plateau centres.
pub fn signal_maxima(values: &[f64], prominence_fraction: f64) -> Vec<usize> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = prominence_fraction * range;
    crate::projection::plateau_runs(values, |n, v| n < v)
        .into_iter()
        .filter(|&(a, b)| prominence(values, a, b) >= threshold)
        .map(|(a, b)| (a + b).div_ceil(2))
        .collect()
}

/// Columns of prominent maxima in one image row.
pub fn row_maxima(img: &GrayImage, row: usize, cfg: &TraceConfig) -> Result<Vec<usize>> {
    if row >= img.height() {
        return Err(Error::param(format!(
            "row {row} outside image of height {}",
            img.height()
        )));
    }
    Ok(signal_maxima(img.row(row), cfg.prominence_fraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub row: f64,
    pub col: f64,
}

/// One linked sequence of row maxima, top to bottom.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceSet {
    pub points: Vec<TracePoint>,
}

impl TraceSet {
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self {
            points: points
                .into_iter()
                .map(|(row, col)| TracePoint { row, col })
                .collect(),
        }
    }

    fn tail_col(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.col)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Links row maxima through `band`.
///
/// Every maximum of the first row seeds a trace. In each later row a
/// maximum joins the trace whose latest point is nearest in column, if that
/// distance is within the gate; when several maxima claim one trace the
/// nearest wins. Traces shorter than `min_trace_fraction` of the band are
/// discarded.
pub fn trace_maxima(img: &GrayImage, band: Band, cfg: &TraceConfig) -> Result<Vec<TraceSet>> {
    cfg.validate()?;
    if band.row_end > img.height() || band.row_start >= band.row_end {
        return Err(Error::param(format!(
            "band [{}, {}) does not fit an image of height {}",
            band.row_start,
            band.row_end,
            img.height()
        )));
    }
    let mut sets: Vec<TraceSet> = row_maxima(img, band.row_start, cfg)?
        .into_iter()
        .map(|c| TraceSet::from_points([(band.row_start as f64, c as f64)]))
        .collect();
    if sets.is_empty() {
        return Ok(sets);
    }
    for row in band.row_start + 1..band.row_end {
        // (distance, column) of the best claimant per set
        let mut claims: Vec<Option<(f64, usize)>> = vec![None; sets.len()];
        for col in row_maxima(img, row, cfg)? {
            let nearest = sets
                .iter()
                .enumerate()
                .map(|(k, s)| (k, (s.tail_col() - col as f64).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((k, dist)) = nearest {
                if dist <= cfg.gating_distance && claims[k].is_none_or(|(best, _)| dist < best) {
                    claims[k] = Some((dist, col));
                }
            }
        }
        for (set, claim) in sets.iter_mut().zip(claims) {
            if let Some((_, col)) = claim {
                set.points.push(TracePoint {
                    row: row as f64,
                    col: col as f64,
                });
            }
        }
    }
    let min_len = cfg.min_trace_fraction * band.height() as f64;
    sets.retain(|s| s.len() as f64 >= min_len);
    Ok(sets)
}

/// Ordinary least-squares slope of column on row.
pub fn fit_slope(trace: &TraceSet) -> Result<f64> {
    let n = trace.len() as f64;
    if trace.len() < 2 {
        return Err(Error::param(
            "a trace needs at least two points to fit a slope",
        ));
    }
    let row_mean = trace.points.iter().map(|p| p.row).sum::<f64>() / n;
    let col_mean = trace.points.iter().map(|p| p.col).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in &trace.points {
        let dr = p.row - row_mean;
        sxy += dr * (p.col - col_mean);
        sxx += dr * dr;
    }
    if sxx == 0.0 {
        return Err(Error::param("all trace points lie in one row"));
    }
    Ok(sxy / sxx)
}

/// Per-trace slopes and their mean angle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationEstimate {
    /// Column change per row, one per trace.
    pub slopes: Vec<f64>,
    /// `atan(slope)` in degrees: angle from the vertical axis.
    pub degrees: Vec<f64>,
    pub mean_degrees: f64,
    pub sets_used: usize,
}

impl RotationEstimate {
    pub fn from_slopes(slopes: Vec<f64>) -> Self {
        // traces steeper than 45 degrees from vertical are not root canals
        let slopes: Vec<f64> = slopes
            .into_iter()
            .filter(|m| m.atan().to_degrees().abs() <= 45.0)
            .collect();
        let degrees: Vec<f64> = slopes.iter().map(|m| m.atan().to_degrees()).collect();
        let mean_degrees = if degrees.is_empty() {
            0.0
        } else {
            degrees.iter().sum::<f64>() / degrees.len() as f64
        };
        Self {
            sets_used: slopes.len(),
            slopes,
            degrees,
            mean_degrees,
        }
    }

    /// Largest pairwise disagreement between traces, in degrees.
    pub fn spread(&self) -> f64 {
        let lo = self.degrees.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .degrees
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if self.degrees.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Middle band → traces → per-trace regression → mean angle.
/// Yields `sets_used == 0` and a zero angle when nothing can be traced.
pub fn estimate_rotation(img: &GrayImage, cfg: &TraceConfig) -> Result<RotationEstimate> {
    let band = middle_band(img)?;
    let traces = trace_maxima(img, band, cfg)?;
    let slopes = traces.iter().filter_map(|t| fit_slope(t).ok()).collect();
    Ok(RotationEstimate::from_slopes(slopes))
}

/// Outcome of [`iterate_rotation`].
#[derive(Debug, Clone)]
pub struct IteratedRotation {
    /// The input rotated by `-total_degrees`.
    pub image: GrayImage,
    /// Sum of all applied corrections.
    pub total_degrees: f64,
    /// Corrections applied, in order.
    pub corrections: Vec<f64>,
    /// Number of estimates computed.
    pub iterations: usize,
    /// The first estimate, made on the unrotated input.
    pub initial: RotationEstimate,
    /// The last estimate computed.
    pub last: RotationEstimate,
}

/// Alternates estimation and de-rotation until the estimated residual tilt
/// drops below `tol`, nothing can be traced, or `max_iter` estimates were
/// made. Each step re-rotates the original image by the accumulated angle,
/// so interpolation blur does not compound. A residual below `tol` is
/// reported but not applied.
pub fn iterate_rotation(
    img: &GrayImage,
    cfg: &TraceConfig,
    tol: f64,
    max_iter: usize,
) -> Result<IteratedRotation> {
    if !(tol > 0.0) {
        return Err(Error::param("rotation tolerance must be positive"));
    }
    if max_iter < 1 {
        return Err(Error::param("max_iter must be >= 1"));
    }
    let mut image = img.clone();
    let mut total = 0.0;
    let mut corrections = Vec::new();
    let mut iterations = 0;
    let mut initial = None;
    let last = loop {
        let est = estimate_rotation(&image, cfg)?;
        iterations += 1;
        if initial.is_none() {
            initial = Some(est.clone());
        }
        if est.sets_used == 0 || est.mean_degrees.abs() < tol || iterations >= max_iter {
            // at max_iter the final correction is still applied
            if est.sets_used > 0 && est.mean_degrees.abs() >= tol {
                if let Some(next) = apply_correction(img, total, est.mean_degrees)? {
                    total += est.mean_degrees;
                    corrections.push(est.mean_degrees);
                    image = next;
                }
            }
            break est;
        }
        match apply_correction(img, total, est.mean_degrees)? {
            Some(next) => {
                total += est.mean_degrees;
                corrections.push(est.mean_degrees);
                image = next;
            }
            None => break est,
        }
    };
    Ok(IteratedRotation {
        image,
        total_degrees: total,
        corrections,
        iterations,
        initial: initial.unwrap_or_default(),
        last,
    })
}

/// Rotates the original by `-(total + step)`, or `None` when that would leave
/// the supported angle range.
fn apply_correction(original: &GrayImage, total: f64, step: f64) -> Result<Option<GrayImage>> {
    let next = total + step;
    if next.abs() > MAX_ROTATION_DEGREES {
        return Ok(None);
    }
    rotate(original, -next).map(Some)
}

/// A straight separator between two teeth, in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Segment {
    pub fn midpoint(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Angle from the vertical axis in degrees, positive when x grows with y.
    pub fn angle_from_vertical(&self) -> f64 {
        (self.x1 - self.x0).atan2(self.y1 - self.y0).to_degrees()
    }

    /// x coordinate of the supporting line at row `y`.
    pub fn x_at(&self, y: f64) -> f64 {
        if self.y1 == self.y0 {
            return self.x0;
        }
        self.x0 + (y - self.y0) * (self.x1 - self.x0) / (self.y1 - self.y0)
    }
}

/// How the tilt estimate is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Project the unrotated image and tilt each separator line.
    LineRotate,
    /// De-rotate the image, project again, map separators back.
    #[default]
    ImageRotate,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line-rotate" => Ok(Mode::LineRotate),
            "image-rotate" => Ok(Mode::ImageRotate),
            other => Err(Error::param(format!(
                "unknown mode '{other}' (expected line-rotate or image-rotate)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::LineRotate => "line-rotate",
            Mode::ImageRotate => "image-rotate",
        })
    }
}

/// Full-height lines through `(x, h/2)` tilted `degrees` from vertical.
pub fn tilted_separators(columns: &[usize], degrees: f64, height: usize) -> Vec<Segment> {
    let slope = degrees.to_radians().tan();
    let mid = height as f64 / 2.0;
    let (y0, y1) = (0.0, height as f64 - 1.0);
    columns
        .iter()
        .map(|&c| {
            let x = c as f64;
            Segment {
                x0: x + (y0 - mid) * slope,
                y0,
                x1: x + (y1 - mid) * slope,
                y1,
            }
        })
        .collect()
}

/// Vertical lines at `columns` in an image that was rotated by
/// `-correction_degrees`, mapped back into the unrotated frame.
pub fn unrotated_separators(
    columns: &[usize],
    correction_degrees: f64,
    width: usize,
    height: usize,
) -> Vec<Segment> {
    let (cx, cy) = center(width, height);
    let (y0, y1) = (0.0, height as f64 - 1.0);
    columns
        .iter()
        .map(|&c| {
            let x = c as f64;
            if correction_degrees == 0.0 {
                return Segment {
                    x0: x,
                    y0,
                    x1: x,
                    y1,
                };
            }
            let (x0, ny0) = rotate_point(x, y0, correction_degrees, cx, cy);
            let (x1, ny1) = rotate_point(x, y1, correction_degrees, cx, cy);
            Segment {
                x0,
                y0: ny0,
                x1,
                y1: ny1,
            }
        })
        .collect()
}

/// Settings shared by both application modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams {
    pub trace: TraceConfig,
    pub valleys: ValleyParams,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModeParams {
    fn default() -> Self {
        Self {
            trace: TraceConfig::default(),
            valleys: ValleyParams::default(),
            tol: 0.25,
            max_iter: 5,
        }
    }
}

/// Separators plus the bookkeeping that produced them.
#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub separators: Vec<Segment>,
    /// Valleys in working-image coordinates.
    pub valleys: ValleySet,
    /// Angle the working image was rotated back by (0 in line-rotate mode).
    pub correction_degrees: f64,
    pub iterations: usize,
    pub estimate: RotationEstimate,
}

/// Turns valleys and a tilt estimate into separator segments.
///
/// `valleys` and `est` come from the unrotated image. Line-rotate tilts a
/// line through each valley; image-rotate ignores both, de-rotates `img`
/// iteratively and detects valleys again on the corrected image.
pub fn apply_mode(
    img: &GrayImage,
    valleys: &ValleySet,
    est: &RotationEstimate,
    mode: Mode,
    params: &ModeParams,
) -> Result<ModeOutcome> {
    let (w, h) = (img.width(), img.height());
    match mode {
        Mode::LineRotate => Ok(ModeOutcome {
            separators: tilted_separators(&valleys.positions, est.mean_degrees, h),
            valleys: valleys.clone(),
            correction_degrees: 0.0,
            iterations: 1,
            estimate: est.clone(),
        }),
        Mode::ImageRotate => {
            let it = iterate_rotation(img, &params.trace, params.tol, params.max_iter)?;
            let corrected = if it.total_degrees == 0.0 {
                valleys.clone()
            } else {
                find_valleys(&it.image, &params.valleys)?
            };
            Ok(ModeOutcome {
                separators: unrotated_separators(&corrected.positions, it.total_degrees, w, h),
                valleys: corrected,
                correction_degrees: it.total_degrees,
                iterations: it.iterations,
                estimate: RotationEstimate {
                    mean_degrees: it.total_degrees,
                    ..it.initial
                },
            })
        }
    }
}
