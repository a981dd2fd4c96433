//! Vertical integral projection and valley (inter-tooth gap) detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{round_half_up, GrayImage};

/// Accumulated intensity per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionProfile {
    pub values: Vec<f64>,
    pub source_width: usize,
    pub source_height: usize,
}

impl ProjectionProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Two-column `x value` text, one line per column.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 16);
        for (x, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{x} {v}\n"));
        }
        out
    }
}

/// `proj(x) = Σ_y f(x, y)`. Rows are accumulated top to bottom.
pub fn vertical_projection(img: &GrayImage) -> ProjectionProfile {
    let mut values = vec![0.0; img.width()];
    for y in 0..img.height() {
        for (acc, &v) in values.iter_mut().zip(img.row(y)) {
            *acc += v;
        }
    }
    ProjectionProfile {
        values,
        source_width: img.width(),
        source_height: img.height(),
    }
}

/// `round(w / 50)` forced odd.
pub fn default_smoothing_window(width: usize) -> usize {
    let w = (round_half_up(width as f64 / 50.0) as usize).max(1);
    if w.is_multiple_of(2) {
        w + 1
    } else {
        w
    }
}

/// Centred moving average with replicated ends.
pub fn smooth_profile(p: &ProjectionProfile, window: usize) -> Result<ProjectionProfile> {
    if window == 0 || window.is_multiple_of(2) || window > p.len() {
        return Err(Error::param(format!(
            "smoothing window {window} must be odd and within 1..={}",
            p.len()
        )));
    }
    if window == 1 {
        return Ok(p.clone());
    }
    let n = p.len();
    let r = window / 2;
    let at = |i: isize| p.values[i.clamp(0, n as isize - 1) as usize];
    let values = (0..n as isize)
        .map(|i| {
            let mut acc = at(i);
            for k in 1..=r as isize {
                acc += at(i - k) + at(i + k);
            }
            acc / window as f64
        })
        .collect();
    Ok(ProjectionProfile {
        values,
        ..p.clone()
    })
}

/// Positions of strict local minima. A run of equal values counts as one
/// minimum (reported at its centre, rounded half up) when both neighbours
/// exist and are strictly greater. Runs touching either end are ignored.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    plateau_extrema(values, |neighbour, v| neighbour > v)
}

/// Same as [`local_minima`] for maxima.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    plateau_extrema(values, |neighbour, v| neighbour < v)
}

/// Returns `(start, end)` inclusive runs of equal values whose neighbours
/// both satisfy `beyond(neighbour, value)`.
pub(crate) fn plateau_runs(
    values: &[f64],
    beyond: impl Fn(f64, f64) -> bool,
) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut runs = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[end + 1] == values[start] {
            end += 1;
        }
        if start > 0
            && end + 1 < n
            && beyond(values[start - 1], values[start])
            && beyond(values[end + 1], values[start])
        {
            runs.push((start, end));
        }
        start = end + 1;
    }
    runs
}

fn plateau_extrema(values: &[f64], beyond: impl Fn(f64, f64) -> bool) -> Vec<usize> {
    plateau_runs(values, beyond)
        .into_iter()
        .map(|(a, b)| (a + b).div_ceil(2))
        .collect()
}

/// Accepted gap candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleySet {
    pub positions: Vec<usize>,
    pub min_separation: usize,
    #[serde(skip)]
    pub profile: Option<ProjectionProfile>,
}

/// `round(w / 6)`: at most five teeth per film.
pub fn default_min_separation(width: usize) -> usize {
    (round_half_up(width as f64 / 6.0) as usize).max(1)
}

/// `round(w / 20)`.
pub fn default_edge_margin(width: usize) -> usize {
    round_half_up(width as f64 / 20.0) as usize
}

/// Finds inter-tooth gaps: local minima inside the edge margins, accepted
/// deepest first as long as they keep `min_separation` from every valley
/// already accepted. Ties in depth go to the lower column.
pub fn detect_valleys(
    p: &ProjectionProfile,
    min_separation: usize,
    edge_margin: usize,
) -> Result<ValleySet> {
    if min_separation < 1 {
        return Err(Error::param("min_separation must be >= 1"));
    }
    let n = p.len();
    let mut candidates: Vec<usize> = local_minima(&p.values)
        .into_iter()
        .filter(|&x| x >= edge_margin && x + edge_margin < n)
        .collect();
    candidates.sort_by(|&a, &b| p.values[a].total_cmp(&p.values[b]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= min_separation) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    Ok(ValleySet {
        positions: accepted,
        min_separation,
        profile: Some(p.clone()),
    })
}

/// Valley search parameters; `None` fields take the width-derived defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValleyParams {
    pub min_separation: Option<usize>,
    pub edge_margin: Option<usize>,
    pub smoothing_window: Option<usize>,
}

impl ValleyParams {
    pub fn resolve(&self, width: usize) -> (usize, usize, usize) {
        let window = self
            .smoothing_window
            .unwrap_or_else(|| default_smoothing_window(width))
            .min(if width.is_multiple_of(2) {
                width.saturating_sub(1)
            } else {
                width
            })
            .max(1);
        (
            self.min_separation
                .unwrap_or_else(|| default_min_separation(width)),
            self.edge_margin
                .unwrap_or_else(|| default_edge_margin(width)),
            window,
        )
    }
}

/// Projection → moving average → valley detection.
pub fn find_valleys(img: &GrayImage, params: &ValleyParams) -> Result<ValleySet> {
    let (min_sep, margin, window) = params.resolve(img.width());
    let profile = smooth_profile(&vertical_projection(img), window)?;
    detect_valleys(&profile, min_sep, margin)
}
