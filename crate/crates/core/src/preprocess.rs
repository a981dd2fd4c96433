//! Enhancement cascade: Butterworth low-pass and homomorphic high-emphasis
//! filtering in the frequency domain, then mean, adaptive Wiener and
//! Gaussian smoothing in the spatial domain.
//!
//! All spatial filters replicate the border pixels. Filters with symmetric
//! windows (mean, Gaussian) sum mirrored taps pairwise, so they commute
//! exactly with a left-right flip of the input.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Cutoff used when a spec leaves it unset: `0.3 × min(w, h) / 2`.
pub fn default_cutoff(width: usize, height: usize) -> f64 {
    0.3 * width.min(height) as f64 / 2.0
}

/// Low-pass Butterworth transfer function parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ButterworthSpec {
    pub order: u32,
    /// Radius in centred DFT index units; `None` picks [`default_cutoff`].
    pub cutoff: Option<f64>,
    pub dc_gain: f64,
}

impl Default for ButterworthSpec {
    fn default() -> Self {
        Self {
            order: 2,
            cutoff: None,
            dc_gain: 1.0,
        }
    }
}

impl ButterworthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::param("Butterworth order must be >= 1"));
        }
        validate_cutoff(self.cutoff)?;
        if !(self.dc_gain > 0.0 && self.dc_gain.is_finite()) {
            return Err(Error::param("Butterworth DC gain must be positive"));
        }
        Ok(())
    }

    pub fn cutoff_for(&self, width: usize, height: usize) -> f64 {
        self.cutoff.unwrap_or_else(|| default_cutoff(width, height))
    }

    /// Gain at frequency radius `d`.
    pub fn gain(&self, cutoff: f64, d: f64) -> f64 {
        butterworth_gain(self.order, cutoff, self.dc_gain, d)
    }
}

fn validate_cutoff(cutoff: Option<f64>) -> Result<()> {
    match cutoff {
        Some(d0) if !(d0 > 0.0 && d0.is_finite()) => {
            Err(Error::param(format!("cutoff {d0} must be positive")))
        }
        _ => Ok(()),
    }
}

/// `G(d) = g0 / sqrt(1 + (d / d0)^(2n))`.
pub fn butterworth_gain(order: u32, cutoff: f64, dc_gain: f64, d: f64) -> f64 {
    let ratio = (d / cutoff).powi(2 * order as i32);
    dc_gain / (1.0 + ratio).sqrt()
}

/// High-emphasis filter applied to `log(1 + f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomomorphicSpec {
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub cutoff: Option<f64>,
    pub order: u32,
}

impl Default for HomomorphicSpec {
    fn default() -> Self {
        Self {
            gamma_low: 0.5,
            gamma_high: 1.5,
            cutoff: None,
            order: 2,
        }
    }
}

impl HomomorphicSpec {
    pub fn validate(&self) -> Result<()> {
        // equal gains are accepted as the degenerate unit-gain configuration
        if !(self.gamma_low > 0.0
            && self.gamma_low <= self.gamma_high
            && self.gamma_high.is_finite())
        {
            return Err(Error::param(format!(
                "homomorphic gains must satisfy 0 < gamma_low <= gamma_high (got {} / {})",
                self.gamma_low, self.gamma_high
            )));
        }
        if self.order < 1 {
            return Err(Error::param("homomorphic order must be >= 1"));
        }
        validate_cutoff(self.cutoff)
    }

    pub fn cutoff_for(&self, width: usize, height: usize) -> f64 {
        self.cutoff.unwrap_or_else(|| default_cutoff(width, height))
    }

    /// `(γH − γL) · (1 − 1 / (1 + (d/d0)^(2n))) + γL`
    pub fn gain(&self, cutoff: f64, d: f64) -> f64 {
        let ratio = (d / cutoff).powi(2 * self.order as i32);
        (self.gamma_high - self.gamma_low) * (1.0 - 1.0 / (1.0 + ratio)) + self.gamma_low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSpec {
    pub mean_size: usize,
    pub wiener_rows: usize,
    pub wiener_cols: usize,
    pub gaussian_sigma: f64,
    pub gaussian_size: usize,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            mean_size: 15,
            wiener_rows: 10,
            wiener_cols: 10,
            gaussian_sigma: 2.0,
            gaussian_size: 9,
        }
    }
}

impl SmoothingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mean_size < 3 || self.mean_size.is_multiple_of(2) {
            return Err(Error::param(format!(
                "mean window {} must be odd and >= 3",
                self.mean_size
            )));
        }
        if self.wiener_rows < 2 || self.wiener_cols < 2 {
            return Err(Error::param("Wiener neighbourhood must be at least 2x2"));
        }
        check_gaussian(self.gaussian_sigma, self.gaussian_size)
    }
}

/// Which stages of the cascade run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub butterworth: bool,
    pub homomorphic: bool,
    pub mean: bool,
    pub wiener: bool,
    pub gaussian: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self::all(true)
    }
}

impl StageToggles {
    pub fn all(on: bool) -> Self {
        Self {
            butterworth: on,
            homomorphic: on,
            mean: on,
            wiener: on,
            gaussian: on,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub butterworth: ButterworthSpec,
    pub homomorphic: HomomorphicSpec,
    pub smoothing: SmoothingSpec,
    pub stages: StageToggles,
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        self.butterworth.validate()?;
        self.homomorphic.validate()?;
        self.smoothing.validate()
    }
}

// ---------------------------------------------------------------------------
// Frequency domain
// ---------------------------------------------------------------------------

/// Distance of DFT bin `k` (of `n`) from the DC bin once the spectrum is centred.
fn centred_frequency(k: usize, n: usize) -> f64 {
    k.min(n - k) as f64
}

fn fft_2d(width: usize, height: usize, data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (
            planner.plan_fft_inverse(width),
            planner.plan_fft_inverse(height),
        )
    } else {
        (
            planner.plan_fft_forward(width),
            planner.plan_fft_forward(height),
        )
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        col_fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }
}

/// Forward unnormalized 2D DFT of a real row-major raster.
pub fn forward_dft(width: usize, height: usize, pixels: &[f64]) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = pixels.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_2d(width, height, &mut data, false);
    data
}

/// Inverse 2D DFT including the `1 / (w h)` normalization.
pub fn inverse_dft(
    width: usize,
    height: usize,
    mut spectrum: Vec<Complex<f64>>,
) -> Vec<Complex<f64>> {
    fft_2d(width, height, &mut spectrum, true);
    let scale = 1.0 / (width * height) as f64;
    for c in &mut spectrum {
        *c *= scale;
    }
    spectrum
}

/// DFT, radial gain, inverse DFT; returns the real part without clamping.
fn filter_real(width: usize, height: usize, pixels: &[f64], gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut spectrum = forward_dft(width, height, pixels);
    for v in 0..height {
        let fv = centred_frequency(v, height);
        for u in 0..width {
            let fu = centred_frequency(u, width);
            spectrum[v * width + u] *= gain(fu.hypot(fv));
        }
    }
    inverse_dft(width, height, spectrum)
        .into_iter()
        .map(|c| c.re)
        .collect()
}

/// Multiplies the spectrum by `gain(D(u, v))`, `D` being the distance from the
/// centred DC bin, and returns the real part clamped to be non-negative.
pub fn apply_frequency_filter(img: &GrayImage, gain: impl Fn(f64) -> f64) -> GrayImage {
    let out = filter_real(img.width(), img.height(), img.pixels(), gain);
    GrayImage::from_raw_clamped(img.width(), img.height(), out)
}

pub fn butterworth_filter(img: &GrayImage, spec: &ButterworthSpec) -> Result<GrayImage> {
    spec.validate()?;
    let d0 = spec.cutoff_for(img.width(), img.height());
    Ok(apply_frequency_filter(img, |d| spec.gain(d0, d)))
}

/// `log(1 + f)` → high-emphasis filter → `exp(·) − 1`, clamped to `[0, 255]`.
pub fn homomorphic_filter(img: &GrayImage, spec: &HomomorphicSpec) -> Result<GrayImage> {
    spec.validate()?;
    let (w, h) = (img.width(), img.height());
    let d0 = spec.cutoff_for(w, h);
    let logs: Vec<f64> = img.pixels().iter().map(|v| v.ln_1p()).collect();
    let filtered = filter_real(w, h, &logs, |d| spec.gain(d0, d));
    let out = filtered
        .into_iter()
        .map(|v| v.exp_m1().clamp(0.0, 255.0))
        .collect();
    Ok(GrayImage::from_raw_clamped(w, h, out))
}

// ---------------------------------------------------------------------------
// Spatial domain
// ---------------------------------------------------------------------------

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Symmetric 1D convolution with replicated ends. `taps[0]` is the centre
/// weight, `taps[k]` the weight at offsets ±k.
fn symmetric_pass(src: &[f64], dst: &mut [f64], taps: &[f64]) {
    let n = src.len();
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = taps[0] * src[i];
        for (k, &t) in taps.iter().enumerate().skip(1) {
            let left = src[clamp_index(i as isize - k as isize, n)];
            let right = src[clamp_index(i as isize + k as isize, n)];
            acc += t * (left + right);
        }
        *out = acc;
    }
}

/// Applies the same symmetric kernel along rows and then along columns.
fn separable_symmetric(img: &GrayImage, taps: &[f64]) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut horiz = vec![0.0; w * h];
    for (y, out) in horiz.chunks_exact_mut(w).enumerate() {
        symmetric_pass(img.row(y), out, taps);
    }
    let mut result = vec![0.0; w * h];
    let mut column = vec![0.0; h];
    let mut filtered = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = horiz[y * w + x];
        }
        symmetric_pass(&column, &mut filtered, taps);
        for y in 0..h {
            result[y * w + x] = filtered[y];
        }
    }
    result
}

/// Box average over a `size × size` window.
pub fn mean_filter(img: &GrayImage, size: usize) -> Result<GrayImage> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::param(format!(
            "mean window {size} must be odd and >= 3"
        )));
    }
    if size > img.width().min(img.height()) {
        return Err(Error::param(format!(
            "mean window {size} exceeds image size {}x{}",
            img.width(),
            img.height()
        )));
    }
    let taps = vec![1.0 / size as f64; size / 2 + 1];
    Ok(GrayImage::from_raw_clamped(
        img.width(),
        img.height(),
        separable_symmetric(img, &taps),
    ))
}

fn check_gaussian(sigma: f64, size: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!(
            "Gaussian sigma {sigma} must be positive"
        )));
    }
    if size.is_multiple_of(2) {
        return Err(Error::param(format!(
            "Gaussian kernel size {size} must be odd"
        )));
    }
    Ok(())
}

/// Half of a normalized 1D Gaussian kernel: entry `k` is the weight at offset ±k.
pub fn gaussian_taps(sigma: f64, size: usize) -> Result<Vec<f64>> {
    check_gaussian(sigma, size)?;
    let radius = size / 2;
    let raw: Vec<f64> = (0..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

pub fn gaussian_filter(img: &GrayImage, sigma: f64, size: usize) -> Result<GrayImage> {
    let taps = gaussian_taps(sigma, size)?;
    Ok(GrayImage::from_raw_clamped(
        img.width(),
        img.height(),
        separable_symmetric(img, &taps),
    ))
}

/// Local first and second moments needed by the Wiener filter.
#[derive(Debug, Clone)]
pub struct LocalStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Noise power: average of all local variances.
    pub noise: f64,
}

/// Window offsets for a neighbourhood of `n` samples; even sizes put the
/// target at index `n / 2` (offsets `-n/2 ..= n - 1 - n/2`).
fn window_offsets(n: usize) -> (isize, isize) {
    let lo = -((n / 2) as isize);
    (lo, lo + n as isize - 1)
}

fn box_sum_1d(src: &[f64], dst: &mut [f64], lo: isize, hi: isize) {
    let n = src.len();
    for (i, out) in dst.iter_mut().enumerate() {
        *out = (lo..=hi).map(|k| src[clamp_index(i as isize + k, n)]).sum();
    }
}

pub fn local_stats(img: &GrayImage, rows: usize, cols: usize) -> Result<LocalStats> {
    if rows < 2 || cols < 2 {
        return Err(Error::param(format!(
            "Wiener neighbourhood {rows}x{cols} must be at least 2x2"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (xlo, xhi) = window_offsets(cols);
    let (ylo, yhi) = window_offsets(rows);
    let squares: Vec<f64> = img.pixels().iter().map(|v| v * v).collect();
    let window_sum = |src: &[f64]| -> Vec<f64> {
        let mut horiz = vec![0.0; w * h];
        for y in 0..h {
            box_sum_1d(
                &src[y * w..(y + 1) * w],
                &mut horiz[y * w..(y + 1) * w],
                xlo,
                xhi,
            );
        }
        let mut out = vec![0.0; w * h];
        let mut column = vec![0.0; h];
        let mut summed = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                column[y] = horiz[y * w + x];
            }
            box_sum_1d(&column, &mut summed, ylo, yhi);
            for y in 0..h {
                out[y * w + x] = summed[y];
            }
        }
        out
    };
    let count = (rows * cols) as f64;
    let mean: Vec<f64> = window_sum(img.pixels())
        .into_iter()
        .map(|s| s / count)
        .collect();
    let variance: Vec<f64> = window_sum(&squares)
        .into_iter()
        .zip(&mean)
        .map(|(s, m)| (s / count - m * m).max(0.0))
        .collect();
    let noise = variance.iter().sum::<f64>() / variance.len() as f64;
    Ok(LocalStats {
        mean,
        variance,
        noise,
    })
}

/// Per-pixel adaptive Wiener estimate from local mean/variance and noise power.
#[inline]
pub fn wiener_pixel(value: f64, mean: f64, variance: f64, noise: f64) -> f64 {
    let denom = variance.max(noise);
    if denom <= 0.0 {
        return mean;
    }
    mean + ((variance - noise).max(0.0) / denom) * (value - mean)
}

/// Adaptive Wiener filter over a `rows × cols` neighbourhood.
pub fn wiener_filter(img: &GrayImage, rows: usize, cols: usize) -> Result<GrayImage> {
    let stats = local_stats(img, rows, cols)?;
    let out = img
        .pixels()
        .iter()
        .zip(stats.mean.iter().zip(&stats.variance))
        .map(|(&p, (&m, &v))| wiener_pixel(p, m, v, stats.noise))
        .collect();
    Ok(GrayImage::from_raw_clamped(img.width(), img.height(), out))
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Named stage of the cascade, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Butterworth,
    Homomorphic,
    Mean,
    Wiener,
    Gaussian,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [
        Stage::Butterworth,
        Stage::Homomorphic,
        Stage::Mean,
        Stage::Wiener,
        Stage::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Butterworth => "butterworth",
            Stage::Homomorphic => "homomorphic",
            Stage::Mean => "mean",
            Stage::Wiener => "wiener",
            Stage::Gaussian => "gaussian",
        }
    }

    fn enabled(self, toggles: &StageToggles) -> bool {
        match self {
            Stage::Butterworth => toggles.butterworth,
            Stage::Homomorphic => toggles.homomorphic,
            Stage::Mean => toggles.mean,
            Stage::Wiener => toggles.wiener,
            Stage::Gaussian => toggles.gaussian,
        }
    }

    fn apply(self, img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
        let sm = &cfg.smoothing;
        match self {
            Stage::Butterworth => butterworth_filter(img, &cfg.butterworth),
            Stage::Homomorphic => homomorphic_filter(img, &cfg.homomorphic),
            Stage::Mean => mean_filter(img, sm.mean_size),
            Stage::Wiener => wiener_filter(img, sm.wiener_rows, sm.wiener_cols),
            Stage::Gaussian => gaussian_filter(img, sm.gaussian_sigma, sm.gaussian_size),
        }
    }
}

/// Runs the enabled stages in order and calls `visit` after each one.
pub fn preprocess_with(
    img: &GrayImage,
    cfg: &PreprocessConfig,
    mut visit: impl FnMut(Stage, &GrayImage),
) -> Result<GrayImage> {
    cfg.validate()?;
    let mut current = img.clone();
    for stage in Stage::ORDER {
        if stage.enabled(&cfg.stages) {
            current = stage
                .apply(&current, cfg)
                .map_err(|e| Error::param(format!("{} stage: {e}", stage.name())))?;
            visit(stage, &current);
        }
    }
    Ok(current)
}

/// Butterworth → homomorphic → mean → Wiener → Gaussian.
pub fn preprocess_pipeline(img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
    preprocess_with(img, cfg, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 97) as f64 * 2.0).unwrap()
    }

    #[test]
    fn butterworth_gain_examples() {
        assert!((butterworth_gain(2, 50.0, 1.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((butterworth_gain(2, 50.0, 1.0, 50.0) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((butterworth_gain(2, 50.0, 1.0, 100.0) - 1.0 / 17f64.sqrt()).abs() < 1e-12);
        assert!((butterworth_gain(2, 50.0, 1.0, 100.0) - 0.24254).abs() < 1e-5);
    }

    #[test]
    fn specs_reject_invalid_values() {
        assert!(ButterworthSpec {
            order: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ButterworthSpec {
            cutoff: Some(0.0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ButterworthSpec {
            dc_gain: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(HomomorphicSpec {
            gamma_low: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(HomomorphicSpec {
            gamma_low: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SmoothingSpec {
            mean_size: 4,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SmoothingSpec {
            wiener_rows: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SmoothingSpec {
            gaussian_sigma: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SmoothingSpec {
            gaussian_size: 8,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn frequency_filter_scales_dc() {
        let img = GrayImage::filled(12, 9, 100.0).unwrap();
        let same = apply_frequency_filter(&img, |d| if d == 0.0 { 1.0 } else { 0.3 });
        let half = apply_frequency_filter(&img, |d| if d == 0.0 { 0.5 } else { 7.0 });
        for (&a, &b) in same.pixels().iter().zip(half.pixels()) {
            assert!((a - 100.0).abs() < 1e-9);
            assert!((b - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn butterworth_preserves_constants_and_changes_texture() {
        let c = GrayImage::filled(40, 30, 77.0).unwrap();
        let out = butterworth_filter(&c, &ButterworthSpec::default()).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 77.0).abs() < 1e-9));
        let textured = ramp(40, 30);
        let out = butterworth_filter(&textured, &ButterworthSpec::default()).unwrap();
        assert_ne!(out, textured);
    }

    #[test]
    fn homomorphic_unit_gain_is_identity() {
        let img = GrayImage::filled(16, 16, 42.0).unwrap();
        let spec = HomomorphicSpec {
            gamma_low: 1.0,
            gamma_high: 1.0,
            ..Default::default()
        };
        let out = homomorphic_filter(&img, &spec).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 42.0).abs() < 1e-6));
    }

    #[test]
    fn homomorphic_constant_dc_closed_form() {
        let img = GrayImage::filled(20, 14, 100.0).unwrap();
        let out = homomorphic_filter(&img, &HomomorphicSpec::default()).unwrap();
        let expected = (0.5 * 101f64.ln()).exp() - 1.0;
        assert!((expected - 9.0499).abs() < 1e-4);
        assert!(out.pixels().iter().all(|v| (v - expected).abs() < 1e-9));
    }

    #[test]
    fn mean_filter_examples() {
        let img = GrayImage::new(3, 3, vec![0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let out = mean_filter(&img, 3).unwrap();
        assert!((out.get(1, 1) - 1.0).abs() < 1e-12);
        assert!(mean_filter(&img, 2).is_err());
        assert!(mean_filter(&img, 5).is_err());
        let c = GrayImage::filled(20, 20, 3.3).unwrap();
        assert!(mean_filter(&c, 15)
            .unwrap()
            .pixels()
            .iter()
            .all(|v| (v - 3.3).abs() < 1e-12));
    }

    #[test]
    fn wiener_pixel_behaviour() {
        // local variance equal to the noise power: full smoothing to the mean
        assert_eq!(wiener_pixel(10.0, 4.0, 9.0, 9.0), 4.0);
        // flat neighbourhood in a flat image
        assert_eq!(wiener_pixel(5.0, 5.0, 0.0, 0.0), 5.0);
        // strong local structure keeps most of the deviation
        let out = wiener_pixel(10.0, 4.0, 100.0, 1.0);
        assert!((out - (4.0 + 0.99 * 6.0)).abs() < 1e-12);
        // quiet area in a noisy image collapses to the mean
        assert_eq!(wiener_pixel(10.0, 4.0, 0.5, 2.0), 4.0);
    }

    #[test]
    fn wiener_even_window_is_anchored_at_half() {
        assert_eq!(window_offsets(10), (-5, 4));
        assert_eq!(window_offsets(3), (-1, 1));
        assert_eq!(window_offsets(2), (-1, 0));
    }

    #[test]
    fn wiener_constant_image() {
        let c = GrayImage::filled(25, 18, 61.0).unwrap();
        let out = wiener_filter(&c, 10, 10).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 61.0).abs() < 1e-9));
        assert!(wiener_filter(&c, 1, 10).is_err());
    }

    #[test]
    fn gaussian_impulse_gives_centre_weight() {
        let img =
            GrayImage::from_fn(33, 33, |x, y| if x == 16 && y == 16 { 1.0 } else { 0.0 }).unwrap();
        let out = gaussian_filter(&img, 2.0, 9).unwrap();
        let taps = gaussian_taps(2.0, 9).unwrap();
        assert!((out.get(16, 16) - taps[0] * taps[0]).abs() < 1e-15);
        assert!(gaussian_filter(&img, 0.0, 9).is_err());
        assert!(gaussian_filter(&img, 2.0, 8).is_err());
    }

    #[test]
    fn pipeline_with_everything_disabled_is_identity() {
        let img = ramp(30, 30);
        let cfg = PreprocessConfig {
            stages: StageToggles::all(false),
            ..Default::default()
        };
        assert_eq!(preprocess_pipeline(&img, &cfg).unwrap(), img);
    }

    #[test]
    fn pipeline_visits_stages_in_order() {
        let img = ramp(40, 40);
        let mut seen = Vec::new();
        preprocess_with(&img, &PreprocessConfig::default(), |s, _| seen.push(s)).unwrap();
        assert_eq!(seen, Stage::ORDER.to_vec());
        let cfg = PreprocessConfig {
            stages: StageToggles {
                homomorphic: false,
                wiener: false,
                ..Default::default()
            },
            ..Default::default()
        };
        seen.clear();
        preprocess_with(&img, &cfg, |s, _| seen.push(s)).unwrap();
        assert_eq!(seen, vec![Stage::Butterworth, Stage::Mean, Stage::Gaussian]);
    }

    #[test]
    fn pipeline_names_failing_stage() {
        let img = ramp(10, 10);
        let err = preprocess_pipeline(&img, &PreprocessConfig::default()).unwrap_err();
        assert!(err.to_string().contains("mean stage"), "{err}");
    }
}
