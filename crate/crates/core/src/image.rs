//! Grayscale raster container, PGM/PNG I/O and the geometric primitives
//! (rotation, middle band) shared by every stage.
//!
//! Pixels are kept as `f64` in `[0, 255]` through the whole pipeline and are
//! quantized only when written to disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Largest rotation magnitude accepted by [`rotate`], in degrees.
pub const MAX_ROTATION_DEGREES: f64 = 90.0;

/// Round half up: `floor(x + 0.5)`. Used for every rounding in the crate.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Floating-point grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image, checking dimensions and that every value is finite and non-negative.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidPixels(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidPixels(format!(
                "pixel value {bad} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Internal constructor for filter outputs: negative values (rounding
    /// residue or ringing) are clamped to zero.
    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        for v in &mut pixels {
            if !(*v >= 0.0) {
                *v = 0.0;
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Applies `f` to every pixel; results are clamped to be non-negative.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw_clamped(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Left-right mirror image.
    pub fn mirror_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..self.height {
            pixels.extend(self.row(y).iter().rev());
        }
        Self {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    /// Pixels quantized to bytes: clamp to `[0, 255]` then round half up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }
}

fn quantize(v: f64) -> u8 {
    round_half_up(v.clamp(0.0, 255.0)) as u8
}

/// Half-open row range `[row_start, row_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub row_start: usize,
    pub row_end: usize,
}

impl Band {
    pub fn new(row_start: usize, row_end: usize) -> Result<Self> {
        if row_start >= row_end {
            return Err(Error::param(format!("empty band [{row_start}, {row_end})")));
        }
        Ok(Self { row_start, row_end })
    }

    pub fn height(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.row_start..self.row_end
    }
}

/// Middle third of the image: rows `round(h/3)` up to and including
/// `round(2h/3)`, i.e. `[round(h/3), round(2h/3) + 1)`.
pub fn middle_band(img: &GrayImage) -> Result<Band> {
    middle_band_for_height(img.height())
}

pub fn middle_band_for_height(h: usize) -> Result<Band> {
    if h < 3 {
        return Err(Error::param(format!(
            "image height {h} is too short for a middle band (need >= 3)"
        )));
    }
    let hf = h as f64;
    let start = round_half_up(hf / 3.0) as usize;
    let end = (round_half_up(2.0 * hf / 3.0) as usize + 1).min(h);
    Band::new(start, end)
}

/// Geometric centre used as the rotation pivot.
pub fn center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Maps a point through a rotation by `degrees` about `(cx, cy)`.
///
/// Positive angles are counter-clockwise on screen (y grows downward); a
/// vertical line rotated by `θ` ends up with slope `dx/dy = tan θ`.
pub fn rotate_point(x: f64, y: f64, degrees: f64, cx: f64, cy: f64) -> (f64, f64) {
    let (s, c) = degrees.to_radians().sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * c + dy * s, cy - dx * s + dy * c)
}

/// Rotates the image about its centre with bilinear interpolation. Samples
/// falling outside the source are treated as 0 (air).
pub fn rotate(img: &GrayImage, degrees: f64) -> Result<GrayImage> {
    if !degrees.is_finite() || degrees.abs() > MAX_ROTATION_DEGREES {
        return Err(Error::param(format!(
            "rotation angle {degrees} must be finite with magnitude <= {MAX_ROTATION_DEGREES}"
        )));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width, img.height);
    let (cx, cy) = center(w, h);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // inverse mapping: destination -> source
            let (sx, sy) = rotate_point(x as f64, y as f64, -degrees, cx, cy);
            out.push(bilinear_zero(img, sx, sy));
        }
    }
    Ok(GrayImage::from_raw_clamped(w, h, out))
}

/// Bilinear sample with zero outside the raster.
pub fn bilinear_zero(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (w, h) = (img.width as i64, img.height as i64);
    let (ix, iy) = (x0 as i64, y0 as i64);
    if ix < -1 || iy < -1 || ix >= w || iy >= h {
        return 0.0;
    }
    let at = |px: i64, py: i64| -> f64 {
        if px < 0 || py < 0 || px >= w || py >= h {
            0.0
        } else {
            img.pixels[py as usize * img.width + px as usize]
        }
    };
    let top = at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx;
    let bottom = at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Loads an 8-bit binary PGM (P5) or 8-bit PNG. Colour PNGs are converted
/// with `Y = 0.299 R + 0.587 G + 0.114 B`; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{} is neither a binary PGM (P5) nor a PNG",
            path.display()
        )))
    }
}

/// Writes the image as PGM (P5) when the extension is `.pgm`, PNG otherwise.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if is_pgm {
        out.write_all(&encode_pgm(img))
            .map_err(|e| Error::io(path, e))?;
    } else {
        write_png(
            &mut out,
            img.width,
            img.height,
            png::ColorType::Grayscale,
            &img.to_bytes(),
        )
        .map_err(|e| match e {
            Error::Malformed(m) => Error::io(path, std::io::Error::other(m)),
            other => other,
        })?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Binary PGM encoding, maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut buf = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    buf.extend(img.to_bytes());
    buf
}

/// Decodes a binary PGM with maxval 255 (comments allowed in the header).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2usize;
    if !bytes.starts_with(b"P5") {
        return Err(Error::UnsupportedFormat("missing P5 magic".into()));
    }
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Malformed("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed("bad number in PGM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Dimensions { width, height });
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Malformed(
            "missing whitespace after PGM header".into(),
        ));
    }
    pos += 1;
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::Malformed("PGM raster is shorter than its header claims".into()))?;
    GrayImage::from_bytes(width, height, raster)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Malformed(format!("PNG: {e}")))?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat("16-bit PNG".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Malformed("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Malformed(format!("PNG: {e}")))?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::Dimensions { width, height });
    }
    let channels = info.color_type.samples();
    let data = &buf[..info.buffer_size()];
    let pixels: Vec<f64> = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => data
            .chunks_exact(channels)
            .map(|p| f64::from(p[0]))
            .collect(),
        png::ColorType::Rgb | png::ColorType::Rgba => data
            .chunks_exact(channels)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded indexed PNG".into()));
        }
    };
    GrayImage::new(width, height, pixels)
}

/// ITU-R BT.601 luma.
pub fn luminance(r: u8, g: u8, b: u8) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}

pub(crate) fn write_png<W: Write>(
    out: W,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<()> {
    let mut encoder = png::Encoder::new(out, width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Malformed(format!("PNG encode: {e}")))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::Malformed(format!("PNG encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::Malformed(format!("PNG encode: {e}")))
}

/// 8-bit RGB raster used for overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.to_bytes().into_iter().map(|b| [b, b, b]).collect(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.data[y * self.width + x] = rgb;
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let flat: Vec<u8> = self.data.iter().flatten().copied().collect();
        write_png(
            &mut out,
            self.width,
            self.height,
            png::ColorType::Rgb,
            &flat,
        )?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a file fully; used by loaders elsewhere in the crate.
pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_string(&mut s)
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}
