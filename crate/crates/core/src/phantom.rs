//! Synthetic periapical films with known tooth boundaries.
//!
//! A scene is a row of rounded-rectangle teeth at dentin level over an
//! air-level crown region and a gum-level bone band. Selected teeth carry a
//! canal-level root filling along their axis. The scene is rendered
//! analytically after rotation by the tilt angle, so a noise-free phantom
//! contains only the four configured intensities.
//!
//! Noise is reproducible across platforms and languages: a ChaCha8 stream
//! (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`) produces `u64` words,
//! each turned into a uniform `u = (word >> 11) · 2⁻⁵³`; consecutive pairs
//! `(u1, u2)` give two normal deviates by Box–Muller,
//! `sqrt(-2 ln(1 - u1)) · (cos 2πu2, sin 2πu2)`, consumed in row-major
//! pixel order.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{center, encode_pgm, read_to_string, rotate_point, round_half_up, GrayImage};
use crate::rotation::Segment;

/// Narrowest tooth the generator will lay out, in pixels.
pub const MIN_TOOTH_WIDTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityLevels {
    pub air: f64,
    pub gum: f64,
    pub dentin: f64,
    pub canal: f64,
}

impl Default for IntensityLevels {
    fn default() -> Self {
        Self {
            air: 30.0,
            gum: 120.0,
            dentin: 200.0,
            canal: 250.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub tooth_count: usize,
    /// Width of each inter-tooth gap, pixels.
    pub gap_width: f64,
    pub tilt_degrees: f64,
    /// Zero-based indices of teeth carrying a root filling.
    pub canal_teeth: Vec<usize>,
    /// Width of the filling strip, pixels.
    pub canal_width: f64,
    pub levels: IntensityLevels,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 500,
            height: 700,
            tooth_count: 3,
            gap_width: 20.0,
            tilt_degrees: 0.0,
            canal_teeth: vec![1],
            canal_width: 8.0,
            levels: IntensityLevels::default(),
            noise_sigma: 8.0,
            seed: 1,
        }
    }
}

impl PhantomSpec {
    /// Single-canal test film: 500×700, three teeth, filling in the middle one, σ = 8.
    pub fn canonical(tilt_degrees: f64) -> Self {
        Self {
            tilt_degrees,
            seed: 2013,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasiblePhantom(m));
        if self.width < 16 || self.height < 16 {
            return bad(format!(
                "canvas {}x{} is too small",
                self.width, self.height
            ));
        }
        if !(1..=6).contains(&self.tooth_count) {
            return bad(format!("tooth_count {} outside 1..=6", self.tooth_count));
        }
        if !(self.gap_width >= 1.0 && self.gap_width.is_finite()) {
            return bad(format!(
                "gap width {} must be at least one pixel",
                self.gap_width
            ));
        }
        let tooth_width = self.width as f64 / self.tooth_count as f64 - self.gap_width;
        if tooth_width < MIN_TOOTH_WIDTH {
            return bad(format!(
                "{} teeth with {} px gaps leave {tooth_width:.1} px per tooth (need {MIN_TOOTH_WIDTH})",
                self.tooth_count, self.gap_width
            ));
        }
        if !(self.canal_width > 0.0 && self.canal_width <= tooth_width / 2.0) {
            return bad(format!(
                "canal width {} must be in (0, {}]",
                self.canal_width,
                tooth_width / 2.0
            ));
        }
        if let Some(k) = self.canal_teeth.iter().find(|&&k| k >= self.tooth_count) {
            return bad(format!("canal tooth {k} does not exist"));
        }
        if !(self.tilt_degrees.is_finite() && self.tilt_degrees.abs() <= 45.0) {
            return bad(format!("tilt {} outside [-45, 45]", self.tilt_degrees));
        }
        let l = &self.levels;
        let ordered = 0.0 <= l.air
            && l.air < l.gum
            && l.gum < l.dentin
            && l.dentin < l.canal
            && l.canal <= 255.0;
        if !ordered {
            return bad("levels must satisfy 0 <= air < gum < dentin < canal <= 255".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in scene (untilted) coordinates, half-open in x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneRect {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl SceneRect {
    fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.left && u < self.right && v >= self.top && v <= self.bottom
    }

    pub fn center_x(&self) -> f64 {
        (self.left + self.right) / 2.0
    }
}

/// Scene layout shared by rendering and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub width: usize,
    pub height: usize,
    pub tilt_degrees: f64,
    pub teeth: Vec<SceneRect>,
    /// Inter-tooth gaps, left to right.
    pub gaps: Vec<SceneRect>,
    pub corner_radius: f64,
    pub gum_top: f64,
    /// One strip per filled tooth.
    pub canals: Vec<SceneRect>,
}

impl SceneGeometry {
    pub fn from_spec(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let (w, h) = (spec.width as f64, spec.height as f64);
        let pitch = w / spec.tooth_count as f64;
        let half_gap = spec.gap_width / 2.0;
        let (top, bottom) = (0.06 * h, 0.94 * h);
        let teeth: Vec<SceneRect> = (0..spec.tooth_count)
            .map(|k| SceneRect {
                left: k as f64 * pitch + half_gap,
                right: (k + 1) as f64 * pitch - half_gap,
                top,
                bottom,
            })
            .collect();
        let gaps = teeth
            .windows(2)
            .map(|pair| SceneRect {
                left: pair[0].right,
                right: pair[1].left,
                top,
                bottom,
            })
            .collect();
        let tooth_width = pitch - spec.gap_width;
        let span = bottom - top;
        let mut canal_teeth = spec.canal_teeth.clone();
        canal_teeth.sort_unstable();
        canal_teeth.dedup();
        let canals = canal_teeth
            .iter()
            .map(|&k| {
                let c = teeth[k].center_x();
                SceneRect {
                    left: c - spec.canal_width / 2.0,
                    right: c + spec.canal_width / 2.0,
                    top: top + 0.2 * span,
                    bottom: bottom - 0.05 * span,
                }
            })
            .collect();
        Ok(Self {
            width: spec.width,
            height: spec.height,
            tilt_degrees: spec.tilt_degrees,
            teeth,
            gaps,
            corner_radius: (0.3 * tooth_width).min(0.1 * span),
            gum_top: 0.40 * h,
            canals,
        })
    }

    /// Maps an image pixel to scene coordinates (undoes the tilt).
    pub fn to_scene(&self, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = center(self.width, self.height);
        rotate_point(x, y, -self.tilt_degrees, cx, cy)
    }

    /// Maps a scene point into the tilted image.
    pub fn to_image(&self, u: f64, v: f64) -> (f64, f64) {
        let (cx, cy) = center(self.width, self.height);
        rotate_point(u, v, self.tilt_degrees, cx, cy)
    }

    fn in_tooth(&self, k: usize, u: f64, v: f64) -> bool {
        let t = &self.teeth[k];
        if !t.contains(u, v) {
            return false;
        }
        let r = self.corner_radius;
        // distance to the inner rectangle shrunk by the corner radius
        let dx = (t.left + r - u).max(u - (t.right - r)).max(0.0);
        let dy = (t.top + r - v).max(v - (t.bottom - r)).max(0.0);
        dx * dx + dy * dy <= r * r
    }

    fn tooth_at(&self, u: f64, v: f64) -> Option<usize> {
        (0..self.teeth.len()).find(|&k| self.in_tooth(k, u, v))
    }

    fn intensity(&self, levels: &IntensityLevels, u: f64, v: f64) -> f64 {
        if self.tooth_at(u, v).is_some() {
            if self.canals.iter().any(|c| c.contains(u, v)) {
                levels.canal
            } else {
                levels.dentin
            }
        } else if v >= self.gum_top {
            levels.gum
        } else {
            levels.air
        }
    }

    fn mask(&self, test: impl Fn(f64, f64) -> bool) -> Mask {
        let mut data = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (u, v) = self.to_scene(x as f64, y as f64);
                data.push(test(u, v));
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn gap_mask(&self, k: usize) -> Mask {
        let g = self.gaps[k];
        self.mask(|u, v| g.contains(u, v))
    }

    pub fn tooth_mask(&self, k: usize) -> Mask {
        self.mask(|u, v| self.in_tooth(k, u, v))
    }

    /// Centre lines of the fillings in image coordinates, top to bottom.
    pub fn canal_centerlines(&self) -> Vec<Segment> {
        self.canals
            .iter()
            .map(|c| {
                let (x0, y0) = self.to_image(c.center_x(), c.top);
                let (x1, y1) = self.to_image(c.center_x(), c.bottom);
                Segment { x0, y0, x1, y1 }
            })
            .collect()
    }
}

/// Binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Membership test that is false outside the raster.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// First and last rows holding a set pixel.
    pub fn row_extent(&self) -> Option<(usize, usize)> {
        let rows_with = |y: &usize| {
            self.data[y * self.width..(y + 1) * self.width]
                .iter()
                .any(|&b| b)
        };
        let first = (0..self.height).find(rows_with)?;
        let last = (0..self.height).rev().find(rows_with)?;
        Some((first, last))
    }

    /// Column range `[min, max]` over all set pixels.
    pub fn col_extent(&self) -> Option<(usize, usize)> {
        let cols: Vec<usize> = (0..self.data.len())
            .filter(|&i| self.data[i])
            .map(|i| i % self.width)
            .collect();
        Some((*cols.iter().min()?, *cols.iter().max()?))
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw_clamped(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|&b| if b { 255.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Ground truth of a generated film.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub geometry: SceneGeometry,
    /// Gap centres in scene columns (before tilt), left to right.
    pub gap_centers: Vec<f64>,
    pub tilt_degrees: f64,
    pub canal_centerlines: Vec<Segment>,
    #[serde(skip)]
    pub gap_masks: Vec<Mask>,
    #[serde(skip)]
    pub tooth_masks: Vec<Mask>,
}

impl PhantomTruth {
    pub fn from_geometry(geometry: SceneGeometry) -> Self {
        let gap_masks = (0..geometry.gaps.len())
            .map(|k| geometry.gap_mask(k))
            .collect();
        let tooth_masks = (0..geometry.teeth.len())
            .map(|k| geometry.tooth_mask(k))
            .collect();
        Self {
            gap_centers: geometry.gaps.iter().map(SceneRect::center_x).collect(),
            tilt_degrees: geometry.tilt_degrees,
            canal_centerlines: geometry.canal_centerlines(),
            gap_masks,
            tooth_masks,
            geometry,
        }
    }

    pub fn tooth_count(&self) -> usize {
        self.geometry.teeth.len()
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Reads a truth file and rebuilds the masks from its geometry.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let parsed: PhantomTruth = serde_json::from_str(&read_to_string(path.as_ref())?)?;
        Ok(Self::from_geometry(parsed.geometry))
    }
}

/// Portable normal deviates; see the module docs for the exact recipe.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Renders the film described by `spec` together with its ground truth.
pub fn generate(spec: &PhantomSpec) -> Result<(GrayImage, PhantomTruth)> {
    let geometry = SceneGeometry::from_spec(spec)?;
    let mut noise = (spec.noise_sigma > 0.0).then(|| GaussianStream::new(spec.seed));
    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (u, v) = geometry.to_scene(x as f64, y as f64);
            let mut value = geometry.intensity(&spec.levels, u, v);
            if let Some(n) = noise.as_mut() {
                value = (value + spec.noise_sigma * n.next_normal()).clamp(0.0, 255.0);
            }
            pixels.push(value);
        }
    }
    let img = GrayImage::new(spec.width, spec.height, pixels)?;
    Ok((img, PhantomTruth::from_geometry(geometry)))
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub image_path: PathBuf,
    pub truth_path: PathBuf,
    pub spec: PhantomSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path.as_ref())?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Resolves an entry path against the manifest location.
    pub fn resolve(manifest_path: &Path, entry_path: &Path) -> PathBuf {
        if entry_path.is_absolute() {
            entry_path.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or(Path::new("."))
                .join(entry_path)
        }
    }
}

/// Seed of the stream that draws the default batch parameters.
pub const DEFAULT_BATCH_SEED: u64 = 51;
pub const DEFAULT_BATCH_SIZE: usize = 51;

/// Films per tooth count (2, 3, 4, 5) in the default batch; the same mix as
/// the reference 51-film matrix.
pub const DEFAULT_BATCH_TOOTH_MIX: [(usize, usize); 4] = [(2, 5), (3, 16), (4, 22), (5, 8)];

/// Smallest horizontal distance, over the middle band rows, between tooth
/// `k` and the image border. Negative when the tooth leaves the frame.
pub fn tooth_clearance(geometry: &SceneGeometry, k: usize) -> f64 {
    let t = &geometry.teeth[k];
    let w = geometry.width as f64;
    let edge = |u: f64| {
        let (x0, y0) = geometry.to_image(u, t.top);
        let (x1, y1) = geometry.to_image(u, t.bottom);
        Segment { x0, y0, x1, y1 }
    };
    let (left, right) = (edge(t.left), edge(t.right));
    let h = geometry.height as f64;
    [h / 3.0, 2.0 * h / 3.0]
        .iter()
        .map(|&y| left.x_at(y).min(w - 1.0 - right.x_at(y)))
        .fold(f64::INFINITY, f64::min)
}

/// 51 films: tooth counts per [`DEFAULT_BATCH_TOOTH_MIX`], widths 450–650,
/// heights 600–850, tilts in [−15°, 15°], σ = 8 noise. Like a real
/// periapical film centred on its subject, filled teeth are drawn from the
/// teeth that stay inside the frame (clearance ≥ half a gap) across the
/// middle band; if none does, the best-placed tooth is filled. Every third
/// film gets a second filled tooth when another one qualifies.
pub fn default_batch_specs() -> Vec<PhantomSpec> {
    let mut draw = GaussianStream::new(DEFAULT_BATCH_SEED);
    let int_in = |lo: usize, hi: usize, d: &mut GaussianStream| {
        lo + ((hi - lo + 1) as f64 * d.uniform()) as usize
    };
    let counts: Vec<usize> = DEFAULT_BATCH_TOOTH_MIX
        .iter()
        .flat_map(|&(teeth, films)| std::iter::repeat_n(teeth, films))
        .collect();
    debug_assert_eq!(counts.len(), DEFAULT_BATCH_SIZE);
    counts
        .into_iter()
        .enumerate()
        .map(|(i, tooth_count)| {
            let width = int_in(450, 650, &mut draw);
            let height = int_in(600, 850, &mut draw);
            let tilt = round_half_up((-15.0 + 30.0 * draw.uniform()) * 100.0) / 100.0;
            let gap_width = round_half_up(width as f64 * (0.035 + 0.015 * draw.uniform()));
            let mut spec = PhantomSpec {
                width,
                height,
                tooth_count,
                gap_width,
                tilt_degrees: tilt,
                canal_teeth: Vec::new(),
                seed: 1000 + i as u64,
                ..PhantomSpec::default()
            };
            let geometry = SceneGeometry::from_spec(&spec).expect("batch specs are feasible");
            let clearance: Vec<f64> = (0..tooth_count)
                .map(|k| tooth_clearance(&geometry, k))
                .collect();
            let mut eligible: Vec<usize> = (0..tooth_count)
                .filter(|&k| clearance[k] >= gap_width / 2.0)
                .collect();
            if eligible.is_empty() {
                let best = (0..tooth_count)
                    .max_by(|&a, &b| clearance[a].total_cmp(&clearance[b]))
                    .unwrap_or(0);
                eligible.push(best);
            }
            let first = eligible.remove(int_in(0, eligible.len() - 1, &mut draw));
            spec.canal_teeth.push(first);
            if i % 3 == 0 && !eligible.is_empty() {
                spec.canal_teeth
                    .push(eligible[int_in(0, eligible.len() - 1, &mut draw)]);
                spec.canal_teeth.sort_unstable();
            }
            spec
        })
        .collect()
}

/// Writes images (PGM), truth JSON, per-gap masks (PGM) and `manifest.json`
/// into `dir`. Returns the manifest path.
pub fn batch(specs: &[PhantomSpec], dir: impl AsRef<Path>) -> Result<PathBuf> {
    use rayon::prelude::*;

    if specs.is_empty() {
        return Err(Error::param("phantom batch needs at least one spec"));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| -> Result<ManifestEntry> {
            let (img, truth) = generate(spec)?;
            let stem = format!("phantom_{i:03}");
            let image_path = PathBuf::from(format!("{stem}.pgm"));
            let truth_path = PathBuf::from(format!("{stem}.truth.json"));
            write_bytes(&dir.join(&image_path), &encode_pgm(&img))?;
            truth.save(dir.join(&truth_path))?;
            for (k, mask) in truth.gap_masks.iter().enumerate() {
                write_bytes(
                    &dir.join(format!("{stem}.gap{k}.pgm")),
                    &encode_pgm(&mask.to_image()),
                )?;
            }
            Ok(ManifestEntry {
                image_path,
                truth_path,
                spec: spec.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest_path = dir.join("manifest.json");
    Manifest { entries }.save(&manifest_path)?;
    Ok(manifest_path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
