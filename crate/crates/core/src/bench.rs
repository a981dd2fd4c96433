//! Batch evaluation of the segmenter against phantom ground truth.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{accumulate, report, EvalMatrix, EvalReport};
use crate::image::load_image;
use crate::phantom::{Manifest, PhantomTruth};
use crate::segmentation::{count_correct, segment, SegmentationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmScore {
    pub image: String,
    pub correct: usize,
    pub total: usize,
    pub estimated_degrees: f64,
    pub true_degrees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub films: Vec<FilmScore>,
    pub matrix: EvalMatrix,
    pub report: EvalReport,
}

/// Segments every manifest entry (in parallel, results kept in manifest
/// order) and scores it. `N` is the largest tooth count in the batch.
pub fn run_bench(manifest_path: &Path, cfg: &SegmentationConfig) -> Result<BenchOutcome> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::param("manifest lists no films"));
    }
    let films = manifest
        .entries
        .par_iter()
        .map(|e| {
            let img = load_image(Manifest::resolve(manifest_path, &e.image_path))?;
            let truth = PhantomTruth::load(Manifest::resolve(manifest_path, &e.truth_path))?;
            let res = segment(&img, cfg)?;
            let (correct, total) = count_correct(&res, &truth)?;
            Ok(FilmScore {
                image: e.image_path.display().to_string(),
                correct,
                total,
                estimated_degrees: res.rotation.mean_degrees,
                true_degrees: truth.tilt_degrees,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_max = films.iter().map(|f| f.total).max().unwrap_or(1);
    let matrix = accumulate(films.iter().map(|f| (f.correct, f.total)), n_max)?;
    let report = report(&matrix, None)?;
    Ok(BenchOutcome {
        films,
        matrix,
        report,
    })
}
