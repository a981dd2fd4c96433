//! `dentseg` command-line front-end.
//!
//! Exit codes: 0 success, 1 usage error (including refused overwrites),
//! 2 processing error. Settings resolve as flags > `--config` file > defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dentseg::bench::run_bench;
use dentseg::evaluation::{report, EvalMatrix};
use dentseg::image::{load_image, save_image, GrayImage};
use dentseg::phantom::{batch, default_batch_specs, PhantomSpec};
use dentseg::preprocess::{preprocess_pipeline, preprocess_with};
use dentseg::projection::{find_valleys, smooth_profile, vertical_projection};
use dentseg::rotation::{estimate_rotation, Mode};
use dentseg::segmentation::{render_overlay, segment_timed, SegmentationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PROCESSING: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dentseg",
    version,
    about = "Tooth separation in periapical radiographs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the enhancement and smoothing cascade.
    Preprocess {
        input: PathBuf,
        output: PathBuf,
        /// Also write every stage's output next to OUTPUT.
        #[arg(long)]
        dump_stages: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Print the smoothed vertical projection and its valleys.
    Project {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        valleys: ValleyFlags,
        /// Project the input as is instead of preprocessing it first.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        json: bool,
    },
    /// Estimate the tilt from root-canal traces.
    Rotation {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trace: TraceFlags,
        /// Trace the input as is instead of preprocessing it first.
        #[arg(long)]
        raw: bool,
    },
    /// Separate the teeth of one film.
    Segment {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pipeline: PipelineFlags,
        /// Write a PNG with the separators drawn in blue.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-stage wall-clock times (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Compute optimality, sub-optimality and failure from a count matrix CSV.
    Evaluate {
        matrix: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate synthetic films with ground truth.
    Synth {
        /// JSON file holding one phantom spec or an array of them.
        #[arg(
            long,
            conflicts_with = "default_batch",
            required_unless_present = "default_batch"
        )]
        spec: Option<PathBuf>,
        /// The 51-film evaluation batch.
        #[arg(long)]
        default_batch: bool,
        /// Directory for films, truth files and manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Replace an existing manifest.
        #[arg(long)]
        force: bool,
    },
    /// Segment every film of a manifest and score it against ground truth.
    Bench {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pipeline: PipelineFlags,
        /// Print per-film scores, the matrix and the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Allow overwriting existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ValleyFlags {
    /// Minimum distance between valleys in pixels (default: width / 6).
    #[arg(long)]
    min_separation: Option<usize>,
    /// Valleys closer than this to either border are ignored (default: width / 20).
    #[arg(long)]
    edge_margin: Option<usize>,
    /// Odd moving-average window for the profile (default: width / 50).
    #[arg(long)]
    smoothing_window: Option<usize>,
}

#[derive(Debug, Args)]
struct TraceFlags {
    /// Minimum peak prominence as a fraction of the row range.
    #[arg(long)]
    prominence_fraction: Option<f64>,
    /// Largest column jump when linking maxima; `inf` disables the gate.
    #[arg(long)]
    gating_distance: Option<f64>,
    /// Shortest usable trace as a fraction of the band height.
    #[arg(long)]
    min_trace_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct PipelineFlags {
    /// line-rotate or image-rotate.
    #[arg(long)]
    mode: Option<Mode>,
    /// Residual tilt in degrees at which de-rotation stops.
    #[arg(long)]
    tol: Option<f64>,
    /// Upper bound on de-rotation passes.
    #[arg(long)]
    max_iter: Option<usize>,
    #[command(flatten)]
    valleys: ValleyFlags,
    #[command(flatten)]
    trace: TraceFlags,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn processing(stage: &str, err: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_PROCESSING,
            message: format!("{stage}: {err}"),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs the CLI with std streams. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing to the given streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Preprocess {
            input,
            output,
            dump_stages,
            common,
        } => cmd_preprocess(&input, &output, dump_stages, &common),
        Command::Project {
            input,
            common,
            valleys,
            raw,
            json,
        } => cmd_project(&input, &common, &valleys, raw, json, out),
        Command::Rotation {
            input,
            common,
            trace,
            raw,
        } => cmd_rotation(&input, &common, &trace, raw, out),
        Command::Segment {
            input,
            common,
            pipeline,
            overlay,
            out: out_path,
            timing,
        } => cmd_segment(
            &input,
            &common,
            &pipeline,
            overlay.as_deref(),
            out_path.as_deref(),
            timing,
            out,
        ),
        Command::Evaluate { matrix, json } => cmd_evaluate(&matrix, json, out),
        Command::Synth {
            spec,
            default_batch: _,
            out_dir,
            force,
        } => cmd_synth(spec.as_deref(), &out_dir, force, out),
        Command::Bench {
            manifest,
            common,
            pipeline,
            json,
        } => cmd_bench(&manifest, &common, &pipeline, json, out),
    }
}

fn load_config(common: &Common) -> Result<SegmentationConfig, Failure> {
    match &common.config {
        Some(path) => {
            SegmentationConfig::load(path).map_err(|e| Failure::usage(format!("config: {e}")))
        }
        None => Ok(SegmentationConfig::default()),
    }
}

fn apply_valley_flags(cfg: &mut SegmentationConfig, f: &ValleyFlags) {
    if f.min_separation.is_some() {
        cfg.valleys.min_separation = f.min_separation;
    }
    if f.edge_margin.is_some() {
        cfg.valleys.edge_margin = f.edge_margin;
    }
    if f.smoothing_window.is_some() {
        cfg.valleys.smoothing_window = f.smoothing_window;
    }
}

fn apply_trace_flags(cfg: &mut SegmentationConfig, f: &TraceFlags) {
    if let Some(v) = f.prominence_fraction {
        cfg.trace.prominence_fraction = v;
    }
    if let Some(v) = f.gating_distance {
        cfg.trace.gating_distance = v;
    }
    if let Some(v) = f.min_trace_fraction {
        cfg.trace.min_trace_fraction = v;
    }
}

fn apply_pipeline_flags(cfg: &mut SegmentationConfig, f: &PipelineFlags) {
    if let Some(m) = f.mode {
        cfg.mode = m;
    }
    if let Some(t) = f.tol {
        cfg.tol = t;
    }
    if let Some(n) = f.max_iter {
        cfg.max_iter = n;
    }
    apply_valley_flags(cfg, &f.valleys);
    apply_trace_flags(cfg, &f.trace);
}

fn validated(cfg: SegmentationConfig) -> Result<SegmentationConfig, Failure> {
    cfg.validate()
        .map_err(|e| Failure::usage(format!("config: {e}")))?;
    Ok(cfg)
}

fn ensure_writable(path: &Path, force: bool) -> Outcome {
    if path.exists() && !force {
        return Err(Failure::usage(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<GrayImage, Failure> {
    load_image(path).map_err(|e| Failure::processing("load", e))
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::processing("output", e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::processing("output", e))
}

/// `out.pgm` + `mean` → `out.mean.pgm`.
fn stage_path(output: &Path, stage: &str) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match output.extension() {
        Some(ext) => format!("{stem}.{stage}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{stage}"),
    };
    output.with_file_name(name)
}

fn cmd_preprocess(input: &Path, output: &Path, dump_stages: bool, common: &Common) -> Outcome {
    let cfg = validated(load_config(common)?)?;
    ensure_writable(output, common.force)?;
    let img = read_input(input)?;
    let mut stages = Vec::new();
    let result = preprocess_with(&img, &cfg.preprocess, |stage, im| {
        if dump_stages {
            stages.push((stage, im.clone()));
        }
    })
    .map_err(|e| Failure::processing("preprocess", e))?;
    for (stage, im) in &stages {
        let path = stage_path(output, stage.name());
        ensure_writable(&path, common.force)?;
        save_image(im, &path).map_err(|e| Failure::processing("preprocess", e))?;
    }
    save_image(&result, output).map_err(|e| Failure::processing("preprocess", e))
}

fn working_image(
    img: GrayImage,
    cfg: &SegmentationConfig,
    raw: bool,
) -> Result<GrayImage, Failure> {
    if raw {
        Ok(img)
    } else {
        preprocess_pipeline(&img, &cfg.preprocess).map_err(|e| Failure::processing("preprocess", e))
    }
}

#[derive(Serialize)]
struct ProjectOutput {
    profile: Vec<f64>,
    valleys: Vec<usize>,
}

fn cmd_project(
    input: &Path,
    common: &Common,
    flags: &ValleyFlags,
    raw: bool,
    json: bool,
    out: &mut dyn Write,
) -> Outcome {
    let mut cfg = load_config(common)?;
    apply_valley_flags(&mut cfg, flags);
    let cfg = validated(cfg)?;
    let img = working_image(read_input(input)?, &cfg, raw)?;
    let (_, _, window) = cfg.valleys.resolve(img.width());
    let profile = smooth_profile(&vertical_projection(&img), window)
        .map_err(|e| Failure::processing("projection", e))?;
    let valleys =
        find_valleys(&img, &cfg.valleys).map_err(|e| Failure::processing("projection", e))?;
    if json {
        return emit(
            out,
            &to_json(&ProjectOutput {
                profile: profile.values,
                valleys: valleys.positions,
            })?,
        );
    }
    let cols: Vec<String> = valleys.positions.iter().map(|c| c.to_string()).collect();
    emit(
        out,
        &format!("{}# valleys: {}\n", profile.to_text(), cols.join(" ")),
    )
}

fn cmd_rotation(
    input: &Path,
    common: &Common,
    flags: &TraceFlags,
    raw: bool,
    out: &mut dyn Write,
) -> Outcome {
    let mut cfg = load_config(common)?;
    apply_trace_flags(&mut cfg, flags);
    let cfg = validated(cfg)?;
    let img = working_image(read_input(input)?, &cfg, raw)?;
    let est =
        estimate_rotation(&img, &cfg.trace).map_err(|e| Failure::processing("rotation", e))?;
    emit(out, &to_json(&est)?)
}

fn cmd_segment(
    input: &Path,
    common: &Common,
    flags: &PipelineFlags,
    overlay: Option<&Path>,
    out_path: Option<&Path>,
    timing: bool,
    out: &mut dyn Write,
) -> Outcome {
    let mut cfg = load_config(common)?;
    apply_pipeline_flags(&mut cfg, flags);
    let cfg = validated(cfg)?;
    for p in overlay.iter().chain(out_path.iter()) {
        ensure_writable(p, common.force)?;
    }
    let img = read_input(input)?;
    let res = segment_timed(&img, &cfg, timing).map_err(|e| Failure::processing("segment", e))?;
    if let Some(p) = overlay {
        render_overlay(&img, &res.separators)
            .save_png(p)
            .map_err(|e| Failure::processing("overlay", e))?;
    }
    let text = to_json(&res)?;
    match out_path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::processing("output", format!("{}: {e}", p.display()))),
        None => emit(out, &text),
    }
}

fn cmd_evaluate(matrix: &Path, json: bool, out: &mut dyn Write) -> Outcome {
    let text = std::fs::read_to_string(matrix)
        .map_err(|e| Failure::processing("evaluate", format!("{}: {e}", matrix.display())))?;
    let m = EvalMatrix::from_csv(&text).map_err(|e| Failure::processing("evaluate", e))?;
    let r = report(&m, None).map_err(|e| Failure::processing("evaluate", e))?;
    if json {
        emit(out, &to_json(&r)?)
    } else {
        emit(out, &r.to_table())
    }
}

fn cmd_synth(spec: Option<&Path>, out_dir: &Path, force: bool, out: &mut dyn Write) -> Outcome {
    let specs = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("spec: {}: {e}", path.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Failure::usage(format!("spec: {e}")))?;
            let parsed = if value.is_array() {
                serde_json::from_value::<Vec<PhantomSpec>>(value)
            } else {
                serde_json::from_value::<PhantomSpec>(value).map(|s| vec![s])
            };
            parsed.map_err(|e| Failure::usage(format!("spec: {e}")))?
        }
        None => default_batch_specs(),
    };
    ensure_writable(&out_dir.join("manifest.json"), force)?;
    let manifest = batch(&specs, out_dir).map_err(|e| Failure::processing("synth", e))?;
    emit(out, &format!("{}\n", manifest.display()))
}

fn cmd_bench(
    manifest: &Path,
    common: &Common,
    flags: &PipelineFlags,
    json: bool,
    out: &mut dyn Write,
) -> Outcome {
    let mut cfg = load_config(common)?;
    apply_pipeline_flags(&mut cfg, flags);
    let cfg = validated(cfg)?;
    let outcome = run_bench(manifest, &cfg).map_err(|e| Failure::processing("bench", e))?;
    if json {
        emit(out, &to_json(&outcome)?)
    } else {
        emit(out, &outcome.report.to_table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_paths_keep_the_extension() {
        assert_eq!(
            stage_path(Path::new("/a/out.pgm"), "mean"),
            PathBuf::from("/a/out.mean.pgm")
        );
        assert_eq!(
            stage_path(Path::new("out"), "wiener"),
            PathBuf::from("out.wiener")
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
