//! `dtb-engine` command-line front end.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 1 for validation errors, 2 for I/O errors. Any
//! failure is reported as one line on the error stream.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dtb_core::atlas::load_atlas;
use dtb_core::connectome::{global_normalize, load_dti, top_fraction};
use dtb_core::fdeb::{bundle, export_bundles, inputs_from_edges};
use dtb_core::signal::{compare_sets, load_bold, minmax_normalize, peak_time, top_regions, CompareScope};
use dtb_core::slicer::raster;
use dtb_core::synth::gen_fixture;
use dtb_core::{Axis, BundleParams, Dataset, Error, GenSpec, SignalSource, SlicePlane};

pub mod serve;

/// Overrides `--threads` when set.
pub const THREADS_ENV: &str = "DTB_ENGINE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dtb-engine", version, about = "Brain-data exploration engine")]
pub struct Cli {
    /// Worker threads for parallel stages (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Validate raw atlas/BOLD/DTI files and write a dataset directory.
    Ingest(IngestArgs),
    /// Select the heaviest DTI edges and bundle them.
    Bundle(BundleArgs),
    /// Export one slab of the normalized biological series as PGM + JSON.
    Slice(SliceArgs),
    /// Region means, peak time and biological/DTB comparison.
    Stats(StatsArgs),
    /// Serve the scene API over HTTP until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Human,
    Macaque,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "human")]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of DTI entries.
    #[arg(long)]
    pub dti_entries: Option<usize>,
    /// Omit the planted burst of the human preset.
    #[arg(long)]
    pub no_burst: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long)]
    pub bold: PathBuf,
    /// DTB series; the biological series is reused when omitted.
    #[arg(long)]
    pub bold_dtb: Option<PathBuf>,
    #[arg(long)]
    pub dti: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// DTI file (CSV or binary).
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long, default_value_t = 6)]
    pub cycles: usize,
    #[arg(long, default_value_t = 0.1)]
    pub kp: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Step size in mm (default: 4% of the mean edge length).
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub compat_threshold: f64,
    /// Report the selection and exit without bundling.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub axis: Axis,
    #[arg(long, allow_negative_numbers = true)]
    pub coord: f64,
    #[arg(long)]
    pub t: usize,
    /// Output prefix. An existing directory (or a path ending in a
    /// separator) receives `slice_<axis>_<coord>_t<t>.{pgm,json}`.
    #[arg(long)]
    pub out: PathBuf,
    /// Slab thickness in mm (default: atlas spacing).
    #[arg(long)]
    pub thickness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Report the K highest functional-region means.
    #[arg(long)]
    pub top_regions: Option<usize>,
    /// Time index for `--top-regions` (default: the peak time).
    #[arg(long)]
    pub t: Option<usize>,
    /// Compare the biological and DTB series.
    #[arg(long)]
    pub compare: bool,
    /// Comparison scope: `all`, `regions:1,2,…` or `voxels:0,5,…`.
    #[arg(long, default_value = "all")]
    pub scope: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Dataset directory; repeat to serve several.
    #[arg(long, required = true)]
    pub store: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let line = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(err, "{}", line.trim());
            return EXIT_VALIDATION;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = e.message().replace('\n', " ");
            let _ = writeln!(err, "error: {msg}");
            e.exit_code()
        }
    }
}

/// Thread count from the environment override, the flag, or the machine.
pub fn resolve_threads(flag: Option<usize>) -> CliResult<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| invalid(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        if n == 0 {
            return Err(invalid(format!("{THREADS_ENV} must be at least 1")));
        }
        return Ok(n);
    }
    match flag {
        Some(0) => Err(invalid("--threads must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> CliResult {
    let threads = resolve_threads(cli.threads)?;
    if let Command::Serve(args) = cli.command {
        return serve::run_blocking(&args, threads, out);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(&a, out),
        Command::Ingest(a) => ingest(&a, out),
        Command::Bundle(a) => run_bundle(&a, out),
        Command::Slice(a) => slice(&a, out),
        Command::Stats(a) => stats(&a, out),
        Command::Serve(_) => unreachable!(),
    })
}

fn say(out: &mut (dyn Write + Send), line: std::fmt::Arguments<'_>) -> CliResult {
    writeln!(out, "{line}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn synth(a: &SynthArgs, out: &mut (dyn Write + Send)) -> CliResult {
    let mut spec = match a.preset {
        Preset::Human => GenSpec { seed: a.seed, ..GenSpec::f1() },
        Preset::Macaque => GenSpec::macaque(a.seed),
    };
    if a.no_burst {
        spec.burst = None;
    }
    if let Some(n) = a.dti_entries {
        spec.dti_edge_count = n;
    }
    spec.validate()?;
    let fixture = gen_fixture(&spec)?;
    fixture.write(&a.out)?;
    let m = &fixture.manifest;
    say(
        out,
        format_args!(
            "wrote {}: {} regions, {} voxels, {} timepoints, {} DTI entries",
            a.out.display(),
            m.n_regions,
            m.n_voxels,
            m.n_timepoints,
            m.dti_edge_count
        ),
    )
}

fn ingest(a: &IngestArgs, out: &mut (dyn Write + Send)) -> CliResult {
    let atlas = load_atlas(&a.atlas)?;
    let biological = load_bold(&a.bold, &atlas, SignalSource::Biological)?;
    let dtb = match &a.bold_dtb {
        Some(p) => load_bold(p, &atlas, SignalSource::Dtb)?,
        None => biological.clone().with_source(SignalSource::Dtb),
    };
    if dtb.n_timepoints() != biological.n_timepoints() {
        return Err(invalid(format!(
            "biological and dtb series differ in length: {} vs {}",
            biological.n_timepoints(),
            dtb.n_timepoints()
        )));
    }
    let dti = load_dti(&a.dti, &atlas)?;
    let name = a.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    let ds = Dataset { name, atlas, biological, dtb, dti, manifest: None, bundles: None };
    ds.save(&a.out)?;
    say(
        out,
        format_args!(
            "wrote {}: {} regions, {} voxels, {} timepoints, {} DTI entries",
            a.out.display(),
            ds.atlas.regions().len(),
            ds.atlas.voxel_count(),
            ds.biological.n_timepoints(),
            ds.dti.len()
        ),
    )
}

fn run_bundle(a: &BundleArgs, out: &mut (dyn Write + Send)) -> CliResult {
    let params = BundleParams {
        k_p: a.kp,
        n_cycles: a.cycles,
        iterations_per_cycle: a.iterations,
        step_size: a.step,
        compat_threshold: a.compat_threshold,
        ..BundleParams::default()
    };
    params.validate()?;
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        return Err(invalid(format!("--fraction must lie in (0, 1], got {}", a.fraction)));
    }
    let atlas = load_atlas(&a.atlas)?;
    let dti = load_dti(&a.edges, &atlas)?;
    let selected = top_fraction(&global_normalize(&dti)?, a.fraction)?;
    say(out, format_args!("selected {} edges", selected.len()))?;
    if a.dry_run {
        return Ok(());
    }
    let inputs = inputs_from_edges(&selected, &atlas)?;
    let start = std::time::Instant::now();
    let bundled = bundle(&inputs, &params)?;
    export_bundles(&bundled, &params, &a.out)?;
    say(
        out,
        format_args!(
            "bundled {} edges ({} intervals each) in {:.2} s -> {}",
            bundled.len(),
            params.output_intervals(),
            start.elapsed().as_secs_f64(),
            a.out.display()
        ),
    )
}

fn slice_prefix(out: &Path, stem: &str) -> PathBuf {
    let s = out.as_os_str().to_string_lossy();
    if out.is_dir() || s.ends_with('/') || s.ends_with(std::path::MAIN_SEPARATOR) {
        out.join(stem)
    } else {
        out.to_path_buf()
    }
}

fn slice(a: &SliceArgs, out: &mut (dyn Write + Send)) -> CliResult {
    if !a.coord.is_finite() {
        return Err(invalid("--coord must be finite"));
    }
    let ds = Dataset::load(&a.store)?;
    let plane = match a.thickness {
        Some(th) => SlicePlane::new(a.axis, a.coord, th)?,
        None => SlicePlane::for_atlas(&ds.atlas, a.axis, a.coord)?,
    };
    let normalized = minmax_normalize(&ds.biological);
    let r = raster(&ds.atlas, &normalized, &plane, a.t)?;
    let (pgm, json) = r.export_prefix(&slice_prefix(&a.out, &r.file_stem()))?;
    say(
        out,
        format_args!(
            "{}x{} raster, {} occupied cells -> {}, {}",
            r.width(),
            r.height(),
            r.occupied(),
            pgm.display(),
            json.display()
        ),
    )
}

/// Parses `all`, `regions:1,2` or `voxels:3,4`.
pub fn parse_scope(s: &str) -> Result<CompareScope, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") || s.is_empty() {
        return Ok(CompareScope::All);
    }
    let (kind, ids) = s.split_once(':').ok_or_else(|| format!("bad scope {s:?}; expected all, regions:… or voxels:…"))?;
    let ids: Vec<u32> = ids
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| format!("bad id {t:?} in scope")))
        .collect::<Result<_, _>>()?;
    if ids.is_empty() {
        return Err(format!("scope {s:?} lists no ids"));
    }
    match kind.trim() {
        "regions" | "region" => Ok(CompareScope::Regions(ids)),
        "voxels" | "voxel" => Ok(CompareScope::Voxels(ids)),
        other => Err(format!("unknown scope kind {other:?}")),
    }
}

#[derive(Debug, Serialize)]
struct RegionMean {
    label: u32,
    name: String,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct StatsReport {
    dataset: String,
    n_regions: usize,
    n_functional_regions: usize,
    n_voxels: usize,
    n_timepoints: usize,
    dti_entries: usize,
    peak_time: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_regions_t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_regions: Option<Vec<RegionMean>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compare: Option<dtb_core::ComparisonReport>,
}

fn stats(a: &StatsArgs, out: &mut (dyn Write + Send)) -> CliResult {
    let scope = parse_scope(&a.scope).map_err(CliError::Validation)?;
    if a.top_regions == Some(0) {
        return Err(invalid("--top-regions must be at least 1"));
    }
    let ds = Dataset::load(&a.store)?;
    let functional = ds.atlas.functional_regions();
    let peak = peak_time(&ds.biological, &functional)?;
    let mut report = StatsReport {
        dataset: ds.name.clone(),
        n_regions: ds.atlas.regions().len(),
        n_functional_regions: functional.len(),
        n_voxels: ds.atlas.voxel_count(),
        n_timepoints: ds.biological.n_timepoints(),
        dti_entries: ds.dti.len(),
        peak_time: peak,
        top_regions_t: None,
        top_regions: None,
        compare: None,
    };
    if let Some(k) = a.top_regions {
        let t = a.t.unwrap_or(peak);
        let top = top_regions(&ds.biological, functional.iter().copied(), t, k)?;
        report.top_regions_t = Some(t);
        report.top_regions = Some(
            top.into_iter()
                .map(|(label, mean)| RegionMean {
                    label,
                    name: ds.atlas.region(label).map(|r| r.name.clone()).unwrap_or_default(),
                    mean,
                })
                .collect(),
        );
    }
    if a.compare {
        report.compare = Some(compare_sets(&ds.biological, &ds.dtb, &ds.atlas, &scope)?);
    }
    match a.format {
        Format::Json => {
            let s = serde_json::to_string_pretty(&report).map_err(|e| invalid(e.to_string()))?;
            say(out, format_args!("{s}"))
        }
        Format::Text => {
            say(
                out,
                format_args!(
                    "dataset {}: {} regions ({} functional), {} voxels, {} timepoints, {} DTI entries",
                    report.dataset,
                    report.n_regions,
                    report.n_functional_regions,
                    report.n_voxels,
                    report.n_timepoints,
                    report.dti_entries
                ),
            )?;
            say(out, format_args!("peak time = {}", report.peak_time))?;
            if let (Some(t), Some(top)) = (report.top_regions_t, &report.top_regions) {
                say(out, format_args!("top {} regions at t = {t}:", top.len()))?;
                for r in top {
                    say(out, format_args!("  {:>3} {:<24} {:.6}", r.label, r.name, r.mean))?;
                }
            }
            if let Some(c) = report.compare {
                say(out, format_args!("pearson r = {:.6}", c.pearson_r))?;
                say(out, format_args!("lag = {}", c.lag))?;
                if c.degenerate {
                    say(out, format_args!("warning: constant scope mean, correlation undefined"))?;
                }
            }
            Ok(())
        }
    }
}

pub(crate) fn load_stores(paths: &[PathBuf]) -> CliResult<Vec<Dataset>> {
    paths.iter().map(|p| Dataset::load(p).map_err(CliError::from)).collect()
}

pub(crate) fn bind_error(addr: &str, e: std::io::Error) -> CliError {
    io_err(Path::new(addr), e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_parsing() {
        assert_eq!(parse_scope("all").unwrap(), CompareScope::All);
        assert_eq!(parse_scope("regions:1, 2").unwrap(), CompareScope::Regions(vec![1, 2]));
        assert_eq!(parse_scope("voxels:7").unwrap(), CompareScope::Voxels(vec![7]));
        assert!(parse_scope("regions:").is_err());
        assert!(parse_scope("lobes:1").is_err());
        assert!(parse_scope("regions:x").is_err());
    }

    #[test]
    fn prefix_vs_directory() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(slice_prefix(tmp.path(), "s"), tmp.path().join("s"));
        let p = tmp.path().join("out");
        assert_eq!(slice_prefix(&p, "s"), p);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
