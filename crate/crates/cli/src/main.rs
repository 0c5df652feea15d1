//! `qcurv`: synthetic manifolds, curvature estimation, diffusion maps and
//! verification of the block-encoding simulator.
//!
//! Exit codes are 0 on success, 1 for data or numerical failures and 2 for
//! usage errors (bad flags, unreadable or empty input, out-of-range parameters).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qcurv_core::config::{DimMode, FitVariant, RunConfig, SampleMode, Scale, Stage};
use qcurv_core::diffmap::{self, DiffmapOptions, DiffusionEmbedding, EmbeddingSpectrum};
use qcurv_core::diffusion::{self, GeodesicSource};
use qcurv_core::geometry::{self, Estimate};
use qcurv_core::pointcloud::{self, GeneratorParams, ManifoldKind, PointCloud};
use qcurv_core::qsim::{self, VerifyReport};
use qcurv_core::{Error, Execution};

const SCHEMA: &str = "1";

/// Intrinsic dimension and scalar curvature of point clouds.
#[derive(Debug, Parser)]
#[command(name = "qcurv", version, about)]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic manifold and write it as CSV plus a JSON sidecar.
    Synth(SynthArgs),
    /// Estimate local dimension and scalar curvature for every point.
    Estimate(EstimateArgs),
    /// Diffusion-map embedding of a point cloud.
    Diffmap(DiffmapArgs),
    /// Run the simulated pipeline and check every stage against its oracle.
    Qverify(QverifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Plane,
    Sphere,
    Torus,
    SwissRoll,
    Line,
}

impl From<KindArg> for ManifoldKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Plane => ManifoldKind::Plane,
            KindArg::Sphere => ManifoldKind::Sphere,
            KindArg::Torus => ManifoldKind::Torus,
            KindArg::SwissRoll => ManifoldKind::SwissRoll,
            KindArg::Line => ManifoldKind::Line,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitArg {
    Ols,
    Paper,
}

impl From<FitArg> for FitVariant {
    fn from(f: FitArg) -> Self {
        match f {
            FitArg::Ols => FitVariant::Ols,
            FitArg::Paper => FitVariant::PaperFormula,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DimModeArg {
    Local,
    Global,
}

impl From<DimModeArg> for DimMode {
    fn from(d: DimModeArg) -> Self {
        match d {
            DimModeArg::Local => DimMode::Local,
            DimModeArg::Global => DimMode::Global,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    KSpectrum,
    PSpectrum,
}

impl From<SourceArg> for GeodesicSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::KSpectrum => GeodesicSource::KSpectrum,
            SourceArg::PSpectrum => GeodesicSource::PSpectrum,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Shot,
}

impl From<ModeArg> for SampleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => SampleMode::Exact,
            ModeArg::Shot => SampleMode::Shot,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpectrumArg {
    Markov,
    MarkovGram,
}

impl From<SpectrumArg> for EmbeddingSpectrum {
    fn from(s: SpectrumArg) -> Self {
        match s {
            SpectrumArg::Markov => EmbeddingSpectrum::Markov,
            SpectrumArg::MarkovGram => EmbeddingSpectrum::MarkovGram,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    /// Sphere radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Intrinsic dimension of the sphere.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    major_radius: f64,
    #[arg(long, default_value_t = 1.0)]
    minor_radius: f64,
    /// Plane or line extent; defaults to unit point spacing.
    #[arg(long)]
    side: Option<f64>,
    /// Swiss-roll width.
    #[arg(long, default_value_t = 21.0)]
    height: f64,
    /// Pad coordinates with zeros up to this ambient dimension.
    #[arg(long)]
    ambient: Option<usize>,
    /// Standard deviation of isotropic Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

/// Hyperparameter flags shared by `estimate` and `qverify`. Each one set here
/// overrides the config file.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel scale sigma^2, a number or "auto".
    #[arg(long)]
    sigma2: Option<Scale>,
    /// Diffusion time.
    #[arg(long)]
    t: Option<f64>,
    /// Neighborhood size.
    #[arg(long)]
    nn: Option<usize>,
    /// Explained-variance threshold for the local dimension.
    #[arg(long)]
    tau: Option<f64>,
    /// Density kernel scale, a number or "auto".
    #[arg(long)]
    h: Option<Scale>,
    #[arg(long, value_enum)]
    fit_variant: Option<FitArg>,
    #[arg(long, value_enum)]
    dim_mode: Option<DimModeArg>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, value_enum)]
    geodesic_source: Option<SourceArg>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags. Returns the raw file
    /// contents too so callers can tell which keys were set there.
    fn resolve(&self, mut base: RunConfig) -> Result<(RunConfig, serde_json::Value), Failure> {
        let mut raw = serde_json::Value::Null;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            raw = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            base = RunConfig::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        }
        if let Some(v) = self.sigma2 {
            base.sigma2 = v;
        }
        if let Some(v) = self.t {
            base.t = v;
        }
        if let Some(v) = self.nn {
            base.nn = v;
        }
        if let Some(v) = self.tau {
            base.tau = v;
        }
        if let Some(v) = self.h {
            base.h = v;
        }
        if let Some(v) = self.fit_variant {
            base.fit_variant = v.into();
        }
        if let Some(v) = self.dim_mode {
            base.dim_mode = Some(v.into());
        }
        if self.r_min.is_some() {
            base.r_min = self.r_min;
        }
        if self.r_max.is_some() {
            base.r_max = self.r_max;
        }
        if let Some(v) = self.geodesic_source {
            base.geodesic_source = v.into();
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        base.validate().map_err(Failure::usage)?;
        Ok((base, raw))
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Point cloud CSV.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Point whose fit data `--emit-fit` writes.
    #[arg(long)]
    point: Option<usize>,
    /// Write (r^2, Vol_nor) pairs of `--point` to this CSV.
    #[arg(long, requires = "point")]
    emit_fit: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiffmapArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of embedding coordinates.
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = Scale::Auto)]
    sigma2: Scale,
    /// Keep the constant top mode.
    #[arg(long)]
    include_trivial: bool,
    #[arg(long, value_enum, default_value_t = SpectrumArg::Markov)]
    spectrum: SpectrumArg,
    /// Compute the embedding with the block-encoding simulator.
    #[arg(long)]
    qsim: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; metadata goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QverifyArgs {
    /// Point cloud CSV; without it a noisy unit sphere is sampled.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Size of the sampled cloud.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Noise of the sampled cloud.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Shot-noise standard deviation in shot mode.
    #[arg(long)]
    shot_eps: Option<f64>,
    /// Chebyshev degree of the kernel polynomial.
    #[arg(long)]
    degree: Option<usize>,
    /// Perturb one stage (kernel_gram, geodesic_diagonal, neighbors,
    /// centered_gram, local_dimension, curvature_sums).
    #[arg(long)]
    inject_fault: Option<Stage>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Neighborhood size for `qverify` when neither flags nor config set one.
const QVERIFY_NN: usize = 5;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl ToString) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }

    fn data(e: impl ToString) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Input(_) | Error::Parse { .. } | Error::Parameter(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load_input(path: &Path) -> Result<PointCloud, Failure> {
    pointcloud::load_csv(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(Failure::data),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let params = GeneratorParams {
        radius: a.radius,
        dim: a.dim,
        major_radius: a.major_radius,
        minor_radius: a.minor_radius,
        side: a.side,
        height: a.height,
        ambient: a.ambient,
    };
    let cloud = pointcloud::generate_manifold(a.kind.into(), a.n, &params, a.noise, a.seed)?;
    let meta_path = sidecar(&a.out);
    pointcloud::save_csv(&cloud, &a.out).map_err(Failure::data)?;
    let meta = cloud.meta().expect("generated clouds carry metadata");
    pointcloud::save_meta(meta, &meta_path).map_err(Failure::data)?;
    println!("{}", a.out.display());
    println!("{}", meta_path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    fit_variant: FitVariant,
    a: f64,
    curvature: f64,
}

#[derive(Serialize)]
struct PointReport {
    index: usize,
    local_dim: usize,
    dim_used: usize,
    radius_count: usize,
    fit_variant: FitVariant,
    a: f64,
    curvature: f64,
    alt: FitSummary,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    schema: &'static str,
    n_points: usize,
    ambient_dim: usize,
    config: &'a RunConfig,
    sigma2: f64,
    h: f64,
    global_dim: usize,
    dim_mode: DimMode,
    median_local_dim: f64,
    median_curvature: f64,
    points: Vec<PointReport>,
}

fn estimate_report<'a>(cloud: &PointCloud, config: &'a RunConfig, est: &Estimate) -> EstimateReport<'a> {
    let points = est
        .reports
        .iter()
        .map(|r| PointReport {
            index: r.index,
            local_dim: r.local_dim,
            dim_used: r.curvature.local_dim_used,
            radius_count: r.curvature.radii.len(),
            fit_variant: r.curvature.fit_variant,
            a: r.curvature.fit_a,
            curvature: r.curvature.curvature,
            alt: FitSummary {
                fit_variant: r.alt.fit_variant,
                a: r.alt.fit_a,
                curvature: r.alt.curvature,
            },
        })
        .collect();
    let mut dims: Vec<f64> = est.local_dims().into_iter().map(|d| d as f64).collect();
    let mut curv = est.curvatures();
    EstimateReport {
        schema: SCHEMA,
        n_points: cloud.n_points(),
        ambient_dim: cloud.ambient_dim(),
        config,
        sigma2: est.sigma2,
        h: est.h,
        global_dim: est.global_dim,
        dim_mode: est.dim_mode,
        median_local_dim: median(&mut dims),
        median_curvature: median(&mut curv),
        points,
    }
}

fn cmd_estimate(a: &EstimateArgs, exec: Execution) -> Result<(), Failure> {
    let (config, _) = a.cfg.resolve(RunConfig::default())?;
    let cloud = load_input(&a.input)?;
    if let Some(p) = a.point {
        if p >= cloud.n_points() {
            return Err(Failure::usage(format!(
                "--point {p} is out of range for {} points",
                cloud.n_points()
            )));
        }
    }
    let est = geometry::estimate_all_with(&cloud, &config, exec)?;
    if let (Some(p), Some(path)) = (a.point, &a.emit_fit) {
        let c = &est.reports[p].curvature;
        let mut w = csv::Writer::from_path(path).map_err(Failure::data)?;
        w.write_record(["r2", "vol_nor"]).map_err(Failure::data)?;
        for (r, v) in c.radii.iter().zip(&c.normalized_volumes) {
            w.write_record([(r * r).to_string(), v.to_string()]).map_err(Failure::data)?;
        }
        w.flush().map_err(Failure::data)?;
    }
    write_json(&estimate_report(&cloud, &config, &est), a.out.as_deref())
}

#[derive(Serialize)]
struct DiffmapMeta<'a> {
    schema: &'static str,
    n_points: usize,
    sigma2: f64,
    qsim: bool,
    embedding: &'a DiffusionEmbedding,
    /// Max entrywise deviation from the classical embedding of the same
    /// spectrum after sign alignment, relative to its largest entry.
    classical_deviation: Option<f64>,
    radial_deviation: f64,
}

fn cmd_diffmap(a: &DiffmapArgs, exec: Execution) -> Result<(), Failure> {
    let cloud = load_input(&a.input)?;
    let sigma2 = match a.sigma2 {
        Scale::Auto => diffusion::median_sigma2(&pointcloud::pairwise_distances_with(&cloud, exec))?,
        Scale::Value(v) => v,
    };
    let (emb, deviation) = if a.qsim {
        let q = qcurv_core::config::QsimConfig::default();
        let emb = diffmap::qsim_diffusion_map(&cloud, sigma2, a.t, a.n, a.include_trivial, &q, a.seed)?;
        let opts = DiffmapOptions {
            include_trivial: a.include_trivial,
            spectrum: EmbeddingSpectrum::MarkovGram,
        };
        let classical = diffmap::diffusion_map_with(&cloud, sigma2, a.t, a.n, opts)?;
        let mut emb = emb;
        diffmap::align_signs(&mut emb.coords, &classical.coords);
        let dev = diffmap::aligned_deviation(&emb.coords, &classical.coords);
        (emb, Some(dev))
    } else {
        let opts = DiffmapOptions {
            include_trivial: a.include_trivial,
            spectrum: a.spectrum.into(),
        };
        (diffmap::diffusion_map_with(&cloud, sigma2, a.t, a.n, opts)?, None)
    };

    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    let mut header = vec!["index".to_string()];
    header.extend((0..a.n).map(|k| format!("psi{k}")));
    w.write_record(&header).map_err(Failure::data)?;
    for (i, row) in emb.coords.row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(Failure::data)?;
    }
    w.flush().map_err(Failure::data)?;

    let meta = DiffmapMeta {
        schema: SCHEMA,
        n_points: cloud.n_points(),
        sigma2,
        qsim: a.qsim,
        embedding: &emb,
        classical_deviation: deviation,
        radial_deviation: diffmap::radial_deviation(&emb.coords),
    };
    let meta_path = sidecar(&a.out);
    write_json(&meta, Some(&meta_path))?;
    println!("{}", a.out.display());
    println!("{}", meta_path.display());
    Ok(())
}

#[derive(Serialize)]
struct QverifyOutput<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    report: &'a VerifyReport,
}

fn cmd_qverify(a: &QverifyArgs, exec: Execution) -> Result<(), Failure> {
    let (mut config, raw) = a.cfg.resolve(RunConfig::default())?;
    if a.cfg.nn.is_none() && raw.get("nn").is_none() {
        config.nn = QVERIFY_NN;
    }
    if let Some(m) = a.mode {
        config.qsim.mode = m.into();
    }
    if let Some(e) = a.shot_eps {
        config.qsim.shot_eps = e;
    }
    if a.degree.is_some() {
        config.qsim.degree = a.degree;
    }
    if a.inject_fault.is_some() {
        config.qsim.inject_fault = a.inject_fault;
    }
    config.validate().map_err(Failure::usage)?;

    let cloud = match &a.input {
        Some(path) => load_input(path)?,
        None => pointcloud::generate_manifold(
            ManifoldKind::Sphere,
            a.n,
            &GeneratorParams::default(),
            a.noise,
            config.seed,
        )?,
    };
    let report = qsim::qverify(&cloud, &config, exec)?;
    write_json(
        &QverifyOutput {
            schema: SCHEMA,
            config: &config,
            report: &report,
        },
        a.out.as_deref(),
    )?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::data(format!(
            "verification failed at stage(s): {}",
            report.failed_stages.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Estimate(a) => cmd_estimate(a, exec),
        Command::Diffmap(a) => cmd_diffmap(a, exec),
        Command::Qverify(a) => cmd_qverify(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qcurv: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
