use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evalexpr::{ContextWithMutableVariables, HashMapContext, Value};
use meshcs::bundle::{compress_field, samples_for_ratio, SampleBundle};
use meshcs::fields::{eval_field_f, eval_field_g, eval_polynomial, eval_smooth_3d};
use meshcs::generate::{gen_cylinder, gen_holed_mesh, gen_uniform, HoledSquare};
use meshcs::io::{write_vtk, NamedField};
use meshcs::mesh::{partition_indices, PointCloud};
use meshcs::pipeline::{
    clod_levels, error_norm, format_f64, reconstruct_levels, reconstruct_partitioned, DetailLevel,
    Reconstructor,
};
use meshcs::stomp::{StompConfig, DEFAULT_THRESHOLD};
use meshcs::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "meshcs",
    version,
    about = "Compressive sensing of fields on point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a point cloud.
    GenMesh(GenMesh),
    /// Evaluate an analytic field on a point cloud.
    GenField(GenField),
    /// Compress a field into a sample bundle.
    Compress(Compress),
    /// Rebuild a field from sample bundles.
    Reconstruct(Reconstruct),
    /// Normalized L2 error between two fields.
    Metrics(Metrics),
    /// Error over wavelet orders and compression ratios, as CSV.
    Sweep(Sweep),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Holed,
    Cylinder,
    Uniform,
}

#[derive(Args)]
struct GenMesh {
    #[arg(long, value_enum, default_value = "holed")]
    kind: MeshKind,
    #[arg(long, default_value_t = 33_067)]
    points: usize,
    #[arg(long, default_value_t = 6)]
    holes: usize,
    #[arg(long, default_value_t = 0.04)]
    min_radius: f64,
    #[arg(long, default_value_t = 0.12)]
    max_radius: f64,
    /// Dimension of `uniform` clouds.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2015)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldKind {
    /// 48 sin(8πx) sin(7πy) sin(6πx)
    F,
    /// 12 sin(2πx) (4 sin(2πx) − 4 sin(2πy))
    G,
    /// (1 + x − 2y + z/2)^degree
    Polynomial,
    /// Smooth temperature-like 3D field
    Smooth,
    /// Expression in x, y, z and pi, e.g. `math::sin(2*pi*x) * y`
    Expr,
}

#[derive(Args)]
struct GenField {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, value_enum)]
    kind: FieldKind,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long)]
    expr: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write a VTK file with the field.
    #[arg(long)]
    vtk: Option<PathBuf>,
}

#[derive(Args)]
struct Compress {
    #[arg(long)]
    field: PathBuf,
    /// Compression ratio N / M.
    #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
    ratio: Option<f64>,
    /// Total number of samples M.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split the field into this many contiguous partitions.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 5)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 10)]
    max_stages: usize,
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> StompConfig {
        StompConfig {
            threshold: self.threshold,
            max_stages: self.max_stages,
            residual_tol: self.residual_tol,
            ..StompConfig::default()
        }
    }
}

#[derive(Args)]
struct Reconstruct {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Detail level `j` or `full`.
    #[arg(long, default_value = "full")]
    level: DetailLevel,
    /// Solve levels 1, 1+stride, … up to `--level`, warm-starting each from the last.
    #[arg(long)]
    clod: bool,
    #[arg(long, default_value_t = 2)]
    stride: usize,
    /// Original field, for error reporting.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Per-level CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Residual history CSV of the final solve.
    #[arg(long)]
    residuals: Option<PathBuf>,
    #[arg(long)]
    vtk: Option<PathBuf>,
}

#[derive(Args)]
struct Metrics {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    reconstructed: PathBuf,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    field: PathBuf,
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [2usize, 3, 4, 5, 6, 7, 8])]
    orders: Vec<usize>,
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [10.0, 20.0, 30.0, 40.0])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::LevelOutOfRange { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_failure(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> meshcs::Result<()>,
) -> CliResult<()> {
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush().map_err(|e| io_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn read_mesh(path: &Path) -> CliResult<PointCloud> {
    Ok(PointCloud::read_ascii(open(path)?)?)
}

fn read_field(path: &Path) -> CliResult<NamedField> {
    Ok(NamedField::read_ascii(open(path)?)?)
}

fn eval_expression(cloud: &PointCloud, expr: &str) -> CliResult<Vec<f64>> {
    let tree =
        evalexpr::build_operator_tree(expr).map_err(|e| usage(format!("bad expression: {e}")))?;
    let mut ctx = HashMapContext::new();
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))
        .expect("fresh context accepts variables");
    cloud
        .points()
        .map(|p| {
            for (a, name) in ["x", "y", "z"].iter().enumerate() {
                let v = p.get(a).copied().unwrap_or(0.0);
                ctx.set_value((*name).into(), Value::Float(v))
                    .expect("variable types are stable");
            }
            tree.eval_number_with_context(&ctx)
                .map_err(|e| usage(format!("cannot evaluate expression: {e}")))
        })
        .collect()
}

fn gen_mesh(a: GenMesh) -> CliResult<u8> {
    let cloud = match a.kind {
        MeshKind::Holed => gen_holed_mesh(
            a.points,
            &HoledSquare {
                holes: a.holes,
                radius: (a.min_radius, a.max_radius),
                seed: a.seed,
            },
        )?,
        MeshKind::Cylinder => gen_cylinder(a.points, a.seed)?,
        MeshKind::Uniform => gen_uniform(a.points, a.dim, a.seed)?,
    };
    write_with(&a.output, |out| cloud.write_ascii(out))?;
    eprintln!("wrote {} points ({}D)", cloud.len(), cloud.dim());
    Ok(0)
}

fn gen_field(a: GenField) -> CliResult<u8> {
    let cloud = read_mesh(&a.mesh)?;
    let (default_name, values) = match a.kind {
        FieldKind::F => ("f", eval_field_f(&cloud)?),
        FieldKind::G => ("g", eval_field_g(&cloud)?),
        FieldKind::Polynomial => ("p", eval_polynomial(&cloud, a.degree)),
        FieldKind::Smooth => ("T", eval_smooth_3d(&cloud)),
        FieldKind::Expr => {
            let expr = a
                .expr
                .as_deref()
                .ok_or_else(|| usage("--kind expr needs --expr"))?;
            ("expr", eval_expression(&cloud, expr)?)
        }
    };
    let field = NamedField::new(a.name.unwrap_or_else(|| default_name.into()), values)?;
    write_with(&a.output, |out| field.write_ascii(out))?;
    if let Some(vtk) = &a.vtk {
        write_with(vtk, |out| {
            write_vtk(&cloud, std::slice::from_ref(&field), out)
        })?;
    }
    Ok(0)
}

fn compress(a: Compress) -> CliResult<u8> {
    let field = read_field(&a.field)?;
    let n = field.values.len();
    let ratio = match (a.ratio, a.samples) {
        (Some(r), _) => r,
        (None, Some(0)) => return Err(usage("--samples must be positive")),
        (None, Some(m)) => n as f64 / m as f64,
        (None, None) => return Err(usage("one of --ratio or --samples is required")),
    };
    if a.ranks == 0 || a.ranks > n {
        return Err(usage(format!("--ranks must be in 1..={n}")));
    }
    let mut out = create(&a.output)?;
    for part in partition_indices(n, a.ranks)? {
        let samples = match (a.samples, a.ranks) {
            (Some(m), 1) => m,
            _ => samples_for_ratio(part.len(), ratio)?,
        };
        let bundle = compress_field(
            &field.name,
            &field.values[part.indices.clone()],
            part.rank_id,
            a.seed,
            samples,
        )?;
        bundle.write_to(&mut out)?;
    }
    out.flush().map_err(|e| io_failure(&a.output, e))?;
    Ok(0)
}

fn reconstruct(a: Reconstruct) -> CliResult<u8> {
    let cloud = read_mesh(&a.mesh)?;
    let bundles = SampleBundle::read_all(open(&a.bundle)?)?;
    if bundles.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: "bundle file is empty".into(),
        });
    }
    let reference = a.reference.as_deref().map(read_field).transpose()?;
    if let Some(r) = &reference {
        if r.values.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: r.values.len(),
            }
            .into());
        }
    }
    let config = a.solver.config();
    let name = format!("{}_r", bundles[0].field_name);

    let (field, converged, residuals) = if bundles.len() == 1 {
        let rec = Reconstructor::new(&bundles[0], &cloud, a.solver.order)?;
        let top = rec.resolve(a.level)?;
        let levels = if a.clod {
            clod_levels(top, a.stride)?
        } else {
            vec![top]
        };
        let r = reference.as_ref().map(|f| f.values.as_slice());
        let report = reconstruct_levels(&rec, &levels, a.clod, &config, r)?;
        if let Some(path) = &a.report {
            write_text(path, &report.to_csv())?;
        }
        (
            report.field,
            report.converged,
            Some(report.residual_history),
        )
    } else {
        if a.clod {
            return Err(usage("--clod is not supported with partitioned bundles"));
        }
        let parts = partition_indices(cloud.len(), bundles.len())?;
        let started = Instant::now();
        let result =
            reconstruct_partitioned(&bundles, &cloud, &parts, a.solver.order, a.level, &config)?;
        let converged = result.partitions.iter().all(|p| p.solution.stomp.converged);
        if let Some(path) = &a.report {
            let mut csv = String::from("rank,level,error,seconds,stages\n");
            for p in &result.partitions {
                let err = reference
                    .as_ref()
                    .map(|f| error_norm(&f.values[p.indices.clone()], &p.solution.field))
                    .transpose()?
                    .map(|e| format_f64(e.value))
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.rank_id,
                    p.solution.level,
                    err,
                    format_f64(p.solution.seconds),
                    p.solution.stomp.stages_used
                ));
            }
            write_text(path, &csv)?;
        }
        eprintln!(
            "{} partitions in {:.2}s",
            parts.len(),
            started.elapsed().as_secs_f64()
        );
        (result.field, converged, None)
    };

    if let (Some(path), Some(history)) = (&a.residuals, residuals) {
        let mut csv = String::from("stage,residual\n");
        for (i, r) in history.iter().enumerate() {
            csv.push_str(&format!("{i},{}\n", format_f64(*r)));
        }
        write_text(path, &csv)?;
    }

    let out = NamedField::new(name, field)?;
    write_with(&a.output, |w| out.write_ascii(w))?;
    if let Some(vtk) = &a.vtk {
        let mut fields = vec![out.clone()];
        fields.extend(reference.clone());
        write_with(vtk, |w| write_vtk(&cloud, &fields, w))?;
    }
    if let Some(r) = &reference {
        let e = error_norm(&r.values, &out.values)?;
        println!("error {}", format_f64(e.value));
    }
    println!("converged {converged}");
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn metrics(a: Metrics) -> CliResult<u8> {
    let f = read_field(&a.reference)?;
    let r = read_field(&a.reconstructed)?;
    let e = error_norm(&f.values, &r.values)?;
    let max = f
        .values
        .iter()
        .zip(&r.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if e.relative {
        println!("relative_l2 {}", format_f64(e.value));
    } else {
        println!("absolute_l2 {} (reference is zero)", format_f64(e.value));
    }
    println!("max_abs {}", format_f64(max));
    Ok(0)
}

fn sweep(a: Sweep) -> CliResult<u8> {
    let cloud = read_mesh(&a.mesh)?;
    let field = read_field(&a.field)?;
    if field.values.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: field.values.len(),
        }
        .into());
    }
    let config = StompConfig {
        threshold: a.threshold,
        ..StompConfig::default()
    };
    let mut csv = String::from("order,ratio,samples,error,seconds,stages,converged\n");
    for &ratio in &a.ratios {
        let m = samples_for_ratio(cloud.len(), ratio)?;
        let bundle = compress_field(&field.name, &field.values, 0, a.seed, m)?;
        for &order in &a.orders {
            let rec = Reconstructor::new(&bundle, &cloud, order)?;
            let top = rec.num_levels();
            let sol = rec.solve_level(top, &config)?;
            let err = error_norm(&field.values, &sol.field)?;
            csv.push_str(&format!(
                "{order},{},{m},{},{},{},{}\n",
                format_f64(ratio),
                format_f64(err.value),
                format_f64(sol.seconds),
                sol.stomp.stages_used,
                sol.stomp.converged
            ));
        }
    }
    match &a.output {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenMesh(a) => gen_mesh(a),
        Command::GenField(a) => gen_field(a),
        Command::Compress(a) => compress(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
