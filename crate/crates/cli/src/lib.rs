//! Batch front-end for `oneform`.
//!
//! Every subcommand reads JSON inputs (see [`files`]), prints JSON-lines
//! reports on stdout (see [`report`]) and maps failures onto exit codes:
//! `0` success, `1` I/O failure on output, `2` malformed input, `3` a solver
//! that did not converge or a geodesic that blew up (the records computed so
//! far are still printed).

pub mod files;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use oneform::field::{field_distance_detailed, OneFormField};
use oneform::quotient::{sym_distance, SpdMatrix};
use oneform::solver::log_map_from;
use oneform::{
    canonicalize, completion_field_distance, dist_to_singular, distance, ebin_field_distance, exp_map,
    field_align, field_volume, geodesic_data, lower_bound, metric_field, Error, SolverOptions,
    TangentMatrix,
};

use files::{FieldFile, MatrixFile};
use report::ReportRecord;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
    Io(String),
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Io(_) => EXIT_IO,
            CliError::NotConverged(_) => EXIT_SOLVER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "invalid input: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::NotConverged(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "oneform", version, about = "Distances, geodesics and alignments of full-rank matrix fields")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Relative rank tolerance for full-rank checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub rank_tol: f64,
    /// Endpoint tolerance for shooting.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub endpoint_tol: f64,
    /// Segments of the final PL path.
    #[arg(long, global = true, default_value_t = 16)]
    pub pl_segments: usize,
    /// Sweep cap per PL refinement level.
    #[arg(long, global = true, default_value_t = 500)]
    pub pl_iters: usize,
    /// PL starts (straight segment plus perturbations).
    #[arg(long, global = true, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Gauss–Newton iteration cap for shooting.
    #[arg(long, global = true, default_value_t = 60)]
    pub max_iter: usize,
    /// Fill in `elapsed_ms` (otherwise null, so reports are reproducible byte for byte).
    #[arg(long, global = true)]
    pub timing: bool,
}

impl GlobalOpts {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rank_tol: self.rank_tol,
            endpoint_tol: self.endpoint_tol,
            max_iter: self.max_iter,
            pl_segments: self.pl_segments,
            pl_iters: self.pl_iters,
            restarts: self.restarts,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Geodesic distance between two matrix files.
    FiberDist { a: PathBuf, b: PathBuf },
    /// Samples `exp(A, ζ, t)` at evenly spaced `t ∈ [0, 1]`.
    FiberGeodesic {
        a: PathBuf,
        zeta: PathBuf,
        #[arg(long, default_value_t = 11)]
        t_samples: usize,
    },
    /// L² distance between two one-form field files.
    FieldDist {
        f1: PathBuf,
        f2: PathBuf,
        /// Treat rank-deficient samples as the singular point of the completion.
        #[arg(long)]
        completion: bool,
    },
    /// Pointwise geodesic interpolation at time `t`.
    FieldInterp {
        f1: PathBuf,
        f2: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pointwise rotations `O_k` with `O_k·β_k = α_k`.
    Align {
        f1: PathBuf,
        f2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Relative tolerance on the Gram mismatch.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Writes the metric field `αᵀα`.
    ProjectMetric {
        f: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quotient distance between SPD matrix files, or between metric field files.
    SymDist {
        g1: PathBuf,
        g2: PathBuf,
        /// Ambient dimension; defaults to `n` of metric field files.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Distance from a matrix file to the singular stratum.
    DistToSingular { a: PathBuf },
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "oneform: {e}");
            e.exit_code()
        }
    }
}

struct Clock {
    enabled: bool,
    start: Instant,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock { enabled, start: Instant::now() }
    }

    /// Milliseconds since the previous lap, if timing is on.
    fn lap(&mut self) -> Option<f64> {
        let now = Instant::now();
        let ms = (now - self.start).as_secs_f64() * 1e3;
        self.start = now;
        self.enabled.then_some(ms)
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = cli.global.solver_options();
    let mut clock = Clock::new(cli.global.timing);
    match &cli.command {
        Command::FiberDist { a, b } => fiber_dist(a, b, &opts, &mut clock, out),
        Command::FiberGeodesic { a, zeta, t_samples } => fiber_geodesic(a, zeta, *t_samples, &opts, &mut clock, out),
        Command::FieldDist { f1, f2, completion } => field_dist(f1, f2, *completion, &opts, &mut clock, out),
        Command::FieldInterp { f1, f2, t, out: path } => field_interp(f1, f2, *t, path, &opts, &mut clock, out),
        Command::Align { f1, f2, out: path, tol } => align_fields(f1, f2, path, *tol, &opts, &mut clock, out),
        Command::ProjectMetric { f, out: path } => project_metric(f, path, &opts, &mut clock, out),
        Command::SymDist { g1, g2, n } => sym_dist(g1, g2, *n, &opts, &mut clock, out),
        Command::DistToSingular { a } => singular(a, &opts, &mut clock, out),
    }
}

fn fiber_dist(a: &Path, b: &Path, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let x = MatrixFile::read(a)?.to_full_rank(a, opts.rank_tol)?;
    let y = MatrixFile::read(b)?.to_full_rank(b, opts.rank_tol)?;
    if x.shape() != y.shape() {
        return Err(CliError::Input(format!(
            "{}: shape {:?} differs from {} shape {:?}",
            b.display(),
            y.shape(),
            a.display(),
            x.shape()
        )));
    }
    let result = distance(&x, &y, opts);
    let mut rec = ReportRecord::new("fiber-dist", result.method.as_str());
    rec.value = Some(result.value);
    rec.lower_bound = Some(result.lower);
    rec.iters = result.iterations;
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

fn sample_times(k: usize) -> Vec<f64> {
    match k {
        1 => vec![0.0],
        _ => (0..k).map(|j| j as f64 / (k - 1) as f64).collect(),
    }
}

fn fiber_geodesic(a: &Path, zeta: &Path, t_samples: usize, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    if t_samples == 0 {
        return Err(CliError::Input("--t-samples: must be at least 1".into()));
    }
    let base = MatrixFile::read(a)?.to_full_rank(a, opts.rank_tol)?;
    let velocity = MatrixFile::read(zeta)?.to_matrix(zeta)?;
    let velocity = TangentMatrix::new(base.clone(), velocity).map_err(|e| CliError::Input(format!("{}: matrix: {e}", zeta.display())))?;
    let data = geodesic_data(&base, &velocity).map_err(|e| CliError::Input(format!("{}: {e}", zeta.display())))?;
    let speed = velocity.norm();
    for t in sample_times(t_samples) {
        if t >= data.blowup {
            return Err(CliError::NotConverged(format!(
                "geodesic reaches the singular stratum at t = {} before t = {t}",
                report::fmt_g(data.blowup)
            )));
        }
        let point = exp_map(&base, &velocity, t).map_err(|e| CliError::NotConverged(e.to_string()))?;
        let mut rec = ReportRecord::new("fiber-geodesic", "closed_form");
        rec.t = Some(t);
        rec.value = Some(t * speed);
        rec.lower_bound = Some(lower_bound(base.entries(), point.entries()).expect("same shape"));
        rec.matrix = Some(point.entries().transpose().as_slice().to_vec());
        rec.elapsed_ms = clock.lap();
        rec.write(out)?;
    }
    Ok(())
}

/// Reads two one-form field files on the same sample set.
fn read_field_pair(f1: &Path, f2: &Path) -> Result<(FieldFile, FieldFile), CliError> {
    let first = FieldFile::read(f1)?;
    let second = FieldFile::read(f2)?;
    let same = first.n == second.n
        && first.m == second.m
        && first.records.len() == second.records.len()
        && first
            .records
            .iter()
            .zip(&second.records)
            .all(|(p, q)| p.point_id == q.point_id && p.weight == q.weight);
    if !same {
        return Err(CliError::Input(format!(
            "{}: records: shape, point ids or weights differ from {}",
            f2.display(),
            f1.display()
        )));
    }
    Ok((first, second))
}

fn field_dist(f1: &Path, f2: &Path, completion: bool, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let (first, second) = read_field_pair(f1, f2)?;
    let manifold = first.manifold(f1)?;
    if completion {
        let p = canonicalize(first.raw_matrices(f1)?, manifold.clone(), opts.rank_tol).map_err(|e| CliError::Input(format!("{}: {e}", f1.display())))?;
        let q = canonicalize(second.raw_matrices(f2)?, manifold, opts.rank_tol).map_err(|e| CliError::Input(format!("{}: {e}", f2.display())))?;
        let value = completion_field_distance(&p, &q, opts).map_err(|e| CliError::Input(e.to_string()))?;
        let mut rec = ReportRecord::new("field-dist", "completion");
        rec.value = Some(value);
        let lower_sq: f64 = p
            .values()
            .iter()
            .zip(q.values())
            .zip(p.manifold().weights())
            .map(|((x, y), w)| w * lower_bound(x.matrix(), y.matrix()).expect("same shape").powi(2))
            .sum();
        rec.lower_bound = Some(lower_sq.sqrt());
        rec.elapsed_ms = clock.lap();
        rec.write(out)?;
        return Ok(());
    }
    let alpha = first.to_one_form(f1, &manifold, opts.rank_tol)?;
    let beta = second.to_one_form(f2, &manifold, opts.rank_tol)?;
    let detailed = field_distance_detailed(&alpha, &beta, opts).map_err(|e| CliError::Input(e.to_string()))?;
    let mut lower_sq = 0.0;
    let mut iters = 0;
    for (k, result) in detailed.pointwise.iter().enumerate() {
        lower_sq += manifold.weights()[k] * result.lower * result.lower;
        iters += result.iterations;
        let mut rec = ReportRecord::new("field-dist", result.method.as_str());
        rec.point_id = Some(manifold.ids()[k].clone());
        rec.value = Some(result.value);
        rec.lower_bound = Some(result.lower);
        rec.iters = result.iterations;
        rec.elapsed_ms = clock.lap();
        rec.write(out)?;
    }
    let mut rec = ReportRecord::new("field-dist", "l2");
    rec.value = Some(detailed.value);
    rec.lower_bound = Some(lower_sq.sqrt());
    rec.iters = iters;
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

fn metadata(entries: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[allow(clippy::too_many_arguments)]
fn field_interp(f1: &Path, f2: &Path, t: f64, path: &Path, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CliError::Input(format!("--t: {t} is outside [0, 1]")));
    }
    let (first, second) = read_field_pair(f1, f2)?;
    let manifold = first.manifold(f1)?;
    let alpha = first.to_one_form(f1, &manifold, opts.rank_tol)?;
    let beta = second.to_one_form(f2, &manifold, opts.rank_tol)?;
    let mut values = Vec::with_capacity(manifold.len());
    let (mut sum_sq, mut lower_sq, mut iters) = (0.0, 0.0, 0);
    for (k, (a, b)) in alpha.values().iter().zip(beta.values()).enumerate() {
        let id = &manifold.ids()[k];
        let shot = log_map_from(a, b, None, opts).map_err(|e| CliError::NotConverged(format!("point_id \"{id}\": {e}")))?;
        let zeta = shot.tangent;
        let point = exp_map(a, &zeta, t).map_err(|e| CliError::NotConverged(format!("point_id \"{id}\": {e}")))?;
        let length = zeta.norm();
        let w = manifold.weights()[k];
        let lower = lower_bound(a.entries(), point.entries()).expect("same shape");
        sum_sq += w * length * length;
        lower_sq += w * lower * lower;
        iters += shot.iterations;
        let mut rec = ReportRecord::new("field-interp", "shooting");
        rec.point_id = Some(id.clone());
        rec.t = Some(t);
        rec.value = Some(t * length);
        rec.lower_bound = Some(lower);
        rec.iters = shot.iterations;
        rec.elapsed_ms = clock.lap();
        rec.write(out)?;
        values.push(point);
    }
    let field = OneFormField::new(manifold.clone(), values).map_err(|e| CliError::NotConverged(e.to_string()))?;
    let meta = metadata(&[("t", t.into()), ("source", format!("{} -> {}", f1.display(), f2.display()).into())]);
    files::write_json(path, &FieldFile::from_one_form(&field, meta))?;
    let mut rec = ReportRecord::new("field-interp", "shooting");
    rec.t = Some(t);
    rec.value = Some(t * sum_sq.sqrt());
    rec.lower_bound = Some(lower_sq.sqrt());
    rec.iters = iters;
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn align_fields(f1: &Path, f2: &Path, path: &Path, tol: f64, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let (first, second) = read_field_pair(f1, f2)?;
    let manifold = first.manifold(f1)?;
    let alpha = first.to_one_form(f1, &manifold, opts.rank_tol)?;
    let beta = second.to_one_form(f2, &manifold, opts.rank_tol)?;
    let rotations = match field_align(&alpha, &beta, tol) {
        Ok(r) => r,
        Err(Error::FieldGramMismatch { points }) => {
            let ids: Vec<&str> = points.iter().map(|&k| manifold.ids()[k].as_str()).collect();
            return Err(CliError::Input(format!(
                "{} vs {}: Gram matrices differ at point_ids {ids:?}",
                f1.display(),
                f2.display()
            )));
        }
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    let residual = oneform::field::alignment_residual(&alpha, &rotations, &beta).map_err(|e| CliError::Input(e.to_string()))?;
    files::write_json(path, &FieldFile::from_rotation(&rotations, BTreeMap::new()))?;
    let mut rec = ReportRecord::new("align", "polar");
    rec.value = Some(residual);
    rec.lower_bound = Some(0.0);
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

fn project_metric(f: &Path, path: &Path, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let file = FieldFile::read(f)?;
    let manifold = file.manifold(f)?;
    let alpha = file.to_one_form(f, &manifold, opts.rank_tol)?;
    let metrics = metric_field(&alpha);
    files::write_json(path, &FieldFile::from_metric(&metrics, BTreeMap::new()))?;
    let mut rec = ReportRecord::new("project-metric", "projection");
    rec.value = Some(field_volume(&alpha));
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

enum SymInput {
    Matrix(SpdMatrix),
    Field(FieldFile),
}

fn read_sym_input(path: &Path, rank_tol: f64) -> Result<SymInput, CliError> {
    let value: serde_json::Value = files::read_json(path)?;
    if value.get("records").is_some() {
        Ok(SymInput::Field(FieldFile::read(path)?))
    } else {
        let file = MatrixFile::read(path)?;
        if file.n != file.m {
            return Err(CliError::Input(format!("{}: n, m: SPD input must be square, found {}x{}", path.display(), file.n, file.m)));
        }
        Ok(SymInput::Matrix(file.to_spd(path, rank_tol)?))
    }
}

fn sym_dist(g1: &Path, g2: &Path, n: Option<usize>, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    match (read_sym_input(g1, opts.rank_tol)?, read_sym_input(g2, opts.rank_tol)?) {
        (SymInput::Matrix(g), SymInput::Matrix(h)) => {
            let n = n.ok_or_else(|| CliError::Input("--n: required for SPD matrix files".into()))?;
            if g.m() != h.m() || n <= g.m() {
                return Err(CliError::Input(format!("shapes: need equal m < n, found {} and {} with n = {n}", g.m(), h.m())));
            }
            let result = sym_distance(&g, &h, n, opts).map_err(|e| CliError::NotConverged(e.to_string()))?;
            let mut rec = ReportRecord::new("sym-dist", result.method.as_str());
            rec.value = Some(result.value);
            rec.lower_bound = Some(sym_lower_bound(&g, &h));
            rec.elapsed_ms = clock.lap();
            rec.write(out)?;
            Ok(())
        }
        (SymInput::Field(a), SymInput::Field(b)) => {
            if let Some(n) = n {
                if n != a.n {
                    return Err(CliError::Input(format!("--n: {n} differs from n = {} in {}", a.n, g1.display())));
                }
            }
            let (a, b) = (metric_pair_check(a, g1)?, metric_pair_check(b, g2)?);
            let manifold = a.manifold(g1)?;
            if b.manifold(g2)?.as_ref() != manifold.as_ref() || a.n != b.n {
                return Err(CliError::Input(format!("{}: records: point ids or weights differ from {}", g2.display(), g1.display())));
            }
            let g = a.to_metric(g1, &manifold, opts.rank_tol)?;
            let h = b.to_metric(g2, &manifold, opts.rank_tol)?;
            let value = ebin_field_distance(&g, &h, opts).map_err(|e| CliError::NotConverged(e.to_string()))?;
            let mut rec = ReportRecord::new("sym-dist", "field");
            rec.value = Some(value);
            let lower_sq: f64 = g
                .values()
                .iter()
                .zip(h.values())
                .zip(manifold.weights())
                .map(|((x, y), w)| w * sym_lower_bound(x, y).powi(2))
                .sum();
            rec.lower_bound = Some(lower_sq.sqrt());
            rec.elapsed_ms = clock.lap();
            rec.write(out)?;
            Ok(())
        }
        _ => Err(CliError::Input("sym-dist: both inputs must be SPD matrix files or both metric field files".into())),
    }
}

fn metric_pair_check(file: FieldFile, path: &Path) -> Result<FieldFile, CliError> {
    if file.kind != files::FieldKind::Metric {
        return Err(CliError::Input(format!("{}: kind: expected metric, found {:?}", path.display(), file.kind)));
    }
    Ok(file)
}

/// `(2/√m)·|det(g)^{1/4} − det(h)^{1/4}|`; the quotient map does not increase lengths.
fn sym_lower_bound(g: &SpdMatrix, h: &SpdMatrix) -> f64 {
    let q = |s: &SpdMatrix| s.entries().determinant().max(0.0).powf(0.25);
    2.0 / (g.m() as f64).sqrt() * (q(g) - q(h)).abs()
}

fn singular(a: &Path, opts: &SolverOptions, clock: &mut Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let x = MatrixFile::read(a)?.to_full_rank(a, opts.rank_tol)?;
    let value = dist_to_singular(&x);
    let mut rec = ReportRecord::new("dist-to-singular", "closed_form");
    rec.value = Some(value);
    rec.lower_bound = Some(value);
    rec.elapsed_ms = clock.lap();
    rec.write(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_defaults_match_solver_defaults() {
        let cli = Cli::try_parse_from(["oneform", "dist-to-singular", "a.json"]).unwrap();
        assert_eq!(cli.global.solver_options(), SolverOptions::default());
        assert!(!cli.global.timing);
    }

    #[test]
    fn sample_times_cover_the_unit_interval() {
        assert_eq!(sample_times(1), vec![0.0]);
        assert_eq!(sample_times(3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn unknown_subcommand_is_an_input_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["oneform", "frobnicate"], &mut out, &mut err), EXIT_INPUT);
        assert!(!err.is_empty());
    }
}
