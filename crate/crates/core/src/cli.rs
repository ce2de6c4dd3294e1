//! The `cubature` command line: `construct`, `verify`, `moments`, `weak-approx`.
//!
//! Exit codes: 0 success, 1 usage, 2 verification failure, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{builtin_system, parse_scalar, parse_system, VectorFieldSystem, BUILTIN_NAMES};
use crate::error::Error;
use crate::formula::{degree3_formula, CubatureFormula};
use crate::lp::{construct, Construction, DEFAULT_EPSILON};
use crate::moments::{analytic_moments, flag_deviations, mc_moments};
use crate::multiindex::MultiindexBasis;
use crate::sampler::{SamplerConfig, Scheme};
use crate::weak::{
    convergence_study, make_partition, tree_expectation, TreeMode, TreeOptions, DEFAULT_LEAF_BUDGET,
    DEFAULT_SUBSTEPS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Sample count for `--mode sampled` when `--budget` is not given.
pub const DEFAULT_SAMPLES: u64 = 10_000;

#[derive(Debug, Parser)]
#[command(name = "cubature", version, about = "Cubature formulas on Wiener space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample paths, solve the moment LP and report successes per (N-factor, M).
    Construct(ConstructArgs),
    /// Recompute the moment residuals of a formula file.
    Verify(VerifyArgs),
    /// Expected signature of Brownian motion, optionally checked by Monte Carlo.
    Moments(MomentsArgs),
    /// Weak approximation of an SDE by the cubature tree, with a convergence table.
    WeakApprox(WeakArgs),
}

#[derive(Debug, Args, Serialize)]
struct ConstructArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    /// Segments per sampled path, comma separated.
    #[arg(long = "M", value_delimiter = ',', required = true)]
    segments: Vec<usize>,
    /// Candidate count as a multiple of |A(m)|, comma separated.
    #[arg(long = "N-factor", value_delimiter = ',', required = true)]
    n_factors: Vec<usize>,
    #[arg(long, default_value = "a")]
    scheme: Scheme,
    /// Trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Directory for formula files, the summary and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time in the manifest.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    /// Formula JSON file, or `degree3:D` for the built-in degree-3 formula.
    #[arg(long)]
    formula: String,
    #[arg(long, default_value_t = 2.0 * DEFAULT_EPSILON)]
    tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct MomentsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    /// Add Monte Carlo estimates: dyadic levels, sample count, seed.
    #[arg(long, num_args = 3, value_names = ["LEVELS", "SAMPLES", "SEED"])]
    oracle: Option<Vec<u64>>,
    /// CSV file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args, Serialize)]
struct WeakArgs {
    /// Formula JSON file, or `degree3:D` for the built-in degree-3 formula.
    #[arg(long)]
    formula: String,
    /// Built-in name (gbm, linear, ou) or an inline system such as "N=1; d=1; V0[1]=-x1; V1[1]=1".
    #[arg(long, conflicts_with = "sde_file", required_unless_present = "sde_file")]
    sde: Option<String>,
    #[arg(long)]
    sde_file: Option<PathBuf>,
    /// Initial state, comma separated; defaults to all ones.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value = "x1")]
    f: String,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    k_list: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// exact, sampled or affine.
    #[arg(long, default_value = "exact")]
    mode: TreeMode,
    /// Leaf budget (exact) or sample count (sampled).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
    substeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference value of E[f(X_T)]; enables the error column and slope.
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<f64>,
    /// CSV file for the table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, P: Serialize> {
    command: &'a str,
    parameters: &'a P,
    seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_seconds: Option<f64>,
    artifacts: Vec<String>,
    version: &'static str,
}

fn write_manifest<P: Serialize>(
    path: &Path,
    command: &str,
    parameters: &P,
    seeds: Vec<u64>,
    started: Option<Instant>,
    artifacts: Vec<String>,
) -> Result<(), Error> {
    let manifest = RunManifest {
        command,
        parameters,
        seeds,
        wall_clock_seconds: started.map(|t| t.elapsed().as_secs_f64()),
        artifacts,
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `results.csv` ↦ `results.manifest.json`, in the same directory.
fn manifest_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Error with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Numerical(_) | Error::Domain { .. } => EXIT_NUMERICAL,
            Error::Format(_) | Error::Json(_) => EXIT_VERIFY,
            _ => EXIT_USAGE,
        };
        let mut message = e.to_string();
        if matches!(e, Error::BudgetExceeded { .. }) {
            message.push_str("; raise --budget or use --mode sampled");
        }
        Failure { code, message }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::from(Error::Io(e))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        usage(format!("CSV output: {e}"))
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Construct(a) => cmd_construct(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Moments(a) => cmd_moments(a, out),
        Command::WeakApprox(a) => cmd_weak_approx(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_formula(source: &str) -> Result<CubatureFormula, Failure> {
    if let Some(d) = source.strip_prefix("degree3:") {
        let d: usize = d.parse().map_err(|_| usage(format!("bad dimension in {source:?}")))?;
        return Ok(degree3_formula(d)?);
    }
    match fs::read_to_string(source) {
        Ok(text) => Ok(CubatureFormula::from_json(&text)?),
        Err(e) => Err(usage(format!("cannot read formula {source:?}: {e}"))),
    }
}

fn cmd_construct(a: &ConstructArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let started = a.timing.then(Instant::now);
    if a.segments.is_empty() || a.segments.contains(&0) {
        return Err(usage("--M values must be positive"));
    }
    if a.n_factors.is_empty() || a.n_factors.contains(&0) {
        return Err(usage("--N-factor values must be positive"));
    }
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let basis = Arc::new(MultiindexBasis::new(a.d, a.m)?);
    let target = analytic_moments(&basis);
    let size = basis.len();
    for &m in &a.segments {
        SamplerConfig::new(a.d, m, a.scheme, a.seed)?;
    }

    let jobs: Vec<(usize, usize, usize)> = a
        .n_factors
        .iter()
        .flat_map(|&nf| a.segments.iter().flat_map(move |&m| (0..a.trials).map(move |t| (nf, m, t))))
        .collect();
    let outcomes: Vec<Result<Construction, Error>> = jobs
        .par_iter()
        .map(|&(nf, m, t)| {
            let cfg = SamplerConfig::new(a.d, m, a.scheme, a.seed.wrapping_add(t as u64))?;
            construct(&cfg, &basis, nf * size, &target)
        })
        .collect();

    let mut artifacts = Vec::new();
    let mut numerical = Vec::new();
    let mut counts = vec![vec![0usize; a.segments.len()]; a.n_factors.len()];
    let mut max_support = 0usize;
    let mut max_residual = 0.0f64;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
    }
    for (&(nf, m, t), outcome) in jobs.iter().zip(outcomes) {
        let ni = a.n_factors.iter().position(|&x| x == nf).expect("from the grid");
        let mi = a.segments.iter().position(|&x| x == m).expect("from the grid");
        match outcome {
            Ok(Construction::Success(mut formula)) => {
                counts[ni][mi] += 1;
                max_support = max_support.max(formula.len());
                max_residual = max_residual.max(formula.residual);
                if let Some(dir) = &a.out {
                    let name = format!("formula_N{nf}_M{m}_trial{t}.json");
                    formula.manifest = Some("manifest.json".into());
                    formula.save(dir.join(&name))?;
                    artifacts.push(name);
                }
            }
            Ok(Construction::Infeasible { .. }) => {}
            Err(e) => numerical.push(format!("N-factor {nf}, M {m}, trial {t}: {e}")),
        }
    }

    let mut summary = String::new();
    writeln!(
        summary,
        "d={} m={} |A(m)|={} scheme={} trials={} seed={}",
        a.d, a.m, size, a.scheme, a.trials, a.seed
    )
    .expect("string write");
    write!(summary, "{:<10}", "N \\ M").expect("string write");
    for m in &a.segments {
        write!(summary, "{m:>8}").expect("string write");
    }
    summary.push('\n');
    for (ni, nf) in a.n_factors.iter().enumerate() {
        write!(summary, "{:<10}", format!("{nf}|A(m)|")).expect("string write");
        for c in &counts[ni] {
            write!(summary, "{:>8}", format!("{c}/{}", a.trials)).expect("string write");
        }
        summary.push('\n');
    }
    if max_support > 0 {
        writeln!(summary, "max support {max_support} (|A(m)| = {size}), max residual {max_residual:.3e}")
            .expect("string write");
    }
    for line in &numerical {
        writeln!(summary, "numerical failure: {line}").expect("string write");
    }
    out.write_all(summary.as_bytes())?;

    if let Some(dir) = &a.out {
        let summary_file = format!("# manifest: manifest.json\n{summary}");
        fs::write(dir.join("summary.txt"), summary_file)?;
        artifacts.push("summary.txt".into());
        let seeds = (0..a.trials as u64).map(|t| a.seed.wrapping_add(t)).collect();
        write_manifest(&dir.join("manifest.json"), "construct", a, seeds, started, artifacts)?;
    }
    Ok(if numerical.is_empty() { EXIT_OK } else { EXIT_NUMERICAL })
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if !(a.tol >= 0.0) {
        return Err(usage("--tol must be nonnegative"));
    }
    let formula = load_formula(&a.formula)?;
    let res = formula.moment_residuals()?;
    writeln!(out, "formula: d={} m={} paths={}", formula.d, formula.m, formula.len())?;
    writeln!(out, "{:<8}{:>14}", "degree", "max residual")?;
    for (deg, r) in res.per_degree.iter().enumerate() {
        writeln!(out, "{deg:<8}{r:>14.3e}")?;
    }
    let problems = formula.weight_problems();
    for p in &problems {
        writeln!(out, "weight problem: {p}")?;
    }
    let ok = res.max <= a.tol && problems.is_empty();
    if ok {
        writeln!(out, "PASS: residual {:.3e} <= tol {:.3e}", res.max, a.tol)?;
        Ok(EXIT_OK)
    } else {
        if res.max > a.tol {
            writeln!(out, "FAIL: residual {:.3e} exceeds tol {:.3e}", res.max, a.tol)?;
        } else {
            writeln!(out, "FAIL: weights are not a probability vector")?;
        }
        Ok(EXIT_VERIFY)
    }
}

fn cmd_moments(a: &MomentsArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let started = a.timing.then(Instant::now);
    let basis = Arc::new(MultiindexBasis::new(a.d, a.m)?);
    let exact = analytic_moments(&basis);
    let oracle = match &a.oracle {
        Some(v) => {
            let (levels, samples, seed) = (v[0], v[1], v[2]);
            let levels = u32::try_from(levels).map_err(|_| usage("oracle levels out of range"))?;
            Some(mc_moments(&basis, levels, samples as usize, seed)?)
        }
        None => None,
    };
    let flagged = oracle.as_ref().map(|mc| flag_deviations(&exact, mc, 4.0)).unwrap_or_default();

    let mut buf = Vec::new();
    if let Some(path) = &a.out {
        writeln!(buf, "# manifest: {}", file_name(&manifest_path_for(path)))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["word", "degree", "value", "stderr"];
        if oracle.is_some() {
            header.extend(["mc_value", "mc_stderr", "flag"]);
        }
        w.write_record(&header)?;
        for (i, word) in basis.words().iter().enumerate() {
            let mut rec = vec![
                word.to_string(),
                basis.degree(i).to_string(),
                exact.values[i].to_string(),
                String::new(),
            ];
            if let Some(mc) = &oracle {
                let se = mc.stderr.as_ref().map_or(0.0, |s| s[i]);
                let flag = flagged.iter().any(|&(j, _)| j == i);
                rec.extend([format!("{:e}", mc.values[i]), format!("{se:e}"), u8::from(flag).to_string()]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    match &a.out {
        Some(path) => {
            fs::write(path, &buf)?;
            write_manifest(
                &manifest_path_for(path),
                "moments",
                a,
                a.oracle.as_ref().map(|v| vec![v[2]]).unwrap_or_default(),
                started,
                vec![file_name(path)],
            )?;
            writeln!(out, "wrote {} rows to {}", basis.len(), path.display())?;
        }
        None => out.write_all(&buf)?,
    }
    if oracle.is_some() {
        if flagged.is_empty() {
            writeln!(out, "oracle: no word deviates by more than 4 standard errors")?;
        } else {
            for &(i, z) in &flagged {
                writeln!(out, "oracle: {} deviates by {z:.2} standard errors", basis.word(i))?;
            }
            return Ok(EXIT_VERIFY);
        }
    }
    Ok(EXIT_OK)
}

fn load_system(a: &WeakArgs) -> Result<VectorFieldSystem, Failure> {
    if let Some(path) = &a.sde_file {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        return Ok(parse_system(&text)?);
    }
    let sde = a.sde.as_deref().expect("clap requires --sde or --sde-file");
    if sde.contains('=') {
        Ok(parse_system(sde)?)
    } else if BUILTIN_NAMES.contains(&sde) {
        Ok(builtin_system(sde)?)
    } else {
        Err(usage(format!("unknown SDE {sde:?}; built-ins are {}", BUILTIN_NAMES.join(", "))))
    }
}

fn cmd_weak_approx(a: &WeakArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let started = a.timing.then(Instant::now);
    let formula = load_formula(&a.formula)?;
    let sys = load_system(a)?;
    if formula.d != sys.d() {
        return Err(Error::DimensionMismatch(format!(
            "formula has d={} but the SDE is driven by d={}",
            formula.d,
            sys.d()
        ))
        .into());
    }
    let x0 = a.x0.clone().unwrap_or_else(|| vec![1.0; sys.n()]);
    let f = parse_scalar(&a.f, sys.n())?;
    if a.k_list.is_empty() || a.k_list.contains(&0) {
        return Err(usage("--k-list values must be positive"));
    }
    let opts = TreeOptions {
        mode: a.mode,
        budget: a.budget.unwrap_or(match a.mode {
            TreeMode::Sampled => DEFAULT_SAMPLES,
            _ => DEFAULT_LEAF_BUDGET,
        }),
        seed: a.seed,
        substeps: a.substeps,
    };

    struct Row {
        k: usize,
        value: f64,
        stderr: Option<f64>,
        error: Option<f64>,
        solves: u64,
    }
    let (rows, slope): (Vec<Row>, Option<f64>) = match a.reference {
        Some(reference) if a.k_list.len() >= 2 => {
            let study = convergence_study(&formula, &sys, &x0, &f, a.horizon, &a.k_list, a.gamma, reference, &opts)?;
            let rows = study
                .rows
                .iter()
                .map(|r| Row {
                    k: r.k,
                    value: r.value,
                    stderr: r.stderr,
                    error: Some(r.error),
                    solves: r.solves,
                })
                .collect();
            (rows, study.slope)
        }
        reference => {
            let mut rows = Vec::new();
            for &k in &a.k_list {
                let part = make_partition(a.horizon, k, a.gamma)?;
                let ev = tree_expectation(&formula, &sys, &x0, &f, &part, &opts)?;
                rows.push(Row {
                    k,
                    value: ev.value,
                    stderr: ev.stderr,
                    error: reference.map(|r| (ev.value - r).abs()),
                    solves: ev.solves,
                });
            }
            (rows, None)
        }
    };

    writeln!(
        out,
        "mode={} T={} gamma={} substeps={} paths={}",
        a.mode,
        a.horizon,
        a.gamma,
        a.substeps,
        formula.len()
    )?;
    writeln!(out, "{:>6} {:>22} {:>12} {:>12}", "k", "value", "error", "solves")?;
    for r in &rows {
        let value = match r.stderr {
            Some(se) => format!("{:.10} ± {se:.2e}", r.value),
            None => format!("{:.12}", r.value),
        };
        let error = r.error.map_or("-".to_string(), |e| format!("{e:.4e}"));
        writeln!(out, "{:>6} {value:>22} {error:>12} {:>12}", r.k, r.solves)?;
    }
    match slope {
        Some(s) => writeln!(out, "slope {s:.3}")?,
        None if a.reference.is_some() => writeln!(out, "slope undefined")?,
        None => {}
    }

    if let Some(path) = &a.out {
        let mut buf = Vec::new();
        writeln!(buf, "# manifest: {}", file_name(&manifest_path_for(path)))?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["k", "value", "stderr", "error", "solves"])?;
            for r in &rows {
                w.write_record([
                    r.k.to_string(),
                    r.value.to_string(),
                    r.stderr.map(|s| s.to_string()).unwrap_or_default(),
                    r.error.map(|e| e.to_string()).unwrap_or_default(),
                    r.solves.to_string(),
                ])?;
            }
            w.flush()?;
        }
        fs::write(path, &buf)?;
        write_manifest(&manifest_path_for(path), "weak-approx", a, vec![a.seed], started, vec![file_name(path)])?;
    }
    Ok(EXIT_OK)
}
