//! `cpt-litho` command-line front-end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numeric failure.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpt_litho::atom::LambdaParams;
use cpt_litho::fields::{realize_factor, uniform_phase_plan, ExposurePlan};
use cpt_litho::fit::{best_effort, fit_1d, fit_2d, sample_grid_1d, FitOptions, FitProblem, FitResult};
use cpt_litho::fourier::product_coefficients;
use cpt_litho::pattern::{
    closed_form_uniform, decoherent_product_profile, fringe_period, point_spread, product_profile,
    product_profile_2d, quench_localization_profile, Grid1D, Grid2D, Profile,
};
use cpt_litho::targets::{load_target_samples, TargetSamples, TargetSpec};
use cpt_litho::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "cpt-litho", version, about = "Multi-exposure CPT lithography simulations and fits")]
struct Cli {
    /// JSON file whose keys mirror the subcommand's flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, env = "CPT_LITHO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ideal product profile of a plan (uniform-phase plan by default).
    Fringe(FringeArgs),
    /// Point-like pattern cos^{2n} ζ from n in-phase exposures.
    Point(PointArgs),
    /// Quench-localized density under a strong signal-2 standing wave.
    Localize(LocalizeArgs),
    /// Retention profile under the Λ-system model with dephasing.
    Decohere(DecohereArgs),
    /// Fourier coefficients of a plan's product profile.
    Fourier(PlanArgs),
    /// Beam amplitudes and phases realizing each factor of a plan.
    Realize(PlanArgs),
    /// Fit a single-direction plan to a 1D target.
    Fit1d(Fit1dArgs),
    /// Fit a multi-direction plan to a 2D target.
    Fit2d(Fit2dArgs),
    /// Fringe period λ/(2n).
    Period(PeriodArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FringeArgs {
    /// Number of exposures of the uniform-phase plan.
    #[arg(long)]
    n: Option<usize>,
    /// Plan JSON (overrides --n).
    #[arg(long)]
    plan_file: Option<PathBuf>,
    /// Samples over one period.
    #[arg(long)]
    points: Option<usize>,
    /// Evaluate sin²(nζ)/4^(n−1) instead of the factor product.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    closed_form: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalizeArgs {
    /// Uniform signal-1 Rabi frequency.
    #[arg(long)]
    s: Option<f64>,
    /// Peak signal-2 Rabi frequency.
    #[arg(long)]
    r_peak: Option<f64>,
    #[arg(long)]
    gamma_d: Option<f64>,
    /// Branching ratio Γ2/Γ1.
    #[arg(long)]
    branch: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecohereArgs {
    /// Dephasing rate in units of Γ1 + Γ2.
    #[arg(long)]
    gamma_d: Option<f64>,
    /// Branching ratio Γ2/Γ1.
    #[arg(long)]
    branch: Option<f64>,
    /// |S|² + |R|² in units of (Γ1 + Γ2)².
    #[arg(long)]
    intensity: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    plan_file: Option<PathBuf>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    plan_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitCommon {
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the fitted profile as CSV.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fit1dArgs {
    /// `square` or `samples`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    duty: Option<f64>,
    #[arg(long)]
    center: Option<f64>,
    /// CSV with `zeta,value` rows, for `--target samples`.
    #[arg(long)]
    samples_file: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    common: FitCommon,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fit2dArgs {
    /// `c-shape` or `samples`.
    #[arg(long)]
    target: Option<String>,
    /// CSV with `zeta_x,zeta_y,value` rows, for `--target samples`.
    #[arg(long)]
    samples_file: Option<PathBuf>,
    /// Number of wave directions, spaced by π/angles.
    #[arg(long)]
    angles: Option<usize>,
    /// Exposures per direction.
    #[arg(long)]
    steps: Option<usize>,
    /// Samples per axis over [−π, π).
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    common: FitCommon,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodArgs {
    /// Optical wavelength in metres.
    #[arg(long)]
    wavelength: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Overlay non-null flag values onto the config object.
fn merge<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Value>) -> Result<T, Failure> {
    let Some(config) = config else {
        return Ok(flags);
    };
    let Value::Object(mut base) = config.clone() else {
        return Err(usage("config file must hold a JSON object"));
    };
    let Value::Object(over) = serde_json::to_value(&flags).map_err(|e| usage(e.to_string()))? else {
        unreachable!("argument structs serialize to objects");
    };
    for (k, v) in over {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(format!("config: {e}")))
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> cpt_litho::Result<()>) -> Outcome {
    match out {
        Some(path) => {
            let mut file = io::BufWriter::new(fs::File::create(path)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    emit(out, |w| Ok(writeln!(w, "{text}")?))
}

fn emit_profile(out: Option<&Path>, profile: &Profile) -> Outcome {
    emit(out, |w| profile.write_csv(w))
}

fn load_plan(n: Option<usize>, plan_file: Option<&Path>) -> Result<ExposurePlan, Failure> {
    match plan_file {
        Some(path) => Ok(ExposurePlan::from_json(&fs::read_to_string(path)?)?),
        None => Ok(uniform_phase_plan(n.unwrap_or(1))?),
    }
}

fn period_grid(points: Option<usize>) -> Result<Grid1D, Failure> {
    Ok(Grid1D::period(points.unwrap_or(400))?)
}

fn rates(branch: Option<f64>, gamma_d: Option<f64>) -> Result<LambdaParams, Failure> {
    Ok(LambdaParams::with_branching(branch.unwrap_or(1.0), gamma_d.unwrap_or(0.0))?)
}

fn fringe(a: FringeArgs) -> Outcome {
    let g = period_grid(a.points)?;
    let profile = if a.closed_form.unwrap_or(false) {
        if a.plan_file.is_some() {
            return Err(usage("--closed-form applies to the uniform-phase plan only"));
        }
        closed_form_uniform(a.n.unwrap_or(1), &g)?
    } else {
        product_profile(&load_plan(a.n, a.plan_file.as_deref())?, &g)?
    };
    emit_profile(a.out.as_deref(), &profile)
}

fn point(a: PointArgs) -> Outcome {
    let profile = point_spread(a.n.unwrap_or(1), &period_grid(a.points)?)?;
    emit_profile(a.out.as_deref(), &profile)
}

fn localize(a: LocalizeArgs) -> Outcome {
    let p = rates(a.branch, a.gamma_d)?;
    let (Some(s), Some(r_peak)) = (a.s, a.r_peak) else {
        return Err(usage("localize needs --s and --r-peak"));
    };
    let profile = quench_localization_profile(s, r_peak, &period_grid(a.points)?, &p)?;
    emit_profile(a.out.as_deref(), &profile)
}

fn decohere(a: DecohereArgs) -> Outcome {
    let p = rates(a.branch, a.gamma_d)?;
    let plan = load_plan(a.n, a.plan_file.as_deref())?;
    let profile = decoherent_product_profile(&plan, &p, a.intensity.unwrap_or(1.0), &period_grid(a.points)?)?;
    emit_profile(a.out.as_deref(), &profile)
}

fn fourier(a: PlanArgs) -> Outcome {
    let coeffs = product_coefficients(&load_plan(a.n, a.plan_file.as_deref())?)?;
    let text = coeffs.to_json()?;
    emit(a.out.as_deref(), |w| Ok(writeln!(w, "{text}")?))
}

fn realize(a: PlanArgs) -> Outcome {
    let plan = load_plan(a.n, a.plan_file.as_deref())?;
    let beams = plan.factors().iter().map(realize_factor).collect::<cpt_litho::Result<Vec<_>>>()?;
    emit_json(a.out.as_deref(), &beams)
}

fn fit_options(c: &FitCommon, defaults: FitOptions) -> FitOptions {
    FitOptions {
        starts: c.starts.unwrap_or(defaults.starts),
        seed: c.seed.unwrap_or(defaults.seed),
        max_iterations: c.max_iterations.unwrap_or(defaults.max_iterations),
        ..defaults
    }
}

/// Writes the report even when no start converged, then fails.
fn report(result: cpt_litho::Result<FitResult>, c: &FitCommon, profile: impl FnOnce(&FitResult) -> Outcome) -> Outcome {
    let converged = !matches!(result, Err(Error::FitNotConverged(_)));
    let res = best_effort(result)?;
    emit(c.out.as_deref(), |w| Ok(writeln!(w, "{}", res.to_json()?)?))?;
    profile(&res)?;
    if converged {
        Ok(())
    } else {
        Err(Failure::Run(Error::FitNotConverged(Box::new(res))))
    }
}

fn fit1d(a: Fit1dArgs) -> Outcome {
    let target_kind = a.target.as_deref().unwrap_or("square");
    let (grid, target) = match target_kind {
        "square" => {
            let spec = TargetSpec::square(a.duty.unwrap_or(0.5), a.center.unwrap_or(0.0));
            let g = sample_grid_1d();
            let t = spec.sample_1d(&g)?;
            (g, t)
        }
        "samples" => {
            let path = a.samples_file.as_ref().ok_or_else(|| usage("--target samples needs --samples-file"))?;
            match load_target_samples(path)? {
                TargetSamples::OneD { grid, values } => (grid, values),
                TargetSamples::TwoD { .. } => return Err(usage("fit1d needs `zeta,value` samples")),
            }
        }
        other => return Err(usage(format!("unknown 1D target `{other}` (square, samples)"))),
    };
    let problem = FitProblem::new_1d(target, grid, a.n.unwrap_or(10), fit_options(&a.common, FitOptions::default_1d()))?;
    report(fit_1d(&problem), &a.common, |res| match &a.common.profile_out {
        Some(path) => Ok(product_profile(&res.plan, &Grid1D::period(400)?)?.save_csv(path)?),
        None => Ok(()),
    })
}

fn fit2d(a: Fit2dArgs) -> Outcome {
    let (grid, target) = match a.target.as_deref().unwrap_or("c-shape") {
        "c-shape" | "c_shape" => {
            let g = Grid2D::square(PI, a.grid.unwrap_or(50))?;
            let t = TargetSpec::CShape { shape: Default::default() }.sample_2d(&g)?;
            (g, t)
        }
        "samples" => {
            let path = a.samples_file.as_ref().ok_or_else(|| usage("--target samples needs --samples-file"))?;
            match load_target_samples(path)? {
                TargetSamples::TwoD { grid, values } => (grid, values),
                TargetSamples::OneD { .. } => return Err(usage("fit2d needs `zeta_x,zeta_y,value` samples")),
            }
        }
        other => return Err(usage(format!("unknown 2D target `{other}` (c-shape, samples)"))),
    };
    let k = a.angles.unwrap_or(6);
    if k == 0 {
        return Err(usage("--angles must be at least 1"));
    }
    let angles = (0..k).map(|i| i as f64 * PI / k as f64).collect();
    let problem = FitProblem::new_2d(target, grid.clone(), angles, a.steps.unwrap_or(6), fit_options(&a.common, FitOptions::default_2d()))?;
    report(fit_2d(&problem), &a.common, |res| match &a.common.profile_out {
        Some(path) => Ok(product_profile_2d(&res.plan, &grid).save_csv(path)?),
        None => Ok(()),
    })
}

fn period(a: PeriodArgs) -> Outcome {
    let wavelength = a.wavelength.ok_or_else(|| usage("period needs --wavelength"))?;
    let p = fringe_period(wavelength, a.n.unwrap_or(1))?;
    println!("{}", scientific(p));
    Ok(())
}

/// Shortest round-trip mantissa with a two-digit signed exponent, as in `4.085e-08`.
fn scientific(x: f64) -> String {
    let s = format!("{x:e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let (sign, digits) = e.strip_prefix('-').map_or(("+", e), |d| ("-", d));
            format!("{m}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str::<Value>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let config = config.as_ref();
    match cli.command {
        Command::Fringe(a) => fringe(merge(a, config)?),
        Command::Point(a) => point(merge(a, config)?),
        Command::Localize(a) => localize(merge(a, config)?),
        Command::Decohere(a) => decohere(merge(a, config)?),
        Command::Fourier(a) => fourier(merge(a, config)?),
        Command::Realize(a) => realize(merge(a, config)?),
        Command::Fit1d(a) => fit1d(merge(a, config)?),
        Command::Fit2d(a) => fit2d(merge(a, config)?),
        Command::Period(a) => period(merge(a, config)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        // downstream closed the pipe, e.g. `| head`
        Err(Failure::Run(Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
