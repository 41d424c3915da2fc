//! Fitting exposure plans to target patterns.
//!
//! Target and trial patterns are compared as unit vectors over the sample
//! points, so only the shape of the pattern matters. Each factor is
//! parametrized as `r = ½·sin²(u)·e^{iφ}`, which keeps `|r| ≤ 1/2` without
//! bounds, and the residual `t/|t| − p/|p|` is minimized by Levenberg–Marquardt
//! from many seeded random starts.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ExposurePlan, StandingWaveFactor};
use crate::pattern::{product_profile, product_profile_2d, Grid1D, Grid2D};

/// The 20 points `ζ = νπ/20`, `ν = −10..9`.
pub fn sample_grid_1d() -> Grid1D {
    Grid1D::new((-10..10).map(|nu| nu as f64 * PI / 20.0).collect()).expect("static grid")
}

/// `‖a/‖a‖ − b/‖b‖‖₂`, in `[0, 2]`.
pub fn normalized_distance(target: &[f64], trial: &[f64]) -> Result<f64> {
    if target.len() != trial.len() {
        return Err(Error::invalid(format!(
            "vector lengths differ ({} vs {})",
            target.len(),
            trial.len()
        )));
    }
    let na = norm(target);
    let nb = norm(trial);
    if !(na > 0.0 && na.is_finite()) || !(nb > 0.0 && nb.is_finite()) {
        return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
    }
    Ok(target
        .iter()
        .zip(trial)
        .map(|(a, b)| (a / na - b / nb).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub step_tolerance: f64,
}

impl FitOptions {
    pub fn default_1d() -> Self {
        Self {
            starts: 32,
            max_iterations: 500,
            seed: 0,
            step_tolerance: 1e-12,
        }
    }

    pub fn default_2d() -> Self {
        Self {
            starts: 64,
            ..Self::default_1d()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_starts(self, starts: usize) -> Self {
        Self { starts, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleGrid {
    OneD(Grid1D),
    TwoD(Grid2D),
}

impl SampleGrid {
    fn len(&self) -> usize {
        match self {
            SampleGrid::OneD(g) => g.len(),
            SampleGrid::TwoD(g) => g.len(),
        }
    }

    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            SampleGrid::OneD(g) => g.zeta().iter().map(|&z| (z, 0.0)).collect(),
            SampleGrid::TwoD(g) => g.points().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    target: Vec<f64>,
    grid: SampleGrid,
    angles: Vec<f64>,
    steps_per_angle: usize,
    pub options: FitOptions,
}

impl FitProblem {
    /// `n` factors along `θ = 0`, target sampled on `grid`.
    pub fn new_1d(target: Vec<f64>, grid: Grid1D, n: usize, options: FitOptions) -> Result<Self> {
        Self::build(target, SampleGrid::OneD(grid), vec![0.0], n, options)
    }

    /// `steps_per_angle` factors for each wave direction in `angles`.
    pub fn new_2d(
        target: Vec<f64>,
        grid: Grid2D,
        angles: Vec<f64>,
        steps_per_angle: usize,
        options: FitOptions,
    ) -> Result<Self> {
        Self::build(target, SampleGrid::TwoD(grid), angles, steps_per_angle, options)
    }

    fn build(
        target: Vec<f64>,
        grid: SampleGrid,
        angles: Vec<f64>,
        steps_per_angle: usize,
        options: FitOptions,
    ) -> Result<Self> {
        if angles.is_empty() || steps_per_angle == 0 {
            return Err(Error::invalid("plan shape needs at least one angle and one step"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("angles must be finite"));
        }
        if target.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} target samples for {} grid points",
                target.len(),
                grid.len()
            )));
        }
        if target.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("target samples must be finite and ≥ 0"));
        }
        if !target.iter().any(|&v| v > 0.0) {
            return Err(Error::invalid("target needs at least one positive sample"));
        }
        let params = 2 * angles.len() * steps_per_angle;
        if target.len() < params {
            return Err(Error::invalid(format!(
                "{} samples cannot constrain {params} parameters",
                target.len()
            )));
        }
        if options.starts == 0 || options.max_iterations == 0 {
            return Err(Error::invalid("need at least one start and one iteration"));
        }
        Ok(Self {
            target,
            grid,
            angles,
            steps_per_angle,
            options,
        })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn factor_count(&self) -> usize {
        self.angles.len() * self.steps_per_angle
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.factor_count()
    }

    pub fn residual_count(&self) -> usize {
        self.target.len()
    }

    /// Plan for a parameter vector `[u_0, φ_0, u_1, φ_1, …]`.
    pub fn plan_from_params(&self, x: &[f64]) -> Result<ExposurePlan> {
        let factors = x
            .chunks_exact(2)
            .enumerate()
            .map(|(v, p)| {
                let theta = self.angles[v / self.steps_per_angle];
                StandingWaveFactor::new(Complex64::from_polar(modulus(p[0]), p[1]), theta)
            })
            .collect::<Result<Vec<_>>>()?;
        ExposurePlan::new(factors)
    }

    /// Trial pattern of `plan` at the sample points, through the public
    /// profile functions.
    pub fn trial_vector(&self, plan: &ExposurePlan) -> Result<Vec<f64>> {
        match &self.grid {
            SampleGrid::OneD(g) => Ok(product_profile(plan, g)?.values),
            SampleGrid::TwoD(g) => Ok(product_profile_2d(plan, g).values),
        }
    }

    /// Residual `t/|t| − p/|p|` and its Jacobian at `x`.
    pub fn residual_and_jacobian(&self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        Model::new(self).eval(x, true).map(|(r, j)| (r, j.expect("jacobian requested")))
    }

    /// Residual only.
    pub fn residual(&self, x: &[f64]) -> Option<DVector<f64>> {
        Model::new(self).eval(x, false).map(|(r, _)| r)
    }
}

#[inline]
fn modulus(u: f64) -> f64 {
    0.5 * u.sin().powi(2)
}

/// Per-sample phase tables shared by all starts.
struct Model<'a> {
    problem: &'a FitProblem,
    /// `[angle][sample]` of `(cos ψ, sin ψ)`, `ψ = 2(x cos θ + y sin θ)`.
    trig: Vec<Vec<(f64, f64)>>,
    target_unit: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(problem: &'a FitProblem) -> Self {
        let pts = problem.grid.points();
        let trig = problem
            .angles
            .iter()
            .map(|&theta| {
                let (st, ct) = theta.sin_cos();
                pts.iter()
                    .map(|&(x, y)| {
                        let (s, c) = (2.0 * (x * ct + y * st)).sin_cos();
                        (c, s)
                    })
                    .collect()
            })
            .collect();
        let tn = norm(&problem.target);
        Self {
            problem,
            trig,
            target_unit: problem.target.iter().map(|t| t / tn).collect(),
        }
    }

    /// Returns `None` when the trial pattern vanishes on every sample.
    fn eval(&self, x: &[f64], want_jacobian: bool) -> Option<(DVector<f64>, Option<DMatrix<f64>>)> {
        let nf = self.problem.factor_count();
        let m = self.target_unit.len();
        let spa = self.problem.steps_per_angle;

        struct Coef {
            rho: f64,
            cphi: f64,
            sphi: f64,
            inv: f64,
            drho_du: f64,
        }
        let coefs: Vec<Coef> = x
            .chunks_exact(2)
            .map(|p| {
                let (su, cu) = p[0].sin_cos();
                let (sphi, cphi) = p[1].sin_cos();
                let rho = 0.5 * su * su;
                Coef {
                    rho,
                    cphi,
                    sphi,
                    inv: 1.0 / (1.0 + 2.0 * rho),
                    drho_du: su * cu,
                }
            })
            .collect();

        let mut trial = vec![0.0; m];
        let mut grad = if want_jacobian {
            Some(DMatrix::<f64>::zeros(m, 2 * nf))
        } else {
            None
        };
        let mut vals = vec![0.0; nf];
        let mut dval_du = vec![0.0; nf];
        let mut dval_dphi = vec![0.0; nf];
        let mut prefix = vec![0.0; nf + 1];
        let mut suffix = vec![0.0; nf + 1];
        for k in 0..m {
            for (v, c) in coefs.iter().enumerate() {
                let (cpsi, spsi) = self.trig[v / spa][k];
                let cos_t = cpsi * c.cphi - spsi * c.sphi;
                let sin_t = spsi * c.cphi + cpsi * c.sphi;
                vals[v] = (1.0 + 2.0 * c.rho * cos_t) * c.inv;
                if want_jacobian {
                    dval_du[v] = 2.0 * (cos_t - 1.0) * c.inv * c.inv * c.drho_du;
                    dval_dphi[v] = -2.0 * c.rho * sin_t * c.inv;
                }
            }
            prefix[0] = 1.0;
            for v in 0..nf {
                prefix[v + 1] = prefix[v] * vals[v];
            }
            trial[k] = prefix[nf];
            if let Some(g) = grad.as_mut() {
                suffix[nf] = 1.0;
                for v in (0..nf).rev() {
                    suffix[v] = suffix[v + 1] * vals[v];
                }
                for v in 0..nf {
                    let others = prefix[v] * suffix[v + 1];
                    g[(k, 2 * v)] = others * dval_du[v];
                    g[(k, 2 * v + 1)] = others * dval_dphi[v];
                }
            }
        }

        let pn = norm(&trial);
        if !(pn > 0.0 && pn.is_finite()) {
            return None;
        }
        let unit: Vec<f64> = trial.iter().map(|p| p / pn).collect();
        let residual = DVector::from_iterator(
            m,
            self.target_unit.iter().zip(&unit).map(|(t, p)| t - p),
        );
        let jac = grad.map(|mut g| {
            // d(p/|p|) = (I − n nᵀ) dp / |p|; the residual takes the negative
            g /= pn;
            let n = DVector::from_column_slice(&unit);
            let proj = g.tr_mul(&n);
            g -= &n * proj.transpose();
            -g
        });
        Some((residual, jac))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub start: usize,
    pub converged: bool,
    pub iterations: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub plan: ExposurePlan,
    pub distance: f64,
    pub peak_density: f64,
    pub starts: Vec<StartDiagnostics>,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn any_converged(&self) -> bool {
        self.starts.iter().any(|s| s.converged)
    }
}

struct StartOutcome {
    diag: StartDiagnostics,
    params: Vec<f64>,
}

fn initial_point(seed: u64, start: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    (0..dim / 2)
        .flat_map(|_| {
            let u = rng.random_range(0.0..PI / 2.0);
            let phi = rng.random_range(0.0..TAU);
            [u, phi]
        })
        .collect()
}

const GRADIENT_TOL: f64 = 1e-14;
/// Relative cost decrease of an accepted step below which the start stops.
const COST_TOL: f64 = 1e-10;
const COST_FLOOR: f64 = 1e-30;
const MAX_DAMPING: f64 = 1e16;

/// Levenberg–Marquardt with Marquardt diagonal scaling and multiplicative
/// damping updates.
fn levenberg_marquardt(model: &Model, x0: Vec<f64>, opts: &FitOptions) -> (Vec<f64>, bool, usize) {
    let mut x = DVector::from_vec(x0);
    let Some((mut r, mut j)) = model.eval(x.as_slice(), true) else {
        return (x.as_slice().to_vec(), false, 0);
    };
    let mut j = j.take().expect("jacobian");
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for iter in 0..opts.max_iterations {
        if cost <= COST_FLOOR {
            return (x.as_slice().to_vec(), true, iter);
        }
        let g = j.tr_mul(&r);
        if g.amax() <= GRADIENT_TOL {
            return (x.as_slice().to_vec(), true, iter);
        }
        let a = j.tr_mul(&j);
        let diag: Vec<f64> = a.diagonal().iter().map(|d| d.max(1e-12)).collect();
        loop {
            let mut damped = a.clone();
            for (i, d) in diag.iter().enumerate() {
                damped[(i, i)] += lambda * d;
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        return (x.as_slice().to_vec(), true, iter + 1);
                    }
                    continue;
                }
            };
            let trial = &x + &step;
            let accepted = match model.eval(trial.as_slice(), false) {
                Some((rt, _)) if rt.norm_squared() < cost => Some(rt),
                _ => None,
            };
            match accepted {
                Some(_) => {
                    let small = step.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance);
                    x = trial;
                    let (rn, jn) = model.eval(x.as_slice(), true).expect("accepted point is finite");
                    r = rn;
                    j = jn.expect("jacobian");
                    let previous = cost;
                    cost = r.norm_squared();
                    let stalled = previous - cost <= COST_TOL * previous;
                    lambda = (lambda / 3.0).max(1e-15);
                    if small || stalled {
                        return (x.as_slice().to_vec(), true, iter + 1);
                    }
                    break;
                }
                None => {
                    if step.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance) {
                        return (x.as_slice().to_vec(), true, iter + 1);
                    }
                    lambda *= 2.0;
                    if lambda > MAX_DAMPING {
                        return (x.as_slice().to_vec(), true, iter + 1);
                    }
                }
            }
        }
    }
    (x.as_slice().to_vec(), false, opts.max_iterations)
}

fn run_start(model: &Model, start: usize) -> StartOutcome {
    let opts = &model.problem.options;
    let x0 = initial_point(opts.seed, start, model.problem.parameter_count());
    let (params, converged, iterations) = levenberg_marquardt(model, x0, opts);
    let distance = model
        .eval(&params, false)
        .map_or(f64::INFINITY, |(r, _)| r.norm());
    StartOutcome {
        diag: StartDiagnostics {
            start,
            converged,
            iterations,
            distance,
        },
        params,
    }
}

/// Fine evaluation grid used for the peak density.
fn peak_density(problem: &FitProblem, plan: &ExposurePlan) -> Result<f64> {
    let profile_max = match &problem.grid {
        SampleGrid::OneD(g) => {
            let fine = Grid1D::period(1024)?;
            let a = product_profile(plan, &fine)?.max();
            let b = product_profile(plan, g)?.max();
            a.max(b)
        }
        SampleGrid::TwoD(g) => {
            let refine = |axis: &[f64]| -> Vec<f64> {
                let mut out = Vec::with_capacity(2 * axis.len());
                for w in axis.windows(2) {
                    out.push(w[0]);
                    out.push(0.5 * (w[0] + w[1]));
                }
                out.push(*axis.last().expect("non-empty axis"));
                out
            };
            let fine = Grid2D::new(refine(g.zeta_x()), refine(g.zeta_y()))?;
            product_profile_2d(plan, &fine).max()
        }
    };
    Ok(profile_max)
}

fn solve(problem: &FitProblem) -> Result<FitResult> {
    let model = Model::new(problem);
    let outcomes: Vec<StartOutcome> = (0..problem.options.starts)
        .into_par_iter()
        .map(|s| run_start(&model, s))
        .collect();
    // lowest distance, ties to the lowest start index
    let best = outcomes
        .iter()
        .reduce(|a, b| if b.diag.distance < a.diag.distance { b } else { a })
        .expect("at least one start");
    if !best.diag.distance.is_finite() {
        return Err(Error::NumericFailure("every start produced a vanishing trial pattern".into()));
    }
    let plan = problem.plan_from_params(&best.params)?;
    let distance = normalized_distance(&problem.target, &problem.trial_vector(&plan)?)?;
    let result = FitResult {
        peak_density: peak_density(problem, &plan)?,
        plan,
        distance,
        starts: outcomes.iter().map(|o| o.diag).collect(),
    };
    if result.any_converged() {
        Ok(result)
    } else {
        Err(Error::FitNotConverged(Box::new(result)))
    }
}

/// Fit a single-direction plan to a 1D target.
pub fn fit_1d(problem: &FitProblem) -> Result<FitResult> {
    match problem.grid {
        SampleGrid::OneD(_) => solve(problem),
        SampleGrid::TwoD(_) => Err(Error::invalid("fit_1d needs a 1D problem")),
    }
}

/// Fit a multi-direction plan to a 2D target.
pub fn fit_2d(problem: &FitProblem) -> Result<FitResult> {
    match problem.grid {
        SampleGrid::TwoD(_) => solve(problem),
        SampleGrid::OneD(_) => Err(Error::invalid("fit_2d needs a 2D problem")),
    }
}

/// The best-effort result of a fit, whether or not any start converged.
pub fn best_effort(result: Result<FitResult>) -> Result<FitResult> {
    match result {
        Err(Error::FitNotConverged(r)) => Ok(*r),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::uniform_phase_plan;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sample_grid_shape() {
        let g = sample_grid_1d();
        assert_eq!(g.len(), 20);
        assert_eq!(g.zeta()[0], -PI / 2.0);
        for w in g.zeta().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], PI / 20.0, epsilon = 1e-15);
        }
        assert_eq!(g.zeta(), crate::fourier::series_sample_points(10).as_slice());
    }

    #[test]
    fn distance_examples() {
        let a = [0.3, 1.0, 0.0, 2.5];
        assert_eq!(normalized_distance(&a, &a).unwrap(), 0.0);
        let scaled: Vec<f64> = a.iter().map(|x| 7.3 * x).collect();
        assert!(normalized_distance(&a, &scaled).unwrap() < 1e-15);
        assert_abs_diff_eq!(
            normalized_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(normalized_distance(&[1.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(normalized_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn small_problem() -> FitProblem {
        let g = sample_grid_1d();
        let target: Vec<f64> = g.zeta().iter().map(|z| 0.2 + z.cos().powi(4)).collect();
        FitProblem::new_1d(target, g, 3, FitOptions::default_1d().with_starts(4)).unwrap()
    }

    #[test]
    fn problem_validation() {
        let g = sample_grid_1d();
        let opts = FitOptions::default_1d();
        assert!(FitProblem::new_1d(vec![0.0; 20], g.clone(), 3, opts).is_err());
        assert!(FitProblem::new_1d(vec![1.0; 19], g.clone(), 3, opts).is_err());
        assert!(FitProblem::new_1d(vec![1.0; 20], g.clone(), 11, opts).is_err());
        assert!(FitProblem::new_1d(vec![-1.0; 20], g.clone(), 3, opts).is_err());
        assert!(FitProblem::new_1d(vec![1.0; 20], g, 10, opts).is_ok());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = small_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x: Vec<f64> = (0..p.parameter_count()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, j) = p.residual_and_jacobian(&x).unwrap();
            for col in 0..x.len() {
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[col] += h;
                xm[col] -= h;
                let fd = (p.residual(&xp).unwrap() - p.residual(&xm).unwrap()) / (2.0 * h);
                for row in 0..fd.len() {
                    let (a, b) = (j[(row, col)], fd[row]);
                    assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "J[{row},{col}] = {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn jacobian_2d_matches_central_differences() {
        let g = Grid2D::square(PI, 8).unwrap();
        let target: Vec<f64> = g.points().map(|(x, y)| 1.0 + (x * y).cos()).collect();
        let p = FitProblem::new_2d(target, g, vec![0.0, 1.0], 2, FitOptions::default_2d()).unwrap();
        let x: Vec<f64> = (0..8).map(|k| 0.3 + 0.4 * k as f64).collect();
        let (_, j) = p.residual_and_jacobian(&x).unwrap();
        for col in 0..8 {
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[col] += h;
            xm[col] -= h;
            let fd = (p.residual(&xp).unwrap() - p.residual(&xm).unwrap()) / (2.0 * h);
            for row in 0..fd.len() {
                assert!((j[(row, col)] - fd[row]).abs() <= 1e-5 * fd[row].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn model_residual_matches_public_distance() {
        let p = small_problem();
        let x = [0.4, 1.0, 1.2, -0.5, 0.9, 2.0];
        let plan = p.plan_from_params(&x).unwrap();
        let d = normalized_distance(p.target(), &p.trial_vector(&plan).unwrap()).unwrap();
        assert_abs_diff_eq!(p.residual(&x).unwrap().norm(), d, epsilon = 1e-14);
    }

    #[test]
    fn achievable_pattern_is_recovered() {
        let g = sample_grid_1d();
        let target = product_profile(&uniform_phase_plan(3).unwrap(), &g).unwrap().values;
        let p = FitProblem::new_1d(target, g, 3, FitOptions::default_1d().with_starts(8)).unwrap();
        let res = fit_1d(&p).unwrap();
        assert!(res.distance < 1e-6, "distance {}", res.distance);
        assert!(res.plan.factors().iter().all(|f| f.modulus() <= 0.5 + 1e-12));
    }

    #[test]
    fn deterministic_and_reported_distance_consistent() {
        let p = small_problem();
        let a = fit_1d(&p).unwrap();
        let b = fit_1d(&p).unwrap();
        assert_eq!(a, b);
        let d = normalized_distance(p.target(), &p.trial_vector(&a.plan).unwrap()).unwrap();
        assert!((a.distance - d).abs() <= 1e-12);
        assert_eq!(a.starts.len(), 4);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let p = small_problem();
        assert!(fit_2d(&p).is_err());
    }
}
