//! State-density profiles on 1D and 2D grids.
//!
//! Positions are `ζ = k0·z`. Every ideal profile is a pointwise product of
//! per-exposure factors, each in `[0, 1]`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::{self, LambdaParams};
use crate::error::{Error, Result};
use crate::fields::{realize_factor, ExposurePlan, StandingWaveFactor};

/// Tolerance on the `[0, 1]` range of profile values.
pub const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    zeta: Vec<f64>,
}

fn check_axis(values: &[f64], name: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{name} is empty")));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite positions")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// `n` points spaced `(end − start)/n` from `start`, excluding `end`.
fn half_open(start: f64, end: f64, n: usize) -> Vec<f64> {
    let step = (end - start) / n as f64;
    (0..n).map(|k| start + step * k as f64).collect()
}

impl Grid1D {
    pub fn new(zeta: Vec<f64>) -> Result<Self> {
        check_axis(&zeta, "grid")?;
        Ok(Self { zeta })
    }

    /// `n` equally spaced points on `[start, end)`.
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if n == 0 || !(end > start) {
            return Err(Error::invalid("uniform grid needs n ≥ 1 and end > start"));
        }
        Self::new(half_open(start, end, n))
    }

    /// `n` points over one period `[−π/2, π/2)`.
    pub fn period(n: usize) -> Result<Self> {
        Self::uniform(-PI / 2.0, PI / 2.0, n)
    }

    /// 400 points over `[−π/2, π/2)`.
    pub fn default_1d() -> Self {
        Self::period(400).expect("static grid")
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    zeta_x: Vec<f64>,
    zeta_y: Vec<f64>,
}

impl Grid2D {
    pub fn new(zeta_x: Vec<f64>, zeta_y: Vec<f64>) -> Result<Self> {
        check_axis(&zeta_x, "x axis")?;
        check_axis(&zeta_y, "y axis")?;
        Ok(Self { zeta_x, zeta_y })
    }

    /// `n × n` points over `[−half, half)²`.
    pub fn square(half: f64, n: usize) -> Result<Self> {
        if n == 0 || !(half > 0.0) {
            return Err(Error::invalid("square grid needs n ≥ 1 and half-width > 0"));
        }
        let axis = half_open(-half, half, n);
        Self::new(axis.clone(), axis)
    }

    /// 50 × 50 over `[−π, π)²`.
    pub fn default_2d() -> Self {
        Self::square(PI, 50).expect("static grid")
    }

    pub fn zeta_x(&self) -> &[f64] {
        &self.zeta_x
    }

    pub fn zeta_y(&self) -> &[f64] {
        &self.zeta_y
    }

    pub fn len(&self) -> usize {
        self.zeta_x.len() * self.zeta_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in storage order: `y` outer, `x` inner.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.zeta_y
            .iter()
            .flat_map(move |&y| self.zeta_x.iter().map(move |&x| (x, y)))
    }
}

/// Densities on a 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

/// Densities on a 2D grid, stored row by row: `values[iy * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

fn in_unit_range(values: &[f64]) -> bool {
    values
        .iter()
        .all(|&v| (-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v))
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Profile {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(max − min)/(max + min)`.
    pub fn visibility(&self) -> f64 {
        let (hi, lo) = (self.max(), self.min());
        (hi - lo) / (hi + lo)
    }

    pub fn in_unit_range(&self) -> bool {
        in_unit_range(&self.values)
    }

    /// Pointwise product with another profile on the same grid.
    pub fn multiply(&self, other: &Profile) -> Result<Profile> {
        if self.grid != other.grid {
            return Err(Error::invalid("profiles live on different grids"));
        }
        Ok(Profile {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// `zeta,density` rows, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zeta", "density"]).map_err(csv_io)?;
        for (z, v) in self.grid.zeta.iter().zip(&self.values) {
            w.write_record([fmt17(*z), fmt17(*v)]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl Profile2D {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.zeta_x.len() + ix]
    }

    pub fn in_unit_range(&self) -> bool {
        in_unit_range(&self.values)
    }

    /// `zeta_x,zeta_y,density` rows, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zeta_x", "zeta_y", "density"]).map_err(csv_io)?;
        for ((x, y), v) in self.grid.points().zip(&self.values) {
            w.write_record([fmt17(x), fmt17(y), fmt17(*v)]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn map_grid(g: &Grid1D, f: impl Fn(f64) -> f64) -> Profile {
    Profile {
        grid: g.clone(),
        values: g.zeta.iter().map(|&z| f(z)).collect(),
    }
}

/// One factor evaluated along its own wave direction.
pub fn factor_profile(f: &StandingWaveFactor, g: &Grid1D) -> Profile {
    map_grid(g, |z| f.density(z))
}

fn require_axial(plan: &ExposurePlan) -> Result<()> {
    if plan.is_axial() {
        Ok(())
    } else {
        Err(Error::invalid(
            "1D profiles need every factor along θ = 0; use product_profile_2d",
        ))
    }
}

/// `∏_v` of the factor densities.
pub fn product_profile(plan: &ExposurePlan, g: &Grid1D) -> Result<Profile> {
    require_axial(plan)?;
    Ok(map_grid(g, |z| product_density(plan, z)))
}

/// Product density of a 1D plan at one position.
pub fn product_density(plan: &ExposurePlan, zeta: f64) -> f64 {
    plan.factors().iter().map(|f| f.density(zeta)).product()
}

/// `sin²(nζ) / 4^{n−1}`, the product of `n` uniformly phase-shifted fringes.
pub fn closed_form_uniform(n: usize, g: &Grid1D) -> Result<Profile> {
    if n == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    let scale = 0.25f64.powi(n as i32 - 1);
    Ok(map_grid(g, |z| (n as f64 * z).sin().powi(2) * scale))
}

/// `cos^{2n}(ζ)`: a single peak of unit height at `ζ = 0`.
pub fn point_spread(n: usize, g: &Grid1D) -> Result<Profile> {
    if n == 0 {
        return Err(Error::invalid("order must be at least 1"));
    }
    Ok(map_grid(g, |z| z.cos().powi(2 * n as i32)))
}

/// Retention of one realized factor at `ζ` under the Λ-system model.
fn decoherent_factor(
    f: &StandingWaveFactor,
    p: &LambdaParams,
    total_intensity: f64,
    zeta: f64,
) -> Result<f64> {
    let beams = realize_factor(f)?;
    let (s, r) = beams.fields_at(zeta, total_intensity);
    atom::unit_step_retention(s, r, p)
}

/// Per-step retention computed from the Λ-system steady state, multiplied
/// over the plan. Every step's fields satisfy `|S|² + |R|² = total_intensity`.
pub fn decoherent_product_profile(
    plan: &ExposurePlan,
    p: &LambdaParams,
    total_intensity: f64,
    g: &Grid1D,
) -> Result<Profile> {
    require_axial(plan)?;
    p.validate()?;
    if !(total_intensity > 0.0 && total_intensity.is_finite()) {
        return Err(Error::invalid("total intensity must be positive"));
    }
    let values = g
        .zeta
        .par_iter()
        .map(|&z| {
            plan.factors()
                .iter()
                .enumerate()
                .try_fold(1.0, |acc, (v, f)| {
                    decoherent_factor(f, p, total_intensity, z)
                        .map(|x| acc * x)
                        .map_err(|e| annotate(e, v, z))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile {
        grid: g.clone(),
        values,
    })
}

fn annotate(e: Error, step: usize, zeta: f64) -> Error {
    let ctx = format!("step {step} at ζ = {zeta}");
    match e {
        Error::ConvergenceFailure { message, residual } => Error::ConvergenceFailure {
            message: format!("{message} ({ctx})"),
            residual,
        },
        Error::NumericFailure(m) => Error::NumericFailure(format!("{m} ({ctx})")),
        other => other,
    }
}

/// Uniform signal 1 and a strong signal-2 standing wave `r_peak·sin ζ`; the
/// retained density is confined near the signal-2 node at `ζ = 0`.
pub fn quench_localization_profile(
    s_uniform: f64,
    r_peak: f64,
    g: &Grid1D,
    p: &LambdaParams,
) -> Result<Profile> {
    if !(r_peak > 0.0 && r_peak.is_finite() && s_uniform.is_finite()) {
        return Err(Error::invalid("r_peak must be positive and both amplitudes finite"));
    }
    p.validate()?;
    let values = g
        .zeta
        .par_iter()
        .map(|&z| {
            let s = Complex64::new(s_uniform, 0.0);
            let r = Complex64::new(r_peak * z.sin(), 0.0);
            atom::unit_step_retention(s, r, p).map_err(|e| annotate(e, 0, z))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile {
        grid: g.clone(),
        values,
    })
}

/// Product of all factors over the substrate plane; each factor varies along
/// its own direction `(cos θ, sin θ)`.
pub fn product_profile_2d(plan: &ExposurePlan, g: &Grid2D) -> Profile2D {
    let values = g.points().map(|(x, y)| plan.density_2d(x, y)).collect();
    Profile2D {
        grid: g.clone(),
        values,
    }
}

/// Fringe period `λ / (2n)` for an `n`-fold enhanced standing wave.
pub fn fringe_period(wavelength: f64, n: usize) -> Result<f64> {
    if !(wavelength > 0.0 && wavelength.is_finite()) || n == 0 {
        return Err(Error::invalid("need wavelength > 0 and n ≥ 1"));
    }
    Ok(wavelength / (2.0 * n as f64))
}

/// Full width at half maximum of a single peak of `f` at `peak`, found by
/// bisection on each side within `max_half_width`.
pub fn fwhm(f: impl Fn(f64) -> f64, peak: f64, max_half_width: f64) -> Result<f64> {
    let half = 0.5 * f(peak);
    let edge = |dir: f64| -> Result<f64> {
        let (mut inside, mut outside) = (0.0, max_half_width);
        if f(peak + dir * outside) > half {
            return Err(Error::invalid("peak does not fall to half maximum in range"));
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if f(peak + dir * mid) > half {
                inside = mid;
            } else {
                outside = mid;
            }
            if outside - inside < 1e-15 {
                break;
            }
        }
        Ok(0.5 * (inside + outside))
    };
    Ok(edge(1.0)? + edge(-1.0)?)
}
