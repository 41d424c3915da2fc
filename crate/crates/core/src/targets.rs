//! Target patterns for fitting.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{Grid1D, Grid2D};

/// Samples within this distance of a square edge count as outside.
const EDGE_TOL: f64 = 1e-12;

/// 1 inside a centred window of width `duty·π` (repeating every `π`), else 0.
pub fn square_target(zeta: f64, duty: f64, center: f64) -> f64 {
    let d = ((zeta - center) + PI / 2.0).rem_euclid(PI) - PI / 2.0;
    if d.abs() < duty * PI / 2.0 - EDGE_TOL {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CShape {
    pub r_inner: f64,
    pub r_outer: f64,
    /// Opening of the arc, with polar angles taken in `[0, 2π)`.
    pub theta_start: f64,
    pub theta_end: f64,
}

impl Default for CShape {
    fn default() -> Self {
        Self {
            r_inner: PI / 3.0,
            r_outer: 2.0 * PI / 3.0,
            theta_start: PI / 4.0,
            theta_end: 7.0 * PI / 4.0,
        }
    }
}

impl CShape {
    pub fn contains(&self, zeta_x: f64, zeta_y: f64) -> bool {
        let r = zeta_x.hypot(zeta_y);
        let theta = zeta_y.atan2(zeta_x).rem_euclid(TAU);
        self.r_inner < r && r < self.r_outer && self.theta_start < theta && theta < self.theta_end
    }

    pub fn value(&self, zeta_x: f64, zeta_y: f64) -> f64 {
        if self.contains(zeta_x, zeta_y) {
            1.0
        } else {
            0.0
        }
    }
}

/// The arc `π/3 < r < 2π/3`, `π/4 < θ < 7π/4`.
pub fn c_shape_target(zeta_x: f64, zeta_y: f64) -> f64 {
    CShape::default().value(zeta_x, zeta_y)
}

/// A target description as used in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Square {
        #[serde(default = "default_duty")]
        duty: f64,
        #[serde(default)]
        center: f64,
    },
    CShape {
        #[serde(flatten, default)]
        shape: CShape,
    },
    Samples {
        path: String,
    },
}

fn default_duty() -> f64 {
    0.5
}

impl TargetSpec {
    pub fn square(duty: f64, center: f64) -> Self {
        TargetSpec::Square { duty, center }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpec::Square { duty, center } => {
                if !(*duty > 0.0 && *duty < 1.0) || !center.is_finite() {
                    return Err(Error::invalid(format!("square duty {duty} must lie in (0, 1)")));
                }
            }
            TargetSpec::CShape { shape } => {
                if !(0.0 < shape.r_inner && shape.r_inner < shape.r_outer) {
                    return Err(Error::invalid("C-shape radii must satisfy 0 < r_inner < r_outer"));
                }
            }
            TargetSpec::Samples { .. } => {}
        }
        Ok(())
    }

    /// Analytic targets evaluated on a 1D grid.
    pub fn sample_1d(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            TargetSpec::Square { duty, center } => {
                Ok(grid.zeta().iter().map(|&z| square_target(z, *duty, *center)).collect())
            }
            _ => Err(Error::invalid("only the square target is one-dimensional")),
        }
    }

    /// Analytic targets evaluated on a 2D grid (storage order `y` outer).
    pub fn sample_2d(&self, grid: &Grid2D) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            TargetSpec::CShape { shape } => Ok(grid.points().map(|(x, y)| shape.value(x, y)).collect()),
            TargetSpec::Square { duty, center } => Ok(grid
                .points()
                .map(|(x, _)| square_target(x, *duty, *center))
                .collect()),
            TargetSpec::Samples { .. } => Err(Error::invalid("sample targets are loaded, not evaluated")),
        }
    }
}

/// Target values loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSamples {
    OneD { grid: Grid1D, values: Vec<f64> },
    /// Values in grid storage order (`y` outer, `x` inner).
    TwoD { grid: Grid2D, values: Vec<f64> },
}

impl TargetSamples {
    pub fn values(&self) -> &[f64] {
        match self {
            TargetSamples::OneD { values, .. } | TargetSamples::TwoD { values, .. } => values,
        }
    }
}

fn parse_field(field: &str, line: usize, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("{name}: {e}"),
    })
}

/// Read `zeta,value` or `zeta_x,zeta_y,value` rows.
pub fn load_target_samples(path: impl AsRef<Path>) -> Result<TargetSamples> {
    let text = std::fs::read_to_string(path)?;
    parse_target_samples(&text)
}

pub fn parse_target_samples(text: &str) -> Result<TargetSamples> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
        Some(r) => r.map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?,
    };
    let cols: Vec<&str> = header.iter().collect();
    let two_d = match cols.as_slice() {
        ["zeta", "value"] => false,
        ["zeta_x", "zeta_y", "value"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `zeta,value` or `zeta_x,zeta_y,value`, got `{}`", cols.join(",")),
            })
        }
    };
    let width = cols.len();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let nums = rec
            .iter()
            .zip(&cols)
            .map(|(f, name)| parse_field(f, line, name))
            .collect::<Result<Vec<_>>>()?;
        let value = nums[width - 1];
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Domain {
                line,
                message: format!("target value {value} must be finite and ≥ 0"),
            });
        }
        rows.push((line, nums));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    if !two_d {
        for w in rows.windows(2) {
            if !(w[1].1[0] > w[0].1[0]) {
                return Err(Error::Parse {
                    line: w[1].0,
                    message: "zeta must be strictly increasing".into(),
                });
            }
        }
        let grid = Grid1D::new(rows.iter().map(|r| r.1[0]).collect())?;
        let values = rows.iter().map(|r| r.1[1]).collect();
        return Ok(TargetSamples::OneD { grid, values });
    }

    let mut xs: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.1[1]).collect();
    for axis in [&mut xs, &mut ys] {
        axis.sort_by(f64::total_cmp);
        axis.dedup();
    }
    if xs.len() * ys.len() != rows.len() {
        return Err(Error::Parse {
            line: rows.last().map_or(0, |r| r.0),
            message: format!(
                "{} rows do not form a full {}×{} grid",
                rows.len(),
                xs.len(),
                ys.len()
            ),
        });
    }
    let mut values = vec![f64::NAN; rows.len()];
    for (line, r) in &rows {
        let ix = xs.binary_search_by(|v| v.total_cmp(&r[0])).expect("axis value");
        let iy = ys.binary_search_by(|v| v.total_cmp(&r[1])).expect("axis value");
        let slot = &mut values[iy * xs.len() + ix];
        if !slot.is_nan() {
            return Err(Error::Parse {
                line: *line,
                message: "duplicate grid point".into(),
            });
        }
        *slot = r[2];
    }
    let grid = Grid2D::new(xs, ys)?;
    Ok(TargetSamples::TwoD { grid, values })
}
