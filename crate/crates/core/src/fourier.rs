//! Harmonic content of product profiles.
//!
//! For a plan of `n` factors,
//!
//! ```text
//! profile(ζ) · ∏_v (1 + 2|r_v|) = Σ_{μ=−n}^{n} c_μ e^{2iμζ},    c_{−μ} = c_μ*
//! ```
//!
//! The coefficients are computed by convolving the trinomials
//! `(r_v*, 1, r_v)` ([`product_coefficients`]) and, independently, by summing
//! over disjoint index subsets ([`symmetric_coefficients`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ExposurePlan;

/// Longest plan accepted by the subset enumeration (`3^n` terms).
pub const MAX_SYMMETRIC_ORDER: usize = 16;

/// Non-negative half of a conjugate-symmetric Laurent series.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentCoeffs {
    order: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffRecord {
    mu: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct CoeffsRecord {
    order: usize,
    coeffs: Vec<CoeffRecord>,
}

impl LaurentCoeffs {
    pub fn order(&self) -> usize {
        self.order
    }

    /// `c_μ` for `μ = 0..=order`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `c_μ` for any integer `μ`.
    pub fn get(&self, mu: i64) -> Complex64 {
        let k = mu.unsigned_abs() as usize;
        match self.coeffs.get(k) {
            Some(c) if mu >= 0 => *c,
            Some(c) => c.conj(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// The series written as `Σ_{μ≥0} (f_μ e^{2iμζ} + c.c.)`: `f_0 = c_0/2`,
    /// `f_μ = c_μ` otherwise.
    pub fn f(&self, mu: usize) -> Complex64 {
        if mu == 0 {
            self.coeffs[0] * 0.5
        } else {
            self.coeffs.get(mu).copied().unwrap_or_default()
        }
    }

    /// `Σ_μ c_μ e^{2iμζ}`, real by conjugate symmetry.
    pub fn evaluate(&self, zeta: f64) -> f64 {
        let mut acc = self.coeffs[0].re;
        for (mu, c) in self.coeffs.iter().enumerate().skip(1) {
            let e = Complex64::from_polar(1.0, 2.0 * mu as f64 * zeta);
            acc += 2.0 * (c * e).re;
        }
        acc
    }

    /// The profile value: [`evaluate`](Self::evaluate) times
    /// `plan.normalization()`.
    pub fn evaluate_profile(&self, plan: &ExposurePlan, zeta: f64) -> f64 {
        self.evaluate(zeta) * plan.normalization()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = CoeffsRecord {
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(mu, c)| CoeffRecord {
                    mu: mu as i64,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: CoeffsRecord = serde_json::from_str(text)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); rec.order + 1];
        for c in rec.coeffs {
            let k = usize::try_from(c.mu)
                .ok()
                .filter(|&k| k <= rec.order)
                .ok_or_else(|| Error::invalid(format!("harmonic {} outside 0..={}", c.mu, rec.order)))?;
            coeffs[k] = Complex64::new(c.re, c.im);
        }
        Ok(Self {
            order: rec.order,
            coeffs,
        })
    }
}

fn require_single_direction(plan: &ExposurePlan) -> Result<()> {
    if plan.is_single_direction() {
        Ok(())
    } else {
        Err(Error::invalid("Laurent coefficients need all factors along one direction"))
    }
}

/// Iterated convolution of the trinomials `(r_v*, 1, r_v)`.
pub fn product_coefficients(plan: &ExposurePlan) -> Result<LaurentCoeffs> {
    require_single_direction(plan)?;
    let n = plan.len();
    // full two-sided array, index μ + n
    let mut full = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
    full[n] = Complex64::new(1.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    for (k, f) in plan.factors().iter().enumerate() {
        let r = f.r();
        let mut next = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        // after k factors the support is n−k ..= n+k
        for i in (n - k)..=(n + k) {
            let c = full[i];
            next[i - 1] += c * r.conj();
            next[i] += c * one;
            next[i + 1] += c * r;
        }
        full = next;
    }
    let mut coeffs = full.split_off(n);
    coeffs[0].im = 0.0;
    Ok(LaurentCoeffs { order: n, coeffs })
}

/// Direct enumeration over disjoint index subsets `(A, B)`:
/// `c_μ = Σ_{|A| − |B| = μ} ∏_{a∈A} r_a ∏_{b∈B} r_b*`.
pub fn symmetric_coefficients(plan: &ExposurePlan) -> Result<LaurentCoeffs> {
    require_single_direction(plan)?;
    let n = plan.len();
    if n > MAX_SYMMETRIC_ORDER {
        return Err(Error::SizeLimit(format!(
            "subset enumeration is limited to {MAX_SYMMETRIC_ORDER} factors (got {n}); \
             use product_coefficients"
        )));
    }
    let r: Vec<Complex64> = plan.factors().iter().map(|f| f.r()).collect();
    let full: u32 = (1u32 << n) - 1;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
    for a in 0..=full {
        let na = a.count_ones() as usize;
        let rest = full & !a;
        // every submask b of rest, including the empty set
        let mut b = rest;
        loop {
            let nb = b.count_ones() as usize;
            if na >= nb {
                let mut term = Complex64::new(1.0, 0.0);
                for (i, ri) in r.iter().enumerate() {
                    if a >> i & 1 == 1 {
                        term *= ri;
                    } else if b >> i & 1 == 1 {
                        term *= ri.conj();
                    }
                }
                coeffs[na - nb] += term;
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & rest;
        }
    }
    Ok(LaurentCoeffs { order: n, coeffs })
}

/// Discrete Fourier series through `2n` samples over one period `π` in `ζ`,
/// taken at `ζ_ν = νπ/(2n)`, `ν = −n..n`. Harmonics `μ = −n ..= n−1` of `e^{2iζ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    order: usize,
    /// Index `μ + n`.
    coeffs: Vec<Complex64>,
}

/// Sample positions used by [`truncated_target_series`]: `ν·π/(2n)` for
/// `ν = −n..n`.
pub fn series_sample_points(n: usize) -> Vec<f64> {
    let n = n as i64;
    (-n..n).map(|nu| nu as f64 * PI / (2 * n) as f64).collect()
}

pub fn truncated_target_series(samples: &[f64], n: usize) -> Result<TruncatedSeries> {
    if n == 0 || samples.len() != 2 * n {
        return Err(Error::invalid(format!(
            "need exactly 2n = {} samples, got {}",
            2 * n,
            samples.len()
        )));
    }
    let m = 2 * n;
    let zeta = series_sample_points(n);
    let coeffs = (-(n as i64)..n as i64)
        .map(|mu| {
            samples
                .iter()
                .zip(&zeta)
                .map(|(s, z)| Complex64::from_polar(*s, -2.0 * mu as f64 * z))
                .sum::<Complex64>()
                / m as f64
        })
        .collect();
    Ok(TruncatedSeries { order: n, coeffs })
}

impl TruncatedSeries {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficient of `e^{2iμζ}`, `μ ∈ −n..n`.
    pub fn coeff(&self, mu: i64) -> Complex64 {
        let k = mu + self.order as i64;
        if k < 0 || k as usize >= self.coeffs.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[k as usize]
        }
    }

    /// Real part of the series at `ζ`; exact at the sample points.
    pub fn evaluate(&self, zeta: f64) -> f64 {
        let n = self.order as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| (c * Complex64::from_polar(1.0, 2.0 * (k as i64 - n) as f64 * zeta)).re)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{uniform_phase_plan, StandingWaveFactor};
    use crate::pattern::{product_profile, Grid1D};
    use approx::assert_abs_diff_eq;

    fn plan(rs: &[Complex64]) -> ExposurePlan {
        ExposurePlan::new(rs.iter().map(|&r| StandingWaveFactor::along_axis(r).unwrap()).collect()).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn single_factor() {
        let r1 = Complex64::new(0.2, -0.3);
        let c = product_coefficients(&plan(&[r1])).unwrap();
        assert_eq!(c.coeffs()[0], Complex64::new(1.0, 0.0));
        assert_eq!(c.coeffs()[1], r1);
        assert_eq!(c.f(0), Complex64::new(0.5, 0.0));
        assert_eq!(c.f(1), r1);
        assert_eq!(symmetric_coefficients(&plan(&[r1])).unwrap(), c);
    }

    #[test]
    fn two_factors() {
        let (r1, r2) = (Complex64::new(0.1, 0.4), Complex64::new(-0.25, 0.05));
        let c = product_coefficients(&plan(&[r1, r2])).unwrap();
        assert!(close(c.coeffs()[2], r1 * r2, 1e-15));
        assert!(close(c.coeffs()[1], r1 + r2, 1e-15));
        let c0 = 1.0 + r1 * r2.conj() + r2 * r1.conj();
        assert!(close(c.coeffs()[0], c0, 1e-15));
        let s = symmetric_coefficients(&plan(&[r1, r2])).unwrap();
        assert!(close(s.coeffs()[1], r1 + r2, 1e-15));
    }

    #[test]
    fn uniform_four_is_spectrally_pure() {
        let p = uniform_phase_plan(4).unwrap();
        let c = product_coefficients(&p).unwrap();
        for mu in 1..4 {
            assert!(c.coeffs()[mu].norm() < 1e-15, "c_{mu} = {}", c.coeffs()[mu]);
        }
        let prod: Complex64 = p.factors().iter().map(|f| f.r()).product();
        assert!(close(c.coeffs()[4], prod, 1e-15));
    }

    #[test]
    fn six_random_factors_agree() {
        let rs: Vec<Complex64> = (0..6)
            .map(|k| Complex64::from_polar(0.08 * (k + 1) as f64 - 0.03, 1.7 * k as f64 - 2.0))
            .collect();
        let p = plan(&rs);
        let a = product_coefficients(&p).unwrap();
        let b = symmetric_coefficients(&p).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!(close(*x, *y, 1e-10));
        }
    }

    #[test]
    fn evaluation_reproduces_profile() {
        let rs: Vec<Complex64> = (0..5).map(|k| Complex64::from_polar(0.1 * k as f64, 0.9 * k as f64)).collect();
        let p = plan(&rs);
        let c = product_coefficients(&p).unwrap();
        let g = Grid1D::default_1d();
        let prof = product_profile(&p, &g).unwrap();
        for (z, v) in g.zeta().iter().zip(&prof.values) {
            assert_abs_diff_eq!(c.evaluate_profile(&p, *z), *v, epsilon = 1e-11);
        }
    }

    #[test]
    fn size_guard() {
        let p = uniform_phase_plan(17).unwrap();
        match symmetric_coefficients(&p) {
            Err(Error::SizeLimit(msg)) => assert!(msg.contains("product_coefficients")),
            other => panic!("{other:?}"),
        }
        assert!(product_coefficients(&p).is_ok());
    }

    #[test]
    fn json_roundtrip_and_shape() {
        let c = product_coefficients(&uniform_phase_plan(3).unwrap()).unwrap();
        let text = c.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["order"], 3);
        assert_eq!(v["coeffs"][2]["mu"], 2);
        assert_eq!(LaurentCoeffs::from_json(&text).unwrap(), c);
    }

    #[test]
    fn series_constant_and_cosine() {
        let n = 10;
        let flat = truncated_target_series(&[1.0; 20], n).unwrap();
        assert_abs_diff_eq!(flat.coeff(0).re, 1.0, epsilon = 1e-15);
        for mu in -10..10 {
            if mu != 0 {
                assert!(flat.coeff(mu).norm() < 1e-15);
            }
        }
        let zs = series_sample_points(n);
        let cosine: Vec<f64> = zs.iter().map(|z| (2.0 * z).cos()).collect();
        let s = truncated_target_series(&cosine, n).unwrap();
        assert_abs_diff_eq!(s.coeff(1).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.coeff(-1).re, 0.5, epsilon = 1e-15);
        for mu in [-10, -5, 0, 2, 9] {
            assert!(s.coeff(mu).norm() < 1e-15);
        }
        assert!(truncated_target_series(&cosine[..19], n).is_err());
    }

    #[test]
    fn series_interpolates_samples() {
        let n = 10;
        let zs = series_sample_points(n);
        let samples: Vec<f64> = zs.iter().map(|z| (3.0 * z).sin().abs() + 0.2 * z).collect();
        let s = truncated_target_series(&samples, n).unwrap();
        for (z, v) in zs.iter().zip(&samples) {
            assert_abs_diff_eq!(s.evaluate(*z), *v, epsilon = 1e-12);
        }
    }
}
