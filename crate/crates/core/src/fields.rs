//! Exposure plans and their physical beam realizations.
//!
//! One exposure step is described by a complex modulation coefficient `r` and
//! an in-plane wave direction `theta`. The retained `|g1⟩` density of that
//! step is
//!
//! ```text
//! (1 + r·e^{2iζ} + r*·e^{-2iζ}) / (1 + 2|r|),    |r| ≤ 1/2
//! ```
//!
//! where `ζ` is measured along the wave direction. A sinusoidal fringe
//! `[1 − cos(2ζ + φ)]/2` is encoded as `r = −(1/2)·e^{iφ}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible `|r|`.
pub const MAX_MODULUS: f64 = 0.5;

/// Slack on [`MAX_MODULUS`] for values produced by `from_polar` rounding.
pub const MODULUS_SLACK: f64 = 1e-12;

/// Reduce an angle to `[0, π)`; a standing wave along `θ` and `θ + π` is the
/// same wave.
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// One exposure step: modulation coefficient plus wave direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandingWaveFactor {
    r: Complex64,
    theta: f64,
}

impl StandingWaveFactor {
    pub fn new(r: Complex64, theta: f64) -> Result<Self> {
        if !(r.re.is_finite() && r.im.is_finite() && theta.is_finite()) {
            return Err(Error::invalid("factor components must be finite"));
        }
        let m = r.norm();
        if m > MAX_MODULUS + MODULUS_SLACK {
            return Err(Error::invalid(format!(
                "|r| = {m} exceeds the maximum modulus 1/2"
            )));
        }
        Ok(Self {
            r,
            theta: canonical_angle(theta),
        })
    }

    /// A factor along the `θ = 0` axis.
    pub fn along_axis(r: Complex64) -> Result<Self> {
        Self::new(r, 0.0)
    }

    /// The fringe `[1 − cos(2ζ + φ)]/2`.
    pub fn sinusoid(phase: f64, theta: f64) -> Self {
        Self {
            r: Complex64::from_polar(-MAX_MODULUS, phase),
            theta: canonical_angle(theta),
        }
    }

    pub fn r(&self) -> Complex64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn modulus(&self) -> f64 {
        self.r.norm()
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self {
            theta: canonical_angle(theta),
            ..self
        }
    }

    /// Retained density at phase coordinate `ζ` measured along the wave.
    #[inline]
    pub fn density(&self, zeta: f64) -> f64 {
        let (s, c) = (2.0 * zeta).sin_cos();
        let re = self.r.re * c - self.r.im * s;
        (1.0 + 2.0 * re) / (1.0 + 2.0 * self.r.norm())
    }

    /// Retained density at a point of the substrate plane.
    #[inline]
    pub fn density_2d(&self, zeta_x: f64, zeta_y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        self.density(zeta_x * c + zeta_y * s)
    }
}

/// Wire form: `{"re": .., "im": .., "theta": ..}`.
#[derive(Serialize, Deserialize)]
struct FactorRecord {
    re: f64,
    im: f64,
    theta: f64,
}

/// An ordered, non-empty sequence of exposure steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePlan {
    factors: Vec<StandingWaveFactor>,
}

impl ExposurePlan {
    pub fn new(factors: Vec<StandingWaveFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("an exposure plan needs at least one factor"));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[StandingWaveFactor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// True when every factor has `θ = 0`.
    pub fn is_axial(&self) -> bool {
        self.factors.iter().all(|f| f.theta == 0.0)
    }

    /// True when all factors share one wave direction.
    pub fn is_single_direction(&self) -> bool {
        let t0 = self.factors[0].theta;
        self.factors.iter().all(|f| f.theta == t0)
    }

    /// `∏ 1/(1 + 2|r_v|)`.
    pub fn normalization(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| 1.0 / (1.0 + 2.0 * f.modulus()))
            .product()
    }

    /// Product density at a point of the substrate plane.
    pub fn density_2d(&self, zeta_x: f64, zeta_y: f64) -> f64 {
        self.factors
            .iter()
            .map(|f| f.density_2d(zeta_x, zeta_y))
            .product()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Serialize for ExposurePlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.factors.iter().map(|f| FactorRecord {
            re: f.r.re,
            im: f.r.im,
            theta: f.theta,
        }))
    }
}

impl<'de> Deserialize<'de> for ExposurePlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let records = Vec::<FactorRecord>::deserialize(d)?;
        let factors = records
            .into_iter()
            .map(|rec| StandingWaveFactor::new(Complex64::new(rec.re, rec.im), rec.theta))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        ExposurePlan::new(factors).map_err(D::Error::custom)
    }
}

impl Serialize for StandingWaveFactor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FactorRecord {
            re: self.r.re,
            im: self.r.im,
            theta: self.theta,
        }
        .serialize(s)
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("plan order must be at least 1"))
    } else {
        Ok(())
    }
}

/// `n` sinusoidal exposures with phases `2π(v−1)/n`; their product has
/// fringes of period `π/n` in `ζ`.
pub fn uniform_phase_plan(n: usize) -> Result<ExposurePlan> {
    check_order(n)?;
    let factors = (0..n)
        .map(|v| StandingWaveFactor::sinusoid(TAU * v as f64 / n as f64, 0.0))
        .collect();
    ExposurePlan::new(factors)
}

/// `n` identical exposures with `r = 1/2`, giving `cos^{2n}(ζ)`.
pub fn point_plan(n: usize) -> Result<ExposurePlan> {
    check_order(n)?;
    let f = StandingWaveFactor {
        r: Complex64::new(MAX_MODULUS, 0.0),
        theta: 0.0,
    };
    ExposurePlan::new(vec![f; n])
}

/// Concatenate per-angle plans, stamping each factor with its angle.
pub fn rotated_plan(angles: &[f64], per_angle: &[ExposurePlan]) -> Result<ExposurePlan> {
    if angles.len() != per_angle.len() {
        return Err(Error::invalid(format!(
            "{} angles but {} per-angle plans",
            angles.len(),
            per_angle.len()
        )));
    }
    let factors = angles
        .iter()
        .zip(per_angle)
        .flat_map(|(&theta, plan)| plan.factors.iter().map(move |f| f.with_theta(theta)))
        .collect();
    ExposurePlan::new(factors)
}

/// Beam amplitudes that realize one factor.
///
/// Signal 1 is a pair of counterpropagating beams with amplitudes `a ≥ b`;
/// its intensity is `a² + b² + 2ab·cos(2ζ + phase)`. Signal 2 is a fully
/// modulated standing wave whose intensity `r_amplitude²·(1 − cos(2ζ + phase))`
/// has the same ac component, so the total intensity is `(a + b)²` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamRealization {
    pub a: f64,
    pub b: f64,
    pub phase: f64,
    pub r_amplitude: f64,
}

impl BeamRealization {
    /// `|r| = ab/(a² + b²)`.
    pub fn modulus(&self) -> f64 {
        let d = self.a * self.a + self.b * self.b;
        if d == 0.0 {
            0.0
        } else {
            self.a * self.b / d
        }
    }

    /// The factor this realization produces (along `θ = 0`).
    pub fn factor(&self) -> Result<StandingWaveFactor> {
        StandingWaveFactor::along_axis(Complex64::from_polar(self.modulus(), self.phase))
    }

    pub fn total_intensity(&self) -> f64 {
        (self.a + self.b).powi(2)
    }

    /// Signal-1 and signal-2 Rabi amplitudes at `ζ`, scaled so that
    /// `|S|² + |R|² = total_intensity`.
    pub fn fields_at(&self, zeta: f64, total_intensity: f64) -> (Complex64, Complex64) {
        let scale = (total_intensity / self.total_intensity()).sqrt();
        let x = zeta + 0.5 * self.phase;
        let fwd = Complex64::from_polar(1.0, x);
        let s = self.a * fwd + self.b * fwd.conj();
        let r = self.r_amplitude * std::f64::consts::SQRT_2 * x.sin();
        (s * scale, Complex64::new(r * scale, 0.0))
    }
}

/// Beam amplitudes (with `a = 1`) realizing `f`.
pub fn realize_factor(f: &StandingWaveFactor) -> Result<BeamRealization> {
    let m = f.modulus();
    if m > MAX_MODULUS + MODULUS_SLACK {
        return Err(Error::invalid(format!(
            "|r| = {m} > 1/2 has no physical beam ratio"
        )));
    }
    let m = m.min(MAX_MODULUS);
    // smaller root of m·b² − b + m = 0, written without cancellation
    let b = 2.0 * m / (1.0 + (1.0 - 4.0 * m * m).max(0.0).sqrt());
    let a = 1.0;
    let phase = if m == 0.0 { 0.0 } else { f.r.arg() };
    Ok(BeamRealization {
        a,
        b,
        phase,
        r_amplitude: (2.0 * a * b).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_plan_small_orders() {
        let p1 = uniform_phase_plan(1).unwrap();
        assert_eq!(p1.len(), 1);
        assert_abs_diff_eq!(p1.factors()[0].r().re, -0.5);
        assert_abs_diff_eq!(p1.factors()[0].r().im, 0.0);
        assert_eq!(p1.factors()[0].theta(), 0.0);

        let p2 = uniform_phase_plan(2).unwrap();
        assert_abs_diff_eq!(p2.factors()[0].r().re, -0.5);
        assert_abs_diff_eq!(p2.factors()[1].r().re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p2.factors()[1].r().im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_plan_order_ten_arguments() {
        let p = uniform_phase_plan(10).unwrap();
        for (v, f) in p.factors().iter().enumerate() {
            let want = Complex64::from_polar(0.5, PI + TAU * v as f64 / 10.0);
            assert_abs_diff_eq!(f.r().re, want.re, epsilon = 1e-15);
            assert_abs_diff_eq!(f.r().im, want.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn uniform_plan_rotated_roots_of_unity() {
        for n in 1..=12 {
            let p = uniform_phase_plan(n).unwrap();
            // (−2 r_v)^n = 1 for every factor, and the phases are distinct
            for f in p.factors() {
                let w = (-2.0 * f.r()).powu(n as u32);
                assert_abs_diff_eq!(w.re, 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(w.im, 0.0, epsilon = 1e-12);
            }
            let sum: Complex64 = p.factors().iter().map(|f| f.r()).sum();
            if n > 1 {
                assert!(sum.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_order_rejected() {
        assert!(matches!(uniform_phase_plan(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(point_plan(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn point_plan_factors() {
        let p = point_plan(3).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.factors().iter().all(|f| f.r() == Complex64::new(0.5, 0.0)));
        let p2 = point_plan(2).unwrap();
        assert_eq!(p2.density_2d(0.0, 0.0), 1.0);
    }

    #[test]
    fn oversize_modulus_rejected() {
        assert!(StandingWaveFactor::along_axis(Complex64::new(0.6, 0.0)).is_err());
        assert!(StandingWaveFactor::along_axis(Complex64::new(0.36, 0.36)).is_err());
        assert!(StandingWaveFactor::along_axis(Complex64::new(f64::NAN, 0.0)).is_err());
        assert!(ExposurePlan::new(vec![]).is_err());
    }

    #[test]
    fn theta_canonicalized() {
        let f = StandingWaveFactor::new(Complex64::new(0.1, 0.0), PI + 0.25).unwrap();
        assert_abs_diff_eq!(f.theta(), 0.25, epsilon = 1e-15);
        let g = StandingWaveFactor::new(Complex64::new(0.1, 0.0), -0.25).unwrap();
        assert_abs_diff_eq!(g.theta(), PI - 0.25, epsilon = 1e-15);
        assert_eq!(canonical_angle(PI), 0.0);
        assert_eq!(canonical_angle(-1e-300), 0.0);
    }

    #[test]
    fn rotated_plan_shapes() {
        let angles: Vec<f64> = (0..6).map(|k| k as f64 * PI / 6.0).collect();
        let per: Vec<_> = (0..6).map(|_| uniform_phase_plan(6).unwrap()).collect();
        let p = rotated_plan(&angles, &per).unwrap();
        assert_eq!(p.len(), 36);
        assert_abs_diff_eq!(p.factors()[35].theta(), 5.0 * PI / 6.0, epsilon = 1e-15);

        let one = uniform_phase_plan(4).unwrap();
        assert_eq!(rotated_plan(&[0.0], &[one.clone()]).unwrap(), one);

        let two = rotated_plan(&[0.0, 1.0], &[point_plan(1).unwrap(), point_plan(1).unwrap()]).unwrap();
        assert_eq!(two.len(), 2);
        assert_ne!(two.factors()[0].theta(), two.factors()[1].theta());

        assert!(rotated_plan(&[0.0, 1.0], &[one]).is_err());
    }

    #[test]
    fn realize_edge_cases() {
        let half = realize_factor(&StandingWaveFactor::along_axis(Complex64::new(0.5, 0.0)).unwrap()).unwrap();
        assert_abs_diff_eq!(half.a, half.b, epsilon = 1e-15);

        let zero = realize_factor(&StandingWaveFactor::along_axis(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        assert_eq!(zero.b, 0.0);
        assert_eq!(zero.r_amplitude, 0.0);

        let f = StandingWaveFactor::along_axis(Complex64::from_polar(0.3, 1.1)).unwrap();
        let br = realize_factor(&f).unwrap();
        // t/(1 + t²) = 0.3 has smaller root t = 1/3
        assert_abs_diff_eq!(br.b / br.a, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(br.phase, 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(br.r_amplitude, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn realized_fields_reproduce_factor() {
        let f = StandingWaveFactor::along_axis(Complex64::from_polar(0.37, -2.3)).unwrap();
        let br = realize_factor(&f).unwrap();
        for k in 0..50 {
            let z = -1.5 + 0.061 * k as f64;
            let (s, r) = br.fields_at(z, 0.7);
            let total = s.norm_sqr() + r.norm_sqr();
            assert_abs_diff_eq!(total, 0.7, epsilon = 1e-14);
            assert_abs_diff_eq!(s.norm_sqr() / total, f.density(z), epsilon = 1e-14);
        }
    }

    #[test]
    fn json_shape() {
        let p = uniform_phase_plan(2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        assert_eq!(arr[0]["re"], -0.5);
        assert!(arr[0].get("im").is_some() && arr[0].get("theta").is_some());
        assert!(ExposurePlan::from_json("[]").is_err());
        assert!(ExposurePlan::from_json(r#"[{"re":0.7,"im":0,"theta":0}]"#).is_err());
    }

    proptest! {
        #[test]
        fn realization_roundtrip(m in 0.0f64..=0.5, phi in -PI..PI) {
            let f = StandingWaveFactor::along_axis(Complex64::from_polar(m, phi)).unwrap();
            let br = realize_factor(&f).unwrap();
            prop_assert!(br.a >= br.b && br.b >= 0.0);
            prop_assert!((br.modulus() - m).abs() <= 1e-12);
            let back = br.factor().unwrap();
            prop_assert!((back.modulus() - f.modulus()).abs() <= 1e-12);
        }

        #[test]
        fn json_roundtrip(re in -0.35f64..0.35, im in -0.35f64..0.35, theta in -7.0f64..7.0) {
            let p = ExposurePlan::new(vec![StandingWaveFactor::new(Complex64::new(re, im), theta).unwrap()]).unwrap();
            let q = ExposurePlan::from_json(&p.to_json().unwrap()).unwrap();
            let (a, b) = (p.factors()[0], q.factors()[0]);
            prop_assert!((a.r() - b.r()).norm() <= 1e-15 * a.r().norm().max(1e-300));
            prop_assert!((a.theta() - b.theta()).abs() <= 1e-15 * a.theta().max(1e-300));
        }
    }
}
