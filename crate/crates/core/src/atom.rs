//! Λ-system master equation for one exposure step.
//!
//! Basis order is `(g1, g2, e1)`. On resonance the interaction Hamiltonian is
//!
//! ```text
//! H = ½ (Ω_R |e1⟩⟨g1| + Ω_S |e1⟩⟨g2| + h.c.)
//! ```
//!
//! so that `(Ω_S|g1⟩ − Ω_R|g2⟩)` is dark and the ideal retained `|g1⟩`
//! population is `|Ω_S|²/(|Ω_S|² + |Ω_R|²)`. The excited state decays to
//! `g1` at `gamma1` and to `g2` at `gamma2`; every coherence additionally
//! decays at `gamma_d`. All rates and Rabi frequencies are in units of the
//! total decay rate Γ, times in units of 1/Γ.

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
type Mat9 = SMatrix<C64, 9, 9>;
type Vec9 = SVector<C64, 9>;

pub const G1: usize = 0;
pub const G2: usize = 1;
pub const E1: usize = 2;

/// Default RK4 step, in 1/Γ.
pub const DEFAULT_DT: f64 = 1e-3;
/// `‖dρ/dt‖` below which a state counts as stationary.
pub const STEADY_TOLERANCE: f64 = 1e-10;
/// Integration budget for the steady-state search, in RK4 steps.
pub const MAX_STEADY_STEPS: u64 = 1_000_000;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    /// Signal-1 Rabi frequency, couples `g2 ↔ e1`.
    pub omega_s: C64,
    /// Signal-2 Rabi frequency, couples `g1 ↔ e1`.
    pub omega_r: C64,
    /// Decay rate `e1 → g1`.
    pub gamma1: f64,
    /// Decay rate `e1 → g2`.
    pub gamma2: f64,
    /// Extra dephasing rate of every coherence.
    pub gamma_d: f64,
}

impl LambdaParams {
    pub fn new(omega_s: C64, omega_r: C64, gamma1: f64, gamma2: f64, gamma_d: f64) -> Result<Self> {
        let p = Self {
            omega_s,
            omega_r,
            gamma1,
            gamma2,
            gamma_d,
        };
        p.validate()?;
        Ok(p)
    }

    /// Rates only; fields are zero until [`with_fields`](Self::with_fields).
    pub fn rates(gamma1: f64, gamma2: f64, gamma_d: f64) -> Result<Self> {
        Self::new(ZERO, ZERO, gamma1, gamma2, gamma_d)
    }

    /// Rates with `gamma1 + gamma2 = 1` and `gamma2/gamma1 = branch`.
    pub fn with_branching(branch: f64, gamma_d: f64) -> Result<Self> {
        if !(branch.is_finite() && branch >= 0.0) {
            return Err(Error::invalid(format!("branching ratio {branch} must be finite and ≥ 0")));
        }
        Self::rates(1.0 / (1.0 + branch), branch / (1.0 + branch), gamma_d)
    }

    pub fn with_fields(self, omega_s: C64, omega_r: C64) -> Self {
        Self {
            omega_s,
            omega_r,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_s.re,
            self.omega_s.im,
            self.omega_r.re,
            self.omega_r.im,
            self.gamma1,
            self.gamma2,
            self.gamma_d,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("Λ parameters must be finite"));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 || self.gamma_d < 0.0 {
            return Err(Error::invalid("decay and dephasing rates must be non-negative"));
        }
        Ok(())
    }

    pub fn total_decay(&self) -> f64 {
        self.gamma1 + self.gamma2
    }
}

/// 3×3 density matrix over `(g1, g2, e1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3(Matrix3<C64>);

impl DensityMatrix3 {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-9;

    /// Checked constructor.
    pub fn new(m: Matrix3<C64>) -> Result<Self> {
        let rho = Self(m);
        rho.check()?;
        Ok(rho)
    }

    /// `|k⟩⟨k|`.
    pub fn basis(k: usize) -> Self {
        let mut m = Matrix3::zeros();
        m[(k, k)] = ONE;
        Self(m)
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(psi: [C64; 3]) -> Result<Self> {
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("state vector must be non-zero"));
        }
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = psi[i] * psi[j].conj() / (norm * norm);
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<C64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[(k, k)].re
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let h = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2]]
    }

    pub fn check(&self) -> Result<()> {
        if self.0.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        let herm = (self.0 - self.0.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::invalid(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(Error::invalid(format!("density matrix trace {tr} ≠ 1")));
        }
        let min_ev = self.eigenvalues()[0];
        if min_ev < -Self::EIGEN_TOL {
            return Err(Error::invalid(format!("density matrix eigenvalue {min_ev:e} < 0")));
        }
        Ok(())
    }

    /// Hermitian part with unit trace.
    fn normalized(m: Matrix3<C64>) -> Result<Self> {
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::NumericFailure(format!("state trace collapsed to {tr}")));
        }
        Ok(Self(h / C64::new(tr, 0.0)))
    }

    fn to_vec(self) -> Vec9 {
        // column stacking: index i + 3j holds ρ_ij
        Vec9::from_iterator(self.0.iter().copied())
    }

    fn from_vec(v: &Vec9) -> Matrix3<C64> {
        Matrix3::from_iterator(v.iter().copied())
    }
}

fn finite_matrix(m: &Matrix3<C64>) -> bool {
    m.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Right-hand side `dρ/dt`.
pub fn generator(p: &LambdaParams, rho: &Matrix3<C64>) -> Matrix3<C64> {
    let i = C64::new(0.0, 1.0);
    let half = C64::new(0.5, 0.0);
    let mut h = Matrix3::zeros();
    h[(E1, G1)] = half * p.omega_r;
    h[(E1, G2)] = half * p.omega_s;
    h[(G1, E1)] = h[(E1, G1)].conj();
    h[(G2, E1)] = h[(E1, G2)].conj();

    let mut d = (h * rho - rho * h) * (-i);

    // spontaneous decay e1 → g1, e1 → g2
    let pe = rho[(E1, E1)];
    let gsum = p.gamma1 + p.gamma2;
    d[(G1, G1)] += p.gamma1 * pe;
    d[(G2, G2)] += p.gamma2 * pe;
    d[(E1, E1)] -= gsum * pe;
    for k in [G1, G2] {
        d[(k, E1)] -= 0.5 * gsum * rho[(k, E1)];
        d[(E1, k)] -= 0.5 * gsum * rho[(E1, k)];
    }

    // uniform dephasing of all coherences
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                d[(a, b)] -= p.gamma_d * rho[(a, b)];
            }
        }
    }
    d
}

/// Superoperator of [`generator`] on column-stacked density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian(Mat9);

impl Liouvillian {
    pub fn matrix(&self) -> &SMatrix<C64, 9, 9> {
        &self.0
    }

    pub fn apply(&self, rho: &DensityMatrix3) -> Matrix3<C64> {
        DensityMatrix3::from_vec(&(self.0 * rho.to_vec()))
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Dimension of the numerical null space.
    pub fn null_dimension(&self) -> usize {
        let s = self.singular_values();
        let cut = NULL_RTOL * s[0].max(1.0);
        s.iter().filter(|&&x| x <= cut).count()
    }

    /// One classical RK4 step as a matrix: `Σ_{k≤4} (hL)^k / k!`.
    fn rk4_propagator(&self, h: f64) -> Mat9 {
        let hl = self.0 * C64::new(h, 0.0);
        let mut term = Mat9::identity();
        let mut acc = Mat9::identity();
        for k in 1..=4 {
            term = term * hl / C64::new(k as f64, 0.0);
            acc += term;
        }
        acc
    }
}

const NULL_RTOL: f64 = 1e-12;

pub fn build_liouvillian(p: &LambdaParams) -> Liouvillian {
    let mut l = Mat9::zeros();
    for col in 0..9 {
        let mut e = Matrix3::zeros();
        e[(col % 3, col / 3)] = ONE;
        let d = generator(p, &e);
        for (row, v) in d.iter().enumerate() {
            l[(row, col)] = *v;
        }
    }
    Liouvillian(l)
}

fn rk4_step(p: &LambdaParams, rho: &Matrix3<C64>, h: f64) -> Matrix3<C64> {
    let c = |x: f64| C64::new(x, 0.0);
    let k1 = generator(p, rho);
    let k2 = generator(p, &(rho + k1 * c(0.5 * h)));
    let k3 = generator(p, &(rho + k2 * c(0.5 * h)));
    let k4 = generator(p, &(rho + k3 * c(h)));
    rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0)
}

/// Integrate from `rho0` for time `t` with classical RK4 steps of at most `dt`.
pub fn evolve(p: &LambdaParams, rho0: &DensityMatrix3, t: f64, dt: f64) -> Result<DensityMatrix3> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("step dt = {dt} must be positive")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("duration t = {t} must be non-negative")));
    }
    if t == 0.0 {
        return Ok(*rho0);
    }
    let steps = (t / dt).ceil() as u64;
    let h = t / steps as f64;
    let mut rho = rho0.0;
    for k in 0..steps {
        rho = rk4_step(p, &rho, h);
        if k % 1024 == 0 && !finite_matrix(&rho) {
            return Err(Error::NumericFailure(format!("non-finite state at step {k}")));
        }
    }
    if !finite_matrix(&rho) {
        return Err(Error::NumericFailure("non-finite state after integration".into()));
    }
    DensityMatrix3::normalized(rho)
}

/// How a steady state was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SteadyMethod {
    /// One-dimensional null space; solved directly.
    NullSpace,
    /// Degenerate null space; RK4 integration from `|g1⟩⟨g1|`.
    Integration { steps: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub rho: DensityMatrix3,
    pub method: SteadyMethod,
    /// `‖L ρ‖` of the returned state.
    pub residual: f64,
}

/// Long-time limit of the evolution started from `|g1⟩⟨g1|`.
pub fn steady_state(p: &LambdaParams) -> Result<DensityMatrix3> {
    steady_state_detailed(p).map(|s| s.rho)
}

/// [`steady_state`] with solver diagnostics.
pub fn steady_state_detailed(p: &LambdaParams) -> Result<SteadyState> {
    p.validate()?;
    let l = build_liouvillian(p);
    if l.null_dimension() == 1 {
        if let Some(s) = null_space_state(&l) {
            return Ok(s);
        }
    }
    integrate_to_steady(&l, DEFAULT_DT, MAX_STEADY_STEPS)
}

fn residual_norm(l: &Liouvillian, v: &Vec9) -> f64 {
    (l.0 * v).norm()
}

fn null_space_state(l: &Liouvillian) -> Option<SteadyState> {
    // rows of ρ_00, ρ_11, ρ_22 sum to zero, so one of them may be swapped for
    // the trace condition
    let mut a = l.0;
    let mut b = Vec9::zeros();
    for c in 0..9 {
        a[(0, c)] = ZERO;
    }
    for k in [0, 4, 8] {
        a[(0, k)] = ONE;
    }
    b[0] = ONE;
    let v = a.lu().solve(&b)?;
    if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return None;
    }
    let rho = DensityMatrix3::normalized(DensityMatrix3::from_vec(&v)).ok()?;
    let residual = residual_norm(l, &rho.to_vec());
    if residual > STEADY_TOLERANCE || rho.eigenvalues()[0] < -DensityMatrix3::EIGEN_TOL {
        return None;
    }
    Some(SteadyState {
        rho,
        method: SteadyMethod::NullSpace,
        residual,
    })
}

/// RK4 from `|g1⟩⟨g1|` until `‖dρ/dt‖ ≤ STEADY_TOLERANCE`. The propagator is
/// time-independent, so blocks of `2^k` steps are taken by repeated squaring of
/// the one-step matrix; the state visited after `m` steps is the same as
/// stepping `m` times.
fn integrate_to_steady(l: &Liouvillian, dt: f64, max_steps: u64) -> Result<SteadyState> {
    let mut block = l.rk4_propagator(dt);
    let mut block_len: u64 = 1;
    let mut v = DensityMatrix3::basis(G1).to_vec();
    let mut steps: u64 = 0;
    let mut residual = residual_norm(l, &v);
    while residual > STEADY_TOLERANCE {
        if steps + block_len > max_steps {
            return Err(Error::ConvergenceFailure {
                message: format!("no steady state within {max_steps} RK4 steps"),
                residual,
            });
        }
        v = block * v;
        steps += block_len;
        if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NumericFailure(format!("non-finite state after {steps} steps")));
        }
        // renormalize the trace to keep round-off from accumulating
        let tr = v[0] + v[4] + v[8];
        v /= tr;
        residual = residual_norm(l, &v);
        block = block * block;
        block_len *= 2;
    }
    let rho = DensityMatrix3::normalized(DensityMatrix3::from_vec(&v))?;
    Ok(SteadyState {
        rho,
        method: SteadyMethod::Integration { steps },
        residual,
    })
}

/// Step B: all `g2` population and the `gamma2` share of `e1` leave for the
/// reservoir. Returns the probability of remaining in `g1`.
pub fn quench_retention(rho: &DensityMatrix3, gamma1: f64, gamma2: f64) -> Result<f64> {
    if gamma1 < 0.0 || gamma2 < 0.0 || !(gamma1 + gamma2).is_finite() {
        return Err(Error::invalid("decay rates must be finite and non-negative"));
    }
    let pe = rho.population(E1);
    let from_excited = if gamma1 + gamma2 > 0.0 {
        gamma1 / (gamma1 + gamma2) * pe
    } else if pe > 0.0 {
        return Err(Error::invalid(
            "excited population with no decay channel has no branching ratio",
        ));
    } else {
        0.0
    };
    Ok((rho.population(G1) + from_excited).clamp(0.0, 1.0))
}

/// Retained `g1` probability after one exposure with fields `(s, r)`: steady
/// state from `|g1⟩⟨g1|`, then the quench.
pub fn unit_step_retention(s: C64, r: C64, p: &LambdaParams) -> Result<f64> {
    p.validate()?;
    if s == ZERO && r == ZERO {
        return Ok(1.0);
    }
    let rho = steady_state(&p.with_fields(s, r))?;
    quench_retention(&rho, p.gamma1, p.gamma2)
}

/// `|s|² / (|s|² + |r|²)`, the decoherence-free retention.
pub fn ideal_retention(s: C64, r: C64) -> f64 {
    let (a, b) = (s.norm_sqr(), r.norm_sqr());
    if a + b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}
