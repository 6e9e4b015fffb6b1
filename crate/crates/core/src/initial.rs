//! Admissible initial profiles w₀ on [0, ψ⁰(0)].
//!
//! The marching theory needs w₀ to satisfy two corner conditions: at the left
//! end the residual ν(0)²√w₀·w₀″ + 2(ψ⁰(0) − ψ) must vanish like O(ψ), and at
//! the right end w₀ must vanish quadratically with coefficient a(0)². Neither
//! is generic, so the default profile is built analytically: a three-term left
//! expansion Bψ + Aψ^{3/2} + Cψ² whose coefficients kill the constant and √ψ
//! terms of the residual, blended into the exact quadratic right piece.

use crate::cubic::{root_a, RootError};
use crate::ode::{manifold_w, phi_third, OdeError, OdeSolution};
use crate::profiles::GyreSetup;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InitialError {
    #[error("assembled profile not strictly positive: w0({psi}) = {value} (blend window ({a}, {b}))")]
    NotPositive { psi: f64, value: f64, a: f64, b: f64 },
    #[error("argument {s} outside (0, {psi00})")]
    OutOfRange { s: f64, psi00: f64 },
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Common interface for initial data; the solver and the barriers only need
/// point evaluations and the compatibility combination √w₀·w₀″.
pub trait InitialData: Send + Sync {
    fn w0(&self, psi: f64) -> f64;
    fn w0_p(&self, psi: f64) -> f64;
    fn w0_pp(&self, psi: f64) -> f64;
    /// ψ⁰(0), the right end of the support.
    fn psi0_at_origin(&self) -> f64;
    /// ‖w₀‖_∞.
    fn sup_norm(&self) -> f64;
    /// √w₀(ψ)·w₀″(ψ). The default multiplies the point values; implementations
    /// with a 0/0 structure at an endpoint override with the exact product.
    fn sqrt_w0_times_w0_pp(&self, psi: f64) -> f64 {
        self.w0(psi).max(0.0).sqrt() * self.w0_pp(psi)
    }
}

/// μ(s) = ν(0)²√(w₀(s))·w₀″(s) + 2(ψ⁰(0) − s), the left-compatibility
/// residual that drives the regularized left boundary data.
pub fn mu_of(profile: &dyn InitialData, setup: &GyreSetup, s: f64) -> Result<f64, InitialError> {
    let psi00 = profile.psi0_at_origin();
    if !(s > 0.0 && s < psi00) {
        return Err(InitialError::OutOfRange { s, psi00 });
    }
    let nu0 = setup.nu_of(0.0).map_err(|_| InitialError::OutOfRange { s, psi00 })?;
    Ok(nu0 * nu0 * profile.sqrt_w0_times_w0_pp(s) + 2.0 * (psi00 - s))
}

/// The default analytic profile: left piece Bψ + Aψ^{3/2} + Cψ², right piece
/// a(0)²(ψ⁰(0) − ψ)², quintic-smooth blend over (ψ_a, ψ_b).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialProfile {
    pub b_left: f64,
    pub a_three_halves: f64,
    pub c_quadratic: f64,
    pub blend_window: (f64, f64),
    pub right_coefficient: f64,
    pub psi00: f64,
}

/// Quintic smoothstep and its first two derivatives on [0, 1].
fn smoothstep5(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = t * t;
    let s = t2 * t * (10.0 - 15.0 * t + 6.0 * t2);
    let ds = 30.0 * t2 * (1.0 - 2.0 * t + t2);
    let d2s = 60.0 * t * (1.0 - 3.0 * t + 2.0 * t2);
    (s, ds, d2s)
}

impl InitialProfile {
    fn left(&self, psi: f64) -> (f64, f64, f64) {
        let r = psi.max(0.0).sqrt();
        let v = self.b_left * psi + self.a_three_halves * psi * r + self.c_quadratic * psi * psi;
        let d = self.b_left + 1.5 * self.a_three_halves * r + 2.0 * self.c_quadratic * psi;
        let d2 = if r > 0.0 {
            0.75 * self.a_three_halves / r + 2.0 * self.c_quadratic
        } else {
            f64::INFINITY * self.a_three_halves.signum()
        };
        (v, d, d2)
    }

    fn right(&self, psi: f64) -> (f64, f64, f64) {
        let d = self.psi00 - psi;
        let k = self.right_coefficient;
        (k * d * d, -2.0 * k * d, 2.0 * k)
    }

    fn eval(&self, psi: f64) -> (f64, f64, f64) {
        let (pa, pb) = self.blend_window;
        if psi <= pa {
            return self.left(psi);
        }
        if psi >= pb {
            return self.right(psi);
        }
        let h = pb - pa;
        let t = (psi - pa) / h;
        let (s, ds, d2s) = smoothstep5(t);
        let ds = ds / h;
        let d2s = d2s / (h * h);
        let (lv, ld, ld2) = self.left(psi);
        let (rv, rd, rd2) = self.right(psi);
        let v = (1.0 - s) * lv + s * rv;
        let d = (1.0 - s) * ld + s * rd + ds * (rv - lv);
        let d2 = (1.0 - s) * ld2 + s * rd2 + 2.0 * ds * (rd - ld) + d2s * (rv - lv);
        (v, d, d2)
    }
}

impl InitialData for InitialProfile {
    fn w0(&self, psi: f64) -> f64 {
        self.eval(psi).0
    }
    fn w0_p(&self, psi: f64) -> f64 {
        self.eval(psi).1
    }
    fn w0_pp(&self, psi: f64) -> f64 {
        self.eval(psi).2
    }
    fn psi0_at_origin(&self) -> f64 {
        self.psi00
    }
    fn sup_norm(&self) -> f64 {
        let n = 100_000;
        (0..=n)
            .map(|k| self.w0(self.psi00 * k as f64 / n as f64))
            .fold(0.0, f64::max)
    }
}

/// Compute the compatible coefficients A and C for a given slope B and
/// assemble the blended profile, shrinking the blend window toward the left
/// until the result is strictly positive on the open interval.
pub fn build_default_w0(setup: &GyreSetup, b: f64) -> Result<InitialProfile, InitialError> {
    assert!(b > 0.0, "slope B must be positive");
    let psi00 = setup.psi0.value(0.0);
    let nu0 = setup.nu_unchecked(0.0);
    let a0 = root_a(setup, 0.0)?.a;
    // Killing the constant term of ν²√w₀·w₀″ + 2(ψ⁰(0) − ψ) as ψ → 0 forces
    // (3/4)ν²A√B = −2ψ⁰(0); killing the √ψ term then fixes C.
    let a_coef = -8.0 * psi00 / (3.0 * nu0 * nu0 * b.sqrt());
    let c_coef = -3.0 * a_coef * a_coef / (16.0 * b);
    let mut window = (0.25 * psi00, 0.75 * psi00);
    let mut last_failure = (0.0, 0.0);
    for _ in 0..60 {
        let profile = InitialProfile {
            b_left: b,
            a_three_halves: a_coef,
            c_quadratic: c_coef,
            blend_window: window,
            right_coefficient: a0 * a0,
            psi00,
        };
        let n = 100_000;
        let mut ok = true;
        for k in 1..n {
            let psi = psi00 * k as f64 / n as f64;
            let v = profile.w0(psi);
            if v <= 0.0 {
                ok = false;
                last_failure = (psi, v);
                break;
            }
        }
        if ok {
            return Ok(profile);
        }
        window = (0.7 * window.0, 0.7 * window.1);
    }
    Err(InitialError::NotPositive {
        psi: last_failure.0,
        value: last_failure.1,
        a: window.0,
        b: window.1,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// Log-log slope of the left residual over ψ ∈ [1e−6, 1e−2].
    pub left_slope: f64,
    pub left_pass: bool,
    /// Relative error of w₀/(ψ⁰(0)−ψ)² against a(0)² over the last 1%.
    pub right_ratio_error: f64,
    pub right_pass: bool,
    pub passed: bool,
}

/// Measure both corner conditions; failures are data, not errors.
pub fn compatibility_report(
    profile: &dyn InitialData,
    setup: &GyreSetup,
    a0_sq: f64,
) -> CompatibilityReport {
    let psi00 = profile.psi0_at_origin();
    let nu0 = setup.nu_unchecked(0.0);
    // Left: residual sampled log-uniformly, least-squares slope in log-log.
    let mut pts = Vec::new();
    let n = 40;
    for k in 0..n {
        let psi = 1e-6 * (1e-2f64 / 1e-6).powf(k as f64 / (n - 1) as f64);
        let r = nu0 * nu0 * profile.sqrt_w0_times_w0_pp(psi) + 2.0 * (psi00 - psi);
        if r.abs() > 0.0 {
            pts.push((psi.ln(), r.abs().ln()));
        }
    }
    let left_slope = crate::ode::least_squares_slope(&pts);
    let left_pass = left_slope >= 0.95;
    // Right: ratio over the last 1% of the interval.
    let mut worst = 0f64;
    for k in 1..=32 {
        let d = 0.01 * psi00 * k as f64 / 32.0;
        let ratio = profile.w0(psi00 - d) / (d * d);
        worst = worst.max((ratio - a0_sq).abs() / a0_sq);
    }
    let right_pass = worst <= 1e-3;
    CompatibilityReport {
        left_slope,
        left_pass,
        right_ratio_error: worst,
        right_pass,
        passed: left_pass && right_pass,
    }
}

/// Initial data on the separable manifold: w₀(ψ) = ψ⁰(0)²·φ′(φ⁻¹(ψ/ψ⁰(0)))².
/// Used to initialize the oracle benchmark; the 0/0 combination √w₀·w₀″ has
/// the exact closed form 2ψ⁰(0)·φ‴.
#[derive(Debug, Clone)]
pub struct SeparableProfile {
    pub sol: OdeSolution,
    pub psi00: f64,
}

impl SeparableProfile {
    pub fn new(sol: OdeSolution, psi00: f64) -> Result<Self, InitialError> {
        if !sol.monotone {
            return Err(InitialError::Ode(OdeError::NotMonotone));
        }
        Ok(Self { sol, psi00 })
    }

    fn xi_at(&self, psi: f64) -> f64 {
        self.sol
            .phi_inverse((psi / self.psi00).clamp(0.0, 1.0))
            .expect("monotone checked at construction")
    }
}

impl InitialData for SeparableProfile {
    fn w0(&self, psi: f64) -> f64 {
        manifold_w(&self.sol, self.psi00, psi).expect("monotone checked at construction")
    }

    fn w0_p(&self, psi: f64) -> f64 {
        let (_, _, d2) = self.sol.sample(self.xi_at(psi));
        2.0 * self.psi00 * d2
    }

    fn w0_pp(&self, psi: f64) -> f64 {
        let (p, dp, d2) = self.sol.sample(self.xi_at(psi));
        let d3 = phi_third(self.sol.alpha_param, p, dp, d2);
        2.0 * d3 / dp
    }

    fn psi0_at_origin(&self) -> f64 {
        self.psi00
    }

    fn sup_norm(&self) -> f64 {
        let g = self
            .sol
            .dphi
            .iter()
            .map(|d| d * d)
            .fold(0.0, f64::max);
        self.psi00 * self.psi00 * g
    }

    fn sqrt_w0_times_w0_pp(&self, psi: f64) -> f64 {
        let (p, dp, d2) = self.sol.sample(self.xi_at(psi));
        2.0 * self.psi00 * phi_third(self.sol.alpha_param, p, dp, d2)
    }
}
