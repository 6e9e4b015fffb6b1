//! The separable-profile ODE φ‴ = λ₀α((φ′)² − φφ″) + φ − 1 with φ(0) = φ′(0) = 0
//! and φ → 1 far downstream.
//!
//! Shooting on φ″(0) uses a Robin far-field condition φ′(Ξ) = a(1 − φ(Ξ))
//! that projects out the growing mode of the linearisation; plain φ(Ξ) = 1
//! shooting is ill-conditioned because of that unstable manifold. The
//! converged solution doubles as the separable von Mises manifold used as the
//! marching oracle.

use crate::cubic::scaled_roots;
use crate::profiles::KAPPA_ROOT_THRESHOLD;
use ode_solvers::dop853::Dop853;
use ode_solvers::{System, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default far-field truncation. Large enough for the slowest admissible decay
/// rates to reach the 1e-6 residual floor, small enough that the unstable mode
/// does not amplify double-precision noise past it.
pub const DEFAULT_XI_MAX: f64 = 30.0;
pub const DEFAULT_ODE_TOL: f64 = 1e-12;

/// Threshold below which φ′ sign changes are recorded (skips the trivial zero
/// at ξ = 0).
const SIGN_EVENT_THRESHOLD: f64 = 1e-12;
const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("solution blew up (|phi| > {limit:.0e}) near xi = {xi}")]
    BlowUp { xi: f64, limit: f64, sign: f64 },
    #[error("no shooting bracket found for phi''(0) in [0, 10]")]
    NoConvergence,
    #[error("bad threshold bracket: lo = {lo} (monotone: {lo_monotone}), hi = {hi} (monotone: {hi_monotone})")]
    BadBracket {
        lo: f64,
        hi: f64,
        lo_monotone: bool,
        hi_monotone: bool,
    },
    #[error("solution is not monotone; the separable manifold is undefined")]
    NotMonotone,
    #[error("integrator failure: {0}")]
    Integrator(String),
}

/// A solved profile on a uniform ξ grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeSolution {
    /// λ₀α, the inertia/slope product.
    pub alpha_param: f64,
    pub xi: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    /// φ″(0) used to produce this solution.
    pub shoot_value: f64,
    /// φ′ ≥ 0 throughout (no recirculation).
    pub monotone: bool,
    /// Location of the first sign change of φ′ past ξ = 0, if any.
    pub first_sign_change: Option<f64>,
    /// |φ(Ξ) − 1| at the far end.
    pub far_residual: f64,
}

struct Rhs {
    alpha: f64,
}

impl System<f64, Vector3<f64>> for Rhs {
    fn system(&self, _x: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        dy[0] = y[1];
        dy[1] = y[2];
        dy[2] = self.alpha * (y[1] * y[1] - y[0] * y[2]) + y[0] - 1.0;
    }

    fn solout(&mut self, _x: f64, y: &Vector3<f64>, _dy: &Vector3<f64>) -> bool {
        y[0].abs() > BLOWUP_LIMIT
    }
}

/// φ‴ from the equation itself, used where a third derivative is needed
/// without finite differencing.
pub fn phi_third(alpha_param: f64, phi: f64, dphi: f64, d2phi: f64) -> f64 {
    alpha_param * (dphi * dphi - phi * d2phi) + phi - 1.0
}

/// Integrate the third-order system from (0, 0, `shoot_value`) up to `xi_max`
/// with local tolerance `tol`, on a dense output grid.
pub fn integrate_ode(
    alpha_param: f64,
    shoot_value: f64,
    xi_max: f64,
    tol: f64,
) -> Result<OdeSolution, OdeError> {
    assert!(xi_max > 0.0 && tol > 0.0);
    let n_out = 4000usize;
    let dx = xi_max / n_out as f64;
    let y0 = Vector3::new(0.0, 0.0, shoot_value);
    let mut solver = Dop853::new(Rhs { alpha: alpha_param }, 0.0, xi_max, dx, y0, tol, tol * 1e-2);
    if let Err(e) = solver.integrate() {
        // The quadratic nonlinearity blows up in finite time for off-target
        // shoot values; the integrator reports that as stiffness or step-size
        // underflow before |φ| crosses the hard limit. Classify by the last
        // recorded state so the shooting bracket keeps its orientation.
        let (last_x, last_phi) = solver
            .x_out()
            .last()
            .copied()
            .zip(solver.y_out().last().map(|v| v[0]))
            .unwrap_or((0.0, 0.0));
        if last_phi.abs() > 10.0 {
            return Err(OdeError::BlowUp {
                xi: last_x,
                limit: BLOWUP_LIMIT,
                sign: last_phi.signum(),
            });
        }
        return Err(OdeError::Integrator(format!("{e:?}")));
    }
    let xi: Vec<f64> = solver.x_out().clone();
    let phi: Vec<f64> = solver.y_out().iter().map(|v| v[0]).collect();
    let dphi: Vec<f64> = solver.y_out().iter().map(|v| v[1]).collect();
    let d2phi: Vec<f64> = solver.y_out().iter().map(|v| v[2]).collect();
    if let Some(&last) = phi.last() {
        if last.abs() > BLOWUP_LIMIT {
            return Err(OdeError::BlowUp {
                xi: *xi.last().unwrap(),
                limit: BLOWUP_LIMIT,
                sign: last.signum(),
            });
        }
    }
    let first_sign_change = locate_sign_change(&xi, &dphi, &d2phi);
    let min_dphi = dphi[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    let monotone = min_dphi >= -1e-10;
    let far_residual = (phi.last().unwrap() - 1.0).abs();
    Ok(OdeSolution {
        alpha_param,
        xi,
        phi,
        dphi,
        d2phi,
        shoot_value,
        monotone,
        first_sign_change,
        far_residual,
    })
}

/// First downward zero crossing of φ′ past ξ = 0: linear interpolation seeds
/// a Newton refinement on the Hermite interpolant of (φ′, φ″).
fn locate_sign_change(xi: &[f64], dphi: &[f64], d2phi: &[f64]) -> Option<f64> {
    for i in 1..dphi.len() {
        if dphi[i] < -SIGN_EVENT_THRESHOLD && dphi[i - 1] >= -SIGN_EVENT_THRESHOLD {
            let h = xi[i] - xi[i - 1];
            let (d0, d1) = (dphi[i - 1], dphi[i]);
            let mut t = if (d1 - d0).abs() > 0.0 {
                d0 / (d0 - d1)
            } else {
                0.0
            };
            for _ in 0..8 {
                let (v, dv) =
                    hermite_with_deriv(d0, d1, d2phi[i - 1] * h, d2phi[i] * h, t);
                if dv.abs() < f64::MIN_POSITIVE {
                    break;
                }
                let step = v / dv;
                t = (t - step).clamp(0.0, 1.0);
                if step.abs() < 1e-15 {
                    break;
                }
            }
            return Some(xi[i - 1] + t * h);
        }
    }
    None
}

/// The explicit λ₀α = 0 solution of φ‴ = φ − 1 with φ(0) = φ′(0) = 0 and
/// boundedness: φ = 1 − (2/√3)e^{−ξ/2}cos(√3ξ/2 − π/6). Returns (φ, φ′).
pub fn linear_closed_form(xi: f64) -> (f64, f64) {
    let s3 = 3f64.sqrt();
    let damp = (-xi / 2.0).exp();
    let phi = 1.0 - (2.0 / s3) * damp * (s3 * xi / 2.0 - std::f64::consts::PI / 6.0).cos();
    let dphi = (2.0 / s3) * damp * (s3 * xi / 2.0).sin();
    (phi, dphi)
}

/// One trial integration in the shooting loop: either it survived to Ξ with a
/// finite Robin mismatch, or the quadratic nonlinearity blew it up in finite
/// time with a definite direction.
enum Trial {
    Finite { g: f64, sol: Box<OdeSolution> },
    Blown { xi: f64, sign: f64 },
}

impl Trial {
    /// Bracket orientation: the mismatch sign for survivors, the blow-up
    /// direction otherwise. Both track the sign of the unstable-mode
    /// coefficient near the connecting orbit.
    fn sign(&self) -> f64 {
        match self {
            Trial::Finite { g, .. } => g.signum(),
            Trial::Blown { sign, .. } => *sign,
        }
    }

    /// How far the trajectory got before leaving the manifold; diverges
    /// logarithmically at the connecting orbit, so it localises the true root
    /// among spurious sign changes of the blow-up direction.
    fn survival(&self, xi_max: f64) -> f64 {
        match self {
            Trial::Finite { .. } => xi_max,
            Trial::Blown { xi, .. } => *xi,
        }
    }
}

/// Find φ″(0) by bracketing bisection on the far-field mismatch.
///
/// Above the root threshold the mismatch is the Robin quantity
/// φ′(Ξ) − a(1 − φ(Ξ)) with a the smallest positive root of p_α; below it the
/// plain far mismatch φ(Ξ) − 1 is used. Off-target trials blow up in finite
/// time; the blow-up direction orients the bracket and the blow-up time picks
/// the bracket nearest the connecting orbit. The returned trajectory is cut at
/// its closest approach to the rest state so amplified round-off on the
/// unstable mode never contaminates the far residual.
pub fn shoot(alpha_param: f64, xi_max: f64, tol: f64) -> Result<OdeSolution, OdeError> {
    assert!(alpha_param >= 0.0);
    let robin_a = if alpha_param >= KAPPA_ROOT_THRESHOLD {
        Some(scaled_roots(alpha_param).expect("above threshold").0)
    } else {
        None
    };
    let mismatch = |sol: &OdeSolution| -> f64 {
        let phi_end = *sol.phi.last().unwrap();
        let dphi_end = *sol.dphi.last().unwrap();
        match robin_a {
            Some(a) => dphi_end - a * (1.0 - phi_end),
            None => phi_end - 1.0,
        }
    };
    let eval = |s: f64| -> Result<Trial, OdeError> {
        match integrate_ode(alpha_param, s, xi_max, tol) {
            Ok(sol) => {
                let g = mismatch(&sol);
                Ok(Trial::Finite {
                    g,
                    sol: Box::new(sol),
                })
            }
            Err(OdeError::BlowUp { xi, sign, .. }) => Ok(Trial::Blown { xi, sign }),
            Err(e) => Err(e),
        }
    };
    // Phase 1: zoom on the connecting orbit by maximising survival time. The
    // blow-up time diverges logarithmically at the orbit, so each tenfold
    // refinement of the sample spacing gains a fixed increment of survival
    // until trials start reaching Ξ. The blow-up direction alone cannot
    // bracket below the root threshold, where the approach is oscillatory.
    let mut center = 5.0;
    let mut half_width = 5.0;
    let mut level: Option<Vec<(f64, Trial)>> = None;
    for _ in 0..20 {
        let mut samples = Vec::with_capacity(21);
        let mut peak = (center, f64::NEG_INFINITY);
        let mut any_finite = false;
        for k in -10i32..=10 {
            let s = center + half_width * k as f64 / 10.0;
            if s < 0.0 {
                continue;
            }
            let t = eval(s)?;
            let surv = t.survival(xi_max);
            if surv > peak.1 {
                peak = (s, surv);
            }
            any_finite |= matches!(t, Trial::Finite { .. });
            samples.push((s, t));
        }
        if any_finite {
            level = Some(samples);
            break;
        }
        center = peak.0;
        half_width /= 10.0;
        if half_width < 1e-15 * center.max(1.0) {
            break;
        }
    }
    let level = level.ok_or(OdeError::NoConvergence)?;
    // Phase 2: bracket a sign change of the mismatch within the refined
    // window, preferring a pair of surviving trials, and bisect.
    let mut bracket: Option<(f64, f64, f64)> = None;
    let mut best: Option<(f64, Box<OdeSolution>)> = None;
    for pair in level.windows(2) {
        let (s0, t0) = &pair[0];
        let (s1, t1) = &pair[1];
        if t0.sign() * t1.sign() <= 0.0 {
            let both = matches!(t0, Trial::Finite { .. }) && matches!(t1, Trial::Finite { .. });
            if both || bracket.is_none() {
                bracket = Some((*s0, *s1, t0.sign()));
            }
        }
    }
    for (_, t) in level {
        if let Trial::Finite { g, sol } = t {
            if best.as_ref().map_or(true, |(gb, _)| g.abs() < gb.abs()) {
                best = Some((g, sol));
            }
        }
    }
    if let Some((mut lo, mut hi, mut sign_lo)) = bracket {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let trial = eval(mid)?;
            let sign_mid = trial.sign();
            if let Trial::Finite { g, sol } = trial {
                if best.as_ref().map_or(true, |(gb, _)| g.abs() < gb.abs()) {
                    best = Some((g, sol));
                }
            }
            if sign_mid * sign_lo <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                sign_lo = sign_mid;
            }
        }
    }
    // Phase 3: Newton polish on the finite mismatch with a one-sided
    // difference slope. The mismatch slope is the amplified unstable mode, so
    // a few steps reach the round-off floor of φ″(0).
    if let Some((g0, sol0)) = &best {
        let (mut s_cur, mut g_cur) = (sol0.shoot_value, *g0);
        for _ in 0..10 {
            let ds = 1e-12 * s_cur.abs().max(1.0);
            let g_probe = match eval(s_cur + ds)? {
                Trial::Finite { g, .. } => g,
                Trial::Blown { .. } => break,
            };
            let slope = (g_probe - g_cur) / ds;
            if !slope.is_finite() || slope.abs() < f64::MIN_POSITIVE {
                break;
            }
            let s_next = s_cur - g_cur / slope;
            if !s_next.is_finite() || s_next < 0.0 {
                break;
            }
            match eval(s_next)? {
                Trial::Finite { g, sol } => {
                    if g.abs() < best.as_ref().unwrap().0.abs() {
                        best = Some((g, sol));
                    }
                    if (s_next - s_cur).abs() <= f64::EPSILON * s_cur.abs() {
                        break;
                    }
                    s_cur = s_next;
                    g_cur = g;
                }
                Trial::Blown { .. } => break,
            }
        }
    }
    let sol = best.ok_or(OdeError::NoConvergence)?.1;
    Ok(truncate_at_closest_approach(*sol))
}

/// Cut a shot trajectory at its closest approach to (φ, φ′) = (1, 0) and
/// refresh the derived flags. Past that point the unstable mode has taken
/// over and the samples carry no manifold information.
fn truncate_at_closest_approach(mut sol: OdeSolution) -> OdeSolution {
    let mut j = sol.phi.len() - 1;
    let mut m = f64::INFINITY;
    for i in 0..sol.phi.len() {
        let d = (sol.phi[i] - 1.0).abs() + sol.dphi[i].abs();
        if d < m {
            m = d;
            j = i;
        }
    }
    sol.xi.truncate(j + 1);
    sol.phi.truncate(j + 1);
    sol.dphi.truncate(j + 1);
    sol.d2phi.truncate(j + 1);
    let min_dphi = sol.dphi[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    sol.monotone = min_dphi >= -1e-10;
    sol.first_sign_change = locate_sign_change(&sol.xi, &sol.dphi, &sol.d2phi);
    sol.far_residual = (sol.phi.last().unwrap() - 1.0).abs();
    sol
}

/// Bisection for the critical λ₀α below which the shot profile loses
/// monotonicity. The output is reported, never asserted against a target.
pub fn threshold_scan(lo: f64, hi: f64, bisection_tol: f64) -> Result<f64, OdeError> {
    if !(lo < hi) || bisection_tol <= 0.0 {
        return Err(OdeError::BadBracket {
            lo,
            hi,
            lo_monotone: false,
            hi_monotone: false,
        });
    }
    let probe = |alpha: f64| -> Result<bool, OdeError> {
        Ok(shoot(alpha, DEFAULT_XI_MAX, DEFAULT_ODE_TOL)?.monotone)
    };
    let lo_monotone = probe(lo)?;
    let hi_monotone = probe(hi)?;
    if lo_monotone || !hi_monotone {
        return Err(OdeError::BadBracket {
            lo,
            hi,
            lo_monotone,
            hi_monotone,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > bisection_tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares decay rate of 1 − φ over the window where it lies in
/// `[lo, hi]`; returns the positive rate.
pub fn fitted_decay_rate(sol: &OdeSolution, lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = sol
        .xi
        .iter()
        .zip(&sol.phi)
        .filter(|(_, &p)| {
            let d = 1.0 - p;
            d > lo && d < hi
        })
        .map(|(&x, &p)| (x, (1.0 - p).ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    Some(-least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

impl OdeSolution {
    /// ξ such that φ(ξ) = theta, by monotone Hermite interpolation of the
    /// solution grid. Requires a monotone solution and theta in [0, φ(Ξ)].
    pub fn phi_inverse(&self, theta: f64) -> Result<f64, OdeError> {
        if !self.monotone {
            return Err(OdeError::NotMonotone);
        }
        if theta <= 0.0 {
            return Ok(0.0);
        }
        let last = *self.phi.last().unwrap();
        if theta >= last {
            return Ok(*self.xi.last().unwrap());
        }
        // Binary search for the bracketing cell.
        let mut lo = 0usize;
        let mut hi = self.phi.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.phi[mid] <= theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.xi[hi] - self.xi[lo];
        let (f0, f1, d0, d1) = (self.phi[lo], self.phi[hi], self.dphi[lo], self.dphi[hi]);
        // Newton on the cubic Hermite interpolant, seeded linearly.
        let mut t = if (f1 - f0).abs() > 0.0 {
            (theta - f0) / (f1 - f0)
        } else {
            0.5
        };
        for _ in 0..6 {
            let (v, dv) = hermite_with_deriv(f0, f1, d0 * h, d1 * h, t);
            if dv.abs() < f64::MIN_POSITIVE {
                break;
            }
            let step = (v - theta) / dv;
            t -= step;
            t = t.clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        Ok(self.xi[lo] + t * h)
    }

    /// (φ, φ′, φ″) at ξ by cubic Hermite interpolation.
    pub fn sample(&self, xi: f64) -> (f64, f64, f64) {
        let n = self.xi.len();
        let x_last = self.xi[n - 1];
        if xi <= 0.0 {
            return (self.phi[0], self.dphi[0], self.d2phi[0]);
        }
        if xi >= x_last {
            return (self.phi[n - 1], self.dphi[n - 1], self.d2phi[n - 1]);
        }
        let h = x_last / (n - 1) as f64;
        let i = ((xi / h) as usize).min(n - 2);
        let t = (xi - self.xi[i]) / (self.xi[i + 1] - self.xi[i]);
        let hw = self.xi[i + 1] - self.xi[i];
        let (p, _) = hermite_with_deriv(self.phi[i], self.phi[i + 1], self.dphi[i] * hw, self.dphi[i + 1] * hw, t);
        let (dp, _) = hermite_with_deriv(self.dphi[i], self.dphi[i + 1], self.d2phi[i] * hw, self.d2phi[i + 1] * hw, t);
        let d3_0 = phi_third(self.alpha_param, self.phi[i], self.dphi[i], self.d2phi[i]);
        let d3_1 = phi_third(self.alpha_param, self.phi[i + 1], self.dphi[i + 1], self.d2phi[i + 1]);
        let (d2p, _) = hermite_with_deriv(self.d2phi[i], self.d2phi[i + 1], d3_0 * hw, d3_1 * hw, t);
        (p, dp, d2p)
    }
}

/// Cubic Hermite on [0, 1] with endpoint values and scaled derivatives;
/// returns (value, d/dt).
fn hermite_with_deriv(f0: f64, f1: f64, m0: f64, m1: f64, t: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * f0 + h10 * m0 + h01 * f1 + h11 * m1;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let dv = dh00 * f0 + dh10 * m0 + dh01 * f1 + dh11 * m1;
    (v, dv)
}

/// The separable von Mises manifold w = ψ⁰(y)²·φ′(φ⁻¹(ψ/ψ⁰(y)))², the exact
/// solution of the transformed equation for affine traces with a flat
/// coastline. `psi0_y` is the evaluated trace ψ⁰(y).
pub fn manifold_w(sol: &OdeSolution, psi0_y: f64, psi: f64) -> Result<f64, OdeError> {
    if !sol.monotone {
        return Err(OdeError::NotMonotone);
    }
    let theta = psi / psi0_y;
    if theta <= 0.0 {
        return Ok(0.0);
    }
    // Past the resolved grid (or very close to the trace), use the exact
    // asymptotics φ′ ~ a(1 − φ) with a the p_α root.
    let last = *sol.phi.last().unwrap();
    let switch = (1.0f64 - 1e-5).min(last);
    if theta >= switch {
        let a = scaled_roots(sol.alpha_param)
            .map_err(|_| OdeError::NotMonotone)?
            .0;
        let v = a * (1.0 - theta).max(0.0);
        return Ok(psi0_y * psi0_y * v * v);
    }
    let xi = sol.phi_inverse(theta)?;
    let (_, dphi, _) = sol.sample(xi);
    Ok(psi0_y * psi0_y * dphi * dphi)
}
