//! Explicit sub/super-solution functions and numerical sandwich checks.
//!
//! The constructions are existential in origin: validity is proved through
//! "small enough / large enough" parameter choices that are never pinned to
//! numbers. Here the parameters are fixed by explicit recipes (slopes tied to
//! w₀′(0), the mid-zone floor to min w₀) except for the decay rates α₀ and α,
//! which are found by a doubling-ladder search for the smallest admissible
//! value. The deliverable is the ordering of the barriers against the
//! numerical field; the differential inequalities are only spot-checked.

use crate::cubic::{band_constants, root_a, RootError};
use crate::initial::InitialData;
use crate::march::{boundary_left, boundary_right, MarchError, SolutionField};
use crate::profiles::GyreSetup;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("psi = {psi} outside zone III [{lo}, {hi}] at y = {y}")]
    OutsideZone { psi: f64, lo: f64, hi: f64, y: f64 },
    #[error("no admissible alpha0 found on the ladder up to {cap}")]
    NoAdmissibleAlpha { cap: f64 },
    #[error("no feasible left width delta0 (profile too shallow near psi = 0)")]
    NoFeasibleDelta,
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    March(#[from] MarchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Lower,
    Upper,
}

/// All tuned barrier parameters. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierSet {
    pub m_bar: f64,
    /// Blanket sub-solution: A̲, B̲, M̲, α₀, left width δ₀, small constant C⁻.
    pub a_under: f64,
    pub b_under: f64,
    pub m_under: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub c_minus_blanket: f64,
    /// Left super-solution: A⁺, B⁺, growth rate α.
    pub a_plus: f64,
    pub b_plus: f64,
    pub alpha: f64,
    /// Width of the refined zone-III band around a(y).
    pub mu: f64,
    /// Zone III extent: ψ⁰(y) − δ₃ ≤ ψ.
    pub delta3: f64,
    pub eps: f64,
}

/// M̄ = 1 + ‖w₀‖_∞ + Y·sup_y 2ψ⁰/(λ₀ν), the uniform upper barrier.
pub fn blanket_upper(profile: &dyn InitialData, setup: &GyreSetup) -> f64 {
    let n = 1024;
    let mut sup = 0f64;
    for k in 0..=n {
        let y = setup.y_span * k as f64 / n as f64;
        sup = sup.max(2.0 * setup.psi0.value(y) / (setup.lambda0 * setup.nu_unchecked(y)));
    }
    1.0 + profile.sup_norm() + setup.y_span * sup
}

/// Quintic ramp from 1 to 0 over [lo, hi].
fn ramp_down(psi: f64, lo: f64, hi: f64) -> f64 {
    if psi <= lo {
        return 1.0;
    }
    if psi >= hi {
        return 0.0;
    }
    let t = (psi - lo) / (hi - lo);
    1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// The three-zone partition of unity (h_I, h_II, h_III) at (ψ, y): h_I falls
/// over [δ₀, 2δ₀], h_III rises over [ψ⁰(y)−2δ₀, ψ⁰(y)−δ₀].
pub fn partition(bset: &BarrierSet, setup: &GyreSetup, psi: f64, y: f64) -> (f64, f64, f64) {
    let d0 = bset.delta0;
    let psi0 = setup.psi0.value(y);
    let h1 = ramp_down(psi, d0, 2.0 * d0);
    let h3 = 1.0 - ramp_down(psi, psi0 - 2.0 * d0, psi0 - d0);
    (h1, 1.0 - h1 - h3, h3)
}

/// W±_ε(ψ, y) = C²(ψ⁰(y)−ψ−ε)² + (w_r^ε(y) − C²ε²) for a given C(y).
fn w_quad(c: f64, wr: f64, psi0: f64, eps: f64, psi: f64) -> f64 {
    let d = psi0 - psi - eps;
    c * c * d * d + wr - c * c * eps * eps
}

/// Refined zone-III barrier for the requested sign, with C±(y) from the root
/// band at half-width `mu`. Errors outside ψ⁰(y)−δ₃ ≤ ψ ≤ ψ⁰(y)−2ε.
pub fn zone3_eval(
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    psi: f64,
    y: f64,
    sign: Sign,
) -> Result<f64, BarrierError> {
    let psi0 = setup.psi0.value(y);
    let (lo, hi) = (psi0 - bset.delta3, psi0 - 2.0 * bset.eps);
    if psi < lo - 1e-14 || psi > hi + 1e-14 {
        return Err(BarrierError::OutsideZone { psi, lo, hi, y });
    }
    let band = band_constants(setup, y, bset.mu)?;
    let bc = band.band.expect("band_constants fills the band");
    let c = match sign {
        Sign::Lower => bc.c_minus,
        Sign::Upper => bc.c_plus,
    };
    let wr = boundary_right(profile, setup, bset.eps, y)?;
    Ok(w_quad(c, wr, psi0, bset.eps, psi))
}

/// The blanket sub-solution w̄⁻_ε =
/// h_I[w_l^ε + (A̲ψ^{4/3} + B̲ψ)e^{−α₀y}] + h_II·M̲e^{−α₀y} + h_III·W⁻_ε,
/// with the small constant C⁻ in W⁻_ε.
pub fn blanket_sub_eval(
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    psi: f64,
    y: f64,
) -> Result<f64, BarrierError> {
    let (h1, h2, h3) = partition(bset, setup, psi, y);
    let decay = (-bset.alpha0 * y).exp();
    let wl = boundary_left(profile, setup, bset.eps, y)?;
    let part1 = wl + (bset.a_under * psi.powf(4.0 / 3.0) + bset.b_under * psi) * decay;
    let part2 = bset.m_under * decay;
    let part3 = if h3 > 0.0 {
        let wr = boundary_right(profile, setup, bset.eps, y)?;
        w_quad(
            bset.c_minus_blanket,
            wr,
            setup.psi0.value(y),
            bset.eps,
            psi,
        )
    } else {
        0.0
    };
    Ok(h1 * part1 + h2 * part2 + h3 * part3)
}

/// The left super-solution Θ⁺_ε = w_l^ε(y) + (B⁺ψ − A⁺ψ^{4/3})e^{αy}.
pub fn theta_plus(
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    psi: f64,
    y: f64,
) -> Result<f64, BarrierError> {
    let wl = boundary_left(profile, setup, bset.eps, y)?;
    Ok(wl + (bset.b_plus * psi - bset.a_plus * psi.powf(4.0 / 3.0)) * (bset.alpha * y).exp())
}

/// Local-in-y barrier Φ±_ε restarted at y₀: the blanket shape with rate α and
/// the refined W±. Diagnostic evaluator; not part of the sandwich gate.
pub fn phi_local(
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    psi: f64,
    y: f64,
    y0: f64,
    sign: Sign,
) -> Result<f64, BarrierError> {
    let (h1, h2, h3) = partition(bset, setup, psi, y);
    let tau = y - y0;
    match sign {
        Sign::Lower => {
            let decay = (-bset.alpha * tau).exp();
            let wl = boundary_left(profile, setup, bset.eps, y)?;
            let p1 = wl + (bset.a_under * psi.powf(4.0 / 3.0) + bset.b_under * psi) * decay;
            let p2 = bset.m_under * decay;
            let p3 = if h3 > 0.0 {
                let band = band_constants(setup, y, bset.mu)?;
                let wr = boundary_right(profile, setup, bset.eps, y)?;
                w_quad(
                    band.band.unwrap().c_minus,
                    wr,
                    setup.psi0.value(y),
                    bset.eps,
                    psi,
                )
            } else {
                0.0
            };
            Ok(h1 * p1 + h2 * p2 + h3 * p3)
        }
        Sign::Upper => {
            let grow = (bset.alpha * tau).exp();
            let wl = boundary_left(profile, setup, bset.eps, y)?;
            let p1 = wl + (bset.b_plus * psi - bset.a_plus * psi.powf(4.0 / 3.0)) * grow;
            let p2 = bset.m_bar * grow;
            let p3 = if h3 > 0.0 {
                let band = band_constants(setup, y, bset.mu)?;
                let wr = boundary_right(profile, setup, bset.eps, y)?;
                w_quad(
                    band.band.unwrap().c_plus,
                    wr,
                    setup.psi0.value(y),
                    bset.eps,
                    psi,
                )
            } else {
                0.0
            };
            Ok(h1 * p1 + h2 * p2 + h3 * p3)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneViolation {
    pub worst: f64,
    pub at_y: f64,
    pub at_psi: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierReport {
    pub global_lower: ZoneViolation,
    pub global_upper: ZoneViolation,
    pub zone3_lower: ZoneViolation,
    pub zone3_upper: ZoneViolation,
    pub left_upper: ZoneViolation,
    pub tolerance: f64,
    pub passed: bool,
}

fn worst_update(zv: &mut ZoneViolation, violation: f64, y: f64, psi: f64) {
    if violation > zv.worst {
        zv.worst = violation;
        zv.at_y = y;
        zv.at_psi = psi;
    }
}

fn fresh_zone() -> ZoneViolation {
    ZoneViolation {
        worst: f64::NEG_INFINITY,
        at_y: 0.0,
        at_psi: 0.0,
        passed: false,
    }
}

/// Ordering checks of the stored barriers against a marched field:
/// w̄⁻ ≤ w ≤ M̄ globally, W⁻ ≤ w ≤ W⁺ in zone III, and
/// w ≤ Θ⁺ on the left zone ψ ≤ 2δ₀. Violations are signed (positive means
/// the inequality fails); pass iff all ≤ 1e−8·M̄.
pub fn sandwich_check(
    field: &SolutionField,
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
) -> Result<BarrierReport, BarrierError> {
    let tol = 1e-8 * bset.m_bar;
    let mut gl = fresh_zone();
    let mut gu = fresh_zone();
    let mut z3l = fresh_zone();
    let mut z3u = fresh_zone();
    let mut lu = fresh_zone();
    for (k, y) in field.y_levels.iter().cloned().enumerate() {
        let big_l = field.domain.width(setup, y);
        let psi0 = setup.psi0.value(y);
        let band = band_constants(setup, y, bset.mu)?;
        let bc = band.band.expect("band present");
        let wr = boundary_right(profile, setup, bset.eps, y)?;
        let wl = boundary_left(profile, setup, bset.eps, y)?;
        for (i, &s) in field.domain.s_nodes.iter().enumerate() {
            let psi = s * big_l;
            let w = field.w[k][i];
            // Global blanket pair.
            let sub = {
                let (h1, h2, h3) = partition(bset, setup, psi, y);
                let decay = (-bset.alpha0 * y).exp();
                let p1 = wl + (bset.a_under * psi.powf(4.0 / 3.0) + bset.b_under * psi) * decay;
                let p2 = bset.m_under * decay;
                let p3 = if h3 > 0.0 {
                    w_quad(bset.c_minus_blanket, wr, psi0, bset.eps, psi)
                } else {
                    0.0
                };
                h1 * p1 + h2 * p2 + h3 * p3
            };
            worst_update(&mut gl, sub - w, y, psi);
            worst_update(&mut gu, w - bset.m_bar, y, psi);
            // Refined zone III.
            if psi >= psi0 - bset.delta3 {
                let wm = w_quad(bc.c_minus, wr, psi0, bset.eps, psi);
                let wp = w_quad(bc.c_plus, wr, psi0, bset.eps, psi);
                worst_update(&mut z3l, wm - w, y, psi);
                worst_update(&mut z3u, w - wp, y, psi);
            }
            // Left zone upper bound.
            if psi <= 2.0 * bset.delta0 {
                let th = wl
                    + (bset.b_plus * psi - bset.a_plus * psi.powf(4.0 / 3.0))
                        * (bset.alpha * y).exp();
                worst_update(&mut lu, w - th, y, psi);
            }
        }
    }
    for zv in [&mut gl, &mut gu, &mut z3l, &mut z3u, &mut lu] {
        zv.passed = zv.worst <= tol;
    }
    let passed = gl.passed && gu.passed && z3l.passed && z3u.passed && lu.passed;
    Ok(BarrierReport {
        global_lower: gl,
        global_upper: gu,
        zone3_lower: z3l,
        zone3_upper: z3u,
        left_upper: lu,
        tolerance: tol,
        passed,
    })
}

/// Build the parameter set for a given field: explicit recipes for the
/// amplitudes, a feasibility scan for δ₀, and doubling-ladder searches for
/// the smallest admissible α₀ and α.
pub fn build_barrier_set(
    field: &SolutionField,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    mu: f64,
) -> Result<BarrierSet, BarrierError> {
    build_barrier_set_with_cap(field, profile, setup, mu, 16)
}

/// As [`build_barrier_set`], with the doubling-ladder exponent cap exposed:
/// candidate rates are 2^0 .. 2^cap.
pub fn build_barrier_set_with_cap(
    field: &SolutionField,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    mu: f64,
    cap: u32,
) -> Result<BarrierSet, BarrierError> {
    let eps = field.domain.eps;
    let psi00 = profile.psi0_at_origin();
    let b0 = profile.w0_p(0.0).max(
        // Slope proxy when w₀′(0) is not directly evaluable.
        profile.w0(1e-6) / 1e-6,
    );
    let b_under = 0.5 * b0;
    let a_under = b_under;
    let b_plus = 2.0 * b0;
    let a_plus = b_under;
    // δ₀ scan: largest width where A̲ψ^{4/3} + B̲ψ ≤ w₀(ε+ψ) − w₀(ε) holds
    // on (0, 2δ₀] with 10% margin.
    let w0e = profile.w0(eps);
    let mut delta0 = psi00 / 8.0;
    let feasible = |d: f64| -> bool {
        let n = 256;
        (1..=n).all(|k| {
            let psi = 2.0 * d * k as f64 / n as f64;
            1.1 * (a_under * psi.powf(4.0 / 3.0) + b_under * psi)
                <= profile.w0(eps + psi) - w0e
        })
    };
    let mut found = false;
    for _ in 0..60 {
        if feasible(delta0) {
            found = true;
            break;
        }
        delta0 *= 0.8;
    }
    if !found {
        return Err(BarrierError::NoFeasibleDelta);
    }
    // Mid-zone floor, dominated by the quadratic right corner.
    let mut m_min = f64::INFINITY;
    let n = 4096;
    for k in 0..=n {
        let psi = 0.5 * delta0 + (psi00 - delta0 - 2.0 * eps) * k as f64 / n as f64;
        m_min = m_min.min(profile.w0(eps + psi));
    }
    let m_under = 0.5 * m_min;
    // Small C⁻ for the blanket right corner.
    let mut a_min = f64::INFINITY;
    for k in 0..=64 {
        let y = setup.y_span * k as f64 / 64.0;
        a_min = a_min.min(root_a(setup, y)?.a);
    }
    let c_minus_blanket = 0.1 * a_min;
    let m_bar = blanket_upper(profile, setup);
    let mut bset = BarrierSet {
        m_bar,
        a_under,
        b_under,
        m_under,
        alpha0: 1.0,
        delta0,
        c_minus_blanket,
        a_plus,
        b_plus,
        alpha: 1.0,
        mu,
        delta3: 2.0 * delta0,
        eps,
    };
    // Ladder searches. Larger α₀ only lowers the sub-solution, larger α only
    // raises Θ⁺, so the first passing rung is the smallest admissible value.
    let ladder: Vec<f64> = (0..=cap).map(|k| (1u64 << k) as f64).collect();
    let mut ok0 = false;
    for &a0 in &ladder {
        bset.alpha0 = a0;
        let rep = sandwich_check(field, &bset, profile, setup)?;
        if rep.global_lower.passed {
            ok0 = true;
            break;
        }
    }
    if !ok0 {
        return Err(BarrierError::NoAdmissibleAlpha {
            cap: *ladder.last().unwrap(),
        });
    }
    let mut ok1 = false;
    for &al in &ladder {
        bset.alpha = al;
        let rep = sandwich_check(field, &bset, profile, setup)?;
        if rep.left_upper.passed {
            ok1 = true;
            break;
        }
    }
    if !ok1 {
        return Err(BarrierError::NoAdmissibleAlpha {
            cap: *ladder.last().unwrap(),
        });
    }
    Ok(bset)
}

/// Spot-check of the parabolic operator Lc f = λ₀ν∂_y f − ν²√f ∂²_ψ f minus
/// the source 2(ψ⁰−ψ−ε), evaluated on a barrier function by central
/// differences at a sample point. Diagnostic only: a sub-solution should give
/// a nonpositive value away from the partition seams.
pub fn lc_spot_check(
    bset: &BarrierSet,
    profile: &dyn InitialData,
    setup: &GyreSetup,
    psi: f64,
    y: f64,
) -> Result<f64, BarrierError> {
    let f = |p: f64, yy: f64| blanket_sub_eval(bset, profile, setup, p, yy);
    let hp = 1e-5 * profile.psi0_at_origin();
    let hy = 1e-5 * setup.y_span;
    let fy = (f(psi, y + hy)? - f(psi, y - hy)?) / (2.0 * hy);
    let fpp = (f(psi + hp, y)? - 2.0 * f(psi, y)? + f(psi - hp, y)?) / (hp * hp);
    let v = f(psi, y)?;
    let nu = setup.nu_unchecked(y);
    Ok(setup.lambda0 * nu * fy - nu * nu * v.max(0.0).sqrt() * fpp
        - 2.0 * (setup.psi0.value(y) - psi - bset.eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::SeparableProfile;
    use crate::march::{march, EpsDomain, StepConfig};
    use crate::ode::{shoot, DEFAULT_ODE_TOL, DEFAULT_XI_MAX};
    use crate::profiles::Profile;

    fn benchmark_setup() -> GyreSetup {
        GyreSetup::new(
            1.0,
            1.0,
            0.1,
            Profile::Zero,
            Profile::Affine { c0: 1.0, c1: 2.5 },
        )
        .unwrap()
    }

    struct UnitSup;
    impl InitialData for UnitSup {
        fn w0(&self, psi: f64) -> f64 {
            4.0 * psi * (1.0 - psi)
        }
        fn w0_p(&self, psi: f64) -> f64 {
            4.0 - 8.0 * psi
        }
        fn w0_pp(&self, _: f64) -> f64 {
            -8.0
        }
        fn psi0_at_origin(&self) -> f64 {
            1.0
        }
        fn sup_norm(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn m_bar_benchmark_value() {
        // sup 2ψ⁰/(λ₀ν) = 2·3.5 = 7 with ‖w₀‖ = 1: M̄ = 9.
        let m = blanket_upper(&UnitSup, &benchmark_setup());
        assert!((m - 9.0).abs() < 1e-12, "{m}");
    }

    #[test]
    fn m_bar_edge_cases() {
        let s = benchmark_setup();
        let tiny = GyreSetup {
            y_span: 1e-9,
            ..s.clone()
        };
        let m = blanket_upper(&UnitSup, &tiny);
        assert!((m - 2.0).abs() < 1e-7, "{m}");
        let doubled = GyreSetup {
            lambda0: 2.0,
            ..s.clone()
        };
        let m1 = blanket_upper(&UnitSup, &s);
        let m2 = blanket_upper(&UnitSup, &doubled);
        assert!(((m1 - 2.0) - 2.0 * (m2 - 2.0)).abs() < 1e-12);
    }

    fn benchmark_field() -> (GyreSetup, SeparableProfile, SolutionField, BarrierSet) {
        let s = benchmark_setup();
        let sol = shoot(2.5, DEFAULT_XI_MAX, DEFAULT_ODE_TOL).unwrap();
        let p = SeparableProfile::new(sol, 1.0).unwrap();
        let d = EpsDomain::new(&s, 1e-3, 192, 3.0).unwrap();
        let f = march(&p, &s, &d, &StepConfig::default()).unwrap();
        let b = build_barrier_set(&f, &p, &s, 0.1).unwrap();
        (s, p, f, b)
    }

    #[test]
    fn partition_sums_to_one() {
        let (s, _, _, b) = benchmark_field();
        for k in 0..=40 {
            let psi = 0.9 * k as f64 / 40.0;
            let y = 0.3;
            let (h1, h2, h3) = partition(&b, &s, psi, y);
            assert!((h1 + h2 + h3 - 1.0).abs() < 1e-14);
            assert!((0.0..=1.0).contains(&h1));
            assert!((-1e-15..=1.0).contains(&h2));
            assert!((0.0..=1.0).contains(&h3));
        }
    }

    #[test]
    fn boundary_identities() {
        let (s, p, _, b) = benchmark_field();
        for y in [0.0, 0.4, 1.0] {
            let wl = boundary_left(&p, &s, b.eps, y).unwrap();
            let v0 = blanket_sub_eval(&b, &p, &s, 0.0, y).unwrap();
            assert!((v0 - wl).abs() < 1e-12);
            let psi_r = s.psi0.value(y) - 2.0 * b.eps;
            let wr = boundary_right(&p, &s, b.eps, y).unwrap();
            let vr = blanket_sub_eval(&b, &p, &s, psi_r, y).unwrap();
            assert!((vr - wr).abs() < 1e-12, "y={y}: {vr} vs {wr}");
            for sign in [Sign::Lower, Sign::Upper] {
                let z = zone3_eval(&b, &p, &s, psi_r, y, sign).unwrap();
                assert!((z - wr).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zone3_domain_guard() {
        let (s, p, _, b) = benchmark_field();
        let y = 0.5;
        let far_left = 0.3;
        assert!(matches!(
            zone3_eval(&b, &p, &s, far_left, y, Sign::Lower),
            Err(BarrierError::OutsideZone { .. })
        ));
    }

    #[test]
    fn zone3_eps_limit() {
        // ε → 0 at fixed ψ: W± → C±²(ψ⁰−ψ)².
        let (s, p, _, b) = benchmark_field();
        let y = 0.2;
        let psi0 = s.psi0.value(y);
        let psi = psi0 - 0.01;
        let mut small = b.clone();
        small.eps = 1e-9;
        let v = zone3_eval(&small, &p, &s, psi, y, Sign::Upper).unwrap();
        let band = band_constants(&s, y, 0.1).unwrap().band.unwrap();
        let wr = boundary_right(&p, &s, 1e-9, y).unwrap();
        let expect = band.c_plus * band.c_plus * 0.01f64.powi(2) + wr;
        assert!((v - expect).abs() < 1e-10);
    }

    #[test]
    fn sandwich_passes_on_benchmark() {
        let (s, p, f, b) = benchmark_field();
        let rep = sandwich_check(&f, &b, &p, &s).unwrap();
        assert!(rep.passed, "{rep:#?}");
        assert!(f.sup_value() <= b.m_bar);
    }

    #[test]
    fn scaled_field_breaks_zone3_upper() {
        let (s, p, f, b) = benchmark_field();
        let mut bad = f.clone();
        for row in &mut bad.w {
            for v in row.iter_mut() {
                *v *= 1.5;
            }
        }
        let rep = sandwich_check(&bad, &b, &p, &s).unwrap();
        assert!(!rep.zone3_upper.passed, "{rep:#?}");
    }

    #[test]
    fn negated_node_breaks_global_lower() {
        let (s, p, f, b) = benchmark_field();
        let mut bad = f.clone();
        let k = bad.w.len() / 2;
        let i = bad.domain.n_s / 2;
        bad.w[k][i] = -bad.w[k][i];
        let rep = sandwich_check(&bad, &b, &p, &s).unwrap();
        assert!(!rep.global_lower.passed);
        assert!((rep.global_lower.at_y - bad.y_levels[k]).abs() < 1e-12);
    }

    #[test]
    fn widening_mu_only_loosens_zone3() {
        let (s, p, f, b) = benchmark_field();
        let mut wide = b.clone();
        wide.mu = 0.2;
        let r1 = sandwich_check(&f, &b, &p, &s).unwrap();
        let r2 = sandwich_check(&f, &wide, &p, &s).unwrap();
        assert!(r1.zone3_lower.passed && r1.zone3_upper.passed);
        assert!(r2.zone3_lower.passed && r2.zone3_upper.passed);
        assert!(r2.zone3_upper.worst <= r1.zone3_upper.worst + 1e-15);
        assert!(r2.zone3_lower.worst <= r1.zone3_lower.worst + 1e-15);
    }

    #[test]
    fn lc_spot_check_nonpositive_in_zone_cores() {
        let (s, p, _, b) = benchmark_field();
        // Deep zone II: Lc w̄⁻ − source = −λ₀να₀M̲e^{−α₀y} − 2(ψ⁰−ψ−ε) < 0.
        let v = lc_spot_check(&b, &p, &s, 0.5, 0.5).unwrap();
        assert!(v < 0.0, "{v}");
    }

    #[test]
    fn phi_local_matches_blanket_shape_at_y0() {
        let (s, p, _, b) = benchmark_field();
        // At y = y₀ the decay factor is 1 in both constructions when the
        // rates coincide; compare with a set whose α equals α₀.
        let mut bb = b.clone();
        bb.alpha = bb.alpha0;
        let y0 = 0.3;
        let v1 = phi_local(&bb, &p, &s, 0.2, y0, y0, Sign::Lower).unwrap();
        let mut frozen = bb.clone();
        frozen.alpha0 = 0.0;
        let v2 = blanket_sub_eval(&frozen, &p, &s, 0.2, y0).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }
}
