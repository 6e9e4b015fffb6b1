//! Root analysis of the governing cubic P_y(t) = ν²t³ − νλ₀(ψ⁰)′t² + 1.
//!
//! The smallest positive root a(y) controls the quadratic vanishing rate of
//! the transformed unknown at the right boundary and the exponential decay
//! rate of the velocity. Root solving happens in the scaled variable
//! τ = t·ν^{2/3}, which reduces the cubic to τ³ − κτ² + 1 and removes any
//! conditioning dependence on ν.

use crate::profiles::{GyreSetup, ProfileError, KAPPA_ROOT_THRESHOLD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detection window around the double-root threshold κ = (27/4)^{1/3}.
const DOUBLE_ROOT_WINDOW: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RootError {
    #[error("no positive real root: kappa = {kappa} below threshold {threshold}")]
    NoPositiveRoot { kappa: f64, threshold: f64 },
    #[error("derivative band infeasible: kappa = {kappa} <= 2")]
    BandInfeasible { kappa: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Band constants surrounding the root, used by the zone-III barriers and the
/// slope bounds: 0 < C⁻ < a < C⁺ and E⁺ < 2(C⁻)² < 2a² < 2(C⁺)² < E⁻ < 2/(aν²).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BandConstants {
    pub c_minus: f64,
    pub c_plus: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub mu: f64,
}

/// Per-latitude root analysis of P_y.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootBand {
    pub y: f64,
    /// Smallest positive root of P_y.
    pub a: f64,
    /// The larger positive root.
    pub a_second: f64,
    pub is_double: bool,
    pub band: Option<BandConstants>,
}

/// P_y(t) evaluated exactly as written: ν²t³ − νλ₀(ψ⁰)′t² + 1.
pub fn eval_cubic(setup: &GyreSetup, y: f64, t: f64) -> Result<f64, RootError> {
    let nu = setup.nu_of(y)?;
    let b = nu * setup.lambda0 * setup.psi0.deriv(y);
    Ok(nu * nu * t * t * t - b * t * t + 1.0)
}

/// The slope-bound quadratic Q_y(E) = ν²E²/(2a) − λ₀ν(ψ⁰)′E + 2.
///
/// 2a² is always a root of Q_y (the identity Q_y(2a²) = 2·P_y(a)); the other
/// root is 2/(aν²).
pub fn eval_slope_quadratic(setup: &GyreSetup, y: f64, a: f64, e: f64) -> Result<f64, RootError> {
    let nu = setup.nu_of(y)?;
    Ok(nu * nu / (2.0 * a) * e * e - setup.lambda0 * nu * setup.psi0.deriv(y) * e + 2.0)
}

/// Smallest positive root of the scaled cubic τ³ − κτ² + 1, with the second
/// positive root. Returns `(root, second_root, is_double)`.
pub fn scaled_roots(kappa: f64) -> Result<(f64, f64, bool), RootError> {
    if kappa < KAPPA_ROOT_THRESHOLD - DOUBLE_ROOT_WINDOW {
        return Err(RootError::NoPositiveRoot {
            kappa,
            threshold: KAPPA_ROOT_THRESHOLD,
        });
    }
    let f = |t: f64| t * t * t - kappa * t * t + 1.0;
    let df = |t: f64| 3.0 * t * t - 2.0 * kappa * t;
    if (kappa - KAPPA_ROOT_THRESHOLD).abs() <= DOUBLE_ROOT_WINDOW {
        // Interior minimum of the scaled cubic; at threshold it is the root.
        let tau = 2.0 * kappa / 3.0;
        return Ok((tau, tau, true));
    }
    // The cubic is 1 at τ = 0, negative at its interior minimum 2κ/3, and 1
    // again at τ = κ, so each bracket carries exactly one sign change.
    let t_min = 2.0 * kappa / 3.0;
    let first = refine(f, df, bisect(f, 0.0, t_min));
    let second = refine(f, df, bisect(f, t_min, kappa));
    Ok((first, second, false))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..64 {
        if hi - lo < 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn refine(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, mut t: f64) -> f64 {
    // Newton polish; stop once |f| <= 1e-12 * max(1, |f'|).
    for _ in 0..8 {
        let v = f(t);
        let d = df(t);
        if v.abs() <= 1e-12 * d.abs().max(1.0) || d == 0.0 {
            break;
        }
        t -= v / d;
    }
    t
}

/// Root analysis at latitude `y`, roots only.
pub fn root_a(setup: &GyreSetup, y: f64) -> Result<RootBand, RootError> {
    let kappa = setup.kappa_of(y)?;
    let nu = setup.nu_unchecked(y);
    let scale = nu.powf(-2.0 / 3.0);
    let (tau, tau2, is_double) = scaled_roots(kappa)?;
    Ok(RootBand {
        y,
        a: tau * scale,
        a_second: tau2 * scale,
        is_double,
        band: None,
    })
}

/// Root analysis with the C± and E± bands attached. `mu` is the relative band
/// half-width in (0, 1). Requires κ(y) > 2 strictly, otherwise the E⁻ window
/// between 2(C⁺)² and 2/(aν²) is empty.
pub fn band_constants(setup: &GyreSetup, y: f64, mu: f64) -> Result<RootBand, RootError> {
    assert!(mu > 0.0 && mu < 1.0, "band width mu must lie in (0, 1)");
    let kappa = setup.kappa_of(y)?;
    if kappa <= 2.0 {
        return Err(RootError::BandInfeasible { kappa });
    }
    let mut rb = root_a(setup, y)?;
    let nu = setup.nu_unchecked(y);
    let a = rb.a;
    let c_minus = a * (1.0 - mu);
    // C⁺ must stay below both the monotonicity bound 2λ₀(ψ⁰)′/(3ν) and the
    // square-root of 1/(aν²) (so that 2(C⁺)² < 2/(aν²) leaves room for E⁻).
    let cap = (2.0 * setup.lambda0 * setup.psi0.deriv(y) / (3.0 * nu))
        .min((1.0 / (a * nu * nu)).sqrt());
    let c_plus = (a * (1.0 + mu)).min(0.5 * (a + cap));
    let e_plus = 2.0 * c_minus * c_minus * (1.0 - mu);
    let upper = 2.0 / (a * nu * nu);
    let e_minus = 0.5 * (2.0 * c_plus * c_plus + upper);
    debug_assert!(e_plus < 2.0 * c_minus * c_minus);
    debug_assert!(2.0 * c_plus * c_plus < e_minus && e_minus < upper);
    rb.band = Some(BandConstants {
        c_minus,
        c_plus,
        e_plus,
        e_minus,
        mu,
    });
    Ok(rb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Profile;

    fn flat_setup(lambda0: f64, slope: f64) -> GyreSetup {
        GyreSetup::new(
            lambda0,
            1.0,
            0.1,
            Profile::Zero,
            Profile::Affine { c0: 1.0, c1: slope },
        )
        .unwrap()
    }

    #[test]
    fn cubic_constant_term() {
        let s = flat_setup(1.0, 2.5);
        assert_eq!(eval_cubic(&s, 0.3, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn cubic_factorizes_at_kappa_two() {
        // t³ − 2t² + 1 = (t − 1)(t² − t − 1)
        let s = flat_setup(1.0, 2.0);
        assert!(eval_cubic(&s, 0.0, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn cubic_at_nu_power() {
        // P_y(ν^{-2/3}) = 2 − κ; flat coastline with κ = 2.5.
        let s = flat_setup(1.0, 2.5);
        assert!((eval_cubic(&s, 0.0, 1.0).unwrap() - (-0.5)).abs() < 1e-14);
    }

    #[test]
    fn root_at_kappa_two_is_one() {
        let s = flat_setup(1.0, 2.0);
        let rb = root_a(&s, 0.0).unwrap();
        assert!((rb.a - 1.0).abs() < 1e-12);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((rb.a_second - golden).abs() < 1e-10);
    }

    #[test]
    fn double_root_at_threshold() {
        let s = flat_setup(1.0, KAPPA_ROOT_THRESHOLD);
        let rb = root_a(&s, 0.0).unwrap();
        assert!(rb.is_double);
        assert!((rb.a - 2f64.cbrt()).abs() < 1e-8);
        assert!((rb.a - rb.a_second).abs() <= 1e-6);
        // P′(a) ≈ 0 at the double root.
        let h = 1e-7;
        let dp = (eval_cubic(&s, 0.0, rb.a + h).unwrap() - eval_cubic(&s, 0.0, rb.a - h).unwrap())
            / (2.0 * h);
        assert!(dp.abs() < 1e-5, "P'(a) = {dp}");
    }

    #[test]
    fn below_threshold_is_an_error() {
        let s = flat_setup(1.0, KAPPA_ROOT_THRESHOLD - 1e-3);
        assert!(matches!(
            root_a(&s, 0.0),
            Err(RootError::NoPositiveRoot { .. })
        ));
    }

    #[test]
    fn root_at_kappa_two_point_five() {
        let s = flat_setup(1.0, 2.5);
        let rb = root_a(&s, 0.0).unwrap();
        assert!((rb.a - 0.757_569_023_564_034_9).abs() < 1e-10);
    }

    #[test]
    fn scaling_collapse_across_nu() {
        // ν^{2/3}·a invariant at fixed κ. Realize ν ∈ {1, 2, 4} with coastline
        // slopes {0, 1, √3} and rescale the trace slope to hold κ = 2.5.
        let mut collapsed = Vec::new();
        for chi_slope in [0.0f64, 1.0, 3f64.sqrt()] {
            let nu = 1.0 + chi_slope * chi_slope;
            let trace_slope = 2.5 * nu.powf(1.0 / 3.0);
            let s = GyreSetup::new(
                1.0,
                1.0,
                0.1,
                Profile::Affine {
                    c0: 0.0,
                    c1: chi_slope,
                },
                Profile::Affine {
                    c0: 1.0,
                    c1: trace_slope,
                },
            )
            .unwrap();
            let rb = root_a(&s, 0.5).unwrap();
            collapsed.push(nu.powf(2.0 / 3.0) * rb.a);
        }
        for v in &collapsed[1..] {
            assert!((v - collapsed[0]).abs() < 1e-10, "{collapsed:?}");
        }
    }

    #[test]
    fn root_decreasing_in_kappa() {
        let mut prev = f64::INFINITY;
        for k in [2.0, 2.2, 2.5, 3.0, 4.0] {
            let s = flat_setup(1.0, k);
            let a = root_a(&s, 0.0).unwrap().a;
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn band_ordering_at_kappa_two_point_five() {
        let s = flat_setup(1.0, 2.5);
        let rb = band_constants(&s, 0.0, 0.1).unwrap();
        let b = rb.band.unwrap();
        let a = rb.a;
        assert!(0.0 < b.c_minus && b.c_minus < a && a < b.c_plus);
        assert!(b.e_plus < 2.0 * b.c_minus * b.c_minus);
        assert!(2.0 * b.c_plus * b.c_plus < b.e_minus);
        assert!(b.e_minus < 2.0 / a);
        // Required interval: E⁻ strictly between 2(C⁺)² ≈ 1.3890 and 2/a ≈ 2.6399.
        assert!((2.0 * b.c_plus * b.c_plus - 1.389).abs() < 1e-2);
        assert!((2.0 / a - 2.6399).abs() < 1e-3);
    }

    #[test]
    fn band_infeasible_at_kappa_two() {
        let s = flat_setup(1.0, 2.0);
        assert!(matches!(
            band_constants(&s, 0.0, 0.1),
            Err(RootError::BandInfeasible { .. })
        ));
    }

    #[test]
    fn slope_quadratic_vanishes_at_twice_a_squared() {
        let s = flat_setup(1.0, 2.5);
        let a = root_a(&s, 0.0).unwrap().a;
        let q = eval_slope_quadratic(&s, 0.0, a, 2.0 * a * a).unwrap();
        assert!(q.abs() < 1e-10, "Q(2a²) = {q}");
    }

    #[test]
    fn scaled_root_below_one_iff_kappa_above_two() {
        assert!(scaled_roots(2.5).unwrap().0 < 1.0);
        assert!(scaled_roots(2.0).unwrap().0 - 1.0 < 1e-10);
        assert!(scaled_roots(1.95).unwrap().0 > 1.0);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn scaled_roots_satisfy_cubic(kappa in 1.95f64..20.0) {
            let (a, b, double) = scaled_roots(kappa).unwrap();
            prop_assert!(a > 0.0 && a <= b);
            prop_assert!(!double);
            let pa = a * a * a - kappa * a * a + 1.0;
            let pb = b * b * b - kappa * b * b + 1.0;
            prop_assert!(pa.abs() <= 1e-9 * (1.0 + kappa));
            prop_assert!(pb.abs() <= 1e-9 * (1.0 + kappa * kappa * kappa));
        }

        #[test]
        fn no_positive_roots_below_threshold(kappa in 0.0f64..1.889) {
            prop_assert!(scaled_roots(kappa).is_err());
        }
    }
}
