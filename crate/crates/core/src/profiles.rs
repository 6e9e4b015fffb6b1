//! Physical problem definition: coastline profile, interior stream-function
//! trace, and the standing hypotheses under which the marching theory applies.
//!
//! Profiles come from a small closed-form registry so that first and second
//! derivatives are exact; the derivative diagnostics need χ′χ″ without
//! finite-difference noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold κ value below which the governing cubic has no positive real root.
pub const KAPPA_ROOT_THRESHOLD: f64 = 1.889_881_574_842_309_7; // (27/4)^(1/3)

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("latitude {y} outside the domain [0, {y_span}]")]
    OutOfRange { y: f64, y_span: f64 },
    #[error("polynomial profile supports degree <= 4, got {0} coefficients")]
    DegreeTooHigh(usize),
    #[error("parameter {name} must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Closed-form scalar profile with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// Identically zero (flat coastline).
    Zero,
    /// `c0 + c1 * y`
    Affine { c0: f64, c1: f64 },
    /// `coeffs[0] + coeffs[1] y + ... `, degree at most 4.
    Polynomial { coeffs: Vec<f64> },
    /// `amp * sin(freq * y + phase)`
    ScaledSine { amp: f64, freq: f64, phase: f64 },
}

impl Profile {
    pub fn check(&self) -> Result<(), ProfileError> {
        match self {
            Profile::Polynomial { coeffs } if coeffs.len() > 5 => {
                Err(ProfileError::DegreeTooHigh(coeffs.len()))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Affine { c0, c1 } => c0 + c1 * y,
            Profile::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
            }
            Profile::ScaledSine { amp, freq, phase } => amp * (freq * y + phase).sin(),
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Affine { c1, .. } => *c1,
            Profile::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * y + k as f64 * c),
            Profile::ScaledSine { amp, freq, phase } => amp * freq * (freq * y + phase).cos(),
        }
    }

    pub fn second_deriv(&self, y: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Affine { .. } => 0.0,
            Profile::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * y + (k * (k - 1)) as f64 * c),
            Profile::ScaledSine { amp, freq, phase } => {
                -amp * freq * freq * (freq * y + phase).sin()
            }
        }
    }
}

/// The gyre problem data: inertia/rotation ratio λ₀, latitude span Y, the
/// hypothesis margin η, the coastline χ and the interior trace ψ⁰.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyreSetup {
    pub lambda0: f64,
    pub y_span: f64,
    pub eta: f64,
    pub coastline: Profile,
    pub psi0: Profile,
}

impl GyreSetup {
    pub fn new(
        lambda0: f64,
        y_span: f64,
        eta: f64,
        coastline: Profile,
        psi0: Profile,
    ) -> Result<Self, ProfileError> {
        for (name, value) in [("lambda0", lambda0), ("y_span", y_span), ("eta", eta)] {
            if !(value > 0.0) {
                return Err(ProfileError::NotPositive { name, value });
            }
        }
        coastline.check()?;
        psi0.check()?;
        Ok(Self {
            lambda0,
            y_span,
            eta,
            coastline,
            psi0,
        })
    }

    fn check_range(&self, y: f64) -> Result<(), ProfileError> {
        if y < 0.0 || y > self.y_span || !y.is_finite() {
            Err(ProfileError::OutOfRange {
                y,
                y_span: self.y_span,
            })
        } else {
            Ok(())
        }
    }

    /// ν(y) = 1 + χ′(y)², the coastline geometry factor; always ≥ 1.
    pub fn nu_of(&self, y: f64) -> Result<f64, ProfileError> {
        self.check_range(y)?;
        Ok(self.nu_unchecked(y))
    }

    pub(crate) fn nu_unchecked(&self, y: f64) -> f64 {
        let cp = self.coastline.deriv(y);
        1.0 + cp * cp
    }

    /// κ(y) = λ₀ (ψ⁰)′(y) ν(y)^{-1/3}, the dimensionless root-condition group.
    pub fn kappa_of(&self, y: f64) -> Result<f64, ProfileError> {
        self.check_range(y)?;
        Ok(self.kappa_unchecked(y))
    }

    pub(crate) fn kappa_unchecked(&self, y: f64) -> f64 {
        self.lambda0 * self.psi0.deriv(y) * self.nu_unchecked(y).powf(-1.0 / 3.0)
    }

    /// Minimum of ψ⁰ over a dense sample of `[0, Y]`.
    pub fn psi0_min(&self, samples: usize) -> f64 {
        self.sample_min(samples, |y| self.psi0.value(y)).1
    }

    fn sample_min(&self, samples: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = samples.max(2);
        let mut worst = (0.0, f64::INFINITY);
        for k in 0..n {
            let y = self.y_span * k as f64 / (n - 1) as f64;
            let v = f(y);
            if v < worst.1 {
                worst = (y, v);
            }
        }
        worst
    }

    /// Check the standing hypotheses (ψ⁰ > 0, (ψ⁰)′ > 0, κ > 2 + η) on a
    /// uniform grid of `samples` points. Failures are data, not errors.
    pub fn validate(&self, samples: usize) -> ValidationReport {
        let psi0 = self.sample_min(samples, |y| self.psi0.value(y));
        let dpsi0 = self.sample_min(samples, |y| self.psi0.deriv(y));
        let kappa = self.sample_min(samples, |y| self.kappa_unchecked(y));
        let checks = vec![
            HypothesisCheck {
                name: "psi0_positive".into(),
                passed: psi0.1 > 0.0,
                worst_y: psi0.0,
                worst_value: psi0.1,
                bound: 0.0,
            },
            HypothesisCheck {
                name: "psi0_increasing".into(),
                passed: dpsi0.1 > 0.0,
                worst_y: dpsi0.0,
                worst_value: dpsi0.1,
                bound: 0.0,
            },
            HypothesisCheck {
                name: "kappa_margin".into(),
                passed: kappa.1 > 2.0 + self.eta,
                worst_y: kappa.0,
                worst_value: kappa.1,
                bound: 2.0 + self.eta,
            },
        ];
        let passed = checks.iter().all(|c| c.passed);
        ValidationReport { checks, passed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub worst_y: f64,
    pub worst_value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    pub passed: bool,
}
