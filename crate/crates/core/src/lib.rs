//! Numerical solver and verification harness for the steady western boundary
//! layer equation in von Mises variables.
//!
//! The pipeline: define the gyre problem ([`profiles`]), analyze the governing
//! cubic and its root bands ([`cubic`]), build compatible initial data
//! ([`initial`]), march the regularized degenerate parabolic equation in
//! latitude ([`march`]), check the explicit sub/super-solution sandwiches
//! ([`barriers`]), and invert the transform back to physical velocity profiles
//! ([`fields`]). The separable ODE module ([`ode`]) provides both the
//! separation-threshold scan and the exact manifold used as the marching
//! oracle.

pub mod barriers;
pub mod cubic;
pub mod fields;
pub mod initial;
pub mod march;
pub mod ode;
pub mod profiles;

pub use barriers::{BarrierReport, BarrierSet};
pub use cubic::{BandConstants, RootBand};
pub use fields::{LevelField, PhysicalField};
pub use initial::{InitialData, InitialProfile, SeparableProfile};
pub use march::{EpsDomain, SolutionField, StepConfig};
pub use ode::OdeSolution;
pub use profiles::{GyreSetup, Profile, ValidationReport};
