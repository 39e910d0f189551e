//! Numerical laboratory for the radial energy-critical Ginzburg-Landau flow
//!
//! ```text
//! ∂ₜu = z (∂²ᵣu + (D−1)/r ∂ᵣu + |u|^{4/(D−2)} u),   Re z > 0, |z| = 1
//! ```
//!
//! The crate is `no_std` (with `alloc`). Floating point transcendental
//! functions come from `std` by default or from `libm` with
//! `--no-default-features --features libm`.
//!
//! Layout:
//!  - [`grid`], [`field`], [`radial`]: radial grids, complex fields, quadrature
//!    and finite-difference operators.
//!  - [`ground_state`]: the Aubin-Talenti profile `W`, bubbles and the scaling
//!    generators.
//!  - [`dynamics`]: nonlinearity, tension, the IMEX stepper and trajectories.
//!  - [`energy`]: energy functionals, localized energy balance and the
//!    inequality probes.
//!  - [`linearized`]: `L±`, the linearized flow operator, eigenpairs and the
//!    orthogonality test profiles.
//!  - [`modulation`]: orthogonality-based decomposition, proximity functions
//!    and bubble detection.
#![cfg_attr(not(feature = "std"), no_std)]
// comparisons are negated on purpose so that NaN takes the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("glb-core needs either the `std` or the `libm` feature for float math");

extern crate alloc;

pub mod dynamics;
pub mod energy;
pub mod error;
pub mod field;
pub mod grid;
pub mod ground_state;
pub mod linalg;
pub mod linearized;
pub mod modulation;
pub mod radial;

pub use num_complex::Complex64 as C64;

pub use dynamics::{
    f_nl, f_prime, tension, BlowUp, BlowUpReason, Evolution, EvolveOptions, Flow, FlowConfig, FlowState, Outcome,
    Scheme, Snapshot, TrajectoryRecord,
};
pub use energy::{
    coercivity_probe, energy, flow_energy, localized_energy_balance, radial_sobolev_check, BalanceReport, EnergyReport,
    PhiSpec,
};
pub use error::{Error, Result};
pub use field::{RadialField, ScalarField};
pub use grid::{RadialGrid, Stretch};
pub use ground_state::{bubble, multi_bubble, w_profile, BubbleParams};
pub use linearized::{
    apply_l, apply_l_script, build_test_profiles, eigen_ground, solve_y1y2, LSign, SpectralResult, TestProfiles,
    Y1Y2Result,
};
pub use modulation::{DecompositionResult, ModulationSample, ModulationSeries, Modulator, ProximityValue, Regime};
pub use radial::{d_r, inner, laplacian, norm_e, EnergyForm};
