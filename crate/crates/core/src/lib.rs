//! Cavity-mediated four-level quantum battery: generator construction,
//! population dynamics, full counting statistics of the cavity current,
//! ergotropy and thermodynamics, and reproducible dataset generation.

// `!(x > 0.0)` guards are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod dd;

pub mod datagen;
pub mod dynamics;
pub mod energetics;
pub mod fcs;
pub mod model;

pub use datagen::{DatagenError, DatasetRecord, RecordFlags, SweepConfig};
pub use dynamics::{
    evolve, indicators, steady_state, DynamicsError, IndicatorSet, IntegratorOptions, Trajectory,
};
pub use energetics::{energetics, ergotropy, thermo, EnergeticsError, EnergeticsRecord, Thermo};
pub use fcs::{cumulants, dominant_eigenvalue, CumulantSet, FcsError, OrderStatus};
pub use model::{
    build_generator, occupations, BatteryParams, GeneratorMatrix, GeneratorVariant, ModelError,
    Occupations, StateVector,
};
