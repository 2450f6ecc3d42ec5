//! Simulation toolkit for dual-band trap antennas.
//!
//! The crate models a printed inverted-F antenna whose radiating arm carries a
//! parallel-LC trap, and reproduces the design flow end to end:
//!
//! * [`circuit`] — closed-form trap model: impedance, two-port S-parameters,
//!   resonance and tolerance sensitivity, and component selection from
//!   catalog parts.
//! * [`geometry`] — parametric construction of the antenna (both trap
//!   placements) as a thin-wire segment mesh with feed and load attachments.
//! * [`solver`] — frequency-domain thin-wire method-of-moments solver:
//!   impedance matrix assembly, lumped-load insertion, delta-gap drive,
//!   input impedance / reflection sweeps, current distributions.
//! * [`farfield`] — radiated field, directivity, gain and efficiency from
//!   solved currents.
//! * [`tolerance`] — corner and Monte Carlo tolerance analysis of the full
//!   antenna against a return-loss goal, and the A/B placement comparison.
//! * [`presets`] — calibrated parameter sets for the reference dual-band
//!   design (865–870 MHz and 902–928 MHz).

pub mod circuit;
pub mod error;
pub mod farfield;
pub mod geometry;
pub mod presets;
pub mod quadrature;
pub mod solver;
pub mod tolerance;

pub use circuit::{
    ComponentValue, CornerAssignment, ReferenceImpedance, TrapSpec, TrapValues,
};
pub use error::{Error, Result};
pub use farfield::{FarFieldGrid, SphereGrid};
pub use geometry::{AntennaConfig, AntennaParams, GroundSpec, SegmentMesh, SubstrateSpec};
pub use solver::{DriveResult, ImpedanceMatrix};
pub use tolerance::{BandSpec, ToleranceReport};

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

/// Free-space wave impedance, ohms.
pub const ETA0: f64 = 376.730_313_412;
