//! Numerical companion to the waist inequality on the round sphere.
//!
//! * [`sphere`] and [`rng`]: points of `S^n`, caps, uniform sampling and
//!   reproducible parallel random streams.
//! * [`partition`]: oriented partitions by iterated hyperplane cuts, their
//!   tree automorphisms and Monte Carlo cell statistics.
//! * [`concavity`]: sin^k-concave densities on arcs and their comparison lemmas.
//! * [`measure`]: equatorial tube volumes, convexly derived measures and
//!   property checks.
//! * [`equalizer`]: the equivariant section and its multistart zero search.
//! * [`waist`]: two-phase estimates of `max_z vol(f⁻¹(z) + ε)`.
//! * [`suites`]: seeded property suites returning machine-readable records.
//!
//! ```
//! use spherewaist::{tube_fraction, TubeSpec};
//! let t = tube_fraction(&TubeSpec::new(2, 1, 0.5).unwrap());
//! assert!((t - 0.5f64.sin()).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concavity;
pub mod equalizer;
pub mod error;
pub mod maps;
pub mod measure;
pub mod partition;
pub mod quadrature;
pub mod rng;
pub mod spatial;
pub mod sphere;
pub mod suites;
pub mod waist;

/// Library version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use concavity::{Density1D, SampledFunction};
pub use equalizer::{
    constrained_solve, grassmann_net, pancake_width, residual, section_f, solve, verify, PartitionReport, Plane,
    SectionValue, SolveOptions, SolveOutcome, TraceEntry,
};
pub use error::{Error, Result};
pub use maps::{BuiltMap, MapSpec, SphereMap};
pub use measure::{tube_fraction, CheckRecord, KDimMeasure, TestSet, TubeSpec};
pub use partition::{
    CenterMap, ConvexCell, LeafStats, OrientedPartition, PartitionTree, SampleCloud, TreeAutomorphism,
    VolumeEstimate,
};
pub use rng::RngStream;
pub use sphere::UnitVector;
pub use waist::{waist_estimate, waist_estimate_spec, WaistOptions, WaistReport};
