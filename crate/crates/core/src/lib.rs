//! Data reduction and visualization support for time-of-flight neutron
//! scattering.
//!
//! * [`dataset`]: spectra, bin scales, attributes and size estimates.
//! * [`operators`]: unit conversion, time focusing, rebinning, grouping,
//!   normalisation, relabelling and merging.
//! * [`retrievers`]: `TRF1` run files with partial loading, ASCII columns,
//!   and a hierarchical JSON format.
//! * [`scripting`]: a small batch language over the operators.
//! * [`peaks`]: single-crystal peak finding, UB refinement and indexing.
//! * [`dataserver`]: TCP file and live-data servers and their client.
//! * [`views`]: image rasters, cursor readouts, time slices, point clouds.
//! * [`synth`]: seeded synthetic instruments for tests and demos.
//!
//! The guide in `book/` walks through each of these with runnable examples.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataserver;
pub mod dataset;
pub mod operators;
pub mod peaks;
pub mod retrievers;
pub mod scripting;
pub mod synth;
pub mod views;

// The guide's chapters, compiled so their examples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/files.md")]
    mod files {}
    #[doc = include_str!("../../../book/src/scripting.md")]
    mod scripting {}
    #[doc = include_str!("../../../book/src/peaks.md")]
    mod peaks {}
    #[doc = include_str!("../../../book/src/dataserver.md")]
    mod dataserver {}
    #[doc = include_str!("../../../book/src/views.md")]
    mod views {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
