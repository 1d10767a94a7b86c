//! Grid-free waterflood production forecasting.
//!
//! The crate connects four pieces around one well-network data model:
//!
//! * [`eikonal`] — fast-marching travel-time solves over reservoir property
//!   grids and the sector-search construction of an expert injector→producer
//!   adjacency.
//! * [`crm`] — the capacitance-resistance model: analytical forecasts, a
//!   Runge–Kutta reference integrator, and constrained multistart fitting.
//! * [`pignn`] — a graph neural network over the well graph trained with a
//!   physics-informed loss, built on the crate's own [`autodiff`] engine.
//! * [`synth`] — synthetic truth: channelized permeability fields, a
//!   single-phase implicit flow simulator, and closed-form benchmark worlds.
//!
//! [`bench`] wires everything into a multi-case comparison harness and
//! [`plot`] renders self-contained SVG reports. Units are fixed crate-wide:
//! days, psi, bbl/day, bbl, 1/psi, mD, cP, ft (see [`units`]).

pub mod autodiff;
pub mod bench;
pub mod conn;
pub mod crm;
pub mod eikonal;
pub mod error;
pub mod io;
pub mod metrics;
pub mod panel;
pub mod pignn;
pub mod plot;
pub mod scale;
pub mod split;
pub mod synth;
pub mod units;
pub mod wells;

pub use conn::ConnectivityMatrix;
pub use error::{Error, Result};
pub use panel::{FluidProps, TimeSeriesPanel};
pub use scale::{fit_apply_scaler, MinMaxScaler};
pub use split::{split_panel, split_rows, DataSplit};
pub use wells::{Well, WellKind, WellNetwork};
