//! Travel-time fields and graph construction.
//!
//! `grid` holds the raster reservoir description and converts rock and fluid
//! properties into a wave-speed proxy; `fmm` solves the resulting
//! first-arrival problem with fast marching; `graph` turns per-injector
//! arrival fields into a sparse injector→producer adjacency by sectorized
//! earliest-arrival selection.

mod fmm;
mod graph;
mod grid;

pub use fmm::{solve_eikonal, ArrivalField, CellOrigin, MIN_SPEED};
pub use graph::{build_well_graph, AdjacencyMatrix, GraphBuildConfig, SectorScheme};
pub use grid::{speed_field, CellIndex, ReservoirGrid, SpeedField};
