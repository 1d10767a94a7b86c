//! Injector→producer graph construction from travel-time fields.
//!
//! One travel-time solve per injector gives every producer an arrival time.
//! The plane around each injector is carved into fixed angular sectors
//! (quadrants or octants) and the earliest-arriving producers in each sector
//! — up to a per-sector cap — become that injector's edges. Sectorization
//! keeps the graph from collapsing onto one fast channel: a screaming-fast
//! streak can claim at most its own sector's slots, so producers in other
//! directions stay connected.

use ndarray::Array2;

use super::fmm::solve_eikonal;
use super::grid::{CellIndex, ReservoirGrid, SpeedField};
use serde::{Deserialize, Serialize};

use crate::conn::ConnectivityMatrix;
use crate::error::{Error, Result};
use crate::wells::WellNetwork;

/// Angular partition of the plane around an injector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectorScheme {
    /// Four 90° sectors.
    Quadrant,
    /// Eight 45° sectors.
    Octant,
}

impl SectorScheme {
    pub fn n_sectors(self) -> usize {
        match self {
            SectorScheme::Quadrant => 4,
            SectorScheme::Octant => 8,
        }
    }

    fn sector_of(self, angle_deg: f64) -> usize {
        let size = 360.0 / self.n_sectors() as f64;
        // Angles are wrapped to [0, 360); a boundary angle belongs to the
        // sector whose lower edge it sits on.
        let s = (angle_deg / size).floor() as usize;
        s.min(self.n_sectors() - 1)
    }
}

/// Controls for [`build_well_graph`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraphBuildConfig {
    /// Maximum producers connected per sector.
    pub max_per_sector: usize,
    pub sectors: SectorScheme,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            max_per_sector: 1,
            sectors: SectorScheme::Quadrant,
        }
    }
}

/// Binary injector→producer adjacency, rows = injectors, columns = producers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    injector_ids: Vec<String>,
    producer_ids: Vec<String>,
    values: Array2<u8>,
}

impl AdjacencyMatrix {
    pub fn new(
        injector_ids: Vec<String>,
        producer_ids: Vec<String>,
        values: Array2<u8>,
    ) -> Result<Self> {
        if values.dim() != (injector_ids.len(), producer_ids.len()) {
            return Err(Error::ShapeMismatch {
                context: "adjacency matrix".into(),
                expected: format!("{}×{}", injector_ids.len(), producer_ids.len()),
                actual: format!("{}×{}", values.nrows(), values.ncols()),
            });
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("adjacency entries must be 0 or 1"));
        }
        Ok(Self {
            injector_ids,
            producer_ids,
            values,
        })
    }

    pub fn injector_ids(&self) -> &[String] {
        &self.injector_ids
    }
    pub fn producer_ids(&self) -> &[String] {
        &self.producer_ids
    }
    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }
    pub fn as_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }
    pub fn n_edges(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// View the binary graph as a 0/1-valued connectivity matrix, the form
    /// it is written to and read from CSV in.
    pub fn to_connectivity(&self) -> ConnectivityMatrix {
        ConnectivityMatrix::new(
            self.injector_ids.clone(),
            self.producer_ids.clone(),
            self.as_f64(),
        )
        .expect("0/1 entries are valid connectivity values")
    }

    /// Reinterpret an exactly-binary connectivity matrix as an adjacency.
    pub fn from_binary_connectivity(conn: &ConnectivityMatrix) -> Result<Self> {
        let mut values = Array2::zeros(conn.values().dim());
        for (dst, &v) in values.iter_mut().zip(conn.values()) {
            *dst = if v == 0.0 {
                0u8
            } else if v == 1.0 {
                1u8
            } else {
                return Err(Error::invalid(format!(
                    "adjacency entries must be exactly 0 or 1, got {v}"
                )));
            };
        }
        AdjacencyMatrix::new(
            conn.injector_ids().to_vec(),
            conn.producer_ids().to_vec(),
            values,
        )
    }
}

/// One candidate producer from one injector's travel-time field.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    producer: usize,
    arrival: f64,
    sector: usize,
}

/// Build the injector→producer graph: one travel-time solve per injector,
/// sectorized earliest-arrival selection, at most `max_per_sector` edges per
/// sector.
///
/// A producer falling in the same cell as the injector is connected
/// unconditionally (arrival 0) and sits outside the sector competition —
/// warn-logged, since coincident completions usually mean bad well data.
pub fn build_well_graph(
    grid: &ReservoirGrid,
    speed: &SpeedField,
    wells: &WellNetwork,
    config: &GraphBuildConfig,
) -> Result<AdjacencyMatrix> {
    if config.max_per_sector == 0 {
        return Err(Error::invalid("max_per_sector must be at least 1"));
    }
    let producers_cells: Vec<CellIndex> = wells
        .producers()
        .iter()
        .map(|w| grid.cell_of(w.x, w.y))
        .collect::<Result<_>>()?;

    let n_i = wells.n_injectors();
    let n_p = wells.n_producers();
    let mut values = Array2::<u8>::zeros((n_i, n_p));

    for (i, inj) in wells.injectors().iter().enumerate() {
        let src = grid.cell_of(inj.x, inj.y)?;
        let arrivals = solve_eikonal(speed, &[src])?;

        let mut candidates: Vec<Candidate> = Vec::with_capacity(n_p);
        for (j, prod) in wells.producers().iter().enumerate() {
            let cell = producers_cells[j];
            if cell == src {
                log::warn!(
                    "producer {} shares cell ({}, {}) with injector {}; connecting unconditionally",
                    prod.id,
                    cell.ix,
                    cell.iy,
                    inj.id
                );
                values[[i, j]] = 1;
                continue;
            }
            let mut angle = (prod.y - inj.y).atan2(prod.x - inj.x).to_degrees();
            if angle < 0.0 {
                angle += 360.0;
            }
            candidates.push(Candidate {
                producer: j,
                arrival: arrivals.at(cell),
                sector: config.sectors.sector_of(angle),
            });
        }

        for sector in 0..config.sectors.n_sectors() {
            let mut in_sector: Vec<&Candidate> =
                candidates.iter().filter(|c| c.sector == sector).collect();
            in_sector.sort_by(|a, b| {
                a.arrival
                    .total_cmp(&b.arrival)
                    .then_with(|| a.producer.cmp(&b.producer))
            });
            for c in in_sector.into_iter().take(config.max_per_sector) {
                values[[i, c.producer]] = 1;
            }
        }

        debug_assert!(
            (0..n_p).any(|j| values[[i, j]] == 1),
            "injector {} ended with no edges",
            inj.id
        );
    }

    AdjacencyMatrix::new(
        wells.injector_ids().to_vec(),
        wells.producer_ids().to_vec(),
        values,
    )
}
