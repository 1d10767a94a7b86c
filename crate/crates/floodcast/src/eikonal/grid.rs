//! Reservoir property rasters and the diffusive speed field.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::FluidProps;

/// Index of one grid cell: `ix` along x (column), `iy` along y (row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: usize,
    pub iy: usize,
}

/// 2D reservoir description: permeability and porosity rasters plus fluid
/// properties. Rasters are `[ny × nx]`, indexed `[iy, ix]`; cell sizes are in
/// ft, permeability in mD, porosity a fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    perm: Array2<f64>,
    phi: Array2<f64>,
    pub fluid: FluidProps,
}

impl ReservoirGrid {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        perm: Array2<f64>,
        phi: Array2<f64>,
        fluid: FluidProps,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid(format!(
                "grid must be at least 2×2 cells, got {nx}×{ny}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0 && dy.is_finite() && dy > 0.0) {
            return Err(Error::invalid(format!(
                "cell sizes must be positive, got dx={dx}, dy={dy}"
            )));
        }
        if perm.dim() != (ny, nx) || phi.dim() != (ny, nx) {
            return Err(Error::ShapeMismatch {
                context: "grid rasters".into(),
                expected: format!("{ny} × {nx}"),
                actual: format!("{:?} / {:?}", perm.dim(), phi.dim()),
            });
        }
        if perm.iter().any(|&k| !(k.is_finite() && k > 0.0)) {
            return Err(Error::invalid("permeability must be finite and > 0 everywhere"));
        }
        if phi.iter().any(|&p| !(p.is_finite() && p > 0.0 && p < 1.0)) {
            return Err(Error::invalid("porosity must lie strictly in (0, 1) everywhere"));
        }
        Ok(ReservoirGrid {
            nx,
            ny,
            dx,
            dy,
            perm,
            phi,
            fluid,
        })
    }

    /// Permeability raster `[ny × nx]`, mD.
    pub fn perm(&self) -> &Array2<f64> {
        &self.perm
    }

    /// Porosity raster `[ny × nx]`.
    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    /// Physical domain extents (ft).
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Cell containing the point `(x, y)`; errors if the point lies outside
    /// the domain. Points exactly on the far boundary belong to the last
    /// cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Result<CellIndex> {
        let (wx, wy) = self.extent();
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > wx || y > wy {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) lies outside the {wx} × {wy} ft domain"
            )));
        }
        let ix = ((x / self.dx) as usize).min(self.nx - 1);
        let iy = ((y / self.dy) as usize).min(self.ny - 1);
        Ok(CellIndex { ix, iy })
    }

    /// Center coordinates of a cell (ft).
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            (cell.ix as f64 + 0.5) * self.dx,
            (cell.iy as f64 + 0.5) * self.dy,
        )
    }
}

/// Propagation speed raster for the travel-time solve.
///
/// Values are `sqrt(k / (μ·c_t·φ))` taken directly in repo units (mD, cP,
/// 1/psi): a diffusive time-of-flight *proxy*. Only the ordering of arrivals
/// is consumed downstream, so no conversion to physical time is performed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    values: Array2<f64>,
    pub dx: f64,
    pub dy: f64,
}

impl SpeedField {
    /// Build directly from a raster (mostly for tests; see [`speed_field`]).
    pub fn from_values(values: Array2<f64>, dx: f64, dy: f64) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::invalid("speed must be finite and > 0 everywhere"));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::invalid("cell sizes must be positive"));
        }
        Ok(SpeedField { values, dx, dy })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn at(&self, cell: CellIndex) -> f64 {
        self.values[[cell.iy, cell.ix]]
    }
}

/// Elementwise `sqrt(k/(μ·c_t·φ))` over the grid.
pub fn speed_field(grid: &ReservoirGrid) -> Result<SpeedField> {
    let mu_ct = grid.fluid.mu_cp * grid.fluid.ct_per_psi;
    let values = ndarray::Zip::from(grid.perm())
        .and(grid.phi())
        .map_collect(|&k, &p| (k / (mu_ct * p)).sqrt());
    SpeedField::from_values(values, grid.dx, grid.dy)
}
