//! On-disk formats: well tables, rate/pressure panels, connectivity
//! matrices, grid directories, and JSON documents.
//!
//! Numeric round-trip policy: panel and raster values are written with
//! Rust's shortest-exact float formatting and connectivity values with 17
//! significant digits, so reading a written file reproduces every `f64`
//! bit-for-bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::conn::ConnectivityMatrix;
use crate::eikonal::ReservoirGrid;
use crate::error::{Error, Result};
use crate::panel::{FluidProps, TimeSeriesPanel};
use crate::wells::{Well, WellKind, WellNetwork};

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// Wells CSV: header `well_id,kind,x,y`, kind ∈ {INJ, PRD}.
// ---------------------------------------------------------------------------

pub fn write_wells_csv(path: &Path, wells: &WellNetwork) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["well_id", "kind", "x", "y"])
        .map_err(|e| csv_err(path, e))?;
    let rows = wells
        .injectors()
        .iter()
        .map(|i| (i, WellKind::Injector))
        .chain(wells.producers().iter().map(|p| (p, WellKind::Producer)));
    for (well, kind) in rows {
        w.write_record([
            well.id.as_str(),
            kind.tag(),
            &well.x.to_string(),
            &well.y.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

pub fn read_wells_csv(path: &Path) -> Result<WellNetwork> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = ["well_id", "kind", "x", "y"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            path_str(path),
            format!("expected header well_id,kind,x,y, got {headers:?}"),
        ));
    }
    let mut injectors = Vec::new();
    let mut producers = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| {
                Error::parse(path_str(path), format!("row {}: missing column {i}", line + 2))
            })
        };
        let id = field(0)?.to_string();
        let kind = WellKind::from_tag(field(1)?).map_err(|_| {
            Error::parse(path_str(path), format!("row {}: unknown well kind", line + 2))
        })?;
        let x = parse_f64(path, field(2)?)?;
        let y = parse_f64(path, field(3)?)?;
        let well = Well::new(id, x, y)?;
        match kind {
            WellKind::Injector => injectors.push(well),
            WellKind::Producer => producers.push(well),
        }
    }
    WellNetwork::new(injectors, producers)
}

// ---------------------------------------------------------------------------
// Panel CSV: `time_days` then I_<id>, pI_<id>, q_<id>, pwf_<id> columns.
// ---------------------------------------------------------------------------

/// A panel together with the well identifiers its columns refer to.
#[derive(Debug, Clone)]
pub struct PanelFile {
    pub panel: TimeSeriesPanel,
    pub injector_ids: Vec<String>,
    pub producer_ids: Vec<String>,
}

pub fn write_panel_csv(
    path: &Path,
    panel: &TimeSeriesPanel,
    injector_ids: &[String],
    producer_ids: &[String],
) -> Result<()> {
    if injector_ids.len() != panel.n_injectors() || producer_ids.len() != panel.n_producers() {
        return Err(Error::invalid(
            "panel id lists must match the panel's well counts",
        ));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["time_days".to_string()];
    header.extend(injector_ids.iter().map(|id| format!("I_{id}")));
    header.extend(injector_ids.iter().map(|id| format!("pI_{id}")));
    header.extend(producer_ids.iter().map(|id| format!("q_{id}")));
    header.extend(producer_ids.iter().map(|id| format!("pwf_{id}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for k in 0..panel.n_steps() {
        let mut row = vec![panel.times()[k].to_string()];
        row.extend((0..panel.n_injectors()).map(|i| panel.injection()[[k, i]].to_string()));
        row.extend((0..panel.n_injectors()).map(|i| panel.injector_bhp()[[k, i]].to_string()));
        row.extend((0..panel.n_producers()).map(|j| panel.production()[[k, j]].to_string()));
        row.extend((0..panel.n_producers()).map(|j| panel.producer_bhp()[[k, j]].to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

pub fn read_panel_csv(path: &Path) -> Result<PanelFile> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("time_days") {
        return Err(Error::parse(path_str(path), "first column must be time_days"));
    }
    // Column ids are discovered from the header; order of first appearance
    // among the I_ (resp. q_) columns fixes injector (resp. producer) order.
    let mut injector_ids = Vec::new();
    let mut producer_ids = Vec::new();
    for h in headers.iter().skip(1) {
        if let Some(id) = h.strip_prefix("I_") {
            injector_ids.push(id.to_string());
        } else if let Some(id) = h.strip_prefix("q_") {
            producer_ids.push(id.to_string());
        } else if h.strip_prefix("pI_").is_none() && h.strip_prefix("pwf_").is_none() {
            return Err(Error::parse(
                path_str(path),
                format!("unrecognized panel column {h}"),
            ));
        }
    }
    if injector_ids.is_empty() || producer_ids.is_empty() {
        return Err(Error::parse(
            path_str(path),
            "panel needs at least one I_ and one q_ column",
        ));
    }
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path_str(path), format!("missing column {name}")))
    };
    let i_cols: Vec<usize> = injector_ids
        .iter()
        .map(|id| col_index(&format!("I_{id}")))
        .collect::<Result<_>>()?;
    let pi_cols: Vec<usize> = injector_ids
        .iter()
        .map(|id| col_index(&format!("pI_{id}")))
        .collect::<Result<_>>()?;
    let q_cols: Vec<usize> = producer_ids
        .iter()
        .map(|id| col_index(&format!("q_{id}")))
        .collect::<Result<_>>()?;
    let pwf_cols: Vec<usize> = producer_ids
        .iter()
        .map(|id| col_index(&format!("pwf_{id}")))
        .collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row: Vec<f64> = record
            .iter()
            .map(|v| parse_f64(path, v))
            .collect::<Result<_>>()?;
        if row.len() != headers.len() {
            return Err(Error::parse(path_str(path), "ragged panel row"));
        }
        rows.push(row);
    }
    let n_t = rows.len();
    let gather = |cols: &[usize]| -> Array2<f64> {
        let mut out = Array2::zeros((n_t, cols.len()));
        for (k, row) in rows.iter().enumerate() {
            for (c, &col) in cols.iter().enumerate() {
                out[[k, c]] = row[col];
            }
        }
        out
    };
    let times = Array1::from_iter(rows.iter().map(|r| r[0]));
    let panel = TimeSeriesPanel::new(
        times,
        gather(&i_cols),
        gather(&pi_cols),
        gather(&q_cols),
        gather(&pwf_cols),
    )?;
    Ok(PanelFile {
        panel,
        injector_ids,
        producer_ids,
    })
}

// ---------------------------------------------------------------------------
// Connectivity CSV: first row producer ids (first cell empty), first column
// injector ids, body values with 17 significant digits.
// ---------------------------------------------------------------------------

pub fn write_connectivity_csv(path: &Path, conn: &ConnectivityMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut header = vec![String::new()];
    header.extend(conn.producer_ids().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, id) in conn.injector_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(
            conn.values()
                .row(i)
                .iter()
                .map(|v| format!("{v:.16e}")),
        );
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

pub fn read_connectivity_csv(path: &Path) -> Result<ConnectivityMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(path_str(path), "empty connectivity file"))?
        .map_err(|e| csv_err(path, e))?;
    let producer_ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
    if producer_ids.is_empty() {
        return Err(Error::parse(path_str(path), "no producer columns"));
    }
    let mut injector_ids = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != producer_ids.len() + 1 {
            return Err(Error::parse(path_str(path), "ragged connectivity row"));
        }
        injector_ids.push(record[0].to_string());
        for v in record.iter().skip(1) {
            values.push(parse_f64(path, v)?);
        }
    }
    let matrix = Array2::from_shape_vec((injector_ids.len(), producer_ids.len()), values)
        .expect("dimensions derived from parsed rows");
    ConnectivityMatrix::new(injector_ids, producer_ids, matrix)
}

// ---------------------------------------------------------------------------
// Grid directory: grid.json metadata + perm.csv / phi.csv rasters.
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct GridMeta {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    mu_cp: f64,
    ct_per_psi: f64,
}

pub fn write_grid_dir(dir: &Path, grid: &ReservoirGrid) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(path_str(dir), e))?;
    let meta = GridMeta {
        nx: grid.nx,
        ny: grid.ny,
        dx: grid.dx,
        dy: grid.dy,
        mu_cp: grid.fluid.mu_cp,
        ct_per_psi: grid.fluid.ct_per_psi,
    };
    write_json(&dir.join("grid.json"), &meta)?;
    write_raster_csv(&dir.join("perm.csv"), grid.perm())?;
    write_raster_csv(&dir.join("phi.csv"), grid.phi())
}

pub fn read_grid_dir(dir: &Path) -> Result<ReservoirGrid> {
    let meta: GridMeta = read_json(&dir.join("grid.json"))?;
    let perm = read_raster_csv(&dir.join("perm.csv"))?;
    let phi = read_raster_csv(&dir.join("phi.csv"))?;
    ReservoirGrid::new(
        meta.nx,
        meta.ny,
        meta.dx,
        meta.dy,
        perm,
        phi,
        FluidProps::new(meta.mu_cp, meta.ct_per_psi)?,
    )
}

/// Headerless comma-separated raster, one CSV row per grid row (row-major).
pub fn write_raster_csv(path: &Path, raster: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in raster.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        w.write_record(&cells).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

pub fn read_raster_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        rows.push(
            record
                .iter()
                .map(|v| parse_f64(path, v))
                .collect::<Result<_>>()?,
        );
    }
    let ny = rows.len();
    let nx = rows.first().map_or(0, Vec::len);
    if ny == 0 || nx == 0 {
        return Err(Error::parse(path_str(path), "empty raster"));
    }
    if rows.iter().any(|r| r.len() != nx) {
        return Err(Error::parse(path_str(path), "ragged raster rows"));
    }
    Ok(Array2::from_shape_vec((ny, nx), rows.concat())
        .expect("dimensions derived from parsed rows"))
}

// ---------------------------------------------------------------------------
// JSON documents.
// ---------------------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path_str(path), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_f64(path: &Path, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(path_str(path), format!("not a number: {raw:?}")))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path_str(path), e.to_string())
}
