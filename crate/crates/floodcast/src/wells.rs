//! Well identities and the injector/producer network layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a well plays in the flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WellKind {
    Injector,
    Producer,
}

impl WellKind {
    /// Two-letter tag used in the wells CSV (`INJ` / `PRD`).
    pub fn tag(self) -> &'static str {
        match self {
            WellKind::Injector => "INJ",
            WellKind::Producer => "PRD",
        }
    }

    /// Parse the CSV tag back into a kind.
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "INJ" => Ok(WellKind::Injector),
            "PRD" => Ok(WellKind::Producer),
            other => Err(Error::invalid(format!(
                "unknown well kind tag {other:?} (expected INJ or PRD)"
            ))),
        }
    }
}

/// A single well: identifier plus areal position in ft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Well {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("well id must be non-empty"));
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!(
                "well {id} has non-finite coordinates ({x}, {y})"
            )));
        }
        Ok(Well { id, x, y })
    }
}

/// The injector and producer sets of one field case.
///
/// Ordering is meaningful: every rate panel column, adjacency row/column and
/// connectivity entry is indexed by position in these vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellNetwork {
    injectors: Vec<Well>,
    producers: Vec<Well>,
}

impl WellNetwork {
    /// Build a network, rejecting empty sides and duplicate ids.
    pub fn new(injectors: Vec<Well>, producers: Vec<Well>) -> Result<Self> {
        if injectors.is_empty() || producers.is_empty() {
            return Err(Error::invalid(
                "a well network needs at least one injector and one producer",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for well in injectors.iter().chain(producers.iter()) {
            if !seen.insert(well.id.as_str()) {
                return Err(Error::invalid(format!("duplicate well id {:?}", well.id)));
            }
        }
        Ok(WellNetwork {
            injectors,
            producers,
        })
    }

    pub fn injectors(&self) -> &[Well] {
        &self.injectors
    }

    pub fn producers(&self) -> &[Well] {
        &self.producers
    }

    pub fn n_injectors(&self) -> usize {
        self.injectors.len()
    }

    pub fn n_producers(&self) -> usize {
        self.producers.len()
    }

    pub fn injector_ids(&self) -> Vec<String> {
        self.injectors.iter().map(|w| w.id.clone()).collect()
    }

    pub fn producer_ids(&self) -> Vec<String> {
        self.producers.iter().map(|w| w.id.clone()).collect()
    }
}
