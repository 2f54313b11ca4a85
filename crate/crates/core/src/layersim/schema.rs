//! JSON description of layer stacks and material tables.
//!
//! A stack file looks like
//!
//! ```json
//! {
//!   "layers": [
//!     { "material": "Pt", "thickness_nm": 0.5 },
//!     { "material": "Fe57", "thickness_nm": 0.3, "abundance": 1.0 }
//!   ],
//!   "substrate": "Si",
//!   "materials": { "Pt": { "delta": 1.6e-5, "beta": 2.5e-6 } },
//!   "resonance": { "omega0_kev": 14.4125, "linewidth_nev": 4.66, "strength": 2.38e-4 }
//! }
//! ```
//!
//! `substrate` defaults to `"Si"`; `materials` entries override the material
//! table; `resonance` overrides the ⁵⁷Fe defaults. A layer carrying
//! `abundance` is the nuclear-resonant layer. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, LayerStack, Material, NuclearSusceptibility, FE57_RESONANT_STRENGTH};
use crate::error::{Error, Result};
use crate::model::{FE57_LINEWIDTH, FE57_TRANSITION_KEV};

/// Environment variable naming a material table that replaces the built-in one.
pub const MATERIALS_ENV: &str = "FANO_CAVITY_MATERIALS";

const BUILTIN_MATERIALS: &str = include_str!("../../../../data/materials_14.4keV.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub delta: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialTable(pub BTreeMap<String, MaterialEntry>);

impl MaterialTable {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("material table: {e}")))
    }

    pub fn material(&self, name: &str) -> Result<Material<f64>> {
        let entry = self
            .0
            .get(name)
            .ok_or_else(|| Error::Schema(format!("unknown material '{name}'")))?;
        Material::new(name, entry.delta, entry.beta)
    }

    /// Entries of `other` take precedence.
    pub fn merged(&self, other: &BTreeMap<String, MaterialEntry>) -> Self {
        let mut out = self.clone();
        out.0.extend(other.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }
}

/// Optical constants at 14.4 keV for the materials of the reference cavities.
pub fn default_material_table() -> MaterialTable {
    MaterialTable::parse(BUILTIN_MATERIALS).expect("built-in material table parses")
}

/// Reads the table named by `FANO_CAVITY_MATERIALS` if set, else the built-in one.
pub fn load_material_table() -> Result<MaterialTable> {
    match std::env::var_os(MATERIALS_ENV) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)?;
            MaterialTable::parse(&text)
        }
        None => Ok(default_material_table()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackLayerSpec {
    pub material: String,
    pub thickness_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abundance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSpec {
    pub omega0_kev: Option<f64>,
    pub linewidth_nev: Option<f64>,
    /// Peak susceptibility at full abundance.
    pub strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackFile {
    pub layers: Vec<StackLayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub materials: Option<BTreeMap<String, MaterialEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance: Option<ResonanceSpec>,
}

impl StackFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("stack file: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    /// Resolves material names against `table` (plus inline overrides).
    pub fn build(&self, table: &MaterialTable) -> Result<LayerStack<f64>> {
        if self.layers.is_empty() {
            return Err(Error::Schema(
                "stack file: 'layers' must not be empty".into(),
            ));
        }
        let table = match &self.materials {
            Some(extra) => table.merged(extra),
            None => table.clone(),
        };
        let res = self.resonance.unwrap_or_default();
        let omega0 = res.omega0_kev.unwrap_or(FE57_TRANSITION_KEV);
        let gamma = match res.linewidth_nev {
            Some(nev) => nev * 1e-9 / (omega0 * 1e3),
            None => FE57_LINEWIDTH,
        };
        let strength = res.strength.unwrap_or(FE57_RESONANT_STRENGTH);

        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, entry) in self.layers.iter().enumerate() {
            let material = table
                .material(&entry.material)
                .map_err(|e| Error::Schema(format!("layers[{i}]: {e}")))?;
            let layer = match entry.abundance {
                Some(abundance) => Layer::resonant(
                    material,
                    entry.thickness_nm,
                    NuclearSusceptibility {
                        omega0_kev: omega0,
                        gamma,
                        full_strength: strength,
                        abundance,
                    },
                ),
                None => Layer::new(material, entry.thickness_nm),
            };
            layers.push(layer);
        }
        let substrate = table.material(self.substrate.as_deref().unwrap_or("Si"))?;
        LayerStack::new(layers, substrate).map_err(|e| Error::Schema(e.to_string()))
    }
}
