//! Named plate materials and their JSON file format.
//!
//! A preset file is a JSON array of [`MaterialPreset`] objects. Lookup order
//! is: files in the directory named by `LEVKIT_CONFIG_DIR` (every `*.json`
//! there), then the built-in table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LevitationError, PlateSpec};

/// Environment variable naming an extra preset search directory.
pub const CONFIG_DIR_ENV: &str = "LEVKIT_CONFIG_DIR";

/// Susceptibility along the c-axis of HOPG, the reference for `c̃`.
pub const HOPG_CHI_Z: f64 = -450e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialPreset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Plate geometry and material; `side_length`/`thickness` are only used
    /// by SI-path computations.
    #[serde(flatten)]
    pub plate: PlateSpec,
}

fn preset(name: &str, description: &str, density: f64, chi: [f64; 3], side: f64, thickness: f64) -> MaterialPreset {
    MaterialPreset {
        name: name.to_string(),
        description: description.to_string(),
        plate: PlateSpec {
            side_length: side,
            thickness,
            density,
            chi,
        },
    }
}

/// Built-in presets.
///
/// `hopg_supp` (2700 kg/m³) and `hopg_main` (2070 kg/m³) carry the two
/// printed HOPG densities; `composite` is the −120×10⁻⁶ isotropic model,
/// with the measured powder value and the volume-fraction estimate as
/// alternatives.
pub fn builtin_presets() -> Vec<MaterialPreset> {
    let hopg = [-85e-6, -85e-6, -450e-6];
    let iso = |c: f64| [c, c, c];
    vec![
        preset("hopg_supp", "pyrolytic graphite, density used for the orientation landscapes", 2700.0, hopg, 12.4e-3, 0.7e-3),
        preset("hopg_main", "pyrolytic graphite, experimentally measured density", 2070.0, hopg, 12.4e-3, 0.7e-3),
        preset("composite", "coated-graphite/wax composite, isotropic model susceptibility", 1442.0, iso(-120e-6), 7.9e-3, 0.53e-3),
        preset("composite_powder", "composite with the measured powder susceptibility", 1442.0, iso(-218e-6), 7.9e-3, 0.53e-3),
        preset("composite_volfrac", "composite with the volume-fraction susceptibility estimate", 1442.0, iso(-90.2e-6), 7.9e-3, 0.53e-3),
        preset("composite_hopg_density", "composite susceptibility at the HOPG density", 2700.0, iso(-120e-6), 7.9e-3, 0.53e-3),
    ]
}

/// Reads a preset file (JSON array).
pub fn load_presets(path: &Path) -> Result<Vec<MaterialPreset>, LevitationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LevitationError::Preset(format!("{}: {e}", path.display())))?;
    let presets: Vec<MaterialPreset> = serde_json::from_str(&text)
        .map_err(|e| LevitationError::Preset(format!("{}: {e}", path.display())))?;
    for p in &presets {
        p.plate.validate()?;
    }
    Ok(presets)
}

fn search_dir_presets() -> Vec<MaterialPreset> {
    let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) else {
        return Vec::new();
    };
    let Ok(entries) = std::fs::read_dir(&dir) else {
        return Vec::new();
    };
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .filter_map(|p| load_presets(p).ok())
        .flatten()
        .collect()
}

/// Resolves a preset by name.
pub fn find_preset(name: &str) -> Result<MaterialPreset, LevitationError> {
    search_dir_presets()
        .into_iter()
        .chain(builtin_presets())
        .find(|p| p.name == name)
        .ok_or_else(|| LevitationError::Preset(format!("unknown material preset `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_and_unique() {
        let presets = builtin_presets();
        for p in &presets {
            p.plate.validate().unwrap();
        }
        let mut names: Vec<_> = presets.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), presets.len());
    }

    #[test]
    fn preset_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("materials.json");
        let presets = builtin_presets();
        std::fs::write(&path, serde_json::to_string_pretty(&presets).unwrap()).unwrap();
        assert_eq!(load_presets(&path).unwrap(), presets);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"density\""));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(find_preset("unobtainium").is_err());
        assert_eq!(find_preset("hopg_supp").unwrap().plate.density, 2700.0);
    }
}
