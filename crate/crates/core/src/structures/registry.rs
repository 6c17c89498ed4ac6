use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{centroid, parse_extxyz, StructureError, Vec3};
use crate::elements;

/// Registry keys and their shipped geometries. Atom order inside each asset
/// is frozen: binding indices refer to it.
const REGISTRY: &[(&str, &str)] = &[
    ("H", include_str!("../../../../assets/adsorbates/H.extxyz")),
    ("OH", include_str!("../../../../assets/adsorbates/OH.extxyz")),
    ("NNH", include_str!("../../../../assets/adsorbates/NNH.extxyz")),
    (
        "CH2CH2OH",
        include_str!("../../../../assets/adsorbates/CH2CH2OH.extxyz"),
    ),
    ("OCHCH3", include_str!("../../../../assets/adsorbates/OCHCH3.extxyz")),
    (
        "ONN(CH3)2",
        include_str!("../../../../assets/adsorbates/ONN(CH3)2.extxyz"),
    ),
];

/// A gas-phase adsorbate in its molecule-local frame, centroid at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsorbateSpec {
    pub key: String,
    pub atomic_numbers: Vec<u8>,
    pub positions: Vec<Vec3>,
}

impl AdsorbateSpec {
    pub fn new(key: &str, atomic_numbers: Vec<u8>, positions: Vec<Vec3>) -> Result<Self, StructureError> {
        if atomic_numbers.is_empty() || atomic_numbers.len() != positions.len() {
            return Err(StructureError::Invalid(format!(
                "adsorbate '{key}' needs matching, non-empty atom and position lists"
            )));
        }
        for &z in &atomic_numbers {
            if elements::symbol(z).is_none() {
                return Err(StructureError::Invalid(format!("adsorbate '{key}' has invalid Z {z}")));
            }
        }
        let c = centroid(&positions);
        let positions = positions.iter().map(|p| p - c).collect();
        Ok(AdsorbateSpec {
            key: key.to_string(),
            atomic_numbers,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }

    pub fn symbols(&self) -> Vec<&'static str> {
        self.atomic_numbers
            .iter()
            .map(|&z| elements::symbol(z).expect("validated"))
            .collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atomic_numbers
            .iter()
            .map(|&z| elements::atomic_mass(z).expect("validated"))
            .collect()
    }

    pub fn center_of_mass(&self) -> Vec3 {
        let masses = self.masses();
        let total: f64 = masses.iter().sum();
        self.positions
            .iter()
            .zip(&masses)
            .fold(Vec3::zeros(), |acc, (p, m)| acc + p * *m)
            / total
    }

    /// Pairs closer than `factor` times the sum of covalent radii.
    pub fn bonds(&self, factor: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let ri = elements::covalent_radius(self.atomic_numbers[i]).unwrap_or(1.5);
                let rj = elements::covalent_radius(self.atomic_numbers[j]).unwrap_or(1.5);
                if (self.positions[i] - self.positions[j]).norm() <= factor * (ri + rj) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn registry_keys() -> Vec<&'static str> {
    REGISTRY.iter().map(|(k, _)| *k).collect()
}

/// Looks up a built-in adsorbate, or reads `key` as an extXYZ path when it
/// is not a registry key.
pub fn adsorbate_from_registry(key: &str) -> Result<AdsorbateSpec, StructureError> {
    if let Some((_, text)) = REGISTRY.iter().find(|(k, _)| *k == key) {
        return from_extxyz(key, text);
    }
    let path = Path::new(key);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| StructureError::Io {
            path: key.to_string(),
            message: e.to_string(),
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(key);
        return from_extxyz(stem, &text);
    }
    Err(StructureError::UnknownAdsorbate {
        key: key.to_string(),
        known: registry_keys().into_iter().map(String::from).collect(),
    })
}

fn from_extxyz(key: &str, text: &str) -> Result<AdsorbateSpec, StructureError> {
    let s = parse_extxyz(text)?;
    AdsorbateSpec::new(
        key,
        s.atoms.iter().map(|a| a.z).collect(),
        s.atoms.iter().map(|a| a.position).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hydrogen() {
        let h = adsorbate_from_registry("H").unwrap();
        assert_eq!(h.atomic_numbers, vec![1]);
        assert_eq!(h.positions[0], Vec3::zeros());
    }

    #[test]
    fn nnh_order_and_connectivity() {
        let a = adsorbate_from_registry("NNH").unwrap();
        assert_eq!(a.atomic_numbers, vec![7, 7, 1]);
        let bonds = a.bonds(1.25);
        assert!(bonds.contains(&(0, 1)));
        assert!(bonds.contains(&(1, 2)));
        assert!(!bonds.contains(&(0, 2)));
    }

    #[test]
    fn ochch3_starts_with_o_c() {
        let a = adsorbate_from_registry("OCHCH3").unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(&a.atomic_numbers[..2], &[8, 6]);
    }

    #[test]
    fn every_entry_centered_and_consistent() {
        for key in registry_keys() {
            let a = adsorbate_from_registry(key).unwrap();
            assert!(centroid(&a.positions).norm() < 1e-12, "{key}");
            assert_eq!(a.symbols().len(), a.len());
        }
    }

    #[test]
    fn unknown_key_lists_registry() {
        let err = adsorbate_from_registry("XeF2").unwrap_err().to_string();
        assert!(err.contains("NNH") && err.contains("OCHCH3"), "{err}");
    }

    #[test]
    fn reads_geometry_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("CO.extxyz");
        std::fs::write(&p, "2\nLattice=\"20 0 0 0 20 0 0 0 20\"\nC 0 0 0\nO 0 0 1.13\n").unwrap();
        let a = adsorbate_from_registry(p.to_str().unwrap()).unwrap();
        assert_eq!(a.key, "CO");
        assert_eq!(a.atomic_numbers, vec![6, 8]);
    }
}
