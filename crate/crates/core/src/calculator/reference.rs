use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Calculator;
use crate::relax::{relax_structure, FireParams, RelaxError, Status};
use crate::structures::{write_extxyz, AdsorbateSpec, Atom, Lattice, Structure, Tag, Vec3};

pub const GAS_BOX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub e_slab: f64,
    pub e_gas: f64,
}

/// The adsorbate alone, centred in a non-periodic cubic box.
pub fn gas_phase(ads: &AdsorbateSpec) -> Structure {
    let centre = Vec3::repeat(GAS_BOX / 2.0);
    let atoms = ads
        .atomic_numbers
        .iter()
        .zip(&ads.positions)
        .map(|(&z, p)| Atom {
            z,
            position: p + centre,
            tag: Tag::Adsorbate,
        })
        .collect();
    Structure {
        lattice: Lattice::new(Lattice::cubic(GAS_BOX).cell, [false; 3]).expect("cubic box"),
        atoms,
    }
}

fn relaxed_energy(what: &str, s: &Structure, calc: &dyn Calculator, p: &FireParams) -> Result<f64, RelaxError> {
    let r = relax_structure(s, calc, p, false)?;
    match r.status {
        Status::Converged => Ok(r.energy),
        _ => Err(RelaxError::Reference(format!(
            "{what} relaxation ended {:?} after {} steps (max force {:.3e} eV/Å)",
            r.status, r.steps, r.max_force
        ))),
    }
}

/// Energies of the relaxed bare slab and the relaxed isolated adsorbate.
pub fn reference_energies(
    slab: &Structure,
    ads: &AdsorbateSpec,
    calc: &dyn Calculator,
    p: &FireParams,
) -> Result<References, RelaxError> {
    Ok(References {
        e_slab: relaxed_energy("slab", slab, calc, p)?,
        e_gas: relaxed_energy("gas-phase adsorbate", &gas_phase(ads), calc, p)?,
    })
}

/// Reference energies keyed by slab content, adsorbate, calculator and
/// optimizer settings; optionally persisted as JSON.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    entries: Mutex<BTreeMap<String, References>>,
    path: Option<PathBuf>,
}

impl ReferenceCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a cache file. Unreadable files start empty.
    pub fn at(path: &Path) -> Self {
        let entries = std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        ReferenceCache {
            entries: Mutex::new(entries),
            path: Some(path.to_path_buf()),
        }
    }

    pub fn key(slab: &Structure, ads: &AdsorbateSpec, calc: &dyn Calculator, p: &FireParams) -> String {
        let slab_hash = crate::sha256_hex(write_extxyz(slab).as_bytes());
        let ads_hash = crate::sha256_hex(serde_json::to_string(ads).expect("serialisable").as_bytes());
        let fire = serde_json::to_string(p).expect("serialisable");
        crate::sha256_hex(format!("{slab_hash}|{ads_hash}|{}|{fire}", calc.key()).as_bytes())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(
        &self,
        slab: &Structure,
        ads: &AdsorbateSpec,
        calc: &dyn Calculator,
        p: &FireParams,
    ) -> Result<References, RelaxError> {
        let key = Self::key(slab, ads, calc, p);
        if let Some(r) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(*r);
        }
        let r = reference_energies(slab, ads, calc, p)?;
        let mut entries = self.entries.lock().expect("cache lock");
        entries.insert(key, r);
        if let Some(path) = &self.path {
            let text = serde_json::to_string_pretty(&*entries).expect("serialisable");
            std::fs::write(path, text)
                .map_err(|e| RelaxError::Reference(format!("cannot write cache {}: {e}", path.display())))?;
        }
        Ok(r)
    }
}
