use serde::{Deserialize, Serialize};

use super::RelaxError;
use crate::elements;
use crate::structures::{min_image_with, Structure, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyThresholds {
    /// Pairs closer than this multiple of the covalent-radius sum are bonds.
    pub bond_factor: f64,
    pub max_stretch: f64,
    pub desorption_distance: f64,
    pub reconstruction_displacement: f64,
}

impl Default for AnomalyThresholds {
    fn default() -> Self {
        AnomalyThresholds {
            bond_factor: 1.25,
            max_stretch: 2.0,
            desorption_distance: 3.5,
            reconstruction_displacement: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnomalyFlags {
    pub dissociated: bool,
    /// Largest final/initial length ratio over initial adsorbate bonds.
    pub max_stretch_ratio: Option<f64>,
    pub desorbed: bool,
    pub min_adsorbate_surface_distance: Option<f64>,
    pub reconstructed: bool,
    pub max_surface_displacement: Option<f64>,
}

impl AnomalyFlags {
    pub fn is_clean(&self) -> bool {
        !(self.dissociated || self.desorbed || self.reconstructed)
    }

    pub fn describe(&self) -> Option<String> {
        let mut parts = Vec::new();
        if self.dissociated {
            parts.push(format!(
                "dissociated (stretch {:.2}x)",
                self.max_stretch_ratio.unwrap_or(f64::NAN)
            ));
        }
        if self.desorbed {
            parts.push(format!(
                "desorbed ({:.2} Å from the surface)",
                self.min_adsorbate_surface_distance.unwrap_or(f64::NAN)
            ));
        }
        if self.reconstructed {
            parts.push(format!(
                "surface reconstructed ({:.2} Å displacement)",
                self.max_surface_displacement.unwrap_or(f64::NAN)
            ));
        }
        (!parts.is_empty()).then(|| parts.join(", "))
    }
}

/// Compares a relaxed structure with its starting point.
pub fn detect_anomalies(
    initial: &Structure,
    final_: &Structure,
    th: &AnomalyThresholds,
) -> Result<AnomalyFlags, RelaxError> {
    if initial.len() != final_.len() || initial.atoms.iter().zip(&final_.atoms).any(|(a, b)| a.z != b.z) {
        return Err(RelaxError::Mismatch(initial.len(), final_.len()));
    }
    let images = final_.neighbor_images();
    // across the vacuum gap an adsorbate is never "near" the slab underside
    let in_plane: Vec<_> = images.iter().filter(|t| t.z.abs() < 1e-9).copied().collect();
    let dist = |s: &Structure, i: usize, j: usize| {
        min_image_with(&images, &(s.atoms[j].position - s.atoms[i].position)).norm()
    };
    let ads = initial.indices_with_tag(Tag::Adsorbate);
    let slab: Vec<usize> = (0..initial.len())
        .filter(|&i| initial.atoms[i].tag != Tag::Adsorbate)
        .collect();

    let mut max_stretch: Option<f64> = None;
    for (x, &i) in ads.iter().enumerate() {
        for &j in &ads[x + 1..] {
            let r0 = dist(initial, i, j);
            let ri = elements::covalent_radius(initial.atoms[i].z).unwrap_or(1.5);
            let rj = elements::covalent_radius(initial.atoms[j].z).unwrap_or(1.5);
            if r0 <= th.bond_factor * (ri + rj) {
                let ratio = dist(final_, i, j) / r0;
                max_stretch = Some(max_stretch.map_or(ratio, |m: f64| m.max(ratio)));
            }
        }
    }

    let mut min_dist: Option<f64> = None;
    for &i in &ads {
        for &j in &slab {
            let d = min_image_with(&in_plane, &(final_.atoms[j].position - final_.atoms[i].position)).norm();
            min_dist = Some(min_dist.map_or(d, |m: f64| m.min(d)));
        }
    }

    let mut max_disp: Option<f64> = None;
    for i in initial.indices_with_tag(Tag::Surface) {
        let d = min_image_with(&images, &(final_.atoms[i].position - initial.atoms[i].position)).norm();
        max_disp = Some(max_disp.map_or(d, |m: f64| m.max(d)));
    }

    Ok(AnomalyFlags {
        dissociated: max_stretch.is_some_and(|r| r > th.max_stretch),
        max_stretch_ratio: max_stretch,
        desorbed: min_dist.is_some_and(|d| d > th.desorption_distance),
        min_adsorbate_surface_distance: min_dist,
        reconstructed: max_disp.is_some_and(|d| d > th.reconstruction_displacement),
        max_surface_displacement: max_disp,
    })
}
