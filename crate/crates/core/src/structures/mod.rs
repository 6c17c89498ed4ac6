//! Periodic atomic structures: lattice, atoms with role tags, and the
//! geometry helpers every other module builds on.

mod extxyz;
mod registry;
mod slab;

pub use extxyz::{parse_extxyz, parse_extxyz_frames, write_extxyz, write_extxyz_with, WriteOptions};
pub use registry::{adsorbate_from_registry, registry_keys, AdsorbateSpec};
pub use slab::{build_slab, parse_formula, reduce_miller, BulkSpec, ElementalStructure, LatticeTable, SlabMetadata};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elements;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Closest allowed approach of two atoms in any valid structure, Å.
pub const MIN_PAIR_DISTANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown element '{symbol}', line {line}")]
    UnknownElement { symbol: String, line: usize },
    #[error("unknown element '{0}'")]
    UnknownSymbol(String),
    #[error("degenerate lattice: determinant {0:.3e} Å³")]
    DegenerateLattice(f64),
    #[error("invalid structure: {0}")]
    Invalid(String),
    #[error("atoms {i} and {j} are {distance:.4} Å apart (minimum {min} Å)")]
    Overlap {
        i: usize,
        j: usize,
        distance: f64,
        min: f64,
    },
    #[error("atom index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("unknown adsorbate '{key}' (registry keys: {})", known.join(", "))]
    UnknownAdsorbate { key: String, known: Vec<String> },
    #[error("io error for {path}: {message}")]
    Io { path: String, message: String },
}

/// Role of an atom during relaxation and site search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Tag {
    /// Sub-surface atom, held fixed.
    Fixed = 0,
    /// Free surface atom.
    Surface = 1,
    Adsorbate = 2,
}

impl From<Tag> for u8 {
    fn from(t: Tag) -> u8 {
        t as u8
    }
}

impl TryFrom<u8> for Tag {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Tag::Fixed),
            1 => Ok(Tag::Surface),
            2 => Ok(Tag::Adsorbate),
            other => Err(format!("invalid tag {other}, expected 0, 1 or 2")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// Rows are the cell vectors, Å.
    pub cell: [[f64; 3]; 3],
    pub pbc: [bool; 3],
}

impl Lattice {
    pub fn new(cell: [[f64; 3]; 3], pbc: [bool; 3]) -> Result<Self, StructureError> {
        let lattice = Lattice { cell, pbc };
        let det = lattice.matrix().determinant();
        if !det.is_finite() || det.abs() <= 1e-9 {
            return Err(StructureError::DegenerateLattice(det));
        }
        Ok(lattice)
    }

    pub fn cubic(a: f64) -> Self {
        Lattice {
            cell: [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]],
            pbc: [true; 3],
        }
    }

    pub fn vector(&self, i: usize) -> Vec3 {
        Vec3::from(self.cell[i])
    }

    /// Matrix whose columns are the cell vectors, so `cart = M * frac`.
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_columns(&[self.vector(0), self.vector(1), self.vector(2)])
    }

    pub fn volume(&self) -> f64 {
        self.matrix().determinant().abs()
    }

    pub fn to_fractional(&self, cart: &Vec3) -> Vec3 {
        let inv = self
            .matrix()
            .try_inverse()
            .expect("lattice validated as non-degenerate");
        inv * cart
    }

    pub fn to_cartesian(&self, frac: &Vec3) -> Vec3 {
        self.matrix() * frac
    }

    /// Area of the parallelogram spanned by the first two vectors projected
    /// onto the xy plane.
    pub fn in_plane_area(&self) -> f64 {
        let a = self.vector(0);
        let b = self.vector(1);
        (a.x * b.y - a.y * b.x).abs()
    }

    /// Distance between lattice planes spanned by the other two vectors.
    pub fn perpendicular_width(&self, i: usize) -> f64 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let n = self.vector(j).cross(&self.vector(k));
        self.volume() / n.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: u8,
    pub position: Vec3,
    pub tag: Tag,
}

impl Atom {
    pub fn new(symbol: &str, position: Vec3, tag: Tag) -> Result<Self, StructureError> {
        let z = elements::atomic_number(symbol).ok_or_else(|| StructureError::UnknownSymbol(symbol.to_string()))?;
        Ok(Atom { z, position, tag })
    }

    pub fn symbol(&self) -> &'static str {
        elements::symbol(self.z).expect("z validated on construction")
    }

    pub fn mass(&self) -> f64 {
        elements::atomic_mass(self.z).expect("z validated on construction")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub lattice: Lattice,
    pub atoms: Vec<Atom>,
}

impl Structure {
    /// Builds a structure and checks every invariant: at least one atom,
    /// finite coordinates, valid atomic numbers, no pair closer than 0.1 Å.
    pub fn new(lattice: Lattice, atoms: Vec<Atom>) -> Result<Self, StructureError> {
        let s = Structure { lattice, atoms };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        Lattice::new(self.lattice.cell, self.lattice.pbc)?;
        if self.atoms.is_empty() {
            return Err(StructureError::Invalid("structure has no atoms".into()));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.z == 0 || a.z > elements::MAX_Z {
                return Err(StructureError::Invalid(format!("atom {i} has invalid Z {}", a.z)));
            }
            if !a.position.iter().all(|c| c.is_finite()) {
                return Err(StructureError::Invalid(format!("atom {i} has a non-finite coordinate")));
            }
        }
        if let Some((i, j, d)) = self.closest_pair() {
            if d < MIN_PAIR_DISTANCE {
                return Err(StructureError::Overlap {
                    i,
                    j,
                    distance: d,
                    min: MIN_PAIR_DISTANCE,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn symbols(&self) -> Vec<&'static str> {
        self.atoms.iter().map(|a| a.symbol()).collect()
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.atoms.iter().map(|a| a.tag).collect()
    }

    /// Same lattice, atoms and tags, new positions. No validation.
    pub fn with_positions(&self, positions: &[Vec3]) -> Structure {
        assert_eq!(positions.len(), self.atoms.len());
        let atoms = self
            .atoms
            .iter()
            .zip(positions)
            .map(|(a, p)| Atom {
                position: *p,
                ..a.clone()
            })
            .collect();
        Structure {
            lattice: self.lattice.clone(),
            atoms,
        }
    }

    /// Periodic image offsets (in units of cell vectors) consulted for
    /// minimum-image distances: ±1 along every periodic direction.
    pub(crate) fn neighbor_images(&self) -> Vec<Vec3> {
        let range = |p: bool| if p { -1..=1 } else { 0..=0 };
        let mut out = Vec::with_capacity(27);
        for i in range(self.lattice.pbc[0]) {
            for j in range(self.lattice.pbc[1]) {
                for k in range(self.lattice.pbc[2]) {
                    out.push(self.lattice.to_cartesian(&Vec3::new(i as f64, j as f64, k as f64)));
                }
            }
        }
        out
    }

    /// Shortest displacement vector from atom `i` to any periodic image of
    /// atom `j`.
    pub fn min_image_vector(&self, i: usize, j: usize) -> Result<Vec3, StructureError> {
        let images = self.neighbor_images();
        let (pi, pj) = (self.position(i)?, self.position(j)?);
        Ok(min_image_with(&images, &(pj - pi)))
    }

    pub fn min_image_distance(&self, i: usize, j: usize) -> Result<f64, StructureError> {
        if i == j {
            return Err(StructureError::Invalid(format!(
                "min_image_distance needs two distinct atoms, got {i} twice"
            )));
        }
        Ok(self.min_image_vector(i, j)?.norm())
    }

    fn position(&self, i: usize) -> Result<Vec3, StructureError> {
        self.atoms
            .get(i)
            .map(|a| a.position)
            .ok_or(StructureError::IndexOutOfRange {
                index: i,
                len: self.atoms.len(),
            })
    }

    /// The closest pair of atoms under minimum image, if there are two atoms.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let images = self.neighbor_images();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.atoms.len() {
            for j in (i + 1)..self.atoms.len() {
                let d = min_image_with(&images, &(self.atoms[j].position - self.atoms[i].position)).norm();
                if best.is_none_or(|b| d < b.2) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    /// Index lists by tag.
    pub fn indices_with_tag(&self, tag: Tag) -> Vec<usize> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.tag == tag)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct element symbols in first-appearance order.
    pub fn element_set(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for a in &self.atoms {
            if !out.contains(&a.symbol()) {
                out.push(a.symbol());
            }
        }
        out
    }

    /// Hill-ordered composition string such as "Cu4Pd12".
    pub fn formula(&self) -> String {
        let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
        for a in &self.atoms {
            *counts.entry(a.symbol()).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(s, n)| if n == 1 { s.to_string() } else { format!("{s}{n}") })
            .collect()
    }
}

pub(crate) fn min_image_with(images: &[Vec3], d: &Vec3) -> Vec3 {
    let mut best = *d;
    let mut best_norm = d.norm_squared();
    for t in images {
        let c = d + t;
        let n = c.norm_squared();
        if n < best_norm {
            best = c;
            best_norm = n;
        }
    }
    best
}

/// Centroid of a set of points.
pub fn centroid(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / points.len() as f64
}
