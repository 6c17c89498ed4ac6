//! A small slab builder for cubic bulks (fcc, bcc, L1₂ A₃B) cut along the
//! low-index families {111}, {100} and {110}.
//!
//! The cut works on the Bravais lattice of the bulk: it finds a primitive 2-D
//! cell of the lattice plane normal to (h,k,l), a third lattice vector that
//! steps exactly one interplanar spacing, and groups basis atoms into atomic
//! planes by their height modulo that spacing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Atom, Lattice, Structure, StructureError, Tag, Vec3};
use crate::elements;

const DEFAULT_LATTICE_TABLE: &str = include_str!("../../../../assets/lattice_constants.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BulkSpec {
    Fcc {
        element: String,
        a: f64,
    },
    Bcc {
        element: String,
        a: f64,
    },
    /// A₃B in the Cu₃Au structure: B on cube corners, A on face centres.
    L12 {
        a_element: String,
        b_element: String,
        a: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabMetadata {
    pub bulk_formula: String,
    pub miller: [i32; 3],
    /// Fraction of the bulk repeat along the normal selecting the top
    /// termination (nearest atomic plane wins).
    pub shift: f64,
    /// `false` flips the slab so the bottom termination faces +z.
    pub top: bool,
    pub layers: usize,
    pub vacuum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpid: Option<String>,
}

impl SlabMetadata {
    pub fn new(bulk_formula: &str, miller: [i32; 3], layers: usize) -> Self {
        SlabMetadata {
            bulk_formula: bulk_formula.to_string(),
            miller,
            shift: 0.0,
            top: true,
            layers,
            vacuum: 15.0,
            mpid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementalStructure {
    Fcc,
    Bcc,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct LatticeEntry {
    structure: ElementalStructure,
    a: f64,
}

/// Default elemental bulk structures and lattice constants, Å.
#[derive(Debug, Clone)]
pub struct LatticeTable {
    entries: HashMap<String, LatticeEntry>,
}

impl Default for LatticeTable {
    fn default() -> Self {
        LatticeTable::from_toml(DEFAULT_LATTICE_TABLE).expect("shipped lattice table parses")
    }
}

impl LatticeTable {
    pub fn from_toml(text: &str) -> Result<Self, StructureError> {
        let entries: HashMap<String, LatticeEntry> =
            toml::from_str(text).map_err(|e| StructureError::Invalid(format!("lattice table: {e}")))?;
        Ok(LatticeTable { entries })
    }

    pub fn set(&mut self, element: &str, structure: ElementalStructure, a: f64) {
        self.entries.insert(element.to_string(), LatticeEntry { structure, a });
    }

    fn entry(&self, element: &str) -> Result<LatticeEntry, StructureError> {
        self.entries.get(element).copied().ok_or_else(|| {
            StructureError::Unsupported(format!(
                "no default lattice constant for '{element}'; supply a slab file instead"
            ))
        })
    }

    fn atomic_volume(&self, element: &str) -> Result<f64, StructureError> {
        let e = self.entry(element)?;
        Ok(match e.structure {
            ElementalStructure::Fcc => e.a.powi(3) / 4.0,
            ElementalStructure::Bcc => e.a.powi(3) / 2.0,
        })
    }

    /// Resolves a catalyst formula. Elemental formulas use the table entry;
    /// A₃B stoichiometries (after reducing, e.g. Cu6Ga2) become L1₂ with the
    /// lattice constant from averaged atomic volumes.
    pub fn bulk_for_formula(&self, formula: &str) -> Result<BulkSpec, StructureError> {
        let counts = parse_formula(formula)?;
        match counts.as_slice() {
            [(el, _)] => {
                let e = self.entry(el)?;
                Ok(match e.structure {
                    ElementalStructure::Fcc => BulkSpec::Fcc {
                        element: el.clone(),
                        a: e.a,
                    },
                    ElementalStructure::Bcc => BulkSpec::Bcc {
                        element: el.clone(),
                        a: e.a,
                    },
                })
            }
            [(e1, n1), (e2, n2)] if *n1 == 3 * *n2 || *n2 == 3 * *n1 => {
                let (major, minor) = if n1 > n2 { (e1, e2) } else { (e2, e1) };
                let v = 3.0 * self.atomic_volume(major)? + self.atomic_volume(minor)?;
                Ok(BulkSpec::L12 {
                    a_element: major.clone(),
                    b_element: minor.clone(),
                    a: v.cbrt(),
                })
            }
            _ => Err(StructureError::Unsupported(format!(
                "bulk '{formula}': the builder handles elemental fcc/bcc and A3B (L1₂) only; \
                 provide other catalysts as extXYZ slab files"
            ))),
        }
    }
}

/// Parses a formula such as "CuPd3" into reduced (element, count) pairs in
/// order of appearance.
pub fn parse_formula(formula: &str) -> Result<Vec<(String, u32)>, StructureError> {
    let mut out: Vec<(String, u32)> = Vec::new();
    let chars: Vec<char> = formula.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_uppercase() {
            return Err(StructureError::Invalid(format!("malformed formula '{formula}'")));
        }
        let mut sym = chars[i].to_string();
        i += 1;
        while i < chars.len() && chars[i].is_ascii_lowercase() {
            sym.push(chars[i]);
            i += 1;
        }
        let mut digits = String::new();
        while i < chars.len() && chars[i].is_ascii_digit() {
            digits.push(chars[i]);
            i += 1;
        }
        if !elements::is_valid_symbol(&sym) {
            return Err(StructureError::UnknownSymbol(sym));
        }
        let n: u32 = if digits.is_empty() {
            1
        } else {
            digits.parse().unwrap_or(0)
        };
        if n == 0 {
            return Err(StructureError::Invalid(format!("malformed formula '{formula}'")));
        }
        match out.iter_mut().find(|(s, _)| *s == sym) {
            Some(e) => e.1 += n,
            None => out.push((sym, n)),
        }
    }
    if out.is_empty() {
        return Err(StructureError::Invalid("empty formula".into()));
    }
    let g = out.iter().fold(0, |g, (_, n)| gcd(g, *n as i64)) as u32;
    for e in &mut out {
        e.1 /= g;
    }
    Ok(out)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Reduces a Miller index by the gcd of its components.
pub fn reduce_miller(m: [i32; 3]) -> Result<[i32; 3], StructureError> {
    if m == [0, 0, 0] {
        return Err(StructureError::Invalid("Miller index (0,0,0) is not a plane".into()));
    }
    let g = gcd(gcd(m[0] as i64, m[1] as i64), m[2] as i64) as i32;
    Ok([m[0] / g, m[1] / g, m[2] / g])
}

const SUPPORTED: &str = "supported: fcc, bcc, L1₂ (A3B) bulks with (1,1,1), (1,0,0), (1,1,0) cuts \
                         (any permutation or sign)";

struct Bravais {
    /// Primitive vectors, Cartesian, cubic frame.
    vectors: [Vec3; 3],
    /// Basis atoms (Z, Cartesian offset).
    basis: Vec<(u8, Vec3)>,
}

fn z_of(symbol: &str) -> Result<u8, StructureError> {
    elements::atomic_number(symbol).ok_or_else(|| StructureError::UnknownSymbol(symbol.to_string()))
}

fn bravais(bulk: &BulkSpec) -> Result<Bravais, StructureError> {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    Ok(match bulk {
        BulkSpec::Fcc { element, a } => Bravais {
            vectors: [v(0.0, 0.5, 0.5) * *a, v(0.5, 0.0, 0.5) * *a, v(0.5, 0.5, 0.0) * *a],
            basis: vec![(z_of(element)?, Vec3::zeros())],
        },
        BulkSpec::Bcc { element, a } => Bravais {
            vectors: [v(-0.5, 0.5, 0.5) * *a, v(0.5, -0.5, 0.5) * *a, v(0.5, 0.5, -0.5) * *a],
            basis: vec![(z_of(element)?, Vec3::zeros())],
        },
        BulkSpec::L12 {
            a_element,
            b_element,
            a,
        } => {
            let (za, zb) = (z_of(a_element)?, z_of(b_element)?);
            Bravais {
                vectors: [v(1.0, 0.0, 0.0) * *a, v(0.0, 1.0, 0.0) * *a, v(0.0, 0.0, 1.0) * *a],
                basis: vec![
                    (zb, Vec3::zeros()),
                    (za, v(0.0, 0.5, 0.5) * *a),
                    (za, v(0.5, 0.0, 0.5) * *a),
                    (za, v(0.5, 0.5, 0.0) * *a),
                ],
            }
        }
    })
}

fn lattice_constant(bulk: &BulkSpec) -> f64 {
    match bulk {
        BulkSpec::Fcc { a, .. } | BulkSpec::Bcc { a, .. } | BulkSpec::L12 { a, .. } => *a,
    }
}

struct SurfaceCell {
    v1: Vec3,
    v2: Vec3,
    v3: Vec3,
    normal: Vec3,
    spacing: f64,
}

fn surface_cell(lat: &Bravais, miller: [i32; 3]) -> SurfaceCell {
    let normal = Vec3::new(miller[0] as f64, miller[1] as f64, miller[2] as f64).normalize();
    let mut vectors = Vec::new();
    let r = 4i32;
    for i in -r..=r {
        for j in -r..=r {
            for k in -r..=r {
                if (i, j, k) == (0, 0, 0) {
                    continue;
                }
                vectors.push(lat.vectors[0] * i as f64 + lat.vectors[1] * j as f64 + lat.vectors[2] * k as f64);
            }
        }
    }
    let eps = 1e-8;
    let spacing = vectors
        .iter()
        .map(|v| v.dot(&normal))
        .filter(|h| *h > eps)
        .fold(f64::INFINITY, f64::min);
    let volume = lat.vectors[0].cross(&lat.vectors[1]).dot(&lat.vectors[2]).abs();
    let area = volume / spacing;

    let mut in_plane: Vec<Vec3> = vectors.iter().copied().filter(|v| v.dot(&normal).abs() < eps).collect();
    // deterministic order: by length, then lexicographically descending coordinates
    in_plane.sort_by(|a, b| {
        if (a.norm() - b.norm()).abs().gt(&1e-9) {
            a.norm().partial_cmp(&b.norm()).unwrap()
        } else {
            {
                b.as_slice()
                    .iter()
                    .zip(a.as_slice())
                    .map(|(x, y)| x.partial_cmp(y).unwrap())
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            }
        }
    });
    let v1 = in_plane[0];
    let v2 = in_plane
        .iter()
        .copied()
        .filter(|c| {
            let cr = v1.cross(c);
            (cr.norm() - area).abs() < 1e-6 * area && cr.dot(&normal) > 0.0
        })
        .min_by(|a, b| {
            let key = |v: &Vec3| (v.norm() * 1e6).round() as i64;
            key(a)
                .cmp(&key(b))
                .then_with(|| (v1.dot(a) > 1e-9).cmp(&(v1.dot(b) > 1e-9)))
        })
        .expect("a primitive in-plane partner exists for low-index planes");
    let v3 = vectors
        .iter()
        .copied()
        .filter(|v| (v.dot(&normal) - spacing).abs() < eps)
        .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .expect("a lattice vector reaches the next plane");
    SurfaceCell {
        v1,
        v2,
        v3,
        normal,
        spacing,
    }
}

fn check_supported(miller: [i32; 3]) -> Result<(), StructureError> {
    let mut abs: Vec<i32> = miller.iter().map(|m| m.abs()).collect();
    abs.sort_unstable_by(|a, b| b.cmp(a));
    match abs.as_slice() {
        [1, 1, 1] | [1, 0, 0] | [1, 1, 0] => Ok(()),
        _ => Err(StructureError::Unsupported(format!(
            "Miller index ({},{},{}); {SUPPORTED}",
            miller[0], miller[1], miller[2]
        ))),
    }
}

/// Cuts a slab with `meta.layers` atomic layers and `meta.vacuum` Å of empty
/// space above the top layer, replicated `supercell` times in-plane.
/// The bottom ⌈layers/2⌉ layers are tagged fixed, the rest free surface.
pub fn build_slab(
    bulk: &BulkSpec,
    meta: &SlabMetadata,
    supercell: (usize, usize),
) -> Result<Structure, StructureError> {
    let miller = reduce_miller(meta.miller)?;
    check_supported(miller)?;
    if meta.layers == 0 {
        return Err(StructureError::Invalid("layers must be positive".into()));
    }
    if meta.vacuum < 8.0 {
        return Err(StructureError::Invalid(format!(
            "vacuum {} Å is below the 8 Å minimum",
            meta.vacuum
        )));
    }
    if !(0.0..1.0).contains(&meta.shift) {
        return Err(StructureError::Invalid(format!(
            "shift {} must lie in [0, 1)",
            meta.shift
        )));
    }
    let (nx, ny) = supercell;
    if nx == 0 || ny == 0 {
        return Err(StructureError::Invalid("supercell repeats must be positive".into()));
    }
    let a = lattice_constant(bulk);
    if !(a.is_finite() && a > 0.0) {
        return Err(StructureError::Invalid(format!(
            "lattice constant {a} must be positive"
        )));
    }

    let lat = bravais(bulk)?;
    let cell = surface_cell(&lat, miller);
    let d = cell.spacing;

    // Group basis atoms into planes by fractional height within one repeat.
    // Each entry: (fraction, Z, offset) where `offset` brings the basis atom
    // to height fraction·d.
    let mut members: Vec<(f64, u8, Vec3)> = Vec::new();
    for (z, b) in &lat.basis {
        let h = b.dot(&cell.normal) / d;
        let mut s = h.floor();
        let mut f = h - s;
        if f > 1.0 - 1e-9 {
            f = 0.0;
            s += 1.0;
        }
        members.push((f, *z, b - cell.v3 * s));
    }
    let mut fractions: Vec<f64> = Vec::new();
    for (f, _, _) in &members {
        if !fractions.iter().any(|g| (g - f).abs() < 1e-6) {
            fractions.push(*f);
        }
    }
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = fractions.len();

    // top termination = plane whose fraction is circularly closest to shift
    let circ = |x: f64| {
        let t = (x - meta.shift).rem_euclid(1.0);
        t.min(1.0 - t)
    };
    let q_top = (0..m)
        .min_by(|&i, &j| circ(fractions[i]).partial_cmp(&circ(fractions[j])).unwrap())
        .unwrap();

    // global plane index p = r*m + q, top plane at p_top, count down
    let p_top = (meta.layers as i64 - 1) / m as i64 * m as i64 + m as i64 + q_top as i64;
    let e1 = cell.v1.normalize();
    let e3 = cell.normal;
    let e2 = e3.cross(&e1);
    let to_frame = |v: &Vec3| Vec3::new(v.dot(&e1), v.dot(&e2), v.dot(&e3));
    let (c1, c2) = (to_frame(&cell.v1), to_frame(&cell.v2));
    // 2-D fractional coordinates in the primitive surface cell
    let det2 = c1.x * c2.y - c1.y * c2.x;
    let frac2 = |p: &Vec3| ((p.x * c2.y - p.y * c2.x) / det2, (c1.x * p.y - c1.y * p.x) / det2);

    let mut layers: Vec<Vec<(u8, Vec3)>> = Vec::with_capacity(meta.layers);
    for li in 0..meta.layers {
        let p = p_top - (meta.layers as i64 - 1) + li as i64;
        let (r, q) = (p.div_euclid(m as i64), p.rem_euclid(m as i64) as usize);
        let mut layer = Vec::new();
        for (f, z, off) in &members {
            if (f - fractions[q]).abs() >= 1e-6 {
                continue;
            }
            let pos = to_frame(&(off + cell.v3 * r as f64));
            let (u, v) = frac2(&pos);
            let (u, v) = (wrap(u), wrap(v));
            for j in 0..ny {
                for i in 0..nx {
                    let uu = u + i as f64;
                    let vv = v + j as f64;
                    layer.push((*z, Vec3::new(uu * c1.x + vv * c2.x, uu * c1.y + vv * c2.y, pos.z)));
                }
            }
        }
        layers.push(layer);
    }

    let z_bottom = layers[0][0].1.z;
    let z_top = layers[meta.layers - 1][0].1.z;
    let thickness = z_top - z_bottom;
    let n_fixed = meta.layers.div_ceil(2);
    let a_vec = c1 * nx as f64;
    let b_vec = c2 * ny as f64;

    let mut atoms = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let tag = if li < n_fixed { Tag::Fixed } else { Tag::Surface };
        for (z, p) in layer {
            let mut pos = Vec3::new(p.x, p.y, p.z - z_bottom);
            if !meta.top {
                pos = Vec3::new(pos.x, -pos.y, thickness - pos.z);
            }
            atoms.push(Atom {
                z: *z,
                position: pos,
                tag,
            });
        }
    }
    if !meta.top {
        // flipping reverses layer order and in-plane chirality; re-wrap and
        // keep bottom-to-top ordering with the bottom half fixed
        let det = a_vec.x * b_vec.y - a_vec.y * b_vec.x;
        for at in &mut atoms {
            let p = at.position;
            let u = wrap((p.x * b_vec.y - p.y * b_vec.x) / det);
            let v = wrap((a_vec.x * p.y - a_vec.y * p.x) / det);
            at.position = Vec3::new(u * a_vec.x + v * b_vec.x, u * a_vec.y + v * b_vec.y, p.z);
        }
        atoms.reverse();
        let per_layer = atoms.len() / meta.layers;
        for (k, at) in atoms.iter_mut().enumerate() {
            at.tag = if k / per_layer < n_fixed {
                Tag::Fixed
            } else {
                Tag::Surface
            };
        }
    }

    let lattice = Lattice::new(
        [
            [a_vec.x, a_vec.y, 0.0],
            [b_vec.x, b_vec.y, 0.0],
            [0.0, 0.0, thickness + meta.vacuum],
        ],
        [true, true, true],
    )?;
    Structure::new(lattice, atoms)
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w > 1.0 - 1e-9 {
        0.0
    } else {
        w
    }
}
