//! Energy and force evaluation: a Lennard-Jones pair potential for desk-scale
//! work and a JSON wire protocol for external models.

mod reference;
pub mod wire;

pub use reference::{reference_energies, ReferenceCache, References};

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::structures::{AdsorbateSpec, Structure, Tag, Vec3};

const DEFAULT_PARAMS: &str = include_str!("../../../../assets/lj_params.toml");
const KCAL_PER_MOL_IN_EV: f64 = 0.0433641;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("no Lennard-Jones parameters for element '{0}'")]
    MissingParams(String),
    #[error("invalid calculator parameters: {0}")]
    InvalidParams(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("calculator transport error ({endpoint}): {message}")]
    Transport { endpoint: String, message: String },
    #[error("calculator at {endpoint} timed out after {seconds} s")]
    Timeout { endpoint: String, seconds: f64 },
    #[error("malformed calculator response from {endpoint}: {message}; body: {excerpt}")]
    Malformed {
        endpoint: String,
        message: String,
        excerpt: String,
    },
    #[error("calculator returned {got} force vectors for {expected} atoms")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite energy or force")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyForces {
    pub energy: f64,
    pub forces: Vec<Vec3>,
}

impl EnergyForces {
    pub fn check(&self, n_atoms: usize) -> Result<(), CalcError> {
        if self.forces.len() != n_atoms {
            return Err(CalcError::LengthMismatch {
                expected: n_atoms,
                got: self.forces.len(),
            });
        }
        if !self.energy.is_finite() || !self.forces.iter().all(|f| f.iter().all(|c| c.is_finite())) {
            return Err(CalcError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalcParams {
    pub elements: BTreeMap<String, LjParams>,
    pub cutoff: f64,
    pub shift: bool,
}

#[derive(Deserialize)]
struct UffEntry {
    x: f64,
    #[serde(rename = "D")]
    d: f64,
}

impl Default for CalcParams {
    fn default() -> Self {
        CalcParams::from_uff_toml(DEFAULT_PARAMS).expect("shipped parameter table parses")
    }
}

impl CalcParams {
    /// Reads a table of UFF `x` (Å) and `D` (kcal/mol) per element.
    pub fn from_uff_toml(text: &str) -> Result<Self, CalcError> {
        let raw: BTreeMap<String, UffEntry> =
            toml::from_str(text).map_err(|e| CalcError::InvalidParams(e.to_string()))?;
        let elements = raw
            .into_iter()
            .map(|(k, e)| {
                (
                    k,
                    LjParams {
                        epsilon: e.d * KCAL_PER_MOL_IN_EV,
                        sigma: e.x / 2f64.powf(1.0 / 6.0),
                    },
                )
            })
            .collect();
        Ok(CalcParams {
            elements,
            cutoff: 8.0,
            shift: true,
        })
    }

    pub fn get(&self, symbol: &str) -> Result<LjParams, CalcError> {
        self.elements
            .get(symbol)
            .copied()
            .ok_or_else(|| CalcError::MissingParams(symbol.to_string()))
    }

    /// Lorentz–Berthelot mixing.
    pub fn pair(&self, a: &str, b: &str) -> Result<LjParams, CalcError> {
        let (p, q) = (self.get(a)?, self.get(b)?);
        Ok(LjParams {
            epsilon: (p.epsilon * q.epsilon).sqrt(),
            sigma: 0.5 * (p.sigma + q.sigma),
        })
    }

    /// Checks positivity and the cutoff bound for the elements of `s`.
    pub fn validate_for(&self, s: &Structure) -> Result<(), CalcError> {
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(CalcError::InvalidParams(format!(
                "cutoff {} must be positive",
                self.cutoff
            )));
        }
        for el in s.element_set() {
            let p = self.get(el)?;
            if !(p.epsilon > 0.0 && p.sigma > 0.0) {
                return Err(CalcError::InvalidParams(format!(
                    "{el}: epsilon and sigma must be positive"
                )));
            }
            if self.cutoff <= 2.0 * p.sigma {
                return Err(CalcError::InvalidParams(format!(
                    "cutoff {} Å must exceed 2σ = {:.3} Å for {el}",
                    self.cutoff,
                    2.0 * p.sigma
                )));
            }
        }
        Ok(())
    }
}

/// Anything that maps a structure to an energy and forces.
pub trait Calculator: Send + Sync {
    fn compute(&self, s: &Structure) -> Result<EnergyForces, CalcError>;

    /// Stable identity used to key reference-energy caches.
    fn key(&self) -> String;
}

fn lj_pair(p: &LjParams, r2: f64, shift: f64) -> (f64, f64) {
    let s2 = p.sigma * p.sigma / r2;
    let s6 = s2 * s2 * s2;
    let s12 = s6 * s6;
    let e = 4.0 * p.epsilon * (s12 - s6) - shift;
    // -dE/dr / r
    let f_over_r = 24.0 * p.epsilon * (2.0 * s12 - s6) / r2;
    (e, f_over_r)
}

/// Lattice translations that can bring any pair within `cutoff`.
fn image_translations(s: &Structure, cutoff: f64) -> Vec<Vec3> {
    let n = |i: usize| {
        if s.lattice.pbc[i] {
            (cutoff / s.lattice.perpendicular_width(i)).ceil() as i32 + 1
        } else {
            0
        }
    };
    let (na, nb, nc) = (n(0), n(1), n(2));
    let mut out = Vec::new();
    for i in -na..=na {
        for j in -nb..=nb {
            for k in -nc..=nc {
                out.push(s.lattice.to_cartesian(&Vec3::new(i as f64, j as f64, k as f64)));
            }
        }
    }
    out
}

/// Lennard-Jones energy and forces, summed over every periodic image within
/// the cutoff. `skip(i, j)` drops a pair entirely.
fn lj_with(s: &Structure, p: &CalcParams, skip: impl Fn(usize, usize) -> bool) -> Result<EnergyForces, CalcError> {
    let symbols = s.symbols();
    let mut table: BTreeMap<(&str, &str), (LjParams, f64)> = BTreeMap::new();
    for a in s.element_set() {
        for b in s.element_set() {
            let lj = p.pair(a, b)?;
            let shift = if p.shift {
                lj_pair(&lj, p.cutoff * p.cutoff, 0.0).0
            } else {
                0.0
            };
            table.insert((a, b), (lj, shift));
        }
    }
    let rc2 = p.cutoff * p.cutoff;
    let images = image_translations(s, p.cutoff);
    let n = s.len();
    let mut energy = 0.0;
    let mut forces = vec![Vec3::zeros(); n];
    for i in 0..n {
        for j in i..n {
            if i != j && skip(i, j) {
                continue;
            }
            let (lj, shift) = table[&(symbols[i], symbols[j])];
            let d0 = s.atoms[j].position - s.atoms[i].position;
            for t in &images {
                if i == j && t.norm_squared() == 0.0 {
                    continue;
                }
                let d = d0 + t;
                let r2 = d.norm_squared();
                if r2 >= rc2 {
                    continue;
                }
                let (e, f_over_r) = lj_pair(&lj, r2, shift);
                if i == j {
                    // self-image pairs appear twice (±t); forces cancel
                    energy += 0.5 * e;
                    continue;
                }
                energy += e;
                let f = d * f_over_r;
                forces[j] += f;
                forces[i] -= f;
            }
        }
    }
    Ok(EnergyForces { energy, forces })
}

/// Pure Lennard-Jones over all pairs.
pub fn lj_energy_forces(s: &Structure, p: &CalcParams) -> Result<EnergyForces, CalcError> {
    lj_with(s, p, |_, _| false)
}

/// Harmonic springs holding a molecular adsorbate at its reference shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetwork {
    pub k: f64,
    /// (i, j, rest length) over adsorbate-local indices.
    pub springs: Vec<(usize, usize, f64)>,
}

impl ElasticNetwork {
    pub const DEFAULT_K: f64 = 5.0;

    pub fn for_adsorbate(ads: &AdsorbateSpec, k: f64) -> Self {
        let mut springs = Vec::new();
        for i in 0..ads.len() {
            for j in (i + 1)..ads.len() {
                springs.push((i, j, (ads.positions[j] - ads.positions[i]).norm()));
            }
        }
        ElasticNetwork { k, springs }
    }

    fn add(&self, s: &Structure, members: &[usize], out: &mut EnergyForces) {
        for &(a, b, r0) in &self.springs {
            let (i, j) = (members[a], members[b]);
            let d = s.atoms[j].position - s.atoms[i].position;
            let r = d.norm();
            out.energy += 0.5 * self.k * (r - r0).powi(2);
            let f = d * (self.k * (r - r0) / r);
            out.forces[i] += f;
            out.forces[j] -= f;
        }
    }
}

/// The in-process calculator. Without an adsorbate it is plain
/// Lennard-Jones. With one, adsorbate atoms (tag 2) interact with each other
/// only through an elastic network and with the slab through Lennard-Jones.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinCalculator {
    pub params: CalcParams,
    pub network: Option<ElasticNetwork>,
}

impl BuiltinCalculator {
    pub fn new(params: CalcParams) -> Self {
        BuiltinCalculator { params, network: None }
    }

    pub fn with_adsorbate(mut self, ads: &AdsorbateSpec) -> Self {
        self.network = Some(ElasticNetwork::for_adsorbate(ads, ElasticNetwork::DEFAULT_K));
        self
    }
}

impl Calculator for BuiltinCalculator {
    fn compute(&self, s: &Structure) -> Result<EnergyForces, CalcError> {
        self.params.validate_for(s)?;
        let Some(net) = &self.network else {
            return lj_energy_forces(s, &self.params);
        };
        let members = s.indices_with_tag(Tag::Adsorbate);
        if members.is_empty() {
            // bare slab: the network has nothing to act on
            return lj_energy_forces(s, &self.params);
        }
        let n_net = net.springs.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(1);
        if members.len() != n_net {
            return Err(CalcError::Precondition(format!(
                "structure has {} adsorbate atoms, the elastic network expects {n_net}",
                members.len()
            )));
        }
        let tags = s.tags();
        let mut out = lj_with(s, &self.params, |i, j| {
            tags[i] == Tag::Adsorbate && tags[j] == Tag::Adsorbate
        })?;
        net.add(s, &members, &mut out);
        Ok(out)
    }

    fn key(&self) -> String {
        let json = serde_json::to_string(&(&self.params, &self.network)).expect("serialisable");
        format!("builtin:{}", crate::sha256_hex(json.as_bytes()))
    }
}

/// Largest deviation between analytic forces and central finite differences
/// of the energy, over up to 32 atoms drawn with `seed`.
pub fn numerical_force_check(s: &Structure, calc: &dyn Calculator, h: f64, seed: u64) -> Result<f64, CalcError> {
    if !(1e-5..=1e-3).contains(&h) {
        return Err(CalcError::Precondition(format!("step h = {h} outside [1e-5, 1e-3]")));
    }
    let analytic = calc.compute(s)?;
    let n = s.len();
    let atoms: Vec<usize> = if n <= 32 {
        (0..n).collect()
    } else {
        sample(&mut rng::stream(seed, 0), n, 32).into_vec()
    };
    let mut positions = s.positions();
    let mut worst: f64 = 0.0;
    for i in atoms {
        for k in 0..3 {
            let x0 = positions[i][k];
            positions[i][k] = x0 + h;
            let ep = calc.compute(&s.with_positions(&positions))?.energy;
            positions[i][k] = x0 - h;
            let em = calc.compute(&s.with_positions(&positions))?.energy;
            positions[i][k] = x0;
            let numeric = -(ep - em) / (2.0 * h);
            worst = worst.max((numeric - analytic.forces[i][k]).abs());
        }
    }
    Ok(worst)
}
