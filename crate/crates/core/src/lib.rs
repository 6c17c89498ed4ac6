//! Adsorption-configuration search: catalyst slabs, adsorption sites,
//! adsorbate placement, relaxation under pluggable calculators, an LLM
//! planning loop and the metrics used to compare search strategies.

pub mod agent;
pub mod calculator;
pub mod elements;
pub mod eval;
pub mod pipeline;
pub mod placement;
pub mod relax;
pub mod rng;
pub mod sites;
pub mod structures;

pub use agent::{Orientation, Query, Solution};
pub use calculator::{BuiltinCalculator, CalcError, CalcParams, Calculator, EnergyForces};
pub use placement::{Configuration, PlacementParams, Strategy};
pub use relax::{FireParams, RelaxationResult, Status};
pub use sites::{Site, SiteKind};
pub use structures::{AdsorbateSpec, Atom, Lattice, Structure, Tag, Vec3};

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
