//! Shared inputs for the criterion benches.

use adsorb_core::placement::{self, PlacementParams};
use adsorb_core::structures::{adsorbate_from_registry, build_slab, BulkSpec, SlabMetadata, Structure};
use adsorb_core::Configuration;

/// fcc(111) Pt slab, 3 layers.
pub fn pt111(repeat: usize) -> Structure {
    let bulk = BulkSpec::Fcc {
        element: "Pt".into(),
        a: 3.924,
    };
    build_slab(&bulk, &SlabMetadata::new("Pt", [1, 1, 1], 3), (repeat, repeat)).expect("valid slab")
}

/// OH on the first heuristic site of a 2×2 Pt(111) slab.
pub fn oh_on_pt() -> Configuration {
    let ads = adsorbate_from_registry("OH").expect("registry adsorbate");
    let mut all =
        placement::heuristic_configurations(&pt111(2), &ads, 0, 0, &PlacementParams::default()).expect("placement");
    all.swap_remove(0)
}
