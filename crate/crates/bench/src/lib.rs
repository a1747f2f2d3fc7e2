//! Shared fixtures for the pixelfem benchmarks.

use pixelfem::phase::{synth_microstructure, MaterialTable, PhaseGrid, SynthSpec};

pub fn two_phase_table() -> MaterialTable {
    MaterialTable::two_phase(100.0, 0.2, 192.1, 0.2).expect("valid table")
}

/// Deterministic two-phase microstructure at the given resolution.
pub fn inclusion_grid(n: usize) -> PhaseGrid {
    synth_microstructure(
        &SynthSpec::CircularInclusions { count: 5, target_fraction: 0.2419, seed: 7 },
        n,
        n,
    )
    .expect("generation succeeds at benchmark sizes")
}
