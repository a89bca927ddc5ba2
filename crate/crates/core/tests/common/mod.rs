use simpair::encoder::Mapping;
use simpair::objective::terms::{check_terms, TermCheck, TermCheckConfig};

pub const FD_TOLERANCE: f64 = 1e-4;

/// Finite-difference reports for every term on the 6 x 6, d = 5 toy.
pub fn check_all_terms(seed: u64, mapping: Mapping) -> Vec<TermCheck> {
    check_terms(&TermCheckConfig { seed, mapping, ..Default::default() }).unwrap()
}
