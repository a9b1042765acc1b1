pub mod automorphic;
pub mod building;
pub mod cli;
pub mod exact_values;
pub mod galois;
pub mod llc_match;
pub mod local_fields;
pub mod selftest;
pub mod whittaker_pairs;
