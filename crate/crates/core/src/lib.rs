//! Camera pose estimation written against a data-oblivious arithmetic
//! interface, so the same solver code runs on host floats, on recorded
//! operation tapes, and (via tapes) inside garbled circuits.

pub mod obliv;
pub mod geometry;
pub mod linalg;
pub mod solver;
