//! Shared support for integration tests: brute-force reference
//! implementations of the graph analyses and a concrete interpreter for
//! the C subset.

#![allow(dead_code)] // each test binary uses a subset of this module

pub mod interp;
pub mod oracles;
