//! Graph-based vulnerability detection for C functions.
//!
//! The crate implements a complete detection pipeline:
//!
//! 1. [`corpus`] — synthetic buffer-overflow corpus generation, JSONL
//!    dataset I/O, stratified splitting and rebalancing.
//! 2. [`frontend`] — a lexer and recursive-descent parser for a small C
//!    subset, producing typed ASTs.
//! 3. [`cpg`] — code property graphs: AST + control flow + program
//!    dependence (dominators, control dependence, reaching definitions),
//!    with TSV import/export, DOT rendering and a JSON interchange format.
//! 4. [`vectorize`] — skip-gram token embeddings trained from scratch and
//!    per-node feature vectors; node-budgeted batch packing.
//! 5. [`ggnn`] — a gated graph neural network over typed edges with a
//!    hand-written backward pass, Adam, and binary checkpoints.
//! 6. [`eval`] — precision/recall/F1/average-precision metrics, a
//!    bag-of-words logistic-regression baseline, a per-category harness
//!    and an SVG precision-recall curve writer.
//!
//! [`pipeline`] wires the stages together end to end; [`config`] holds the
//! flat `key = value` configuration surface shared by the library, the
//! examples and the `vulngraph` binary.

pub mod config;
pub mod corpus;
pub mod cpg;
pub mod eval;
pub mod frontend;
pub mod ggnn;
pub mod pipeline;
pub mod vectorize;
