//! Communication-aware placement of SDN control-plane application slices.
//!
//! The crate covers the whole pipeline: a communication graph of application
//! slices and event paths ([`commgraph`]), constraint checking and an exact
//! small-instance solver ([`placement`]), a multilevel multi-constraint graph
//! partitioner used as the scalable heuristic ([`partitioner`]), a fat-tree
//! substrate ([`topology`]), an analytic reconvergence model used to choose the
//! partition count ([`convergence`]), and a discrete-event simulator of
//! controller servers ([`simengine`]).

pub mod commgraph;
pub mod convergence;
pub mod partitioner;
pub mod placement;
pub mod simengine;
pub mod topology;
