//! Simulation and optimization toolkit for two-tier heterogeneous cellular
//! networks with decoupled downlink/uplink association.
//!
//! * [`geometry`] – point processes, weighted nearest-site queries, coverage rasters
//! * [`channel`] – path loss, fading, SINR, Shannon rate, alpha-fair utility
//! * [`deployment`] – network snapshots and per-link rate matrices
//! * [`association`] – decoupled and received-power association rules
//! * [`ssa`] – optimal allocation under a fixed single-station association
//! * [`msa`] – joint association and allocation by dual decomposition
//! * [`metrics`] – performance indicators
//! * [`experiment`] – configuration, scenarios and file output

pub mod association;
pub mod channel;
pub mod deployment;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod msa;
pub mod ssa;
