//! Wildfire-risk-constrained configuration of networked microgrids on
//! unbalanced three-phase distribution feeders.
//!
//! The pipeline is: parse a [`feeder::NetworkModel`], optionally collapse
//! secondary circuits with [`feeder::reduce_feeder`], annotate load blocks
//! with risk and vulnerability ([`hazard`], [`blocks`]), then pose an
//! [`omcp::OmcpInstance`] and hand it to [`solver::solve`].

pub mod analysis;
pub mod blocks;
pub mod feeder;
pub mod fixtures;
pub mod hazard;
pub mod lindistflow;
pub mod lp;
pub mod omcp;
pub mod solver;

pub use blocks::{identify_blocks, identify_blocks_with, BlockGraph, Island, LoadBlock};
pub use feeder::{parse_network, reduce_feeder, NetworkModel};
pub use omcp::{Controllability, Objective, OmcpInstance, RiskPolicy};
pub use omcp::Configuration;
pub use solver::{enumerate_all, solve, SolveReport};
