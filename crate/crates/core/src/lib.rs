#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dispersion;
pub mod eigen;
pub mod error;
pub mod identify;
pub mod label;
pub mod material;
pub mod modes;
pub mod overlap;
pub mod phase_matching;
pub mod profile;
pub mod sparse;
pub mod spdc;
