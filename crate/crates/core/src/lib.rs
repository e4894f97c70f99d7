// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allan;
pub mod cli;
pub mod geometry;
pub mod handeye;
pub mod imucal;
pub mod ingest;
pub mod photometric;
pub mod synth;
pub mod timesync;
pub mod trajeval;
