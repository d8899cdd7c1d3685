// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
mod binio;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod index;
mod linalg;
pub mod matcher;
pub mod minhash;
pub mod pipeline;
pub mod proposed;
pub mod refdb;
pub mod resample;
pub mod spectral;
