//! File formats, run store, reports, CLI support and HTTP service around
//! `forumscope-core`.

pub mod error;
pub mod factors;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod server;
pub mod store;
pub mod synth;

pub use error::{Error, Result, Stage};
