//! Algorithmic core for tensor-based event extraction on forum activity.
//!
//! The crate is `no_std` (with `alloc`): everything here is a pure function of
//! in-memory inputs. Parsing files, persisting runs and serving HTTP live in
//! the `forumscope` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod profile;
pub mod tensor;
pub mod text;
pub mod topics;

pub use error::{Error, Result};
