//! Serving classical anomaly detectors on inspection scans to thin clients.
//!
//! The crate is organized around four pieces:
//!
//! * [`npy`]: the `.npy` array codec used for every scan on disk and on the wire.
//! * [`inference`]: the detectors and the parameter machinery that lets a user tune them.
//! * [`registry`]: versioned models with staged validation, atomic promotion and rollback.
//! * [`gateway`]: the authenticated, audited HTTP API in front of all of it.
//!
//! [`datastore`] indexes scan datasets and [`config`] reads the server configuration.

pub mod config;
pub mod datastore;
pub mod gateway;
pub mod inference;
pub mod npy;
pub mod registry;

pub use npy::{decode_npy, encode_npy, parse_header, ArrayData, Dtype, NpyError, NpyHeader, ScanArray};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/npy.md")]
    mod npy {}
    #[doc = include_str!("../../../book/src/detectors.md")]
    mod detectors {}
    #[doc = include_str!("../../../book/src/registry.md")]
    mod registry {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/operations.md")]
    mod operations {}
}
