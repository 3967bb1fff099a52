//! Shared operations and the HTTP service behind the `twinflex` binary.

pub mod ops;
pub mod server;
