//! Holds the cross-crate acceptance suite in `tests/acceptance.rs`.
//!
//! It lives in its own package so that it runs after the unit and
//! integration tests of the other crates.
