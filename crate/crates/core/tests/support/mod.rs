//! Shared fixtures and harness code for the integration tests.
#![allow(dead_code)]

pub mod corpus;
pub mod fixtures;
pub mod mock_rpc;
