//! HTTP service and command-line front end for eventscope analytics.

pub mod cli;
pub mod engine;
pub mod http;
