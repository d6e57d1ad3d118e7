pub mod commands;
pub mod config;
pub mod failure;
pub mod frame;
pub mod output;
pub mod service;

pub use failure::Failure;
