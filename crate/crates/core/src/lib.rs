pub mod densop;
pub mod emitter;
pub mod fusion;
pub mod network;
pub mod analysis;
pub mod config;
pub mod calibrate;
pub mod experiment;
pub mod report;
pub mod cli;
