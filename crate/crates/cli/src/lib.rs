//! Batch runner for openmaps simulations: configs and schedules, pulse-table
//! verification and closed-form tables.

pub mod analytics;
pub mod commands;
pub mod config;
pub mod dump;
pub mod run;
pub mod verify;
