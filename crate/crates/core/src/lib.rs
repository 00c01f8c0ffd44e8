//! Pedestrian-vehicle interaction analysis from trajectory data.

pub mod geometry;
pub mod io;
pub mod pairing;
pub mod scene;
pub mod trajectory;
pub mod conflict;
pub mod motion;
pub mod catalog;
pub mod config;
pub mod stats;
pub mod testkit;
pub mod pipeline;
pub mod export;
pub mod plotdata;
