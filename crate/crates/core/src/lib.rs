//! Tracking of retro-reflective marker tools with a time-of-flight depth camera.
//!
//! The pipeline runs in three stages: markers are segmented from the
//! reflectivity image and lifted to 3-D with the depth image
//! ([`detection`]), rigid tools are defined from repeated observations
//! ([`registry`]), and every frame is matched against the loaded tools and
//! turned into poses with per-marker depth smoothing ([`tracking`]).
//! [`sensor`] renders synthetic frames with a depth-dependent noise model so
//! that each stage can be checked against ground truth, [`eval`] hosts the
//! experiment protocols and [`nav`] the downstream navigation geometry.

pub mod detection;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod format;
pub mod geometry;
pub mod io;
pub mod nav;
pub mod par;
pub mod registry;
pub mod sensor;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Pixel, Point3, RigidTransform};
