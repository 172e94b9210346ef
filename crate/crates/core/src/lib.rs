//! Closed-loop simulation of a camera-guided, fuzzy-controlled
//! differential-drive vehicle following a painted line.

pub mod camera;
pub mod cli;
pub mod fuzzy;
pub mod geom2d;
pub mod scenario;
pub mod sensors;
pub mod vehicle;
