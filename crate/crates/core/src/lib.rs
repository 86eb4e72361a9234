//! Grounded spatial markup, scene graphs, visual-aid label generation,
//! 3D trace lifting and benchmark metrics.

pub mod camera;
pub mod cli;
pub mod coordsys;
pub mod datastore;
pub mod eval;
pub mod labelgen;
pub mod lift;
pub mod markup;
pub mod mask;
pub mod scenegraph;
pub mod templates;
