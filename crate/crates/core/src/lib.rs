//! Core logic for a mirrored whiteboard presentation relay: wire codec,
//! tick router, session geometry, board model, scripted behavior and gaze
//! analytics. No I/O beyond reading and writing logs.

pub mod behavior;
pub mod board;
pub mod gaze;
pub mod geom;
pub mod relay;
pub mod session;
pub mod wire;

pub use geom::Vec3;
