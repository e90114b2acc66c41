//! Linear recovery of line-based partial velocity from event streams.
//!
//! Events generated by a straight line under constant linear and known
//! angular velocity lie on a manifold fixed by the line frame and a 2-vector
//! of partial velocity. Five events determine it linearly; several lines
//! fuse into a full velocity direction.

pub mod averaging;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod manifold;
pub mod refine;
pub mod robust;
pub mod simulator;
pub mod so3;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{
    AngularRate, BearingObservation, Branch, CameraIntrinsics, Event, LineFrame, PartialVelocity, Polarity,
    RotationModel, Vec3,
};
