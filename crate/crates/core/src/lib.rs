//! Wrist kinematics with a moving rotation center.
//!
//! A five-frame modified D-H chain models wrist radio-ulnar deviation and
//! flexion-extension plus a prismatic term `d2` that tracks how far the
//! effective rotation center slides along the capitate axis. The crate
//! provides forward/inverse kinematics, a rational quadric regression
//! surface `d2(β3, β4)` fitted by a real-coded genetic algorithm, fit
//! statistics, and tooling for tracking-session files.
//!
//! Kinematics and regression are generic over [`Scalar`] (`f32`/`f64`);
//! the `*64` aliases below are what the data pipeline uses.

// NaN must fail range checks, so `!(x <= hi)` is the intended form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod homogeneous;
pub mod regression;
pub mod scalar;
pub mod sga;
pub mod wrist_model;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Pose64 = homogeneous::Pose<f64>;
pub type Pose32 = homogeneous::Pose<f32>;
pub type DhRow64 = homogeneous::DhRow<f64>;
pub type JointState64 = wrist_model::JointState<f64>;
pub type SubjectParams64 = wrist_model::SubjectParams<f64>;
pub type Surface64 = regression::RationalQuadricSurface<f64>;
pub type Surface32 = regression::RationalQuadricSurface<f32>;
pub type DataPoint64 = regression::DataPoint<f64>;
pub type FitReport64 = regression::FitReport<f64>;
pub type GaConfig64 = sga::GaConfig<f64>;
