//! Reflection-model multipath parametrization for wideband MIMO channels.
//!
//! A multipath component's propagation distance between displaced TX and RX
//! elements is that of a line-of-sight path to a mirror image of the TX. The
//! crate fits those images from ray-traced routes or from PWA parameters
//! observed at a handful of displaced pairs, and evaluates the resulting MIMO
//! channel and its achievable rate.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod channel;
pub mod dp_fit;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod io;
pub mod pathmodel;
pub mod rt_fit;
pub mod tracer;

pub use error::{Error, Result};
pub use geom::{Mat3, Sign, Vec3};
pub use pathmodel::{PwaPath, ReferencePair, RmImage, RmPath, SPEED_OF_LIGHT};
