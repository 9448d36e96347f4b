//! Non-neural core of a cascaded word detector: oriented-box geometry, the
//! grid codec and its training loss, post-processing, text-block handling,
//! synthetic scenes with oracle stages, and ICDAR-style evaluation.

pub mod blocks;
pub mod capacity;
pub mod evalbench;
pub mod geom;
pub mod gridcodec;
pub mod jsonfmt;
pub mod loss;
pub mod pipeline;
pub mod postproc;
pub mod synth;

pub use geom::{Aabb, OrientedRect, Point, Quad};
pub use gridcodec::{BoxParams, GridSpec, GridTarget, GridTensor};
pub use postproc::Detection;
