//! Zero-shot multi-object tracking on top of a promptable video segmenter.
//!
//! The engine consumes per-frame detections, thresholds them per sequence with
//! exact two-cluster K-Means, and manages track identities on top of any
//! segmenter that speaks the prompt / propagate / drop-memory protocol. A
//! deterministic synthetic world provides ground truth and an oracle
//! segmenter, and the [`metrics`] module scores results with HOTA, CLEAR and
//! identity metrics.
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled as doc-tests of this crate.

pub mod association;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod protocol;
pub mod synth;
pub mod threshold;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{BBox, BitMask, Detection, OcclusionScore};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/thresholds.md")]
    mod thresholds {}
    #[doc = include_str!("../../../book/src/association.md")]
    mod association {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
