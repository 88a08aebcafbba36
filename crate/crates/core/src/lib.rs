//! D-optimal experimental design on finite candidate sets, with safe removal
//! of candidates that cannot support any D-optimal exact design.
//!
//! The building blocks are, bottom up:
//!
//! * [`linalg`]: small dense symmetric matrices,
//! * [`design`]: candidate sets, designs, information matrices, the D-criterion,
//! * [`approx`]: optimal approximate designs with an equivalence-theorem certificate,
//! * [`exact`]: rounding, exchange heuristics and an enumeration oracle for exact designs,
//! * [`prune`]: the augmentation and exchange conditions for removing candidates,
//! * [`generators`]: reproducible benchmark instances,
//! * [`pipeline`]: the end-to-end procedure and its reports.

pub mod approx;
pub mod design;
pub mod error;
pub mod exact;
pub mod generators;
pub mod linalg;
pub mod pipeline;
pub mod prune;

pub use error::{Error, Result};
