//! Confidence-weighted majority voting (CWMV) and a noisy cognitive model
//! of how real groups deviate from it.

pub mod aggregation;
pub mod analysis;
pub mod fit;
pub mod ideal;
pub mod io;
pub mod pipeline;
pub mod scenario;
mod serde_util;
pub mod simulate;
pub mod stats;
