//! Non-autoregressive proxy (NAP) toolkit: train small predictor heads to
//! imitate scalar sequence-level attributes of autoregressive teachers, and
//! evaluate them on OOD detection, dataset filtering and deferral.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod naphead;
pub mod record;
pub mod softrank;
pub mod synthkit;
pub mod tasks;
pub mod uncertainty;

pub use error::{NapError, Result};
